//! Detecting social-media posts that advertise tax-evading trade.
//!
//! The crate covers the whole offline pipeline: loading and cleaning an
//! annotated corpus, turning each post into hashtag, comment and image
//! vectors, training a late-fusion logistic classifier, evaluating and
//! ablating it, and ranking unlabeled posts for human review.

pub mod ablation;
pub mod domain;
pub mod embedding;
pub mod features;
pub mod fusion;
pub mod ingest;
pub mod metrics;
pub mod record;
pub mod rng;
pub mod synth;
pub mod text;
pub mod triage;
pub mod vision;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/records.md")]
    mod records {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/triage.md")]
    mod triage {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
}
