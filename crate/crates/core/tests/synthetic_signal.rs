//! Planted signal in the generator shows up, and only where planted.

use ledgerscope::ablation::{evaluate_model, fit};
use ledgerscope::features::{FeaturizedSplit, Featurizer, Modality};
use ledgerscope::fusion::FusionConfig;
use ledgerscope::ingest::split_corpus;
use ledgerscope::synth::{generate_corpus, ModalitySignal, SynthConfig};

fn featurize(signal: ModalitySignal, seed: u64) -> FeaturizedSplit {
    let corpus = generate_corpus(&SynthConfig { modality_signal: signal, seed, ..SynthConfig::default() }).unwrap();
    let split = split_corpus(&corpus, 400, 0.2, seed).unwrap();
    FeaturizedSplit::new(&Featurizer::baseline(), &split).unwrap()
}

fn test_auc(split: &FeaturizedSplit, active: &[Modality], seed: u64) -> (f64, f64) {
    let cfg = FusionConfig { seed, ..FusionConfig::default() }.with_modalities(active);
    let (model, _) = fit(split, &cfg).unwrap();
    let (report, _) = evaluate_model(&model, &split.test).unwrap();
    (report.auc, report.f1)
}

#[test]
fn no_signal_means_chance_ranking() {
    for seed in 0..5 {
        let split = featurize(ModalitySignal::NONE, seed);
        let (auc, _) = test_auc(&split, &Modality::ALL, seed);
        assert!((0.4..=0.6).contains(&auc), "seed {seed}: {auc}");
    }
}

#[test]
fn comment_signal_stays_in_comments() {
    let split = featurize(ModalitySignal::new(0.0, 1.0, 0.0), 21);
    let (comments, comments_f1) = test_auc(&split, &[Modality::Comments], 21);
    let (images, _) = test_auc(&split, &[Modality::Images], 21);
    let (_, multi_f1) = test_auc(&split, &Modality::ALL, 21);
    assert!(comments > 0.95, "{comments}");
    assert!(images < 0.65, "{images}");
    assert!((comments_f1 - multi_f1).abs() < 0.1, "{comments_f1} vs {multi_f1}");
}

#[test]
fn comment_auc_rises_with_strength() {
    let aucs: Vec<f64> = [0.0, 0.5, 1.0]
        .into_iter()
        .map(|s| test_auc(&featurize(ModalitySignal::new(0.0, s, 0.0), 5), &[Modality::Comments], 5).0)
        .collect();
    assert!(aucs.windows(2).all(|w| w[0] <= w[1]), "{aucs:?}");
}
