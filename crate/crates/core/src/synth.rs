//! Seeded synthetic corpora with class signals planted per modality.
//!
//! Each post is positive with probability `positive_rate`. Independently
//! for every modality, a post carries its class's marker with probability
//! equal to that modality's strength: seller vocabulary and contact
//! channels for positives, a disjoint benign vocabulary for negatives, and
//! a coloured square in a class-specific corner of the image. Everything
//! else is drawn from a background shared by both classes, so a modality
//! at strength 0 carries no information about the label.

use std::collections::BTreeSet;
use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AnnotatedPost, ImageType, LabelSet, MediaContent, PostRecord, PosterProfile, Source};
use crate::ingest::CorpusManifest;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySignal {
    pub hashtags: f64,
    pub comments: f64,
    pub images: f64,
}

impl ModalitySignal {
    pub const NONE: Self = Self { hashtags: 0.0, comments: 0.0, images: 0.0 };

    pub fn new(hashtags: f64, comments: f64, images: f64) -> Self {
        Self { hashtags, comments, images }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSizes {
    pub seller: usize,
    pub benign: usize,
    pub background: usize,
}

impl Default for VocabSizes {
    fn default() -> Self {
        Self { seller: 8, benign: 8, background: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_posts: usize,
    pub positive_rate: f64,
    pub modality_signal: ModalitySignal,
    pub vocab: VocabSizes,
    pub video_fraction: f64,
    /// Side length of generated square images.
    pub image_size: u32,
    /// Amplitude of uniform per-pixel noise, in 8-bit levels.
    pub image_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_posts: 2081,
            positive_rate: 464.0 / 2081.0,
            modality_signal: ModalitySignal::new(0.4, 0.5, 0.5),
            vocab: VocabSizes::default(),
            video_fraction: 0.10,
            image_size: 64,
            image_noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthConfigError {
    #[error("n_posts must be positive")]
    NoPosts,
    #[error("{field} = {value} is out of range")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("{0} vocabulary must not be empty")]
    EmptyVocab(&'static str),
    #[error("image_size {0} is below the minimum of 16")]
    ImageSize(u32),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthConfigError> {
        if self.n_posts == 0 {
            return Err(SynthConfigError::NoPosts);
        }
        let unit = [
            ("positive_rate", self.positive_rate),
            ("video_fraction", self.video_fraction),
            ("modality_signal.hashtags", self.modality_signal.hashtags),
            ("modality_signal.comments", self.modality_signal.comments),
            ("modality_signal.images", self.modality_signal.images),
        ];
        for (field, value) in unit {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthConfigError::OutOfRange { field, value });
            }
        }
        for (name, n) in [("seller", self.vocab.seller), ("benign", self.vocab.benign), ("background", self.vocab.background)] {
            if n == 0 {
                return Err(SynthConfigError::EmptyVocab(name));
            }
        }
        if !(0.0..=255.0).contains(&self.image_noise) {
            return Err(SynthConfigError::OutOfRange { field: "image_noise", value: self.image_noise });
        }
        if self.image_size < 16 {
            return Err(SynthConfigError::ImageSize(self.image_size));
        }
        Ok(())
    }
}

const ONSETS: [&str; 16] = ["b", "k", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "ch"];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CHANNELS: [&str; 5] = ["wechat", "whatsapp", "line", "telegram", "kakaotalk"];

/// `n` distinct pseudo-words per vocabulary, no word shared between them.
struct Vocabulary {
    seller: Vec<String>,
    benign: Vec<String>,
    background: Vec<String>,
}

impl Vocabulary {
    fn build(sizes: VocabSizes, rng: &mut SeededRng) -> Self {
        let mut seen: BTreeSet<String> = CHANNELS.iter().map(|c| c.to_string()).collect();
        let mut draw = |n: usize| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let syllables = 2 + rng.below(2) as usize;
                let word: String = (0..syllables)
                    .map(|_| format!("{}{}", rng.choose(&ONSETS), rng.choose(&NUCLEI)))
                    .collect();
                if seen.insert(word.clone()) {
                    out.push(word);
                }
            }
            out
        };
        Self { seller: draw(sizes.seller), benign: draw(sizes.benign), background: draw(sizes.background) }
    }
}

fn pick<'a>(words: &'a [String], n: usize, rng: &mut SeededRng) -> Vec<&'a str> {
    (0..n).map(|_| rng.choose(words).as_str()).collect()
}

fn sentence(words: Vec<&str>) -> String {
    words.join(" ")
}

/// Corner where each class plants its square.
#[derive(Clone, Copy)]
enum Mark {
    Seller,
    Benign,
}

/// A fixed scene (vertical shading and a horizontal band) in a random
/// base colour with optional pixel noise, plus the optional class square.
/// Per-plane standardization removes the base colour, so unmarked images
/// land close together in feature space and the square stands out.
fn draw_image(size: u32, noise: f64, mark: Option<(Mark, f64)>, rng: &mut SeededRng) -> RgbImage {
    let base = [rng.range_inclusive(60, 170), rng.range_inclusive(60, 170), rng.range_inclusive(60, 170)];
    let band = (size * 5 / 8)..(size * 3 / 4);
    let mut img = RgbImage::new(size, size);
    let s = size as f64;
    for (_, y, px) in img.enumerate_pixels_mut() {
        let shade = 50.0 * (y as f64 / s - 0.5) + if band.contains(&y) { -40.0 } else { 0.0 };
        let mut c = [0u8; 3];
        for (ch, b) in c.iter_mut().zip(base) {
            let v = b as f64 + shade + noise * rng.uniform(-1.0, 1.0);
            *ch = v.round().clamp(0.0, 255.0) as u8;
        }
        *px = Rgb(c);
    }
    if let Some((mark, strength)) = mark {
        let side = size / 4;
        let (x0, y0, tint) = match mark {
            Mark::Seller => (size / 8, size / 8, [1.0, -0.6, -0.6]),
            Mark::Benign => (size - size / 8 - side, size / 8, [-0.6, -0.6, 1.0]),
        };
        let amp = 160.0 * strength;
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                let px = img.get_pixel_mut(x, y);
                for (ch, t) in px.0.iter_mut().zip(tint) {
                    *ch = (*ch as f64 + amp * t).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    img
}

fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("PNG encoding to memory");
    buf.into_inner()
}

/// Relative path under which a synthetic post's image is written.
pub fn image_rel_path(post_id: &str) -> String {
    format!("images/{post_id}.png")
}

/// Generate the corpus. Images are held in memory as PNG bytes, with a
/// relative path already assigned; see [`write_images`].
pub fn generate_corpus(cfg: &SynthConfig) -> Result<CorpusManifest, SynthConfigError> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let vocab = Vocabulary::build(cfg.vocab, &mut rng);
    let sig = cfg.modality_signal;
    let width = cfg.n_posts.to_string().len();
    let mut records = Vec::with_capacity(cfg.n_posts);

    for i in 0..cfg.n_posts {
        let post_id = format!("syn{i:0width$}");
        let positive = rng.bernoulli(cfg.positive_rate);
        let class_words = if positive { &vocab.seller } else { &vocab.benign };

        let mut hashtags: Vec<String> =
            pick(&vocab.background, 1 + rng.below(3) as usize, &mut rng).into_iter().map(str::to_string).collect();
        if rng.bernoulli(sig.hashtags) {
            let k = 3;
            for w in pick(class_words, k, &mut rng) {
                let at = rng.below(hashtags.len() as u64 + 1) as usize;
                hashtags.insert(at, w.to_string());
            }
        }
        let mut seen = BTreeSet::new();
        hashtags.retain(|t| seen.insert(t.clone()));

        let n_comments = 1 + rng.below(2) as usize;
        let mut comments: Vec<String> = (0..n_comments)
            .map(|_| {
                let n = 3 + rng.below(6) as usize;
                sentence(pick(&vocab.background, n, &mut rng))
            })
            .collect();
        let mut channels = Vec::new();
        if rng.bernoulli(sig.comments) {
            let n = 5 + rng.below(3) as usize;
            let mut words = pick(class_words, n, &mut rng);
            if positive {
                let channel = *rng.choose(&CHANNELS);
                channels.push(channel.to_string());
                words.push(channel);
            }
            let target = rng.below(comments.len() as u64) as usize;
            let merged = format!("{} {}", comments[target], sentence(words));
            comments[target] = merged;
        }

        let media = if rng.bernoulli(cfg.video_fraction) {
            MediaContent::VideoPlaceholder { seed: rng.next_u64() }
        } else {
            let mark = rng
                .bernoulli(sig.images)
                .then_some((if positive { Mark::Seller } else { Mark::Benign }, sig.images));
            let img = draw_image(cfg.image_size, cfg.image_noise, mark, &mut rng);
            MediaContent::Image { path: Some(image_rel_path(&post_id)), bytes: Some(encode_png(&img)) }
        };

        let poster = PosterProfile {
            follower_count: rng.below(50_000),
            following_count: rng.below(2_000),
            post_count: rng.below(3_000),
            bio: sentence(pick(&vocab.background, 4, &mut rng)),
        };
        let post = PostRecord {
            post_id,
            username: format!("user{}", rng.below(100_000)),
            timestamp: 1_569_110_400 + rng.below(5 * 86_400) as i64,
            like_count: rng.below(500),
            comments,
            hashtags,
            media,
            poster: Some(poster),
        };
        let labels = LabelSet {
            available: true,
            relevant: true,
            selling_intention: positive || rng.bernoulli(0.3),
            source: if positive { Source::Daigou } else { *rng.choose(&[Source::Individual, Source::Brand, Source::MakeupArtist]) },
            hidden_economy: positive,
            image_type: *rng.choose(&ImageType::ALL),
            language: "en".to_string(),
            has_other_contact: !channels.is_empty(),
            contact_channels: channels,
        };
        records.push(AnnotatedPost { post, labels });
    }
    Ok(CorpusManifest::new(records, "synthetic", cfg.seed))
}

/// Write every in-memory image under `root` at its relative path.
pub fn write_images(manifest: &CorpusManifest, root: &Path) -> std::io::Result<usize> {
    let mut written = 0;
    for r in &manifest.records {
        if let MediaContent::Image { path: Some(rel), bytes: Some(bytes) } = &r.post.media {
            let dest = root.join(rel);
            if let Some(dir) = dest.parent() {
                fs::create_dir_all(dir)?;
            }
            fs::write(dest, bytes)?;
            written += 1;
        }
    }
    Ok(written)
}
