//! Text branch: tokenization and fixed-width 768-d text vectors.
//!
//! The baseline embedder is signed feature hashing over unigrams and
//! adjacent bigrams. Vectors produced elsewhere (a transformer encoder, say)
//! can be plugged in through an embedding sidecar instead.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

use crate::embedding::{EmbeddingError, EmbeddingTable};

pub const TEXT_DIM: usize = 768;
pub const MAX_SEQ_LEN: usize = 64;

// Separates the halves of a bigram; never produced by the tokenizer.
const BIGRAM_JOINER: &str = "\u{1f}";
// Offset basis for the sign hash, distinct from the FNV default.
const SIGN_KEY: u64 = 0x6c62_272e_07bb_0142;

/// Lowercased, NFC-normalized tokens, at most [`MAX_SEQ_LEN`] long.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    /// Wraps already-clean tokens, truncating to [`MAX_SEQ_LEN`].
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { tokens: tokens.into_iter().take(MAX_SEQ_LEN).map(Into::into).collect() }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Han ideographs, kana, Hangul syllables and their compatibility blocks.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x2E80..=0x2FDF
        | 0x3040..=0x30FF
        | 0x3100..=0x312F
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

/// Split on whitespace and punctuation (Unicode word boundaries), emit each
/// CJK character as its own token, lowercase, NFC, truncate to 64.
pub fn tokenize(text: &str) -> TokenSequence {
    let normalized: String = text.nfc().collect();
    let mut tokens = Vec::new();
    'words: for word in normalized.unicode_words() {
        let mut run = String::new();
        for c in word.chars() {
            if is_cjk(c) {
                if !run.is_empty() {
                    tokens.push(std::mem::take(&mut run));
                }
                tokens.push(c.to_string());
            } else {
                run.push(c);
            }
            if tokens.len() >= MAX_SEQ_LEN {
                break 'words;
            }
        }
        if !run.is_empty() {
            tokens.push(run);
        }
        if tokens.len() >= MAX_SEQ_LEN {
            break;
        }
    }
    TokenSequence::from_tokens(tokens.into_iter().map(|t| t.to_lowercase().nfc().collect::<String>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextSource {
    HashedBaseline,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextVector {
    pub values: Vec<f64>,
    pub source: TextSource,
}

impl TextVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn fnv(bytes: &[u8], key: Option<u64>) -> u64 {
    let mut h = match key {
        Some(k) => FnvHasher::with_key(k),
        None => FnvHasher::default(),
    };
    h.write(bytes);
    h.finish()
}

/// Bucket index and sign of one n-gram.
pub fn hash_ngram(gram: &str) -> (usize, f64) {
    let index = (fnv(gram.as_bytes(), None) % TEXT_DIM as u64) as usize;
    let sign = if fnv(gram.as_bytes(), Some(SIGN_KEY)) >> 63 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

/// Unigrams followed by adjacent bigrams.
pub fn ngrams(tokens: &TokenSequence) -> Vec<String> {
    let t = tokens.tokens();
    let mut grams: Vec<String> = t.to_vec();
    grams.extend(t.windows(2).map(|w| format!("{}{BIGRAM_JOINER}{}", w[0], w[1])));
    grams
}

/// Signed feature hashing into 768 buckets, L2-normalized unless all-zero.
pub fn embed_hashed(tokens: &TokenSequence) -> TextVector {
    let mut values = vec![0.0; TEXT_DIM];
    for gram in ngrams(tokens) {
        let (i, s) = hash_ngram(&gram);
        values[i] += s;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    TextVector { values, source: TextSource::HashedBaseline }
}

/// Tokenize several strings as one sequence (in order, truncated to 64).
pub fn tokenize_all<S: AsRef<str>>(texts: &[S]) -> TokenSequence {
    let joined = texts.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n");
    tokenize(&joined)
}

pub fn text_vector_from_table(table: &EmbeddingTable, post_id: &str) -> Result<TextVector, EmbeddingError> {
    let row = table.get(post_id, TEXT_DIM)?;
    Ok(TextVector { values: row.to_vec(), source: TextSource::Precomputed })
}

/// One-shot lookup in a 768-d sidecar file.
pub fn load_text_embedding(path: &Path, post_id: &str) -> Result<TextVector, EmbeddingError> {
    text_vector_from_table(&EmbeddingTable::load(path)?, post_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn splits_on_space_and_punctuation() {
        assert_eq!(tokenize("Brand NEW lipstick!!").tokens(), ["brand", "new", "lipstick"]);
        assert_eq!(tokenize("DM/WhatsApp: 0412-555").tokens(), ["dm", "whatsapp", "0412", "555"]);
        assert!(tokenize("  !!  ").is_empty());
    }

    /// Reference rule written from the Unicode block table directly.
    fn cjk_oracle(text: &str) -> Vec<String> {
        let blocks: [(u32, u32); 3] = [(0x4E00, 0x9FFF), (0x3400, 0x4DBF), (0x3040, 0x30FF)];
        text.chars()
            .filter(|c| blocks.iter().any(|&(lo, hi)| (lo..=hi).contains(&(*c as u32))))
            .map(|c| c.to_string())
            .collect()
    }

    #[test]
    fn cjk_one_token_per_character() {
        let expected = cjk_oracle("口红代购");
        assert_eq!(expected, ["口", "红", "代", "购"]);
        assert_eq!(tokenize("口红代购").tokens(), expected.as_slice());
        assert_eq!(tokenize("正品lipstick口红").tokens(), ["正", "品", "lipstick", "口", "红"]);
    }

    #[test]
    fn thai_and_accents_survive() {
        let t = tokenize("ลิปสติก Café");
        let (last, thai) = t.tokens().split_last().unwrap();
        assert_eq!(last, "café");
        assert_eq!(thai.concat(), "ลิปสติก");
        // decomposed e + combining acute normalizes to the composed form
        assert_eq!(tokenize("Cafe\u{301}").tokens(), ["café"]);
    }

    #[test]
    fn truncates_at_64() {
        let text = (0..100).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let t = tokenize(&text);
        assert_eq!(t.len(), 64);
        assert_eq!(t.tokens()[63], "w63");
        assert_eq!(tokenize(&"字".repeat(100)).len(), 64);
    }

    #[test]
    fn empty_sequence_zero_vector() {
        let v = embed_hashed(&TokenSequence::default());
        assert_eq!(v.values.len(), TEXT_DIM);
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn nonempty_unit_norm() {
        for text in ["a", "dm for price", "口红代购 cheap cheap cheap"] {
            let v = embed_hashed(&tokenize(text));
            assert!((v.norm() - 1.0).abs() < 1e-9, "{text}");
        }
    }

    /// Accumulate from an explicit n-gram count table.
    fn hashing_oracle(tokens: &[&str]) -> Vec<f64> {
        let mut counts: BTreeMap<String, i32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t.to_string()).or_default() += 1;
        }
        for w in tokens.windows(2) {
            *counts.entry(format!("{}\u{1f}{}", w[0], w[1])).or_default() += 1;
        }
        let mut v = vec![0.0; TEXT_DIM];
        for (g, c) in counts {
            let (i, s) = hash_ngram(&g);
            v[i] += s * c as f64;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }

    #[test]
    fn bigram_order_matters() {
        let ab = embed_hashed(&seq(&["a", "b"]));
        let ba = embed_hashed(&seq(&["b", "a"]));
        assert_eq!(ab.values, hashing_oracle(&["a", "b"]));
        assert_eq!(ba.values, hashing_oracle(&["b", "a"]));
        assert_ne!(ab.values, ba.values);
    }

    #[test]
    fn disjoint_sets_nearly_orthogonal() {
        let mut rng = SeededRng::new(11);
        let mut total = 0.0;
        for _ in 0..1000 {
            let mut ids: Vec<u64> = (0..10_000).collect();
            rng.shuffle(&mut ids);
            let a: Vec<String> = ids[..10].iter().map(|i| format!("t{i}")).collect();
            let b: Vec<String> = ids[10..20].iter().map(|i| format!("t{i}")).collect();
            let va = embed_hashed(&TokenSequence::from_tokens(a));
            let vb = embed_hashed(&TokenSequence::from_tokens(b));
            total += va.values.iter().zip(&vb.values).map(|(x, y)| x * y).sum::<f64>().abs();
        }
        assert!(total / 1000.0 < 0.15, "mean |cos| = {}", total / 1000.0);
    }

    #[test]
    fn sidecar_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let mut t = EmbeddingTable::new(TEXT_DIM);
        t.insert("p1", vec![0.25; TEXT_DIM]);
        t.insert("short", vec![0.0; 512]);
        t.save(&path).unwrap();
        let v = load_text_embedding(&path, "p1").unwrap();
        assert_eq!((v.values.len(), v.source), (TEXT_DIM, TextSource::Precomputed));
        assert!(matches!(
            load_text_embedding(&path, "short"),
            Err(EmbeddingError::Dimension { found: 512, .. })
        ));
        assert!(matches!(load_text_embedding(&path, "nope"), Err(EmbeddingError::MissingEmbedding(_))));
    }

    proptest! {
        #[test]
        fn tokenize_deterministic(s in "\\PC{0,80}") {
            prop_assert_eq!(tokenize(&s), tokenize(&s));
            prop_assert!(tokenize(&s).len() <= MAX_SEQ_LEN);
        }

        #[test]
        fn embedding_is_function_of_ngram_counts(words in proptest::collection::vec("[a-e]{1,2}", 0..20)) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let got = embed_hashed(&seq(&refs)).values;
            let want = hashing_oracle(&refs);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-12);
            }
        }
    }
}
