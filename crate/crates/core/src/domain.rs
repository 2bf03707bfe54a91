//! Post records, the nine-property label schema, and label-derived predicates.
//!
//! Labels travel on the wire as the short option codes annotators use
//! (`Y`/`N`, `I`/`S`/`B`/`M`/`D`/`P`, `B`/`P`/`P+B`/`A`/`S`); in memory they are
//! descriptive enums.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Width of a precomputed image embedding.
pub const IMAGE_EMBEDDING_DIM: usize = 2560;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosterProfile {
    pub follower_count: u64,
    pub following_count: u64,
    pub post_count: u64,
    pub bio: String,
}

/// Visual payload of a post.
#[derive(Debug, Clone, PartialEq)]
pub enum MediaContent {
    /// An encoded still image, held inline and/or referenced by path.
    Image {
        path: Option<String>,
        bytes: Option<Vec<u8>>,
    },
    /// A video clip, replaced by a seeded noise image at featurization time.
    VideoPlaceholder { seed: u64 },
    /// Externally computed image-branch features.
    PrecomputedEmbedding { embedding: Vec<f64> },
}

impl MediaContent {
    pub fn kind(&self) -> MediaKind {
        match self {
            MediaContent::Image { .. } => MediaKind::Image,
            MediaContent::VideoPlaceholder { .. } => MediaKind::VideoPlaceholder,
            MediaContent::PrecomputedEmbedding { .. } => MediaKind::PrecomputedEmbedding,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match self {
            MediaContent::Image { path: None, bytes: None } => Err(DomainError::EmptyMedia),
            MediaContent::PrecomputedEmbedding { embedding } if embedding.len() != IMAGE_EMBEDDING_DIM => {
                Err(DomainError::EmbeddingLength(embedding.len()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaKind {
    Image,
    VideoPlaceholder,
    PrecomputedEmbedding,
}

impl MediaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaKind::Image => "image",
            MediaKind::VideoPlaceholder => "video_placeholder",
            MediaKind::PrecomputedEmbedding => "precomputed_embedding",
        }
    }
}

/// One social-media post.
#[derive(Debug, Clone, PartialEq)]
pub struct PostRecord {
    pub post_id: String,
    pub username: String,
    /// Unix seconds.
    pub timestamp: i64,
    pub like_count: u64,
    /// The post text, when present, is element 0.
    pub comments: Vec<String>,
    /// Lowercase, without the leading `#`.
    pub hashtags: Vec<String>,
    pub media: MediaContent,
    pub poster: Option<PosterProfile>,
}

impl PostRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.post_id.is_empty() {
            return Err(DomainError::EmptyPostId);
        }
        if let Some(bad) = self
            .hashtags
            .iter()
            .find(|t| t.is_empty() || t.contains('#') || t.chars().any(char::is_whitespace))
        {
            return Err(DomainError::BadHashtag(bad.clone()));
        }
        self.media.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Individual,
    Shop,
    Brand,
    MakeupArtist,
    Daigou,
    UnregisteredProducer,
}

impl Source {
    pub const ALL: [Source; 6] = [
        Source::Individual,
        Source::Shop,
        Source::Brand,
        Source::MakeupArtist,
        Source::Daigou,
        Source::UnregisteredProducer,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Source::Individual => "I",
            Source::Shop => "S",
            Source::Brand => "B",
            Source::MakeupArtist => "M",
            Source::Daigou => "D",
            Source::UnregisteredProducer => "P",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImageType {
    BodyPart,
    Product,
    ProductAndBody,
    Advertisement,
    Screenshot,
}

impl ImageType {
    pub const ALL: [ImageType; 5] = [
        ImageType::BodyPart,
        ImageType::Product,
        ImageType::ProductAndBody,
        ImageType::Advertisement,
        ImageType::Screenshot,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ImageType::BodyPart => "B",
            ImageType::Product => "P",
            ImageType::ProductAndBody => "P+B",
            ImageType::Advertisement => "A",
            ImageType::Screenshot => "S",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }
}

/// The nine annotation properties of a post. `hidden_economy` is the only
/// one the classifier learns; the rest are kept for analysis and export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub available: bool,
    pub relevant: bool,
    pub selling_intention: bool,
    pub source: Source,
    pub hidden_economy: bool,
    pub image_type: ImageType,
    pub language: String,
    pub has_other_contact: bool,
    pub contact_channels: Vec<String>,
}

/// Wire names of the nine label fields, in schema order.
pub mod fields {
    pub const AVAILABILITY: &str = "availability";
    pub const RELEVANCE: &str = "relevance";
    pub const SELLING_INTENTION: &str = "selling_intention";
    pub const SOURCE: &str = "source";
    pub const HIDDEN_ECONOMY: &str = "hidden_economy";
    pub const IMAGE_TYPE: &str = "image_type";
    pub const LANGUAGE: &str = "language";
    pub const HAS_OTHER_CONTACT: &str = "has_other_contact";
    pub const CONTACT_CHANNELS: &str = "contact_channels";

    pub const ALL: [&str; 9] = [
        AVAILABILITY,
        RELEVANCE,
        SELLING_INTENTION,
        SOURCE,
        HIDDEN_ECONOMY,
        IMAGE_TYPE,
        LANGUAGE,
        HAS_OTHER_CONTACT,
        CONTACT_CHANNELS,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("missing label field `{0}`")]
    MissingField(String),
    #[error("invalid option `{token}` for label field `{field}`")]
    InvalidOption { field: String, token: String },
    #[error("contact channels listed but has_other_contact is N")]
    ContactInconsistency,
}

impl LabelError {
    /// The label field the error concerns.
    pub fn field(&self) -> &str {
        match self {
            LabelError::MissingField(f) => f,
            LabelError::InvalidOption { field, .. } => field,
            LabelError::ContactInconsistency => fields::CONTACT_CHANNELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("post_id must be non-empty")]
    EmptyPostId,
    #[error("hashtag `{0}` is empty or contains whitespace or '#'")]
    BadHashtag(String),
    #[error("image media carries neither a path nor bytes")]
    EmptyMedia,
    #[error("precomputed image embedding has {0} values, expected {IMAGE_EMBEDDING_DIM}")]
    EmbeddingLength(usize),
}

fn yes_no(raw: &BTreeMap<String, String>, field: &str) -> Result<bool, LabelError> {
    match lookup(raw, field)? {
        "Y" => Ok(true),
        "N" => Ok(false),
        other => Err(LabelError::InvalidOption {
            field: field.to_string(),
            token: other.to_string(),
        }),
    }
}

fn lookup<'a>(raw: &'a BTreeMap<String, String>, field: &str) -> Result<&'a str, LabelError> {
    raw.get(field)
        .map(|s| s.trim())
        .ok_or_else(|| LabelError::MissingField(field.to_string()))
}

/// Parse a raw field-name → option-code map into a [`LabelSet`].
///
/// `contact_channels` is a comma-separated list (empty string for none).
pub fn validate_label_set(raw: &BTreeMap<String, String>) -> Result<LabelSet, LabelError> {
    for field in fields::ALL {
        lookup(raw, field)?;
    }
    let available = yes_no(raw, fields::AVAILABILITY)?;
    let relevant = yes_no(raw, fields::RELEVANCE)?;
    let selling_intention = yes_no(raw, fields::SELLING_INTENTION)?;
    let source_token = lookup(raw, fields::SOURCE)?;
    let source = Source::from_code(source_token).ok_or_else(|| LabelError::InvalidOption {
        field: fields::SOURCE.to_string(),
        token: source_token.to_string(),
    })?;
    let hidden_economy = yes_no(raw, fields::HIDDEN_ECONOMY)?;
    let image_token = lookup(raw, fields::IMAGE_TYPE)?;
    let image_type = ImageType::from_code(image_token).ok_or_else(|| LabelError::InvalidOption {
        field: fields::IMAGE_TYPE.to_string(),
        token: image_token.to_string(),
    })?;
    let language = lookup(raw, fields::LANGUAGE)?;
    if language.is_empty() {
        return Err(LabelError::InvalidOption {
            field: fields::LANGUAGE.to_string(),
            token: String::new(),
        });
    }
    let has_other_contact = yes_no(raw, fields::HAS_OTHER_CONTACT)?;
    let contact_channels: Vec<String> = lookup(raw, fields::CONTACT_CHANNELS)?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if !has_other_contact && !contact_channels.is_empty() {
        return Err(LabelError::ContactInconsistency);
    }
    Ok(LabelSet {
        available,
        relevant,
        selling_intention,
        source,
        hidden_economy,
        image_type,
        language: language.to_string(),
        has_other_contact,
        contact_channels,
    })
}

fn yn(b: bool) -> String {
    if b { "Y" } else { "N" }.to_string()
}

impl LabelSet {
    /// Inverse of [`validate_label_set`].
    pub fn render(&self) -> BTreeMap<String, String> {
        let pairs = [
            (fields::AVAILABILITY, yn(self.available)),
            (fields::RELEVANCE, yn(self.relevant)),
            (fields::SELLING_INTENTION, yn(self.selling_intention)),
            (fields::SOURCE, self.source.code().to_string()),
            (fields::HIDDEN_ECONOMY, yn(self.hidden_economy)),
            (fields::IMAGE_TYPE, self.image_type.code().to_string()),
            (fields::LANGUAGE, self.language.clone()),
            (fields::HAS_OTHER_CONTACT, yn(self.has_other_contact)),
            (fields::CONTACT_CHANNELS, self.contact_channels.join(",")),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPost {
    pub post: PostRecord,
    pub labels: LabelSet,
}

impl fmt::Display for AnnotatedPost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (hidden_economy={})", self.post.post_id, yn(self.labels.hidden_economy))
    }
}

/// The training and evaluation target.
pub fn is_tax_evasion_positive(a: &AnnotatedPost) -> bool {
    a.labels.hidden_economy
}

fn is_tag_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Collect `#tags` from free text.
///
/// A `#` anywhere starts a tag; the tag runs until the first character that
/// is not a letter, digit or underscore. Results are lowercased and
/// deduplicated in order of first occurrence.
pub fn extract_hashtags<S: AsRef<str>>(comments: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for text in comments {
        let mut chars = text.as_ref().chars().peekable();
        while let Some(c) = chars.next() {
            if c != '#' {
                continue;
            }
            let mut tag = String::new();
            while let Some(&next) = chars.peek() {
                if !is_tag_char(next) {
                    break;
                }
                tag.extend(next.to_lowercase());
                chars.next();
            }
            if !tag.is_empty() && !out.contains(&tag) {
                out.push(tag);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn raw(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn lipstick_producer() -> BTreeMap<String, String> {
        raw(&[
            ("availability", "Y"),
            ("relevance", "Y"),
            ("selling_intention", "Y"),
            ("source", "P"),
            ("hidden_economy", "Y"),
            ("image_type", "P+B"),
            ("language", "English"),
            ("has_other_contact", "N"),
            ("contact_channels", ""),
        ])
    }

    fn labels(source: Source, hidden: bool) -> LabelSet {
        LabelSet {
            available: true,
            relevant: true,
            selling_intention: hidden,
            source,
            hidden_economy: hidden,
            image_type: ImageType::Product,
            language: "English".into(),
            has_other_contact: false,
            contact_channels: vec![],
        }
    }

    fn post(id: &str) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            username: "u".into(),
            timestamp: 0,
            like_count: 0,
            comments: vec![],
            hashtags: vec![],
            media: MediaContent::VideoPlaceholder { seed: 1 },
            poster: None,
        }
    }

    #[test]
    fn unregistered_producer_post() {
        let ls = validate_label_set(&lipstick_producer()).unwrap();
        assert_eq!(ls.source, Source::UnregisteredProducer);
        assert!(ls.hidden_economy);
        assert_eq!(ls.image_type, ImageType::ProductAndBody);
        assert!(ls.contact_channels.is_empty());
    }

    #[test]
    fn channels_without_contact_flag_rejected() {
        let mut r = lipstick_producer();
        r.insert("contact_channels".into(), "WhatsApp".into());
        assert_eq!(validate_label_set(&r), Err(LabelError::ContactInconsistency));
    }

    #[test]
    fn unknown_source_rejected() {
        let mut r = lipstick_producer();
        r.insert("source".into(), "X".into());
        assert_eq!(
            validate_label_set(&r),
            Err(LabelError::InvalidOption { field: "source".into(), token: "X".into() })
        );
    }

    #[test]
    fn missing_field_named() {
        let mut r = lipstick_producer();
        r.remove("language");
        assert_eq!(validate_label_set(&r), Err(LabelError::MissingField("language".into())));
    }

    #[test]
    fn contact_channels_parsed() {
        let mut r = lipstick_producer();
        r.insert("has_other_contact".into(), "Y".into());
        r.insert("contact_channels".into(), "WhatsApp, WeChat".into());
        let ls = validate_label_set(&r).unwrap();
        assert_eq!(ls.contact_channels, vec!["WhatsApp", "WeChat"]);
    }

    #[test]
    fn positives_follow_hidden_economy_flag() {
        let daigou_soap = AnnotatedPost { post: post("b"), labels: labels(Source::Daigou, true) };
        let brand_ad = AnnotatedPost { post: post("c"), labels: labels(Source::Brand, false) };
        let personal = AnnotatedPost { post: post("a"), labels: labels(Source::Individual, false) };
        assert!(is_tax_evasion_positive(&daigou_soap));
        assert!(!is_tax_evasion_positive(&brand_ad));
        assert!(!is_tax_evasion_positive(&personal));
    }

    #[test]
    fn hashtags_casefolded_and_deduped() {
        let got = extract_hashtags(&["New shade! #Lipstick #MATTE", "love it #lipstick"]);
        assert_eq!(got, vec!["lipstick", "matte"]);
        assert!(extract_hashtags::<&str>(&[]).is_empty());
    }

    /// Independent scan: split the text at every '#', then keep the longest
    /// tag-character prefix of each piece after the first.
    fn hashtag_oracle(text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for piece in text.split('#').skip(1) {
            let tag: String = piece.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
            let tag = tag.to_lowercase();
            if !tag.is_empty() && !out.contains(&tag) {
                out.push(tag);
            }
        }
        out
    }

    #[test]
    fn hash_mid_token_starts_tag() {
        assert_eq!(hashtag_oracle("price#dm"), vec!["dm"]);
        assert_eq!(extract_hashtags(&["price#dm"]), hashtag_oracle("price#dm"));
        assert_eq!(extract_hashtags(&["##double #口红_2"]), vec!["double", "口红_2"]);
    }

    #[test]
    fn post_validation() {
        let mut p = post("x");
        assert!(p.validate().is_ok());
        p.hashtags = vec!["two words".into()];
        assert!(matches!(p.validate(), Err(DomainError::BadHashtag(_))));
        p.hashtags.clear();
        p.media = MediaContent::PrecomputedEmbedding { embedding: vec![0.0; 10] };
        assert_eq!(p.validate(), Err(DomainError::EmbeddingLength(10)));
        p.post_id.clear();
        assert_eq!(p.validate(), Err(DomainError::EmptyPostId));
    }

    fn arb_labels() -> impl Strategy<Value = LabelSet> {
        (
            any::<[bool; 4]>(),
            0usize..6,
            0usize..5,
            "[A-Za-z]{1,10}",
            proptest::collection::vec("[A-Za-z]{1,8}", 0..4),
        )
            .prop_map(|(flags, s, i, language, channels)| {
                let has_other_contact = flags[3] || !channels.is_empty();
                LabelSet {
                    available: flags[0],
                    relevant: flags[1],
                    selling_intention: flags[2],
                    source: Source::ALL[s],
                    hidden_economy: s >= 4,
                    image_type: ImageType::ALL[i],
                    language,
                    has_other_contact,
                    contact_channels: channels,
                }
            })
    }

    proptest! {
        #[test]
        fn render_round_trips(ls in arb_labels()) {
            prop_assert_eq!(validate_label_set(&ls.render()).unwrap(), ls);
        }

        #[test]
        fn extraction_idempotent(texts in proptest::collection::vec("[a-zA-Z0-9_ #!.é口]{0,30}", 0..5)) {
            let once = extract_hashtags(&texts);
            let rendered: Vec<String> = once.iter().map(|t| format!("#{t}")).collect();
            prop_assert_eq!(extract_hashtags(&rendered), once);
        }

        #[test]
        fn target_ignores_other_labels(ls in arb_labels(), hidden in any::<bool>()) {
            let mut a = AnnotatedPost { post: post("p"), labels: ls.clone() };
            a.labels.hidden_economy = hidden;
            let mut b = AnnotatedPost { post: post("q"), labels: labels(Source::Shop, hidden) };
            b.labels.language = "Thai".into();
            prop_assert_eq!(is_tax_evasion_positive(&a), is_tax_evasion_positive(&b));
        }
    }
}
