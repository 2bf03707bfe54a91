//! JSON-lines wire format for posts and annotated posts.
//!
//! ```text
//! {"post_id":"p1","username":"u","timestamp":1569110400,"like_count":3,
//!  "comments":["..."],"hashtags":["lipstick"],
//!  "media":{"kind":"image","image_path":"images/p1.png"},
//!  "poster":{"followers":10,"following":5,"posts":40,"bio":""},
//!  "labels":{"availability":"Y", ..., "contact_channels":"WhatsApp"}}
//! ```
//!
//! `media.kind` is one of `image` (with `image_path`), `video_placeholder`
//! (with `seed`) or `precomputed_embedding` (with `embedding`). `labels` is
//! optional for unlabeled posts. `contact_channels` may be a comma-separated
//! string or an array of strings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{
    extract_hashtags, validate_label_set, AnnotatedPost, DomainError, LabelError, MediaContent,
    PostRecord, PosterProfile,
};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown media kind `{0}`")]
    MediaKind(String),
    #[error("media kind `{kind}` requires field `{field}`")]
    MediaPayload { kind: String, field: &'static str },
    #[error("label field `{0}` must be a string")]
    LabelType(String),
    #[error("record has no labels")]
    Unlabeled,
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("post {0} holds an in-memory image with no path; write it to disk first")]
    UnpersistedImage(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MediaLine {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PosterLine {
    #[serde(default)]
    followers: u64,
    #[serde(default)]
    following: u64,
    #[serde(default)]
    posts: u64,
    #[serde(default)]
    bio: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PostLine {
    post_id: String,
    #[serde(default)]
    username: String,
    #[serde(default)]
    timestamp: i64,
    #[serde(default)]
    like_count: u64,
    comments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hashtags: Option<Vec<String>>,
    media: MediaLine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poster: Option<PosterLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<BTreeMap<String, Value>>,
}

fn media_from_line(m: MediaLine) -> Result<MediaContent, RecordError> {
    let missing = |field| RecordError::MediaPayload { kind: m.kind.clone(), field };
    Ok(match m.kind.as_str() {
        "image" => MediaContent::Image {
            path: Some(m.image_path.clone().ok_or_else(|| missing("image_path"))?),
            bytes: None,
        },
        "video_placeholder" => MediaContent::VideoPlaceholder {
            seed: m.seed.ok_or_else(|| missing("seed"))?,
        },
        "precomputed_embedding" => MediaContent::PrecomputedEmbedding {
            embedding: m.embedding.clone().ok_or_else(|| missing("embedding"))?,
        },
        other => return Err(RecordError::MediaKind(other.to_string())),
    })
}

fn labels_to_raw(labels: BTreeMap<String, Value>) -> Result<BTreeMap<String, String>, RecordError> {
    labels
        .into_iter()
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s,
                Value::Array(items) => items
                    .into_iter()
                    .map(|i| match i {
                        Value::String(s) => Ok(s),
                        _ => Err(RecordError::LabelType(k.clone())),
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(","),
                _ => return Err(RecordError::LabelType(k)),
            };
            Ok((k, s))
        })
        .collect()
}

/// A parsed line: the post plus its raw labels, if any.
#[derive(Debug, Clone)]
pub struct ParsedLine {
    pub post: PostRecord,
    pub raw_labels: Option<BTreeMap<String, String>>,
}

pub fn parse_post_line(line: &str) -> Result<ParsedLine, RecordError> {
    let pl: PostLine = serde_json::from_str(line)?;
    let hashtags = match pl.hashtags {
        Some(tags) => tags.into_iter().map(|t| t.trim_start_matches('#').to_lowercase()).collect(),
        None => extract_hashtags(&pl.comments),
    };
    let post = PostRecord {
        post_id: pl.post_id,
        username: pl.username,
        timestamp: pl.timestamp,
        like_count: pl.like_count,
        comments: pl.comments,
        hashtags,
        media: media_from_line(pl.media)?,
        poster: pl.poster.map(|p| PosterProfile {
            follower_count: p.followers,
            following_count: p.following,
            post_count: p.posts,
            bio: p.bio,
        }),
    };
    post.validate()?;
    let raw_labels = pl.labels.map(labels_to_raw).transpose()?;
    Ok(ParsedLine { post, raw_labels })
}

/// Parse a line that must carry a complete label set.
pub fn parse_annotated_line(line: &str) -> Result<AnnotatedPost, RecordError> {
    let parsed = parse_post_line(line)?;
    let raw = parsed.raw_labels.ok_or(RecordError::Unlabeled)?;
    Ok(AnnotatedPost { post: parsed.post, labels: validate_label_set(&raw)? })
}

fn post_to_line(post: &PostRecord) -> Result<PostLine, RecordError> {
    let media = match &post.media {
        MediaContent::Image { path: Some(p), .. } => MediaLine {
            kind: "image".into(),
            image_path: Some(p.clone()),
            embedding: None,
            seed: None,
        },
        MediaContent::Image { path: None, .. } => {
            return Err(RecordError::UnpersistedImage(post.post_id.clone()))
        }
        MediaContent::VideoPlaceholder { seed } => MediaLine {
            kind: "video_placeholder".into(),
            image_path: None,
            embedding: None,
            seed: Some(*seed),
        },
        MediaContent::PrecomputedEmbedding { embedding } => MediaLine {
            kind: "precomputed_embedding".into(),
            image_path: None,
            embedding: Some(embedding.clone()),
            seed: None,
        },
    };
    Ok(PostLine {
        post_id: post.post_id.clone(),
        username: post.username.clone(),
        timestamp: post.timestamp,
        like_count: post.like_count,
        comments: post.comments.clone(),
        hashtags: Some(post.hashtags.clone()),
        media,
        poster: post.poster.as_ref().map(|p| PosterLine {
            followers: p.follower_count,
            following: p.following_count,
            posts: p.post_count,
            bio: p.bio.clone(),
        }),
        labels: None,
    })
}

pub fn post_to_json_line(post: &PostRecord) -> Result<String, RecordError> {
    Ok(serde_json::to_string(&post_to_line(post)?)?)
}

pub fn annotated_to_json_line(a: &AnnotatedPost) -> Result<String, RecordError> {
    let mut line = post_to_line(&a.post)?;
    line.labels = Some(a.labels.render().into_iter().map(|(k, v)| (k, Value::String(v))).collect());
    Ok(serde_json::to_string(&line)?)
}
