//! Per-post feature assembly: the three modality vectors and their joint
//! concatenation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{is_tax_evasion_positive, AnnotatedPost, MediaContent, PostRecord};
use crate::embedding::{EmbeddingError, EmbeddingTable};
use crate::ingest::DatasetSplit;
use crate::text::{embed_hashed, text_vector_from_table, tokenize_all, TextVector, TEXT_DIM};
use crate::vision::{
    decode_image, image_to_features, image_vector_from_table, read_image, video_placeholder_features,
    ImageSource, ImageVector, VisionError, IMAGE_DIM,
};

/// Branch widths in concatenation order: hashtags, comments, image.
pub const BRANCH_DIMS: [usize; 3] = [TEXT_DIM, TEXT_DIM, IMAGE_DIM];
pub const JOINT_DIM: usize = TEXT_DIM + TEXT_DIM + IMAGE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Hashtags,
    Comments,
    Images,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Hashtags, Modality::Comments, Modality::Images];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Hashtags => "hashtags",
            Modality::Comments => "comments",
            Modality::Images => "images",
        }
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{branch} vector has {found} values, expected {expected}")]
    Dimension { branch: &'static str, found: usize, expected: usize },
    #[error("post {post_id}: {source}")]
    Image { post_id: String, source: VisionError },
    #[error("post {post_id}: {source}")]
    Embedding { post_id: String, source: EmbeddingError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub hashtag_vec: TextVector,
    pub comment_vec: TextVector,
    pub image_vec: ImageVector,
    pub joint: Option<Vec<f64>>,
}

impl FeatureBundle {
    fn branch(&self, i: usize) -> (&'static str, &[f64]) {
        match i {
            0 => ("hashtag", &self.hashtag_vec.values),
            1 => ("comment", &self.comment_vec.values),
            _ => ("image", &self.image_vec.values),
        }
    }

    /// Concatenate the branches whose width in `dims` is non-zero. Each
    /// active branch must match its width exactly.
    pub fn select(&self, dims: &[usize; 3]) -> Result<Vec<f64>, FeatureError> {
        let mut out = Vec::with_capacity(dims.iter().sum());
        for (i, &want) in dims.iter().enumerate() {
            if want == 0 {
                continue;
            }
            let (branch, values) = self.branch(i);
            if values.len() != want {
                return Err(FeatureError::Dimension { branch, found: values.len(), expected: want });
            }
            out.extend_from_slice(values);
        }
        Ok(out)
    }
}

/// Hashtag block `[0, 768)`, comment block `[768, 1536)`, image block
/// `[1536, 4096)`.
pub fn concat_features(b: &FeatureBundle) -> Result<Vec<f64>, FeatureError> {
    b.select(&BRANCH_DIMS)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoPolicy {
    /// Seeded noise frame through the image featurizer.
    #[default]
    Noise,
    /// All-zero image branch.
    Zero,
}

impl std::str::FromStr for VideoPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "noise" => Ok(VideoPolicy::Noise),
            "zero" => Ok(VideoPolicy::Zero),
            other => Err(format!("unknown video policy `{other}` (noise|zero)")),
        }
    }
}

/// Where text vectors come from.
#[derive(Debug, Clone, Default)]
pub enum TextFeatures {
    #[default]
    Hashed,
    Sidecar { hashtags: EmbeddingTable, comments: EmbeddingTable },
}

/// Where image vectors come from for posts carrying an image.
#[derive(Debug, Clone, Default)]
pub enum ImageFeatures {
    #[default]
    CellStats,
    Sidecar(EmbeddingTable),
}

/// Turns posts into [`FeatureBundle`]s.
#[derive(Debug, Clone, Default)]
pub struct Featurizer {
    pub text: TextFeatures,
    pub image: ImageFeatures,
    pub video_policy: VideoPolicy,
    /// Relative image paths resolve against this directory.
    pub image_root: PathBuf,
}

impl Featurizer {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn with_image_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.image_root = root.into();
        self
    }

    pub fn with_video_policy(mut self, policy: VideoPolicy) -> Self {
        self.video_policy = policy;
        self
    }

    /// Sidecar tables for all three branches.
    pub fn from_sidecars(hashtags: &Path, comments: &Path, images: &Path) -> Result<Self, EmbeddingError> {
        Ok(Self {
            text: TextFeatures::Sidecar {
                hashtags: EmbeddingTable::load(hashtags)?,
                comments: EmbeddingTable::load(comments)?,
            },
            image: ImageFeatures::Sidecar(EmbeddingTable::load(images)?),
            ..Self::default()
        })
    }

    fn text_vectors(&self, post: &PostRecord) -> Result<(TextVector, TextVector), FeatureError> {
        let wrap = |source| FeatureError::Embedding { post_id: post.post_id.clone(), source };
        match &self.text {
            TextFeatures::Hashed => Ok((
                embed_hashed(&tokenize_all(&post.hashtags)),
                embed_hashed(&tokenize_all(&post.comments)),
            )),
            TextFeatures::Sidecar { hashtags, comments } => Ok((
                text_vector_from_table(hashtags, &post.post_id).map_err(wrap)?,
                text_vector_from_table(comments, &post.post_id).map_err(wrap)?,
            )),
        }
    }

    fn image_vector(&self, post: &PostRecord) -> Result<ImageVector, FeatureError> {
        let image_err = |source| FeatureError::Image { post_id: post.post_id.clone(), source };
        if let ImageFeatures::Sidecar(table) = &self.image {
            return image_vector_from_table(table, &post.post_id)
                .map_err(|source| FeatureError::Embedding { post_id: post.post_id.clone(), source });
        }
        match &post.media {
            MediaContent::Image { bytes: Some(bytes), .. } => {
                image_to_features(&decode_image(bytes).map_err(image_err)?).map_err(image_err)
            }
            MediaContent::Image { path: Some(path), .. } => {
                let img = read_image(&self.image_root.join(path)).map_err(image_err)?;
                image_to_features(&img).map_err(image_err)
            }
            MediaContent::Image { .. } => Err(image_err(VisionError::Decode("no image payload".into()))),
            MediaContent::VideoPlaceholder { seed } => Ok(match self.video_policy {
                VideoPolicy::Noise => video_placeholder_features(*seed),
                VideoPolicy::Zero => ImageVector { values: vec![0.0; IMAGE_DIM], source: ImageSource::NoisePlaceholder },
            }),
            MediaContent::PrecomputedEmbedding { embedding } => {
                if embedding.len() != IMAGE_DIM {
                    return Err(FeatureError::Dimension { branch: "image", found: embedding.len(), expected: IMAGE_DIM });
                }
                Ok(ImageVector { values: embedding.clone(), source: ImageSource::Precomputed })
            }
        }
    }

    pub fn featurize(&self, post: &PostRecord) -> Result<FeatureBundle, FeatureError> {
        let (hashtag_vec, comment_vec) = self.text_vectors(post)?;
        let image_vec = self.image_vector(post)?;
        let mut bundle = FeatureBundle { hashtag_vec, comment_vec, image_vec, joint: None };
        bundle.joint = Some(concat_features(&bundle)?);
        Ok(bundle)
    }

    /// Featurize many posts on all cores; output order follows input order.
    pub fn featurize_all<'a, I>(&self, posts: I) -> Result<Vec<FeatureBundle>, FeatureError>
    where
        I: IntoIterator<Item = &'a PostRecord>,
    {
        let posts: Vec<&PostRecord> = posts.into_iter().collect();
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(posts.len().max(1));
        let chunk = posts.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = posts
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|p| self.featurize(p)).collect::<Result<Vec<_>, _>>()))
                .collect();
            let mut out = Vec::with_capacity(posts.len());
            for h in handles {
                out.extend(h.join().expect("featurizer thread panicked")?);
            }
            Ok(out)
        })
    }
}

/// Featurized posts with their targets.
#[derive(Debug, Clone, Default)]
pub struct LabeledBundles {
    pub post_ids: Vec<String>,
    pub bundles: Vec<FeatureBundle>,
    pub labels: Vec<bool>,
}

impl LabeledBundles {
    pub fn from_posts(featurizer: &Featurizer, posts: &[AnnotatedPost]) -> Result<Self, FeatureError> {
        Ok(Self {
            post_ids: posts.iter().map(|p| p.post.post_id.clone()).collect(),
            bundles: featurizer.featurize_all(posts.iter().map(|p| &p.post))?,
            labels: posts.iter().map(is_tax_evasion_positive).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Joint vectors restricted to the active branches of `dims`.
    pub fn design_matrix(&self, dims: &[usize; 3]) -> Result<Vec<Vec<f64>>, FeatureError> {
        self.bundles.iter().map(|b| b.select(dims)).collect()
    }
}

/// A [`DatasetSplit`] after featurization.
#[derive(Debug, Clone, Default)]
pub struct FeaturizedSplit {
    pub train: LabeledBundles,
    pub validation: LabeledBundles,
    pub test: LabeledBundles,
}

impl FeaturizedSplit {
    pub fn new(featurizer: &Featurizer, split: &DatasetSplit) -> Result<Self, FeatureError> {
        Ok(Self {
            train: LabeledBundles::from_posts(featurizer, &split.train)?,
            validation: LabeledBundles::from_posts(featurizer, &split.validation)?,
            test: LabeledBundles::from_posts(featurizer, &split.test)?,
        })
    }
}
