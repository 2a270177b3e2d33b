//! Feature vectors, cosine similarity and feature extractors.

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::BBox;

mod descriptor;
pub mod embeddings;

pub use descriptor::{baseline_descriptor, BaselineDescriptor, DESCRIPTOR_DIM};
pub use embeddings::{load_embeddings, parse_embeddings, save_embeddings, write_embeddings, EmbeddingTable};

/// Non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.dot_unchecked(self).sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.dot_unchecked(other))
    }

    pub(crate) fn dot_unchecked(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub fn l2_normalize(v: &FeatureVector) -> Result<FeatureVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(FeatureVector(v.0.iter().map(|x| x / norm).collect()))
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((a.dot_unchecked(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Identifies one region to describe: the `roi_index`-th region of an image.
#[derive(Debug, Clone, Copy)]
pub struct RegionRef<'a> {
    pub image_id: &'a str,
    pub roi_index: usize,
    pub region: BBox,
}

/// Anything that turns an image region into a feature vector.
///
/// Extractors that read pixels get the decoded image; lookup-based ones
/// (precomputed embeddings) return `false` from `needs_pixels` and receive
/// `None`.
pub trait FeatureExtractor: Sync {
    /// Length of every vector this extractor produces.
    fn dim(&self) -> usize;

    fn needs_pixels(&self) -> bool;

    fn extract(&self, region: &RegionRef<'_>, pixels: Option<&RgbImage>) -> Result<FeatureVector>;
}

impl<T: FeatureExtractor + ?Sized> FeatureExtractor for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn needs_pixels(&self) -> bool {
        (**self).needs_pixels()
    }

    fn extract(&self, region: &RegionRef<'_>, pixels: Option<&RgbImage>) -> Result<FeatureVector> {
        (**self).extract(region, pixels)
    }
}
