//! Annotated logo datasets.
//!
//! A [`Dataset`] is a list of images, each carrying zero or more logo boxes
//! labelled with a brand. Images without boxes are distractors. The canonical
//! on-disk form is JSON Lines, see [`jsonl`].

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub mod jsonl;
mod split;
mod stats;
pub mod voc;

pub use jsonl::{load_dataset, parse_dataset, save_dataset, write_dataset};
pub use split::{exclude_brands, holdout_split, image_hash, merge, HOLDOUT_BUCKETS};
pub use stats::{stats, stats_with_thresholds, DatasetStats, DEFAULT_BRAND_THRESHOLDS};
pub use voc::{export_voc_xml, import_voc_xml};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogoKind {
    Textual,
    Graphical,
}

impl fmt::Display for LogoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogoKind::Textual => "textual",
            LogoKind::Graphical => "graphical",
        })
    }
}

/// Brand identity plus design metadata.
///
/// Only `brand` takes part in "same logo" decisions; `kind` and `variant`
/// describe which of the brand's designs was annotated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BrandLabel {
    brand: String,
    pub kind: LogoKind,
    pub variant: u32,
}

impl BrandLabel {
    /// Lowercases and trims `brand`. Returns `None` if nothing is left.
    pub fn new(brand: &str, kind: LogoKind, variant: u32) -> Option<Self> {
        let brand = normalize_brand(brand);
        (!brand.is_empty()).then_some(Self {
            brand,
            kind,
            variant,
        })
    }

    pub fn graphical(brand: &str) -> Option<Self> {
        Self::new(brand, LogoKind::Graphical, 0)
    }

    pub fn brand(&self) -> &str {
        &self.brand
    }
}

pub fn normalize_brand(brand: &str) -> String {
    brand.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roi {
    pub bbox: BBox,
    pub label: BrandLabel,
}

impl Roi {
    pub fn brand(&self) -> &str {
        self.label.brand()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub rois: Vec<Roi>,
}

impl ImageRecord {
    pub fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::invalid("", "image_id", "image_id must not be empty"));
        }
        if self.width == 0 {
            return Err(Error::invalid(&self.image_id, "width", "width must be positive"));
        }
        if self.height == 0 {
            return Err(Error::invalid(&self.image_id, "height", "height must be positive"));
        }
        for (i, roi) in self.rois.iter().enumerate() {
            let b = roi.bbox;
            if b.w == 0 || b.h == 0 {
                return Err(Error::invalid(
                    &self.image_id,
                    format!("rois[{i}]"),
                    "RoI width and height must be positive",
                ));
            }
            if !b.fits_within(self.width, self.height) {
                return Err(Error::invalid(
                    &self.image_id,
                    format!("rois[{i}]"),
                    format!(
                        "RoI exceeds image bounds: {b} in {}x{}",
                        self.width, self.height
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn boxes_of_brand<'a>(&'a self, brand: &'a str) -> impl Iterator<Item = BBox> + 'a {
        self.rois
            .iter()
            .filter(move |r| r.brand() == brand)
            .map(|r| r.bbox)
    }
}

/// A validated collection of images. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub name: String,
    pub version: String,
    images: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        version: impl Into<String>,
        images: Vec<ImageRecord>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(images.len());
        for image in &images {
            image.validate()?;
            if !seen.insert(image.image_id.as_str()) {
                return Err(Error::DuplicateImage(image.image_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            version: version.into(),
            images,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            version: String::new(),
            images: Vec::new(),
        }
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn into_images(self) -> Vec<ImageRecord> {
        self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    pub fn n_rois(&self) -> usize {
        self.images.iter().map(|i| i.rois.len()).sum()
    }

    pub fn brands(&self) -> BTreeSet<&str> {
        self.images
            .iter()
            .flat_map(|i| i.rois.iter().map(Roi::brand))
            .collect()
    }

    pub fn count_brand(&self, brand: &str) -> usize {
        self.images
            .iter()
            .map(|i| i.rois.iter().filter(|r| r.brand() == brand).count())
            .sum()
    }

    /// Same images under a different name and version.
    pub fn renamed(mut self, name: impl Into<String>, version: impl Into<String>) -> Self {
        self.name = name.into();
        self.version = version.into();
        self
    }
}
