use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};

/// Supplies decoded pixels for dataset images.
pub trait ImageSource: Sync {
    fn load(&self, record: &ImageRecord) -> Result<RgbImage>;
}

/// Reads `root/<record.path>` from disk. Decoded size must match the record.
#[derive(Debug, Clone)]
pub struct ImageDir {
    root: PathBuf,
}

impl ImageDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ImageSource for ImageDir {
    fn load(&self, record: &ImageRecord) -> Result<RgbImage> {
        let path = self.root.join(&record.path);
        let img = image::open(&path)
            .map_err(|e| Error::Image {
                path: path.clone(),
                message: e.to_string(),
            })?
            .to_rgb8();
        if img.dimensions() != (record.width, record.height) {
            return Err(Error::Image {
                path,
                message: format!(
                    "decoded size {}x{} differs from annotated {}x{}",
                    img.width(),
                    img.height(),
                    record.width,
                    record.height
                ),
            });
        }
        Ok(img)
    }
}

/// Pixels held in memory, keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct InMemoryImages {
    images: HashMap<String, RgbImage>,
}

impl InMemoryImages {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, image: RgbImage) {
        self.images.insert(image_id.into(), image);
    }

    pub fn get(&self, image_id: &str) -> Option<&RgbImage> {
        self.images.get(image_id)
    }
}

impl FromIterator<(String, RgbImage)> for InMemoryImages {
    fn from_iter<I: IntoIterator<Item = (String, RgbImage)>>(iter: I) -> Self {
        Self {
            images: iter.into_iter().collect(),
        }
    }
}

impl ImageSource for InMemoryImages {
    fn load(&self, record: &ImageRecord) -> Result<RgbImage> {
        self.images
            .get(&record.image_id)
            .cloned()
            .ok_or_else(|| Error::Image {
                path: PathBuf::from(&record.path),
                message: format!("no pixels for image {:?}", record.image_id),
            })
    }
}
