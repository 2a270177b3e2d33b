use std::collections::BTreeMap;

use serde::Serialize;

use super::Dataset;

/// Thresholds reported in [`DatasetStats::n_brands_with_at_least`] by default.
pub const DEFAULT_BRAND_THRESHOLDS: [usize; 6] = [1, 5, 10, 20, 50, 100];

/// Counts over a dataset. Brand frequencies count RoIs, not images.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DatasetStats {
    pub n_brands: usize,
    pub n_images: usize,
    pub n_rois: usize,
    pub rois_per_brand: BTreeMap<String, usize>,
    /// RoIs-in-image -> number of images with that many.
    pub rois_per_image_histogram: BTreeMap<usize, usize>,
    /// Threshold t -> number of brands with at least t RoIs.
    pub n_brands_with_at_least: BTreeMap<usize, usize>,
    pub max_rois_in_one_image: usize,
}

pub fn stats(dataset: &Dataset) -> DatasetStats {
    stats_with_thresholds(dataset, &DEFAULT_BRAND_THRESHOLDS)
}

pub fn stats_with_thresholds(dataset: &Dataset, thresholds: &[usize]) -> DatasetStats {
    let mut s = DatasetStats {
        n_images: dataset.len(),
        ..Default::default()
    };
    for image in dataset.images() {
        let n = image.rois.len();
        s.n_rois += n;
        s.max_rois_in_one_image = s.max_rois_in_one_image.max(n);
        *s.rois_per_image_histogram.entry(n).or_default() += 1;
        for roi in &image.rois {
            *s.rois_per_brand.entry(roi.brand().to_string()).or_default() += 1;
        }
    }
    s.n_brands = s.rois_per_brand.len();
    s.n_brands_with_at_least = thresholds
        .iter()
        .map(|&t| (t, s.rois_per_brand.values().filter(|&&c| c >= t).count()))
        .collect();
    s
}
