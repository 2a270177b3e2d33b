//! Open-set retrieval protocol.
//!
//! Every query brand is searched once per iteration, each time with a
//! different single example crop. Each search ranks the whole index; the
//! ranking is scored with AP against that brand's ground truth and with an
//! identification FROC. Results are averaged over brands per iteration, then
//! summarized as mean and population standard deviation over iterations.

use std::collections::BTreeMap;

use serde::Serialize;

use super::ap::{average_precision_with, ApMode};
use super::froc::{check_iou_threshold, identification_curve, identification_outcomes, operating_point, FrocCurve, FrocPoint};
use crate::dataset::{Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, RegionRef};
use crate::geometry::{BBox, DEFAULT_IOU_THRESHOLD};
use crate::retrieval::{query, ImageSource, Index, QueryOptions};

pub const DEFAULT_FPPI_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub iou_threshold: f64,
    /// Number of query rounds. `None` uses as many as every brand can supply.
    pub iterations: Option<usize>,
    /// Ascending fppi values the mean curve is sampled at.
    pub fppi_grid: Vec<f64>,
    pub ap_mode: ApMode,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            iterations: None,
            fppi_grid: DEFAULT_FPPI_GRID.to_vec(),
            ap_mode: ApMode::Uninterpolated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryCrop {
    pub image_id: String,
    pub roi_index: usize,
    pub bbox: BBox,
}

/// Query crops grouped by brand. Iteration `i` uses each brand's `i`-th crop,
/// counted in dataset order (image, then RoI).
#[derive(Debug, Clone)]
pub struct QuerySet<'a> {
    dataset: &'a Dataset,
    crops: BTreeMap<String, Vec<(usize, usize)>>,
}

impl<'a> QuerySet<'a> {
    pub fn from_dataset(dataset: &'a Dataset) -> Self {
        let mut crops: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (image_idx, image) in dataset.images().iter().enumerate() {
            for (roi_idx, roi) in image.rois.iter().enumerate() {
                crops
                    .entry(roi.brand().to_string())
                    .or_default()
                    .push((image_idx, roi_idx));
            }
        }
        Self { dataset, crops }
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn brands(&self) -> impl Iterator<Item = &str> {
        self.crops.keys().map(String::as_str)
    }

    pub fn crop_count(&self, brand: &str) -> usize {
        self.crops.get(brand).map_or(0, Vec::len)
    }

    fn crop(&self, brand: &str, iteration: usize) -> Option<(&'a ImageRecord, QueryCrop)> {
        let &(image_idx, roi_idx) = self.crops.get(brand)?.get(iteration)?;
        let record = &self.dataset.images()[image_idx];
        Some((
            record,
            QueryCrop {
                image_id: record.image_id.clone(),
                roi_index: roi_idx,
                bbox: record.rois[roi_idx].bbox,
            },
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryEvalResult {
    pub brand: String,
    pub iteration: usize,
    pub query: QueryCrop,
    pub ap: f64,
    /// Full identification curve; omitted from JSON, see `rates_on_grid`.
    #[serde(skip)]
    pub curve: FrocCurve,
    /// `curve` sampled at the report's fppi grid.
    pub rates_on_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub map: f64,
    pub map_std: f64,
    pub iteration_maps: Vec<f64>,
    pub per_brand_ap: BTreeMap<String, f64>,
    pub mean_curve: FrocCurve,
    pub curve_std: Vec<f64>,
    pub iou_threshold: f64,
    pub ap_mode: ApMode,
    pub n_iterations: usize,
    pub queries: Vec<QueryEvalResult>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let ok = !grid.is_empty()
        && grid.iter().all(|g| g.is_finite() && *g >= 0.0)
        && grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "fppi grid",
            value: f64::NAN,
            range: "non-empty, strictly ascending, finite, >= 0",
        })
    }
}

/// Runs every (iteration, brand) query against `index` and aggregates.
///
/// `ground_truth` is the annotated dataset the index was built over;
/// `query_images` supplies pixels for the query set's images.
pub fn run_open_set_protocol(
    index: &Index,
    ground_truth: &Dataset,
    queries: &QuerySet<'_>,
    query_images: &dyn ImageSource,
    extractor: &dyn FeatureExtractor,
    config: &ProtocolConfig,
) -> Result<EvalReport> {
    check_iou_threshold(config.iou_threshold)?;
    check_grid(&config.fppi_grid)?;
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let missing: Vec<String> = queries
        .brands()
        .filter(|b| ground_truth.count_brand(b) == 0)
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::BrandsNotInGroundTruth(missing));
    }

    let n_iterations = match config.iterations {
        Some(n) => n,
        None => queries.brands().map(|b| queries.crop_count(b)).min().unwrap_or(0),
    };
    if n_iterations == 0 {
        return Err(Error::OutOfRange {
            name: "iterations",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    for brand in queries.brands() {
        let available = queries.crop_count(brand);
        if available < n_iterations {
            return Err(Error::MissingQueryCrop {
                brand: brand.to_string(),
                iteration: available,
            });
        }
    }

    let grid = &config.fppi_grid;
    let brands: Vec<&str> = queries.brands().collect();
    let mut results = Vec::with_capacity(n_iterations * brands.len());
    let mut iteration_maps = Vec::with_capacity(n_iterations);
    // [iteration][grid point] -> rate averaged over brands
    let mut iteration_rates = Vec::with_capacity(n_iterations);

    for iteration in 0..n_iterations {
        let mut aps = Vec::with_capacity(brands.len());
        let mut rate_sums = vec![0.0; grid.len()];
        for &brand in &brands {
            let (record, crop) = queries.crop(brand, iteration).ok_or_else(|| {
                Error::MissingQueryCrop {
                    brand: brand.to_string(),
                    iteration,
                }
            })?;
            let pixels = if extractor.needs_pixels() {
                Some(query_images.load(record)?)
            } else {
                None
            };
            let region = RegionRef {
                image_id: &crop.image_id,
                roi_index: crop.roi_index,
                region: crop.bbox,
            };
            let feature = extractor.extract(&region, pixels.as_ref())?;
            let ranked = query(index, &feature, QueryOptions::default())?;
            let flags = identification_outcomes(&ranked, ground_truth, brand, config.iou_threshold)?;
            let n_relevant = ground_truth.count_brand(brand);
            let ap = average_precision_with(&flags, n_relevant, config.ap_mode)?;
            let curve = identification_curve(&ranked, &flags, ground_truth, brand);
            let rates_on_grid: Vec<f64> = grid.iter().map(|&g| operating_point(&curve, g)).collect();
            for (sum, r) in rate_sums.iter_mut().zip(&rates_on_grid) {
                *sum += r;
            }
            aps.push(ap);
            results.push(QueryEvalResult {
                brand: brand.to_string(),
                iteration,
                query: crop,
                ap,
                curve,
                rates_on_grid,
            });
        }
        iteration_maps.push(mean(&aps));
        iteration_rates.push(
            rate_sums
                .into_iter()
                .map(|s| s / brands.len() as f64)
                .collect::<Vec<_>>(),
        );
    }

    let per_brand_ap = brands
        .iter()
        .map(|&brand| {
            let aps: Vec<f64> = results
                .iter()
                .filter(|r| r.brand == brand)
                .map(|r| r.ap)
                .collect();
            (brand.to_string(), mean(&aps))
        })
        .collect();

    let mut points = Vec::with_capacity(grid.len());
    let mut curve_std = Vec::with_capacity(grid.len());
    for (g_idx, &fppi) in grid.iter().enumerate() {
        let column: Vec<f64> = iteration_rates.iter().map(|rates| rates[g_idx]).collect();
        points.push(FrocPoint {
            fppi,
            rate: mean(&column),
        });
        curve_std.push(std_dev(&column));
    }
    let mean_curve = FrocCurve {
        points,
        n_images: ground_truth.len(),
        n_ground_truth: brands.iter().map(|b| ground_truth.count_brand(b)).sum(),
    };
    if !mean_curve.is_monotone() {
        return Err(Error::Internal("mean FROC curve is not monotone".into()));
    }

    Ok(EvalReport {
        map: mean(&iteration_maps),
        map_std: std_dev(&iteration_maps),
        iteration_maps,
        per_brand_ap,
        mean_curve,
        curve_std,
        iou_threshold: config.iou_threshold,
        ap_mode: config.ap_mode,
        n_iterations,
        queries: results,
    })
}
