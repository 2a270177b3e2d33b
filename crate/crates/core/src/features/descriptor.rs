//! Deterministic colour-layout descriptor.
//!
//! The region is resampled to a 64x64 grid with nearest-neighbour lookup
//! (`src = x + floor(w * i / 64)`), split into 4x4 cells of 16x16 samples,
//! and each cell gets an 8-bin histogram per RGB channel (`bin = value / 32`).
//! Layout is `[cell row][cell col][channel R,G,B][bin]`, 384 values in all,
//! each histogram normalized by the cell's sample count, then the whole vector
//! is L2-normalized.

use image::RgbImage;

use super::{l2_normalize, FeatureExtractor, FeatureVector, RegionRef};
use crate::error::{Error, Result};
use crate::geometry::BBox;

const RESAMPLED: u32 = 64;
const CELLS: u32 = 4;
const CELL_SIDE: u32 = RESAMPLED / CELLS;
const BINS: usize = 8;
const CHANNELS: usize = 3;

pub const DESCRIPTOR_DIM: usize = (CELLS * CELLS) as usize * CHANNELS * BINS;

pub fn baseline_descriptor(image: &RgbImage, region: BBox) -> Result<FeatureVector> {
    if region.w == 0 || region.h == 0 || !region.fits_within(image.width(), image.height()) {
        return Err(Error::RegionOutOfBounds {
            region: region.to_string(),
            width: image.width(),
            height: image.height(),
        });
    }

    let sample = |start: u32, len: u32, i: u32| start + (u64::from(len) * u64::from(i) / u64::from(RESAMPLED)) as u32;
    let xs: Vec<u32> = (0..RESAMPLED).map(|i| sample(region.x, region.w, i)).collect();
    let ys: Vec<u32> = (0..RESAMPLED).map(|i| sample(region.y, region.h, i)).collect();

    let mut counts = [0u32; DESCRIPTOR_DIM];
    for (gy, &sy) in ys.iter().enumerate() {
        let cell_row = gy as u32 / CELL_SIDE;
        for (gx, &sx) in xs.iter().enumerate() {
            let cell = (cell_row * CELLS + gx as u32 / CELL_SIDE) as usize;
            let pixel = image.get_pixel(sx, sy);
            for (channel, &value) in pixel.0.iter().enumerate() {
                let bin = usize::from(value / 32);
                counts[(cell * CHANNELS + channel) * BINS + bin] += 1;
            }
        }
    }

    let per_cell = f64::from(CELL_SIDE * CELL_SIDE);
    let values = counts.iter().map(|&c| f64::from(c) / per_cell).collect();
    l2_normalize(&FeatureVector::new(values)?)
}

/// [`baseline_descriptor`] as a [`FeatureExtractor`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineDescriptor;

impl FeatureExtractor for BaselineDescriptor {
    fn dim(&self) -> usize {
        DESCRIPTOR_DIM
    }

    fn needs_pixels(&self) -> bool {
        true
    }

    fn extract(&self, region: &RegionRef<'_>, pixels: Option<&RgbImage>) -> Result<FeatureVector> {
        let pixels = pixels.ok_or_else(|| {
            Error::Internal(format!("no pixels supplied for {}", region.image_id))
        })?;
        baseline_descriptor(pixels, region.region)
    }
}
