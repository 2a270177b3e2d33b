#![allow(dead_code)]

use image::{Rgb, RgbImage};
use openlogo::dataset::{BrandLabel, Dataset, ImageRecord, Roi};
use openlogo::geometry::BBox;
use openlogo::retrieval::InMemoryImages;

pub const LOGO_W: u32 = 24;
pub const LOGO_H: u32 = 16;
pub const GAP: u32 = 8;

pub fn roi(x: u32, y: u32, w: u32, h: u32, brand: &str) -> Roi {
    Roi {
        bbox: BBox::new(x, y, w, h).unwrap(),
        label: BrandLabel::graphical(brand).unwrap(),
    }
}

pub fn image(id: &str, width: u32, height: u32, rois: Vec<Roi>) -> ImageRecord {
    ImageRecord {
        image_id: id.to_string(),
        path: format!("{id}.png"),
        width,
        height,
        rois,
    }
}

pub fn brand_name(k: usize) -> String {
    format!("brand{k:02}")
}

/// Two-colour pattern for brand `k`. The foreground colour falls in a
/// different histogram bin triple for every `k < 64`.
pub fn paint_logo(img: &mut RgbImage, at: BBox, k: usize) {
    let fg = [32 * (k % 8) as u8 + 16, 32 * ((k / 8) % 8) as u8 + 16, 208];
    let bg = [240, 240 - 32 * (k % 3) as u8, 16];
    for dy in 0..at.h {
        for dx in 0..at.w {
            let (u, v) = (dx * 4 / at.w, dy * 4 / at.h);
            let on = match k % 4 {
                0 => u % 2 == 0,
                1 => (u + v) % 2 == 0,
                2 => v < 2,
                _ => u == v,
            };
            img.put_pixel(at.x + dx, at.y + dy, Rgb(if on { fg } else { bg }));
        }
    }
}

/// One row of `per_image` equal-size logos per image; the `n`-th logo overall
/// belongs to brand `n % n_brands`. Every crop of a brand is pixel-identical.
pub fn logo_scenes(n_images: usize, per_image: usize, n_brands: usize) -> (Dataset, InMemoryImages) {
    let width = per_image as u32 * (LOGO_W + GAP) + LOGO_W;
    let height = LOGO_H + 2 * GAP;
    let mut records = Vec::with_capacity(n_images);
    let mut pixels = InMemoryImages::new();
    for i in 0..n_images {
        let id = format!("img{i:05}");
        let mut img = RgbImage::from_pixel(width, height, Rgb([128, 128, 128]));
        let mut rois = Vec::new();
        for j in 0..per_image {
            let k = (i * per_image + j) % n_brands;
            let at = BBox::new(GAP + j as u32 * (LOGO_W + GAP), GAP, LOGO_W, LOGO_H).unwrap();
            paint_logo(&mut img, at, k);
            rois.push(Roi {
                bbox: at,
                label: BrandLabel::graphical(&brand_name(k)).unwrap(),
            });
        }
        pixels.insert(id.clone(), img);
        records.push(image(&id, width, height, rois));
    }
    (Dataset::new("scenes", "1", records).unwrap(), pixels)
}

/// Brute-force uninterpolated AP: precision at every relevant rank, each
/// recounted from scratch.
pub fn ap_oracle(flags: &[bool], n_relevant: usize) -> f64 {
    let mut sum = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let mut hits = 0usize;
            for f in &flags[..=k] {
                if *f {
                    hits += 1;
                }
            }
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / n_relevant as f64
}

/// IoU by counting covered unit pixels on the integer grid.
pub fn iou_oracle(a: BBox, b: BBox) -> f64 {
    let x0 = a.x.min(b.x);
    let y0 = a.y.min(b.y);
    let x1 = (a.x + a.w).max(b.x + b.w);
    let y1 = (a.y + a.h).max(b.y + b.h);
    let inside = |r: BBox, x: u32, y: u32| x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h;
    let (mut inter, mut union) = (0u64, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    inter as f64 / union as f64
}
