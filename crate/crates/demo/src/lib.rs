//! Browser demo: box matching, detection FROC and query-by-example ranking on
//! synthetic scenes. Every export takes plain numbers or JSON and returns a
//! JSON string for `www/index.html` to draw.

use image::{Rgb, RgbImage};
use openlogo::dataset::{BrandLabel, Dataset, ImageRecord, Roi};
use openlogo::eval::{average_precision, detection_froc, identification_froc, identification_outcomes};
use openlogo::features::{BaselineDescriptor, RegionRef};
use openlogo::geometry::{greedy_match, iou, BBox};
use openlogo::retrieval::{
    build_index, oracle_detections, query_from_region, Detection, IndexOptions, InMemoryImages,
    QueryOptions,
};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Deserialize)]
struct BoxIn {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    #[serde(default = "one")]
    score: f64,
}

fn one() -> f64 {
    1.0
}

impl BoxIn {
    fn bbox(&self) -> Result<BBox, String> {
        BBox::new(self.x, self.y, self.w, self.h).ok_or_else(|| "boxes need positive size".to_string())
    }
}

#[derive(Serialize)]
struct MatchOut {
    /// `ious[d][g]`
    ious: Vec<Vec<f64>>,
    pairs: Vec<(usize, usize, f64)>,
    false_positives: Vec<usize>,
    misses: Vec<usize>,
}

/// Greedy matching of scored detections against ground-truth boxes.
///
/// Both inputs are JSON arrays of `{x, y, w, h}`; detections may carry `score`.
pub fn match_boxes_json(detections: &str, ground_truths: &str, iou_threshold: f64) -> Result<String, String> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(format!("iou threshold {iou_threshold} outside (0, 1]"));
    }
    let dets: Vec<BoxIn> = serde_json::from_str(detections).map_err(|e| e.to_string())?;
    let gts: Vec<BoxIn> = serde_json::from_str(ground_truths).map_err(|e| e.to_string())?;
    let dets = dets
        .iter()
        .map(|d| Ok((d.bbox()?, d.score)))
        .collect::<Result<Vec<_>, String>>()?;
    let gts = gts.iter().map(BoxIn::bbox).collect::<Result<Vec<_>, _>>()?;

    let result = greedy_match(&dets, &gts, iou_threshold);
    let out = MatchOut {
        ious: dets
            .iter()
            .map(|(d, _)| gts.iter().map(|g| iou(d, g)).collect())
            .collect(),
        pairs: result
            .pairs
            .iter()
            .map(|p| (p.detection, p.ground_truth, p.iou))
            .collect(),
        false_positives: result.unmatched_detections,
        misses: result.unmatched_ground_truths,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct FrocOut {
    points: Vec<(f64, f64)>,
    n_images: usize,
    n_ground_truth: usize,
    n_detections: usize,
    ap: f64,
}

/// Synthetic detector run: every logo is found with localization jitter
/// controlled by `noise`, plus roughly `clutter` false alarms per image.
/// Detector scores of true logos are higher on average than of clutter.
pub fn froc_sweep_json(
    seed: u64,
    n_images: u32,
    noise: f64,
    clutter: f64,
    iou_threshold: f64,
) -> Result<String, String> {
    if n_images == 0 {
        return Err("need at least one image".into());
    }
    let mut rng = SmallRng::seed_from_u64(seed);
    let (width, height) = (320u32, 240u32);
    let mut images = Vec::new();
    let mut detections = Vec::new();
    for i in 0..n_images {
        let id = format!("img{i}");
        let n_logos = rng.gen_range(0..=3);
        let mut rois = Vec::new();
        for _ in 0..n_logos {
            let w = rng.gen_range(20..80);
            let h = rng.gen_range(15..60);
            let x = rng.gen_range(0..width - w);
            let y = rng.gen_range(0..height - h);
            let bbox = BBox::new(x, y, w, h).expect("positive");
            rois.push(Roi {
                bbox,
                label: BrandLabel::graphical("logo").expect("non-empty"),
            });
            let jitter = |rng: &mut SmallRng, v: u32, extent: u32| {
                let d = rng.gen_range(-1.0..1.0) * noise * f64::from(extent);
                (f64::from(v) + d).round().max(0.0) as u32
            };
            let jx = jitter(&mut rng, x, w).min(width - 1);
            let jy = jitter(&mut rng, y, h).min(height - 1);
            let jw = jitter(&mut rng, w, w).clamp(1, width - jx);
            let jh = jitter(&mut rng, h, h).clamp(1, height - jy);
            let score = (0.55 + 0.45 * rng.gen::<f64>() - 0.3 * noise * rng.gen::<f64>()).clamp(0.0, 1.0);
            detections.push(
                Detection::new(&id, BBox::new(jx, jy, jw, jh).expect("positive"), score)
                    .map_err(|e| e.to_string())?,
            );
        }
        let mut n_false = 0;
        while rng.gen::<f64>() < clutter / (1.0 + clutter) && n_false < 20 {
            n_false += 1;
            let w = rng.gen_range(10..60);
            let h = rng.gen_range(10..60);
            let bbox = BBox::new(rng.gen_range(0..width - w), rng.gen_range(0..height - h), w, h).expect("positive");
            let score = 0.7 * rng.gen::<f64>();
            detections.push(Detection::new(&id, bbox, score).map_err(|e| e.to_string())?);
        }
        images.push(ImageRecord {
            image_id: id,
            path: String::new(),
            width,
            height,
            rois,
        });
    }
    let dataset = Dataset::new("synthetic", "", images).map_err(|e| e.to_string())?;
    if dataset.n_rois() == 0 {
        return Err("scene has no logos; try another seed".into());
    }
    let curve = detection_froc(&detections, &dataset, iou_threshold).map_err(|e| e.to_string())?;

    // detection AP: rank by score, relevance from the same greedy matching
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    let mut hit = vec![false; detections.len()];
    for image in dataset.images() {
        let idxs: Vec<usize> = (0..detections.len())
            .filter(|&i| detections[i].image_id == image.image_id)
            .collect();
        let dets: Vec<_> = idxs.iter().map(|&i| (detections[i].bbox, detections[i].score)).collect();
        let gts: Vec<_> = image.rois.iter().map(|r| r.bbox).collect();
        let flags = greedy_match(&dets, &gts, iou_threshold).detection_flags(dets.len());
        for (&i, f) in idxs.iter().zip(flags) {
            hit[i] = f;
        }
    }
    let ranked: Vec<bool> = order.iter().map(|&i| hit[i]).collect();
    let ap = average_precision(&ranked, dataset.n_rois()).map_err(|e| e.to_string())?;

    serde_json::to_string(&FrocOut {
        points: curve.points.iter().map(|p| (p.fppi, p.rate)).collect(),
        n_images: curve.n_images,
        n_ground_truth: curve.n_ground_truth,
        n_detections: detections.len(),
        ap,
    })
    .map_err(|e| e.to_string())
}

/// Logo palette: (primary, secondary) colour per brand.
pub const BRAND_COLORS: [([u8; 3], [u8; 3]); 5] = [
    ([220, 30, 30], [250, 250, 250]),
    ([20, 60, 200], [240, 200, 20]),
    ([20, 150, 40], [10, 10, 10]),
    ([240, 120, 0], [40, 40, 120]),
    ([140, 20, 160], [160, 230, 230]),
];

fn brand_name(k: usize) -> String {
    format!("brand{k}")
}

/// Draws brand `k`'s logo pattern into `region` of `img`.
fn paint_logo(img: &mut RgbImage, region: BBox, k: usize) {
    let (fg, bg) = BRAND_COLORS[k];
    for dy in 0..region.h {
        for dx in 0..region.w {
            // pattern in logo-relative units so every scale looks alike
            let u = dx * 8 / region.w;
            let v = dy * 8 / region.h;
            let on = match k % 5 {
                0 => u.is_multiple_of(2),
                1 => (u + v).is_multiple_of(2),
                2 => v < 4,
                3 => u.abs_diff(4) + v.abs_diff(4) < 4,
                _ => u == v || u + v == 7,
            };
            img.put_pixel(region.x + dx, region.y + dy, Rgb(if on { fg } else { bg }));
        }
    }
}

#[derive(Serialize)]
struct RankedOut {
    image_id: String,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    brand: String,
    similarity: f64,
    correct: bool,
}

#[derive(Serialize)]
struct RetrievalOut {
    query_brand: String,
    brand_colors: Vec<([u8; 3], [u8; 3])>,
    results: Vec<RankedOut>,
    ap: f64,
    froc: Vec<(f64, f64)>,
    n_relevant: usize,
}

/// Indexes a synthetic set of scenes (oracle detections, colour-layout
/// descriptor) and queries it with a clean rendering of one brand.
///
/// `noise` adds per-pixel colour noise to the scenes, so identical logos stop
/// matching exactly.
pub fn retrieval_json(
    seed: u64,
    query_brand: usize,
    noise: f64,
    min_similarity: f64,
    top_k: usize,
) -> Result<String, String> {
    if query_brand >= BRAND_COLORS.len() {
        return Err(format!("brand index must be below {}", BRAND_COLORS.len()));
    }
    let mut rng = SmallRng::seed_from_u64(seed);
    let (width, height) = (160u32, 120u32);
    let mut records = Vec::new();
    let mut pixels = InMemoryImages::new();
    for i in 0..24 {
        let id = format!("scene{i}");
        let mut img = RgbImage::from_fn(width, height, |x, y| Rgb([(90 + x / 4) as u8, (110 + y / 4) as u8, 120]));
        let mut rois = Vec::new();
        // up to two logos, left and right half, so they never overlap
        for half in 0..2u32 {
            if rng.gen::<f64>() < 0.25 {
                continue;
            }
            let k = rng.gen_range(0..BRAND_COLORS.len());
            let w = rng.gen_range(24..64);
            let h = rng.gen_range(16..48);
            let x = half * 80 + rng.gen_range(0..80 - w.min(79));
            let y = rng.gen_range(0..height - h);
            let bbox = BBox::new(x, y, w.min(80 - (x - half * 80)), h).expect("positive");
            paint_logo(&mut img, bbox, k);
            rois.push(Roi {
                bbox,
                label: BrandLabel::graphical(&brand_name(k)).expect("non-empty"),
            });
        }
        if noise > 0.0 {
            for p in img.pixels_mut() {
                for c in p.0.iter_mut() {
                    let d = rng.gen_range(-1.0..1.0) * noise * 255.0;
                    *c = (f64::from(*c) + d).clamp(0.0, 255.0) as u8;
                }
            }
        }
        pixels.insert(id.clone(), img);
        records.push(ImageRecord {
            image_id: id,
            path: String::new(),
            width,
            height,
            rois,
        });
    }
    let dataset = Dataset::new("scenes", "", records).map_err(|e| e.to_string())?;
    let brand = brand_name(query_brand);
    let n_relevant = dataset.count_brand(&brand);
    if n_relevant == 0 {
        return Err(format!("{brand} does not appear in this scene set; try another seed"));
    }
    let index = build_index(
        &dataset,
        &oracle_detections(&dataset),
        &pixels,
        &BaselineDescriptor,
        IndexOptions::default(),
    )
    .map_err(|e| e.to_string())?;

    let mut query_img = RgbImage::new(48, 32);
    let query_box = BBox::new(0, 0, 48, 32).expect("positive");
    paint_logo(&mut query_img, query_box, query_brand);
    let region = RegionRef {
        image_id: "query",
        roi_index: 0,
        region: query_box,
    };
    let options = QueryOptions {
        min_similarity,
        top_k: (top_k > 0).then_some(top_k),
    };
    let all = query_from_region(&index, &region, Some(&query_img), &BaselineDescriptor, QueryOptions::default())
        .map_err(|e| e.to_string())?;
    let flags = identification_outcomes(&all, &dataset, &brand, 0.5).map_err(|e| e.to_string())?;
    let ap = average_precision(&flags, n_relevant).map_err(|e| e.to_string())?;
    let froc = identification_froc(&all, &dataset, &brand, 0.5).map_err(|e| e.to_string())?;

    let shown = query_from_region(&index, &region, Some(&query_img), &BaselineDescriptor, options)
        .map_err(|e| e.to_string())?;
    let brand_at = |m: &openlogo::retrieval::RankedMatch<'_>| {
        let d = &m.entry.detection;
        dataset
            .image(&d.image_id)
            .and_then(|img| img.rois.iter().find(|r| r.bbox == d.bbox))
            .map(|r| r.brand().to_string())
            .unwrap_or_default()
    };
    // filtered results are a prefix of the full ranking
    let results = shown
        .iter()
        .zip(&flags)
        .map(|(m, &correct)| RankedOut {
            image_id: m.entry.detection.image_id.clone(),
            x: m.entry.detection.bbox.x,
            y: m.entry.detection.bbox.y,
            w: m.entry.detection.bbox.w,
            h: m.entry.detection.bbox.h,
            brand: brand_at(m),
            similarity: m.similarity,
            correct,
        })
        .collect();

    serde_json::to_string(&RetrievalOut {
        query_brand: brand,
        brand_colors: BRAND_COLORS.to_vec(),
        results,
        ap,
        froc: froc.points.iter().map(|p| (p.fppi, p.rate)).collect(),
        n_relevant,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn match_boxes(detections: &str, ground_truths: &str, iou_threshold: f64) -> Result<String, JsError> {
    match_boxes_json(detections, ground_truths, iou_threshold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn froc_sweep(seed: u32, n_images: u32, noise: f64, clutter: f64, iou_threshold: f64) -> Result<String, JsError> {
    froc_sweep_json(u64::from(seed), n_images, noise, clutter, iou_threshold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn retrieval(seed: u32, query_brand: u32, noise: f64, min_similarity: f64, top_k: u32) -> Result<String, JsError> {
    retrieval_json(u64::from(seed), query_brand as usize, noise, min_similarity, top_k as usize)
        .map_err(|e| JsError::new(&e))
}
