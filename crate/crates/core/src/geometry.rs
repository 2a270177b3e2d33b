//! Box overlap and greedy detection-to-ground-truth assignment.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// IoU threshold used when a caller does not pick one.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Axis-aligned pixel box: top-left corner `(x, y)` plus extent.
///
/// Covers the half-open pixel ranges `x..x + w` and `y..y + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    /// Returns `None` for a degenerate box.
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Option<Self> {
        (w > 0 && h > 0).then_some(Self { x, y, w, h })
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    pub fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= u64::from(width) && self.bottom() <= u64::from(height)
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x.max(other.x) as u64;
        let y0 = self.y.max(other.y) as u64;
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        x1.saturating_sub(x0) * y1.saturating_sub(y0)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

/// Intersection over union. Zero for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Outcome of [`greedy_match`].
///
/// Pairs are listed in the order detections were processed (score
/// descending). The unmatched lists are sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.pairs.len()
    }

    pub fn false_positives(&self) -> usize {
        self.unmatched_detections.len()
    }

    /// Per-detection flag: `true` if the detection was paired.
    pub fn detection_flags(&self, n_detections: usize) -> Vec<bool> {
        let mut flags = vec![false; n_detections];
        for pair in &self.pairs {
            flags[pair.detection] = true;
        }
        flags
    }
}

/// Order in which [`greedy_match`] visits detections: score descending,
/// ties by input index.
pub fn score_order(scores: impl ExactSizeIterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    order
}

/// Greedy assignment by detection score.
///
/// Each detection, highest score first, takes the still-unmatched ground
/// truth it overlaps most (lowest index on ties) if that overlap reaches
/// `iou_threshold`; otherwise it is a false positive. Ground truths left over
/// are misses.
pub fn greedy_match(
    detections: &[(BBox, f64)],
    ground_truths: &[BBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut taken = vec![false; ground_truths.len()];
    let mut result = MatchResult::default();

    for det_idx in score_order(detections.iter().map(|(_, s)| *s)) {
        let det_box = &detections[det_idx].0;
        let mut best: Option<(usize, f64)> = None;
        for (gt_idx, gt) in ground_truths.iter().enumerate() {
            if taken[gt_idx] {
                continue;
            }
            let overlap = iou(det_box, gt);
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gt_idx, overlap));
            }
        }
        match best {
            Some((gt_idx, overlap)) if overlap >= iou_threshold => {
                taken[gt_idx] = true;
                result.pairs.push(MatchPair {
                    detection: det_idx,
                    ground_truth: gt_idx,
                    iou: overlap,
                });
            }
            _ => result.unmatched_detections.push(det_idx),
        }
    }

    result.unmatched_detections.sort_unstable();
    result.unmatched_ground_truths = taken
        .iter()
        .enumerate()
        .filter(|(_, &t)| !t)
        .map(|(i, _)| i)
        .collect();
    result
}
