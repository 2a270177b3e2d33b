//! Free-response ROC curves: hit rate against false positives per image,
//! swept over a score threshold.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{greedy_match, BBox};
use crate::retrieval::{Detection, RankedMatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrocPoint {
    pub fppi: f64,
    pub rate: f64,
}

/// Points are sorted by `fppi` ascending with non-decreasing `rate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    pub n_images: usize,
    pub n_ground_truth: usize,
}

impl FrocCurve {
    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[0].fppi <= w[1].fppi && w[0].rate <= w[1].rate)
    }
}

/// Rate of the last point whose fppi does not exceed `fppi`; 0 if none does.
pub fn operating_point(curve: &FrocCurve, fppi: f64) -> f64 {
    curve
        .points
        .iter()
        .take_while(|p| p.fppi <= fppi)
        .last()
        .map_or(0.0, |p| p.rate)
}

/// Turns per-detection outcomes into a curve with one point per distinct
/// score, highest score first.
///
/// Greedy matching visits detections in score order, so the outcome of a
/// detection does not change when lower-scored ones are dropped; a single
/// matching pass therefore serves every threshold.
fn sweep(mut outcomes: Vec<(f64, bool)>, n_images: usize, n_ground_truth: usize) -> FrocCurve {
    outcomes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(score, hit)) in outcomes.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = outcomes
            .get(i + 1)
            .is_none_or(|next| next.0.total_cmp(&score) != Ordering::Equal);
        if group_ends {
            points.push(FrocPoint {
                fppi: fp as f64 / n_images as f64,
                rate: tp as f64 / n_ground_truth as f64,
            });
        }
    }
    if points.is_empty() {
        points.push(FrocPoint {
            fppi: 0.0,
            rate: 0.0,
        });
    }
    FrocCurve {
        points,
        n_images,
        n_ground_truth,
    }
}

/// Groups item indices by image id, keeping input order inside each group.
fn by_image<'a>(ids: impl Iterator<Item = &'a str>) -> HashMap<&'a str, Vec<usize>> {
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, id) in ids.enumerate() {
        groups.entry(id).or_default().push(i);
    }
    groups
}

/// Class-agnostic detection FROC over every ground-truth RoI.
///
/// Distractor images count towards the per-image denominator.
pub fn detection_froc(
    detections: &[Detection],
    ground_truth: &Dataset,
    iou_threshold: f64,
) -> Result<FrocCurve> {
    check_iou_threshold(iou_threshold)?;
    let n_gt = ground_truth.n_rois();
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let records: HashMap<&str, _> = ground_truth
        .images()
        .iter()
        .map(|r| (r.image_id.as_str(), r))
        .collect();

    let mut outcomes = vec![(0.0, false); detections.len()];
    for (image_id, idxs) in by_image(detections.iter().map(|d| d.image_id.as_str())) {
        let record = records
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))?;
        let dets: Vec<(BBox, f64)> = idxs
            .iter()
            .map(|&i| (detections[i].bbox, detections[i].score))
            .collect();
        let gts: Vec<BBox> = record.rois.iter().map(|r| r.bbox).collect();
        let flags = greedy_match(&dets, &gts, iou_threshold).detection_flags(dets.len());
        for (&i, hit) in idxs.iter().zip(flags) {
            outcomes[i] = (detections[i].score, hit);
        }
    }
    Ok(sweep(outcomes, ground_truth.len(), n_gt))
}

/// For each ranked match: does it localize a ground-truth RoI of
/// `query_brand` under greedy matching by similarity?
///
/// A match on another brand's logo is not a hit.
pub fn identification_outcomes(
    matches: &[RankedMatch<'_>],
    ground_truth: &Dataset,
    query_brand: &str,
    iou_threshold: f64,
) -> Result<Vec<bool>> {
    check_iou_threshold(iou_threshold)?;
    if ground_truth.count_brand(query_brand) == 0 {
        return Err(Error::BrandNotInGroundTruth(query_brand.to_string()));
    }
    let records: HashMap<&str, _> = ground_truth
        .images()
        .iter()
        .map(|r| (r.image_id.as_str(), r))
        .collect();

    let mut flags = vec![false; matches.len()];
    for (image_id, idxs) in by_image(matches.iter().map(|m| m.entry.detection.image_id.as_str())) {
        let record = records
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))?;
        let gts: Vec<BBox> = record.boxes_of_brand(query_brand).collect();
        if gts.is_empty() {
            continue;
        }
        let dets: Vec<(BBox, f64)> = idxs
            .iter()
            .map(|&i| (matches[i].entry.detection.bbox, matches[i].similarity))
            .collect();
        let hits = greedy_match(&dets, &gts, iou_threshold).detection_flags(dets.len());
        for (&i, hit) in idxs.iter().zip(hits) {
            flags[i] = hit;
        }
    }
    Ok(flags)
}

/// Detection+identification FROC for one query, swept over similarity.
///
/// The rate denominator is the number of `query_brand` RoIs.
pub fn identification_froc(
    matches: &[RankedMatch<'_>],
    ground_truth: &Dataset,
    query_brand: &str,
    iou_threshold: f64,
) -> Result<FrocCurve> {
    let flags = identification_outcomes(matches, ground_truth, query_brand, iou_threshold)?;
    Ok(identification_curve(matches, &flags, ground_truth, query_brand))
}

pub(crate) fn identification_curve(
    matches: &[RankedMatch<'_>],
    flags: &[bool],
    ground_truth: &Dataset,
    query_brand: &str,
) -> FrocCurve {
    let outcomes = matches
        .iter()
        .zip(flags)
        .map(|(m, &hit)| (m.similarity, hit))
        .collect();
    sweep(
        outcomes,
        ground_truth.len(),
        ground_truth.count_brand(query_brand),
    )
}

pub(crate) fn check_iou_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "iou_threshold",
            value: t,
            range: "(0, 1]",
        })
    }
}

/// Writes `fppi,rate` rows, or `fppi,rate,std` when `std` is given.
pub fn write_curve_csv(curve: &FrocCurve, std: Option<&[f64]>, mut out: impl Write) -> std::io::Result<()> {
    if let Some(std) = std {
        writeln!(out, "fppi,rate,std")?;
        for (p, s) in curve.points.iter().zip(std) {
            writeln!(out, "{},{},{}", p.fppi, p.rate, s)?;
        }
    } else {
        writeln!(out, "fppi,rate")?;
        for p in &curve.points {
            writeln!(out, "{},{}", p.fppi, p.rate)?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BrandLabel, ImageRecord, Roi};
    use crate::features::FeatureVector;
    use crate::retrieval::{oracle_detections, IndexEntry};

    fn bbox(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn image(id: &str, rois: &[(BBox, &str)]) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            path: format!("{id}.png"),
            width: 100,
            height: 100,
            rois: rois
                .iter()
                .map(|&(bbox, brand)| Roi {
                    bbox,
                    label: BrandLabel::graphical(brand).unwrap(),
                })
                .collect(),
        }
    }

    fn det(id: &str, b: BBox, score: f64) -> Detection {
        Detection::new(id, b, score).unwrap()
    }

    fn pts(curve: &FrocCurve) -> Vec<(f64, f64)> {
        curve.points.iter().map(|p| (p.fppi, p.rate)).collect()
    }

    fn two_image_gt() -> Dataset {
        Dataset::new(
            "gt",
            "",
            vec![
                image("img1", &[(bbox(10, 10, 20, 20), "a")]),
                image("img2", &[(bbox(50, 50, 20, 20), "a")]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn hand_enumerated_three_thresholds() {
        let gt = two_image_gt();
        let dets = [
            det("img1", bbox(10, 10, 20, 20), 0.9),
            det("img1", bbox(70, 0, 10, 10), 0.8),
            det("img2", bbox(50, 50, 20, 20), 0.5),
        ];
        let curve = detection_froc(&dets, &gt, 0.5).unwrap();
        assert_eq!(pts(&curve), [(0.0, 0.5), (0.5, 0.5), (0.5, 1.0)]);
        assert_eq!(operating_point(&curve, 0.5), 1.0);
        assert_eq!(operating_point(&curve, 0.01), 0.5);
    }

    #[test]
    fn oracle_is_single_perfect_point() {
        let gt = two_image_gt();
        let curve = detection_froc(&oracle_detections(&gt), &gt, 0.5).unwrap();
        assert_eq!(pts(&curve), [(0.0, 1.0)]);
    }

    #[test]
    fn no_detections_is_origin() {
        let curve = detection_froc(&[], &two_image_gt(), 0.5).unwrap();
        assert_eq!(pts(&curve), [(0.0, 0.0)]);
    }

    #[test]
    fn distractors_count_in_denominator() {
        let gt = Dataset::new(
            "gt",
            "",
            vec![
                image("img1", &[(bbox(10, 10, 20, 20), "a")]),
                image("d1", &[]),
                image("d2", &[]),
                image("d3", &[]),
            ],
        )
        .unwrap();
        let curve = detection_froc(&[det("d1", bbox(0, 0, 5, 5), 0.3)], &gt, 0.5).unwrap();
        assert_eq!(pts(&curve), [(0.25, 0.0)]);
    }

    #[test]
    fn errors() {
        let empty = Dataset::new("e", "", vec![image("x", &[])]).unwrap();
        assert!(matches!(detection_froc(&[], &empty, 0.5), Err(Error::NoGroundTruth)));
        let gt = two_image_gt();
        assert!(matches!(
            detection_froc(&[det("nope", bbox(0, 0, 1, 1), 0.1)], &gt, 0.5),
            Err(Error::UnknownImage(_))
        ));
        assert!(detection_froc(&[], &gt, 0.0).is_err());
        assert!(detection_froc(&[], &gt, 1.5).is_err());
    }

    #[test]
    fn operating_point_step_lookup() {
        let curve = FrocCurve {
            points: vec![
                FrocPoint { fppi: 0.0, rate: 0.5 },
                FrocPoint { fppi: 0.5, rate: 1.0 },
            ],
            n_images: 2,
            n_ground_truth: 2,
        };
        assert_eq!(operating_point(&curve, 0.01), 0.5);
        let late = FrocCurve {
            points: vec![FrocPoint { fppi: 0.2, rate: 0.7 }],
            n_images: 5,
            n_ground_truth: 1,
        };
        assert_eq!(operating_point(&late, 0.1), 0.0);
        assert_eq!(operating_point(&late, 0.2), 0.7);
    }

    fn entry(id: &str, b: BBox) -> IndexEntry {
        IndexEntry {
            detection: det(id, b, 1.0),
            roi_index: 0,
            feature: FeatureVector::new(vec![1.0]).unwrap(),
        }
    }

    #[test]
    fn identification_hand_case() {
        // 4 images, 2 GTs of brand "q", one GT of brand "other"
        let gt = Dataset::new(
            "gt",
            "",
            vec![
                image("i1", &[(bbox(0, 0, 10, 10), "q")]),
                image("i2", &[(bbox(0, 0, 10, 10), "q")]),
                image("i3", &[(bbox(0, 0, 10, 10), "other")]),
                image("i4", &[]),
            ],
        )
        .unwrap();
        let e_ok = entry("i1", bbox(0, 0, 10, 10));
        let e_wrong = entry("i3", bbox(0, 0, 10, 10));
        let matches = [
            RankedMatch { entry: &e_ok, position: 0, similarity: 0.9 },
            RankedMatch { entry: &e_wrong, position: 1, similarity: 0.8 },
        ];
        let curve = identification_froc(&matches, &gt, "q", 0.5).unwrap();
        assert_eq!(pts(&curve), [(0.0, 0.5), (0.25, 0.5)]);
        assert_eq!(
            identification_outcomes(&matches, &gt, "q", 0.5).unwrap(),
            [true, false]
        );

        let none = identification_froc(&[], &gt, "q", 0.5).unwrap();
        assert_eq!(pts(&none), [(0.0, 0.0)]);

        assert!(matches!(
            identification_froc(&matches, &gt, "absent", 0.5),
            Err(Error::BrandNotInGroundTruth(_))
        ));
    }

    #[test]
    fn identification_full_coverage() {
        let gt = Dataset::new(
            "gt",
            "",
            vec![
                image("i1", &[(bbox(0, 0, 10, 10), "q"), (bbox(20, 20, 10, 10), "q")]),
                image("i2", &[(bbox(0, 0, 10, 10), "q")]),
            ],
        )
        .unwrap();
        let entries = [
            entry("i1", bbox(0, 0, 10, 10)),
            entry("i1", bbox(20, 20, 10, 10)),
            entry("i2", bbox(0, 0, 10, 10)),
        ];
        let matches: Vec<_> = entries
            .iter()
            .enumerate()
            .map(|(i, e)| RankedMatch { entry: e, position: i, similarity: 0.9 - i as f64 * 0.1 })
            .collect();
        let curve = identification_froc(&matches, &gt, "q", 0.5).unwrap();
        assert_eq!(curve.points.last().unwrap().rate, 1.0);
        assert!(curve.is_monotone());
    }

    #[test]
    fn curve_csv() {
        let curve = FrocCurve {
            points: vec![FrocPoint { fppi: 0.0, rate: 0.5 }, FrocPoint { fppi: 0.25, rate: 1.0 }],
            n_images: 4,
            n_ground_truth: 2,
        };
        let mut buf = Vec::new();
        write_curve_csv(&curve, None, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fppi,rate\n0,0.5\n0.25,1\n");
        let mut buf = Vec::new();
        write_curve_csv(&curve, Some(&[0.0, 0.125]), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fppi,rate,std\n0,0.5,0\n0.25,1,0.125\n");
    }
}
