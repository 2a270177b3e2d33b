//! Exhaustive cosine-similarity index over detected logos.
//!
//! File layout: one JSON header line, then the embedding table body.
//!
//! ```text
//! {"dataset":"test","version":"","dim":3,"count":1,"detections":[{"image_id":"a","roi_index":0,"x":1,"y":2,"w":3,"h":4,"score":1.0}]}
//! dim=3
//! a,0,0.6,0.8,0
//! ```

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::detections::Detection;
use super::source::ImageSource;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{
    l2_normalize, parse_embeddings, write_embeddings, EmbeddingTable, FeatureExtractor,
    FeatureVector, RegionRef,
};
use crate::geometry::BBox;

const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub detection: Detection,
    /// Position of the detection among its image's detections as provided.
    pub roi_index: usize,
    /// Unit-norm feature.
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub dataset_name: String,
    pub dataset_version: String,
    dim: usize,
    entries: Vec<IndexEntry>,
}

impl Index {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entries sorted by image id, then by `roi_index`.
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IndexOptions {
    /// Detections scoring below this are not indexed. Off by default.
    pub min_detector_score: Option<f64>,
}

/// Extracts and normalizes a feature for every detection.
///
/// Detections are grouped by image id (byte order), keeping their input order
/// within an image; `roi_index` counts that order before any score filtering.
pub fn build_index(
    dataset: &Dataset,
    detections: &[Detection],
    images: &dyn ImageSource,
    extractor: &dyn FeatureExtractor,
    options: IndexOptions,
) -> Result<Index> {
    let records: HashMap<&str, _> = dataset
        .images()
        .iter()
        .map(|r| (r.image_id.as_str(), r))
        .collect();
    for d in detections {
        let record = records
            .get(d.image_id.as_str())
            .ok_or_else(|| Error::UnknownImage(d.image_id.clone()))?;
        if !d.bbox.fits_within(record.width, record.height) {
            return Err(Error::RegionOutOfBounds {
                region: d.bbox.to_string(),
                width: record.width,
                height: record.height,
            });
        }
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[a].image_id.cmp(&detections[b].image_id));

    let dim = extractor.dim();
    let mut entries = Vec::with_capacity(detections.len());
    for group in order.chunk_by(|&a, &b| detections[a].image_id == detections[b].image_id) {
        let image_id = detections[group[0]].image_id.as_str();
        let kept: Vec<(usize, &Detection)> = group
            .iter()
            .map(|&i| &detections[i])
            .enumerate()
            .filter(|(_, d)| options.min_detector_score.is_none_or(|min| d.score >= min))
            .collect();
        if kept.is_empty() {
            continue;
        }
        let pixels = if extractor.needs_pixels() {
            Some(images.load(records[image_id])?)
        } else {
            None
        };
        for (roi_index, detection) in kept {
            let region = RegionRef {
                image_id,
                roi_index,
                region: detection.bbox,
            };
            let raw = extractor.extract(&region, pixels.as_ref())?;
            if raw.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: raw.dim(),
                });
            }
            entries.push(IndexEntry {
                detection: detection.clone(),
                roi_index,
                feature: l2_normalize(&raw)?,
            });
        }
    }

    Ok(Index {
        dataset_name: dataset.name.clone(),
        dataset_version: dataset.version.clone(),
        dim,
        entries,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct QueryOptions {
    pub min_similarity: f64,
    pub top_k: Option<usize>,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            min_similarity: -1.0,
            top_k: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedMatch<'a> {
    pub entry: &'a IndexEntry,
    /// Position of `entry` in [`Index::entries`]; breaks similarity ties.
    pub position: usize,
    pub similarity: f64,
}

/// Ranks every entry against `query_feature` by cosine similarity.
///
/// Results are sorted by similarity descending, ties in index order, then
/// filtered by `min_similarity` and cut to `top_k`.
pub fn query<'a>(
    index: &'a Index,
    query_feature: &FeatureVector,
    options: QueryOptions,
) -> Result<Vec<RankedMatch<'a>>> {
    if !(-1.0..=1.0).contains(&options.min_similarity) {
        return Err(Error::OutOfRange {
            name: "min_similarity",
            value: options.min_similarity,
            range: "[-1, 1]",
        });
    }
    if query_feature.dim() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            actual: query_feature.dim(),
        });
    }
    let q = l2_normalize(query_feature)?;

    let mut matches: Vec<RankedMatch<'a>> = index
        .entries
        .iter()
        .enumerate()
        .filter_map(|(position, entry)| {
            let similarity = q.dot_unchecked(&entry.feature).clamp(-1.0, 1.0);
            (similarity >= options.min_similarity).then_some(RankedMatch {
                entry,
                position,
                similarity,
            })
        })
        .collect();
    matches.sort_by(|a, b| match b.similarity.total_cmp(&a.similarity) {
        Ordering::Equal => a.position.cmp(&b.position),
        other => other,
    });
    if let Some(k) = options.top_k {
        matches.truncate(k);
    }
    Ok(matches)
}

/// Describes `region` with `extractor`, then runs [`query`].
pub fn query_from_region<'a>(
    index: &'a Index,
    region: &RegionRef<'_>,
    pixels: Option<&RgbImage>,
    extractor: &dyn FeatureExtractor,
    options: QueryOptions,
) -> Result<Vec<RankedMatch<'a>>> {
    let feature = extractor.extract(region, pixels)?;
    query(index, &feature, options)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexHeader {
    dataset: String,
    version: String,
    dim: usize,
    count: usize,
    detections: Vec<HeaderDetection>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderDetection {
    image_id: String,
    roi_index: usize,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    score: f64,
}

pub fn write_index(index: &Index, mut out: impl Write) -> Result<()> {
    let header = IndexHeader {
        dataset: index.dataset_name.clone(),
        version: index.dataset_version.clone(),
        dim: index.dim,
        count: index.entries.len(),
        detections: index
            .entries
            .iter()
            .map(|e| HeaderDetection {
                image_id: e.detection.image_id.clone(),
                roi_index: e.roi_index,
                x: e.detection.bbox.x,
                y: e.detection.bbox.y,
                w: e.detection.bbox.w,
                h: e.detection.bbox.h,
                score: e.detection.score,
            })
            .collect(),
    };
    let io_err = |e: std::io::Error| Error::io("<index>", e);
    serde_json::to_writer(&mut out, &header).map_err(|e| Error::Internal(e.to_string()))?;
    out.write_all(b"\n").map_err(io_err)?;

    let mut table = EmbeddingTable::new(index.dim)?;
    for e in &index.entries {
        table.insert(&e.detection.image_id, e.roi_index, e.feature.clone())?;
    }
    write_embeddings(&table, out)
}

pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_index(index, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_index(text: &str) -> Result<Index> {
    let (head, body) = text.split_once('\n').unwrap_or((text, ""));
    let header: IndexHeader = serde_json::from_str(head).map_err(|e| Error::parse(1, e))?;
    if header.count != header.detections.len() {
        return Err(Error::parse(
            1,
            format!(
                "count {} but {} detections listed",
                header.count,
                header.detections.len()
            ),
        ));
    }
    let table = parse_embeddings(body.as_bytes(), 2)?;
    if table.dim() != header.dim {
        return Err(Error::DimensionMismatch {
            expected: header.dim,
            actual: table.dim(),
        });
    }
    if table.len() != header.count {
        return Err(Error::parse(
            2,
            format!("{} embeddings for {} detections", table.len(), header.count),
        ));
    }

    let entries = header
        .detections
        .into_iter()
        .map(|h| {
            let feature = table.get(&h.image_id, h.roi_index).ok_or_else(|| {
                Error::MissingEmbedding {
                    image_id: h.image_id.clone(),
                    roi_index: h.roi_index,
                }
            })?;
            if (feature.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::parse(
                    2,
                    format!("feature {}#{} is not unit norm", h.image_id, h.roi_index),
                ));
            }
            let bbox = BBox::new(h.x, h.y, h.w, h.h)
                .ok_or_else(|| Error::parse(1, format!("degenerate box for {}", h.image_id)))?;
            Ok(IndexEntry {
                detection: Detection::new(h.image_id, bbox, h.score)
                    .map_err(|e| Error::parse(1, e))?,
                roi_index: h.roi_index,
                feature: feature.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sorted = entries.windows(2).all(|w| {
        (&w[0].detection.image_id, w[0].roi_index) < (&w[1].detection.image_id, w[1].roi_index)
    });
    if !sorted {
        return Err(Error::parse(1, "detections are not in (image_id, roi_index) order"));
    }

    Ok(Index {
        dataset_name: header.dataset,
        dataset_version: header.version,
        dim: header.dim,
        entries,
    })
}

pub fn load_index(path: &Path) -> Result<Index> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_index(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{BrandLabel, ImageRecord, Roi};
    use crate::features::{BaselineDescriptor, EmbeddingTable};
    use crate::retrieval::{oracle_detections, InMemoryImages};
    use image::Rgb;

    fn bbox(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    /// Index over 2-D unit vectors at the given angles (degrees), one image each.
    fn angle_index(angles: &[f64]) -> Index {
        let mut table = EmbeddingTable::new(2).unwrap();
        let mut images = Vec::new();
        let mut dets = Vec::new();
        for (i, deg) in angles.iter().enumerate() {
            let id = format!("img{i}");
            let r = deg.to_radians();
            table.insert(&id, 0, fv(&[r.cos(), r.sin()])).unwrap();
            images.push(ImageRecord {
                image_id: id.clone(),
                path: String::new(),
                width: 10,
                height: 10,
                rois: vec![],
            });
            dets.push(Detection::new(id, bbox(0, 0, 5, 5), 0.5).unwrap());
        }
        let ds = Dataset::new("angles", "1", images).unwrap();
        build_index(&ds, &dets, &InMemoryImages::new(), &table, IndexOptions::default()).unwrap()
    }

    #[test]
    fn empty_index() {
        let idx = build_index(
            &Dataset::empty("e"),
            &[],
            &InMemoryImages::new(),
            &BaselineDescriptor,
            IndexOptions::default(),
        )
        .unwrap();
        assert!(idx.is_empty());
        assert_eq!(idx.dim(), 384);
        assert!(query(&idx, &fv(&[1.0; 384]), QueryOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn angular_filter_and_order() {
        // hand oracle: cos(theta) >= 0.5 iff |theta| <= 60 degrees
        let idx = angle_index(&[90.0, 10.0, -45.0, 61.0, 0.0]);
        let got = query(
            &idx,
            &fv(&[1.0, 0.0]),
            QueryOptions {
                min_similarity: 0.5,
                top_k: None,
            },
        )
        .unwrap();
        let ids: Vec<_> = got.iter().map(|m| m.entry.detection.image_id.as_str()).collect();
        assert_eq!(ids, ["img4", "img1", "img2"]);
        assert!((got[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_filter_returns_all_sorted() {
        let idx = angle_index(&[90.0, 10.0, -45.0, 61.0, 0.0, 180.0]);
        let got = query(&idx, &fv(&[2.0, 0.0]), QueryOptions::default()).unwrap();
        assert_eq!(got.len(), 6);
        assert!(got.windows(2).all(|w| w[0].similarity >= w[1].similarity));
        assert_eq!(got.last().unwrap().entry.detection.image_id, "img5");
    }

    #[test]
    fn ties_broken_by_index_order() {
        let idx = angle_index(&[30.0, -30.0, 30.0]);
        let got = query(&idx, &fv(&[1.0, 0.0]), QueryOptions::default()).unwrap();
        let pos: Vec<_> = got.iter().map(|m| m.position).collect();
        // cos(30) == cos(-30) up to rounding; identical vectors 0 and 2 keep index order
        assert!(pos.iter().position(|&p| p == 0) < pos.iter().position(|&p| p == 2));
    }

    #[test]
    fn top_k_truncates() {
        let idx = angle_index(&[0.0, 10.0, 20.0]);
        let got = query(
            &idx,
            &fv(&[1.0, 0.0]),
            QueryOptions {
                min_similarity: -1.0,
                top_k: Some(1),
            },
        )
        .unwrap();
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn query_errors() {
        let idx = angle_index(&[0.0]);
        assert!(matches!(
            query(&idx, &fv(&[1.0, 0.0, 0.0]), QueryOptions::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            query(&idx, &fv(&[0.0, 0.0]), QueryOptions::default()),
            Err(Error::ZeroVector)
        ));
        let bad = QueryOptions {
            min_similarity: 2.0,
            top_k: None,
        };
        assert!(matches!(query(&idx, &fv(&[1.0, 0.0]), bad), Err(Error::OutOfRange { .. })));
    }

    fn two_image_fixture() -> (Dataset, InMemoryImages) {
        let roi = |x, y, brand| Roi {
            bbox: bbox(x, y, 8, 8),
            label: BrandLabel::graphical(brand).unwrap(),
        };
        let ds = Dataset::new(
            "fx",
            "",
            vec![
                ImageRecord {
                    image_id: "b".into(),
                    path: "b.png".into(),
                    width: 32,
                    height: 32,
                    rois: vec![roi(0, 0, "red"), roi(16, 16, "blue")],
                },
                ImageRecord {
                    image_id: "a".into(),
                    path: "a.png".into(),
                    width: 32,
                    height: 32,
                    rois: vec![roi(4, 4, "red")],
                },
            ],
        )
        .unwrap();
        let paint = |rois: &[(u32, u32, [u8; 3])]| {
            let mut img = RgbImage::from_pixel(32, 32, Rgb([10, 200, 10]));
            for &(x0, y0, c) in rois {
                for y in y0..y0 + 8 {
                    for x in x0..x0 + 8 {
                        img.put_pixel(x, y, Rgb(c));
                    }
                }
            }
            img
        };
        let mut images = InMemoryImages::new();
        images.insert("b", paint(&[(0, 0, [250, 0, 0]), (16, 16, [0, 0, 250])]));
        images.insert("a", paint(&[(4, 4, [250, 0, 0])]));
        (ds, images)
    }

    #[test]
    fn entries_sorted_by_image_then_input_order() {
        let (ds, images) = two_image_fixture();
        let idx = build_index(
            &ds,
            &oracle_detections(&ds),
            &images,
            &BaselineDescriptor,
            IndexOptions::default(),
        )
        .unwrap();
        let keys: Vec<_> = idx
            .entries()
            .iter()
            .map(|e| (e.detection.image_id.as_str(), e.roi_index))
            .collect();
        assert_eq!(keys, [("a", 0), ("b", 0), ("b", 1)]);
        for e in idx.entries() {
            assert!((e.feature.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn indexed_crop_ranks_first() {
        let (ds, images) = two_image_fixture();
        let idx = build_index(
            &ds,
            &oracle_detections(&ds),
            &images,
            &BaselineDescriptor,
            IndexOptions::default(),
        )
        .unwrap();
        let pixels = images.get("b").unwrap();
        let region = RegionRef {
            image_id: "q",
            roi_index: 0,
            region: bbox(16, 16, 8, 8),
        };
        let got =
            query_from_region(&idx, &region, Some(pixels), &BaselineDescriptor, QueryOptions::default())
                .unwrap();
        assert_eq!((got[0].entry.detection.image_id.as_str(), got[0].entry.roi_index), ("b", 1));
        assert!((got[0].similarity - 1.0).abs() < 1e-9);
        // solid red and solid blue share no colour bins
        assert!(got[1].similarity < 0.99);
    }

    #[test]
    fn unknown_image_rejected() {
        let (ds, images) = two_image_fixture();
        let dets = vec![Detection::new("zzz", bbox(0, 0, 4, 4), 0.9).unwrap()];
        let err = build_index(&ds, &dets, &images, &BaselineDescriptor, IndexOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::UnknownImage(id) if id == "zzz"));
    }

    #[test]
    fn detection_outside_image_rejected() {
        let (ds, images) = two_image_fixture();
        let dets = vec![Detection::new("a", bbox(30, 0, 4, 4), 0.9).unwrap()];
        assert!(matches!(
            build_index(&ds, &dets, &images, &BaselineDescriptor, IndexOptions::default()),
            Err(Error::RegionOutOfBounds { .. })
        ));
    }

    #[test]
    fn score_prefilter_keeps_roi_numbering() {
        let (ds, images) = two_image_fixture();
        let dets = vec![
            Detection::new("b", bbox(0, 0, 8, 8), 0.2).unwrap(),
            Detection::new("b", bbox(16, 16, 8, 8), 0.9).unwrap(),
        ];
        let idx = build_index(
            &ds,
            &dets,
            &images,
            &BaselineDescriptor,
            IndexOptions {
                min_detector_score: Some(0.5),
            },
        )
        .unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.entries()[0].roi_index, 1);
    }

    #[test]
    fn dimension_drift_rejected() {
        struct Drifting;
        impl FeatureExtractor for Drifting {
            fn dim(&self) -> usize {
                2
            }
            fn needs_pixels(&self) -> bool {
                false
            }
            fn extract(&self, r: &RegionRef<'_>, _: Option<&RgbImage>) -> Result<FeatureVector> {
                FeatureVector::new(vec![1.0; 2 + r.roi_index])
            }
        }
        let (ds, images) = two_image_fixture();
        let err = build_index(&ds, &oracle_detections(&ds), &images, &Drifting, IndexOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 3 }));
    }

    #[test]
    fn serialization_round_trip_and_determinism() {
        let (ds, images) = two_image_fixture();
        let build = || {
            build_index(
                &ds,
                &oracle_detections(&ds),
                &images,
                &BaselineDescriptor,
                IndexOptions::default(),
            )
            .unwrap()
        };
        let render = |idx: &Index| {
            let mut buf = Vec::new();
            write_index(idx, &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let first = render(&build());
        assert_eq!(first, render(&build()));
        let loaded = parse_index(&first).unwrap();
        assert_eq!(loaded, build());
        assert_eq!(render(&loaded), first);
    }

    #[test]
    fn corrupt_index_rejected() {
        let idx = angle_index(&[0.0, 45.0]);
        let mut buf = Vec::new();
        write_index(&idx, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let dropped_row: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(parse_index(&dropped_row).is_err());
        assert!(parse_index("{}\ndim=2\n").is_err());
    }
}
