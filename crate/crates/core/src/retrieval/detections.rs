//! Class-agnostic scored boxes and the CSV format they travel in:
//!
//! ```text
//! image_id,x,y,w,h,score
//! img1,10,20,30,40,0.95
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::OutOfRange {
                name: "detector score",
                value: score,
                range: "[0, 1]",
            });
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            score,
        })
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct DetectionRow {
    pub image_id: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub score: f64,
}

impl DetectionRow {
    pub(crate) fn from_detection(d: &Detection) -> Self {
        Self {
            image_id: d.image_id.clone(),
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
        }
    }

    pub(crate) fn into_detection(self) -> std::result::Result<Detection, String> {
        let bbox = BBox::new(self.x, self.y, self.w, self.h)
            .ok_or_else(|| format!("non-positive box size {}x{}", self.w, self.h))?;
        Detection::new(self.image_id, bbox, self.score).map_err(|e| e.to_string())
    }
}

/// A perfect detector: one detection per ground-truth RoI, score 1.
pub fn oracle_detections(dataset: &Dataset) -> Vec<Detection> {
    dataset
        .images()
        .iter()
        .flat_map(|image| {
            image.rois.iter().map(|roi| Detection {
                image_id: image.image_id.clone(),
                bbox: roi.bbox,
                score: 1.0,
            })
        })
        .collect()
}

/// Image ids are not checked here; that happens when the index is built.
pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(BufReader::new(file))
}

pub fn parse_detections(reader: impl Read) -> Result<Vec<Detection>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(1, e))?.clone();
    let expected = ["image_id", "x", "y", "w", "h", "score"];
    if !headers.is_empty() && headers.iter().ne(expected) {
        return Err(Error::parse(
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: DetectionRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(line, e))?;
        out.push(row.into_detection().map_err(|m| Error::parse(line, m))?);
    }
    Ok(out)
}

pub fn write_detections(detections: &[Detection], out: impl Write) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    if detections.is_empty() {
        wtr.write_record(["image_id", "x", "y", "w", "h", "score"])
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    for d in detections {
        wtr.serialize(DetectionRow::from_detection(d))
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io("<detections>", e))
}

pub fn save_detections(detections: &[Detection], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections(detections, BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_dataset, Dataset};
    use crate::geometry::greedy_match;

    fn parse(text: &str) -> Result<Vec<Detection>> {
        parse_detections(text.as_bytes())
    }

    #[test]
    fn single_line() {
        let d = parse("image_id,x,y,w,h,score\nimg1,10,20,30,40,0.95\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].image_id, "img1");
        assert_eq!(d[0].bbox, BBox::new(10, 20, 30, 40).unwrap());
        assert_eq!(d[0].score, 0.95);
    }

    #[test]
    fn score_out_of_range() {
        let err = parse("image_id,x,y,w,h,score\nimg1,10,20,30,40,1.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse("image_id,x,y,w,h,score\nimg1,10,20,30,40,-0.1\n").is_err());
        assert!(parse("image_id,x,y,w,h,score\nimg1,10,20,30,40,NaN\n").is_err());
    }

    #[test]
    fn zero_size_box() {
        assert!(parse("image_id,x,y,w,h,score\nimg1,10,20,0,40,0.5\n").is_err());
    }

    #[test]
    fn header_only() {
        assert!(parse("image_id,x,y,w,h,score\n").unwrap().is_empty());
    }

    #[test]
    fn wrong_header() {
        assert!(parse("id,x,y,w,h,score\nimg1,10,20,30,40,0.5\n").is_err());
    }

    #[test]
    fn write_round_trip() {
        let text = "image_id,x,y,w,h,score\nimg1,10,20,30,40,0.95\nimg2,0,0,1,1,1.0\n";
        let dets = parse(text).unwrap();
        let mut out = Vec::new();
        write_detections(&dets, &mut out).unwrap();
        assert_eq!(parse_detections(out.as_slice()).unwrap(), dets);
    }

    #[test]
    fn oracle_matches_ground_truth() {
        let d = parse_dataset(
            br#"{"image_id":"a","path":"a.png","width":50,"height":50,"rois":[{"x":0,"y":0,"w":10,"h":10,"brand":"x","kind":"graphical","variant":0},{"x":20,"y":20,"w":5,"h":5,"brand":"y","kind":"textual","variant":1}]}
{"image_id":"b","path":"b.png","width":50,"height":50,"rois":[{"x":1,"y":1,"w":3,"h":3,"brand":"x","kind":"graphical","variant":0}]}
"#
            .as_slice(),
            "t",
        )
        .unwrap();
        let dets = oracle_detections(&d);
        assert_eq!(dets.len(), 3);
        assert!(dets.iter().all(|d| d.score == 1.0));
        for image in d.images() {
            let mine: Vec<_> = dets
                .iter()
                .filter(|det| det.image_id == image.image_id)
                .map(|det| (det.bbox, det.score))
                .collect();
            let gts: Vec<_> = image.rois.iter().map(|r| r.bbox).collect();
            for thr in [0.01, 0.5, 1.0] {
                let m = greedy_match(&mine, &gts, thr);
                assert!(m.unmatched_detections.is_empty());
                assert!(m.unmatched_ground_truths.is_empty());
            }
        }
        assert!(oracle_detections(&Dataset::empty("e")).is_empty());
    }
}
