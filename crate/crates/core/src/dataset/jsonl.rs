//! JSON Lines annotation format, one image per line:
//!
//! ```text
//! {"image_id":"a","path":"a.jpg","width":100,"height":50,"rois":[{"x":10,"y":10,"w":20,"h":20,"brand":"adidas","kind":"graphical","variant":0}]}
//! ```
//!
//! Saving always emits the same key order and compact separators, so
//! `save(load(f))` is a fixed point.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BrandLabel, Dataset, ImageRecord, LogoKind, Roi};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageLine {
    image_id: String,
    path: String,
    width: u32,
    height: u32,
    rois: Vec<RoiLine>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoiLine {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    brand: String,
    kind: LogoKind,
    variant: u32,
}

impl ImageLine {
    fn into_record(self) -> Result<ImageRecord> {
        let rois = self
            .rois
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let field = || format!("rois[{i}]");
                let bbox = BBox::new(r.x, r.y, r.w, r.h).ok_or_else(|| {
                    Error::invalid(&self.image_id, field(), "RoI width and height must be positive")
                })?;
                let label = BrandLabel::new(&r.brand, r.kind, r.variant).ok_or_else(|| {
                    Error::invalid(&self.image_id, format!("{}.brand", field()), "brand is empty")
                })?;
                Ok(Roi { bbox, label })
            })
            .collect::<Result<Vec<_>>>()?;
        let record = ImageRecord {
            image_id: self.image_id,
            path: self.path,
            width: self.width,
            height: self.height,
            rois,
        };
        record.validate()?;
        Ok(record)
    }

    fn from_record(record: &ImageRecord) -> Self {
        Self {
            image_id: record.image_id.clone(),
            path: record.path.clone(),
            width: record.width,
            height: record.height,
            rois: record
                .rois
                .iter()
                .map(|r| RoiLine {
                    x: r.bbox.x,
                    y: r.bbox.y,
                    w: r.bbox.w,
                    h: r.bbox.h,
                    brand: r.label.brand().to_string(),
                    kind: r.label.kind,
                    variant: r.label.variant,
                })
                .collect(),
        }
    }
}

/// Loads a dataset file. The dataset is named after the file stem.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_dataset(BufReader::new(file), &name)
}

/// Parses JSONL from any reader. Blank lines are skipped.
pub fn parse_dataset(reader: impl BufRead, name: &str) -> Result<Dataset> {
    let mut images = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::parse(line_no, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ImageLine = serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e))?;
        images.push(parsed.into_record()?);
    }
    Dataset::new(name, "", images)
}

pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> std::io::Result<()> {
    for image in dataset.images() {
        serde_json::to_writer(&mut out, &ImageLine::from_record(image))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
