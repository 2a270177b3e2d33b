//! Precomputed embeddings as decimal text.
//!
//! ```text
//! dim=3
//! img1,0,0.1,0.2,0.3
//! img1,1,-0.5,0,1
//! ```
//!
//! Rows are `image_id,roi_index,v1,...,vN`. Values are written in shortest
//! round-trip decimal form, so loading reproduces them exactly.

use std::collections::btree_map::{BTreeMap, Entry};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::RgbImage;

use super::{check_dims, FeatureExtractor, FeatureVector, RegionRef};
use crate::error::{Error, Result};

pub type EmbeddingKey = (String, usize);

/// Feature vectors keyed by `(image_id, roi_index)`, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<EmbeddingKey, FeatureVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, image_id: &str, roi_index: usize, feature: FeatureVector) -> Result<()> {
        check_dims(self.dim, feature.dim())?;
        match self.entries.entry((image_id.to_string(), roi_index)) {
            Entry::Occupied(_) => Err(Error::DuplicateKey {
                image_id: image_id.to_string(),
                roi_index,
            }),
            Entry::Vacant(slot) => {
                slot.insert(feature);
                Ok(())
            }
        }
    }

    pub fn get(&self, image_id: &str, roi_index: usize) -> Option<&FeatureVector> {
        // BTreeMap lookups need an owned key for tuple types
        self.entries.get(&(image_id.to_string(), roi_index))
    }

    /// Entries in `(image_id, roi_index)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&EmbeddingKey, &FeatureVector)> {
        self.entries.iter()
    }
}

impl FeatureExtractor for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn needs_pixels(&self) -> bool {
        false
    }

    fn extract(&self, region: &RegionRef<'_>, _pixels: Option<&RgbImage>) -> Result<FeatureVector> {
        self.get(region.image_id, region.roi_index)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding {
                image_id: region.image_id.to_string(),
                roi_index: region.roi_index,
            })
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(BufReader::new(file), 1)
}

/// Parses the embedding format. `first_line` is the file line number of the
/// `dim=` header, used in error messages when the table is embedded in a
/// larger file.
pub fn parse_embeddings(mut reader: impl BufRead, first_line: usize) -> Result<EmbeddingTable> {
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::parse(first_line, e))?;
    let dim = header
        .trim_end_matches(['\r', '\n'])
        .strip_prefix("dim=")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::parse(first_line, format!("expected `dim=N` header, got {header:?}")))?;
    let mut table = EmbeddingTable::new(dim)?;

    let mut rows = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    for record in rows.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(first_line + line, e)
        })?;
        let line = first_line + record.position().map_or(0, |p| p.line() as usize);
        if record.len() != dim + 2 {
            return Err(Error::parse(
                line,
                format!("expected {} fields (dim={dim}), got {}", dim + 2, record.len()),
            ));
        }
        let image_id = &record[0];
        let roi_index: usize = record[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("bad roi_index {:?}", &record[1])))?;
        let values = record
            .iter()
            .skip(2)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let feature = FeatureVector::new(values).map_err(|e| Error::parse(line, e))?;
        table
            .insert(image_id, roi_index, feature)
            .map_err(|e| Error::parse(line, e))?;
    }
    Ok(table)
}

pub fn write_embeddings(table: &EmbeddingTable, mut out: impl Write) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<embeddings>", e);
    writeln!(out, "dim={}", table.dim).map_err(io_err)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut row: Vec<String> = Vec::with_capacity(table.dim + 2);
    for ((image_id, roi_index), feature) in &table.entries {
        row.clear();
        row.push(image_id.clone());
        row.push(roi_index.to_string());
        row.extend(feature.values().iter().map(f64::to_string));
        writer
            .write_record(&row)
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    writer.flush().map_err(io_err)
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(table, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}
