//! Detection providers, the feature index and query-by-example ranking.

mod detections;
mod index;
mod source;

pub use detections::{
    load_detections, oracle_detections, parse_detections, save_detections, write_detections,
    Detection,
};
pub use index::{
    build_index, load_index, parse_index, query, query_from_region, save_index, write_index, Index,
    IndexEntry, IndexOptions, QueryOptions, RankedMatch,
};
pub use source::{ImageDir, ImageSource, InMemoryImages};
