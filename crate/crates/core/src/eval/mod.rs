//! FROC curves, average precision and the open-set query protocol.

mod ap;
mod froc;
mod protocol;

pub use ap::{average_precision, average_precision_with, ApMode};
pub use froc::{
    detection_froc, identification_froc, identification_outcomes, operating_point, write_curve_csv,
    FrocCurve, FrocPoint,
};
pub use protocol::{
    run_open_set_protocol, EvalReport, ProtocolConfig, QueryCrop, QueryEvalResult, QuerySet,
    DEFAULT_FPPI_GRID,
};
