//! On-disk formats: the versioned instance text file, sweep CSV, metric
//! reports, and SVG charts.

mod instance;
mod report;
mod svg;

pub use instance::{
    emit_instance, parse_instance, read_instance, write_instance, INSTANCE_VERSION,
};
pub use report::{metrics_csv, sweep_csv, SWEEP_CSV_HEADER, SWEEP_CSV_VERSION};
pub use svg::{line_chart_svg, Axis, Series};
