//! Configuration, sweeps, CSV tables and SVG plots for the `tq` tool.

// `!(x > y)` is used on purpose to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plot;
pub mod sweep;
pub mod table;

pub use config::{build_config, parse_config, ConfigError, Entry, MethodKind, RunConfig};
pub use plot::{render_plot, Metric, PlotError, PlotSpec};
pub use sweep::{evaluate, run_sweep, Point, Row};
pub use table::{fmt_g17, read_csv, write_csv, CsvError};
