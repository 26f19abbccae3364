//! Configuration ingestion, deterministic persistence, paper-shaped
//! summary tables and chart emission.

pub mod chart;
pub mod config;
pub mod records;
pub mod summary;

pub use chart::{emit_chart, render_chart, VALID_QUANTITIES};
pub use config::{load_config, ConfigFile, ExperimentPlan};
pub use records::{
    detect_from_rows, fmt_f64, group_by_run, parse_f64, parse_records_str, read_records,
    records_to_string, rows_from_results, write_records, write_run_dir, RecordRow, RECORDS_HEADER,
};
pub use summary::{
    parse_recovery_str, read_recovery, recovery_table, recovery_to_string, summarize, RecoveryRow,
    TableKind, TableOutput, GAP_MARKER, RECOVERY_HEADER,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "COLLAPSE_LAB_OUT";
