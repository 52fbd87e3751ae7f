//! Scenario orchestration: configuration ingestion, the two grid case
//! studies, metric computation and trace output.

mod config;
mod scenario;
mod trace;

pub use config::{load_config, parse_config, ClcKind, ConfigError, GfmKind, ScenarioConfig};
pub use scenario::{compare_clf, run_scenario, ClfComparison, SimError};
pub use trace::{
    compute_metrics, emit_trace, format_trace, parse_trace, Metrics, SimTrace, TraceError,
    TraceRecord, CSV_HEADER, RECOVERY_HOLD,
};
