//! Post-hoc correction of multi-class classifier errors from exported
//! probability vectors.
//!
//! A learned error detector decides whether the base prediction is likely
//! wrong; a second learned gate decides whether a suspected error crosses a
//! superclass boundary (non-human) or stays inside it (human-like). Only
//! suspected non-human errors are re-routed to the most probable class of
//! another superclass.

pub mod detector;
pub mod error;
pub mod features;
pub mod gate;
pub mod gbdt;
pub mod metrics;
pub mod policy;
pub mod presets;
pub mod synth;
pub mod typer;
pub mod types;

pub use detector::{fit_mcp, mcp_flag, train_detector, DetectorModel, McpBaseline};
pub use error::{Error, Result};
pub use features::FeatureSet;
pub use gate::{StageConfig, ThresholdPolicy};
pub use gbdt::{GbdtConfig, GbdtModel};
pub use metrics::{compare_reports, error_breakdown, evaluate, EvalReport};
pub use policy::{run_oracle_pipeline, run_pipeline, superclass_flip, Action, PipelineVerdict};
pub use typer::{train_typer, TyperModel};
pub use types::{
    label_error_kind, load_dataset, Dataset, ErrorKind, ProbRecord, SumValidation, SuperclassMap,
};
