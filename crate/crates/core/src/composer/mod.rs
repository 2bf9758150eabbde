//! Configured pipelines: parse, run stage by stage, report.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_config_detailed, PipelineConfig};
pub use report::{compare_runs, emit_report, load_report, ReportFormat, RunReport, StageReport};
pub use run::{run_pipeline, run_pipeline_with_jobs, RunOutput};
