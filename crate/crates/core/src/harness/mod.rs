//! Orchestration: scenario configuration, Monte Carlo replication, dataset
//! analysis, and plot-data export.

pub mod analyze;
pub mod config;
pub mod generate;
pub mod plot;
pub mod run;
pub mod summary;

pub use analyze::{analyze_files, analyze_in_memory, write_report, AnalysisReport, AnalyzeOptions};
pub use config::{load_config, preset, preset_names, Estimator, ResolvedScenario, ScenarioConfig};
pub use generate::{generate_replicate, ReplicateData};
pub use plot::{collect_summaries, emit_plot_data, plot_csv, Axis, PlotRow};
pub use run::{run_replicate, run_scenario, write_outputs, ReplicateRecord, ReplicateResult, ScenarioOutcome};
pub use summary::ScenarioSummary;
