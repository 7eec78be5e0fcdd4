//! Config-driven orchestration, synthetic scenarios and the command line.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod run;
pub mod scenario;

pub use config::{Overrides, PathsConfig, PipelineConfig, SelectionMode};
pub use manifest::{Manifest, MANIFEST_FILE};
pub use run::{run_pipeline, RunSummary, Sample, SlotReport};
pub use scenario::{ScenarioData, SyntheticScenario};
