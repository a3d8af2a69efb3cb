//! Scenario configs, the mission tick loop that wires every module
//! together, and the run logs it produces.

mod config;
mod log;
mod mission;

pub use config::{
    AnchorConfig, ConfigError, DrivePlan, LaunchConfig, PhaseBudgets, RecognitionConfig, RobotConfig,
    ScenarioConfig, TyingConfig, MAX_ANCHORS, PRESETS, SCHEMA_VERSION,
};
pub use log::{
    export_csv, export_log, read_ndjson, write_csv, write_ndjson, AnchorRecord, Direction, Event, EventKind,
    LogError, LogHeader, Outcome, Phase, RobotRecord, RunLog, TickRecord, TrackRecord, CSV_HEADER, CSV_NAME,
    NDJSON_NAME,
};
pub use mission::run_scenario;
