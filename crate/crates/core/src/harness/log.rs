use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Command;
use crate::geometry::Vec3;
use crate::simulator::AnchorStatus;

use super::config::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Recognize,
    Launch,
    Tie,
    Tension,
    Drive,
    Complete,
    Failed,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Recognize => "recognize",
            Phase::Launch => "launch",
            Phase::Tie => "tie",
            Phase::Tension => "tension",
            Phase::Drive => "drive",
            Phase::Complete => "complete",
            Phase::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::PlusX,
        Direction::MinusX,
        Direction::PlusY,
        Direction::MinusY,
        Direction::PlusZ,
    ];

    pub fn unit(self) -> Vec3 {
        match self {
            Direction::PlusX => Vec3::x(),
            Direction::MinusX => -Vec3::x(),
            Direction::PlusY => Vec3::y(),
            Direction::MinusY => -Vec3::y(),
            Direction::PlusZ => Vec3::z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    PhaseChange { from: Phase, to: Phase },
    TargetReady { cylinder: String, track: u32, trace: f64 },
    Takeoff { anchor: u32 },
    Launched { anchor: u32, fixes: u32 },
    WaypointReached { anchor: u32, index: usize },
    TieVerified { anchor: u32, cylinder: String, winding: f64, final_drop: f64, success: bool },
    TensionApplied { winch: usize, tension: f64 },
    GateRejected { distance: f64, nearest_anchor: u32 },
    Proximity { anchor: u32, cylinder: String, clearance: f64 },
    Maneuver { direction: Direction, displacement: f64 },
    PhaseTimeout { phase: Phase },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub id: u32,
    pub status: AnchorStatus,
    pub true_position: Vec3,
    pub true_velocity: Vec3,
    pub est_position: Option<Vec3>,
    pub est_velocity: Option<Vec3>,
    pub est_odom_offset: Option<Vec3>,
    pub est_phi: Option<f64>,
    /// Diagonal of the estimator covariance.
    pub est_variance: Option<Vec<f64>>,
    pub active_waypoint: Option<usize>,
    pub command: Command,
    pub wire_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u32,
    pub position: Vec3,
    pub trace: f64,
    pub hits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub position: Vec3,
    pub velocity: Vec3,
    pub winch_lengths: Vec<f64>,
    pub winch_tensions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub phase: Phase,
    pub camera: [f64; 2],
    pub robot: RobotRecord,
    pub anchors: Vec<AnchorRecord>,
    pub targets: Vec<TrackRecord>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub completed: bool,
    pub final_phase: Phase,
    pub failure: Option<String>,
    pub ties_verified: usize,
    pub robot_rise: f64,
    pub maneuvers: Vec<(Direction, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: String,
    pub seed: u64,
    pub ticks_per_second: u32,
    pub anchor_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: LogHeader,
    pub ticks: Vec<TickRecord>,
    pub outcome: Outcome,
}

impl RunLog {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.ticks.iter().flat_map(|t| t.events.iter())
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// One line of the structured log.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header {
        schema_version: u32,
        #[serde(flatten)]
        header: LogHeader,
    },
    Tick {
        schema_version: u32,
        #[serde(flatten)]
        tick: Box<TickRecord>,
    },
    Outcome {
        schema_version: u32,
        #[serde(flatten)]
        outcome: Outcome,
    },
}

pub const NDJSON_NAME: &str = "run.ndjson";
pub const CSV_NAME: &str = "trajectories.csv";
pub const CSV_HEADER: &str = "tick,time,id,true_x,true_y,true_z,est_x,est_y,est_z";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the newline-delimited log: a header line, one line per tick, and
/// the outcome.
pub fn write_ndjson<W: Write>(log: &RunLog, mut w: W) -> std::io::Result<()> {
    let mut line = |l: &Line| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")
    };
    line(&Line::Header {
        schema_version: SCHEMA_VERSION,
        header: log.header.clone(),
    })?;
    for t in &log.ticks {
        line(&Line::Tick {
            schema_version: SCHEMA_VERSION,
            tick: Box::new(t.clone()),
        })?;
    }
    line(&Line::Outcome {
        schema_version: SCHEMA_VERSION,
        outcome: log.outcome.clone(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat trajectory table: one robot row and one row per anchor each tick.
/// The robot has no estimate, so its estimate columns are empty.
pub fn write_csv<W: Write>(log: &RunLog, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for t in &log.ticks {
        let p = t.robot.position;
        writeln!(w, "{},{},robot,{},{},{},,,", t.tick, t.time, p.x, p.y, p.z)?;
        for a in &t.anchors {
            let p = a.true_position;
            let e = a.est_position;
            writeln!(
                w,
                "{},{},anchor{},{},{},{},{},{},{}",
                t.tick,
                t.time,
                a.id,
                p.x,
                p.y,
                p.z,
                fmt_opt(e.map(|e| e.x)),
                fmt_opt(e.map(|e| e.y)),
                fmt_opt(e.map(|e| e.z)),
            )?;
        }
    }
    Ok(())
}

/// Writes `run.ndjson` and `trajectories.csv` into `dir`, creating it.
pub fn export_log(log: &RunLog, dir: &Path) -> Result<(PathBuf, PathBuf), LogError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = dir.join(NDJSON_NAME);
    let csv = dir.join(CSV_NAME);
    let mut f = BufWriter::new(File::create(&json).map_err(io_err(&json))?);
    write_ndjson(log, &mut f).and_then(|_| f.flush()).map_err(io_err(&json))?;
    export_csv(log, &csv)?;
    Ok((json, csv))
}

pub fn export_csv(log: &RunLog, path: &Path) -> Result<(), LogError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    write_csv(log, &mut f).and_then(|_| f.flush()).map_err(io_err(path))
}

/// Reads a structured log written by [`write_ndjson`].
pub fn read_ndjson(path: &Path) -> Result<RunLog, LogError> {
    let file = File::open(path).map_err(io_err(path))?;
    let format = |message: String| LogError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut header = None;
    let mut outcome = None;
    let mut ticks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|source| LogError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        let version = match &parsed {
            Line::Header { schema_version, .. }
            | Line::Tick { schema_version, .. }
            | Line::Outcome { schema_version, .. } => *schema_version,
        };
        if version != SCHEMA_VERSION {
            return Err(format(format!("line {}: schema version {version}", i + 1)));
        }
        match parsed {
            Line::Header { header: h, .. } => header = Some(h),
            Line::Tick { tick, .. } => ticks.push(*tick),
            Line::Outcome { outcome: o, .. } => outcome = Some(o),
        }
    }
    Ok(RunLog {
        header: header.ok_or_else(|| format("missing header".into()))?,
        ticks,
        outcome: outcome.ok_or_else(|| format("missing outcome".into()))?,
    })
}
