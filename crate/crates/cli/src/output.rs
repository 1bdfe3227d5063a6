//! Run artifacts written to the output directory.
//!
//! | file            | content                                              |
//! |-----------------|------------------------------------------------------|
//! | `run.csv`       | one row per control step                             |
//! | `summary.json`  | metrics, events, effective parameters and overrides |
//! | `map.txt`       | final occupancy grid snapshot                        |
//! | `skeleton.csv`  | `row,col` of the final skeleton cells                |
//! | `paths.csv`     | every planned path, `plan,t,k,x,y`                   |
//! | `segments.csv`  | sampled reference segments                           |
//! | `error.json`    | only on failure                                      |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use shepherd::sim::{Event, RunLog, RunSummary, SUMMARY_SCHEMA_VERSION};

use crate::scenario::{ScenarioError, ScenarioFile};

pub const RUN_CSV: &str = "run.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const MAP_TXT: &str = "map.txt";
pub const SKELETON_CSV: &str = "skeleton.csv";
pub const PATHS_CSV: &str = "paths.csv";
pub const SEGMENTS_CSV: &str = "segments.csv";
pub const ERROR_JSON: &str = "error.json";

/// Samples per segment in `segments.csv`.
const SEGMENT_SAMPLES: usize = 50;

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub scenario: &'a str,
    #[serde(flatten)]
    pub metrics: RunSummary,
    pub events: &'a [Event],
    pub parameters: &'a ScenarioFile,
    pub overrides: &'a [String],
}

/// Machine-readable failure report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl ErrorReport {
    pub fn new(kind: &str, field: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            schema_version: SUMMARY_SCHEMA_VERSION,
            kind: kind.into(),
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("error reports always serialize")
    }
}

impl From<&ScenarioError> for ErrorReport {
    fn from(e: &ScenarioError) -> Self {
        Self::new(e.kind(), e.field_name(), e.to_string())
    }
}

pub fn summary_json(log: &RunLog<f64>, file: &ScenarioFile, overrides: &[String]) -> String {
    let s = Summary {
        scenario: &file.name,
        metrics: log.summary(),
        events: &log.events,
        parameters: file,
        overrides,
    };
    serde_json::to_string_pretty(&s).expect("summaries always serialize")
}

pub fn paths_csv(log: &RunLog<f64>) -> String {
    let mut s = String::from("plan,t,k,x,y\n");
    for (i, p) in log.plans.iter().enumerate() {
        for (k, q) in p.path.points.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{k},{},{}", p.t, q.x, q.y);
        }
    }
    s
}

pub fn segments_csv(log: &RunLog<f64>) -> String {
    let mut s = String::from("segment,t,x,y,vx,vy,ax,ay\n");
    for (i, rec) in log.segments.iter().enumerate() {
        for line in rec.segment.to_csv(SEGMENT_SAMPLES).lines().skip(1) {
            let _ = writeln!(s, "{i},{line}");
        }
    }
    s
}

pub fn skeleton_csv(log: &RunLog<f64>) -> String {
    let mut s = String::from("row,col\n");
    for (k, _) in log.skeleton.iter().enumerate().filter(|(_, &b)| b) {
        let (r, c) = log.grid.unflat(k);
        let _ = writeln!(s, "{r},{c}");
    }
    s
}

/// Writes every artifact of a finished run.
pub fn write_run(dir: &Path, log: &RunLog<f64>, file: &ScenarioFile, overrides: &[String]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RUN_CSV), log.to_csv())?;
    fs::write(dir.join(SUMMARY_JSON), summary_json(log, file, overrides))?;
    fs::write(dir.join(MAP_TXT), log.grid.to_snapshot())?;
    fs::write(dir.join(SKELETON_CSV), skeleton_csv(log))?;
    fs::write(dir.join(PATHS_CSV), paths_csv(log))?;
    fs::write(dir.join(SEGMENTS_CSV), segments_csv(log))?;
    Ok(())
}

pub fn write_error(dir: &Path, report: &ErrorReport) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(ERROR_JSON), report.to_json())
}
