//! Subcommand bodies. Each returns the process exit code:
//! `0` success, `1` completed without success (run) or violations found
//! (check), `2` invalid input or runtime failure.

use std::path::{Path, PathBuf};

use crate::check::check;
use crate::output::{write_error, write_run, ErrorReport};
use crate::plot::plot_dir;
use crate::scenario::{ScenarioError, ScenarioFile};

pub const OUTPUT_DIR_ENV: &str = "SHEPHERD_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "shepherd-out";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub output_base: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub overrides: Vec<String>,
    pub plot: bool,
}

impl RunOptions {
    /// Overrides, with the dedicated flags appended last.
    pub fn all_overrides(&self) -> Vec<String> {
        let mut v = self.overrides.clone();
        if let Some(s) = self.seed {
            v.push(format!("seed={s}"));
        }
        if let Some(dt) = self.dt {
            v.push(format!("sim.dt={dt:?}"));
        }
        if let Some(t) = self.t_final {
            v.push(format!("sim.t_final={t:?}"));
        }
        v
    }
}

fn fail(report: &ErrorReport, dir: Option<&Path>) -> i32 {
    println!("{}", report.to_json());
    if let Some(d) = dir {
        if let Err(e) = write_error(d, report) {
            eprintln!("cannot write error report to {}: {e}", d.display());
        }
    }
    2
}

fn load(path: &Path, overrides: &[String]) -> Result<ScenarioFile, ScenarioError> {
    ScenarioFile::load(path)?.with_overrides(overrides)
}

pub fn run_command(scenario: &Path, opts: &RunOptions) -> i32 {
    let overrides = opts.all_overrides();
    let file = match load(scenario, &overrides) {
        Ok(f) => f,
        Err(e) => return fail(&ErrorReport::from(&e), opts.output.as_deref()),
    };
    let dir = opts.output.clone().unwrap_or_else(|| {
        opts.output_base
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
            .join(&file.name)
    });
    let sc = match file.to_scenario() {
        Ok(s) => s,
        Err(e) => return fail(&ErrorReport::from(&e), Some(&dir)),
    };
    let log = match shepherd::sim::run(&sc) {
        Ok(l) => l,
        Err(e) => return fail(&ErrorReport::from(&ScenarioError::Engine(e)), Some(&dir)),
    };
    if let Err(e) = write_run(&dir, &log, &file, &overrides) {
        return fail(&ErrorReport::new("io", None, e.to_string()), None);
    }
    if opts.plot {
        if let Err(e) = plot_dir(&dir) {
            return fail(&ErrorReport::new("plot", None, e.to_string()), Some(&dir));
        }
    }
    if let Some(reason) = &log.failure {
        return fail(&ErrorReport::new("runtime", None, reason.clone()), Some(&dir));
    }
    let s = log.summary();
    println!(
        "{}",
        serde_json::json!({
            "scenario": file.name,
            "success": s.success,
            "t_end": s.t_end,
            "output": dir.display().to_string(),
        })
    );
    if s.success {
        0
    } else {
        1
    }
}

pub fn check_command(scenario: &Path, overrides: &[String]) -> i32 {
    let report = load(scenario, overrides).and_then(|f| check(&f));
    match report {
        Ok(r) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("reports always serialize")
            );
            if r.is_clean() {
                0
            } else {
                1
            }
        }
        Err(e) => fail(&ErrorReport::from(&e), None),
    }
}

pub fn plot_command(dir: &Path) -> i32 {
    match plot_dir(dir) {
        Ok(files) => {
            for f in files {
                println!("{}", dir.join(f).display());
            }
            0
        }
        Err(e) => fail(&ErrorReport::new("plot", None, e.to_string()), None),
    }
}
