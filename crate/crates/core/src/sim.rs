//! Closed-loop shepherding engine: settle phase, sensing and mapping
//! cadence, replanning, segment refits, the controller QP and RK4
//! integration.

use std::fmt::Write as _;

use log::{debug, info, warn};
use serde::Serialize;

use crate::cbf::{
    feasibility_diagnostic, herding_barrier, herding_block, interdog_block, objective_terms, obstacle_block,
    obstacle_block_unchecked, reference_velocity, ControlStatus, Controller, ControllerConfig, ControllerGains,
};
use crate::dynamics::{sheep_velocities, FlockParams, SheepDerivatives, WorldState};
use crate::error::{Error, Result};
use crate::geometry::{min_enclosing_circle, Vec2};
use crate::mapping::{
    nearest_points_among, simulate_lidar, CellIndex, CellState, GroundTruthWorld, LidarSpec, OccupancyGrid,
};
use crate::planner::{extract_skeleton, plan_path, GridPath};
use crate::scalar::Scalar;
use crate::trajectory::{fit_segment, path_window, FitSettings, TrajectoryBounds, TrajectorySample, TrajectorySegment};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// One classical Runge–Kutta step. Dogs move with the held velocities;
/// sheep velocities are re-evaluated at every stage.
pub fn rk4_step<T: Scalar>(
    world: &WorldState<T>,
    params: &FlockParams<T>,
    dog_vels: &[Vec2<T>],
    dt: T,
) -> Result<WorldState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::validation("dt", "must be > 0"));
    }
    if dog_vels.len() != world.m() {
        return Err(Error::DimensionMismatch(format!(
            "{} dog velocities for {} dogs",
            dog_vels.len(),
            world.m()
        )));
    }
    let half = dt * T::half();
    let dogs_at = |h: T| -> Vec<Vec2<T>> { world.dogs.iter().zip(dog_vels).map(|(&x, &u)| x + u * h).collect() };
    let shifted =
        |k: &[Vec2<T>], h: T| -> Vec<Vec2<T>> { world.sheep.iter().zip(k).map(|(&x, &v)| x + v * h).collect() };
    let f = |sheep: Vec<Vec2<T>>, h: T| sheep_velocities(&WorldState::new(sheep, dogs_at(h)), params);
    let k1 = f(world.sheep.clone(), T::zero())?;
    let k2 = f(shifted(&k1, half), half)?;
    let k3 = f(shifted(&k2, half), half)?;
    let k4 = f(shifted(&k3, dt), dt)?;
    let sixth = dt / T::c(6.0);
    let sheep = (0..world.n())
        .map(|i| world.sheep[i] + (k1[i] + k2[i] * T::two() + k3[i] * T::two() + k4[i]) * sixth)
        .collect();
    Ok(WorldState {
        sheep,
        dogs: dogs_at(dt),
        t: world.t + dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleConfig<T> {
    pub dt: T,
    /// Stop once every sheep is slower than this (m/s, per-axis max).
    pub speed_tol: T,
    pub max_time: T,
}

impl<T: Scalar> Default for SettleConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::c(0.01),
            speed_tol: T::c(1e-4),
            max_time: T::c(60.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleReport<T> {
    pub sheep: Vec<Vec2<T>>,
    /// Radius of the minimum enclosing circle of the settled flock.
    pub herd_radius: T,
    pub time: T,
    pub settled: bool,
}

/// Runs the flock without dogs until it stops, then measures its radius.
pub fn settle_flock<T: Scalar>(
    sheep: &[Vec2<T>],
    params: &FlockParams<T>,
    cfg: &SettleConfig<T>,
) -> Result<SettleReport<T>> {
    if sheep.is_empty() {
        return Err(Error::Precondition("the flock needs at least one sheep".into()));
    }
    let mut world = WorldState::new(sheep.to_vec(), Vec::new());
    let max_steps = (cfg.max_time / cfg.dt).ceil().to_usize().unwrap_or(0);
    let mut settled = false;
    for _ in 0..=max_steps {
        let speed = sheep_velocities(&world, params)?
            .iter()
            .fold(T::zero(), |m, v| m.max(v.norm_inf()));
        if speed < cfg.speed_tol {
            settled = true;
            break;
        }
        if world.t >= cfg.max_time {
            break;
        }
        world = rk4_step(&world, params, &[], cfg.dt)?;
    }
    if !settled {
        warn!("flock did not settle within {} s", cfg.max_time);
    }
    let circle = min_enclosing_circle(&world.sheep).expect("non-empty flock");
    Ok(SettleReport {
        sheep: world.sheep,
        herd_radius: circle.radius,
        time: world.t,
        settled,
    })
}

/// Every engine knob besides the geometry and initial placement.
#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub flock: FlockParams<T>,
    /// Gains; `r_d` is overwritten with `herd_radius + r_s` after settling.
    pub gains: ControllerGains<T>,
    pub controller: ControllerConfig<T>,
    /// Safety distance added to the herd radius to form `R_d`.
    pub r_s: T,
    /// Uses this herd radius instead of the settled estimate.
    pub herd_radius_override: Option<T>,
    pub settle: SettleConfig<T>,
    pub dt: T,
    pub t_final: T,
    pub lidar: LidarSpec<T>,
    /// Control steps between full scans.
    pub scan_period_steps: usize,
    /// Spread the dogs' scans evenly over the period instead of scanning
    /// all at once.
    pub scan_stagger: bool,
    pub grid_resolution: T,
    /// Inflation radius beyond the herd radius; `None` means half a cell
    /// diagonal.
    pub inflation_margin: Option<T>,
    /// Occupied cells per dog fed to the obstacle barrier.
    pub obstacle_points: usize,
    /// Added to `R_circ` when building obstacle rows, to cover the gap
    /// between a cell center and the true boundary.
    pub obstacle_margin: Option<T>,
    pub bounds: TrajectoryBounds<T>,
    /// Path points per fitted window.
    pub window: usize,
    pub fit: FitSettings<T>,
    pub success_radius: T,
    pub success_dwell: T,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            flock: FlockParams::reference(),
            gains: ControllerGains::with_herd_radius(T::zero()),
            controller: ControllerConfig::default(),
            r_s: T::c(0.35),
            herd_radius_override: None,
            settle: SettleConfig::default(),
            dt: T::c(0.01),
            t_final: T::c(120.0),
            lidar: LidarSpec::default(),
            scan_period_steps: 100,
            scan_stagger: false,
            grid_resolution: T::c(0.1),
            inflation_margin: None,
            obstacle_points: 8,
            obstacle_margin: None,
            bounds: TrajectoryBounds {
                v_max: T::c(0.48),
                a_max: T::c(0.2),
            },
            window: 50,
            fit: FitSettings {
                cruise_speed: Some(T::c(0.15)),
                ..FitSettings::default()
            },
            success_radius: T::c(0.5),
            success_dwell: T::c(2.0),
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.flock.validate()?;
        let mut g = self.gains;
        g.r_d = g.r + T::one();
        g.validate()?;
        let pos = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(name, format!("must be finite and > 0, got {v}")))
            }
        };
        pos("dt", self.dt)?;
        pos("r_s", self.r_s)?;
        pos("grid_resolution", self.grid_resolution)?;
        pos("v_max", self.bounds.v_max)?;
        pos("a_max", self.bounds.a_max)?;
        pos("lidar.max_range", self.lidar.max_range)?;
        pos("lidar.angular_step", self.lidar.angular_step)?;
        pos("settle.dt", self.settle.dt)?;
        pos("epsilon_reg", self.controller.epsilon_reg)?;
        pos("w_slack", self.controller.w_slack)?;
        if !(self.t_final >= T::zero()) {
            return Err(Error::validation("t_final", "must be >= 0"));
        }
        if self.scan_period_steps == 0 {
            return Err(Error::validation("scan_period_steps", "must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::validation("window", "must be >= 1"));
        }
        if let Some(r) = self.herd_radius_override {
            if !(r >= T::zero()) {
                return Err(Error::validation("herd_radius", "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub world: GroundTruthWorld<T>,
    pub sheep: Vec<Vec2<T>>,
    pub dogs: Vec<Vec2<T>>,
    pub goal: Vec2<T>,
    pub config: SimConfig<T>,
}

impl<T: Scalar> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.sheep.is_empty() {
            return Err(Error::validation("sheep", "at least one sheep is required"));
        }
        if self.dogs.is_empty() {
            return Err(Error::validation("dogs", "at least one dog is required"));
        }
        for (name, pts) in [("sheep", &self.sheep), ("dogs", &self.dogs)] {
            for (i, &p) in pts.iter().enumerate() {
                if !p.is_finite() {
                    return Err(Error::validation(name, format!("position {i} is not finite")));
                }
                if let Some(o) = self.world.obstacle_containing(p) {
                    return Err(Error::validation(
                        name,
                        format!("position {i} lies inside obstacle {o}"),
                    ));
                }
            }
        }
        let ra = self.config.gains.r_a;
        for j in 0..self.dogs.len() {
            for k in (j + 1)..self.dogs.len() {
                if self.dogs[j].distance(self.dogs[k]) < ra {
                    return Err(Error::validation(
                        "dogs",
                        format!("dogs {j} and {k} start closer than R_a = {ra}"),
                    ));
                }
            }
        }
        if !self.world.bounds.contains(self.goal) {
            return Err(Error::validation("goal", "must lie inside the workspace"));
        }
        if self.world.obstacle_containing(self.goal).is_some() {
            return Err(Error::validation("goal", "lies inside an obstacle"));
        }
        for (i, o) in self.world.obstacles.iter().enumerate() {
            if !o.is_simple() {
                return Err(Error::validation("obstacles", format!("polygon {i} is not simple")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    pub t: T,
    pub sheep: Vec<Vec2<T>>,
    pub dogs: Vec<Vec2<T>>,
    pub controls: Vec<Vec2<T>>,
    pub reference: TrajectorySample<T>,
    pub status: ControlStatus,
    pub max_slack: T,
    /// `max_i |x_i - S̄|`.
    pub spread: T,
    pub h_herd_min: T,
    pub min_dog_dog: T,
    /// Ground-truth dog-to-obstacle clearance.
    pub min_dog_obstacle: T,
    pub qp_iterations: usize,
    /// Herding rows that are zero with a negative bound.
    pub certain_infeasible_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Replan {
        path_cells: usize,
        unknown_cells: usize,
    },
    ReplanFailed {
        reason: String,
    },
    SegmentFitted {
        index: usize,
        t_c: f64,
        duration: f64,
        terminal: bool,
    },
    Softened {
        max_slack: f64,
    },
    DogInsideObstacle {
        dog: usize,
        distance: f64,
    },
    ScanSkipped {
        dog: usize,
        reason: String,
    },
    TrajectoryComplete,
    Success,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub step: usize,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord<T> {
    pub segment: TrajectorySegment<T>,
    /// Largest mismatch in position, velocity or acceleration at `t_c`
    /// against the state it continues from.
    pub junction_residual: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub success: bool,
    pub failure: Option<String>,
    pub steps: usize,
    pub t_end: f64,
    pub n: usize,
    pub m: usize,
    pub herd_radius: f64,
    pub r_d: f64,
    pub settle_time: f64,
    pub settled: bool,
    pub replans: usize,
    pub segments: usize,
    pub softened_steps: usize,
    pub hard_feasible_fraction: f64,
    pub first_containment_time: Option<f64>,
    pub max_spread_after_containment: Option<f64>,
    pub min_dog_dog: f64,
    pub min_dog_obstacle: f64,
    pub max_control_inf: f64,
    pub max_segment_speed: f64,
    pub max_segment_accel: f64,
    pub max_junction_residual: f64,
    pub final_goal_distance: f64,
}

/// A planned path with, per cell, the distance to the nearest cell known
/// occupied at planning time (`None` for cells still unknown then, or when
/// nothing was occupied).
#[derive(Debug, Clone)]
pub struct PlanRecord<T> {
    pub t: T,
    pub path: GridPath<T>,
    pub clearance: Vec<Option<T>>,
}

impl<T: Scalar> PlanRecord<T> {
    /// Smallest recorded clearance over the path's mapped cells.
    pub fn min_known_clearance(&self) -> Option<T> {
        self.clearance.iter().flatten().copied().reduce(|a, b| a.min(b))
    }
}

#[derive(Debug, Clone)]
pub struct RunLog<T> {
    pub settle: SettleReport<T>,
    pub herd_radius: T,
    pub r_d: T,
    pub goal: Vec2<T>,
    pub records: Vec<StepRecord<T>>,
    pub events: Vec<Event>,
    pub segments: Vec<SegmentRecord<T>>,
    pub plans: Vec<PlanRecord<T>>,
    pub grid: OccupancyGrid<T>,
    pub skeleton: Vec<bool>,
    pub success: bool,
    pub failure: Option<String>,
}

impl<T: Scalar> RunLog<T> {
    pub fn n(&self) -> usize {
        self.settle.sheep.len()
    }

    pub fn m(&self) -> usize {
        self.records.first().map_or(0, |r| r.dogs.len())
    }

    pub fn csv_header(n: usize, m: usize) -> String {
        let mut h = String::from("step,t,ref_x,ref_y,ref_vx,ref_vy,ref_ax,ref_ay,centroid_x,centroid_y");
        for i in 0..n {
            let _ = write!(h, ",sheep{i}_x,sheep{i}_y");
        }
        for j in 0..m {
            let _ = write!(h, ",dog{j}_x,dog{j}_y,dog{j}_ux,dog{j}_uy");
        }
        h.push_str(",status,max_slack,spread,h_herd_min,min_dog_dog,min_dog_obstacle,qp_iterations");
        h
    }

    /// One row per control step; fixed column order (see [`RunLog::csv_header`]).
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let m = self.m();
        let mut s = String::with_capacity(self.records.len() * (40 + 24 * (2 * n + 4 * m)));
        s.push_str(&Self::csv_header(n, m));
        s.push('\n');
        for r in &self.records {
            let c = crate::dynamics::centroid(&r.sheep);
            let f = |v: T| v.as_f64();
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step,
                f(r.t),
                f(r.reference.pos.x),
                f(r.reference.pos.y),
                f(r.reference.vel.x),
                f(r.reference.vel.y),
                f(r.reference.acc.x),
                f(r.reference.acc.y),
                f(c.x),
                f(c.y)
            );
            for p in &r.sheep {
                let _ = write!(s, ",{},{}", f(p.x), f(p.y));
            }
            for (p, u) in r.dogs.iter().zip(&r.controls) {
                let _ = write!(s, ",{},{},{},{}", f(p.x), f(p.y), f(u.x), f(u.y));
            }
            let _ = writeln!(
                s,
                ",{},{},{},{},{},{},{}",
                r.status.as_str(),
                f(r.max_slack),
                f(r.spread),
                f(r.h_herd_min),
                f(r.min_dog_dog),
                f(r.min_dog_obstacle),
                r.qp_iterations
            );
        }
        s
    }

    pub fn replans(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Replan { .. }))
            .count()
    }

    /// First step at which every sheep is within `R_d` of the reference.
    pub fn first_containment(&self) -> Option<usize> {
        self.records.iter().position(|r| r.spread <= self.r_d)
    }

    pub fn summary(&self) -> RunSummary {
        let f = |v: T| v.as_f64();
        let steps = self.records.len();
        let softened = self
            .records
            .iter()
            .filter(|r| r.status == ControlStatus::Softened)
            .count();
        let first = self.first_containment();
        let after = first.map(|k| self.records[k..].iter().fold(0.0f64, |m, r| m.max(f(r.spread))));
        let (mut vmax, mut amax, mut junction) = (0.0f64, 0.0f64, 0.0f64);
        for s in &self.segments {
            let (v, a) = s.segment.sampled_extrema(1000);
            vmax = vmax.max(f(v));
            amax = amax.max(f(a));
            junction = junction.max(f(s.junction_residual));
        }
        let last_centroid = self
            .records
            .last()
            .map(|r| crate::dynamics::centroid(&r.sheep))
            .unwrap_or_else(|| crate::dynamics::centroid(&self.settle.sheep));
        RunSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            success: self.success,
            failure: self.failure.clone(),
            steps,
            t_end: self.records.last().map_or(0.0, |r| f(r.t)),
            n: self.n(),
            m: self.m(),
            herd_radius: f(self.herd_radius),
            r_d: f(self.r_d),
            settle_time: f(self.settle.time),
            settled: self.settle.settled,
            replans: self.replans(),
            segments: self.segments.len(),
            softened_steps: softened,
            hard_feasible_fraction: if steps == 0 {
                1.0
            } else {
                (steps - softened) as f64 / steps as f64
            },
            first_containment_time: first.map(|k| f(self.records[k].t)),
            max_spread_after_containment: after,
            min_dog_dog: self.records.iter().fold(f64::INFINITY, |m, r| m.min(f(r.min_dog_dog))),
            min_dog_obstacle: self
                .records
                .iter()
                .fold(f64::INFINITY, |m, r| m.min(f(r.min_dog_obstacle))),
            max_control_inf: self
                .records
                .iter()
                .flat_map(|r| r.controls.iter())
                .fold(0.0f64, |m, u| m.max(f(u.norm_inf()))),
            max_segment_speed: vmax,
            max_segment_accel: amax,
            max_junction_residual: junction,
            final_goal_distance: f(last_centroid.distance(self.goal)),
        }
    }
}

/// Path being followed, the window cursor and the active segment.
struct ReferencePlan<T> {
    path: GridPath<T>,
    next_index: usize,
    segment: TrajectorySegment<T>,
    terminal: bool,
}

struct Engine<'a, T: Scalar> {
    scenario: &'a Scenario<T>,
    cfg: &'a SimConfig<T>,
    gains: ControllerGains<T>,
    obstacle_gains: ControllerGains<T>,
    inflation: T,
    grid: OccupancyGrid<T>,
    occupied: Vec<CellIndex>,
    plan: ReferencePlan<T>,
    controller: Controller<T>,
    log: RunLog<T>,
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn event(&mut self, step: usize, t: T, kind: EventKind) {
        debug!("t = {t}: {kind:?}");
        self.log.events.push(Event {
            step,
            t: t.as_f64(),
            kind,
        });
    }

    fn scan(&mut self, step: usize, t: T, world: &WorldState<T>, dogs: &[usize]) {
        for &j in dogs {
            match simulate_lidar(&self.scenario.world, world.dogs[j], &self.cfg.lidar) {
                Ok(scan) => self.grid.update(&scan),
                Err(e) => self.event(
                    step,
                    t,
                    EventKind::ScanSkipped {
                        dog: j,
                        reason: e.to_string(),
                    },
                ),
            }
        }
        self.grid.inflate(self.inflation);
        self.occupied = self.grid.occupied_cells();
    }

    /// True when the followed path still crosses unknown space or has been
    /// invalidated by new obstacles.
    fn needs_replan(&self) -> bool {
        self.plan
            .path
            .cells
            .iter()
            .any(|&c| self.grid.state(c) != CellState::Free || self.grid.is_inflated(c))
    }

    fn fit_next(&mut self, step: usize, t_now: T, boundary: TrajectorySample<T>, t_c: T) -> Result<()> {
        let start = self.plan.next_index;
        let end = (start + self.cfg.window).min(self.plan.path.last_index());
        let window = path_window(&self.plan.path, start, self.cfg.window);
        let terminal = end == self.plan.path.last_index();
        let seg = fit_segment(&window, &boundary, t_c, terminal, self.cfg.bounds, &self.cfg.fit)?;
        let s0 = seg.eval_normalized(T::zero());
        let residual = (s0.pos - boundary.pos)
            .norm_inf()
            .max((s0.vel - boundary.vel).norm_inf())
            .max((s0.acc - boundary.acc).norm_inf());
        self.event(
            step,
            t_now,
            EventKind::SegmentFitted {
                index: self.log.segments.len(),
                t_c: t_c.as_f64(),
                duration: seg.duration.as_f64(),
                terminal,
            },
        );
        self.log.segments.push(SegmentRecord {
            segment: seg.clone(),
            junction_residual: residual,
        });
        self.plan.segment = seg;
        self.plan.next_index = end;
        self.plan.terminal = terminal;
        Ok(())
    }

    fn replan(&mut self, step: usize, t: T) -> Result<()> {
        let current = self.plan.segment.eval(t);
        match plan_path(&self.grid, current.pos, self.scenario.goal) {
            Ok(path) => {
                let unknown = path
                    .cells
                    .iter()
                    .filter(|&&c| self.grid.state(c) == CellState::Unknown)
                    .count();
                self.event(
                    step,
                    t,
                    EventKind::Replan {
                        path_cells: path.len(),
                        unknown_cells: unknown,
                    },
                );
                let dist = self.grid.occupied_distance();
                let clearance = path
                    .cells
                    .iter()
                    .map(|&c| match self.grid.state(c) {
                        CellState::Unknown => None,
                        _ => dist[self.grid.flat(c)],
                    })
                    .collect();
                self.log.plans.push(PlanRecord {
                    t,
                    path: path.clone(),
                    clearance,
                });
                self.plan.path = path;
                self.plan.next_index = 0;
                self.fit_next(step, t, current, t)
            }
            Err(e) => {
                self.event(step, t, EventKind::ReplanFailed { reason: e.to_string() });
                Ok(())
            }
        }
    }
}

/// Runs a scenario to completion, time budget exhaustion or failure.
/// Failures after the loop started are recorded in the log, not returned.
pub fn run<T: Scalar>(scenario: &Scenario<T>) -> Result<RunLog<T>> {
    scenario.validate()?;
    let cfg = &scenario.config;
    let settle = settle_flock(&scenario.sheep, &cfg.flock, &cfg.settle)?;
    let herd_radius = cfg.herd_radius_override.unwrap_or(settle.herd_radius);
    let mut gains = cfg.gains;
    gains.r_d = herd_radius + cfg.r_s;
    gains.validate()?;
    let mut obstacle_gains = gains;
    obstacle_gains.r_circ = gains.r_circ + cfg.obstacle_margin.unwrap_or(cfg.grid_resolution * T::FRAC_1_SQRT_2());
    info!(
        "settled in {} s, herd radius {herd_radius}, R_d {}",
        settle.time, gains.r_d
    );

    let start = crate::dynamics::centroid(&settle.sheep);
    let grid = OccupancyGrid::covering(&scenario.world.bounds, cfg.grid_resolution)?;
    let initial = TrajectorySegment::constant(start, T::zero(), cfg.fit.hold_duration, cfg.bounds);
    let mut engine = Engine {
        scenario,
        cfg,
        gains,
        obstacle_gains,
        inflation: herd_radius + cfg.inflation_margin.unwrap_or(cfg.grid_resolution * T::FRAC_1_SQRT_2()),
        occupied: Vec::new(),
        plan: ReferencePlan {
            path: GridPath {
                cells: vec![grid.clamp_cell(start)],
                points: vec![start],
            },
            next_index: 0,
            segment: initial,
            terminal: false,
        },
        log: RunLog {
            settle: settle.clone(),
            herd_radius,
            r_d: gains.r_d,
            goal: scenario.goal,
            records: Vec::new(),
            events: Vec::new(),
            segments: Vec::new(),
            plans: Vec::new(),
            grid: grid.clone(),
            skeleton: Vec::new(),
            success: false,
            failure: None,
        },
        grid,
        controller: Controller::new(cfg.controller),
    };

    let mut world = WorldState::new(settle.sheep.clone(), scenario.dogs.clone());
    let total_steps = (cfg.t_final / cfg.dt).round().to_usize().unwrap_or(0);
    let m = world.m();
    let period = cfg.scan_period_steps;
    let mut dwell = T::zero();
    let mut have_plan = false;
    let mut completed = false;

    for step in 0..total_steps {
        let t = T::c(step as f64) * cfg.dt;
        world.t = t;
        if let Err(e) = tick(&mut engine, &mut world, step, t, period, m, &mut have_plan) {
            warn!("run aborted at t = {t}: {e}");
            engine.log.failure = Some(e.to_string());
            break;
        }
        let traj_done = engine.plan.terminal && t >= engine.plan.segment.end_time();
        if traj_done && !completed {
            completed = true;
            engine.event(step, t, EventKind::TrajectoryComplete);
        }
        if traj_done && world.sheep_centroid().distance(scenario.goal) <= cfg.success_radius {
            dwell += cfg.dt;
            if dwell >= cfg.success_dwell - cfg.dt * T::c(1e-6) {
                engine.log.success = true;
                engine.event(step, world.t, EventKind::Success);
                break;
            }
        } else {
            dwell = T::zero();
        }
    }
    engine.log.skeleton = extract_skeleton(&engine.grid);
    engine.log.grid = engine.grid;
    Ok(engine.log)
}

fn tick<T: Scalar>(
    engine: &mut Engine<'_, T>,
    world: &mut WorldState<T>,
    step: usize,
    t: T,
    period: usize,
    m: usize,
    have_plan: &mut bool,
) -> Result<()> {
    let cfg = engine.cfg;
    // Sensing: all dogs at once, or dog j at offset j * period / m.
    let scanning: Vec<usize> = if cfg.scan_stagger {
        (0..m).filter(|&j| step % period == j * period / m).collect()
    } else if step.is_multiple_of(period) {
        (0..m).collect()
    } else {
        Vec::new()
    };
    let full_scan = step.is_multiple_of(period);
    if !scanning.is_empty() {
        engine.scan(step, t, world, &scanning);
    }
    if full_scan && (!*have_plan || engine.needs_replan()) {
        engine.replan(step, t)?;
        *have_plan = true;
    }
    while !engine.plan.terminal && t >= engine.plan.segment.end_time() {
        let boundary = engine.plan.segment.terminal_state();
        let t_c = engine.plan.segment.end_time();
        engine.fit_next(step, t, boundary, t_c)?;
    }

    let reference = engine.plan.segment.eval(t);
    let derivs = SheepDerivatives::compute(world, &cfg.flock)?;
    let herding = herding_block(world, &engine.gains, &reference, &derivs)?;
    let diag = feasibility_diagnostic(&herding);
    let points: Vec<Vec<Vec2<T>>> = world
        .dogs
        .iter()
        .map(|&x| nearest_points_among(&engine.grid, &engine.occupied, x, cfg.obstacle_points))
        .collect();
    let obstacle = match obstacle_block(&world.dogs, &points, &engine.obstacle_gains) {
        Ok(b) => b,
        Err(Error::DogInsideObstacle { dog, distance, .. }) => {
            engine.event(step, t, EventKind::DogInsideObstacle { dog, distance });
            obstacle_block_unchecked(&world.dogs, &points, &engine.obstacle_gains)?
        }
        Err(e) => return Err(e),
    };
    let interdog = interdog_block(&world.dogs, &engine.gains);
    let u_ref = reference_velocity(&world.dogs, reference.pos, &engine.gains);
    let (h, g) = objective_terms(
        &herding.block.a,
        &u_ref,
        cfg.controller.epsilon_reg,
        cfg.controller.linear_form,
        cfg.controller.pair_matrix,
    )?;
    let out = engine
        .controller
        .solve(&herding.block, &[&obstacle, &interdog], &h, &g, cfg.flock.u_bar)?;
    if out.status == ControlStatus::Softened {
        let max_slack = out.max_slack().as_f64();
        engine.event(step, t, EventKind::Softened { max_slack });
    }

    let spread = world
        .sheep
        .iter()
        .fold(T::zero(), |acc, &x| acc.max(x.distance(reference.pos)));
    let h_min = herding_barrier(world, &engine.gains, reference.pos)
        .into_iter()
        .fold(T::infinity(), T::min);
    let mut dd = T::infinity();
    for j in 0..m {
        for k in (j + 1)..m {
            dd = dd.min(world.dogs[j].distance(world.dogs[k]));
        }
    }
    let dob = world
        .dogs
        .iter()
        .fold(T::infinity(), |acc, &x| acc.min(engine.scenario.world.clearance(x)));
    engine.log.records.push(StepRecord {
        step,
        t,
        sheep: world.sheep.clone(),
        dogs: world.dogs.clone(),
        controls: out.u.clone(),
        reference,
        status: out.status,
        max_slack: out.max_slack(),
        spread,
        h_herd_min: h_min,
        min_dog_dog: dd,
        min_dog_obstacle: dob,
        qp_iterations: out.iterations,
        certain_infeasible_rows: diag.zero_rows_with_negative_rhs,
    });

    *world = rk4_step(world, &cfg.flock, &out.u, cfg.dt)?;
    Ok(())
}
