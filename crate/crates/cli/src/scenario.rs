//! TOML scenario files: schema, defaults, `key=value` overrides and
//! conversion into an engine [`Scenario`].
//!
//! Every table rejects unknown keys. Omitted tables and keys take the
//! engine defaults.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use shepherd::cbf::{ControllerConfig, ControllerGains, LinearForm, PairMatrix};
use shepherd::dynamics::FlockParams;
use shepherd::geometry::{Aabb, Polygon, Vec2};
use shepherd::mapping::{GroundTruthWorld, LidarSpec};
use shepherd::qp::QpSettings;
use shepherd::sim::{Scenario, SettleConfig, SimConfig};
use shepherd::trajectory::{FitSettings, TrajectoryBounds};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid override `{spec}`: {reason}")]
    Override { spec: String, reason: String },
    #[error("invalid value for `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error(transparent)]
    Engine(#[from] shepherd::Error),
}

impl ScenarioError {
    fn field(field: &str, reason: impl Into<String>) -> Self {
        Self::Field {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Offending field, when the error is tied to one.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            Self::Field { field, .. } => Some(field),
            Self::Engine(shepherd::Error::Validation { field, .. }) => Some(field),
            Self::Override { spec, .. } => spec.split('=').next(),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Read { .. } => "io",
            Self::Syntax(_) => "parse",
            Self::Override { .. } => "override",
            Self::Field { .. } => "validation",
            Self::Engine(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// Seeds the random sheep placement.
    #[serde(default)]
    pub seed: u64,
    pub goal: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheep: Option<Vec<Point>>,
    pub dogs: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_sheep: Option<RandomSheep>,
    pub world: WorldSection,
    #[serde(default)]
    pub flock: FlockSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub trajectory: TrajectorySection,
    #[serde(default)]
    pub lidar: LidarSection,
    #[serde(default)]
    pub settle: SettleSection,
    #[serde(default)]
    pub check: CheckSection,
}

/// Sheep drawn uniformly from a square around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSheep {
    pub count: usize,
    pub center: Point,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    /// `[min, max]` corners of the workspace.
    pub bounds: [Point; 2],
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub vertices: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlockSection {
    pub k_s: f64,
    pub k_d: f64,
    pub r_s: f64,
    pub v_bar: f64,
    pub u_bar: f64,
}

impl Default for FlockSection {
    fn default() -> Self {
        let p = FlockParams::<f64>::reference();
        Self {
            k_s: p.k_s,
            k_d: p.k_d,
            r_s: p.r_s,
            v_bar: p.v_bar,
            u_bar: p.u_bar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    pub p1: f64,
    pub p2: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub r: f64,
    pub r_circ: f64,
    pub r_a: f64,
    pub r_f: f64,
    pub k_f: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        let g = ControllerGains::<f64>::with_herd_radius(0.0);
        Self {
            p1: g.p1,
            p2: g.p2,
            lambda: g.lambda,
            gamma: g.gamma,
            r: g.r,
            r_circ: g.r_circ,
            r_a: g.r_a,
            r_f: g.r_f,
            k_f: g.k_f,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub epsilon_reg: f64,
    pub w_slack: f64,
    pub linear_form: LinearForm,
    pub pair_matrix: PairMatrix,
    pub soft_residual_tol: f64,
    pub qp_max_iter: usize,
    pub qp_tol: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let c = ControllerConfig::<f64>::default();
        Self {
            epsilon_reg: c.epsilon_reg,
            w_slack: c.w_slack,
            linear_form: c.linear_form,
            pair_matrix: c.pair_matrix,
            soft_residual_tol: c.soft_residual_tol,
            qp_max_iter: c.qp.max_iter,
            qp_tol: c.qp.tol_prim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    /// Margin added to the herd radius to form `R_d`.
    pub r_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub herd_radius: Option<f64>,
    pub scan_period_steps: usize,
    pub scan_stagger: bool,
    pub grid_resolution: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inflation_margin: Option<f64>,
    pub obstacle_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstacle_margin: Option<f64>,
    pub window: usize,
    pub success_radius: f64,
    pub success_dwell: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = SimConfig::<f64>::default();
        Self {
            dt: c.dt,
            t_final: c.t_final,
            r_s: c.r_s,
            herd_radius: c.herd_radius_override,
            scan_period_steps: c.scan_period_steps,
            scan_stagger: c.scan_stagger,
            grid_resolution: c.grid_resolution,
            inflation_margin: c.inflation_margin,
            obstacle_points: c.obstacle_points,
            obstacle_margin: c.obstacle_margin,
            window: c.window,
            success_radius: c.success_radius,
            success_dwell: c.success_dwell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub v_max: f64,
    pub a_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cruise_speed: Option<f64>,
    pub smoothing: f64,
    pub samples: usize,
    pub hold_duration: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        let c = SimConfig::<f64>::default();
        Self {
            v_max: c.bounds.v_max,
            a_max: c.bounds.a_max,
            cruise_speed: c.fit.cruise_speed,
            smoothing: c.fit.smoothing,
            samples: c.fit.samples,
            hold_duration: c.fit.hold_duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSection {
    pub max_range: f64,
    pub angular_step_deg: f64,
}

impl Default for LidarSection {
    fn default() -> Self {
        let l = LidarSpec::<f64>::default();
        Self {
            max_range: l.max_range,
            angular_step_deg: l.angular_step.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SettleSection {
    pub dt: f64,
    pub speed_tol: f64,
    pub max_time: f64,
}

impl Default for SettleSection {
    fn default() -> Self {
        let s = SettleConfig::<f64>::default();
        Self {
            dt: s.dt,
            speed_tol: s.speed_tol,
            max_time: s.max_time,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    /// Obstacle index pairs whose narrow gap is intentional: reported,
    /// not counted as violations.
    pub allow_narrow: Vec<[usize; 2]>,
}

/// Tables an unqualified override key may live in, root first.
const SECTIONS: [&str; 9] = [
    "",
    "flock",
    "gains",
    "controller",
    "sim",
    "trajectory",
    "lidar",
    "settle",
    "random_sheep",
];

fn vec2(p: Point) -> Vec2<f64> {
    Vec2::new(p[0], p[1])
}

impl ScenarioFile {
    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    /// Applies `key=value` overrides. `key` is either dotted
    /// (`gains.p1`) or a bare name that exists in exactly one table.
    /// Values use TOML syntax; anything that does not parse is a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ScenarioError> {
        let mut current = self.clone();
        for spec in overrides {
            let spec = spec.as_ref();
            let bad = |reason: String| ScenarioError::Override {
                spec: spec.to_owned(),
                reason,
            };
            let (key, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value".into()))?;
            let (key, raw) = (key.trim(), raw.trim());
            if key.is_empty() {
                return Err(bad("empty key".into()));
            }
            let value = parse_value(raw);
            let base = toml::Table::try_from(&current).expect("scenario files always serialize");
            let candidates: Vec<String> = match key.split_once('.') {
                Some(_) => vec![key.to_owned()],
                None => SECTIONS
                    .iter()
                    .map(|s| {
                        if s.is_empty() {
                            key.to_owned()
                        } else {
                            format!("{s}.{key}")
                        }
                    })
                    .collect(),
            };
            let mut hits: Vec<(String, ScenarioFile)> = Vec::new();
            let mut last_err = String::from("unknown key");
            for path in candidates {
                let mut table = base.clone();
                if let Err(e) = set_path(&mut table, &path, value.clone()) {
                    last_err = e;
                    continue;
                }
                match toml::Value::Table(table).try_into::<ScenarioFile>() {
                    Ok(f) => hits.push((path, f)),
                    Err(e) => last_err = e.to_string(),
                }
            }
            current = match hits.len() {
                1 => hits.pop().unwrap().1,
                0 => return Err(bad(last_err.trim().to_owned())),
                _ => {
                    let names: Vec<_> = hits.into_iter().map(|h| h.0).collect();
                    return Err(bad(format!("ambiguous key, qualify it as one of {}", names.join(", "))));
                }
            };
        }
        Ok(current)
    }

    /// Initial sheep positions: the explicit list, or the seeded draw.
    pub fn sheep_positions(&self) -> Result<Vec<Vec2<f64>>, ScenarioError> {
        match (&self.sheep, &self.random_sheep) {
            (Some(s), None) => Ok(s.iter().copied().map(vec2).collect()),
            (None, Some(r)) => {
                if r.count == 0 {
                    return Err(ScenarioError::field("random_sheep.count", "must be >= 1"));
                }
                if !(r.half_width > 0.0 && r.half_width.is_finite()) {
                    return Err(ScenarioError::field(
                        "random_sheep.half_width",
                        "must be finite and > 0",
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let c = vec2(r.center);
                Ok((0..r.count)
                    .map(|_| {
                        let x = rng.gen_range(c.x - r.half_width..c.x + r.half_width);
                        let y = rng.gen_range(c.y - r.half_width..c.y + r.half_width);
                        Vec2::new(x, y)
                    })
                    .collect())
            }
            (Some(_), Some(_)) => Err(ScenarioError::field(
                "sheep",
                "give either `sheep` or `random_sheep`, not both",
            )),
            (None, None) => Err(ScenarioError::field("sheep", "missing: give `sheep` or `random_sheep`")),
        }
    }

    pub fn world(&self) -> Result<GroundTruthWorld<f64>, ScenarioError> {
        let [lo, hi] = self.world.bounds;
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(ScenarioError::field(
                "world.bounds",
                "min corner must lie below and left of max corner",
            ));
        }
        let mut obstacles = Vec::with_capacity(self.world.obstacles.len());
        for (i, o) in self.world.obstacles.iter().enumerate() {
            if o.vertices.len() < 3 {
                return Err(ScenarioError::field(
                    "world.obstacles",
                    format!("obstacle {i} has {} vertices, need at least 3", o.vertices.len()),
                ));
            }
            obstacles.push(Polygon::new(o.vertices.iter().copied().map(vec2).collect()));
        }
        Ok(GroundTruthWorld::new(obstacles, Aabb::new(vec2(lo), vec2(hi))))
    }

    pub fn sim_config(&self) -> SimConfig<f64> {
        let f = &self.flock;
        let g = &self.gains;
        let c = &self.controller;
        let s = &self.sim;
        let t = &self.trajectory;
        let qp = QpSettings {
            max_iter: c.qp_max_iter,
            tol_prim: c.qp_tol,
            tol_dual: c.qp_tol,
            ..QpSettings::default()
        };
        SimConfig {
            flock: FlockParams {
                k_s: f.k_s,
                k_d: f.k_d,
                r_s: f.r_s,
                v_bar: f.v_bar,
                u_bar: f.u_bar,
                ..FlockParams::reference()
            },
            gains: ControllerGains {
                p1: g.p1,
                p2: g.p2,
                lambda: g.lambda,
                gamma: g.gamma,
                r: g.r,
                r_d: g.r + s.r_s,
                r_circ: g.r_circ,
                r_a: g.r_a,
                r_f: g.r_f,
                k_f: g.k_f,
            },
            controller: ControllerConfig {
                epsilon_reg: c.epsilon_reg,
                w_slack: c.w_slack,
                linear_form: c.linear_form,
                pair_matrix: c.pair_matrix,
                qp,
                soft_qp: qp,
                soft_residual_tol: c.soft_residual_tol,
            },
            r_s: s.r_s,
            herd_radius_override: s.herd_radius,
            settle: SettleConfig {
                dt: self.settle.dt,
                speed_tol: self.settle.speed_tol,
                max_time: self.settle.max_time,
            },
            dt: s.dt,
            t_final: s.t_final,
            lidar: LidarSpec {
                max_range: self.lidar.max_range,
                angular_step: self.lidar.angular_step_deg.to_radians(),
            },
            scan_period_steps: s.scan_period_steps,
            scan_stagger: s.scan_stagger,
            grid_resolution: s.grid_resolution,
            inflation_margin: s.inflation_margin,
            obstacle_points: s.obstacle_points,
            obstacle_margin: s.obstacle_margin,
            bounds: TrajectoryBounds {
                v_max: t.v_max,
                a_max: t.a_max,
            },
            window: s.window,
            fit: FitSettings {
                smoothing: t.smoothing,
                samples: t.samples,
                hold_duration: t.hold_duration,
                cruise_speed: t.cruise_speed,
                ..FitSettings::default()
            },
            success_radius: s.success_radius,
            success_dwell: s.success_dwell,
        }
    }

    /// Builds and validates the engine scenario.
    pub fn to_scenario(&self) -> Result<Scenario<f64>, ScenarioError> {
        let sc = Scenario {
            world: self.world()?,
            sheep: self.sheep_positions()?,
            dogs: self.dogs.iter().copied().map(vec2).collect(),
            goal: vec2(self.goal),
            config: self.sim_config(),
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let leaf = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        cur = match cur.entry(p).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => return Err(format!("`{p}` is not a table")),
        };
    }
    cur.insert(leaf.to_owned(), value);
    Ok(())
}
