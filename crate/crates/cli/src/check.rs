//! Static audit of a scenario before running it: parameter ranges, initial
//! placement and the passage-width requirement `2 R̄_s <= gap` between
//! every pair of separated obstacles.

use serde::Serialize;
use shepherd::geometry::Polygon;
use shepherd::sim::settle_flock;

use crate::scenario::{ScenarioError, ScenarioFile};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gap {
    pub obstacles: [usize; 2],
    pub width: f64,
    /// Listed under `check.allow_narrow` in the scenario.
    pub allowed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub herd_radius: f64,
    pub herd_radius_settled: bool,
    /// `2 R̄_s`.
    pub min_gap: f64,
    /// Separated obstacle pairs closer than `min_gap`.
    pub narrow_gaps: Vec<Gap>,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Boundary distance, or zero when the polygons touch, cross or nest.
pub fn obstacle_gap(a: &Polygon<f64>, b: &Polygon<f64>) -> f64 {
    if a.vertices.iter().any(|&p| b.contains(p)) || b.vertices.iter().any(|&p| a.contains(p)) {
        return 0.0;
    }
    a.distance_to_polygon(b)
}

fn violation(field: &str, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        message: message.into(),
    }
}

/// Runs every audit and collects the findings. Only unreadable geometry
/// is an error; everything else lands in the report.
pub fn check(file: &ScenarioFile) -> Result<CheckReport, ScenarioError> {
    let world = file.world()?;
    let cfg = file.sim_config();
    let mut violations = Vec::new();

    let sheep = match file.sheep_positions() {
        Ok(s) => s,
        Err(e) => {
            violations.push(violation(e.field_name().unwrap_or("sheep"), e.to_string()));
            Vec::new()
        }
    };
    let (herd_radius, settled) = match (cfg.herd_radius_override, sheep.is_empty()) {
        (Some(r), _) => (r, true),
        (None, true) => (0.0, false),
        (None, false) => match settle_flock(&sheep, &cfg.flock, &cfg.settle) {
            Ok(s) => (s.herd_radius, s.settled),
            Err(e) => {
                violations.push(violation("flock", e.to_string()));
                (0.0, false)
            }
        },
    };

    match file.to_scenario() {
        Err(e) => violations.push(violation(e.field_name().unwrap_or("scenario"), e.to_string())),
        Ok(_) if !sheep.is_empty() => {
            let mut gains = cfg.gains;
            gains.r_d = herd_radius + cfg.r_s;
            if let Err(e) = gains.validate() {
                let e = ScenarioError::Engine(e);
                violations.push(violation(e.field_name().unwrap_or("gains"), e.to_string()));
            }
        }
        Ok(_) => {}
    }

    for (name, pts) in [
        ("sheep", &sheep),
        (
            "dogs",
            &file.dogs.iter().map(|p| shepherd::Vec2::new(p[0], p[1])).collect(),
        ),
    ] {
        for (i, p) in pts.iter().enumerate() {
            if !world.bounds.contains(*p) {
                violations.push(violation(name, format!("position {i} lies outside the workspace")));
            }
        }
    }
    for (j, d) in file.dogs.iter().enumerate() {
        let c = world.clearance(shepherd::Vec2::new(d[0], d[1]));
        if c < cfg.gains.r_circ {
            violations.push(violation(
                "dogs",
                format!(
                    "dog {j} starts {c:.3} m from an obstacle, below R_circ = {}",
                    cfg.gains.r_circ
                ),
            ));
        }
    }
    let goal = shepherd::Vec2::new(file.goal[0], file.goal[1]);
    let goal_clearance = world.clearance(goal);
    if world.obstacle_containing(goal).is_none() && goal_clearance < herd_radius {
        violations.push(violation(
            "goal",
            format!("goal clearance {goal_clearance:.3} m is below the herd radius {herd_radius:.3} m"),
        ));
    }

    let min_gap = 2.0 * herd_radius;
    let mut narrow_gaps = Vec::new();
    for i in 0..world.obstacles.len() {
        for k in (i + 1)..world.obstacles.len() {
            let width = obstacle_gap(&world.obstacles[i], &world.obstacles[k]);
            if width > 0.0 && width < min_gap {
                let allowed = file
                    .check
                    .allow_narrow
                    .iter()
                    .any(|p| (p[0], p[1]) == (i, k) || (p[1], p[0]) == (i, k));
                if !allowed {
                    violations.push(violation(
                        "world.obstacles",
                        format!("obstacles {i} and {k} leave a {width:.3} m gap, below 2 R̄_s = {min_gap:.3} m"),
                    ));
                }
                narrow_gaps.push(Gap {
                    obstacles: [i, k],
                    width,
                    allowed,
                });
            }
        }
    }

    Ok(CheckReport {
        scenario: file.name.clone(),
        herd_radius,
        herd_radius_settled: settled,
        min_gap,
        narrow_gaps,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_walls(gap: f64, herd_radius: f64) -> ScenarioFile {
        let text = format!(
            r#"
name = "walls"
goal = [6.0, 0.0]
sheep = [[0.0, 0.0]]
dogs = [[-1.0, 0.0]]

[world]
bounds = [[-3.0, -5.0], [9.0, 5.0]]

[[world.obstacles]]
vertices = [[3.0, {top}], [3.5, {top}], [3.5, 4.0], [3.0, 4.0]]

[[world.obstacles]]
vertices = [[3.0, -4.0], [3.5, -4.0], [3.5, {bottom}], [3.0, {bottom}]]

[sim]
herd_radius = {herd_radius}
"#,
            top = gap / 2.0,
            bottom = -gap / 2.0,
        );
        ScenarioFile::parse(&text).unwrap()
    }

    #[test]
    fn wide_enough_gap_passes() {
        let r = check(&two_walls(1.2, 0.5)).unwrap();
        assert!(r.is_clean(), "{:?}", r.violations);
        assert!(r.narrow_gaps.is_empty());
        assert_eq!(r.min_gap, 1.0);
    }

    #[test]
    fn gap_just_below_twice_the_radius_is_flagged() {
        let r = check(&two_walls(1.0 - 1e-6, 0.5)).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].field, "world.obstacles");
        assert!((r.narrow_gaps[0].width - (1.0 - 1e-6)).abs() < 1e-12);
    }

    #[test]
    fn allowed_gap_is_reported_but_not_a_violation() {
        let mut f = two_walls(0.4, 0.5);
        f.check.allow_narrow = vec![[1, 0]];
        let r = check(&f).unwrap();
        assert!(r.is_clean());
        assert!(r.narrow_gaps[0].allowed);
    }

    #[test]
    fn touching_obstacles_are_not_gaps() {
        let a = Polygon::rect(shepherd::Vec2::new(0.0, 0.0), shepherd::Vec2::new(1.0, 1.0));
        let b = Polygon::rect(shepherd::Vec2::new(1.0, 0.0), shepherd::Vec2::new(2.0, 1.0));
        let inner = Polygon::rect(shepherd::Vec2::new(0.2, 0.2), shepherd::Vec2::new(0.4, 0.4));
        assert_eq!(obstacle_gap(&a, &b), 0.0);
        assert_eq!(obstacle_gap(&a, &inner), 0.0);
    }

    #[test]
    fn margin_must_stay_inside_the_protected_radius() {
        let mut f = two_walls(1.2, 0.0);
        f.sim.herd_radius = None;
        let r = check(&f).unwrap();
        assert_eq!(r.herd_radius, 0.0);
        let fields: Vec<_> = r.violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, ["r"]);
    }

    #[test]
    fn placement_and_range_problems_are_listed() {
        let mut f = two_walls(1.2, 0.5);
        f.dogs = vec![[3.25, 2.0]];
        f.gains.r_a = -1.0;
        let r = check(&f).unwrap();
        let fields: Vec<_> = r.violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, ["r_a", "dogs"]);
    }
}
