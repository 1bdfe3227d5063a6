//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::qp_oracle::{dual_active_set, enumerate_active_sets, Dense};
use common::random_qp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shepherd::cbf::ControlStatus;
use shepherd::dynamics::{sheep_jacobian_wrt_dog, sheep_jacobian_wrt_sheep, sheep_velocity, FlockParams, WorldState};
use shepherd::geometry::{Mat2, Polygon, Vec2};
use shepherd::linalg::dot;
use shepherd::qp::{solve, QpSettings, QpStatus};
use shepherd::sim::{run, settle_flock, RunLog, Scenario, SettleConfig};
use shepherd::trajectory::TrajectorySample;
use shepherd_cli::ScenarioFile;

type V = Vec2<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Run {
    scenario: Scenario<f64>,
    log: RunLog<f64>,
    wall: Duration,
}

fn load(name: &str) -> Scenario<f64> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"));
    ScenarioFile::load(&path)
        .and_then(|f| f.to_scenario())
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn execute(name: &str) -> Run {
    let scenario = load(name);
    let t0 = Instant::now();
    let log = run(&scenario).unwrap_or_else(|e| panic!("{name}: {e}"));
    Run {
        scenario,
        log,
        wall: t0.elapsed(),
    }
}

fn fd_jacobian(
    w: &WorldState<f64>,
    p: &FlockParams<f64>,
    i: usize,
    perturb: impl Fn(&mut WorldState<f64>, V),
) -> Mat2<f64> {
    let h = 1e-6;
    let col = |e: V| {
        let mut plus = w.clone();
        perturb(&mut plus, e * h);
        let mut minus = w.clone();
        perturb(&mut minus, e * -h);
        (sheep_velocity(&plus, p, i).unwrap() - sheep_velocity(&minus, p, i).unwrap()) / (2.0 * h)
    };
    let cx = col(V::new(1.0, 0.0));
    let cy = col(V::new(0.0, 1.0));
    Mat2::new(cx.x, cy.x, cx.y, cy.y)
}

fn jacobian_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let p = FlockParams::reference();
    let mut worst = 0.0f64;
    let mut configs = 0;
    while configs < 100 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=3);
        let sheep: Vec<V> = (0..n)
            .map(|_| V::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
            .collect();
        let dogs: Vec<V> = (0..m)
            .map(|_| V::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
            .collect();
        let all: Vec<V> = sheep.iter().chain(&dogs).copied().collect();
        let separated = (0..all.len()).all(|a| (a + 1..all.len()).all(|b| all[a].distance(all[b]) > 0.25));
        if !separated {
            continue;
        }
        configs += 1;
        let w = WorldState::new(sheep, dogs);
        let rel = |an: Mat2<f64>, fd: Mat2<f64>| (an - fd).max_abs() / fd.max_abs().max(1e-4);
        for i in 0..n {
            for k in (0..n).filter(|&k| k != i) {
                let an = sheep_jacobian_wrt_sheep(&w, &p, i, k).unwrap();
                worst = worst.max(rel(an, fd_jacobian(&w, &p, i, |w, e| w.sheep[k] += e)));
            }
            for j in 0..m {
                let an = sheep_jacobian_wrt_dog(&w, &p, i, j).unwrap();
                worst = worst.max(rel(an, fd_jacobian(&w, &p, i, |w, e| w.dogs[j] += e)));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-5 && secs < 5.0,
        format!("100 configurations, worst relative error {worst:.2e} (<= 1e-5), {secs:.2} s (< 5 s)"),
    )
}

fn qp_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    let (mut enumerated, mut not_optimal) = (0, 0);
    for _ in 0..200 {
        let dim = rng.gen_range(1..=12);
        let rows = rng.gen_range(0..=20);
        let p = random_qp(&mut rng, dim, rows);
        let d = Dense::from_problem(&p);
        let reference = if d.g.len() <= 16 {
            enumerated += 1;
            enumerate_active_sets(&d)
        } else {
            dual_active_set(&d)
        };
        let (_, f_ref) = reference.expect("feasible by construction");
        let s = solve(&p, &QpSettings::default()).unwrap();
        if s.status != QpStatus::Optimal {
            not_optimal += 1;
            continue;
        }
        worst_gap = worst_gap.max((p.objective(&s.x) - f_ref).abs());
        let mut kkt = p.max_violation(&s.x);
        let hx = p.h.mul_vec(&s.x);
        let atl = p.a.tr_mul_vec(&s.ineq_multipliers);
        for i in 0..dim {
            kkt = kkt.max((hx[i] + p.g[i] + atl[i] + s.box_multipliers[i]).abs());
            let nu = s.box_multipliers[i];
            let gap = if nu >= 0.0 {
                p.upper[i] - s.x[i]
            } else {
                s.x[i] - p.lower[i]
            };
            kkt = kkt.max((nu * gap).abs());
        }
        for (i, &l) in s.ineq_multipliers.iter().enumerate() {
            kkt = kkt.max(-l).max((l * (p.b[i] - dot(p.a.row(i), &s.x))).abs());
        }
        worst_kkt = worst_kkt.max(kkt);
    }
    let secs = t0.elapsed().as_secs_f64();
    Outcome::new(
        not_optimal == 0 && worst_gap <= 1e-5 && worst_kkt <= 1e-6 && secs < 30.0,
        format!(
            "200 problems ({enumerated} by enumeration, rest by dual active set), {not_optimal} not optimal, \
             objective gap {worst_gap:.2e} (<= 1e-5), KKT residual {worst_kkt:.2e} (<= 1e-6), {secs:.2} s (< 30 s)"
        ),
    )
}

/// Largest sheep distance from the reference after the first step at which
/// every sheep is within `R_d`.
fn spread_after_containment(log: &RunLog<f64>) -> Option<f64> {
    let spread = |k: usize| {
        let r = &log.records[k];
        r.sheep.iter().map(|s| s.distance(r.reference.pos)).fold(0.0, f64::max)
    };
    let first = (0..log.records.len()).find(|&k| spread(k) <= log.r_d)?;
    Some((first..log.records.len()).map(spread).fold(0.0, f64::max))
}

fn containment(log: &RunLog<f64>) -> (bool, String) {
    match spread_after_containment(log) {
        Some(s) => (
            s <= log.r_d + 1e-3,
            format!("spread {s:.4} <= R_d {:.4} + 1e-3", log.r_d),
        ),
        None => (false, "never contained".into()),
    }
}

fn success_time(log: &RunLog<f64>) -> Option<f64> {
    log.success.then(|| log.records.last().map_or(0.0, |r| r.t))
}

fn open_field(r: &Run) -> Outcome {
    let (contained, spread) = containment(&r.log);
    let t_end = success_time(&r.log);
    let wall = r.wall.as_secs_f64();
    let n_ok = r.log.n() == 11 && r.log.m() == 3;
    Outcome::new(
        n_ok && contained && t_end.is_some_and(|t| t <= 120.0) && wall < 180.0,
        format!(
            "n={} m={}, success at {}, {spread}, wall {wall:.1} s (< 180 s)",
            r.log.n(),
            r.log.m(),
            t_end.map_or("never".into(), |t| format!("{t:.2} s (<= 120 s)")),
        ),
    )
}

/// Heading change between the first and last metre of a path.
fn path_turn(points: &[V]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let (start, end) = (points[0], points[points.len() - 1]);
    let first = points.iter().find(|p| p.distance(start) >= 1.0).copied().unwrap_or(end);
    let last = points
        .iter()
        .rev()
        .find(|p| p.distance(end) >= 1.0)
        .copied()
        .unwrap_or(start);
    let (a, b) = (first - start, end - last);
    a.cross(b).atan2(a.dot(b)).abs().to_degrees()
}

fn l_corridor(r: &Run) -> Outcome {
    let log = &r.log;
    let (contained, spread) = containment(log);
    let gains = &r.scenario.config.gains;
    let mut dog_dog = f64::INFINITY;
    let mut dog_obstacle = f64::INFINITY;
    for rec in &log.records {
        for (j, a) in rec.dogs.iter().enumerate() {
            dog_obstacle = dog_obstacle.min(r.scenario.world.clearance(*a));
            for b in &rec.dogs[j + 1..] {
                dog_dog = dog_dog.min(a.distance(*b));
            }
        }
    }
    let turn = log.plans.iter().map(|p| path_turn(&p.path.points)).fold(0.0, f64::max);
    Outcome::new(
        log.n() == 3
            && log.m() == 2
            && contained
            && dog_dog >= gains.r_a - 1e-3
            && dog_obstacle >= gains.r_circ - 1e-3
            && turn >= 60.0,
        format!(
            "{spread}, dog-dog {dog_dog:.3} >= {}, dog-obstacle {dog_obstacle:.3} >= {}, planned turn {turn:.1} deg (>= 60)",
            gains.r_a, gains.r_circ
        ),
    )
}

fn polygon_distance(poly: &Polygon<f64>, p: V) -> f64 {
    if poly.contains(p) {
        0.0
    } else {
        poly.boundary_distance(p)
    }
}

fn maze(r: &Run) -> Outcome {
    let log = &r.log;
    let radius = log.herd_radius;
    let obstacles = &r.scenario.world.obstacles;
    let (a, b) = (&obstacles[4], &obstacles[5]);
    let in_slot = |p: V| polygon_distance(a, p) < radius && polygon_distance(b, p) < radius;
    let mut worst_clearance = f64::INFINITY;
    let mut slot_points = 0;
    for plan in &log.plans {
        if let Some(c) = plan.min_known_clearance() {
            worst_clearance = worst_clearance.min(c);
        }
        let pts = &plan.path.points;
        slot_points += pts.iter().filter(|&&p| in_slot(p)).count();
        slot_points += pts.windows(2).filter(|w| in_slot((w[0] + w[1]) * 0.5)).count();
    }
    let replans = log.replans();
    let (contained, spread) = containment(log);
    Outcome::new(
        log.n() == 7 && log.m() == 3 && log.success && worst_clearance >= radius && slot_points == 0 && replans >= 2,
        format!(
            "success {}, known path clearance {worst_clearance:.3} >= R̄_s {radius:.3}, {slot_points} path points in the slot, \
             {replans} replans (>= 2), {spread}{}",
            log.success,
            if contained { "" } else { " (not contained)" }
        ),
    )
}

fn trajectory_bounds(runs: &[&Run]) -> Outcome {
    let (mut v, mut a, mut junction) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    let mismatch = |x: &TrajectorySample<f64>, y: &TrajectorySample<f64>| {
        (x.pos - y.pos)
            .norm_inf()
            .max((x.vel - y.vel).norm_inf())
            .max((x.acc - y.acc).norm_inf())
    };
    for r in runs {
        let segs = &r.log.segments;
        let start = r.log.settle.sheep.iter().fold(V::zero(), |s, p| s + *p) / r.log.settle.sheep.len() as f64;
        for (k, rec) in segs.iter().enumerate() {
            let seg = &rec.segment;
            count += 1;
            for i in 0..1000 {
                let s = seg.eval_normalized(i as f64 / 999.0);
                v = v.max(s.vel.norm_inf());
                a = a.max(s.acc.norm_inf());
            }
            let before = match k {
                0 => TrajectorySample::rest(start),
                _ => {
                    let prev = &segs[k - 1].segment;
                    let tau = (seg.t_c - prev.t_c) / prev.duration;
                    if tau <= 1.0 + 1e-12 {
                        prev.eval_normalized(tau.min(1.0))
                    } else {
                        prev.eval(seg.t_c)
                    }
                }
            };
            junction = junction.max(mismatch(&seg.eval_normalized(0.0), &before));
        }
    }
    Outcome::new(
        count > 0 && v <= 0.48 + 1e-9 && a <= 0.2 + 1e-9 && junction <= 1e-9,
        format!("{count} segments, max speed {v:.4} (<= 0.48), max accel {a:.4} (<= 0.2), junction residual {junction:.1e} (<= 1e-9)"),
    )
}

fn hard_feasibility(r: &Run) -> Outcome {
    let total = r.log.records.len();
    let hard = r
        .log
        .records
        .iter()
        .filter(|s| s.status == ControlStatus::HardFeasible)
        .count();
    Outcome::new(
        r.log.n() == 3 && r.log.m() == 3 && total > 0 && hard == total,
        format!("{hard}/{total} steps hard feasible, success {}", r.log.success),
    )
}

fn determinism(a: &Run, b: &Run) -> Outcome {
    let (x, y) = (a.log.to_csv(), b.log.to_csv());
    Outcome::new(x == y, format!("{} bytes, identical: {}", x.len(), x == y))
}

fn equilibrium() -> Outcome {
    let s = settle_flock(
        &[V::new(0.0, 0.0), V::new(0.8, 0.3)],
        &FlockParams::reference(),
        &SettleConfig::default(),
    )
    .unwrap();
    let d = s.sheep[0].distance(s.sheep[1]);
    Outcome::new(
        s.settled && (d - 0.5).abs() <= 1e-3 && (s.herd_radius - 0.25).abs() <= 5e-4,
        format!("distance {d:.6} (0.5 ± 1e-3), R̄_s {:.6} (0.25 ± 5e-4)", s.herd_radius),
    )
}

fn main() -> ExitCode {
    let (open, open_again, corridor, maze_run, triad) = std::thread::scope(|s| {
        let open = s.spawn(|| execute("open_field"));
        let open_again = s.spawn(|| execute("open_field"));
        let corridor = s.spawn(|| execute("l_corridor"));
        let maze_run = s.spawn(|| execute("maze"));
        let triad = s.spawn(|| execute("triad"));
        (
            open.join().unwrap(),
            open_again.join().unwrap(),
            corridor.join().unwrap(),
            maze_run.join().unwrap(),
            triad.join().unwrap(),
        )
    });

    let results = [
        ("jacobian oracle", jacobian_oracle()),
        ("qp oracle", qp_oracle()),
        ("obstacle-free herding", open_field(&open)),
        ("confined area", l_corridor(&corridor)),
        ("maze", maze(&maze_run)),
        ("trajectory bounds", trajectory_bounds(&[&open, &corridor, &maze_run])),
        ("hard feasibility with n = m", hard_feasibility(&triad)),
        ("determinism", determinism(&open, &open_again)),
        ("herd-radius equilibrium", equilibrium()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "{} {}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
