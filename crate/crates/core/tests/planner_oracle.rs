use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shepherd::geometry::Vec2;
use shepherd::mapping::{CellIndex, CellState, OccupancyGrid};
use shepherd::planner::{extract_skeleton, plan_path, GridPath};

type V = Vec2<f64>;

fn free_grid(rows: usize, cols: usize) -> OccupancyGrid<f64> {
    let mut g = OccupancyGrid::new(V::zero(), rows, cols, 0.1).unwrap();
    for k in 0..g.len() {
        g.set_state(g.unflat(k), CellState::Free);
    }
    g
}

fn check_path_shape(g: &OccupancyGrid<f64>, p: &GridPath<f64>) {
    for w in p.cells.windows(2) {
        assert!(
            w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1,
            "{w:?} not adjacent"
        );
        assert_ne!(w[0], w[1]);
    }
    let mut seen = std::collections::HashSet::new();
    for c in &p.cells {
        assert!(seen.insert(*c), "cell {c:?} repeated");
    }
    assert_eq!(p.cells.len(), p.points.len());
    let _ = g;
}

/// Clearance of known path cells against the occupied layer.
fn min_known_clearance(g: &OccupancyGrid<f64>, cells: &[CellIndex]) -> f64 {
    let dist = g.occupied_distance();
    cells
        .iter()
        .filter(|&&c| g.state(c) != CellState::Unknown)
        .map(|&c| dist[g.flat(c)].unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn corridor_skeleton_follows_midline() {
    let mut g = free_grid(40, 60);
    for c in 0..60 {
        g.set_state((5, c), CellState::Occupied);
        g.set_state((17, c), CellState::Occupied);
    }
    g.inflate(0.3);
    let sk = extract_skeleton(&g);
    let cells: Vec<CellIndex> = (0..g.len()).filter(|&k| sk[k]).map(|k| g.unflat(k)).collect();
    let inside: Vec<_> = cells.iter().filter(|c| c.0 > 5 && c.0 < 17).collect();
    assert!(inside.len() >= 50, "skeleton too sparse: {}", inside.len());
    for c in &inside {
        assert!(c.0.abs_diff(11) <= 1, "skeleton cell {c:?} off the midline row 11");
    }
}

#[test]
fn convex_obstacle_skeleton_keeps_clearance() {
    let mut g = free_grid(60, 60);
    for r in 25..35 {
        for c in 25..35 {
            g.set_state((r, c), CellState::Occupied);
        }
    }
    g.inflate(0.4);
    let sk = extract_skeleton(&g);
    let dist = g.occupied_distance();
    for k in 0..g.len() {
        if sk[k] {
            assert!(
                dist[k].unwrap() > 0.4,
                "skeleton cell {:?} inside inflation",
                g.unflat(k)
            );
        }
    }
}

/// L-shaped corridor: east along y ∈ [0.5, 2.0], then north along
/// x ∈ [4.0, 5.5]; known up to y = 4, unknown beyond, goal further north.
fn l_corridor() -> OccupancyGrid<f64> {
    let mut g = OccupancyGrid::new(V::zero(), 100, 70, 0.1).unwrap();
    let inside = |x: f64, y: f64| {
        ((0.0..=5.5).contains(&x) && (0.5..=2.0).contains(&y))
            || ((4.0..=5.5).contains(&x) && (0.5..=10.0).contains(&y))
    };
    for k in 0..g.len() {
        let c = g.unflat(k);
        let p = g.cell_center(c);
        if p.y > 4.0 {
            continue;
        }
        let near_inside = [(-0.1, 0.0), (0.1, 0.0), (0.0, -0.1), (0.0, 0.1), (0.0, 0.0)]
            .iter()
            .any(|(dx, dy)| inside(p.x + dx, p.y + dy));
        let state = if inside(p.x, p.y) {
            CellState::Free
        } else if near_inside {
            CellState::Occupied
        } else {
            CellState::Unknown
        };
        g.set_state(c, state);
    }
    g.inflate(0.5);
    g
}

#[test]
fn l_corridor_path_hugs_midline_and_exits_straight() {
    let g = l_corridor();
    let start = V::new(0.75, 1.25);
    let goal = V::new(4.75, 9.0);
    let p = plan_path(&g, start, goal).unwrap();
    check_path_shape(&g, &p);
    assert_eq!(p.cells[0], g.cell_of(start).unwrap());
    assert_eq!(*p.cells.last().unwrap(), g.cell_of(goal).unwrap());
    assert!(min_known_clearance(&g, &p.cells) >= 0.5 - 1e-9);
    // Straight runs of the known corridor sit on the midline.
    for &c in &p.cells {
        let q = g.cell_center(c);
        if q.x > 1.5 && q.x < 3.2 {
            assert!((q.y - 1.25).abs() <= 0.11, "east leg off midline at {q:?}");
        }
        if q.y > 2.8 {
            assert!((q.x - 4.75).abs() <= 0.11, "north leg off midline at {q:?}");
        }
    }
}

#[test]
fn replanning_is_deterministic() {
    let g = l_corridor();
    let a = plan_path(&g, V::new(0.75, 1.25), V::new(4.75, 9.0)).unwrap();
    let b = plan_path(&g.clone(), V::new(0.75, 1.25), V::new(4.75, 9.0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with("k,x,y\n0,0.75,1.25\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_maps_give_valid_paths(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = OccupancyGrid::new(V::zero(), 50, 50, 0.1).unwrap();
        for k in 0..g.len() {
            let c = g.unflat(k);
            if rng.gen_bool(0.6) {
                g.set_state(c, CellState::Free);
            }
        }
        for _ in 0..rng.gen_range(0..5) {
            let (r0, c0) = (rng.gen_range(0..45), rng.gen_range(0..45));
            for r in r0..r0 + rng.gen_range(1..6) {
                for c in c0..c0 + rng.gen_range(1..6) {
                    g.set_state((r, c), CellState::Occupied);
                }
            }
        }
        g.inflate(0.2);
        let start = V::new(rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0));
        let goal = V::new(rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0));
        let sc = g.cell_of(start).unwrap();
        prop_assume!(!g.is_inflated(sc) && g.state(sc) != CellState::Occupied);
        if let Ok(p) = plan_path(&g, start, goal) {
            check_path_shape(&g, &p);
            prop_assert_eq!(p.cells[0], sc);
            prop_assert_eq!(*p.cells.last().unwrap(), g.cell_of(goal).unwrap());
            for &c in &p.cells {
                prop_assert!(!g.is_inflated(c) || c == *p.cells.last().unwrap());
            }
            prop_assert_eq!(p, plan_path(&g, start, goal).unwrap());
        }
    }
}
