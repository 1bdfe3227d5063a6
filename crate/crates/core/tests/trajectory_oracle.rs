use proptest::prelude::*;
use shepherd::geometry::Vec2;
use shepherd::trajectory::{fit_segment, FitSettings, TrajectoryBounds, TrajectorySample, TrajectorySegment};

type V = Vec2<f64>;

const BOUNDS: TrajectoryBounds<f64> = TrajectoryBounds {
    v_max: 0.48,
    a_max: 0.2,
};

/// 8-connected L: 30 cells east then 40 cells north, 0.1 m spacing.
fn l_path() -> Vec<V> {
    let mut pts: Vec<V> = (0..=30).map(|k| V::new(0.1 * k as f64, 0.0)).collect();
    pts.extend((1..=40).map(|k| V::new(3.0, 0.1 * k as f64)));
    pts
}

fn chain(points: &[V], h: usize) -> Vec<TrajectorySegment<f64>> {
    let mut segs = Vec::new();
    let mut start = 0;
    let mut boundary = TrajectorySample::rest(points[0]);
    let mut t = 0.0;
    while start < points.len() - 1 {
        let end = (start + h).min(points.len() - 1);
        let terminal = end == points.len() - 1;
        let seg = fit_segment(
            &points[start..=end],
            &boundary,
            t,
            terminal,
            BOUNDS,
            &FitSettings::default(),
        )
        .unwrap();
        boundary = seg.terminal_state();
        t = seg.end_time();
        segs.push(seg);
        start = end;
    }
    segs
}

#[test]
fn chained_segments_are_continuous_and_bounded() {
    let segs = chain(&l_path(), 20);
    assert!(segs.len() >= 3);
    for w in segs.windows(2) {
        let a = w[0].terminal_state();
        let b = w[1].eval(w[1].t_c);
        assert!((a.pos - b.pos).norm_inf() < 1e-9);
        assert!((a.vel - b.vel).norm_inf() < 1e-9);
        assert!((a.acc - b.acc).norm_inf() < 1e-9);
        assert_eq!(w[0].end_time(), w[1].t_c);
    }
    for s in &segs {
        let (v, a) = s.sampled_extrema(1000);
        assert!(v <= 0.48 + 1e-9, "speed {v}");
        assert!(a <= 0.2 + 1e-9, "accel {a}");
    }
    let last = segs.last().unwrap().terminal_state();
    assert!((last.pos - V::new(3.0, 4.0)).norm() < 1e-9);
    assert!(last.vel.norm() < 1e-9);
}

#[test]
fn fit_tracks_window_points() {
    let segs = chain(&l_path(), 50);
    let pts = l_path();
    // A degree-7 regression rounds a right-angle corner by about 0.2 m.
    for p in &pts {
        let mut best = f64::INFINITY;
        for s in &segs {
            for j in 0..=400 {
                let q = s.eval_normalized(j as f64 / 400.0).pos;
                best = best.min(q.distance(*p));
            }
        }
        assert!(best < 0.25, "point {p:?} is {best} m from the fitted curve");
    }
}

/// Fourth-order central differences (Richardson), step 1e-3 of the duration.
fn fd_check(seg: &TrajectorySegment<f64>, t: f64) {
    let h = 1e-3 * seg.duration;
    let s = seg.eval(t);
    let d = |f: &dyn Fn(f64) -> V| {
        (f(t + h) - f(t - h)) * (8.0 / (12.0 * h)) - (f(t + 2.0 * h) - f(t - 2.0 * h)) / (12.0 * h)
    };
    let vel_fd = d(&|t| seg.eval(t).pos);
    let acc_fd = d(&|t| seg.eval(t).vel);
    let rel = |a: V, b: V| (a - b).norm_inf() / b.norm_inf().max(1e-3);
    assert!(rel(vel_fd, s.vel) < 1e-6, "velocity {vel_fd:?} vs {:?}", s.vel);
    assert!(rel(acc_fd, s.acc) < 1e-6, "accel {acc_fd:?} vs {:?}", s.acc);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivatives_match_finite_differences(frac in 0.01f64..0.99, h in 5usize..60) {
        let segs = chain(&l_path(), h);
        for s in &segs {
            fd_check(s, s.t_c + frac * s.duration);
        }
    }

    #[test]
    fn random_windows_respect_bounds(
        pts in prop::collection::vec((-0.1f64..0.1, -0.1f64..0.1), 2..50),
        v0 in (-0.3f64..0.3, -0.3f64..0.3),
        a0 in (-0.15f64..0.15, -0.15f64..0.15),
        terminal in any::<bool>(),
    ) {
        let mut window = vec![V::zero()];
        for (dx, dy) in pts {
            let last = *window.last().unwrap();
            window.push(last + V::new(dx, dy));
        }
        let boundary = TrajectorySample { pos: V::zero(), vel: V::new(v0.0, v0.1), acc: V::new(a0.0, a0.1) };
        let seg = fit_segment(&window, &boundary, 2.0, terminal, BOUNDS, &FitSettings::default()).unwrap();
        let (v, a) = seg.sampled_extrema(1000);
        prop_assert!(v <= 0.48 + 1e-9 && a <= 0.2 + 1e-9, "v {} a {}", v, a);
        let s0 = seg.eval(2.0);
        prop_assert!((s0.pos - boundary.pos).norm_inf() < 1e-9);
        prop_assert!((s0.vel - boundary.vel).norm_inf() < 1e-9);
        prop_assert!((s0.acc - boundary.acc).norm_inf() < 1e-9);
        let end = seg.terminal_state();
        prop_assert!((end.pos - *window.last().unwrap()).norm_inf() < 1e-6);
        if terminal {
            prop_assert!(end.vel.norm_inf() < 1e-9 && end.acc.norm_inf() < 1e-9);
        }
    }
}

#[test]
fn segment_csv_layout() {
    let segs = chain(&l_path(), 50);
    let csv = segs[0].to_csv(5);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x,y,vx,vy,ax,ay");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0,0,0,0,0,0,0"));
}
