use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shepherd::dynamics::{
    sheep_acceleration, sheep_jacobian_wrt_dog, sheep_jacobian_wrt_sheep, sheep_velocities, sheep_velocity,
    unsaturated_velocity, FlockParams, WorldState,
};
use shepherd::geometry::{Mat2, Vec2};

type V = Vec2<f64>;

const FD_STEP: f64 = 1e-6;

fn params() -> FlockParams<f64> {
    FlockParams::reference()
}

fn min_separation(w: &WorldState<f64>) -> f64 {
    let all: Vec<V> = w.sheep.iter().chain(&w.dogs).copied().collect();
    let mut d = f64::INFINITY;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            d = d.min(all[i].distance(all[j]));
        }
    }
    d
}

fn random_world(rng: &mut impl Rng, n: usize, m: usize) -> WorldState<f64> {
    loop {
        let sheep = (0..n)
            .map(|_| V::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
            .collect();
        let dogs = (0..m)
            .map(|_| V::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
            .collect();
        let w = WorldState::new(sheep, dogs);
        if min_separation(&w) > 0.25 {
            return w;
        }
    }
}

/// Central finite differences of f_i with respect to a perturbed agent.
fn fd_jacobian(w: &WorldState<f64>, i: usize, perturb: impl Fn(&mut WorldState<f64>, V)) -> Mat2<f64> {
    let p = params();
    let col = |e: V| {
        let mut plus = w.clone();
        perturb(&mut plus, e * FD_STEP);
        let mut minus = w.clone();
        perturb(&mut minus, e * -FD_STEP);
        (sheep_velocity(&plus, &p, i).unwrap() - sheep_velocity(&minus, &p, i).unwrap()) / (2.0 * FD_STEP)
    };
    let cx = col(V::new(1.0, 0.0));
    let cy = col(V::new(0.0, 1.0));
    Mat2::new(cx.x, cy.x, cx.y, cy.y)
}

/// Relative error with an absolute floor of 1e-4.
fn rel_err(a: Mat2<f64>, b: Mat2<f64>) -> f64 {
    (a - b).max_abs() / b.max_abs().max(1e-4)
}

#[test]
fn velocity_matches_independent_transcription() {
    // Frozen from a straight-line scripted transcription of the flock law.
    let w = WorldState::new(
        vec![V::new(-0.731272, 0.694867), V::new(0.527549, -0.489862)],
        vec![V::new(-0.027389, -0.303054)],
    );
    let p = FlockParams::new(0.3, 0.15, 0.5, 0.4, 0.4).unwrap();
    let expected = [
        V::new(0.2602381479816764, -0.23176016734041155),
        V::new(0.0459305154916832, 0.19049116548340478),
    ];
    for (i, e) in expected.iter().enumerate() {
        let v = sheep_velocity(&w, &p, i).unwrap();
        assert!((v - *e).norm_inf() < 1e-12, "sheep {i}: {v:?} vs {e:?}");
    }
}

#[test]
fn jacobians_match_finite_differences_far_and_at_rest_distance() {
    let far = WorldState::new(vec![V::new(0.0, 0.0), V::new(4.0, 3.0)], vec![]);
    let rest = WorldState::new(vec![V::new(0.0, 0.0), V::new(0.5, 0.0)], vec![]);
    for w in [far, rest] {
        let an = sheep_jacobian_wrt_sheep(&w, &params(), 0, 1).unwrap();
        let fd = fd_jacobian(&w, 0, |w, e| w.sheep[1] += e);
        assert!(rel_err(an, fd) < 1e-5, "{an:?} vs {fd:?}");
    }
}

#[test]
fn jacobians_match_finite_differences_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = params();
    for _ in 0..100 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=3);
        let w = random_world(&mut rng, n, m);
        for i in 0..n {
            for k in 0..n {
                if k == i {
                    continue;
                }
                let an = sheep_jacobian_wrt_sheep(&w, &p, i, k).unwrap();
                let fd = fd_jacobian(&w, i, |w, e| w.sheep[k] += e);
                assert!(rel_err(an, fd) < 1e-5, "sheep block ({i},{k}): {an:?} vs {fd:?}");
            }
            for j in 0..m {
                let an = sheep_jacobian_wrt_dog(&w, &p, i, j).unwrap();
                let fd = fd_jacobian(&w, i, |w, e| w.dogs[j] += e);
                assert!(rel_err(an, fd) < 1e-5, "dog block ({i},{j}): {an:?} vs {fd:?}");
            }
        }
    }
}

#[test]
fn acceleration_matches_temporal_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = params();
    let h = 1e-6;
    for _ in 0..30 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=3);
        let w = random_world(&mut rng, n, m);
        let us = sheep_velocities(&w, &p).unwrap();
        let ud: Vec<V> = (0..m)
            .map(|_| V::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)))
            .collect();
        let shifted = |s: f64| WorldState {
            sheep: w.sheep.iter().zip(&us).map(|(x, u)| *x + *u * s).collect(),
            dogs: w.dogs.iter().zip(&ud).map(|(x, u)| *x + *u * s).collect(),
            t: 0.0,
        };
        let (wp, wm) = (shifted(h), shifted(-h));
        for i in 0..n {
            let a = sheep_acceleration(&w, &p, &us, &ud, i).unwrap();
            let fd = (sheep_velocity(&wp, &p, i).unwrap() - sheep_velocity(&wm, &p, i).unwrap()) / (2.0 * h);
            let err = (a - fd).norm_inf() / fd.norm_inf().max(1e-8);
            assert!(err < 1e-4, "sheep {i}: {a:?} vs {fd:?}");
        }
    }
}

fn world_strategy() -> impl Strategy<Value = WorldState<f64>> {
    (1usize..=5, 0usize..=3)
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n),
                prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0), m),
            )
        })
        .prop_map(|(s, d)| {
            WorldState::new(
                s.into_iter().map(|(x, y)| V::new(x, y)).collect(),
                d.into_iter().map(|(x, y)| V::new(x, y)).collect(),
            )
        })
        .prop_filter("agents well separated", |w| min_separation(w) > 0.05)
}

proptest! {
    #[test]
    fn velocity_stays_within_saturation_bound(w in world_strategy()) {
        let p = params();
        for i in 0..w.n() {
            let u = unsaturated_velocity(&w, &p, i).unwrap();
            let v = sheep_velocity(&w, &p, i).unwrap();
            for (uc, vc) in [(u.x, v.x), (u.y, v.y)] {
                prop_assert!(vc.abs() <= p.v_bar);
                // tanh rounds to exactly 1 in f64 once |u/v̄| exceeds ~19.
                if (uc / p.v_bar).abs() < 18.0 {
                    prop_assert!(vc.abs() < p.v_bar);
                }
            }
        }
    }

    #[test]
    fn translation_leaves_velocity_and_jacobians_unchanged(w in world_strategy(), ox in -50.0f64..50.0, oy in -50.0f64..50.0) {
        let p = params();
        let off = V::new(ox, oy);
        let mut t = w.clone();
        t.sheep.iter_mut().for_each(|x| *x += off);
        t.dogs.iter_mut().for_each(|x| *x += off);
        for i in 0..w.n() {
            let a = sheep_velocity(&w, &p, i).unwrap();
            let b = sheep_velocity(&t, &p, i).unwrap();
            // Offsets of ~50 m cost ~6 digits of the coordinate differences.
            prop_assert!((a - b).norm_inf() <= 1e-12 * (1.0 + off.norm()) * 1e2);
            for j in 0..w.m() {
                let ja = sheep_jacobian_wrt_dog(&w, &p, i, j).unwrap();
                let jb = sheep_jacobian_wrt_dog(&t, &p, i, j).unwrap();
                prop_assert!((ja - jb).max_abs() <= 1e-10 * (1.0 + ja.max_abs()));
            }
        }
    }

    #[test]
    fn swapping_two_sheep_permutes_outputs(w in world_strategy()) {
        prop_assume!(w.n() >= 2);
        let p = params();
        let mut s = w.clone();
        s.sheep.swap(0, 1);
        let v = sheep_velocities(&w, &p).unwrap();
        let vs = sheep_velocities(&s, &p).unwrap();
        prop_assert!((v[0] - vs[1]).norm_inf() < 1e-15);
        prop_assert!((v[1] - vs[0]).norm_inf() < 1e-15);
        for i in 2..w.n() {
            prop_assert!((v[i] - vs[i]).norm_inf() < 1e-15);
        }
        let j01 = sheep_jacobian_wrt_sheep(&w, &p, 0, 1).unwrap();
        let j10s = sheep_jacobian_wrt_sheep(&s, &p, 1, 0).unwrap();
        prop_assert!((j01 - j10s).max_abs() < 1e-15);
    }
}
