#![allow(dead_code)]

pub mod qp_oracle;

use rand::Rng;
use shepherd::linalg::Matrix;
use shepherd::qp::QpProblem;

/// Random feasible strictly convex QP with `dim` variables and `rows`
/// inequality rows; feasibility is guaranteed by building `b` around a point
/// inside the box.
pub fn random_qp(rng: &mut impl Rng, dim: usize, rows: usize) -> QpProblem<f64> {
    let m = Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let mut h = m.gram();
    h.add_diagonal(rng.gen_range(0.05..1.0));
    let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let x0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let a = Matrix::from_fn(rows, dim, |_, _| rng.gen_range(-1.0..1.0));
    let ax0 = a.mul_vec(&x0);
    let b: Vec<f64> = ax0.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
    let lower: Vec<f64> = x0.iter().map(|v| v - rng.gen_range(0.1..2.0)).collect();
    let upper: Vec<f64> = x0.iter().map(|v| v + rng.gen_range(0.1..2.0)).collect();
    QpProblem {
        h,
        g,
        a,
        b,
        lower,
        upper,
    }
}
