//! Reference QP solvers independent of the ADMM implementation.
//!
//! Both work on `min ½xᵀPx + qᵀx  s.t.  Gx ≤ h` where the box has been
//! folded into `G` as `±e_i` rows.

#![allow(dead_code)]

use shepherd::linalg::{dot, Lu, Matrix};
use shepherd::qp::QpProblem;

pub struct Dense {
    pub p: Matrix<f64>,
    pub q: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

impl Dense {
    pub fn from_problem(prob: &QpProblem<f64>) -> Self {
        let n = prob.dim();
        let mut g = Vec::new();
        let mut h = Vec::new();
        for i in 0..prob.a.rows() {
            g.push(prob.a.row(i).to_vec());
            h.push(prob.b[i]);
        }
        for i in 0..n {
            if prob.upper[i].is_finite() {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                g.push(e);
                h.push(prob.upper[i]);
            }
            if prob.lower[i].is_finite() {
                let mut e = vec![0.0; n];
                e[i] = -1.0;
                g.push(e);
                h.push(-prob.lower[i]);
            }
        }
        Self {
            p: prob.h.clone(),
            q: prob.g.clone(),
            g,
            h,
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.p.mul_vec(x)) + dot(&self.q, x)
    }

    /// Solves the KKT system with the listed rows held at equality.
    /// Returns `(x, multipliers)` or `None` if singular.
    fn equality_kkt(&self, active: &[usize], rhs_x: &[f64], rhs_c: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n();
        let k = active.len();
        let mut m = Matrix::zeros(n + k, n + k);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.p[(i, j)];
            }
        }
        for (a, &r) in active.iter().enumerate() {
            for j in 0..n {
                m[(n + a, j)] = self.g[r][j];
                m[(j, n + a)] = self.g[r][j];
            }
        }
        let lu = Lu::new(&m, 1e-12)?;
        let mut rhs = rhs_x.to_vec();
        rhs.extend_from_slice(rhs_c);
        let sol = lu.solve(&rhs);
        Some((sol[..n].to_vec(), sol[n..].to_vec()))
    }
}

/// Exhaustive search over every subset of constraints held active; the KKT
/// point is the unique subset solution that is primal and dual feasible.
/// Exponential in the constraint count.
pub fn enumerate_active_sets(d: &Dense) -> Option<(Vec<f64>, f64)> {
    let rows = d.g.len();
    assert!(rows <= 16, "enumeration oracle limited to 16 constraints");
    let n = d.n();
    let neg_q: Vec<f64> = d.q.iter().map(|v| -v).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1u32 << rows) {
        let active: Vec<usize> = (0..rows).filter(|r| mask & (1 << r) != 0).collect();
        if active.len() > n {
            continue;
        }
        let hs: Vec<f64> = active.iter().map(|&r| d.h[r]).collect();
        let Some((x, lam)) = d.equality_kkt(&active, &neg_q, &hs) else {
            continue;
        };
        if lam.iter().any(|&l| l < -1e-9) {
            continue;
        }
        if (0..rows).any(|r| dot(&d.g[r], &x) > d.h[r] + 1e-9) {
            continue;
        }
        let f = d.objective(&x);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((x, f));
        }
    }
    best
}

/// Dual active-set method in the style of Goldfarb and Idnani: start at the
/// unconstrained minimizer and repeatedly add the most violated constraint,
/// dropping active constraints whose multipliers would turn negative.
/// Returns `None` if the problem is infeasible.
pub fn dual_active_set(d: &Dense) -> Option<(Vec<f64>, f64)> {
    let n = d.n();
    let rows = d.g.len();
    let neg_q: Vec<f64> = d.q.iter().map(|v| -v).collect();
    let (mut x, _) = d.equality_kkt(&[], &neg_q, &[])?;
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();
    for _outer in 0..10 * (rows + n + 1) {
        let mut p = None;
        let mut worst = 1e-11;
        for r in 0..rows {
            if active.contains(&r) {
                continue;
            }
            let v = dot(&d.g[r], &x) - d.h[r];
            if v > worst {
                worst = v;
                p = Some(r);
            }
        }
        let Some(p) = p else {
            let f = d.objective(&x);
            return Some((x, f));
        };
        let mut lam_p = 0.0;
        loop {
            let neg_gp: Vec<f64> = d.g[p].iter().map(|v| -v).collect();
            let zeros = vec![0.0; active.len()];
            let (z, r) = d.equality_kkt(&active, &neg_gp, &zeros)?;
            let violation = dot(&d.g[p], &x) - d.h[p];
            let gz = dot(&d.g[p], &z);
            let t2 = if gz < -1e-14 { violation / -gz } else { f64::INFINITY };
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, (&l, &rk)) in lam.iter().zip(&r).enumerate() {
                if rk < -1e-14 {
                    let t = l / -rk;
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            if !t1.is_finite() && !t2.is_finite() {
                return None;
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                for i in 0..n {
                    x[i] += t * z[i];
                }
            }
            for (l, rk) in lam.iter_mut().zip(&r) {
                *l += t * rk;
            }
            lam_p += t;
            if t2 <= t1 {
                active.push(p);
                lam.push(lam_p);
                break;
            }
            let k = drop.unwrap();
            active.remove(k);
            lam.remove(k);
        }
    }
    None
}
