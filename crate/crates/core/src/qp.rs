//! Dense convex QP solver.
//!
//! Solves `min ½ xᵀHx + gᵀx  s.t.  Ax ≤ b,  lower ≤ x ≤ upper` with an
//! operator-splitting (ADMM) iteration on the stacked constraint
//! `l ≤ Cx ≤ u`, `C = [A; I]`. The iteration is over-relaxed, adapts its
//! penalty parameter, detects primal infeasibility from the dual iterates and
//! finishes with an active-set polish that recovers a high-accuracy KKT point.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, Cholesky, Lu, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct QpProblem<T> {
    pub h: Matrix<T>,
    pub g: Vec<T>,
    pub a: Matrix<T>,
    pub b: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Problem with no inequality rows and an unbounded box.
    pub fn unconstrained(h: Matrix<T>, g: Vec<T>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a: Matrix::zeros(0, n),
            b: Vec::new(),
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        if self.h.rows() != n || self.h.cols() != n {
            return mismatch(format!("H is {}x{}, expected {n}x{n}", self.h.rows(), self.h.cols()));
        }
        if self.a.rows() != self.b.len() {
            return mismatch(format!("A has {} rows but b has {}", self.a.rows(), self.b.len()));
        }
        if self.a.rows() > 0 && self.a.cols() != n {
            return mismatch(format!("A has {} columns, expected {n}", self.a.cols()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return mismatch("box bounds length differs from problem dimension".into());
        }
        let sym_tol = T::c(1e-12) * (T::one() + self.h.max_abs());
        if !self.h.is_symmetric(sym_tol) {
            return Err(Error::Precondition("H is not symmetric".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(Error::Precondition("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[T]) -> T {
        T::half() * dot(x, &self.h.mul_vec(x)) + dot(&self.g, x)
    }

    /// Largest violation of `Ax ≤ b` and of the box.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut v = T::zero();
        for (ax, b) in self.a.mul_vec(x).iter().zip(&self.b) {
            v = v.max(*ax - *b);
        }
        for ((xi, l), u) in x.iter().zip(&self.lower).zip(&self.upper) {
            v = v.max(*l - *xi).max(*xi - *u);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub status: QpStatus,
    pub primal_residual: T,
    pub dual_residual: T,
    pub iterations: usize,
    /// Multipliers of `Ax ≤ b` (nonnegative at optimality).
    pub ineq_multipliers: Vec<T>,
    /// Signed box multipliers: positive on an active upper bound, negative on
    /// an active lower bound.
    pub box_multipliers: Vec<T>,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings<T> {
    pub tol_prim: T,
    pub tol_dual: T,
    pub max_iter: usize,
    pub rho: T,
    pub sigma: T,
    /// Over-relaxation factor in (0, 2).
    pub alpha: T,
    pub adaptive_rho: bool,
    pub adapt_interval: usize,
    pub infeasibility_tol: T,
    pub polish: bool,
    /// Ruiz equilibration passes (0 disables scaling).
    pub scaling_iters: usize,
    /// Finish with an exact dual active-set solve when the iteration cap
    /// is hit and polishing fails.
    pub active_set_fallback: bool,
}

impl<T: Scalar> Default for QpSettings<T> {
    fn default() -> Self {
        Self {
            tol_prim: T::c(1e-6),
            tol_dual: T::c(1e-6),
            max_iter: 4000,
            rho: T::c(0.1),
            sigma: T::c(1e-6),
            alpha: T::c(1.6),
            adaptive_rho: true,
            adapt_interval: 25,
            infeasibility_tol: T::c(1e-7),
            polish: true,
            scaling_iters: 10,
            active_set_fallback: true,
        }
    }
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const INF_BOUND: f64 = 1e20;

/// Stateful solver that warm-starts from its previous solution when the
/// problem shape is unchanged.
#[derive(Debug, Clone)]
pub struct QpSolver<T> {
    pub settings: QpSettings<T>,
    warm: Option<WarmStart<T>>,
}

#[derive(Debug, Clone)]
struct WarmStart<T> {
    n: usize,
    rows: usize,
    x: Vec<T>,
    z: Vec<T>,
    y: Vec<T>,
    rho: T,
}

/// Cold solve with the given settings.
pub fn solve<T: Scalar>(problem: &QpProblem<T>, settings: &QpSettings<T>) -> Result<QpSolution<T>> {
    QpSolver::new(*settings).solve(problem)
}

impl<T: Scalar> QpSolver<T> {
    pub fn new(settings: QpSettings<T>) -> Self {
        Self { settings, warm: None }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, problem: &QpProblem<T>) -> Result<QpSolution<T>> {
        problem.validate()?;
        let n = problem.dim();
        let m_ineq = problem.a.rows();
        let rows = m_ineq + n;
        let s = &self.settings;

        let c = problem.a.vstack(&Matrix::identity(n));
        let big = T::c(INF_BOUND);
        let mut l = vec![-big; rows];
        let mut u = vec![big; rows];
        for i in 0..m_ineq {
            u[i] = problem.b[i].min(big);
        }
        for i in 0..n {
            l[m_ineq + i] = problem.lower[i].max(-big);
            u[m_ineq + i] = problem.upper[i].min(big);
        }
        // Detect a non-PD H up front rather than through a regularized factor.
        if n > 0 && Cholesky::new(&problem.h).is_none() {
            return Err(Error::NotPositiveDefinite);
        }

        // Equilibrated copy: x = D x̄, rows scaled by E, cost by `cost`.
        let sc = equilibrate(&problem.h, &problem.g, &c, s.scaling_iters);
        let hs = Matrix::from_fn(n, n, |i, j| sc.cost * sc.d[i] * problem.h[(i, j)] * sc.d[j]);
        let gs: Vec<T> = (0..n).map(|i| sc.cost * sc.d[i] * problem.g[i]).collect();
        let cs = Matrix::from_fn(rows, n, |r, j| sc.e[r] * c[(r, j)] * sc.d[j]);
        let ls: Vec<T> = (0..rows)
            .map(|i| if l[i] <= -big { -big } else { sc.e[i] * l[i] })
            .collect();
        let us: Vec<T> = (0..rows)
            .map(|i| if u[i] >= big { big } else { sc.e[i] * u[i] })
            .collect();
        let free_row: Vec<bool> = (0..rows).map(|i| l[i] <= -big && u[i] >= big).collect();
        let eq_row: Vec<bool> = (0..rows).map(|i| u[i] - l[i] <= T::c(1e-4) * s.tol_prim).collect();

        let (mut x, mut z, mut y, mut rho) = match &self.warm {
            Some(w) if w.n == n && w.rows == rows => (
                (0..n).map(|i| w.x[i] / sc.d[i]).collect::<Vec<T>>(),
                (0..rows).map(|i| w.z[i] * sc.e[i]).collect::<Vec<T>>(),
                (0..rows).map(|i| w.y[i] * sc.cost / sc.e[i]).collect::<Vec<T>>(),
                w.rho,
            ),
            _ => (vec![T::zero(); n], vec![T::zero(); rows], vec![T::zero(); rows], s.rho),
        };
        // Project the warm z into the new bounds.
        for i in 0..rows {
            z[i] = z[i].max(ls[i]).min(us[i]);
        }

        let row_rho = |rho: T| -> Vec<T> {
            (0..rows)
                .map(|i| {
                    if free_row[i] {
                        T::c(RHO_MIN)
                    } else if eq_row[i] {
                        rho * T::c(RHO_EQ_SCALE)
                    } else {
                        rho
                    }
                })
                .collect()
        };
        let factor = |rho_vec: &[T]| -> Result<Cholesky<T>> {
            let mut k = hs.clone();
            k.add_diagonal(s.sigma);
            for r in 0..rows {
                let cr = cs.row(r);
                for i in 0..n {
                    if cr[i] == T::zero() {
                        continue;
                    }
                    for j in 0..n {
                        k[(i, j)] += rho_vec[r] * cr[i] * cr[j];
                    }
                }
            }
            Cholesky::new(&k).ok_or(Error::NotPositiveDefinite)
        };

        let mut rho_vec = row_rho(rho);
        let mut chol = factor(&rho_vec)?;
        let alpha = s.alpha;
        let one = T::one();

        let mut status = QpStatus::MaxIter;
        let mut iterations = s.max_iter;
        let mut r_prim = T::infinity();
        let mut r_dual = T::infinity();

        for k in 1..=s.max_iter {
            let x_prev = x.clone();
            let z_prev = z.clone();
            let y_prev = y.clone();

            let w: Vec<T> = (0..rows).map(|i| rho_vec[i] * z[i] - y[i]).collect();
            let ctw = cs.tr_mul_vec(&w);
            let rhs: Vec<T> = (0..n).map(|i| s.sigma * x[i] - gs[i] + ctw[i]).collect();
            let x_tilde = chol.solve(&rhs);
            let z_tilde = cs.mul_vec(&x_tilde);

            for i in 0..n {
                x[i] = alpha * x_tilde[i] + (one - alpha) * x_prev[i];
            }
            for i in 0..rows {
                let relaxed = alpha * z_tilde[i] + (one - alpha) * z_prev[i];
                z[i] = (relaxed + y[i] / rho_vec[i]).max(ls[i]).min(us[i]);
                y[i] += rho_vec[i] * (relaxed - z[i]);
            }

            let cx = cs.mul_vec(&x);
            let hx = hs.mul_vec(&x);
            let cty = cs.tr_mul_vec(&y);
            // Residuals of the original problem.
            r_prim = (0..rows).fold(T::zero(), |m, i| m.max(((cx[i] - z[i]) / sc.e[i]).abs()));
            r_dual = (0..n).fold(T::zero(), |m, i| m.max(((hx[i] + gs[i] + cty[i]) / sc.d[i]).abs())) / sc.cost;

            if r_prim <= s.tol_prim && r_dual <= s.tol_dual {
                status = QpStatus::Optimal;
                iterations = k;
                break;
            }

            let dy: Vec<T> = (0..rows).map(|i| (y[i] - y_prev[i]) * sc.e[i]).collect();
            if primal_infeasible(&c, &dy, &l, &u, big, s.infeasibility_tol) {
                status = QpStatus::Infeasible;
                iterations = k;
                break;
            }

            if s.adaptive_rho && s.adapt_interval > 0 && k % s.adapt_interval == 0 {
                let prim_res = norm_inf(&cx.iter().zip(&z).map(|(a, b)| *a - *b).collect::<Vec<_>>());
                let dual_res = norm_inf(&(0..n).map(|i| hx[i] + gs[i] + cty[i]).collect::<Vec<_>>());
                let prim_scale = norm_inf(&cx).max(norm_inf(&z)).max(T::c(1e-12));
                let dual_scale = norm_inf(&hx).max(norm_inf(&cty)).max(norm_inf(&gs)).max(T::c(1e-12));
                let ratio = (prim_res / prim_scale) / (dual_res / dual_scale).max(T::c(1e-30));
                let new_rho = (rho * ratio.sqrt()).max(T::c(RHO_MIN)).min(T::c(RHO_MAX));
                if new_rho > rho * T::c(5.0) || new_rho < rho / T::c(5.0) {
                    rho = new_rho;
                    rho_vec = row_rho(rho);
                    chol = factor(&rho_vec)?;
                }
            }
        }

        // Back to the original variables.
        let x: Vec<T> = (0..n).map(|i| x[i] * sc.d[i]).collect();
        let z: Vec<T> = (0..rows).map(|i| z[i] / sc.e[i]).collect();
        let y: Vec<T> = (0..rows).map(|i| y[i] * sc.e[i] / sc.cost).collect();

        if status == QpStatus::Infeasible {
            self.warm = None;
            return Ok(QpSolution {
                x,
                status,
                primal_residual: r_prim,
                dual_residual: r_dual,
                iterations,
                ineq_multipliers: vec![T::zero(); m_ineq],
                box_multipliers: vec![T::zero(); n],
                polished: false,
            });
        }

        self.warm = Some(WarmStart {
            n,
            rows,
            x: x.clone(),
            z: z.clone(),
            y: y.clone(),
            rho,
        });

        let mut sol = QpSolution {
            primal_residual: problem.max_violation(&x).max(T::zero()),
            dual_residual: r_dual,
            x: x.clone(),
            status,
            iterations,
            ineq_multipliers: y[..m_ineq].to_vec(),
            box_multipliers: y[m_ineq..].to_vec(),
            polished: false,
        };
        if s.polish {
            if let Some(p) = polish(problem, &c, &l, &u, &z, &y, big, s) {
                sol.x = p.x;
                sol.ineq_multipliers = p.y[..m_ineq].to_vec();
                sol.box_multipliers = p.y[m_ineq..].to_vec();
                sol.primal_residual = p.primal;
                sol.dual_residual = p.dual;
                sol.status = QpStatus::Optimal;
                sol.polished = true;
            }
        }
        if sol.status == QpStatus::MaxIter && !sol.polished && s.active_set_fallback {
            match dual_active_set(problem, &c, &l, &u, big, s) {
                ActiveSetOutcome::Solved(p) => {
                    sol.x = p.x;
                    sol.ineq_multipliers = p.y[..m_ineq].to_vec();
                    sol.box_multipliers = p.y[m_ineq..].to_vec();
                    sol.primal_residual = p.primal;
                    sol.dual_residual = p.dual;
                    sol.status = QpStatus::Optimal;
                    sol.polished = true;
                }
                ActiveSetOutcome::Infeasible => sol.status = QpStatus::Infeasible,
                ActiveSetOutcome::Failed => {}
            }
        }
        if sol.status == QpStatus::Optimal && (sol.primal_residual > s.tol_prim || sol.dual_residual > s.tol_dual) {
            sol.status = QpStatus::MaxIter;
        }
        Ok(sol)
    }
}

struct Scaling<T> {
    d: Vec<T>,
    e: Vec<T>,
    cost: T,
}

/// Ruiz equilibration of the KKT matrix `[H Cᵀ; C 0]` followed by a cost
/// normalization.
fn equilibrate<T: Scalar>(h: &Matrix<T>, g: &[T], c: &Matrix<T>, iters: usize) -> Scaling<T> {
    let n = h.rows();
    let rows = c.rows();
    let mut d = vec![T::one(); n];
    let mut e = vec![T::one(); rows];
    let lo = T::c(1e-4);
    let hi = T::c(1e4);
    let clamp = |v: T| if v <= T::zero() { T::one() } else { v.max(lo).min(hi) };
    for _ in 0..iters {
        let mut col = vec![T::zero(); n];
        let mut row = vec![T::zero(); rows];
        for i in 0..n {
            for j in 0..n {
                col[i] = col[i].max((d[i] * h[(i, j)] * d[j]).abs());
            }
        }
        for r in 0..rows {
            for j in 0..n {
                let v = (e[r] * c[(r, j)] * d[j]).abs();
                col[j] = col[j].max(v);
                row[r] = row[r].max(v);
            }
        }
        for i in 0..n {
            d[i] /= clamp(col[i]).sqrt();
        }
        for r in 0..rows {
            e[r] /= clamp(row[r]).sqrt();
        }
    }
    let mut mean_col = T::zero();
    for i in 0..n {
        let mut m = T::zero();
        for j in 0..n {
            m = m.max((d[i] * h[(i, j)] * d[j]).abs());
        }
        mean_col += m;
    }
    if n > 0 {
        mean_col /= T::c(n as f64);
    }
    let g_norm = (0..n).fold(T::zero(), |m, i| m.max((d[i] * g[i]).abs()));
    let cost = T::one() / clamp(mean_col.max(g_norm));
    Scaling { d, e, cost }
}

fn primal_infeasible<T: Scalar>(c: &Matrix<T>, dy: &[T], l: &[T], u: &[T], big: T, eps: T) -> bool {
    let ndy = norm_inf(dy);
    if ndy <= T::c(1e-12) {
        return false;
    }
    if norm_inf(&c.tr_mul_vec(dy)) > eps * ndy {
        return false;
    }
    let mut support = T::zero();
    for i in 0..dy.len() {
        if dy[i] > T::zero() {
            if u[i] >= big {
                return false;
            }
            support += u[i] * dy[i];
        } else if dy[i] < T::zero() {
            if l[i] <= -big {
                return false;
            }
            support += l[i] * dy[i];
        }
    }
    support < -eps * ndy
}

struct Polished<T> {
    x: Vec<T>,
    y: Vec<T>,
    primal: T,
    dual: T,
}

/// Guess the active set from the ADMM iterate, solve the
/// equality-constrained KKT system on it and accept the result only if it
/// satisfies every KKT condition within tolerance.
#[allow(clippy::too_many_arguments)]
fn polish<T: Scalar>(
    problem: &QpProblem<T>,
    c: &Matrix<T>,
    l: &[T],
    u: &[T],
    z: &[T],
    y: &[T],
    big: T,
    s: &QpSettings<T>,
) -> Option<Polished<T>> {
    let rows = c.rows();
    // (row, upper side) of each constraint treated as active.
    let mut active: Vec<(usize, bool)> = Vec::new();
    for i in 0..rows {
        if u[i] < big && u[i] - z[i] < y[i] {
            active.push((i, true));
        } else if l[i] > -big && z[i] - l[i] < -y[i] {
            active.push((i, false));
        }
    }
    let (x, mult) = solve_active(problem, c, l, u, &active)?;
    let mut y_full = vec![T::zero(); rows];
    for (&(r, upper), &m) in active.iter().zip(&mult) {
        // Upper-active rows need a nonnegative multiplier, lower-active a
        // nonpositive one.
        if (upper && m < -s.tol_dual) || (!upper && m > s.tol_dual) {
            return None;
        }
        y_full[r] = if upper { m.max(T::zero()) } else { m.min(T::zero()) };
    }
    certify(problem, c, x, y_full, s)
}

fn certify<T: Scalar>(
    problem: &QpProblem<T>,
    c: &Matrix<T>,
    x: Vec<T>,
    y: Vec<T>,
    s: &QpSettings<T>,
) -> Option<Polished<T>> {
    let n = problem.dim();
    let primal = problem.max_violation(&x).max(T::zero());
    let hx = problem.h.mul_vec(&x);
    let cty = c.tr_mul_vec(&y);
    let dual = norm_inf(&(0..n).map(|i| hx[i] + problem.g[i] + cty[i]).collect::<Vec<_>>());
    if primal > s.tol_prim || dual > s.tol_dual {
        return None;
    }
    Some(Polished { x, y, primal, dual })
}

enum ActiveSetOutcome<T> {
    Solved(Polished<T>),
    Infeasible,
    Failed,
}

/// Dual active-set method of Goldfarb and Idnani on `l ≤ C x ≤ u`. Starts
/// from the unconstrained minimizer and adds violated constraints one at a
/// time, dropping those whose multiplier would turn negative.
fn dual_active_set<T: Scalar>(
    problem: &QpProblem<T>,
    c: &Matrix<T>,
    l: &[T],
    u: &[T],
    big: T,
    s: &QpSettings<T>,
) -> ActiveSetOutcome<T> {
    use ActiveSetOutcome::*;
    let n = problem.dim();
    let rows = c.rows();
    let Some(chol) = Cholesky::new(&problem.h) else {
        return Failed;
    };
    // Constraints in the form `nᵀx ≥ r`: (row, upper side).
    let mut cons: Vec<(usize, bool)> = Vec::new();
    for i in 0..rows {
        if u[i] < big {
            cons.push((i, true));
        }
        if l[i] > -big {
            cons.push((i, false));
        }
    }
    let normal = |k: usize| -> Vec<T> {
        let (r, upper) = cons[k];
        let row = c.row(r);
        if upper {
            row.iter().map(|&v| -v).collect()
        } else {
            row.to_vec()
        }
    };
    let bound = |k: usize| {
        let (r, upper) = cons[k];
        if upper {
            -u[r]
        } else {
            l[r]
        }
    };
    let slack = |k: usize, x: &[T]| dot(&normal(k), x) - bound(k);

    let mut x = chol.solve(&problem.g.iter().map(|&v| -v).collect::<Vec<_>>());
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<T> = Vec::new();
    let tol = s.tol_prim * T::c(1e-3);
    let budget = 10 * (n + cons.len()) + 10;
    let mut steps = 0;

    loop {
        let mut pick: Option<(usize, T)> = None;
        for k in 0..cons.len() {
            if active.contains(&k) {
                continue;
            }
            let v = -slack(k, &x);
            if v > tol && pick.is_none_or(|p| v > p.1) {
                pick = Some((k, v));
            }
        }
        let Some((p, _)) = pick else {
            break;
        };
        let np = normal(p);
        let mut mult_p = T::zero();
        loop {
            steps += 1;
            if steps > budget {
                return Failed;
            }
            let q = active.len();
            let hn = chol.solve(&np);
            let hinv_n: Vec<Vec<T>> = active.iter().map(|&k| chol.solve(&normal(k))).collect();
            let r: Vec<T> = if q == 0 {
                Vec::new()
            } else {
                let normals: Vec<Vec<T>> = active.iter().map(|&k| normal(k)).collect();
                let m = Matrix::from_fn(q, q, |i, j| dot(&normals[i], &hinv_n[j]));
                let rhs: Vec<T> = normals.iter().map(|ni| dot(ni, &hn)).collect();
                match Lu::new(&m, T::c(1e-14)) {
                    Some(lu) => lu.solve(&rhs),
                    None => return Failed,
                }
            };
            let mut z = hn.clone();
            for (j, hj) in hinv_n.iter().enumerate() {
                for i in 0..n {
                    z[i] -= r[j] * hj[i];
                }
            }
            let mut t1 = T::infinity();
            let mut drop = None;
            for j in 0..q {
                if r[j] > T::zero() {
                    let t = mult[j] / r[j];
                    if t < t1 {
                        t1 = t;
                        drop = Some(j);
                    }
                }
            }
            let zn = dot(&z, &np);
            let t2 = if zn > T::c(1e-14) * dot(&np, &np) {
                -slack(p, &x) / zn
            } else {
                T::infinity()
            };
            if !t1.is_finite() && !t2.is_finite() {
                return Infeasible;
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                for i in 0..n {
                    x[i] += t * z[i];
                }
            }
            for j in 0..q {
                mult[j] -= t * r[j];
            }
            mult_p += t;
            if t2 <= t1 {
                active.push(p);
                mult.push(mult_p);
                break;
            }
            let j = drop.expect("finite partial step has a blocking index");
            active.remove(j);
            mult.remove(j);
        }
    }

    let mut y = vec![T::zero(); rows];
    for (&k, &m) in active.iter().zip(&mult) {
        let (r, upper) = cons[k];
        y[r] += if upper { m } else { -m };
    }
    match certify(problem, c, x, y, s) {
        Some(p) => Solved(p),
        None => Failed,
    }
}

/// Minimizer with the given rows held at their bounds, and their multipliers.
fn solve_active<T: Scalar>(
    problem: &QpProblem<T>,
    c: &Matrix<T>,
    l: &[T],
    u: &[T],
    active: &[(usize, bool)],
) -> Option<(Vec<T>, Vec<T>)> {
    let n = problem.dim();
    let na = active.len();
    let dim = n + na;
    let delta = T::c(1e-9);
    let mut kkt = Matrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = problem.h[(i, j)];
        }
    }
    for (a, &(r, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + a, j)] = c[(r, j)];
            kkt[(j, n + a)] = c[(r, j)];
        }
    }
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += delta;
    }
    for a in 0..na {
        reg[(n + a, n + a)] -= delta;
    }
    let lu = Lu::new(&reg, T::c(1e-14))?;
    let mut rhs = vec![T::zero(); dim];
    for i in 0..n {
        rhs[i] = -problem.g[i];
    }
    for (a, &(r, upper)) in active.iter().enumerate() {
        rhs[n + a] = if upper { u[r] } else { l[r] };
    }
    let mut sol = lu.solve(&rhs);
    for _ in 0..5 {
        let k_sol = kkt.mul_vec(&sol);
        let res: Vec<T> = rhs.iter().zip(&k_sol).map(|(a, b)| *a - *b).collect();
        if norm_inf(&res) <= T::c(1e-13) {
            break;
        }
        let corr = lu.solve(&res);
        for (v, d) in sol.iter_mut().zip(corr) {
            *v += d;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mult = sol.split_off(n);
    Some((sol, mult))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed(h: Matrix<f64>, g: Vec<f64>, a: Matrix<f64>, b: Vec<f64>, lo: f64, hi: f64) -> QpProblem<f64> {
        let n = g.len();
        QpProblem {
            h,
            g,
            a,
            b,
            lower: vec![lo; n],
            upper: vec![hi; n],
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let p = boxed(
            Matrix::identity(2),
            vec![-2.0, -2.0],
            Matrix::zeros(0, 2),
            vec![],
            -10.0,
            10.0,
        );
        let s = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-8 && (s.x[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn halfspace_projection() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let p = boxed(Matrix::identity(2), vec![0.0, 0.0], a, vec![-2.0], -10.0, 10.0);
        let s = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] + 1.0).abs() < 1e-8 && (s.x[1] + 1.0).abs() < 1e-8);
        // Multiplier of the active row: x + λ(1,1) = 0 at x = (-1,-1).
        assert!((s.ineq_multipliers[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let p = boxed(Matrix::identity(2), vec![0.0, 0.0], a, vec![-1.0, -1.0], -10.0, 10.0);
        let s = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn iteration_cap_falls_back_to_active_set() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let p = boxed(Matrix::identity(2), vec![0.0, 0.0], a, vec![-2.0], -10.0, 10.0);
        let starved = QpSettings {
            max_iter: 2,
            polish: false,
            ..QpSettings::default()
        };
        let s = solve(&p, &starved).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] + 1.0).abs() < 1e-12 && (s.x[1] + 1.0).abs() < 1e-12);
        let off = QpSettings {
            active_set_fallback: false,
            ..starved
        };
        assert_eq!(solve(&p, &off).unwrap().status, QpStatus::MaxIter);
    }

    #[test]
    fn box_conflicts_with_row() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let p = boxed(Matrix::identity(2), vec![0.0, 0.0], a, vec![-3.0], -1.0, 1.0);
        let s = solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_indefinite_and_mismatched() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let p = boxed(h, vec![0.0, 0.0], Matrix::zeros(0, 2), vec![], -1.0, 1.0);
        assert!(matches!(
            solve(&p, &QpSettings::default()),
            Err(Error::NotPositiveDefinite)
        ));
        let bad = boxed(
            Matrix::identity(3),
            vec![0.0, 0.0],
            Matrix::zeros(0, 2),
            vec![],
            -1.0,
            1.0,
        );
        assert!(matches!(
            solve(&bad, &QpSettings::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn warm_start_does_not_exceed_budget() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let p = boxed(
            Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]),
            vec![1.0, -1.0],
            a,
            vec![0.5, 0.2],
            -1.0,
            1.0,
        );
        let mut solver = QpSolver::new(QpSettings::default());
        let cold = solver.solve(&p).unwrap();
        let warm = solver.solve(&p).unwrap();
        assert!(warm.iterations <= cold.iterations.max(1));
        for (a, b) in cold.x.iter().zip(&warm.x) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
