//! Barrier-function constraints on the dog velocities and the controller QP.
//!
//! Three families of rows `A u_d ≤ b` are assembled over the stacked dog
//! velocity `u_d ∈ R^{2m}`:
//!
//! * herding: a degree-2 barrier `h_i = -½(|x_i - S|² - (R_d - r)²)` per sheep,
//!   enforced through `ḧ + α ḣ + β h ≥ 0` with `α = p1 + p2`, `β = p1 p2`;
//! * obstacle: `h = ½(|x_d - b*|² - R_circ²)` per dog and sensed point `b*`;
//! * inter-dog: `h = ½(|x_k - x_j|² - R_a²)` per unordered dog pair.

use crate::dynamics::{SheepDerivatives, WorldState};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::linalg::{norm_inf, Matrix};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus};
use crate::scalar::{relu, Scalar};
use crate::trajectory::TrajectorySample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains<T> {
    /// Herding barrier chain gains (1/s).
    pub p1: T,
    pub p2: T,
    /// Obstacle barrier gain (1/s).
    pub lambda: T,
    /// Inter-dog barrier gain (1/s).
    pub gamma: T,
    /// Safety margin inside the protected region (m).
    pub r: T,
    /// Protected-region radius R_d (m).
    pub r_d: T,
    /// Dog–obstacle safety distance (m).
    pub r_circ: T,
    /// Dog–dog safety distance (m).
    pub r_a: T,
    /// Loitering band beyond R_d (m).
    pub r_f: T,
    /// Reference-velocity gain (1/s).
    pub k_f: T,
}

impl<T: Scalar> ControllerGains<T> {
    #[inline]
    pub fn alpha(&self) -> T {
        self.p1 + self.p2
    }

    #[inline]
    pub fn beta(&self) -> T {
        self.p1 * self.p2
    }

    /// Radius of the barrier circle, `R_d - r`.
    #[inline]
    pub fn barrier_radius(&self) -> T {
        self.r_d - self.r
    }

    /// Defaults with the protected radius derived from a herd radius:
    /// `R_d = herd_radius + r_s`, `r = r_s`.
    pub fn with_herd_radius(herd_radius: T) -> Self {
        let r_s = T::c(0.35);
        Self {
            p1: T::c(5.2),
            p2: T::c(8.2),
            lambda: T::c(5.0),
            gamma: T::c(5.0),
            r: r_s,
            r_d: herd_radius + r_s,
            r_circ: T::c(0.2),
            r_a: T::c(0.2),
            r_f: T::c(0.5),
            k_f: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("p1", self.p1)?;
        positive("p2", self.p2)?;
        positive("lambda", self.lambda)?;
        positive("gamma", self.gamma)?;
        positive("k_f", self.k_f)?;
        positive("r", self.r)?;
        positive("r_circ", self.r_circ)?;
        positive("r_a", self.r_a)?;
        if !(self.r_f >= T::zero()) {
            return Err(Error::validation("r_f", "must be >= 0"));
        }
        if !(self.r < self.r_d) {
            return Err(Error::validation(
                "r",
                format!("must satisfy 0 < r < R_d = {}", self.r_d),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Herding,
    Obstacle,
    InterDog,
}

/// Stacked linear inequality `A u_d ≤ b` over the dog velocities.
#[derive(Debug, Clone)]
pub struct ConstraintBlock<T> {
    pub a: Matrix<T>,
    pub b: Vec<T>,
    pub kind: ConstraintKind,
}

impl<T: Scalar> ConstraintBlock<T> {
    pub fn empty(kind: ConstraintKind, cols: usize) -> Self {
        Self {
            a: Matrix::zeros(0, cols),
            b: Vec::new(),
            kind,
        }
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// Largest `(A u - b)_i`, or `-inf` for an empty block.
    pub fn max_violation(&self, u: &[T]) -> T {
        self.a
            .mul_vec(u)
            .iter()
            .zip(&self.b)
            .fold(T::neg_infinity(), |m, (au, b)| m.max(*au - *b))
    }
}

/// Herding rows together with the split `b = b_static + b_dynamic`, where
/// `b_dynamic` collects every term that involves the reference velocity or
/// acceleration.
#[derive(Debug, Clone)]
pub struct HerdingBlock<T> {
    pub block: ConstraintBlock<T>,
    pub b_static: Vec<T>,
    pub b_dynamic: Vec<T>,
}

/// Herding barrier values `h_i` for every sheep.
pub fn herding_barrier<T: Scalar>(world: &WorldState<T>, gains: &ControllerGains<T>, reference: Vec2<T>) -> Vec<T> {
    let rb = gains.barrier_radius();
    world
        .sheep
        .iter()
        .map(|&x| -T::half() * ((x - reference).norm_sq() - rb * rb))
        .collect()
}

pub fn herding_block<T: Scalar>(
    world: &WorldState<T>,
    gains: &ControllerGains<T>,
    traj: &TrajectorySample<T>,
    derivs: &SheepDerivatives<T>,
) -> Result<HerdingBlock<T>> {
    let n = world.n();
    let m = world.m();
    if derivs.velocity.len() != n || derivs.jac_wrt_dog.iter().any(|row| row.len() != m) {
        return Err(Error::DimensionMismatch(
            "sheep derivatives do not match the world state".into(),
        ));
    }
    let alpha = gains.alpha();
    let beta = gains.beta();
    let half_beta = beta * T::half();
    let rb = gains.barrier_radius();
    let mut a = Matrix::zeros(n, 2 * m);
    let mut b = Vec::with_capacity(n);
    let mut b_static = Vec::with_capacity(n);
    let mut b_dynamic = Vec::with_capacity(n);
    for i in 0..n {
        let e = world.sheep[i] - traj.pos;
        let u = derivs.velocity[i];
        for (j, jac) in derivs.jac_wrt_dog[i].iter().enumerate() {
            let coeff = jac.left_mul_vec(e);
            a[(i, 2 * j)] = coeff.x;
            a[(i, 2 * j + 1)] = coeff.y;
        }
        let drift = derivs.drift_acceleration(i);
        let stat = half_beta * rb * rb - u.norm_sq() - alpha * e.dot(u) - half_beta * e.norm_sq() - e.dot(drift);
        let dynamic = T::two() * u.dot(traj.vel) - traj.vel.norm_sq() + e.dot(traj.acc + traj.vel * alpha);
        b_static.push(stat);
        b_dynamic.push(dynamic);
        b.push(stat + dynamic);
    }
    Ok(HerdingBlock {
        block: ConstraintBlock {
            a,
            b,
            kind: ConstraintKind::Herding,
        },
        b_static,
        b_dynamic,
    })
}

/// One row per (dog, sensed boundary point). Fails if a dog already sits
/// inside the safety radius of one of its points.
pub fn obstacle_block<T: Scalar>(
    dogs: &[Vec2<T>],
    closest_points: &[Vec<Vec2<T>>],
    gains: &ControllerGains<T>,
) -> Result<ConstraintBlock<T>> {
    for (j, (&x, pts)) in dogs.iter().zip(closest_points).enumerate() {
        for &p in pts {
            let d = x.distance(p);
            if d < gains.r_circ {
                return Err(Error::DogInsideObstacle {
                    dog: j,
                    distance: d.as_f64(),
                    radius: gains.r_circ.as_f64(),
                });
            }
        }
    }
    obstacle_block_unchecked(dogs, closest_points, gains)
}

/// Same rows as [`obstacle_block`] without the inside check; with `h < 0`
/// the right-hand side is negative and the row pushes the dog back out.
pub fn obstacle_block_unchecked<T: Scalar>(
    dogs: &[Vec2<T>],
    closest_points: &[Vec<Vec2<T>>],
    gains: &ControllerGains<T>,
) -> Result<ConstraintBlock<T>> {
    if closest_points.len() != dogs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} dogs but {} obstacle point lists",
            dogs.len(),
            closest_points.len()
        )));
    }
    let m = dogs.len();
    let rows: usize = closest_points.iter().map(Vec::len).sum();
    let mut a = Matrix::zeros(rows, 2 * m);
    let mut b = Vec::with_capacity(rows);
    let half_lambda = gains.lambda * T::half();
    let r2 = gains.r_circ * gains.r_circ;
    let mut r = 0;
    for (j, (&x, pts)) in dogs.iter().zip(closest_points).enumerate() {
        for &p in pts {
            let coeff = p - x;
            a[(r, 2 * j)] = coeff.x;
            a[(r, 2 * j + 1)] = coeff.y;
            b.push(half_lambda * ((x - p).norm_sq() - r2));
            r += 1;
        }
    }
    Ok(ConstraintBlock {
        a,
        b,
        kind: ConstraintKind::Obstacle,
    })
}

/// One row per unordered dog pair `(k, j)`, `k < j`.
pub fn interdog_block<T: Scalar>(dogs: &[Vec2<T>], gains: &ControllerGains<T>) -> ConstraintBlock<T> {
    let m = dogs.len();
    if m < 2 {
        return ConstraintBlock::empty(ConstraintKind::InterDog, 2 * m);
    }
    let rows = m * (m - 1) / 2;
    let mut a = Matrix::zeros(rows, 2 * m);
    let mut b = Vec::with_capacity(rows);
    let half_gamma = gains.gamma * T::half();
    let ra2 = gains.r_a * gains.r_a;
    let mut r = 0;
    for k in 0..m {
        for j in (k + 1)..m {
            let diff = dogs[j] - dogs[k];
            a[(r, 2 * k)] = diff.x;
            a[(r, 2 * k + 1)] = diff.y;
            a[(r, 2 * j)] = -diff.x;
            a[(r, 2 * j + 1)] = -diff.y;
            b.push(half_gamma * (diff.norm_sq() - ra2));
            r += 1;
        }
    }
    ConstraintBlock {
        a,
        b,
        kind: ConstraintKind::InterDog,
    }
}

/// Velocity pulling each dog back to within `R_d + R_f` of the reference.
pub fn reference_velocity<T: Scalar>(dogs: &[Vec2<T>], reference: Vec2<T>, gains: &ControllerGains<T>) -> Vec<Vec2<T>> {
    let band = gains.r_d + gains.r_f;
    dogs.iter()
        .map(|&x| {
            let e = reference - x;
            let dist = e.norm();
            let excess = relu(dist - band);
            if excess > T::zero() {
                e * (gains.k_f * excess / dist)
            } else {
                Vec2::zero()
            }
        })
        .collect()
}

/// Which sheep pairs the acceleration-balancing objective couples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMatrix {
    /// `n x n`, zero first row, rows `i ≥ 1` are `e_i - e_{i-1}`.
    Consecutive,
    /// One row `e_k - e_i` per unordered pair `i < k`.
    AllPairs,
}

/// Sign/shape of the linear objective term built from `u_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearForm {
    /// `g = -2 u_ref`: the expansion of `|μ - u_ref|²` without constants.
    Tracking,
    /// `g = u_ref`, the term as literally written next to the pair objective.
    Literal,
}

pub fn pair_difference_matrix<T: Scalar>(n: usize, mode: PairMatrix) -> Matrix<T> {
    match mode {
        PairMatrix::Consecutive => {
            let mut c = Matrix::zeros(n, n);
            for i in 1..n {
                c[(i, i)] = T::one();
                c[(i, i - 1)] = -T::one();
            }
            c
        }
        PairMatrix::AllPairs => {
            let rows = n * n.saturating_sub(1) / 2;
            let mut c = Matrix::zeros(rows, n);
            let mut r = 0;
            for i in 0..n {
                for k in (i + 1)..n {
                    c[(r, k)] = T::one();
                    c[(r, i)] = -T::one();
                    r += 1;
                }
            }
            c
        }
    }
}

/// Objective `μᵀHμ + gᵀμ` with `H = (C A_p)ᵀ(C A_p) + ε I`.
pub fn objective_terms<T: Scalar>(
    a_p: &Matrix<T>,
    u_ref: &[Vec2<T>],
    epsilon_reg: T,
    linear_form: LinearForm,
    pairs: PairMatrix,
) -> Result<(Matrix<T>, Vec<T>)> {
    let m2 = 2 * u_ref.len();
    if a_p.rows() > 0 && a_p.cols() != m2 {
        return Err(Error::DimensionMismatch(format!(
            "herding matrix has {} columns, expected {m2}",
            a_p.cols()
        )));
    }
    if !(epsilon_reg > T::zero()) {
        return Err(Error::validation("epsilon_reg", "must be > 0"));
    }
    let n = a_p.rows();
    let mut h = if n > 0 {
        pair_difference_matrix(n, pairs).matmul(a_p).gram()
    } else {
        Matrix::zeros(m2, m2)
    };
    h.add_diagonal(epsilon_reg);
    let scale = match linear_form {
        LinearForm::Tracking => -T::two(),
        LinearForm::Literal => T::one(),
    };
    let g = u_ref.iter().flat_map(|u| [u.x * scale, u.y * scale]).collect();
    Ok((h, g))
}

#[derive(Debug, Clone, Copy)]
pub struct ControllerConfig<T> {
    pub epsilon_reg: T,
    pub w_slack: T,
    pub linear_form: LinearForm,
    pub pair_matrix: PairMatrix,
    pub qp: QpSettings<T>,
    /// Settings of the softened solve, whose slack weight makes it slower
    /// to converge.
    pub soft_qp: QpSettings<T>,
    /// Largest primal residual accepted from a softened solve that hit the
    /// iteration cap.
    pub soft_residual_tol: T,
}

impl<T: Scalar> Default for ControllerConfig<T> {
    fn default() -> Self {
        Self {
            epsilon_reg: T::c(0.1),
            w_slack: T::c(1e4),
            linear_form: LinearForm::Tracking,
            pair_matrix: PairMatrix::Consecutive,
            qp: QpSettings::default(),
            soft_qp: QpSettings::default(),
            soft_residual_tol: T::c(1e-4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlStatus {
    /// Every block held as a hard constraint.
    HardFeasible,
    /// Herding rows relaxed with penalized slack.
    Softened,
}

impl ControlStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlStatus::HardFeasible => "hard",
            ControlStatus::Softened => "softened",
        }
    }
}

/// Runtime reflection of the herding feasibility argument: the herding rows
/// are certainly infeasible only if some row is zero with a negative bound,
/// or a bound is not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityDiagnostic<T> {
    pub zero_rows_with_negative_rhs: usize,
    pub all_finite: bool,
    pub min_b_static: T,
    pub max_abs_b_dynamic: T,
}

pub fn feasibility_diagnostic<T: Scalar>(herding: &HerdingBlock<T>) -> FeasibilityDiagnostic<T> {
    let mut zero_neg = 0;
    for i in 0..herding.block.rows() {
        if norm_inf(herding.block.a.row(i)) <= T::c(1e-12) && herding.block.b[i] < T::zero() {
            zero_neg += 1;
        }
    }
    FeasibilityDiagnostic {
        zero_rows_with_negative_rhs: zero_neg,
        all_finite: herding.block.b.iter().all(|v| v.is_finite()),
        min_b_static: herding.b_static.iter().fold(T::infinity(), |m, &v| m.min(v)),
        max_abs_b_dynamic: herding.b_dynamic.iter().fold(T::zero(), |m, &v| m.max(v.abs())),
    }
}

#[derive(Debug, Clone)]
pub struct ControlOutput<T> {
    pub u: Vec<Vec2<T>>,
    pub status: ControlStatus,
    /// Whether the hard problem was solved to optimality.
    pub hard_feasible: bool,
    /// Per-herding-row slack (all zero when hard feasible).
    pub slack: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> ControlOutput<T> {
    pub fn max_slack(&self) -> T {
        self.slack.iter().fold(T::zero(), |m, &s| m.max(s))
    }
}

/// Controller QP with warm-started hard and softened solvers.
#[derive(Debug, Clone)]
pub struct Controller<T> {
    pub config: ControllerConfig<T>,
    hard: QpSolver<T>,
    soft: QpSolver<T>,
}

impl<T: Scalar> Controller<T> {
    pub fn new(config: ControllerConfig<T>) -> Self {
        Self {
            hard: QpSolver::new(config.qp),
            soft: QpSolver::new(config.soft_qp),
            config,
        }
    }

    /// Minimizes `μᵀHμ + gᵀμ` over all blocks and the box `|μ|∞ ≤ ū`. If
    /// the hard problem is infeasible the herding rows get a slack `σ ≥ 0`
    /// penalized by `w_slack |σ|²`; the other blocks and the box stay hard.
    pub fn solve(
        &mut self,
        herding: &ConstraintBlock<T>,
        others: &[&ConstraintBlock<T>],
        h: &Matrix<T>,
        g: &[T],
        u_bar: T,
    ) -> Result<ControlOutput<T>> {
        let m2 = g.len();
        let n = herding.rows();
        let mut a = herding.a.clone();
        let mut b = herding.b.clone();
        if n == 0 {
            a = Matrix::zeros(0, m2);
        }
        for blk in others {
            if blk.rows() == 0 {
                continue;
            }
            a = a.vstack(&blk.a);
            b.extend_from_slice(&blk.b);
        }
        let hard = QpProblem {
            h: h.scale(T::two()),
            g: g.to_vec(),
            a: a.clone(),
            b: b.clone(),
            lower: vec![-u_bar; m2],
            upper: vec![u_bar; m2],
        };
        let sol = self.hard.solve(&hard)?;
        if sol.status == QpStatus::Optimal {
            return Ok(ControlOutput {
                u: clamp_box(&sol.x, u_bar),
                status: ControlStatus::HardFeasible,
                hard_feasible: true,
                slack: vec![T::zero(); n],
                iterations: sol.iterations,
            });
        }
        if n == 0 {
            return Err(Error::SolverFailure(format!(
                "non-herding constraints alone are not solvable ({:?})",
                sol.status
            )));
        }

        let dim = m2 + n;
        let mut hs = Matrix::zeros(dim, dim);
        for i in 0..m2 {
            for j in 0..m2 {
                hs[(i, j)] = T::two() * h[(i, j)];
            }
        }
        for i in 0..n {
            hs[(m2 + i, m2 + i)] = T::two() * self.config.w_slack;
        }
        let mut gs = g.to_vec();
        gs.extend(std::iter::repeat_n(T::zero(), n));
        let mut as_ = Matrix::zeros(a.rows(), dim);
        for r in 0..a.rows() {
            for c in 0..m2 {
                as_[(r, c)] = a[(r, c)];
            }
            if r < n {
                as_[(r, m2 + r)] = -T::one();
            }
        }
        let mut lower = vec![-u_bar; m2];
        lower.extend(std::iter::repeat_n(T::zero(), n));
        let mut upper = vec![u_bar; m2];
        upper.extend(std::iter::repeat_n(T::infinity(), n));
        let soft = QpProblem {
            h: hs,
            g: gs,
            a: as_,
            b,
            lower,
            upper,
        };
        let ssol = self.soft.solve(&soft)?;
        let near = ssol.status == QpStatus::MaxIter
            && ssol.x.iter().all(|v| v.is_finite())
            && ssol.primal_residual <= self.config.soft_residual_tol;
        if ssol.status != QpStatus::Optimal && !near {
            return Err(Error::SolverFailure(format!(
                "softened problem ended with {:?} after {} iterations (primal residual {:e})",
                ssol.status,
                ssol.iterations,
                ssol.primal_residual.as_f64()
            )));
        }
        Ok(ControlOutput {
            u: clamp_box(&ssol.x[..m2], u_bar),
            status: ControlStatus::Softened,
            hard_feasible: false,
            slack: ssol.x[m2..].iter().map(|&s| s.max(T::zero())).collect(),
            iterations: sol.iterations + ssol.iterations,
        })
    }
}

fn clamp_box<T: Scalar>(x: &[T], u_bar: T) -> Vec<Vec2<T>> {
    x.chunks_exact(2)
        .map(|c| Vec2::new(c[0].max(-u_bar).min(u_bar), c[1].max(-u_bar).min(u_bar)))
        .collect()
}
