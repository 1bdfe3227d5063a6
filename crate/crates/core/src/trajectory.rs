//! Degree-7 polynomial reference segments fitted to path windows.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::linalg::{Lu, Matrix};
use crate::planner::GridPath;
use crate::scalar::Scalar;

pub const DEGREE: usize = 7;
const NC: usize = DEGREE + 1;

/// Reference position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample<T> {
    pub pos: Vec2<T>,
    pub vel: Vec2<T>,
    pub acc: Vec2<T>,
}

impl<T: Scalar> TrajectorySample<T> {
    pub fn rest(pos: Vec2<T>) -> Self {
        Self {
            pos,
            vel: Vec2::zero(),
            acc: Vec2::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite() && self.acc.is_finite()
    }
}

/// Per-axis caps on reference speed and acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryBounds<T> {
    pub v_max: T,
    pub a_max: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings<T> {
    /// Jerk penalty per window point.
    pub smoothing: T,
    /// Samples used for the bound check.
    pub samples: usize,
    pub bisection_iters: usize,
    /// Geometric grid size used to bracket the smallest feasible duration.
    pub scan_points: usize,
    /// Duration of a segment that does not move.
    pub hold_duration: T,
    /// Mean speed along the window that the duration may not exceed. The
    /// bounds stay enforced; this only rules out shorter durations.
    pub cruise_speed: Option<T>,
}

impl<T: Scalar> Default for FitSettings<T> {
    fn default() -> Self {
        Self {
            smoothing: T::c(1e-7),
            samples: 1000,
            bisection_iters: 40,
            scan_points: 48,
            hold_duration: T::one(),
            cruise_speed: None,
        }
    }
}

/// `S(t) = Σ c_k τ^k`, `τ = (t - t_c) / T`, per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment<T> {
    pub coeffs_x: [T; NC],
    pub coeffs_y: [T; NC],
    pub t_c: T,
    pub duration: T,
    pub bounds: TrajectoryBounds<T>,
}

fn horner<T: Scalar>(c: &[T], tau: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &k| acc * tau + k)
}

fn derivative<T: Scalar>(c: &[T]) -> Vec<T> {
    c.iter().enumerate().skip(1).map(|(k, &v)| v * T::c(k as f64)).collect()
}

impl<T: Scalar> TrajectorySegment<T> {
    pub fn constant(pos: Vec2<T>, t_c: T, duration: T, bounds: TrajectoryBounds<T>) -> Self {
        let mut cx = [T::zero(); NC];
        let mut cy = [T::zero(); NC];
        cx[0] = pos.x;
        cy[0] = pos.y;
        Self {
            coeffs_x: cx,
            coeffs_y: cy,
            t_c,
            duration,
            bounds,
        }
    }

    pub fn end_time(&self) -> T {
        self.t_c + self.duration
    }

    /// State in normalized time, `τ ∈ [0, 1]`.
    pub fn eval_normalized(&self, tau: T) -> TrajectorySample<T> {
        let dx = derivative(&self.coeffs_x);
        let dy = derivative(&self.coeffs_y);
        let ddx = derivative(&dx);
        let ddy = derivative(&dy);
        let inv_t = T::one() / self.duration;
        let inv_t2 = inv_t * inv_t;
        TrajectorySample {
            pos: Vec2::new(horner(&self.coeffs_x, tau), horner(&self.coeffs_y, tau)),
            vel: Vec2::new(horner(&dx, tau), horner(&dy, tau)) * inv_t,
            acc: Vec2::new(horner(&ddx, tau), horner(&ddy, tau)) * inv_t2,
        }
    }

    /// State at absolute time `t`. Before `t_c` the start state is returned;
    /// after the end the end position is held with zero derivatives.
    pub fn eval(&self, t: T) -> TrajectorySample<T> {
        if t >= self.end_time() {
            return TrajectorySample::rest(self.eval_normalized(T::one()).pos);
        }
        let tau = ((t - self.t_c) / self.duration).max(T::zero());
        self.eval_normalized(tau)
    }

    /// Exact state at `τ = 1` (derivatives included, no clamping).
    pub fn terminal_state(&self) -> TrajectorySample<T> {
        self.eval_normalized(T::one())
    }

    /// Largest `‖Ṡ‖∞` and `‖S̈‖∞` over `samples` uniform points of `[0, 1]`.
    pub fn sampled_extrema(&self, samples: usize) -> (T, T) {
        let dx = derivative(&self.coeffs_x);
        let dy = derivative(&self.coeffs_y);
        let ddx = derivative(&dx);
        let ddy = derivative(&dy);
        let inv_t = T::one() / self.duration;
        let denom = T::c(samples.saturating_sub(1).max(1) as f64);
        let (mut v, mut a) = (T::zero(), T::zero());
        for j in 0..samples.max(2) {
            let tau = T::c(j as f64) / denom;
            v = v.max(horner(&dx, tau).abs().max(horner(&dy, tau).abs()));
            a = a.max(horner(&ddx, tau).abs().max(horner(&ddy, tau).abs()));
        }
        (v * inv_t, a * inv_t * inv_t)
    }

    /// `t,x,y,vx,vy,ax,ay` rows over `samples` uniform times.
    pub fn to_csv(&self, samples: usize) -> String {
        let mut s = String::from("t,x,y,vx,vy,ax,ay\n");
        let denom = T::c(samples.saturating_sub(1).max(1) as f64);
        for j in 0..samples.max(2) {
            let tau = T::c(j as f64) / denom;
            let st = self.eval_normalized(tau);
            let t = self.t_c + tau * self.duration;
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{},{}",
                st.pos.x, st.pos.y, st.vel.x, st.vel.y, st.acc.x, st.acc.y
            );
        }
        s
    }
}

/// Window of `h + 1` points starting at `start` (shorter at the path end),
/// with consecutive duplicates removed.
pub fn path_window<T: Scalar>(path: &GridPath<T>, start: usize, h: usize) -> Vec<Vec2<T>> {
    let end = (start + h).min(path.last_index());
    let mut pts: Vec<Vec2<T>> = Vec::with_capacity(end + 1 - start.min(end));
    for &p in &path.points[start.min(end)..=end] {
        if pts.last().is_none_or(|&q: &Vec2<T>| q.distance(p) > T::c(1e-12)) {
            pts.push(p);
        }
    }
    pts
}

/// Fits one segment through `window`. The first window point is replaced
/// by the boundary position; the last one is interpolated exactly. With
/// `terminal` the segment also ends at rest.
pub fn fit_segment<T: Scalar>(
    window: &[Vec2<T>],
    boundary: &TrajectorySample<T>,
    t_c: T,
    terminal: bool,
    bounds: TrajectoryBounds<T>,
    settings: &FitSettings<T>,
) -> Result<TrajectorySegment<T>> {
    if window.is_empty() {
        return Err(Error::WindowTooShort("window has no points".into()));
    }
    if !boundary.is_finite() {
        return Err(Error::Precondition("boundary state must be finite".into()));
    }
    if !(bounds.v_max > T::zero() && bounds.a_max > T::zero()) {
        return Err(Error::validation("bounds", "v_max and a_max must be > 0"));
    }
    let mut pts = vec![boundary.pos];
    for &p in &window[1..] {
        if pts.last().unwrap().distance(p) > T::c(1e-12) {
            pts.push(p);
        }
    }
    let end = *pts.last().unwrap();
    let moving = boundary.vel.norm_inf() > T::zero() || boundary.acc.norm_inf() > T::zero();
    if pts.len() == 1 && !moving {
        return Ok(TrajectorySegment::constant(end, t_c, settings.hold_duration, bounds));
    }

    let mut s = vec![T::zero()];
    for w in pts.windows(2) {
        let last = *s.last().unwrap();
        s.push(last + w[0].distance(w[1]));
    }
    let length = *s.last().unwrap();
    let taus: Vec<T> = if length > T::zero() {
        s.iter().map(|&v| v / length).collect()
    } else {
        vec![T::zero()]
    };

    // A start state at or above the cap is accepted.
    let v_cap = bounds.v_max.max(boundary.vel.norm_inf());
    let a_cap = bounds.a_max.max(boundary.acc.norm_inf());
    let tol = T::c(1e-9);
    let feasible = |seg: &TrajectorySegment<T>| {
        let (v, a) = seg.sampled_extrema(settings.samples);
        v <= v_cap + tol && a <= a_cap + tol
    };
    let fit = |duration: T| fit_with_duration(&pts, &taus, boundary, t_c, duration, terminal, bounds, settings);

    let v0 = boundary.vel.norm_inf();
    let l_eff = length.max(v0 * v0 / bounds.a_max).max(T::c(1e-3));
    let floor = match settings.cruise_speed {
        Some(c) if c > T::zero() => l_eff / c,
        _ => T::zero(),
    };
    let lo = (T::half() * l_eff / bounds.v_max).max(floor);
    let hi = (T::c(50.0) * l_eff / bounds.v_max).max(T::two() * lo);
    // Bracket the first feasible duration on a geometric grid, then bisect
    // below it.
    let steps = settings.scan_points.max(1);
    let ratio = (hi / lo).powf(T::one() / T::c(steps as f64));
    let mut prev = None;
    let mut found = None;
    let mut dur = lo;
    for k in 0..=(steps + 12) {
        if k > steps {
            dur *= T::two();
        } else if k > 0 {
            dur *= ratio;
        }
        let seg = fit(dur)?;
        if feasible(&seg) {
            found = Some((dur, seg));
            break;
        }
        prev = Some(dur);
    }
    let Some((mut hi, mut best)) = found else {
        return Err(Error::BoundsUnattainable {
            v_max: bounds.v_max.as_f64(),
            a_max: bounds.a_max.as_f64(),
        });
    };
    let Some(mut lo) = prev else {
        return Ok(best);
    };
    for _ in 0..settings.bisection_iters {
        let mid = T::half() * (lo + hi);
        let seg = fit(mid)?;
        if feasible(&seg) {
            hi = mid;
            best = seg;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn fit_with_duration<T: Scalar>(
    pts: &[Vec2<T>],
    taus: &[T],
    boundary: &TrajectorySample<T>,
    t_c: T,
    duration: T,
    terminal: bool,
    bounds: TrajectoryBounds<T>,
    settings: &FitSettings<T>,
) -> Result<TrajectorySegment<T>> {
    let fixed_x = [
        boundary.pos.x,
        boundary.vel.x * duration,
        boundary.acc.x * duration * duration * T::half(),
    ];
    let fixed_y = [
        boundary.pos.y,
        boundary.vel.y * duration,
        boundary.acc.y * duration * duration * T::half(),
    ];
    let end = *pts.last().unwrap();
    let cx = fit_axis(taus, pts.iter().map(|p| p.x), fixed_x, end.x, terminal, settings)?;
    let cy = fit_axis(taus, pts.iter().map(|p| p.y), fixed_y, end.y, terminal, settings)?;
    Ok(TrajectorySegment {
        coeffs_x: cx,
        coeffs_y: cy,
        t_c,
        duration,
        bounds,
    })
}

/// Free coefficients `c_3..c_7` from the equality-constrained least
/// squares problem, solved through its KKT system.
fn fit_axis<T: Scalar>(
    taus: &[T],
    values: impl Iterator<Item = T>,
    fixed: [T; 3],
    end: T,
    terminal: bool,
    settings: &FitSettings<T>,
) -> Result<[T; NC]> {
    const FREE: usize = NC - 3;
    let mut gram = Matrix::zeros(FREE, FREE);
    let mut rhs = [T::zero(); FREE];
    for (&tau, w) in taus.iter().zip(values) {
        let known = fixed[0] + tau * (fixed[1] + tau * fixed[2]);
        let r = w - known;
        let mut pw = [T::zero(); FREE];
        let mut p = tau * tau * tau;
        for v in pw.iter_mut() {
            *v = p;
            p *= tau;
        }
        for i in 0..FREE {
            rhs[i] += pw[i] * r;
            for j in 0..FREE {
                gram[(i, j)] += pw[i] * pw[j];
            }
        }
    }
    let rho = settings.smoothing * T::c(taus.len() as f64);
    for i in 0..FREE {
        for j in 0..FREE {
            let (k, l) = ((i + 3) as f64, (j + 3) as f64);
            let jk = k * (k - 1.0) * (k - 2.0);
            let jl = l * (l - 1.0) * (l - 2.0);
            gram[(i, j)] += rho * T::c(jk * jl / (k + l - 5.0));
        }
    }

    // Rows: p(1) = end, and for a terminal window p'(1) = p''(1) = 0.
    let mut eq_rows: Vec<([T; FREE], T)> = Vec::new();
    let pos_row: [T; FREE] = [T::one(); FREE];
    eq_rows.push((pos_row, end - fixed[0] - fixed[1] - fixed[2]));
    if terminal {
        let mut vel_row = [T::zero(); FREE];
        let mut acc_row = [T::zero(); FREE];
        for i in 0..FREE {
            let k = (i + 3) as f64;
            vel_row[i] = T::c(k);
            acc_row[i] = T::c(k * (k - 1.0));
        }
        eq_rows.push((vel_row, -(fixed[1] + T::two() * fixed[2])));
        eq_rows.push((acc_row, -(T::two() * fixed[2])));
    }

    let dim = FREE + eq_rows.len();
    let mut kkt = Matrix::zeros(dim, dim);
    let mut b = vec![T::zero(); dim];
    for i in 0..FREE {
        for j in 0..FREE {
            kkt[(i, j)] = T::two() * gram[(i, j)];
        }
        b[i] = T::two() * rhs[i];
    }
    for (e, (row, val)) in eq_rows.iter().enumerate() {
        for i in 0..FREE {
            kkt[(FREE + e, i)] = row[i];
            kkt[(i, FREE + e)] = row[i];
        }
        b[FREE + e] = *val;
    }
    let lu =
        Lu::new(&kkt, T::c(1e-14)).ok_or_else(|| Error::FitSingular("trajectory KKT system is singular".into()))?;
    let mut sol = lu.solve(&b);
    // One step of iterative refinement.
    let res: Vec<T> = kkt.mul_vec(&sol).iter().zip(&b).map(|(a, b)| *b - *a).collect();
    let corr = lu.solve(&res);
    for (s, c) in sol.iter_mut().zip(corr) {
        *s += c;
    }
    let mut c = [T::zero(); NC];
    c[..3].copy_from_slice(&fixed);
    c[3..].copy_from_slice(&sol[..FREE]);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitSingular("non-finite trajectory coefficients".into()));
    }
    Ok(c)
}
