//! Sheep flock dynamics.
//!
//! Each sheep follows a saturated attraction/repulsion law:
//!
//! ```text
//! f_i = v_bar * tanh(u_i / v_bar)
//! u_i = k_s * sum_k (1 - R_s^3 / |d_ik|^3) d_ik  +  k_d * sum_j e_ij / |e_ij|^3
//! d_ik = x_k - x_i,   e_ij = x_i - x_dj
//! ```
//!
//! The saturation acts per axis: the Jacobian of `f_i` is the Jacobian of
//! `u_i` pre-multiplied by `diag(sech^2(u_i / v_bar))`.

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};
use crate::scalar::{sech2, Scalar};

/// Gains and limits of the flock model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlockParams<T> {
    /// Inter-sheep attraction/repulsion gain (1/s).
    pub k_s: T,
    /// Dog repulsion gain (m^3/s).
    pub k_d: T,
    /// Desired inter-sheep distance (m).
    pub r_s: T,
    /// Per-axis sheep speed limit (m/s).
    pub v_bar: T,
    /// Per-axis dog speed limit (m/s).
    pub u_bar: T,
    /// Pairwise distances below this raise [`Error::CoincidentAgents`].
    pub min_distance: T,
}

impl<T: Scalar> FlockParams<T> {
    pub fn new(k_s: T, k_d: T, r_s: T, v_bar: T, u_bar: T) -> Result<Self> {
        let p = Self {
            k_s,
            k_d,
            r_s,
            v_bar,
            u_bar,
            min_distance: T::c(1e-9),
        };
        p.validate()?;
        Ok(p)
    }

    /// Reference parameter set (k_s = 0.3, k_d = 0.15, R_s = 0.5 m,
    /// v_bar = u_bar = 0.4 m/s).
    pub fn reference() -> Self {
        Self {
            k_s: T::c(0.3),
            k_d: T::c(0.15),
            r_s: T::c(0.5),
            v_bar: T::c(0.4),
            u_bar: T::c(0.4),
            min_distance: T::c(1e-9),
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
        positive("k_s", self.k_s)?;
        positive("k_d", self.k_d)?;
        positive("R_s", self.r_s)?;
        positive("v_bar", self.v_bar)?;
        positive("u_bar", self.u_bar)?;
        positive("min_distance", self.min_distance)
    }
}

/// Positions of every agent plus the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState<T> {
    pub sheep: Vec<Vec2<T>>,
    pub dogs: Vec<Vec2<T>>,
    pub t: T,
}

impl<T: Scalar> WorldState<T> {
    pub fn new(sheep: Vec<Vec2<T>>, dogs: Vec<Vec2<T>>) -> Self {
        Self {
            sheep,
            dogs,
            t: T::zero(),
        }
    }

    pub fn n(&self) -> usize {
        self.sheep.len()
    }

    pub fn m(&self) -> usize {
        self.dogs.len()
    }

    /// Stacked `[x_1, y_1, x_2, y_2, ...]` sheep coordinates.
    pub fn sheep_flat(&self) -> Vec<T> {
        flatten(&self.sheep)
    }

    pub fn dogs_flat(&self) -> Vec<T> {
        flatten(&self.dogs)
    }

    pub fn sheep_centroid(&self) -> Vec2<T> {
        centroid(&self.sheep)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.sheep.iter().all(|p| p.is_finite()) && self.dogs.iter().all(|p| p.is_finite())
    }
}

pub fn flatten<T: Scalar>(v: &[Vec2<T>]) -> Vec<T> {
    v.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub fn unflatten<T: Scalar>(v: &[T]) -> Vec<Vec2<T>> {
    v.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

pub fn centroid<T: Scalar>(points: &[Vec2<T>]) -> Vec2<T> {
    if points.is_empty() {
        return Vec2::zero();
    }
    let mut s = Vec2::zero();
    for &p in points {
        s += p;
    }
    s / T::from_usize(points.len()).unwrap()
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, len })
    }
}

fn checked_distance<T: Scalar>(d: Vec2<T>, eps: T, a: String, b: impl FnOnce() -> String) -> Result<T> {
    let r = d.norm();
    if r < eps || !r.is_finite() {
        return Err(Error::CoincidentAgents {
            a,
            b: b(),
            distance: r.as_f64(),
            epsilon: eps.as_f64(),
        });
    }
    Ok(r)
}

/// Unsaturated velocity `u_i` of sheep `i`.
pub fn unsaturated_velocity<T: Scalar>(world: &WorldState<T>, params: &FlockParams<T>, i: usize) -> Result<Vec2<T>> {
    check_index("sheep", i, world.n())?;
    let xi = world.sheep[i];
    let r3 = params.r_s.powi(3);
    let mut u = Vec2::zero();
    for (k, &xk) in world.sheep.iter().enumerate() {
        if k == i {
            continue;
        }
        let d = xk - xi;
        let r = checked_distance(d, params.min_distance, format!("sheep {i}"), || format!("sheep {k}"))?;
        u += d * (params.k_s * (T::one() - r3 / (r * r * r)));
    }
    for (j, &xd) in world.dogs.iter().enumerate() {
        let e = xi - xd;
        let r = checked_distance(e, params.min_distance, format!("sheep {i}"), || format!("dog {j}"))?;
        u += e * (params.k_d / (r * r * r));
    }
    Ok(u)
}

#[inline]
fn saturate<T: Scalar>(u: Vec2<T>, v_bar: T) -> Vec2<T> {
    u.map(|c| v_bar * (c / v_bar).tanh())
}

#[inline]
fn saturation_gain<T: Scalar>(u: Vec2<T>, v_bar: T) -> Mat2<T> {
    Mat2::diag(sech2(u.x / v_bar), sech2(u.y / v_bar))
}

/// Saturated velocity `f_i` of sheep `i`; each component lies in
/// `(-v_bar, v_bar)`.
pub fn sheep_velocity<T: Scalar>(world: &WorldState<T>, params: &FlockParams<T>, i: usize) -> Result<Vec2<T>> {
    Ok(saturate(unsaturated_velocity(world, params, i)?, params.v_bar))
}

/// Velocities of all sheep.
pub fn sheep_velocities<T: Scalar>(world: &WorldState<T>, params: &FlockParams<T>) -> Result<Vec<Vec2<T>>> {
    (0..world.n()).map(|i| sheep_velocity(world, params, i)).collect()
}

/// `d/dd [(1 - R^3/|d|^3) d] = (1 - R^3/|d|^3) I + 3 R^3 d d^T / |d|^5`
fn pair_attraction_jacobian<T: Scalar>(d: Vec2<T>, r: T, r3: T, k_s: T) -> Mat2<T> {
    let r2 = r * r;
    let r5 = r2 * r2 * r;
    let a = T::one() - r3 / (r2 * r);
    (Mat2::identity().scale(a) + Mat2::outer(d, d).scale(T::c(3.0) * r3 / r5)).scale(k_s)
}

/// `d/dx_d [e / |e|^3]` with `e = x_s - x_d`: `-(|e|^2 I - 3 e e^T) / |e|^5`
fn dog_repulsion_jacobian<T: Scalar>(e: Vec2<T>, r: T, k_d: T) -> Mat2<T> {
    let r2 = r * r;
    let r5 = r2 * r2 * r;
    (Mat2::identity().scale(r2) - Mat2::outer(e, e).scale(T::c(3.0))).scale(-k_d / r5)
}

/// `∂f_i/∂x_{s_k}` for `k != i`.
pub fn sheep_jacobian_wrt_sheep<T: Scalar>(
    world: &WorldState<T>,
    params: &FlockParams<T>,
    i: usize,
    k: usize,
) -> Result<Mat2<T>> {
    check_index("sheep", k, world.n())?;
    if i == k {
        return Err(Error::Precondition(format!(
            "sheep Jacobian requested for i == k == {i}; the self block is not part of the sum"
        )));
    }
    let u = unsaturated_velocity(world, params, i)?;
    let d = world.sheep[k] - world.sheep[i];
    let r = d.norm();
    let s = saturation_gain(u, params.v_bar);
    Ok(s.matmul(pair_attraction_jacobian(d, r, params.r_s.powi(3), params.k_s)))
}

/// `∂f_i/∂x_{d_j}`.
pub fn sheep_jacobian_wrt_dog<T: Scalar>(
    world: &WorldState<T>,
    params: &FlockParams<T>,
    i: usize,
    j: usize,
) -> Result<Mat2<T>> {
    check_index("dog", j, world.m())?;
    let u = unsaturated_velocity(world, params, i)?;
    let e = world.sheep[i] - world.dogs[j];
    let r = e.norm();
    let s = saturation_gain(u, params.v_bar);
    Ok(s.matmul(dog_repulsion_jacobian(e, r, params.k_d)))
}

/// Velocities and Jacobian blocks of the whole flock at one state.
#[derive(Debug, Clone)]
pub struct SheepDerivatives<T> {
    pub velocity: Vec<Vec2<T>>,
    /// `jac_wrt_sheep[i][k] = ∂f_i/∂x_{s_k}`; diagonal blocks are zero.
    pub jac_wrt_sheep: Vec<Vec<Mat2<T>>>,
    /// `jac_wrt_dog[i][j] = ∂f_i/∂x_{d_j}`.
    pub jac_wrt_dog: Vec<Vec<Mat2<T>>>,
}

impl<T: Scalar> SheepDerivatives<T> {
    pub fn compute(world: &WorldState<T>, params: &FlockParams<T>) -> Result<Self> {
        let n = world.n();
        let m = world.m();
        let r3 = params.r_s.powi(3);
        let mut velocity = Vec::with_capacity(n);
        let mut jac_wrt_sheep = Vec::with_capacity(n);
        let mut jac_wrt_dog = Vec::with_capacity(n);
        for i in 0..n {
            let u = unsaturated_velocity(world, params, i)?;
            velocity.push(saturate(u, params.v_bar));
            let s = saturation_gain(u, params.v_bar);
            let xi = world.sheep[i];
            let row_s = (0..n)
                .map(|k| {
                    if k == i {
                        Mat2::zero()
                    } else {
                        let d = world.sheep[k] - xi;
                        s.matmul(pair_attraction_jacobian(d, d.norm(), r3, params.k_s))
                    }
                })
                .collect();
            let row_d = (0..m)
                .map(|j| {
                    let e = xi - world.dogs[j];
                    s.matmul(dog_repulsion_jacobian(e, e.norm(), params.k_d))
                })
                .collect();
            jac_wrt_sheep.push(row_s);
            jac_wrt_dog.push(row_d);
        }
        Ok(Self {
            velocity,
            jac_wrt_sheep,
            jac_wrt_dog,
        })
    }

    /// Part of `a_i` that does not depend on the dog velocities:
    /// `sum_k J_ik (u_k - u_i) - sum_j J_ij u_i`.
    pub fn drift_acceleration(&self, i: usize) -> Vec2<T> {
        let ui = self.velocity[i];
        let mut a = Vec2::zero();
        for (k, jac) in self.jac_wrt_sheep[i].iter().enumerate() {
            if k != i {
                a += jac.mul_vec(self.velocity[k] - ui);
            }
        }
        for jac in &self.jac_wrt_dog[i] {
            a -= jac.mul_vec(ui);
        }
        a
    }

    /// `a_i` for the given dog velocities, using the stored sheep velocities.
    pub fn acceleration(&self, i: usize, dog_vels: &[Vec2<T>]) -> Vec2<T> {
        let mut a = self.drift_acceleration(i);
        for (jac, &ud) in self.jac_wrt_dog[i].iter().zip(dog_vels) {
            a += jac.mul_vec(ud);
        }
        a
    }
}

/// Sheep acceleration
/// `a_i = sum_k ∂f_i/∂x_k (u_k - u_i) + sum_j ∂f_i/∂x_dj (u_dj - u_i)`
/// for arbitrary agent velocities.
pub fn sheep_acceleration<T: Scalar>(
    world: &WorldState<T>,
    params: &FlockParams<T>,
    sheep_vels: &[Vec2<T>],
    dog_vels: &[Vec2<T>],
    i: usize,
) -> Result<Vec2<T>> {
    if sheep_vels.len() != world.n() || dog_vels.len() != world.m() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} sheep and {} dog velocities, got {} and {}",
            world.n(),
            world.m(),
            sheep_vels.len(),
            dog_vels.len()
        )));
    }
    check_index("sheep", i, world.n())?;
    let ui = sheep_vels[i];
    let mut a = Vec2::zero();
    for k in 0..world.n() {
        if k != i {
            a += sheep_jacobian_wrt_sheep(world, params, i, k)?.mul_vec(sheep_vels[k] - ui);
        }
    }
    for (j, &ud) in dog_vels.iter().enumerate() {
        a += sheep_jacobian_wrt_dog(world, params, i, j)?.mul_vec(ud - ui);
    }
    Ok(a)
}
