//! Planar primitives: vectors, segments, polygons and enclosing circles.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn from_angle(theta: T) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_inf(self) -> T {
        self.x.abs().max(self.y.abs())
    }

    #[inline]
    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y))
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Vec2<U> {
        Vec2::new(U::c(self.x.as_f64()), U::c(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> SubAssign for Vec2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Scalar> Div<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s)
    }
}

/// 2x2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Scalar> Mat2<T> {
    #[inline]
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn diag(a: T, b: T) -> Self {
        Self::new(a, T::zero(), T::zero(), b)
    }

    /// `u v^T`.
    #[inline]
    pub fn outer(u: Vec2<T>, v: Vec2<T>) -> Self {
        Self::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    #[inline]
    pub fn transpose(self) -> Self {
        Self::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    #[inline]
    pub fn mul_vec(self, v: Vec2<T>) -> Vec2<T> {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    /// `v^T M` as a vector.
    #[inline]
    pub fn left_mul_vec(self, v: Vec2<T>) -> Vec2<T> {
        self.transpose().mul_vec(v)
    }

    #[inline]
    pub fn matmul(self, o: Self) -> Self {
        let a = self.m;
        let b = o.m;
        Self::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Self::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }

    #[inline]
    pub fn max_abs(self) -> T {
        self.m[0][0]
            .abs()
            .max(self.m[0][1].abs())
            .max(self.m[1][0].abs())
            .max(self.m[1][1].abs())
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Scalar> Aabb<T> {
    pub fn new(min: Vec2<T>, max: Vec2<T>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
}

impl<T: Scalar> Segment<T> {
    pub fn new(a: Vec2<T>, b: Vec2<T>) -> Self {
        Self { a, b }
    }

    pub fn closest_point(&self, p: Vec2<T>) -> Vec2<T> {
        let ab = self.b - self.a;
        let len2 = ab.norm_sq();
        if len2 == T::zero() {
            return self.a;
        }
        let t = ((p - self.a).dot(ab) / len2).max(T::zero()).min(T::one());
        self.a + ab * t
    }

    pub fn distance_to_point(&self, p: Vec2<T>) -> T {
        self.closest_point(p).distance(p)
    }

    /// Parameter `s >= 0` along the ray `origin + s * dir` (unit `dir`) of the
    /// first intersection with this segment, if any.
    pub fn ray_hit(&self, origin: Vec2<T>, dir: Vec2<T>) -> Option<T> {
        let e = self.b - self.a;
        let denom = dir.cross(e);
        let w = self.a - origin;
        if denom.abs() <= T::epsilon() * e.norm().max(T::one()) {
            // Parallel: a collinear overlap reports the nearer endpoint.
            if w.cross(dir).abs() > T::c(1e3) * T::epsilon() * w.norm().max(T::one()) {
                return None;
            }
            let sa = w.dot(dir);
            let sb = (self.b - origin).dot(dir);
            let best = match (sa >= T::zero(), sb >= T::zero()) {
                (true, true) => sa.min(sb),
                (true, false) | (false, true) => T::zero(),
                (false, false) => return None,
            };
            return Some(best);
        }
        let s = w.cross(e) / denom;
        let u = w.cross(dir) / denom;
        let tol = T::c(1e-12);
        if s >= T::zero() && u >= -tol && u <= T::one() + tol {
            Some(s)
        } else {
            None
        }
    }

    pub fn distance_to_segment(&self, o: &Segment<T>) -> T {
        if segments_intersect(self, o) {
            return T::zero();
        }
        self.distance_to_point(o.a)
            .min(self.distance_to_point(o.b))
            .min(o.distance_to_point(self.a))
            .min(o.distance_to_point(self.b))
    }
}

fn orient<T: Scalar>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    (b - a).cross(c - a)
}

pub fn segments_intersect<T: Scalar>(s: &Segment<T>, o: &Segment<T>) -> bool {
    let d1 = orient(o.a, o.b, s.a);
    let d2 = orient(o.a, o.b, s.b);
    let d3 = orient(s.a, s.b, o.a);
    let d4 = orient(s.a, s.b, o.b);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    let on = |p: Vec2<T>, seg: &Segment<T>, d: T| d == z && seg.distance_to_point(p) == z;
    on(s.a, o, d1) || on(s.b, o, d2) || on(o.a, s, d3) || on(o.b, s, d4)
}

/// Closed simple polygon given by its vertices (implicitly closed).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon<T> {
    pub vertices: Vec<Vec2<T>>,
}

impl<T: Scalar> Polygon<T> {
    pub fn new(vertices: Vec<Vec2<T>>) -> Self {
        Self { vertices }
    }

    /// Axis-aligned rectangle as a polygon.
    pub fn rect(min: Vec2<T>, max: Vec2<T>) -> Self {
        Self::new(vec![min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)])
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment<T>> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd rule; boundary points count as inside.
    pub fn contains(&self, p: Vec2<T>) -> bool {
        if self.boundary_distance(p) == T::zero() {
            return true;
        }
        let mut inside = false;
        for e in self.edges() {
            let (a, b) = (e.a, e.b);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: Vec2<T>) -> T {
        self.edges().map(|e| e.distance_to_point(p)).fold(T::infinity(), T::min)
    }

    pub fn closest_boundary_point(&self, p: Vec2<T>) -> Option<Vec2<T>> {
        let mut best: Option<(T, Vec2<T>)> = None;
        for e in self.edges() {
            let c = e.closest_point(p);
            let d = c.distance(p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
        best.map(|(_, c)| c)
    }

    /// Minimum distance between the boundaries of two polygons (zero when
    /// they touch or cross).
    pub fn distance_to_polygon(&self, other: &Polygon<T>) -> T {
        let mut d = T::infinity();
        for e in self.edges() {
            for f in other.edges() {
                d = d.min(e.distance_to_segment(&f));
            }
        }
        d
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(&edges[i], &edges[j]) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle<T> {
    pub center: Vec2<T>,
    pub radius: T,
}

impl<T: Scalar> Circle<T> {
    fn from_two(a: Vec2<T>, b: Vec2<T>) -> Self {
        let center = (a + b) * T::half();
        Self {
            center,
            radius: center.distance(a).max(center.distance(b)),
        }
    }

    fn from_three(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> Option<Self> {
        let ab = b - a;
        let ac = c - a;
        let d = T::two() * ab.cross(ac);
        if d.abs() <= T::epsilon() * (ab.norm_sq() + ac.norm_sq()) {
            return None;
        }
        let ux = (ac.y * ab.norm_sq() - ab.y * ac.norm_sq()) / d;
        let uy = (ab.x * ac.norm_sq() - ac.x * ab.norm_sq()) / d;
        let center = a + Vec2::new(ux, uy);
        let radius = center.distance(a).max(center.distance(b)).max(center.distance(c));
        Some(Self { center, radius })
    }

    fn contains(&self, p: Vec2<T>) -> bool {
        p.distance(self.center) <= self.radius * (T::one() + T::c(1e-12)) + T::c(1e-12)
    }
}

/// Smallest circle enclosing all points. Incremental Welzl without
/// shuffling; worst case O(n^3).
pub fn min_enclosing_circle<T: Scalar>(points: &[Vec2<T>]) -> Option<Circle<T>> {
    let first = *points.first()?;
    let mut c = Circle {
        center: first,
        radius: T::zero(),
    };
    for i in 1..points.len() {
        if c.contains(points[i]) {
            continue;
        }
        c = Circle {
            center: points[i],
            radius: T::zero(),
        };
        for j in 0..i {
            if c.contains(points[j]) {
                continue;
            }
            c = Circle::from_two(points[i], points[j]);
            for k in 0..j {
                if c.contains(points[k]) {
                    continue;
                }
                c = Circle::from_three(points[i], points[j], points[k]).unwrap_or_else(|| {
                    // Collinear: the farthest pair spans the circle.
                    let cands = [
                        Circle::from_two(points[i], points[j]),
                        Circle::from_two(points[i], points[k]),
                        Circle::from_two(points[j], points[k]),
                    ];
                    cands
                        .into_iter()
                        .fold(cands[0], |m, c| if c.radius > m.radius { c } else { m })
                });
            }
        }
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec2<f64>;

    #[test]
    fn ray_hits_vertical_wall() {
        let wall = Segment::new(V::new(2.0, -1.0), V::new(2.0, 1.0));
        let s = wall.ray_hit(V::zero(), V::new(1.0, 0.0)).unwrap();
        assert!((s - 2.0).abs() < 1e-15);
        assert!(wall.ray_hit(V::zero(), V::new(-1.0, 0.0)).is_none());
    }

    #[test]
    fn polygon_contains_and_distance() {
        let sq = Polygon::rect(V::new(0.0, 0.0), V::new(1.0, 1.0));
        assert!(sq.contains(V::new(0.5, 0.5)));
        assert!(!sq.contains(V::new(1.5, 0.5)));
        assert!((sq.boundary_distance(V::new(1.5, 0.5)) - 0.5).abs() < 1e-15);
        let other = Polygon::rect(V::new(2.2, 0.0), V::new(3.0, 1.0));
        assert!((sq.distance_to_polygon(&other) - 1.2).abs() < 1e-12);
        assert!(sq.is_simple());
        let bowtie = Polygon::new(vec![
            V::new(0.0, 0.0),
            V::new(1.0, 1.0),
            V::new(1.0, 0.0),
            V::new(0.0, 1.0),
        ]);
        assert!(!bowtie.is_simple());
    }

    fn brute_force_circle(points: &[V]) -> f64 {
        // Every minimal circle is determined by 2 or 3 of the points.
        let mut best = f64::INFINITY;
        let covers = |c: &Circle<f64>| points.iter().all(|p| p.distance(c.center) <= c.radius + 1e-9);
        for i in 0..points.len() {
            for j in i..points.len() {
                let c = Circle::from_two(points[i], points[j]);
                if covers(&c) {
                    best = best.min(c.radius);
                }
                for k in j + 1..points.len() {
                    if let Some(c) = Circle::from_three(points[i], points[j], points[k]) {
                        if covers(&c) {
                            best = best.min(c.radius);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn enclosing_circle_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..12);
            let pts: Vec<V> = (0..n)
                .map(|_| V::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)))
                .collect();
            let c = min_enclosing_circle(&pts).unwrap();
            assert!((c.radius - brute_force_circle(&pts)).abs() < 1e-9);
        }
    }

    #[test]
    fn enclosing_circle_of_one_point_is_degenerate() {
        let c = min_enclosing_circle(&[V::new(3.0, 4.0)]).unwrap();
        assert_eq!(c.radius, 0.0);
        assert!(min_enclosing_circle::<f64>(&[]).is_none());
    }
}
