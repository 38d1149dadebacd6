//! Planar vectors, 2x2 matrices, affine maps, and convex shapes queried
//! through support functions.
//!
//! Everything downstream (collision queries, corridor construction) touches
//! obstacles only via [`support`] / [`support_buffered`], so shapes stay
//! exact: a buffered obstacle is the Minkowski sum of its base shape and a
//! disk, never a polygonal approximation.

use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Tolerance for duplicate-vertex detection and assorted geometric ties.
pub const GEOM_EPS: f64 = 1e-9;

/// Below this |determinant| an affine map is treated as singular.
const DET_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("support direction must be finite and non-zero")]
    ZeroDirection,
    #[error("affine map is singular (det = {det:.3e})")]
    SingularMap { det: f64 },
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
}

/// Planar vector / point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product; positive when `other` is
    /// counter-clockwise from `self`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Row-major 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn diag(x: f64, y: f64) -> Self {
        Mat2::new(x, 0.0, 0.0, y)
    }

    pub fn det(self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn transpose(self) -> Mat2 {
        Mat2::new(self.a, self.c, self.b, self.d)
    }

    pub fn inverse(self) -> Result<Mat2, GeomError> {
        let det = self.det();
        if !det.is_finite() || det.abs() < DET_EPS {
            return Err(GeomError::SingularMap { det });
        }
        let inv = 1.0 / det;
        Ok(Mat2::new(self.d * inv, -self.b * inv, -self.c * inv, self.a * inv))
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn mul_mat(self, m: Mat2) -> Mat2 {
        Mat2::new(
            self.a * m.a + self.b * m.c,
            self.a * m.b + self.b * m.d,
            self.c * m.a + self.d * m.c,
            self.c * m.b + self.d * m.d,
        )
    }

    pub fn is_finite(self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

/// Invertible affine map `p -> linear * p + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap2 {
    pub linear: Mat2,
    pub offset: Vec2,
}

impl AffineMap2 {
    pub const IDENTITY: AffineMap2 = AffineMap2 { linear: Mat2::IDENTITY, offset: Vec2::ZERO };

    pub fn new(linear: Mat2, offset: Vec2) -> Self {
        AffineMap2 { linear, offset }
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.linear.mul_vec(p) + self.offset
    }

    /// Maps `p` through the inverse, i.e. solves `linear * q + offset = p`.
    pub fn invert_point(&self, p: Vec2) -> Result<Vec2, GeomError> {
        Ok(self.linear.inverse()?.mul_vec(p - self.offset))
    }

    pub fn inverse(&self) -> Result<AffineMap2, GeomError> {
        let inv = self.linear.inverse()?;
        Ok(AffineMap2::new(inv, -inv.mul_vec(self.offset)))
    }

    /// `self` after `other`: `(self ∘ other)(p) = self(other(p))`.
    pub fn compose(&self, other: &AffineMap2) -> AffineMap2 {
        AffineMap2::new(self.linear.mul_mat(other.linear), self.apply(other.offset))
    }
}

/// Compact convex set.
///
/// Polygons store counter-clockwise, strictly convex vertex lists. The
/// `Ellipse` variant is the image of the closed unit disk under an
/// invertible affine map. Use the checked constructors; the invariants are
/// assumed everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexShape {
    Polygon(Vec<Vec2>),
    Disk { center: Vec2, radius: f64 },
    Ellipse(AffineMap2),
}

impl ConvexShape {
    /// Validates: at least 3 finite vertices, no duplicates within
    /// [`GEOM_EPS`], strictly convex, counter-clockwise.
    pub fn polygon(vertices: Vec<Vec2>) -> Result<ConvexShape, GeomError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeomError::InvalidPolygon(format!("{n} vertices, need at least 3")));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidPolygon("non-finite vertex".into()));
        }
        for i in 0..n {
            for j in i + 1..n {
                if (vertices[i] - vertices[j]).norm() < GEOM_EPS {
                    return Err(GeomError::InvalidPolygon(format!(
                        "vertices {i} and {j} coincide"
                    )));
                }
            }
        }
        let mut negative = 0;
        for i in 0..n {
            let e0 = vertices[(i + 1) % n] - vertices[i];
            let e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
            let cross = e0.cross(e1);
            if cross <= 0.0 {
                negative += 1;
            }
        }
        if negative == n {
            return Err(GeomError::InvalidPolygon("clockwise orientation".into()));
        }
        if negative > 0 {
            return Err(GeomError::InvalidPolygon("not strictly convex".into()));
        }
        Ok(ConvexShape::Polygon(vertices))
    }

    pub fn disk(center: Vec2, radius: f64) -> Result<ConvexShape, GeomError> {
        if !center.is_finite() || !radius.is_finite() || radius <= 0.0 {
            return Err(GeomError::InvalidShape(format!("disk radius {radius} must be positive")));
        }
        Ok(ConvexShape::Disk { center, radius })
    }

    /// Ellipse as the affine image of the unit disk; the map must be
    /// invertible.
    pub fn ellipse(map: AffineMap2) -> Result<ConvexShape, GeomError> {
        if !map.linear.is_finite() || !map.offset.is_finite() {
            return Err(GeomError::InvalidShape("non-finite ellipse map".into()));
        }
        let det = map.linear.det();
        if det.abs() < DET_EPS {
            return Err(GeomError::SingularMap { det });
        }
        Ok(ConvexShape::Ellipse(map))
    }

    /// A point inside the shape, used to seed iterative queries.
    pub fn seed_point(&self) -> Vec2 {
        match self {
            ConvexShape::Polygon(v) => v[0],
            ConvexShape::Disk { center, .. } => *center,
            ConvexShape::Ellipse(map) => map.offset,
        }
    }
}

/// Obstacle inflated by a safety margin: the Minkowski sum of `base` and the
/// origin-centered disk of radius `buffer`.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferedObstacle {
    pub base: ConvexShape,
    pub buffer: f64,
}

impl BufferedObstacle {
    pub fn new(base: ConvexShape, buffer: f64) -> Result<BufferedObstacle, GeomError> {
        if !buffer.is_finite() || buffer < 0.0 {
            return Err(GeomError::InvalidShape(format!(
                "buffer {buffer} must be finite and non-negative"
            )));
        }
        Ok(BufferedObstacle { base, buffer })
    }

    pub fn seed_point(&self) -> Vec2 {
        self.base.seed_point()
    }
}

fn check_direction(direction: Vec2) -> Result<(), GeomError> {
    if !direction.is_finite() || direction.norm_sq() == 0.0 {
        return Err(GeomError::ZeroDirection);
    }
    Ok(())
}

/// Support point: the point of `shape` furthest along `direction`.
///
/// Polygon ties resolve to the lowest vertex index, which keeps repeated
/// queries deterministic.
pub fn support(shape: &ConvexShape, direction: Vec2) -> Result<Vec2, GeomError> {
    check_direction(direction)?;
    match shape {
        ConvexShape::Polygon(vertices) => {
            let mut best = vertices[0];
            let mut best_dot = best.dot(direction);
            for &v in &vertices[1..] {
                let d = v.dot(direction);
                if d > best_dot {
                    best = v;
                    best_dot = d;
                }
            }
            Ok(best)
        }
        ConvexShape::Disk { center, radius } => {
            let unit = direction.normalized().ok_or(GeomError::ZeroDirection)?;
            Ok(*center + unit * *radius)
        }
        ConvexShape::Ellipse(map) => {
            // argmax over {Lq + t : |q| <= 1} of <Lq + t, v> is at
            // q = L^T v / |L^T v|.
            let lt_v = map.linear.transpose().mul_vec(direction);
            let unit = lt_v.normalized().ok_or(GeomError::ZeroDirection)?;
            Ok(map.linear.mul_vec(unit) + map.offset)
        }
    }
}

/// Support point of the buffered obstacle: base support plus
/// `buffer * direction / |direction|`.
pub fn support_buffered(obstacle: &BufferedObstacle, direction: Vec2) -> Result<Vec2, GeomError> {
    let base = support(&obstacle.base, direction)?;
    let unit = direction.normalized().ok_or(GeomError::ZeroDirection)?;
    Ok(base + unit * obstacle.buffer)
}

/// Image of `shape` under the invertible affine `map`.
///
/// Polygons map vertex-wise (orientation restored if the map reflects);
/// disks become ellipses unless the map is a similarity; ellipses compose.
pub fn transform_shape(map: &AffineMap2, shape: &ConvexShape) -> Result<ConvexShape, GeomError> {
    let det = map.linear.det();
    if !map.linear.is_finite() || det.abs() < DET_EPS {
        return Err(GeomError::SingularMap { det });
    }
    match shape {
        ConvexShape::Polygon(vertices) => {
            let mut mapped: Vec<Vec2> = vertices.iter().map(|&v| map.apply(v)).collect();
            if det < 0.0 {
                mapped.reverse();
            }
            ConvexShape::polygon(mapped)
        }
        ConvexShape::Disk { center, radius } => {
            let linear = map.linear.mul_mat(Mat2::diag(*radius, *radius));
            let offset = map.apply(*center);
            // A similarity keeps the image a disk: L^T L = s^2 I.
            let gram = linear.transpose().mul_mat(linear);
            if (gram.a - gram.d).abs() < DET_EPS && gram.b.abs() < DET_EPS {
                return ConvexShape::disk(offset, gram.a.sqrt());
            }
            ConvexShape::ellipse(AffineMap2::new(linear, offset))
        }
        ConvexShape::Ellipse(inner) => ConvexShape::ellipse(map.compose(inner)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> ConvexShape {
        ConvexShape::polygon(vec![
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
        ])
        .unwrap()
    }

    /// Convex pentagon with distinct vertex norms so support ties are rare.
    fn pentagon() -> ConvexShape {
        ConvexShape::polygon(vec![
            Vec2::new(2.0, 0.0),
            Vec2::new(0.9, 1.4),
            Vec2::new(-1.1, 0.9),
            Vec2::new(-1.4, -0.6),
            Vec2::new(0.4, -1.6),
        ])
        .unwrap()
    }

    fn random_direction(rng: &mut impl Rng) -> Vec2 {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        Vec2::new(angle.cos(), angle.sin())
    }

    /// Exact distance from a point to a polygon boundary/interior.
    fn point_polygon_distance(p: Vec2, vertices: &[Vec2]) -> f64 {
        let n = vertices.len();
        let mut inside = true;
        let mut best = f64::INFINITY;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let e = b - a;
            if e.cross(p - a) < 0.0 {
                inside = false;
            }
            let t = ((p - a).dot(e) / e.norm_sq()).clamp(0.0, 1.0);
            best = best.min((p - (a + e * t)).norm());
        }
        if inside {
            0.0
        } else {
            best
        }
    }

    #[test]
    fn support_square_diagonal() {
        let s = support(&unit_square(), Vec2::new(1.0, 1.0)).unwrap();
        assert_eq!(s, Vec2::new(1.0, 1.0));
    }

    #[test]
    fn support_square_tie_takes_lowest_index() {
        // Direction +x: vertices 1 and 2 tie; index 1 must win.
        let s = support(&unit_square(), Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(s, Vec2::new(1.0, -1.0));
    }

    #[test]
    fn support_disk_closed_form() {
        let disk = ConvexShape::disk(Vec2::new(1.0, 2.0), 0.5).unwrap();
        let s = support(&disk, Vec2::new(0.0, -3.0)).unwrap();
        assert!((s - Vec2::new(1.0, 1.5)).norm() < 1e-15);
    }

    #[test]
    fn support_matches_vertex_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ConvexShape::Polygon(vertices) = pentagon() else { unreachable!() };
        let shape = pentagon();
        for _ in 0..200 {
            let dir = random_direction(&mut rng);
            let s = support(&shape, dir).unwrap();
            let best = vertices
                .iter()
                .map(|v| v.dot(dir))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((s.dot(dir) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn support_consistency_over_sampled_interior_points() {
        // For every point q of the set and direction v: <q, v> <= <S(v), v>.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shapes = vec![
            pentagon(),
            ConvexShape::disk(Vec2::new(0.3, -0.2), 1.3).unwrap(),
            ConvexShape::ellipse(AffineMap2::new(
                Mat2::rotation(0.7).mul_mat(Mat2::diag(2.0, 0.8)),
                Vec2::new(-1.0, 0.4),
            ))
            .unwrap(),
        ];
        for shape in &shapes {
            for _ in 0..256 {
                let dir = random_direction(&mut rng);
                let s = support(shape, dir).unwrap();
                let q = match shape {
                    ConvexShape::Polygon(v) => {
                        // Random convex combination of vertices.
                        let mut weights: Vec<f64> =
                            (0..v.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
                        let total: f64 = weights.iter().sum();
                        weights.iter_mut().for_each(|w| *w /= total);
                        v.iter()
                            .zip(&weights)
                            .fold(Vec2::ZERO, |acc, (p, w)| acc + *p * *w)
                    }
                    ConvexShape::Disk { center, radius } => {
                        let r = radius * rng.gen_range(0.0..1.0_f64).sqrt();
                        *center + random_direction(&mut rng) * r
                    }
                    ConvexShape::Ellipse(map) => {
                        let r = rng.gen_range(0.0..1.0_f64).sqrt();
                        map.apply(random_direction(&mut rng) * r)
                    }
                };
                assert!(q.dot(dir) <= s.dot(dir) + 1e-9);
            }
        }
    }

    #[test]
    fn buffered_support_is_exact_minkowski_sum() {
        let obstacle = BufferedObstacle::new(pentagon(), 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..64 {
            let dir = random_direction(&mut rng);
            let buffered = support_buffered(&obstacle, dir).unwrap();
            let base = support(&obstacle.base, dir).unwrap();
            let expected = base + dir.normalized().unwrap() * 0.2;
            assert!((buffered.x - expected.x).abs() <= 1e-12);
            assert!((buffered.y - expected.y).abs() <= 1e-12);
        }
    }

    #[test]
    fn buffered_pentagon_support_lies_at_buffer_distance() {
        let ConvexShape::Polygon(vertices) = pentagon() else { unreachable!() };
        let obstacle = BufferedObstacle::new(pentagon(), 0.2).unwrap();
        for i in 0..64 {
            let angle = i as f64 * std::f64::consts::TAU / 64.0;
            let dir = Vec2::new(angle.cos(), angle.sin());
            let s = support_buffered(&obstacle, dir).unwrap();
            let d = point_polygon_distance(s, &vertices);
            assert!((d - 0.2).abs() < 1e-9, "direction {i}: distance {d}");
        }
    }

    #[test]
    fn zero_direction_rejected() {
        assert_eq!(support(&pentagon(), Vec2::ZERO), Err(GeomError::ZeroDirection));
        let obstacle = BufferedObstacle::new(pentagon(), 0.1).unwrap();
        assert_eq!(
            support_buffered(&obstacle, Vec2::new(0.0, 0.0)),
            Err(GeomError::ZeroDirection)
        );
        assert_eq!(
            support(&pentagon(), Vec2::new(f64::NAN, 1.0)),
            Err(GeomError::ZeroDirection)
        );
    }

    #[test]
    fn map_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let map = AffineMap2::new(
                Mat2::new(
                    rng.gen_range(-2.0..2.0) + 2.5, // keep well-conditioned
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-2.0..2.0) + 2.5,
                ),
                Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            );
            let p = Vec2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
            let round = map.invert_point(map.apply(p)).unwrap();
            assert!((round - p).norm() < 1e-9);
            let inv = map.inverse().unwrap();
            assert!((inv.apply(map.apply(p)) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn singular_map_rejected() {
        let map = AffineMap2::new(Mat2::new(1.0, 2.0, 2.0, 4.0), Vec2::ZERO);
        assert!(matches!(map.invert_point(Vec2::new(1.0, 1.0)), Err(GeomError::SingularMap { .. })));
        assert!(matches!(
            transform_shape(&map, &pentagon()),
            Err(GeomError::SingularMap { .. })
        ));
    }

    #[test]
    fn transform_polygon_identity() {
        let shape = pentagon();
        let out = transform_shape(&AffineMap2::IDENTITY, &shape).unwrap();
        assert_eq!(out, shape);
    }

    #[test]
    fn transform_polygon_reflection_restores_ccw() {
        let map = AffineMap2::new(Mat2::diag(-1.0, 1.0), Vec2::ZERO);
        let out = transform_shape(&map, &pentagon()).unwrap();
        assert!(matches!(out, ConvexShape::Polygon(_)));
        // Re-validation inside the constructor already proved CCW.
    }

    #[test]
    fn transform_disk_to_ellipse_closed_form() {
        // disk(0, r) under diag(0.5, 1) has semi-axes (0.5 r, r).
        let r = 0.8;
        let disk = ConvexShape::disk(Vec2::ZERO, r).unwrap();
        let map = AffineMap2::new(Mat2::diag(0.5, 1.0), Vec2::ZERO);
        let out = transform_shape(&map, &disk).unwrap();
        let ConvexShape::Ellipse(em) = out else { panic!("expected ellipse") };
        let sx = support(&ConvexShape::Ellipse(em), Vec2::new(1.0, 0.0)).unwrap();
        let sy = support(&ConvexShape::Ellipse(em), Vec2::new(0.0, 1.0)).unwrap();
        assert!((sx.x - 0.5 * r).abs() < 1e-12);
        assert!((sy.y - r).abs() < 1e-12);
    }

    #[test]
    fn transform_disk_similarity_stays_disk() {
        let disk = ConvexShape::disk(Vec2::new(1.0, 0.0), 2.0).unwrap();
        let map = AffineMap2::new(Mat2::rotation(0.4).mul_mat(Mat2::diag(3.0, 3.0)), Vec2::new(0.0, 1.0));
        let out = transform_shape(&map, &disk).unwrap();
        let ConvexShape::Disk { radius, .. } = out else { panic!("expected disk") };
        assert!((radius - 6.0).abs() < 1e-9);
    }

    #[test]
    fn transform_supports_match_sampled_boundary_oracle() {
        // Support of the transformed shape vs. a dense sampling of the
        // transformed boundary, for 32 random directions.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let map = AffineMap2::new(
            Mat2::new(1.4, 0.3, -0.2, 0.9),
            Vec2::new(0.7, -0.3),
        );
        let shapes = vec![pentagon(), ConvexShape::disk(Vec2::new(0.2, 0.1), 1.1).unwrap()];
        for shape in &shapes {
            let transformed = transform_shape(&map, shape).unwrap();
            // Sample the original boundary densely and push through the map.
            let mut boundary = Vec::new();
            match shape {
                ConvexShape::Polygon(v) => {
                    for i in 0..v.len() {
                        let a = v[i];
                        let b = v[(i + 1) % v.len()];
                        for k in 0..2500 {
                            let t = k as f64 / 2500.0;
                            boundary.push(map.apply(a + (b - a) * t));
                        }
                    }
                }
                ConvexShape::Disk { center, radius } => {
                    for k in 0..10_000 {
                        let ang = k as f64 * std::f64::consts::TAU / 10_000.0;
                        boundary.push(map.apply(*center + Vec2::new(ang.cos(), ang.sin()) * *radius));
                    }
                }
                ConvexShape::Ellipse(_) => unreachable!(),
            }
            for _ in 0..32 {
                let dir = random_direction(&mut rng);
                let s = support(&transformed, dir).unwrap();
                let oracle = boundary
                    .iter()
                    .map(|p| p.dot(dir))
                    .fold(f64::NEG_INFINITY, f64::max);
                // Sampling only under-estimates the true maximum.
                assert!(s.dot(dir) >= oracle - 1e-6);
                assert!(s.dot(dir) <= oracle + 1e-3);
            }
        }
    }

    #[test]
    fn polygon_validation_rejects_bad_input() {
        assert!(matches!(
            ConvexShape::polygon(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]),
            Err(GeomError::InvalidPolygon(_))
        ));
        // Clockwise square.
        assert!(matches!(
            ConvexShape::polygon(vec![
                Vec2::new(-1.0, -1.0),
                Vec2::new(-1.0, 1.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(1.0, -1.0),
            ]),
            Err(GeomError::InvalidPolygon(_))
        ));
        // Duplicate vertex.
        assert!(matches!(
            ConvexShape::polygon(vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.0, 1.0),
            ]),
            Err(GeomError::InvalidPolygon(_))
        ));
        // Collinear triple (not strictly convex).
        assert!(matches!(
            ConvexShape::polygon(vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(2.0, 0.0),
                Vec2::new(1.0, 1.0),
            ]),
            Err(GeomError::InvalidPolygon(_))
        ));
        // Non-convex quad.
        assert!(matches!(
            ConvexShape::polygon(vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(2.0, 0.0),
                Vec2::new(0.5, 0.5),
                Vec2::new(0.0, 2.0),
            ]),
            Err(GeomError::InvalidPolygon(_))
        ));
    }

    #[test]
    fn negative_buffer_rejected() {
        assert!(BufferedObstacle::new(pentagon(), -0.1).is_err());
        assert!(BufferedObstacle::new(pentagon(), 0.0).is_ok());
    }
}
