//! Closest-point-to-origin queries on convex sets described only by their
//! support functions.
//!
//! This is the distance variant of the Gilbert-Johnson-Keerthi iteration:
//! keep a simplex of at most three support points, project the origin onto
//! it, and pull a new support point along the negated projection until the
//! normalized duality gap `| |p| - <p, w>/|p| |` drops below
//! [`GJK_TOLERANCE`]. The gap is a certified optimality bound, so a
//! converged result is the true closest point up to that tolerance.

use crate::geom2d::Vec2;
use thiserror::Error;

/// Termination threshold for the normalized duality gap, and for deciding
/// the origin is contained.
pub const GJK_TOLERANCE: f64 = 1e-8;

/// Hard iteration cap; support sets here are small, so hitting it means a
/// degenerate query rather than a large problem.
pub const MAX_ITERATIONS: usize = 64;

/// 1-3 points whose convex hull approximates the set near the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex2 {
    points: Vec<Vec2>,
}

impl Simplex2 {
    pub fn new(points: Vec<Vec2>) -> Simplex2 {
        assert!(
            !points.is_empty() && points.len() <= 3,
            "simplex holds 1 to 3 points, got {}",
            points.len()
        );
        Simplex2 { points }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPointResult {
    /// Closest point of the set to the origin (the origin itself when
    /// `contains_origin`).
    pub point: Vec2,
    pub distance: f64,
    pub contains_origin: bool,
}

#[derive(Debug, Error, Clone)]
#[error("GJK did not converge within {MAX_ITERATIONS} iterations (best distance {})", best.distance)]
pub struct MaxIterationsError {
    pub best: ClosestPointResult,
}

/// Closest point of the convex hull of the simplex to the origin, together
/// with the minimal sub-simplex supporting that point.
pub fn closest_point_on_simplex(simplex: &Simplex2) -> (Vec2, Simplex2) {
    let (p, pts) = closest_on_points(simplex.points());
    (p, Simplex2::new(pts))
}

fn closest_on_segment(a: Vec2, b: Vec2) -> (Vec2, Vec<Vec2>) {
    let e = b - a;
    let len_sq = e.norm_sq();
    if len_sq < 1e-24 {
        return (a, vec![a]);
    }
    let t = -a.dot(e) / len_sq;
    if t <= 0.0 {
        (a, vec![a])
    } else if t >= 1.0 {
        (b, vec![b])
    } else {
        (a + e * t, vec![a, b])
    }
}

fn closest_on_points(points: &[Vec2]) -> (Vec2, Vec<Vec2>) {
    match points {
        [a] => (*a, vec![*a]),
        [a, b] => closest_on_segment(*a, *b),
        [a, b, c] => {
            let ab = *b - *a;
            let ac = *c - *a;
            // Degenerate triangles fall back to the best edge.
            if ab.cross(ac).abs() < 1e-18 {
                let candidates = [
                    closest_on_segment(*a, *b),
                    closest_on_segment(*a, *c),
                    closest_on_segment(*b, *c),
                ];
                return candidates
                    .into_iter()
                    .min_by(|(p, _), (q, _)| p.norm_sq().total_cmp(&q.norm_sq()))
                    .unwrap();
            }
            // Voronoi-region walk for the origin against triangle (a, b, c).
            let ap = -*a;
            let d1 = ab.dot(ap);
            let d2 = ac.dot(ap);
            if d1 <= 0.0 && d2 <= 0.0 {
                return (*a, vec![*a]);
            }
            let bp = -*b;
            let d3 = ab.dot(bp);
            let d4 = ac.dot(bp);
            if d3 >= 0.0 && d4 <= d3 {
                return (*b, vec![*b]);
            }
            let vc = d1 * d4 - d3 * d2;
            if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
                let t = d1 / (d1 - d3);
                return (*a + ab * t, vec![*a, *b]);
            }
            let cp = -*c;
            let d5 = ab.dot(cp);
            let d6 = ac.dot(cp);
            if d6 >= 0.0 && d5 <= d6 {
                return (*c, vec![*c]);
            }
            let vb = d5 * d2 - d1 * d6;
            if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
                let t = d2 / (d2 - d6);
                return (*a + ac * t, vec![*a, *c]);
            }
            let va = d3 * d6 - d4 * d5;
            if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
                let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
                return (*b + (*c - *b) * t, vec![*b, *c]);
            }
            (Vec2::ZERO, vec![*a, *b, *c])
        }
        _ => unreachable!("simplex size bounded by 3"),
    }
}

/// Runs the iteration on a set given by `support`, starting from `seed`
/// (which must be a point of the set).
pub fn closest_point_to_origin<S>(support: S, seed: Vec2) -> Result<ClosestPointResult, MaxIterationsError>
where
    S: Fn(Vec2) -> Vec2,
{
    closest_point_observed(support, seed, &mut |_| {})
}

/// Same iteration, reporting each iterate's candidate point. Test hook for
/// the monotonicity property; not part of the public surface.
pub(crate) fn closest_point_observed<S>(
    support: S,
    seed: Vec2,
    observe: &mut dyn FnMut(Vec2),
) -> Result<ClosestPointResult, MaxIterationsError>
where
    S: Fn(Vec2) -> Vec2,
{
    closest_point_tuned(support, seed, GJK_TOLERANCE, MAX_ITERATIONS, observe)
}

/// The iteration with explicit tolerance and iteration budget. Internal
/// queries that feed tangent constructions run this tighter than the default.
pub(crate) fn closest_point_tuned<S>(
    support: S,
    seed: Vec2,
    tolerance: f64,
    max_iterations: usize,
    observe: &mut dyn FnMut(Vec2),
) -> Result<ClosestPointResult, MaxIterationsError>
where
    S: Fn(Vec2) -> Vec2,
{
    let contained = ClosestPointResult { point: Vec2::ZERO, distance: 0.0, contains_origin: true };
    let mut p = seed;
    let mut simplex = vec![seed];
    for _ in 0..max_iterations {
        observe(p);
        let dist = p.norm();
        if dist < tolerance {
            return Ok(contained);
        }
        let w = support(-p);
        // Normalized duality gap: |p| bounds the distance from above,
        // <p, w>/|p| from below.
        let gap = (dist - p.dot(w) / dist).abs();
        if gap < tolerance {
            return Ok(ClosestPointResult { point: p, distance: dist, contains_origin: false });
        }
        // A repeated support point cannot improve the simplex; the current
        // projection is already optimal over the whole set.
        if simplex.iter().any(|q| (*q - w).norm() < 1e-12) {
            return Ok(ClosestPointResult { point: p, distance: dist, contains_origin: false });
        }
        simplex.insert(0, w);
        let (q, reduced) = closest_on_points(&simplex);
        p = q;
        simplex = reduced;
    }
    let dist = p.norm();
    Err(MaxIterationsError {
        best: ClosestPointResult { point: p, distance: dist, contains_origin: dist < tolerance },
    })
}

/// Distance between two convex sets: the closest point to the origin of the
/// Minkowski difference `A - B`. `point` lives in difference space;
/// `contains_origin` means the sets intersect.
pub fn distance_between<SA, SB>(
    support_a: SA,
    seed_a: Vec2,
    support_b: SB,
    seed_b: Vec2,
) -> Result<ClosestPointResult, MaxIterationsError>
where
    SA: Fn(Vec2) -> Vec2,
    SB: Fn(Vec2) -> Vec2,
{
    closest_point_to_origin(|v| support_a(v) - support_b(-v), seed_a - seed_b)
}
