//! Convex safety corridors around a reference trajectory.
//!
//! Each trajectory point gets its own convex region, built in two steps.
//! Step one grows a heading-aligned ellipse at the vehicle center and shrinks
//! it until its interior is obstacle-free: the major axis by bisection of
//! the axis segment against the obstacle field, the minor axis by closing
//! onto each obstacle's closest point. Step two inflates the ellipse toward the
//! obstacles one at a time, always toward the globally nearest one, and cuts
//! a tangent half-space there; obstacles behind a cut are dropped or
//! clipped, so the loop shrinks by at least one obstacle per round. The
//! intersection of the cuts with a fixed bounding box is the region.
//!
//! All obstacle queries run in "inverse space": the affine map sending the
//! ellipse to the unit disk, where closest-point finding is a plain
//! minimum-norm problem.

use crate::geom2d::{self, BufferedObstacle, ConvexShape, GeomError, Mat2, Vec2};
use crate::gjk;
use crate::sto::SegmentedTrajectory;
use crate::vehicle::{State, VehicleGeometry};

/// Half-widths of the box bounding every region, matching the optimizer's
/// default position trust region.
pub const REGION_BOUND: [f64; 2] = [3.0, 3.0];

/// Queries feeding tangent constructions run tighter than general-purpose
/// distance checks so emitted faces exclude their obstacle to well under a
/// nanometer.
const QUERY_TOLERANCE: f64 = 1e-12;
const QUERY_BUDGET: usize = 128;

/// Exit threshold for minor-axis shrinking, in inverse-space units.
const SHRINK_EXIT: f64 = 1e-10;
const SHRINK_BUDGET: usize = 200;

/// Clearance below which a point counts as touching a buffered obstacle.
const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RegionFailure {
    #[error("vehicle center lies inside buffered obstacle {obstacle}")]
    CenterBlocked { obstacle: usize },
    #[error("major axis collapsed while clearing the obstacle field")]
    MajorAxisCollapsed,
    #[error("minor axis collapsed against buffered obstacle {obstacle}")]
    MinorAxisCollapsed { obstacle: usize },
    #[error("minor-axis shrinking did not settle against buffered obstacle {obstacle}")]
    ShrinkStalled { obstacle: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("segment {segment}, point {index}: {reason}")]
pub struct CorridorError {
    pub segment: usize,
    pub index: usize,
    pub reason: RegionFailure,
}

/// Heading-aligned ellipse: the image of the unit disk under
/// `p = R·diag(a, b)·Rᵀ·q + center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub rotation: Mat2,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub center: Vec2,
}

impl Ellipse {
    pub fn new(
        rotation: Mat2,
        semi_major: f64,
        semi_minor: f64,
        center: Vec2,
    ) -> Result<Ellipse, GeomError> {
        let gram = rotation.transpose().mul_mat(rotation);
        let orthonormal = (gram.a - 1.0).abs() < 1e-9
            && (gram.d - 1.0).abs() < 1e-9
            && gram.b.abs() < 1e-9
            && rotation.det() > 0.0;
        if !orthonormal {
            return Err(GeomError::InvalidShape("ellipse rotation must be a rotation matrix".into()));
        }
        if !(semi_major >= semi_minor && semi_minor > 0.0 && semi_major.is_finite()) {
            return Err(GeomError::InvalidShape(format!(
                "ellipse axes must satisfy major {semi_major} >= minor {semi_minor} > 0"
            )));
        }
        if !center.is_finite() {
            return Err(GeomError::InvalidShape("non-finite ellipse center".into()));
        }
        Ok(Ellipse { rotation, semi_major, semi_minor, center })
    }

    /// The symmetric map `C` taking unit-disk coordinates to the plane.
    pub fn shape_matrix(&self) -> Mat2 {
        self.rotation
            .mul_mat(Mat2::diag(self.semi_major, self.semi_minor))
            .mul_mat(self.rotation.transpose())
    }

    pub fn inverse_matrix(&self) -> Mat2 {
        self.rotation
            .mul_mat(Mat2::diag(1.0 / self.semi_major, 1.0 / self.semi_minor))
            .mul_mat(self.rotation.transpose())
    }
}

/// Constraint `normal · p <= offset` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec2, offset: f64) -> Result<HalfSpace, GeomError> {
        let n = normal.norm();
        if !normal.is_finite() || n < 1e-12 {
            return Err(GeomError::ZeroDirection);
        }
        Ok(HalfSpace { normal: normal * (1.0 / n), offset: offset / n })
    }

    /// Signed clearance: positive inside, in meters thanks to the unit
    /// normal.
    pub fn margin(&self, p: Vec2) -> f64 {
        self.offset - self.normal.dot(p)
    }
}

/// Intersection of half-spaces; always bounded because construction appends
/// the [`REGION_BOUND`] box.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygonRegion {
    pub halfspaces: Vec<HalfSpace>,
}

impl ConvexPolygonRegion {
    /// Worst-case signed clearance over all faces; positive strictly inside.
    pub fn margin(&self, p: Vec2) -> f64 {
        self.halfspaces.iter().map(|h| h.margin(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Vec2, tolerance: f64) -> bool {
        self.margin(p) >= -tolerance
    }

    /// Corner points of the region, counterclockwise. Intended for plotting
    /// and audits; quadratic in the face count.
    pub fn vertices(&self) -> Vec<Vec2> {
        let hs = &self.halfspaces;
        let mut points: Vec<Vec2> = Vec::new();
        for i in 0..hs.len() {
            for j in i + 1..hs.len() {
                let m = Mat2::new(hs[i].normal.x, hs[i].normal.y, hs[j].normal.x, hs[j].normal.y);
                let Ok(inv) = m.inverse() else { continue };
                let p = inv.mul_vec(Vec2::new(hs[i].offset, hs[j].offset));
                if self.contains(p, 1e-7) && points.iter().all(|q| (*q - p).norm() > 1e-9) {
                    points.push(p);
                }
            }
        }
        if points.len() > 2 {
            let centroid = points.iter().fold(Vec2::ZERO, |acc, p| acc + *p) * (1.0 / points.len() as f64);
            points.sort_by(|a, b| {
                let ta = (a.y - centroid.y).atan2(a.x - centroid.x);
                let tb = (b.y - centroid.y).atan2(b.x - centroid.x);
                ta.total_cmp(&tb)
            });
        }
        points
    }
}

/// One region per reference point, mirroring the trajectory's segment
/// structure.
#[derive(Debug, Clone)]
pub struct Corridor {
    pub regions: Vec<Vec<ConvexPolygonRegion>>,
}

/// Distance from a point to the buffered obstacle's boundary; negative means
/// the point is inside the buffered set.
fn point_clearance(p: Vec2, ob: &BufferedObstacle) -> f64 {
    let support = |v: Vec2| p - geom2d::support(&ob.base, -v).expect("validated shape");
    let result =
        match gjk::closest_point_tuned(support, p - ob.seed_point(), QUERY_TOLERANCE, QUERY_BUDGET, &mut |_| {}) {
            Ok(r) => r,
            Err(e) => e.best,
        };
    result.distance - ob.buffer
}

/// Distance from the segment `center +/- alpha * axis` to a buffered
/// obstacle; zero when they touch or overlap.
fn axis_clearance(center: Vec2, axis: Vec2, alpha: f64, ob: &BufferedObstacle) -> f64 {
    let tip_fwd = center + axis * alpha;
    let tip_back = center - axis * alpha;
    let support = |v: Vec2| {
        let seg = if v.dot(axis) >= 0.0 { tip_fwd } else { tip_back };
        seg - geom2d::support_buffered(ob, -v).expect("validated shape")
    };
    let result = match gjk::closest_point_tuned(
        support,
        center - ob.seed_point(),
        QUERY_TOLERANCE,
        QUERY_BUDGET,
        &mut |_| {},
    ) {
        Ok(r) => r,
        Err(e) => e.best,
    };
    if result.contains_origin {
        0.0
    } else {
        result.distance
    }
}

/// Step-one seed: an ellipse at the vehicle's geometric center, aligned with
/// its heading, axes proportioned like the vehicle, with the major axis
/// bisected down until the whole axis segment clears every buffered
/// obstacle. Clearing the segment rather than just its endpoints keeps the
/// predicate monotone in the axis length, so bisection cannot leave an
/// obstacle trapped between center and tip.
pub fn initial_ellipse(
    ref_point: &State,
    veh: &VehicleGeometry,
    obstacles: &[BufferedObstacle],
) -> Result<Ellipse, RegionFailure> {
    let pose = ref_point.pose();
    let center = veh.center(&pose);
    let axis = pose.direction();
    for (idx, ob) in obstacles.iter().enumerate() {
        if point_clearance(center, ob) < CONTACT_EPS {
            return Err(RegionFailure::CenterBlocked { obstacle: idx });
        }
    }
    let alpha0 = 0.5 * veh.length();
    let beta0 = 0.5 * veh.width;
    let axis_clear = |alpha: f64| {
        obstacles.iter().all(|ob| axis_clearance(center, axis, alpha, ob) >= CONTACT_EPS)
    };
    let alpha = if axis_clear(alpha0) {
        alpha0
    } else {
        // The center clears, so some shorter axis does too; bisect onto the
        // longest clear one.
        let (mut lo, mut hi) = (0.0, alpha0);
        for _ in 0..32 {
            let mid = 0.5 * (lo + hi);
            if axis_clear(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if alpha < 1e-6 {
        return Err(RegionFailure::MajorAxisCollapsed);
    }
    Ellipse::new(Mat2::rotation(pose.heading), alpha, beta0.min(alpha), center)
        .map_err(|_| RegionFailure::MajorAxisCollapsed)
}

/// Closest point of a buffered convex set to the origin of inverse space.
fn inverse_closest(
    c_inv: Mat2,
    center: Vec2,
    support: impl Fn(Vec2) -> Vec2,
    seed: Vec2,
) -> gjk::ClosestPointResult {
    let mapped = |v: Vec2| c_inv.mul_vec(support(c_inv.mul_vec(v)) - center);
    match gjk::closest_point_tuned(mapped, c_inv.mul_vec(seed - center), QUERY_TOLERANCE, QUERY_BUDGET, &mut |_| {}) {
        Ok(r) => r,
        Err(e) => {
            log::debug!("closest-point query stopped at budget, gap unresolved");
            e.best
        }
    }
}

fn buffered_support(ob: &BufferedObstacle) -> impl Fn(Vec2) -> Vec2 + '_ {
    |v| geom2d::support_buffered(ob, v).expect("validated shape")
}

/// Step-one loop: shortens the minor axis, obstacle by obstacle in input
/// order, until each obstacle's closest point sits on or outside the
/// ellipse. The major axis stays fixed; shrinking only moves points outward
/// in inverse space, so earlier obstacles stay cleared.
pub fn shrink_ellipse(
    ellipse: &Ellipse,
    obstacles: &[BufferedObstacle],
) -> Result<Ellipse, RegionFailure> {
    let rotation = ellipse.rotation;
    let alpha = ellipse.semi_major;
    let center = ellipse.center;
    let mut beta = ellipse.semi_minor;
    for (idx, ob) in obstacles.iter().enumerate() {
        let mut settled = false;
        for _ in 0..SHRINK_BUDGET {
            let current = Ellipse::new(rotation, alpha, beta, center)
                .map_err(|_| RegionFailure::MinorAxisCollapsed { obstacle: idx })?;
            let closest =
                inverse_closest(current.inverse_matrix(), center, buffered_support(ob), ob.seed_point());
            if closest.contains_origin {
                return Err(RegionFailure::CenterBlocked { obstacle: idx });
            }
            if closest.distance >= 1.0 - SHRINK_EXIT {
                settled = true;
                break;
            }
            // Pull the minor axis in so this closest point lands exactly on
            // the boundary: in axis coordinates q, solve
            // (q1/alpha)^2 + (q2/beta')^2 = 1 for beta'.
            let p_plus = current.shape_matrix().mul_vec(closest.point) + center;
            let q = rotation.transpose().mul_vec(p_plus - center);
            let denom = 1.0 - (q.x / alpha).powi(2);
            if denom <= 1e-12 {
                // Closest point rides the major axis; no positive minor axis
                // can exclude it.
                return Err(RegionFailure::MinorAxisCollapsed { obstacle: idx });
            }
            let shrunk = (q.y * q.y / denom).sqrt().min(beta);
            if shrunk <= 1e-9 {
                return Err(RegionFailure::MinorAxisCollapsed { obstacle: idx });
            }
            beta = shrunk;
        }
        if !settled {
            return Err(RegionFailure::ShrinkStalled { obstacle: idx });
        }
    }
    Ellipse::new(rotation, alpha, beta, center).map_err(|_| RegionFailure::MajorAxisCollapsed)
}

/// Obstacle bookkeeping for the expansion loop. Polygons carry their hull
/// explicitly so cuts can clip them; disks and ellipses are only ever removed
/// whole.
enum WorkShape<'a> {
    Hull { points: Vec<Vec2>, buffer: f64 },
    Smooth { shape: &'a ConvexShape, buffer: f64 },
}

impl<'a> WorkShape<'a> {
    fn new(ob: &'a BufferedObstacle) -> WorkShape<'a> {
        match &ob.base {
            ConvexShape::Polygon(vertices) => {
                WorkShape::Hull { points: vertices.clone(), buffer: ob.buffer }
            }
            other => WorkShape::Smooth { shape: other, buffer: ob.buffer },
        }
    }

    /// Support point of the buffered set.
    fn support(&self, v: Vec2) -> Vec2 {
        let unit = v.normalized().expect("nonzero query direction");
        match self {
            WorkShape::Hull { points, buffer } => {
                let mut best = points[0];
                let mut best_dot = best.dot(v);
                for &p in &points[1..] {
                    let d = p.dot(v);
                    if d > best_dot {
                        best = p;
                        best_dot = d;
                    }
                }
                best + unit * *buffer
            }
            WorkShape::Smooth { shape, buffer } => {
                geom2d::support(shape, v).expect("validated shape") + unit * *buffer
            }
        }
    }

    fn seed(&self) -> Vec2 {
        match self {
            WorkShape::Hull { points, .. } => points[0],
            WorkShape::Smooth { shape, .. } => shape.seed_point(),
        }
    }

    /// Exact minimum of `a · p` over the buffered set.
    fn min_along(&self, a: Vec2) -> f64 {
        a.dot(self.support(-a))
    }

    /// Discards the part of the obstacle that can never intrude past the cut
    /// again. The hull is trimmed at `offset + buffer` so its buffered form
    /// still covers everything of the original on the kept side. Returns
    /// false when nothing is left.
    fn clip(&mut self, normal: Vec2, offset: f64) -> bool {
        match self {
            WorkShape::Smooth { .. } => true,
            WorkShape::Hull { points, buffer } => {
                let cut = offset + *buffer;
                let clipped = clip_hull(points, normal, cut);
                let keep = !clipped.is_empty();
                *points = clipped;
                keep
            }
        }
    }
}

/// Sutherland-Hodgman pass keeping `normal · p <= cut`. Accepts degenerate
/// hulls (1-2 points) and may return them.
fn clip_hull(points: &[Vec2], normal: Vec2, cut: f64) -> Vec<Vec2> {
    if points.len() == 1 {
        return if normal.dot(points[0]) <= cut + 1e-12 { points.to_vec() } else { Vec::new() };
    }
    let mut out: Vec<Vec2> = Vec::new();
    let push = |p: Vec2, out: &mut Vec<Vec2>| {
        if out.iter().all(|q| (*q - p).norm() > 1e-12) {
            out.push(p);
        }
    };
    for i in 0..points.len() {
        let p = points[i];
        let q = points[(i + 1) % points.len()];
        let dp = normal.dot(p) - cut;
        let dq = normal.dot(q) - cut;
        if dp <= 1e-12 {
            push(p, &mut out);
        }
        if (dp < -1e-12 && dq > 1e-12) || (dp > 1e-12 && dq < -1e-12) {
            let t = dp / (dp - dq);
            push(p + (q - p) * t, &mut out);
        }
    }
    out
}

/// Tangent face emitted during expansion, kept for diagnostics and tests.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FaceTrace {
    pub tangent_point: Vec2,
    pub expansion: f64,
    pub obstacle: usize,
}

pub(crate) fn generate_polygon_traced(
    ellipse: &Ellipse,
    obstacles: &[BufferedObstacle],
) -> (ConvexPolygonRegion, Vec<FaceTrace>) {
    let c = ellipse.shape_matrix();
    let c_inv = ellipse.inverse_matrix();
    let center = ellipse.center;
    let mut remaining: Vec<(usize, WorkShape)> =
        obstacles.iter().enumerate().map(|(i, ob)| (i, WorkShape::new(ob))).collect();
    let mut halfspaces = Vec::new();
    let mut traces = Vec::new();

    while !remaining.is_empty() {
        // Globally nearest obstacle in inverse space decides the next face.
        let mut best: Option<(usize, gjk::ClosestPointResult)> = None;
        for (slot, (_, shape)) in remaining.iter().enumerate() {
            let r = inverse_closest(c_inv, center, |v| shape.support(v), shape.seed());
            if best.as_ref().map_or(true, |(_, b)| r.distance < b.distance) {
                best = Some((slot, r));
            }
        }
        let (slot, closest) = best.expect("non-empty remaining set");
        let source = remaining[slot].0;
        let tangent_point = c.mul_vec(closest.point) + center;
        // Outward normal of the expanded ellipse at the tangent point. For
        // the symmetric C this is C^-1 C^-T (p+ - d) = C^-1 p̂ up to scale.
        let normal = c_inv
            .mul_vec(closest.point)
            .normalized()
            .expect("tangent point coincides with ellipse center");
        // The support minimum excludes the generating obstacle exactly, so
        // face safety does not ride on the query tolerance.
        let offset = normal.dot(tangent_point).min(remaining[slot].1.min_along(normal));
        halfspaces.push(HalfSpace { normal, offset });
        let trace = FaceTrace { tangent_point, expansion: closest.distance, obstacle: source };
        log::trace!(
            "face {}: obstacle {} tangent ({:.3}, {:.3}) at expansion {:.4}",
            halfspaces.len() - 1,
            trace.obstacle,
            trace.tangent_point.x,
            trace.tangent_point.y,
            trace.expansion,
        );
        traces.push(trace);

        remaining.retain_mut(|(_, shape)| {
            shape.min_along(normal) < offset - 1e-12 && shape.clip(normal, offset)
        });
    }

    let [bx, by] = REGION_BOUND;
    halfspaces.push(HalfSpace { normal: Vec2::new(1.0, 0.0), offset: center.x + bx });
    halfspaces.push(HalfSpace { normal: Vec2::new(-1.0, 0.0), offset: -(center.x - bx) });
    halfspaces.push(HalfSpace { normal: Vec2::new(0.0, 1.0), offset: center.y + by });
    halfspaces.push(HalfSpace { normal: Vec2::new(0.0, -1.0), offset: -(center.y - by) });
    (ConvexPolygonRegion { halfspaces }, traces)
}

/// Step-two expansion: grows the ellipse until it touches the nearest
/// obstacle, cuts the tangent half-space there, discards or clips obstacles
/// already excluded, and repeats until none remain. The result is bounded by
/// the [`REGION_BOUND`] box around the ellipse center.
pub fn generate_polygon(
    ellipse: &Ellipse,
    obstacles: &[BufferedObstacle],
) -> ConvexPolygonRegion {
    generate_polygon_traced(ellipse, obstacles).0
}

/// Builds the free region around one reference state.
pub fn region_for_state(
    state: &State,
    veh: &VehicleGeometry,
    obstacles: &[BufferedObstacle],
) -> Result<ConvexPolygonRegion, RegionFailure> {
    let seeded = initial_ellipse(state, veh, obstacles)?;
    let shrunk = shrink_ellipse(&seeded, obstacles)?;
    Ok(generate_polygon(&shrunk, obstacles))
}

/// One free region per reference point. Fails with the first blocked point's
/// location.
pub fn build_corridor(
    traj: &SegmentedTrajectory,
    veh: &VehicleGeometry,
    obstacles: &[BufferedObstacle],
) -> Result<Corridor, CorridorError> {
    let mut regions = Vec::with_capacity(traj.segments.len());
    for (segment, seg) in traj.segments.iter().enumerate() {
        let mut per_point = Vec::with_capacity(seg.states.len());
        for (index, state) in seg.states.iter().enumerate() {
            let region = region_for_state(state, veh, obstacles)
                .map_err(|reason| CorridorError { segment, index, reason })?;
            per_point.push(region);
        }
        regions.push(per_point);
    }
    Ok(Corridor { regions })
}
