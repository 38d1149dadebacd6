//! Grid-based kinematic search producing a coarse segmented path when the
//! scenario does not carry one.
//!
//! The search runs over a lattice of short arcs at curvature
//! `{-max, 0, +max}` in both driving directions, bins visited poses on an
//! x/y/heading grid, and stops at the first node within the goal tolerance.
//! The result is deliberately rough: the optimizer downstream owns comfort
//! and precision; this module only owes it a collision-free, correctly
//! segmented starting point.

use std::collections::{BinaryHeap, HashSet};

use crate::geom2d::{self, BufferedObstacle, Vec2};
use crate::gjk;
use crate::sto::{unwrap_near, Direction, SeedPath, SeedSegment};
use crate::vehicle::{footprint, Pose, VehicleGeometry};

/// Arc substeps kept per expansion; also the output pose spacing
/// (`xy_step / ARC_SUBSTEPS`).
const ARC_SUBSTEPS: usize = 4;

/// Collision margin required of every pose on the path, in meters beyond the
/// obstacle buffers.
const CLEARANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GridParams {
    /// Arc length of one motion primitive and the x/y bin size.
    pub xy_step: f64,
    /// Number of heading bins over a full turn. Must resolve one turning
    /// primitive (bin width below `curvature_max * xy_step`), otherwise a
    /// turn's first step lands in its straight sibling's cell and gets
    /// deduplicated away, leaving the search unable to curve.
    pub heading_bins: usize,
    /// Curvature magnitude of the turning primitives.
    pub curvature_max: f64,
    /// Maximum nodes expanded before giving up.
    pub node_budget: usize,
    pub goal_position_tolerance: f64,
    pub goal_heading_tolerance: f64,
    /// Cost (meters-equivalent) added when a move reverses driving
    /// direction.
    pub switch_penalty: f64,
    /// Meters-per-radian weight of the heading mismatch in the heuristic.
    /// `1 / curvature_max` makes it the exact arc length a heading change
    /// costs at full steering lock.
    pub heading_weight: f64,
    /// Multiplier on the heuristic; above 1 trades optimality for speed.
    pub greediness: f64,
}

impl Default for GridParams {
    fn default() -> GridParams {
        GridParams {
            xy_step: 0.2,
            heading_bins: 200,
            curvature_max: 0.16,
            node_budget: 200_000,
            goal_position_tolerance: 0.2,
            goal_heading_tolerance: 5.0f64.to_radians(),
            switch_penalty: 2.0,
            heading_weight: 6.25,
            greediness: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("start pose collides with buffered obstacle {obstacle}")]
    StartBlocked { obstacle: usize },
    #[error("goal pose collides with buffered obstacle {obstacle}")]
    GoalBlocked { obstacle: usize },
    #[error("no path to the goal after expanding {expanded} nodes")]
    BudgetExhausted { expanded: usize },
}

/// Footprint-vs-obstacle tests with an axis-aligned-box prefilter.
struct CollisionChecker<'a> {
    veh: &'a VehicleGeometry,
    obstacles: &'a [BufferedObstacle],
    /// Per obstacle: min x, max x, min y, max y of the buffered shape.
    bounds: Vec<[f64; 4]>,
}

impl<'a> CollisionChecker<'a> {
    fn new(veh: &'a VehicleGeometry, obstacles: &'a [BufferedObstacle]) -> CollisionChecker<'a> {
        let bounds = obstacles
            .iter()
            .map(|ob| {
                let sup = |v: Vec2| geom2d::support_buffered(ob, v).expect("validated shape");
                [
                    sup(Vec2::new(-1.0, 0.0)).x,
                    sup(Vec2::new(1.0, 0.0)).x,
                    sup(Vec2::new(0.0, -1.0)).y,
                    sup(Vec2::new(0.0, 1.0)).y,
                ]
            })
            .collect();
        CollisionChecker { veh, obstacles, bounds }
    }

    /// Index of the first obstacle the footprint touches, if any.
    fn blocking_obstacle(&self, pose: &Pose) -> Option<usize> {
        let corners = footprint(pose, self.veh);
        let mut lo = corners[0];
        let mut hi = corners[0];
        for c in &corners[1..] {
            lo = Vec2::new(lo.x.min(c.x), lo.y.min(c.y));
            hi = Vec2::new(hi.x.max(c.x), hi.y.max(c.y));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            let b = self.bounds[i];
            if hi.x < b[0] - CLEARANCE_EPS
                || lo.x > b[1] + CLEARANCE_EPS
                || hi.y < b[2] - CLEARANCE_EPS
                || lo.y > b[3] + CLEARANCE_EPS
            {
                continue;
            }
            let rect = |v: Vec2| {
                let mut best = corners[0];
                let mut best_dot = best.dot(v);
                for &c in &corners[1..] {
                    let d = c.dot(v);
                    if d > best_dot {
                        best = c;
                        best_dot = d;
                    }
                }
                best
            };
            let sup = |v: Vec2| geom2d::support_buffered(ob, v).expect("validated shape");
            let result = match gjk::distance_between(rect, corners[0], sup, ob.seed_point()) {
                Ok(r) => r,
                Err(e) => e.best,
            };
            if result.contains_origin || result.distance < CLEARANCE_EPS {
                return Some(i);
            }
        }
        None
    }

    fn is_clear(&self, pose: &Pose) -> bool {
        self.blocking_obstacle(pose).is_none()
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    pose: Pose,
    direction: Direction,
    curvature: f64,
    parent: Option<usize>,
    g: f64,
}

/// Min-heap entry ordered by f-cost with an insertion tiebreak, so equal
/// costs pop in a platform-independent order.
struct Open {
    f: f64,
    tie: u64,
    node: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.f.total_cmp(&self.f).then(other.tie.cmp(&self.tie))
    }
}

/// Exact constant-curvature integration of a signed arc length.
fn advance(pose: Pose, ds: f64, curvature: f64) -> Pose {
    if curvature.abs() < 1e-12 {
        Pose {
            x: pose.x + ds * pose.heading.cos(),
            y: pose.y + ds * pose.heading.sin(),
            heading: pose.heading,
        }
    } else {
        let turned = pose.heading + ds * curvature;
        Pose {
            x: pose.x + (turned.sin() - pose.heading.sin()) / curvature,
            y: pose.y - (turned.cos() - pose.heading.cos()) / curvature,
            heading: turned,
        }
    }
}

fn wrapped(angle: f64) -> f64 {
    unwrap_near(angle, 0.0)
}

fn cell(pose: &Pose, grid: &GridParams) -> (i64, i64, i64) {
    let bin = std::f64::consts::TAU / grid.heading_bins as f64;
    let ith = (pose.heading.rem_euclid(std::f64::consts::TAU) / bin).floor() as i64
        % grid.heading_bins as i64;
    (
        (pose.x / grid.xy_step).floor() as i64,
        (pose.y / grid.xy_step).floor() as i64,
        ith,
    )
}

/// Lower bound on remaining driven length: the position gap and the heading
/// gap must each be covered, the latter at no better than full steering
/// lock, so the larger of the two is still optimistic.
fn heuristic(pose: &Pose, goal: &Pose, grid: &GridParams) -> f64 {
    let d = (pose.position() - goal.position()).norm();
    d.max(grid.heading_weight * wrapped(pose.heading - goal.heading).abs())
}

fn at_goal(pose: &Pose, goal: &Pose, grid: &GridParams) -> bool {
    (pose.position() - goal.position()).norm() <= grid.goal_position_tolerance
        && wrapped(pose.heading - goal.heading).abs() <= grid.goal_heading_tolerance
}

/// Searches for a collision-free segmented path from `start` to `goal`.
///
/// The returned path starts exactly at `start`; its final pose is pulled
/// onto the exact goal by spreading the residual grid error over the last
/// segment, unless doing so would graze an obstacle, in which case the path
/// ends within the grid tolerance instead.
pub fn plan_seed_path(
    start: &Pose,
    goal: &Pose,
    obstacles: &[BufferedObstacle],
    veh: &VehicleGeometry,
    grid: &GridParams,
) -> Result<SeedPath, PlanError> {
    let checker = CollisionChecker::new(veh, obstacles);
    if let Some(obstacle) = checker.blocking_obstacle(start) {
        return Err(PlanError::StartBlocked { obstacle });
    }
    if let Some(obstacle) = checker.blocking_obstacle(goal) {
        return Err(PlanError::GoalBlocked { obstacle });
    }
    if at_goal(start, goal, grid) {
        return Ok(trivial_path(start, goal));
    }

    let substep = grid.xy_step / ARC_SUBSTEPS as f64;
    let curvatures = [-grid.curvature_max, 0.0, grid.curvature_max];
    let mut nodes: Vec<Node> = Vec::new();
    let mut heap: BinaryHeap<Open> = BinaryHeap::new();
    let mut closed: HashSet<(i64, i64, i64, bool)> = HashSet::new();
    let mut tie: u64 = 0;

    for direction in [Direction::Forward, Direction::Backward] {
        nodes.push(Node { pose: *start, direction, curvature: 0.0, parent: None, g: 0.0 });
        heap.push(Open {
            f: grid.greediness * heuristic(start, goal, grid),
            tie,
            node: nodes.len() - 1,
        });
        tie += 1;
    }

    let mut expanded = 0usize;
    let mut closest = (f64::INFINITY, *start);
    while let Some(Open { node: idx, .. }) = heap.pop() {
        let node = nodes[idx];
        let (ix, iy, ith) = cell(&node.pose, grid);
        if !closed.insert((ix, iy, ith, node.direction == Direction::Forward)) {
            continue;
        }
        if at_goal(&node.pose, goal, grid) {
            return Ok(reconstruct(&nodes, idx, goal, substep, &checker));
        }
        let h = heuristic(&node.pose, goal, grid);
        if h < closest.0 {
            closest = (h, node.pose);
        }
        expanded += 1;
        if expanded >= grid.node_budget {
            log_closest_approach(&closest);
            return Err(PlanError::BudgetExhausted { expanded });
        }

        for direction in [Direction::Forward, Direction::Backward] {
            let ds = direction.sign() * substep;
            'primitive: for &curvature in &curvatures {
                let mut pose = node.pose;
                for _ in 0..ARC_SUBSTEPS {
                    pose = advance(pose, ds, curvature);
                    if !checker.is_clear(&pose) {
                        continue 'primitive;
                    }
                }
                let child_cell = cell(&pose, grid);
                if closed.contains(&(
                    child_cell.0,
                    child_cell.1,
                    child_cell.2,
                    direction == Direction::Forward,
                )) {
                    continue;
                }
                let mut g = node.g + grid.xy_step;
                if direction != node.direction && node.parent.is_some() {
                    g += grid.switch_penalty;
                }
                nodes.push(Node { pose, direction, curvature, parent: Some(idx), g });
                heap.push(Open {
                    f: g + grid.greediness * heuristic(&pose, goal, grid),
                    tie,
                    node: nodes.len() - 1,
                });
                tie += 1;
            }
        }
    }
    log_closest_approach(&closest);
    Err(PlanError::BudgetExhausted { expanded })
}

fn log_closest_approach(closest: &(f64, Pose)) {
    let p = closest.1;
    log::debug!(
        "search gave up; closest approach h={:.3} at ({:.2}, {:.2}, {:.3})",
        closest.0, p.x, p.y, p.heading
    );
}

/// Start and goal already coincide within tolerance: one short forward
/// segment, densely interpolated.
fn trivial_path(start: &Pose, goal: &Pose) -> SeedPath {
    let d = (goal.position() - start.position()).norm();
    let dh = wrapped(goal.heading - start.heading);
    if d < 1e-12 && dh.abs() < 1e-12 {
        return SeedPath {
            segments: vec![SeedSegment { poses: vec![*start], direction: Direction::Forward }],
        };
    }
    let steps = ((d / 0.05).ceil() as usize).max(1);
    let poses = (0..=steps)
        .map(|i| {
            let w = i as f64 / steps as f64;
            Pose {
                x: start.x + w * (goal.x - start.x),
                y: start.y + w * (goal.y - start.y),
                heading: start.heading + w * dh,
            }
        })
        .collect();
    SeedPath { segments: vec![SeedSegment { poses, direction: Direction::Forward }] }
}

/// Walks the parent chain, regenerates the substep poses of every move, and
/// groups runs of equal direction into segments. Consecutive segments share
/// their boundary pose.
fn reconstruct(
    nodes: &[Node],
    goal_idx: usize,
    goal: &Pose,
    substep: f64,
    checker: &CollisionChecker,
) -> SeedPath {
    let mut chain = Vec::new();
    let mut cursor = Some(goal_idx);
    while let Some(i) = cursor {
        chain.push(i);
        cursor = nodes[i].parent;
    }
    chain.reverse();

    let mut segments: Vec<SeedSegment> = Vec::new();
    let mut direction = nodes[chain[1]].direction;
    let mut poses = vec![nodes[chain[0]].pose];
    for &i in &chain[1..] {
        let node = &nodes[i];
        if node.direction != direction {
            let boundary = *poses.last().expect("non-empty run");
            segments.push(SeedSegment { poses, direction });
            direction = node.direction;
            poses = vec![boundary];
        }
        let parent = nodes[node.parent.expect("non-root")].pose;
        let ds = node.direction.sign() * substep;
        let mut pose = parent;
        for _ in 0..ARC_SUBSTEPS {
            pose = advance(pose, ds, node.curvature);
            poses.push(pose);
        }
    }
    segments.push(SeedSegment { poses, direction });

    snap_to_goal(&mut segments, goal, checker);
    SeedPath { segments }
}

/// Spreads the residual error between the reached pose and the exact goal
/// linearly over the final segment. Kept only if every adjusted pose stays
/// collision-free.
fn snap_to_goal(segments: &mut [SeedSegment], goal: &Pose, checker: &CollisionChecker) {
    let seg = segments.last_mut().expect("non-empty path");
    let n = seg.poses.len();
    if n < 2 {
        return;
    }
    let last = seg.poses[n - 1];
    let dx = goal.x - last.x;
    let dy = goal.y - last.y;
    let dh = wrapped(goal.heading - last.heading);
    let adjusted: Vec<Pose> = seg
        .poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i == n - 1 {
                return *goal;
            }
            let w = i as f64 / (n - 1) as f64;
            Pose { x: p.x + w * dx, y: p.y + w * dy, heading: p.heading + w * dh }
        })
        .collect();
    if adjusted.iter().all(|p| checker.is_clear(p)) {
        seg.poses = adjusted;
    } else {
        log::warn!(
            "goal snap would graze an obstacle; path ends {:.3} m off the exact goal",
            (dx.hypot(dy))
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom2d::ConvexShape;

    fn table_vehicle() -> VehicleGeometry {
        VehicleGeometry { l_f: 3.89, l_r: 1.043, width: 1.87 }
    }

    fn block(cx: f64, cy: f64, half_x: f64, half_y: f64) -> BufferedObstacle {
        BufferedObstacle::new(
            ConvexShape::polygon(vec![
                Vec2::new(cx - half_x, cy - half_y),
                Vec2::new(cx + half_x, cy - half_y),
                Vec2::new(cx + half_x, cy + half_y),
                Vec2::new(cx - half_x, cy + half_y),
            ])
            .unwrap(),
            0.2,
        )
        .unwrap()
    }

    fn path_spacing_ok(path: &SeedPath) -> bool {
        path.segments.iter().all(|seg| {
            seg.poses.windows(2).all(|w| {
                (w[1].x - w[0].x).hypot(w[1].y - w[0].y) <= 0.1 + 1e-9
            })
        })
    }

    #[test]
    fn start_equals_goal_is_trivial() {
        let pose = Pose { x: 1.0, y: -2.0, heading: 0.7 };
        let path =
            plan_seed_path(&pose, &pose, &[], &table_vehicle(), &GridParams::default()).unwrap();
        assert_eq!(path.segments.len(), 1);
        assert_eq!(path.segments[0].poses, vec![pose]);
    }

    #[test]
    fn straight_goal_gives_one_forward_segment() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: 5.0, y: 0.0, heading: 0.0 };
        let path =
            plan_seed_path(&start, &goal, &[], &table_vehicle(), &GridParams::default()).unwrap();
        assert_eq!(path.segments.len(), 1);
        assert_eq!(path.segments[0].direction, Direction::Forward);
        let end = *path.segments[0].poses.last().unwrap();
        assert_eq!((end.x, end.y, end.heading), (5.0, 0.0, 0.0), "snapped to the exact goal");
        let length: f64 = path.segments[0]
            .poses
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum();
        assert!((length - 5.0).abs() < 0.5, "length {length}");
        assert!(path_spacing_ok(&path));
    }

    #[test]
    fn goal_behind_is_driven_in_reverse() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: -4.0, y: 0.0, heading: 0.0 };
        let path =
            plan_seed_path(&start, &goal, &[], &table_vehicle(), &GridParams::default()).unwrap();
        assert_eq!(path.segments.len(), 1);
        assert_eq!(path.segments[0].direction, Direction::Backward);
        let end = *path.segments[0].poses.last().unwrap();
        assert_eq!((end.x, end.y, end.heading), (-4.0, 0.0, 0.0));
    }

    #[test]
    fn turned_goal_respects_the_curvature_bound() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: 8.0, y: 5.0, heading: std::f64::consts::FRAC_PI_2 };
        let path =
            plan_seed_path(&start, &goal, &[], &table_vehicle(), &GridParams::default()).unwrap();
        assert!(path_spacing_ok(&path));
        for seg in &path.segments {
            for w in seg.poses.windows(2) {
                let ds = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
                if ds > 1e-9 {
                    let dh = wrapped(w[1].heading - w[0].heading).abs();
                    assert!(dh / ds <= 0.18, "curvature {} over bound", dh / ds);
                }
            }
        }
    }

    #[test]
    fn every_pose_clears_the_obstacles() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: 10.0, y: 4.0, heading: 0.0 };
        let obstacles = vec![block(7.0, -0.6, 1.0, 1.0), block(5.0, 7.0, 1.0, 1.0)];
        let veh = table_vehicle();
        let path =
            plan_seed_path(&start, &goal, &obstacles, &veh, &GridParams::default()).unwrap();
        let checker = CollisionChecker::new(&veh, &obstacles);
        for seg in &path.segments {
            for pose in &seg.poses {
                assert!(checker.is_clear(pose), "pose ({}, {}) collides", pose.x, pose.y);
                // Same statement through the raw corner distance.
                for corner in footprint(pose, &veh) {
                    for ob in &obstacles {
                        let sup = |v: Vec2| {
                            corner - geom2d::support_buffered(ob, -v).expect("valid")
                        };
                        let r = gjk::closest_point_to_origin(sup, corner - ob.seed_point())
                            .expect("converges");
                        assert!(r.distance > 0.0);
                    }
                }
            }
        }
        assert!(path_spacing_ok(&path));
    }

    #[test]
    fn blocked_endpoints_error_out() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: 8.0, y: 0.0, heading: 0.0 };
        let on_start = vec![block(1.0, 0.0, 0.5, 0.5)];
        let err = plan_seed_path(&start, &goal, &on_start, &table_vehicle(), &GridParams::default())
            .unwrap_err();
        assert_eq!(err, PlanError::StartBlocked { obstacle: 0 });
        let on_goal = vec![block(9.0, 0.0, 0.5, 0.5)];
        let err = plan_seed_path(&start, &goal, &on_goal, &table_vehicle(), &GridParams::default())
            .unwrap_err();
        assert_eq!(err, PlanError::GoalBlocked { obstacle: 0 });
    }

    #[test]
    fn walled_off_goal_exhausts_the_budget() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: 12.0, y: 0.0, heading: 0.0 };
        // Goal sealed inside a box of walls.
        let obstacles = vec![
            block(12.0, 6.0, 8.0, 0.4),
            block(12.0, -6.0, 8.0, 0.4),
            block(6.0, 0.0, 0.4, 6.0),
            block(18.0, 0.0, 0.4, 6.0),
        ];
        let grid = GridParams { node_budget: 3000, ..GridParams::default() };
        let result = plan_seed_path(&start, &goal, &obstacles, &table_vehicle(), &grid);
        assert!(matches!(result, Err(PlanError::BudgetExhausted { .. })), "{result:?}");
    }

    #[test]
    fn near_goal_start_interpolates_densely() {
        let start = Pose { x: 0.0, y: 0.0, heading: 0.0 };
        let goal = Pose { x: 0.15, y: 0.05, heading: 0.02 };
        let path =
            plan_seed_path(&start, &goal, &[], &table_vehicle(), &GridParams::default()).unwrap();
        assert_eq!(path.segments.len(), 1);
        assert!(path_spacing_ok(&path));
        let end = *path.segments[0].poses.last().unwrap();
        assert_eq!((end.x, end.y, end.heading), (goal.x, goal.y, goal.heading));
    }
}
