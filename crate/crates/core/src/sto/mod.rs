//! Segmented trajectory optimization: refines a multi-phase parking path
//! into a kinematically feasible, collision-free trajectory.
//!
//! The pipeline per iteration: build a convex corridor around the current
//! reference, linearize the vehicle kinematics along it, solve one convex
//! subproblem, and accept once a Runge-Kutta rollout reproduces the
//! discretized solution within tolerance. Gear shifts split the trajectory
//! into segments that stop at their boundaries; curvature may jump there
//! unless the baseline mode pins it.

mod assemble;
mod speed;

pub use assemble::assemble_subproblem;
pub use speed::plan_simple_speed;
pub(crate) use speed::unwrap_near;

use crate::corridor::{self, Corridor};
use crate::geom2d::BufferedObstacle;
use crate::qp::{QpSettings, QpStatus};
use crate::vehicle::{segment_rk4_error, Control, Pose, State, VehicleGeometry};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Geometric input: one polyline of poses per motion phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSegment {
    pub poses: Vec<Pose>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPath {
    pub segments: Vec<SeedSegment>,
}

/// One motion phase: N states, N-1 controls, uniform travel direction.
#[derive(Debug, Clone)]
pub struct Segment {
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    pub direction: Direction,
}

/// Time-parameterized trajectory split at gear shifts. Headings are kept
/// unwrapped (continuous across segment boundaries).
#[derive(Debug, Clone)]
pub struct SegmentedTrajectory {
    pub segments: Vec<Segment>,
    pub timestep: f64,
}

impl SegmentedTrajectory {
    pub fn new(segments: Vec<Segment>, timestep: f64) -> SegmentedTrajectory {
        assert!(timestep > 0.0);
        assert!(!segments.is_empty());
        for seg in &segments {
            assert!(seg.states.len() >= 2, "segment needs at least two states");
            assert_eq!(seg.controls.len(), seg.states.len() - 1);
        }
        SegmentedTrajectory { segments, timestep }
    }

    pub fn n_points(&self) -> usize {
        self.segments.iter().map(|s| s.states.len()).sum()
    }

    pub fn start(&self) -> &State {
        &self.segments.first().unwrap().states[0]
    }

    pub fn goal(&self) -> &State {
        self.segments.last().unwrap().states.last().unwrap()
    }
}

/// Sum of straight-line distances between consecutive trajectory points.
pub fn path_length(traj: &SegmentedTrajectory) -> f64 {
    traj.segments
        .iter()
        .flat_map(|seg| seg.states.windows(2))
        .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
        .sum()
}

/// Quadratic penalty weights, one per decision quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub curvature: f64,
    pub slack: f64,
    pub accel: f64,
    pub curvature_rate: f64,
}

impl Default for Weights {
    fn default() -> Weights {
        Weights {
            x: 0.3,
            y: 0.3,
            heading: 0.1,
            v: 1.8,
            curvature: 30.0,
            slack: 10.0,
            accel: 5.0,
            curvature_rate: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoParams {
    pub weights: Weights,
    pub curvature_max: f64,
    pub accel_max: f64,
    pub curvature_rate_max: f64,
    pub v_max: f64,
    /// Reverse speed bound, negative.
    pub v_min: f64,
    /// Half-widths of the per-point position trust region, meters.
    pub proximity_pos: [f64; 2],
    /// Half-width of the per-point heading trust region, radians.
    pub proximity_heading: f64,
    /// Componentwise rollout-error gate on [x, y, heading, v, curvature].
    pub feasibility_tolerance: [f64; 5],
    /// A feasible iterate only counts as converged once consecutive
    /// iterates agree within this distance (max over states and
    /// components), so one lucky subproblem cannot end the refinement
    /// while the solution is still moving.
    pub step_tolerance: f64,
    pub max_sqp_iterations: usize,
    pub timestep: f64,
}

impl Default for StoParams {
    fn default() -> StoParams {
        StoParams {
            weights: Weights::default(),
            curvature_max: 0.16,
            accel_max: 1.0,
            curvature_rate_max: 0.03,
            v_max: 3.0,
            v_min: -3.0,
            proximity_pos: [3.0, 3.0],
            proximity_heading: 0.175,
            feasibility_tolerance: [0.01, 0.01, 0.01, 1e-4, 1e-4],
            step_tolerance: 1e-3,
            max_sqp_iterations: 10,
            timestep: 0.1,
        }
    }
}

impl StoParams {
    pub fn validate(&self) -> Result<(), String> {
        let w = &self.weights;
        let weights = [w.x, w.y, w.heading, w.v, w.curvature, w.slack, w.accel, w.curvature_rate];
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("weights must be finite and non-negative".into());
        }
        let positive = [
            ("curvature_max", self.curvature_max),
            ("accel_max", self.accel_max),
            ("curvature_rate_max", self.curvature_rate_max),
            ("v_max", self.v_max),
            ("proximity_heading", self.proximity_heading),
            ("timestep", self.timestep),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.v_min < 0.0) {
            return Err(format!("v_min must be negative, got {}", self.v_min));
        }
        if self.proximity_pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("proximity_pos must be positive".into());
        }
        if self.feasibility_tolerance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("feasibility_tolerance must be positive".into());
        }
        if !(self.step_tolerance > 0.0 && self.step_tolerance.is_finite()) {
            return Err(format!("step_tolerance must be positive, got {}", self.step_tolerance));
        }
        if self.max_sqp_iterations == 0 {
            return Err("max_sqp_iterations must be at least 1".into());
        }
        Ok(())
    }
}

/// Gear-shift curvature treatment: `Sto` leaves curvature free across
/// boundaries; `Baseline` forces it continuous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sto,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoStatus {
    Converged,
    MaxIterations,
    QpInfeasible { iteration: usize },
    CorridorInfeasible { iteration: usize, segment: usize, index: usize },
}

#[derive(Debug, Clone)]
pub struct StoResult {
    /// Best trajectory available: the converged solution, the last iterate,
    /// or the reference if no subproblem was solved.
    pub trajectory: SegmentedTrajectory,
    pub status: StoStatus,
    /// Completed solve rounds.
    pub iterations: usize,
    /// Componentwise rollout error after each round.
    pub feasibility_errors: Vec<[f64; 5]>,
    /// Corridor built for each round, for plotting and audits.
    pub corridors: Vec<Corridor>,
    pub qp_iterations: Vec<usize>,
    /// Largest corner-containment slack per round.
    pub max_slack: Vec<f64>,
    /// Final per-point corner-containment slacks, mirroring the trajectory's
    /// segment layout; zeros until a subproblem has been solved.
    pub point_slacks: Vec<Vec<f64>>,
    /// The initial speed-planned reference.
    pub reference: SegmentedTrajectory,
    pub corridor_seconds: f64,
    pub qp_seconds: f64,
}

impl StoResult {
    pub fn converged(&self) -> bool {
        self.status == StoStatus::Converged
    }
}

fn rollout_error(traj: &SegmentedTrajectory) -> [f64; 5] {
    let mut err = [0.0f64; 5];
    for seg in &traj.segments {
        let e = segment_rk4_error(&seg.states, &seg.controls, traj.timestep);
        for c in 0..5 {
            err[c] = err[c].max(e[c]);
        }
    }
    err
}

fn below(err: &[f64; 5], tol: &[f64; 5]) -> bool {
    err.iter().zip(tol).all(|(e, t)| e < t)
}

/// Refines `path` into a feasible trajectory. Endpoint states are pinned to
/// the first and last path poses, so callers wanting an exact goal must hand
/// in a path that ends on it.
pub fn optimize(
    path: &SeedPath,
    obstacles: &[BufferedObstacle],
    veh: &VehicleGeometry,
    params: &StoParams,
    mode: Mode,
) -> StoResult {
    assert!(veh.is_valid());
    params.validate().expect("invalid optimization parameters");

    let reference = plan_simple_speed(path, params);
    let mut current = reference.clone();
    let qp_settings = QpSettings::default();
    let layout = assemble::VarLayout::new(&current, mode);

    let mut result = StoResult {
        trajectory: current.clone(),
        status: StoStatus::MaxIterations,
        iterations: 0,
        feasibility_errors: Vec::new(),
        corridors: Vec::new(),
        qp_iterations: Vec::new(),
        max_slack: Vec::new(),
        point_slacks: current.segments.iter().map(|s| vec![0.0; s.states.len()]).collect(),
        reference,
        corridor_seconds: 0.0,
        qp_seconds: 0.0,
    };
    let mut warm: Option<Vec<f64>> = None;

    for iteration in 1..=params.max_sqp_iterations {
        let t0 = Instant::now();
        let corridor = match corridor::build_corridor(&current, veh, obstacles) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("round {iteration}: corridor failed: {e}");
                result.status = StoStatus::CorridorInfeasible {
                    iteration,
                    segment: e.segment,
                    index: e.index,
                };
                result.trajectory = current;
                return result;
            }
        };
        result.corridor_seconds += t0.elapsed().as_secs_f64();

        let qp = assemble_subproblem(&current, &corridor, veh, params, mode);
        let t1 = Instant::now();
        let sol = qp.solve(warm.as_deref(), &qp_settings);
        result.qp_seconds += t1.elapsed().as_secs_f64();

        if sol.status == QpStatus::Infeasible {
            log::warn!("round {iteration}: subproblem infeasible");
            result.status = StoStatus::QpInfeasible { iteration };
            result.trajectory = current;
            result.corridors.push(corridor);
            return result;
        }
        if sol.status == QpStatus::MaxIterations {
            // Rare; the iterate is still a usable step, keep going.
            log::warn!(
                "round {iteration}: subproblem hit the iteration cap (residuals {:.2e}/{:.2e})",
                sol.primal_residual,
                sol.dual_residual
            );
        }

        let next = layout.extract(&sol.primal, &current, params);
        let err = rollout_error(&next);
        log::debug!(
            "round {iteration}: rollout error [{:.2e} {:.2e} {:.2e} {:.2e} {:.2e}], {} solver iters",
            err[0], err[1], err[2], err[3], err[4], sol.iterations
        );

        result.iterations = iteration;
        result.feasibility_errors.push(err);
        result.corridors.push(corridor);
        result.qp_iterations.push(sol.iterations);
        result.max_slack.push(layout.max_slack(&sol.primal));
        result.point_slacks = layout.slacks(&sol.primal);
        warm = Some(sol.primal);
        current = next;

        if below(&err, &params.feasibility_tolerance) {
            result.status = StoStatus::Converged;
            result.trajectory = current;
            return result;
        }
    }

    result.status = StoStatus::MaxIterations;
    result.trajectory = current;
    result
}
