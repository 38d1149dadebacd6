//! Turns a reference trajectory plus corridor into one convex subproblem.
//!
//! Decision vector, ordered by segment then timestep: the five state
//! components, the two controls when the point has a successor, and one
//! corner-containment slack. Keeping each point's variables adjacent makes
//! every constraint row short-spanned, so the solver's normal matrix stays
//! banded.

use crate::corridor::Corridor;
use crate::qp::QpProblem;
use crate::sto::{Direction, Mode, SegmentedTrajectory, StoParams};
use crate::vehicle::{linearize_corner, linearize_step, Corner, State, VehicleGeometry};

const STATE_DIM: usize = 5;
const CONTROL_DIM: usize = 2;

pub(crate) struct VarLayout {
    offsets: Vec<Vec<usize>>,
    lengths: Vec<usize>,
    n: usize,
    /// Baseline mode: a gear shift's two standstill points share one
    /// curvature variable, making continuity exact rather than a stiff
    /// equality the solver must grind down.
    shared_boundary_curvature: bool,
}

impl VarLayout {
    pub(crate) fn new(traj: &SegmentedTrajectory, mode: Mode) -> VarLayout {
        let mut offsets = Vec::with_capacity(traj.segments.len());
        let mut lengths = Vec::with_capacity(traj.segments.len());
        let mut next = 0;
        for seg in &traj.segments {
            let n_i = seg.states.len();
            let mut per_point = Vec::with_capacity(n_i);
            for k in 0..n_i {
                per_point.push(next);
                next += STATE_DIM + 1 + if k + 1 < n_i { CONTROL_DIM } else { 0 };
            }
            offsets.push(per_point);
            lengths.push(n_i);
        }
        VarLayout {
            offsets,
            lengths,
            n: next,
            shared_boundary_curvature: mode == Mode::Baseline,
        }
    }

    pub(crate) fn n_vars(&self) -> usize {
        self.n
    }

    fn state(&self, seg: usize, k: usize, comp: usize) -> usize {
        debug_assert!(comp < STATE_DIM);
        if self.shared_boundary_curvature && comp == 4 && k == 0 && seg > 0 {
            // The previous segment's last point owns the variable; this
            // point's own slot stays unused.
            return self.offsets[seg - 1][self.lengths[seg - 1] - 1] + comp;
        }
        self.offsets[seg][k] + comp
    }

    fn control(&self, seg: usize, k: usize, comp: usize) -> usize {
        debug_assert!(comp < CONTROL_DIM && k + 1 < self.lengths[seg]);
        self.offsets[seg][k] + STATE_DIM + comp
    }

    fn slack(&self, seg: usize, k: usize) -> usize {
        let controls = if k + 1 < self.lengths[seg] { CONTROL_DIM } else { 0 };
        self.offsets[seg][k] + STATE_DIM + controls
    }

    /// Reads a solved primal vector back into trajectory form, keeping the
    /// template's directions and timestep. Speed, curvature, and controls are
    /// clamped onto their boxes: the solver satisfies bounds only to its
    /// residual tolerance, and the downstream feasibility gate re-checks the
    /// clamped result anyway.
    pub(crate) fn extract(
        &self,
        primal: &[f64],
        template: &SegmentedTrajectory,
        params: &StoParams,
    ) -> SegmentedTrajectory {
        assert_eq!(primal.len(), self.n);
        let segments = template
            .segments
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                let (v_lo, v_hi) = match seg.direction {
                    Direction::Forward => (0.0, params.v_max),
                    Direction::Backward => (params.v_min, 0.0),
                };
                let states = (0..seg.states.len())
                    .map(|k| {
                        State::from_array([
                            primal[self.state(i, k, 0)],
                            primal[self.state(i, k, 1)],
                            primal[self.state(i, k, 2)],
                            primal[self.state(i, k, 3)].clamp(v_lo, v_hi),
                            primal[self.state(i, k, 4)]
                                .clamp(-params.curvature_max, params.curvature_max),
                        ])
                    })
                    .collect();
                let controls = (0..seg.states.len() - 1)
                    .map(|k| crate::vehicle::Control {
                        accel: primal[self.control(i, k, 0)]
                            .clamp(-params.accel_max, params.accel_max),
                        curvature_rate: primal[self.control(i, k, 1)]
                            .clamp(-params.curvature_rate_max, params.curvature_rate_max),
                    })
                    .collect();
                crate::sto::Segment { states, controls, direction: seg.direction }
            })
            .collect();
        SegmentedTrajectory { segments, timestep: template.timestep }
    }

    pub(crate) fn max_slack(&self, primal: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, seg) in self.offsets.iter().enumerate() {
            for k in 0..seg.len() {
                worst = worst.max(primal[self.slack(i, k)]);
            }
        }
        worst
    }

    /// Per-point corner-containment slacks, mirroring the segment layout.
    pub(crate) fn slacks(&self, primal: &[f64]) -> Vec<Vec<f64>> {
        self.offsets
            .iter()
            .enumerate()
            .map(|(i, seg)| (0..seg.len()).map(|k| primal[self.slack(i, k)]).collect())
            .collect()
    }
}

/// Builds the per-round subproblem: linearized dynamics equalities, actuator
/// and speed bounds, endpoint and gear-shift pins, a trust region around the
/// reference, corner containment in the corridor with shared per-point slack,
/// and a diagonal quadratic objective.
pub fn assemble_subproblem(
    reference: &SegmentedTrajectory,
    corridor: &Corridor,
    veh: &VehicleGeometry,
    params: &StoParams,
    mode: Mode,
) -> QpProblem {
    let m = reference.segments.len();
    assert_eq!(corridor.regions.len(), m, "corridor/reference segment count mismatch");
    for (i, seg) in reference.segments.iter().enumerate() {
        assert_eq!(
            corridor.regions[i].len(),
            seg.states.len(),
            "corridor/reference point count mismatch in segment {i}"
        );
    }

    let layout = VarLayout::new(reference, mode);
    let mut qp = QpProblem::new(layout.n_vars());
    let dt = reference.timestep;
    let w = &params.weights;

    // Objective: position and heading track the reference; speed, curvature,
    // slack, and controls are penalized toward zero.
    for (i, seg) in reference.segments.iter().enumerate() {
        for (k, r) in seg.states.iter().enumerate() {
            let refs = [Some(r.x), Some(r.y), Some(r.heading), None, None];
            let weights = [w.x, w.y, w.heading, w.v, w.curvature];
            for c in 0..STATE_DIM {
                let idx = layout.state(i, k, c);
                qp.add_cost(idx, idx, 2.0 * weights[c]);
                if let Some(target) = refs[c] {
                    qp.add_linear_cost(idx, -2.0 * weights[c] * target);
                }
            }
            let s = layout.slack(i, k);
            qp.add_cost(s, s, 2.0 * w.slack);
            if k + 1 < seg.states.len() {
                let a = layout.control(i, k, 0);
                let psi = layout.control(i, k, 1);
                qp.add_cost(a, a, 2.0 * w.accel);
                qp.add_cost(psi, psi, 2.0 * w.curvature_rate);
            }
        }
    }

    // Endpoint pins: the maneuver starts and ends at rest on the reference
    // endpoints; curvature stays free.
    let start = reference.start();
    let goal = reference.goal();
    let last_seg = m - 1;
    let last_k = reference.segments[last_seg].states.len() - 1;
    for (c, v) in [(0, start.x), (1, start.y), (2, start.heading), (3, 0.0)] {
        qp.add_equality(vec![(layout.state(0, 0, c), 1.0)], v);
    }
    for (c, v) in [(0, goal.x), (1, goal.y), (2, goal.heading), (3, 0.0)] {
        qp.add_equality(vec![(layout.state(last_seg, last_k, c), 1.0)], v);
    }

    for (i, seg) in reference.segments.iter().enumerate() {
        let n_i = seg.states.len();
        let (v_lo, v_hi) = match seg.direction {
            Direction::Forward => (0.0, params.v_max),
            Direction::Backward => (params.v_min, 0.0),
        };
        for (k, r) in seg.states.iter().enumerate() {
            qp.add_bound(layout.state(i, k, 4), -params.curvature_max, params.curvature_max);
            qp.add_bound(layout.state(i, k, 3), v_lo, v_hi);
            qp.add_bound(layout.slack(i, k), 0.0, f64::INFINITY);
            if k + 1 < n_i {
                qp.add_bound(layout.control(i, k, 0), -params.accel_max, params.accel_max);
                qp.add_bound(layout.control(i, k, 1), -params.curvature_rate_max, params.curvature_rate_max);
            }

            // Trust region centered on the current reference.
            let [dx, dy] = params.proximity_pos;
            qp.add_bound(layout.state(i, k, 0), r.x - dx, r.x + dx);
            qp.add_bound(layout.state(i, k, 1), r.y - dy, r.y + dy);
            qp.add_bound(
                layout.state(i, k, 2),
                r.heading - params.proximity_heading,
                r.heading + params.proximity_heading,
            );

            // All four corners inside the convex region, softened by one
            // shared slack per point.
            let region = &corridor.regions[i][k];
            let sigma = layout.slack(i, k);
            for corner in Corner::ALL {
                let lin = linearize_corner(r, veh, corner);
                for hs in &region.halfspaces {
                    let row = vec![
                        (layout.state(i, k, 0), hs.normal.x),
                        (layout.state(i, k, 1), hs.normal.y),
                        (layout.state(i, k, 2), hs.normal.dot(lin.heading_jacobian)),
                        (sigma, -1.0),
                    ];
                    qp.add_inequality(row, f64::NEG_INFINITY, hs.offset - hs.normal.dot(lin.base));
                }
            }

            // Dynamics linearized about the reference step.
            if k + 1 < n_i {
                let step = linearize_step(r, &seg.controls[k], dt);
                for c in 0..STATE_DIM {
                    let mut row = Vec::with_capacity(STATE_DIM + CONTROL_DIM + 1);
                    for j in 0..STATE_DIM {
                        if step.a[c][j] != 0.0 {
                            row.push((layout.state(i, k, j), step.a[c][j]));
                        }
                    }
                    for j in 0..CONTROL_DIM {
                        if step.b[c][j] != 0.0 {
                            row.push((layout.control(i, k, j), step.b[c][j]));
                        }
                    }
                    row.push((layout.state(i, k + 1, c), -1.0));
                    qp.add_equality(row, -step.c[c]);
                }
            }
        }
    }

    // Gear shifts: spatially continuous, both sides at rest. In baseline
    // mode curvature continuity is already structural (the two standstill
    // points share one variable), so no extra row is needed.
    for i in 0..m - 1 {
        let end_k = reference.segments[i].states.len() - 1;
        for c in 0..3 {
            qp.add_equality(
                vec![(layout.state(i, end_k, c), 1.0), (layout.state(i + 1, 0, c), -1.0)],
                0.0,
            );
        }
        qp.add_equality(vec![(layout.state(i, end_k, 3), 1.0)], 0.0);
        qp.add_equality(vec![(layout.state(i + 1, 0, 3), 1.0)], 0.0);
    }

    qp
}
