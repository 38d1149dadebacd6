//! Scenario files, built-in fixtures, and result serialization.
//!
//! A scenario is a single human-readable JSON document: vehicle geometry,
//! start and goal poses (radians, meters), buffered obstacles, solver
//! parameters, and an optional externally supplied seed path. Parsing is
//! strict: unknown fields are rejected with line/column positions, and
//! semantic checks run before a scenario reaches the planner. Writing then
//! reading a scenario reproduces it exactly; results serialize to a CSV
//! trajectory and a JSON run report that are byte-stable for identical
//! inputs (timings excluded).

use crate::geom2d::{AffineMap2, BufferedObstacle, ConvexShape, GeomError, Mat2, Vec2};
use crate::sto::{
    path_length, Direction, Mode, SeedPath, SegmentedTrajectory, StoParams, StoResult, StoStatus,
};
use crate::vehicle::{Pose, VehicleGeometry};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Obstacle outline as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    /// Counter-clockwise, strictly convex vertex list.
    Polygon(Vec<[f64; 2]>),
    Disk { center: [f64; 2], radius: f64 },
    /// Axis lengths before rotation; `rotation` is radians
    /// counter-clockwise.
    Ellipse { center: [f64; 2], semi_axes: [f64; 2], rotation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub shape: ShapeSpec,
    /// Safety margin added around the shape, meters.
    pub buffer: f64,
}

impl ObstacleSpec {
    pub fn to_buffered(&self) -> Result<BufferedObstacle, GeomError> {
        let shape = match &self.shape {
            ShapeSpec::Polygon(points) => {
                ConvexShape::polygon(points.iter().map(|p| Vec2::new(p[0], p[1])).collect())?
            }
            ShapeSpec::Disk { center, radius } => {
                ConvexShape::disk(Vec2::new(center[0], center[1]), *radius)?
            }
            ShapeSpec::Ellipse { center, semi_axes, rotation } => {
                let linear = Mat2::rotation(*rotation).mul_mat(Mat2::diag(semi_axes[0], semi_axes[1]));
                ConvexShape::ellipse(AffineMap2::new(linear, Vec2::new(center[0], center[1])))?
            }
        };
        BufferedObstacle::new(shape, self.buffer)
    }
}

/// One parking problem, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub vehicle: VehicleGeometry,
    /// Rear-axle start pose `[x, y, heading]`.
    pub start: Pose,
    pub goal: Pose,
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub params: StoParams,
    /// Hand-authored seed path; when absent the caller runs the seed
    /// planner.
    #[serde(default)]
    pub seed_path: Option<SeedPath>,
}

impl Scenario {
    /// Converts every obstacle spec, reporting the first offender.
    pub fn buffered_obstacles(&self) -> Result<Vec<BufferedObstacle>, ScenarioError> {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(i, ob)| {
                ob.to_buffered().map_err(|e| ScenarioError::Semantic {
                    context: format!("obstacle {i}"),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    /// Syntax or schema violation; the message already names the position.
    #[error("{message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{context}: {message}")]
    Semantic { context: String, message: String },
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> ScenarioError {
        ScenarioError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

fn check_pose(name: &str, pose: &Pose) -> Result<(), ScenarioError> {
    if [pose.x, pose.y, pose.heading].iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ScenarioError::Semantic {
            context: name.to_string(),
            message: "pose components must be finite".into(),
        })
    }
}

/// Parses and fully validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text)?;
    if !scenario.vehicle.is_valid() {
        return Err(ScenarioError::Semantic {
            context: "vehicle".into(),
            message: "dimensions must be finite and positive".into(),
        });
    }
    check_pose("start", &scenario.start)?;
    check_pose("goal", &scenario.goal)?;
    scenario.buffered_obstacles()?;
    scenario.params.validate().map_err(|message| ScenarioError::Semantic {
        context: "params".into(),
        message,
    })?;
    if let Some(path) = &scenario.seed_path {
        if path.segments.is_empty() {
            return Err(ScenarioError::Semantic {
                context: "seed_path".into(),
                message: "needs at least one segment".into(),
            });
        }
        for (i, seg) in path.segments.iter().enumerate() {
            if seg.poses.len() < 2 {
                return Err(ScenarioError::Semantic {
                    context: format!("seed_path segment {i}"),
                    message: "needs at least two poses".into(),
                });
            }
            for pose in &seg.poses {
                check_pose(&format!("seed_path segment {i}"), pose)?;
            }
        }
    }
    Ok(scenario)
}

pub fn save_scenario(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serializes")
}

pub const BUILTIN_NAMES: [&str; 2] = ["perpendicular", "reverse_angled"];

/// Returns a bundled scenario by name, or `None` for unknown names.
pub fn builtin(name: &str) -> Option<Scenario> {
    let text = match name {
        "perpendicular" => include_str!("../fixtures/perpendicular.json"),
        "reverse_angled" => include_str!("../fixtures/reverse_angled.json"),
        _ => return None,
    };
    Some(load_scenario(text).expect("bundled fixture is valid"))
}

/// Machine-readable summary of one optimization run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub status: StoStatus,
    pub iterations: usize,
    pub qp_iterations: Vec<usize>,
    /// Componentwise rollout error `[x, y, heading, v, curvature]` per
    /// round.
    pub feasibility_errors: Vec<[f64; 5]>,
    pub max_slack: Vec<f64>,
    pub path_length: f64,
    pub timestep: f64,
    pub segments: usize,
    pub directions: Vec<Direction>,
    /// `|curvature jump|` at each gear shift, in segment order.
    pub switch_curvature_jumps: Vec<f64>,
    pub corridor_seconds: f64,
    pub qp_seconds: f64,
    pub total_seconds: f64,
}

/// Curvature discontinuities at segment boundaries: last curvature of one
/// segment vs. first of the next.
pub fn switch_curvature_jumps(traj: &SegmentedTrajectory) -> Vec<f64> {
    traj.segments
        .windows(2)
        .map(|w| (w[1].states[0].curvature - w[0].states.last().unwrap().curvature).abs())
        .collect()
}

impl RunReport {
    pub fn new(scenario: &str, mode: Mode, result: &StoResult, total_seconds: f64) -> RunReport {
        let traj = &result.trajectory;
        RunReport {
            scenario: scenario.to_string(),
            mode,
            status: result.status,
            iterations: result.iterations,
            qp_iterations: result.qp_iterations.clone(),
            feasibility_errors: result.feasibility_errors.clone(),
            max_slack: result.max_slack.clone(),
            path_length: path_length(traj),
            timestep: traj.timestep,
            segments: traj.segments.len(),
            directions: traj.segments.iter().map(|s| s.direction).collect(),
            switch_curvature_jumps: switch_curvature_jumps(traj),
            corridor_seconds: result.corridor_seconds,
            qp_seconds: result.qp_seconds,
            total_seconds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Renders a trajectory as CSV with columns
/// `segment,k,t,x,y,theta,v,kappa,a,psi,sigma`.
///
/// `t` is cumulative across segments; gear shifts happen at a standstill, so
/// the first row of a segment repeats the timestamp of the previous
/// segment's last row. The last row of each segment has no control attached
/// and leaves `a`/`psi` empty. `sigma` is the per-point corner-containment
/// slack; pass `None` to write zeros. Floats print in shortest round-trip
/// form, so identical inputs give identical bytes.
pub fn trajectory_csv(traj: &SegmentedTrajectory, slacks: Option<&[Vec<f64>]>) -> String {
    if let Some(sl) = slacks {
        assert_eq!(sl.len(), traj.segments.len(), "slack layout mismatch");
        for (seg, s) in traj.segments.iter().zip(sl) {
            assert_eq!(s.len(), seg.states.len(), "slack layout mismatch");
        }
    }
    let mut out = String::from("segment,k,t,x,y,theta,v,kappa,a,psi,sigma\n");
    let mut steps_before = 0usize;
    for (s, seg) in traj.segments.iter().enumerate() {
        for (k, state) in seg.states.iter().enumerate() {
            let t = (steps_before + k) as f64 * traj.timestep;
            let sigma = slacks.map_or(0.0, |sl| sl[s][k]);
            let (a, psi) = match seg.controls.get(k) {
                Some(c) => (c.accel.to_string(), c.curvature_rate.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{s},{k},{t},{},{},{},{},{},{a},{psi},{sigma}",
                state.x, state.y, state.heading, state.v, state.curvature
            )
            .unwrap();
        }
        steps_before += seg.states.len() - 1;
    }
    out
}
