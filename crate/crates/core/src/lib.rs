//! Trajectory refinement for multi-segment parking maneuvers.
//!
//! The pipeline takes a coarse, kinematically rough path (from the built-in
//! seed planner or an external source), plans a speed profile over it, and
//! then iteratively solves convex subproblems until the trajectory is
//! dynamically feasible and collision-free:
//!
//! 1. [`seed_planner`] finds a multi-segment geometric path.
//! 2. [`sto::plan_simple_speed`] turns it into a timed reference trajectory.
//! 3. [`corridor`] builds one convex collision-free region per trajectory
//!    point by shrinking and expanding ellipses against the obstacles
//!    (distances come from the support-function [`gjk`] queries).
//! 4. [`sto::optimize`] linearizes the [`vehicle`] dynamics, assembles a
//!    sparse [`qp`] subproblem with the corridor constraints, solves it, and
//!    repeats from step 3 until a Runge-Kutta feasibility check passes.
//!
//! [`scenario_io`] handles scenario files, fixtures, and result artifacts.

pub mod corridor;
pub mod geom2d;
pub mod gjk;
pub mod qp;
pub mod scenario_io;
pub mod seed_planner;
pub mod sto;
pub mod vehicle;

pub use corridor::{Corridor, CorridorError};
pub use geom2d::{BufferedObstacle, ConvexShape, Vec2};
pub use sto::{
    optimize, path_length, plan_simple_speed, Direction, Mode, SeedPath, SeedSegment, Segment,
    SegmentedTrajectory, StoParams, StoResult, StoStatus,
};
pub use vehicle::{Pose, State, VehicleGeometry};
