//! Kinematic bicycle model: footprint corners, discrete dynamics, and the
//! linearizations consumed by the trajectory subproblem.
//!
//! The state is taken at the rear-axle center: position, heading, signed
//! speed, and path curvature. Controls are acceleration and curvature rate.
//! Continuous dynamics:
//!
//! ```text
//! x' = v cos(theta)   y' = v sin(theta)   theta' = v * kappa
//! v' = a              kappa' = psi
//! ```

use serde::{Deserialize, Serialize};

use crate::geom2d::{Mat2, Vec2};

/// Planar pose of the rear-axle center. Serialized as `[x, y, heading]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Pose {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::new(self.heading.cos(), self.heading.sin())
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.x, self.y, self.heading).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (x, y, heading) = <(f64, f64, f64)>::deserialize(deserializer)?;
        Ok(Pose { x, y, heading })
    }
}

/// Rear-axle state: pose plus signed speed and curvature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub curvature: f64,
}

impl State {
    pub fn new(x: f64, y: f64, heading: f64, v: f64, curvature: f64) -> State {
        State { x, y, heading, v, curvature }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.heading, self.v, self.curvature]
    }

    pub fn from_array(a: [f64; 5]) -> State {
        State { x: a[0], y: a[1], heading: a[2], v: a[3], curvature: a[4] }
    }
}

/// Acceleration and curvature-rate input, held constant over one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    pub accel: f64,
    pub curvature_rate: f64,
}

impl Control {
    pub fn new(accel: f64, curvature_rate: f64) -> Control {
        Control { accel, curvature_rate }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.accel, self.curvature_rate]
    }
}

/// Rigid footprint described by front/rear overhangs from the rear axle and
/// the body width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleGeometry {
    /// Rear axle to front bumper.
    pub l_f: f64,
    /// Rear axle to rear bumper.
    pub l_r: f64,
    pub width: f64,
}

impl VehicleGeometry {
    pub fn new(l_f: f64, l_r: f64, width: f64) -> VehicleGeometry {
        VehicleGeometry { l_f, l_r, width }
    }

    pub fn length(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Geometric center of the footprint, `(l_f - l_r) / 2` ahead of the
    /// rear axle.
    pub fn center(&self, pose: &Pose) -> Vec2 {
        pose.position() + pose.direction() * (0.5 * (self.l_f - self.l_r))
    }

    pub fn is_valid(&self) -> bool {
        self.l_f.is_finite()
            && self.l_r.is_finite()
            && self.width.is_finite()
            && self.l_f > 0.0
            && self.l_r > 0.0
            && self.width > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    FrontLeft,
    FrontRight,
    RearLeft,
    RearRight,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::FrontLeft, Corner::FrontRight, Corner::RearLeft, Corner::RearRight];
}

/// Body-frame offset of a corner from the rear axle.
pub fn corner_offset(geometry: &VehicleGeometry, corner: Corner) -> Vec2 {
    let half_w = 0.5 * geometry.width;
    match corner {
        Corner::FrontLeft => Vec2::new(geometry.l_f, half_w),
        Corner::FrontRight => Vec2::new(geometry.l_f, -half_w),
        Corner::RearLeft => Vec2::new(-geometry.l_r, half_w),
        Corner::RearRight => Vec2::new(-geometry.l_r, -half_w),
    }
}

/// World positions of the four footprint corners, ordered FL, FR, RL, RR.
pub fn corners_at(pose: &Pose, geometry: &VehicleGeometry) -> [Vec2; 4] {
    let rot = Mat2::rotation(pose.heading);
    let p = pose.position();
    Corner::ALL.map(|c| p + rot.mul_vec(corner_offset(geometry, c)))
}

/// World positions of the corners for a full state.
pub fn corners(state: &State, geometry: &VehicleGeometry) -> [Vec2; 4] {
    corners_at(&state.pose(), geometry)
}

/// Counter-clockwise footprint polygon FL, RL, RR, FR.
pub fn footprint(pose: &Pose, geometry: &VehicleGeometry) -> [Vec2; 4] {
    let [fl, fr, rl, rr] = corners_at(pose, geometry);
    [fl, rl, rr, fr]
}

fn derivative(s: &State, u: &Control) -> [f64; 5] {
    [
        s.v * s.heading.cos(),
        s.v * s.heading.sin(),
        s.v * s.curvature,
        u.accel,
        u.curvature_rate,
    ]
}

/// One forward-Euler step of length `dt`.
pub fn euler_step(state: &State, control: &Control, dt: f64) -> State {
    let d = derivative(state, control);
    let s = state.to_array();
    State::from_array([
        s[0] + dt * d[0],
        s[1] + dt * d[1],
        s[2] + dt * d[2],
        s[3] + dt * d[3],
        s[4] + dt * d[4],
    ])
}

/// One classical Runge-Kutta step with the control held constant.
pub fn rk4_step(state: &State, control: &Control, dt: f64) -> State {
    let add = |s: &State, d: &[f64; 5], h: f64| {
        let a = s.to_array();
        State::from_array([
            a[0] + h * d[0],
            a[1] + h * d[1],
            a[2] + h * d[2],
            a[3] + h * d[3],
            a[4] + h * d[4],
        ])
    };
    let k1 = derivative(state, control);
    let k2 = derivative(&add(state, &k1, 0.5 * dt), control);
    let k3 = derivative(&add(state, &k2, 0.5 * dt), control);
    let k4 = derivative(&add(state, &k3, dt), control);
    let a = state.to_array();
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = a[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    State::from_array(out)
}

/// First-order expansion of the Euler step about a reference state/control:
/// `next ~= A s + B u + c`, exact at the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedStep {
    pub a: [[f64; 5]; 5],
    pub b: [[f64; 2]; 5],
    pub c: [f64; 5],
}

impl LinearizedStep {
    pub fn apply(&self, s: [f64; 5], u: [f64; 2]) -> [f64; 5] {
        let mut out = self.c;
        for i in 0..5 {
            for j in 0..5 {
                out[i] += self.a[i][j] * s[j];
            }
            for j in 0..2 {
                out[i] += self.b[i][j] * u[j];
            }
        }
        out
    }
}

/// Jacobians of the Euler step at `(ref_state, ref_control)`.
pub fn linearize_step(ref_state: &State, ref_control: &Control, dt: f64) -> LinearizedStep {
    let (sin_t, cos_t) = ref_state.heading.sin_cos();
    let v = ref_state.v;
    let kappa = ref_state.curvature;
    let mut a = [[0.0; 5]; 5];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a[0][2] = -dt * v * sin_t;
    a[0][3] = dt * cos_t;
    a[1][2] = dt * v * cos_t;
    a[1][3] = dt * sin_t;
    a[2][3] = dt * kappa;
    a[2][4] = dt * v;
    let mut b = [[0.0; 2]; 5];
    b[3][0] = dt;
    b[4][1] = dt;
    let f = euler_step(ref_state, ref_control, dt).to_array();
    let s = ref_state.to_array();
    let u = ref_control.to_array();
    let mut c = [0.0; 5];
    for i in 0..5 {
        c[i] = f[i];
        for j in 0..5 {
            c[i] -= a[i][j] * s[j];
        }
        for j in 0..2 {
            c[i] -= b[i][j] * u[j];
        }
    }
    LinearizedStep { a, b, c }
}

/// Affine approximation of one corner position in `(x, y, heading)`:
/// `corner ~= (x, y) + base + heading_jacobian * heading`, exact at the
/// reference heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerLinearization {
    pub base: Vec2,
    pub heading_jacobian: Vec2,
}

impl CornerLinearization {
    pub fn eval(&self, x: f64, y: f64, heading: f64) -> Vec2 {
        Vec2::new(x, y) + self.base + self.heading_jacobian * heading
    }
}

/// Linearizes `corner = p + R(heading) * offset` about the reference
/// heading.
pub fn linearize_corner(
    ref_state: &State,
    geometry: &VehicleGeometry,
    corner: Corner,
) -> CornerLinearization {
    let offset = corner_offset(geometry, corner);
    let theta = ref_state.heading;
    let rotated = Mat2::rotation(theta).mul_vec(offset);
    // d/dtheta of R(theta) * offset.
    let jac = Vec2::new(
        -theta.sin() * offset.x - theta.cos() * offset.y,
        theta.cos() * offset.x - theta.sin() * offset.y,
    );
    CornerLinearization { base: rotated - jac * theta, heading_jacobian: jac }
}

/// Componentwise max over all transitions of
/// `|rk4(state_k, control_k) - state_{k+1}|`.
///
/// Headings are compared as plain differences; callers keep them unwrapped.
pub fn segment_rk4_error(states: &[State], controls: &[Control], dt: f64) -> [f64; 5] {
    assert_eq!(states.len(), controls.len() + 1, "one control per transition");
    let mut err = [0.0_f64; 5];
    for (k, u) in controls.iter().enumerate() {
        let predicted = rk4_step(&states[k], u, dt).to_array();
        let actual = states[k + 1].to_array();
        for i in 0..5 {
            err[i] = err[i].max((predicted[i] - actual[i]).abs());
        }
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_vehicle() -> VehicleGeometry {
        VehicleGeometry::new(3.89, 1.043, 1.87)
    }

    #[test]
    fn corners_at_origin_heading_zero() {
        let s = State::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let [fl, fr, rl, rr] = corners(&s, &table_vehicle());
        assert!((fl - Vec2::new(3.89, 0.935)).norm() < 1e-12);
        assert!((fr - Vec2::new(3.89, -0.935)).norm() < 1e-12);
        assert!((rl - Vec2::new(-1.043, 0.935)).norm() < 1e-12);
        assert!((rr - Vec2::new(-1.043, -0.935)).norm() < 1e-12);
    }

    #[test]
    fn corners_rotate_with_heading() {
        let s = State::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let [fl, ..] = corners(&s, &table_vehicle());
        assert!((fl - Vec2::new(-0.935, 3.89)).norm() < 1e-12);
    }

    #[test]
    fn corner_distances_are_rigid() {
        let g = table_vehicle();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let reference = corners(&State::default(), &g);
        for _ in 0..50 {
            let s = State::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-7.0..7.0),
                0.0,
                0.0,
            );
            let c = corners(&s, &g);
            for i in 0..4 {
                for j in i + 1..4 {
                    let d0 = (reference[i] - reference[j]).norm();
                    let d1 = (c[i] - c[j]).norm();
                    assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn euler_step_example() {
        let s = State::new(0.0, 0.0, 0.0, 1.0, 0.1);
        let u = Control::new(0.5, 0.0);
        let next = euler_step(&s, &u, 0.2);
        assert!((next.x - 0.2).abs() < 1e-15);
        assert!(next.y.abs() < 1e-15);
        assert!((next.heading - 0.02).abs() < 1e-15);
        assert!((next.v - 1.1).abs() < 1e-15);
        assert!((next.curvature - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rk4_exact_on_straight_line() {
        let s = State::new(1.0, 2.0, 0.0, 1.5, 0.0);
        let u = Control::new(0.0, 0.0);
        let next = rk4_step(&s, &u, 0.3);
        assert!((next.x - 1.45).abs() < 1e-15);
        assert!((next.y - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rk4_matches_constant_turn_closed_form() {
        // Constant speed and curvature trace a circular arc:
        //   theta(t) = theta0 + v k t
        //   x(t) = x0 + (sin(theta(t)) - sin(theta0)) / k
        //   y(t) = y0 - (cos(theta(t)) - cos(theta0)) / k
        let (v, k, dt) = (1.0, 0.16, 0.1);
        let s = State::new(0.3, -0.2, 0.4, v, k);
        let u = Control::new(0.0, 0.0);
        let theta1 = s.heading + v * k * dt;
        let expect = State::new(
            s.x + (theta1.sin() - s.heading.sin()) / k,
            s.y - (theta1.cos() - s.heading.cos()) / k,
            theta1,
            v,
            k,
        );
        let got = rk4_step(&s, &u, dt);
        for (a, b) in got.to_array().iter().zip(expect.to_array()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn rk4_richardson_order() {
        // Full model with nonzero accel and curvature rate: halving the step
        // should shrink the one-interval error by about 2^4.
        let s = State::new(0.0, 0.0, 0.3, 2.0, 0.1);
        let u = Control::new(0.8, 0.03);
        let dt = 0.5;
        let reference = {
            let mut r = s;
            let n = 4096;
            for _ in 0..n {
                r = rk4_step(&r, &u, dt / n as f64);
            }
            r
        };
        let err = |state: &State| -> f64 {
            state
                .to_array()
                .iter()
                .zip(reference.to_array())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let coarse = err(&rk4_step(&s, &u, dt));
        let halved = {
            let mid = rk4_step(&s, &u, 0.5 * dt);
            err(&rk4_step(&mid, &u, 0.5 * dt))
        };
        let order = (coarse / halved).log2();
        assert!(order >= 3.9, "observed order {order}");
        assert!(order <= 5.5, "observed order {order}");
    }

    #[test]
    fn linearization_exact_at_reference() {
        let s = State::new(0.5, -1.0, 0.7, 1.2, 0.05);
        let u = Control::new(0.4, 0.01);
        let lin = linearize_step(&s, &u, 0.2);
        let exact = euler_step(&s, &u, 0.2).to_array();
        let approx = lin.apply(s.to_array(), u.to_array());
        for i in 0..5 {
            assert!((exact[i] - approx[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn linearization_entries() {
        let s = State::new(0.0, 0.0, 0.0, 2.0, 0.1);
        let u = Control::new(0.0, 0.0);
        let dt = 0.2;
        let lin = linearize_step(&s, &u, dt);
        assert_eq!(lin.a[0][2], 0.0); // -v T sin(0)
        assert!((lin.a[0][3] - dt).abs() < 1e-15); // T cos(0)
        assert!((lin.a[1][2] - dt * 2.0).abs() < 1e-15); // v T cos(0)
        assert!((lin.a[2][3] - dt * 0.1).abs() < 1e-15); // T kappa
        assert!((lin.a[2][4] - dt * 2.0).abs() < 1e-15); // T v
        assert!((lin.b[3][0] - dt).abs() < 1e-15);
        assert!((lin.b[4][1] - dt).abs() < 1e-15);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let dt = 0.2;
        for _ in 0..20 {
            let s = State::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-0.16..0.16),
            );
            let u = Control::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.03..0.03));
            let lin = linearize_step(&s, &u, dt);
            let h = 1e-6;
            for j in 0..5 {
                let mut sp = s.to_array();
                let mut sm = s.to_array();
                sp[j] += h;
                sm[j] -= h;
                let fp = euler_step(&State::from_array(sp), &u, dt).to_array();
                let fm = euler_step(&State::from_array(sm), &u, dt).to_array();
                for i in 0..5 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!((fd - lin.a[i][j]).abs() < 1e-6, "A[{i}][{j}]");
                }
            }
        }
    }

    #[test]
    fn corner_linearization_at_zero_heading() {
        let g = table_vehicle();
        let s = State::new(0.0, 0.0, 0.0, 0.0, 0.0);
        let lin = linearize_corner(&s, &g, Corner::FrontLeft);
        // d(corner)/d(heading) at heading 0 is (-W/2, L_f).
        assert!((lin.heading_jacobian - Vec2::new(-0.935, 3.89)).norm() < 1e-12);
        let c = lin.eval(s.x, s.y, s.heading);
        assert!((c - Vec2::new(3.89, 0.935)).norm() < 1e-12);
    }

    #[test]
    fn corner_linearization_remainder_is_second_order() {
        let g = table_vehicle();
        let s = State::new(1.0, -2.0, 0.8, 0.0, 0.0);
        for corner in Corner::ALL {
            let lin = linearize_corner(&s, &g, corner);
            let exact_at = |heading: f64| {
                corners_at(&Pose::new(s.x, s.y, heading), &g)
                    [Corner::ALL.iter().position(|c| *c == corner).unwrap()]
            };
            assert!((lin.eval(s.x, s.y, s.heading) - exact_at(s.heading)).norm() < 1e-12);
            let offset_norm = corner_offset(&g, corner).norm();
            for delta in [0.05, 0.1, 0.175] {
                let err = (lin.eval(s.x, s.y, s.heading + delta) - exact_at(s.heading + delta)).norm();
                assert!(err <= 0.51 * offset_norm * delta * delta + 1e-12);
            }
        }
    }

    #[test]
    fn rk4_rollout_has_zero_feasibility_error() {
        let mut states = vec![State::new(0.0, 0.0, 0.2, 0.5, 0.1)];
        let controls: Vec<Control> = (0..20)
            .map(|k| Control::new(0.1 * ((k % 3) as f64 - 1.0), 0.01))
            .collect();
        for u in &controls {
            let next = rk4_step(states.last().unwrap(), u, 0.1);
            states.push(next);
        }
        let err = segment_rk4_error(&states, &controls, 0.1);
        assert!(err.iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn euler_arc_error_shrinks_quadratically() {
        // Euler-integrated turning trajectories disagree with the RK4 check
        // at O(dt^2) per step.
        let build = |dt: f64| {
            let n = (2.0 / dt).round() as usize;
            let mut states = vec![State::new(0.0, 0.0, 0.0, 1.5, 0.15)];
            let controls = vec![Control::new(0.0, 0.0); n];
            for u in &controls {
                states.push(euler_step(states.last().unwrap(), u, dt));
            }
            segment_rk4_error(&states, &controls, dt)
        };
        let coarse = build(0.2);
        let fine = build(0.1);
        assert!(coarse[0] > 0.0);
        let ratio = coarse[0] / fine[0];
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }
}
