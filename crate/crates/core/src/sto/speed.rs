//! Reference generation: ramp speed profiles over a geometric path, resampled
//! at the optimizer timestep.

use crate::sto::{Direction, SeedPath, Segment, SegmentedTrajectory, StoParams};
use crate::vehicle::{Control, State};

/// Symmetric accelerate/cruise/decelerate speed magnitude profile. Short
/// segments degenerate to a triangular profile that never reaches `v_peak`.
#[derive(Debug, Clone, Copy)]
struct RampProfile {
    length: f64,
    accel: f64,
    v_peak: f64,
    t_ramp: f64,
    t_cruise: f64,
    total: f64,
}

impl RampProfile {
    fn new(length: f64, a_max: f64, v_max: f64) -> RampProfile {
        debug_assert!(length > 0.0 && a_max > 0.0 && v_max > 0.0);
        let ramp_distance = v_max * v_max / a_max;
        if length >= ramp_distance {
            RampProfile {
                length,
                accel: a_max,
                v_peak: v_max,
                t_ramp: v_max / a_max,
                t_cruise: (length - ramp_distance) / v_max,
                total: 2.0 * v_max / a_max + (length - ramp_distance) / v_max,
            }
        } else {
            let v_peak = (length * a_max).sqrt();
            RampProfile {
                length,
                accel: a_max,
                v_peak,
                t_ramp: v_peak / a_max,
                t_cruise: 0.0,
                total: 2.0 * v_peak / a_max,
            }
        }
    }

    /// Distance, speed, and acceleration magnitudes at time `t` (clamped to
    /// the profile duration; beyond it the vehicle rests at the far end).
    fn sample(&self, t: f64) -> (f64, f64, f64) {
        if t < self.t_ramp {
            (0.5 * self.accel * t * t, self.accel * t, self.accel)
        } else if t < self.t_ramp + self.t_cruise {
            let d_ramp = 0.5 * self.accel * self.t_ramp * self.t_ramp;
            (d_ramp + self.v_peak * (t - self.t_ramp), self.v_peak, 0.0)
        } else if t < self.total {
            let tau = self.total - t;
            (self.length - 0.5 * self.accel * tau * tau, self.accel * tau, -self.accel)
        } else {
            (self.length, 0.0, 0.0)
        }
    }
}

/// Polyline with headings, deduplicated and with cumulative arc lengths,
/// supporting interpolation at a target arc length.
struct ArcSampler {
    points: Vec<[f64; 2]>,
    headings: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ArcSampler {
    fn new(poses: &[crate::vehicle::Pose]) -> ArcSampler {
        let mut points: Vec<[f64; 2]> = Vec::with_capacity(poses.len());
        let mut headings = Vec::with_capacity(poses.len());
        for p in poses {
            if let Some(last) = points.last() {
                if (p.x - last[0]).hypot(p.y - last[1]) < 1e-12 {
                    continue;
                }
            }
            points.push([p.x, p.y]);
            // Keep headings continuous along the polyline so interpolation
            // never crosses a 2π seam.
            let h = match headings.last() {
                Some(&prev) => unwrap_near(p.heading, prev),
                None => p.heading,
            };
            headings.push(h);
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            s += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cumulative.push(s);
        }
        ArcSampler { points, headings, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    fn at(&self, s: f64) -> ([f64; 2], f64) {
        let s = s.clamp(0.0, self.length());
        let hi = self.cumulative.partition_point(|&c| c < s).min(self.points.len() - 1);
        if hi == 0 {
            return (self.points[0], self.headings[0]);
        }
        let lo = hi - 1;
        let span = self.cumulative[hi] - self.cumulative[lo];
        let u = if span > 0.0 { (s - self.cumulative[lo]) / span } else { 0.0 };
        let p = [
            self.points[lo][0] + u * (self.points[hi][0] - self.points[lo][0]),
            self.points[lo][1] + u * (self.points[hi][1] - self.points[lo][1]),
        ];
        let h = self.headings[lo] + u * (self.headings[hi] - self.headings[lo]);
        (p, h)
    }
}

/// Shifts `angle` by whole turns until it is within π of `anchor`.
pub(crate) fn unwrap_near(angle: f64, anchor: f64) -> f64 {
    angle - std::f64::consts::TAU * ((angle - anchor) / std::f64::consts::TAU).round()
}

/// Converts a geometric path into a time-parameterized reference: each
/// segment gets a ramp speed profile honoring `accel_max` and the velocity
/// bounds, positions are resampled at the timestep, curvature is estimated
/// from the heading slope over traveled arc length, and controls follow by
/// finite differences. Headings come out continuous across the whole
/// maneuver (unwrapped), so downstream consumers never see 2π seams.
pub fn plan_simple_speed(path: &SeedPath, params: &StoParams) -> SegmentedTrajectory {
    assert!(!path.segments.is_empty(), "path must have at least one segment");
    let dt = params.timestep;
    let mut segments = Vec::with_capacity(path.segments.len());
    for seed in &path.segments {
        assert!(!seed.poses.is_empty(), "path segment must have at least one pose");
        let sampler = ArcSampler::new(&seed.poses);
        let length = sampler.length();
        let dir = seed.direction.sign();
        let v_cap = match seed.direction {
            Direction::Forward => params.v_max,
            Direction::Backward => -params.v_min,
        };

        if length <= 1e-9 {
            let pose = seed.poses[0];
            let state = State { x: pose.x, y: pose.y, heading: pose.heading, v: 0.0, curvature: 0.0 };
            segments.push(Segment {
                states: vec![state, state],
                controls: vec![Control { accel: 0.0, curvature_rate: 0.0 }],
                direction: seed.direction,
            });
            continue;
        }

        let profile = RampProfile::new(length, params.accel_max, v_cap);
        let steps = ((profile.total / dt - 1e-9).ceil() as usize).max(2);
        let n = steps + 1;

        let mut positions = Vec::with_capacity(n);
        let mut headings = Vec::with_capacity(n);
        let mut arcs = Vec::with_capacity(n);
        let mut speeds = Vec::with_capacity(n);
        let mut accels = Vec::with_capacity(n);
        for k in 0..n {
            let (s, v, a) = profile.sample(k as f64 * dt);
            let (p, h) = sampler.at(s);
            positions.push(p);
            headings.push(h);
            arcs.push(s);
            speeds.push(dir * v);
            accels.push(dir * a);
        }

        // Curvature as the heading slope over traveled arc length; reversing
        // flips the sign because heading opposes travel direction (θ' = vκ
        // with v < 0).
        let mut curvatures: Vec<Option<f64>> = vec![None; n];
        for k in 1..n - 1 {
            let ds = arcs[k + 1] - arcs[k - 1];
            if ds > 1e-9 {
                curvatures[k] = Some(dir * (headings[k + 1] - headings[k - 1]) / ds);
            }
        }
        let first = curvatures.iter().flatten().next().copied().unwrap_or(0.0);
        let mut filled = Vec::with_capacity(n);
        let mut last = first;
        for c in &curvatures {
            last = c.unwrap_or(last);
            filled.push(last.clamp(-params.curvature_max, params.curvature_max));
        }

        let states: Vec<State> = (0..n)
            .map(|k| State {
                x: positions[k][0],
                y: positions[k][1],
                heading: headings[k],
                v: speeds[k],
                curvature: filled[k],
            })
            .collect();
        let controls: Vec<Control> = (0..n - 1)
            .map(|k| Control {
                accel: accels[k],
                curvature_rate: (filled[k + 1] - filled[k]) / dt,
            })
            .collect();
        segments.push(Segment { states, controls, direction: seed.direction });
    }

    // Chain the per-segment unwrapped headings so the boundary equalities are
    // plain differences even when the raw poses straddle ±π.
    for i in 1..segments.len() {
        let anchor = segments[i - 1].states.last().unwrap().heading;
        let shift = unwrap_near(segments[i].states[0].heading, anchor) - segments[i].states[0].heading;
        if shift != 0.0 {
            for s in &mut segments[i].states {
                s.heading += shift;
            }
        }
    }

    SegmentedTrajectory { segments, timestep: dt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::Pose;

    fn straight_path(len: f64, direction: Direction) -> SeedPath {
        let n = 101;
        let poses = (0..n)
            .map(|i| {
                let s = len * i as f64 / (n - 1) as f64;
                let x = if direction == Direction::Forward { s } else { -s };
                Pose { x, y: 0.0, heading: 0.0 }
            })
            .collect();
        SeedPath { segments: vec![SeedSegment { poses, direction }] }
    }

    use crate::sto::SeedSegment;

    #[test]
    fn long_segment_reaches_cruise() {
        // 10 m at a=1, v<=3: ramp 3 s / 4.5 m each way, cruise 1 m in 1/3 s.
        let profile = RampProfile::new(10.0, 1.0, 3.0);
        assert!((profile.total - (3.0 + 1.0 / 3.0 + 3.0)).abs() < 1e-12);
        assert!((profile.t_ramp - 3.0).abs() < 1e-12);
        let (s, v, a) = profile.sample(3.1);
        assert!((v - 3.0).abs() < 1e-12 && a == 0.0);
        assert!((s - (4.5 + 3.0 * 0.1)).abs() < 1e-12);
        let (s_end, v_end, _) = profile.sample(100.0);
        assert_eq!((s_end, v_end), (10.0, 0.0));
    }

    #[test]
    fn short_segment_is_triangular() {
        // 4 m < v²/a = 9 m: peak √(L·a) = 2 m/s, duration 4 s.
        let profile = RampProfile::new(4.0, 1.0, 3.0);
        assert!((profile.v_peak - 2.0).abs() < 1e-12);
        assert!((profile.total - 4.0).abs() < 1e-12);
        assert_eq!(profile.t_cruise, 0.0);
        let (s, v, a) = profile.sample(2.0);
        assert!((s - 2.0).abs() < 1e-12 && (v - 2.0).abs() < 1e-12);
        assert!(a.abs() <= 1.0);
    }

    #[test]
    fn resampling_covers_the_path_at_rest_endpoints() {
        let params = StoParams::default();
        let traj = plan_simple_speed(&straight_path(10.0, Direction::Forward), &params);
        let seg = &traj.segments[0];
        let expected_n = ((3.0 + 1.0 / 3.0 + 3.0) / params.timestep).ceil() as usize + 1;
        assert_eq!(seg.states.len(), expected_n);
        assert_eq!(seg.controls.len(), expected_n - 1);
        assert_eq!(seg.states[0].v, 0.0);
        assert_eq!(seg.states.last().unwrap().v, 0.0);
        assert!((seg.states.last().unwrap().x - 10.0).abs() < 1e-9);
        let vmax = seg.states.iter().map(|s| s.v).fold(0.0, f64::max);
        assert!(vmax <= 3.0 + 1e-12);
    }

    #[test]
    fn backward_segment_gets_negative_speeds() {
        let traj = plan_simple_speed(&straight_path(4.0, Direction::Backward), &StoParams::default());
        let seg = &traj.segments[0];
        assert!(seg.states.iter().all(|s| s.v <= 0.0));
        let vmin = seg.states.iter().map(|s| s.v).fold(0.0, f64::min);
        assert!((vmin + 2.0).abs() < 1e-9, "triangular peak -2, got {vmin}");
        assert!(seg.controls[0].accel < 0.0);
    }

    #[test]
    fn degenerate_segment_yields_two_resting_points() {
        let path = SeedPath {
            segments: vec![SeedSegment {
                poses: vec![Pose { x: 1.0, y: 2.0, heading: 0.5 }],
                direction: Direction::Forward,
            }],
        };
        let traj = plan_simple_speed(&path, &StoParams::default());
        let seg = &traj.segments[0];
        assert_eq!(seg.states.len(), 2);
        assert!(seg.states.iter().all(|s| s.v == 0.0));
        assert_eq!(seg.states[0].x, 1.0);
    }

    #[test]
    fn arc_path_recovers_its_curvature() {
        // Quarter circle, counterclockwise, driven forward; radius chosen
        // well inside the curvature bound so no clamping obscures the value.
        let r = 10.0;
        let poses: Vec<Pose> = (0..=200)
            .map(|i| {
                let phi = 0.5 * std::f64::consts::PI * i as f64 / 200.0;
                Pose {
                    x: r * phi.sin(),
                    y: r * (1.0 - phi.cos()),
                    heading: phi,
                }
            })
            .collect();
        let path = SeedPath {
            segments: vec![SeedSegment { poses: poses.clone(), direction: Direction::Forward }],
        };
        let traj = plan_simple_speed(&path, &StoParams::default());
        for s in &traj.segments[0].states {
            assert!((s.curvature - 1.0 / r).abs() < 1e-3, "kappa {}", s.curvature);
        }
        // The same geometry driven in reverse flips the curvature sign.
        let back = SeedPath {
            segments: vec![SeedSegment {
                poses: poses.into_iter().rev().collect(),
                direction: Direction::Backward,
            }],
        };
        let traj = plan_simple_speed(&back, &StoParams::default());
        for s in &traj.segments[0].states {
            assert!((s.curvature - 1.0 / r).abs() < 1e-3, "kappa {}", s.curvature);
        }
    }

    #[test]
    fn heading_chain_has_no_seams() {
        // Two segments whose raw headings straddle the ±π seam.
        let fwd: Vec<Pose> = (0..=20)
            .map(|i| Pose { x: -0.1 * i as f64, y: 0.0, heading: std::f64::consts::PI })
            .collect();
        let back: Vec<Pose> = (0..=20)
            .map(|i| Pose { x: -2.0 + 0.1 * i as f64, y: 0.0, heading: -std::f64::consts::PI })
            .collect();
        let path = SeedPath {
            segments: vec![
                SeedSegment { poses: fwd, direction: Direction::Forward },
                SeedSegment { poses: back, direction: Direction::Backward },
            ],
        };
        let traj = plan_simple_speed(&path, &StoParams::default());
        let end = traj.segments[0].states.last().unwrap().heading;
        let begin = traj.segments[1].states[0].heading;
        assert!((end - begin).abs() < 1e-9);
    }
}
