use parkopt::scenario_io::{builtin, switch_curvature_jumps, trajectory_csv};
use parkopt::seed_planner::{plan_seed_path, GridParams};
use parkopt::sto::{optimize, path_length, Mode};
use std::time::Instant;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("STO_LOG", "info")).init();
    for name in ["perpendicular", "reverse_angled"] {
        let sc = builtin(name).unwrap();
        let obstacles = sc.buffered_obstacles().unwrap();
        let t0 = Instant::now();
        let path = match plan_seed_path(&sc.start, &sc.goal, &obstacles, &sc.vehicle, &GridParams::default()) {
            Ok(p) => p,
            Err(e) => { println!("{name}: SEED FAILED: {e}"); continue; }
        };
        println!(
            "{name}: seed {:.2}s, {} segs, dirs {:?}",
            t0.elapsed().as_secs_f64(),
            path.segments.len(),
            path.segments.iter().map(|s| format!("{:?}", s.direction).chars().next().unwrap()).collect::<String>()
        );
        for mode in [Mode::Sto, Mode::Baseline] {
            let t1 = Instant::now();
            let res = optimize(&path, &obstacles, &sc.vehicle, &sc.params, mode);
            let max_jump = switch_curvature_jumps(&res.trajectory).into_iter().fold(0.0f64, f64::max);
            println!(
                "{name} {mode:?}: {:?} iters={} qp={:?} pts={} len={:.3} max_jump={:.4} err={:?} {:.2}s (corr {:.2} qp {:.2})",
                res.status, res.iterations, res.qp_iterations,
                res.trajectory.n_points(),
                path_length(&res.trajectory),
                max_jump,
                res.feasibility_errors.last().map(|e| format!("[{:.1e} {:.1e} {:.1e} {:.1e} {:.1e}]", e[0], e[1], e[2], e[3], e[4])),
                t1.elapsed().as_secs_f64(), res.corridor_seconds, res.qp_seconds
            );
            let tag = match mode { Mode::Sto => "sto", Mode::Baseline => "baseline" };
            std::fs::write(format!("/root/crate/tmp_e2e/{name}_{tag}.csv"), trajectory_csv(&res.trajectory, Some(&res.point_slacks))).unwrap();
        }
    }
}
