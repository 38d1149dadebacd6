use parkopt::corridor::build_corridor;
use parkopt::qp::QpSettings;
use parkopt::scenario_io::builtin;
use parkopt::seed_planner::{plan_seed_path, GridParams};
use parkopt::sto::{assemble_subproblem, optimize, Mode};
use std::time::Instant;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("STO_LOG", "error")).init();
    let sc = builtin("reverse_angled").unwrap();
    let obstacles = sc.buffered_obstacles().unwrap();
    let path = plan_seed_path(&sc.start, &sc.goal, &obstacles, &sc.vehicle, &GridParams::default()).unwrap();

    // Drive the baseline SQP to its plateau, then pull out the stuck subproblem.
    let mut params = sc.params.clone();
    params.max_sqp_iterations = 5;
    let res = optimize(&path, &obstacles, &sc.vehicle, &params, Mode::Baseline);
    println!("plateau iterate after {} rounds, status {:?}", res.iterations, res.status);
    let corridor = build_corridor(&res.trajectory, &sc.vehicle, &obstacles).unwrap();
    let qp = assemble_subproblem(&res.trajectory, &corridor, &sc.vehicle, &sc.params, Mode::Baseline);
    println!("qp: {} vars, {} rows", qp.n_vars(), qp.n_constraints());

    let base = QpSettings::default();
    let variants: Vec<(&str, QpSettings)> = vec![
        ("default_polish", base.clone()),
        ("no_polish", QpSettings { polish: false, ..base.clone() }),
        ("polish_2500", QpSettings { max_iterations: 2_500, ..base.clone() }),
        ("polish_500", QpSettings { max_iterations: 500, ..base.clone() }),
    ];
    for (name, s) in variants {
        let t = Instant::now();
        let sol = qp.solve(None, &s);
        println!(
            "{name:18} {:?} iters={:6} residuals {:.2e}/{:.2e} obj {:.4} ({:.2}s)",
            sol.status,
            sol.iterations,
            sol.primal_residual,
            sol.dual_residual,
            sol.objective,
            t.elapsed().as_secs_f64()
        );
    }
}
