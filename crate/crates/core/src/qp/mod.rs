//! Convex quadratic programming via operator splitting.
//!
//! Solves `min ½ xᵀHx + gᵀx  s.t.  l ≤ Ax ≤ u` where equalities are rows with
//! `l = u`. The solver is a first-order splitting method: Ruiz equilibration,
//! a banded Cholesky factorization of `H + σI + Aᵀdiag(ρ)A`, over-relaxed
//! iterates, and periodic residual-based step-size adaptation. Problems built
//! per timestep stay banded, so factorization cost is linear in the horizon.

mod linalg;

use linalg::{BandMatrix, BandedCholesky, Csr};
use std::io;

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

/// Quadratic program under construction. Costs accumulate symmetrically;
/// constraints are rows of one stacked matrix with lower/upper bounds.
#[derive(Debug, Clone)]
pub struct QpProblem {
    n: usize,
    cost_rows: Vec<Vec<(usize, f64)>>,
    linear: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub primal: Vec<f64>,
    /// Multipliers for the stacked constraint rows, signed so that
    /// `Hx + g + Aᵀy = 0` at optimality.
    pub dual: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    /// Tikhonov term keeping the reduced system positive definite.
    pub sigma: f64,
    /// Initial step size shared by all rows.
    pub rho: f64,
    /// Equality rows run this much stiffer than inequality rows.
    pub rho_eq_scale: f64,
    /// Over-relaxation factor.
    pub alpha: f64,
    pub max_iterations: usize,
    pub check_interval: usize,
    pub adapt_interval: usize,
    pub scaling_iterations: usize,
    /// Finish by re-solving with the settled active set treated as
    /// equalities, keeping the result only when it scores better.
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> QpSettings {
        QpSettings {
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            eps_infeasible: 1e-5,
            sigma: 1e-6,
            rho: 0.1,
            rho_eq_scale: 1e3,
            alpha: 1.6,
            max_iterations: 10_000,
            check_interval: 25,
            adapt_interval: 50,
            scaling_iterations: 10,
            polish: true,
        }
    }
}

impl QpProblem {
    pub fn new(n_vars: usize) -> QpProblem {
        QpProblem {
            n: n_vars,
            cost_rows: vec![Vec::new(); n_vars],
            linear: vec![0.0; n_vars],
            rows: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    /// Adds `v` to both `H[i][j]` and `H[j][i]` (once if `i == j`), so an
    /// off-diagonal call contributes `2 v x_i x_j` to `xᵀHx`.
    pub fn add_cost(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.n && j < self.n && v.is_finite());
        self.cost_rows[i].push((j, v));
        if i != j {
            self.cost_rows[j].push((i, v));
        }
    }

    pub fn add_linear_cost(&mut self, i: usize, v: f64) {
        assert!(i < self.n && v.is_finite());
        self.linear[i] += v;
    }

    /// Returns the row index of the new constraint.
    pub fn add_equality(&mut self, row: Vec<(usize, f64)>, rhs: f64) -> usize {
        assert!(rhs.is_finite());
        self.push_row(row, rhs, rhs)
    }

    pub fn add_inequality(&mut self, row: Vec<(usize, f64)>, lower: f64, upper: f64) -> usize {
        debug_assert!(lower <= upper, "crossing bounds: [{lower}, {upper}]");
        self.push_row(row, lower, upper)
    }

    pub fn add_bound(&mut self, var: usize, lower: f64, upper: f64) -> usize {
        self.add_inequality(vec![(var, 1.0)], lower, upper)
    }

    fn push_row(&mut self, row: Vec<(usize, f64)>, lower: f64, upper: f64) -> usize {
        for &(c, v) in &row {
            assert!(c < self.n && v.is_finite());
        }
        assert!(!lower.is_nan() && !upper.is_nan());
        self.rows.push(row);
        self.lower.push(lower);
        self.upper.push(upper);
        self.rows.len() - 1
    }

    /// Objective `½ xᵀHx + gᵀx` for an arbitrary point, in original units.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let mut quad = 0.0;
        for (i, row) in self.cost_rows.iter().enumerate() {
            for &(j, v) in row {
                quad += x[i] * v * x[j];
            }
        }
        0.5 * quad + self.linear.iter().zip(x).map(|(g, xi)| g * xi).sum::<f64>()
    }

    /// Text dump in matrix-market coordinate style, for offline cross-checks.
    pub fn dump_matrix_market(&self, w: &mut dyn io::Write) -> io::Result<()> {
        let hmat = Csr::from_rows(self.n, &self.cost_rows);
        let amat = Csr::from_rows(self.n, &self.rows);
        writeln!(w, "%%qp coordinate real general")?;
        writeln!(w, "% sections: quadratic-cost, linear-cost, constraints, lower, upper")?;
        writeln!(w, "%% quadratic-cost {} {} {}", self.n, self.n, hmat.nnz())?;
        for i in 0..self.n {
            for (j, v) in hmat.row(i) {
                writeln!(w, "{} {} {v:.17e}", i + 1, j + 1)?;
            }
        }
        writeln!(w, "%% linear-cost {}", self.n)?;
        for v in &self.linear {
            writeln!(w, "{v:.17e}")?;
        }
        writeln!(w, "%% constraints {} {} {}", amat.nrows, self.n, amat.nnz())?;
        for i in 0..amat.nrows {
            for (j, v) in amat.row(i) {
                writeln!(w, "{} {} {v:.17e}", i + 1, j + 1)?;
            }
        }
        writeln!(w, "%% lower {}", self.lower.len())?;
        for v in &self.lower {
            writeln!(w, "{v:.17e}")?;
        }
        writeln!(w, "%% upper {}", self.upper.len())?;
        for v in &self.upper {
            writeln!(w, "{v:.17e}")?;
        }
        Ok(())
    }

    pub fn solve(&self, warm_start: Option<&[f64]>, settings: &QpSettings) -> QpSolution {
        Workspace::new(self, settings).run(warm_start)
    }
}

struct ResidualReport {
    r_prim: f64,
    r_dual: f64,
    prim_limit: f64,
    dual_limit: f64,
}

impl ResidualReport {
    fn converged(&self) -> bool {
        self.r_prim <= self.prim_limit && self.r_dual <= self.dual_limit
    }
    /// Progress score for keeping the best iterate under an iteration cap.
    fn score(&self) -> f64 {
        let p = self.r_prim / self.prim_limit.max(1e-30);
        let d = self.r_dual / self.dual_limit.max(1e-30);
        p.max(d)
    }
}

/// Solver state over the scaled problem. `d`, `e`, `c` map back to original
/// units: x = D x̄, y = E ȳ / c.
struct Workspace<'a> {
    problem: &'a QpProblem,
    settings: &'a QpSettings,
    n: usize,
    m: usize,
    hmat: Csr,
    amat: Csr,
    q: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    is_eq: Vec<bool>,
    rho: Vec<f64>,
    rho_base: f64,
    bandwidth: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    delta_x: Vec<f64>,
    delta_y: Vec<f64>,
    // Scratch vectors reused across iterations.
    ax: Vec<f64>,
    px: Vec<f64>,
    aty: Vec<f64>,
    rhs: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(problem: &'a QpProblem, settings: &'a QpSettings) -> Workspace<'a> {
        let n = problem.n;
        let m = problem.rows.len();
        let mut ws = Workspace {
            problem,
            settings,
            n,
            m,
            hmat: Csr::from_rows(n, &problem.cost_rows),
            amat: Csr::from_rows(n, &problem.rows),
            q: problem.linear.clone(),
            l: problem.lower.clone(),
            u: problem.upper.clone(),
            d: vec![1.0; n],
            e: vec![1.0; m],
            c: 1.0,
            is_eq: problem.lower.iter().zip(&problem.upper).map(|(l, u)| l == u).collect(),
            rho: vec![settings.rho; m],
            rho_base: settings.rho,
            bandwidth: 0,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            delta_x: vec![0.0; n],
            delta_y: vec![0.0; m],
            ax: vec![0.0; m],
            px: vec![0.0; n],
            aty: vec![0.0; n],
            rhs: vec![0.0; n],
        };
        ws.bandwidth = ws.hmat.max_row_span().max(ws.amat.max_row_span());
        ws.equilibrate();
        ws.set_rho(settings.rho);
        ws
    }

    /// Ruiz equilibration on the stacked [H; A] columns plus a cost scaling,
    /// pulling row and column norms toward 1.
    fn equilibrate(&mut self) {
        let clamp = |norm: f64| {
            if norm < 1e-12 {
                1.0
            } else {
                (1.0 / norm.sqrt()).clamp(MIN_SCALING, MAX_SCALING)
            }
        };
        for _ in 0..self.settings.scaling_iterations {
            let hcols = self.hmat.col_inf_norms();
            let acols = self.amat.col_inf_norms();
            let dd: Vec<f64> = (0..self.n).map(|j| clamp(hcols[j].max(acols[j]))).collect();
            let de: Vec<f64> = self.amat.row_inf_norms().iter().map(|&r| clamp(r)).collect();
            self.hmat.for_each_entry_mut(|i, j, v| *v *= dd[i] * dd[j]);
            self.amat.for_each_entry_mut(|i, j, v| *v *= de[i] * dd[j]);
            for j in 0..self.n {
                self.q[j] *= dd[j];
                self.d[j] *= dd[j];
            }
            for i in 0..self.m {
                self.l[i] *= de[i];
                self.u[i] *= de[i];
                self.e[i] *= de[i];
            }
            let mean_h = if self.n > 0 {
                self.hmat.col_inf_norms().iter().sum::<f64>() / self.n as f64
            } else {
                0.0
            };
            let qn = self.q.iter().fold(0.0, |a: f64, &v| a.max(v.abs()));
            let denom = mean_h.max(qn);
            let gamma = if denom < 1e-12 { 1.0 } else { (1.0 / denom).clamp(MIN_SCALING, MAX_SCALING) };
            self.hmat.for_each_entry_mut(|_, _, v| *v *= gamma);
            for qj in &mut self.q {
                *qj *= gamma;
            }
            self.c *= gamma;
        }
    }

    fn set_rho(&mut self, base: f64) {
        self.rho_base = base;
        for i in 0..self.m {
            self.rho[i] = if self.is_eq[i] { base * self.settings.rho_eq_scale } else { base };
        }
    }

    fn try_factor_kkt(&self) -> Option<BandedCholesky> {
        let mut k = BandMatrix::zeros(self.n, self.bandwidth);
        for j in 0..self.n {
            k.add(j, j, self.settings.sigma);
        }
        for i in 0..self.n {
            for (j, v) in self.hmat.row(i) {
                if i >= j {
                    k.add(i, j, v);
                }
            }
        }
        for r in 0..self.m {
            let entries: Vec<(usize, f64)> = self.amat.row(r).collect();
            for a in 0..entries.len() {
                for b in 0..=a {
                    k.add(entries[a].0, entries[b].0, self.rho[r] * entries[a].1 * entries[b].1);
                }
            }
        }
        BandedCholesky::factor(&k).ok()
    }

    fn factor_kkt(&self) -> BandedCholesky {
        // H is PSD and σ > 0, so the sum is positive definite by construction;
        // only roundoff under extreme step-size spreads can break the factor.
        self.try_factor_kkt().expect("regularized normal matrix must be positive definite")
    }

    /// Residuals and termination limits in original problem units.
    fn residuals(&mut self) -> ResidualReport {
        self.amat.matvec(&self.x, &mut self.ax);
        self.hmat.matvec(&self.x, &mut self.px);
        self.amat.matvec_transpose(&self.y, &mut self.aty);
        let mut r_prim: f64 = 0.0;
        let mut prim_scale: f64 = 0.0;
        for i in 0..self.m {
            let inv_e = 1.0 / self.e[i];
            r_prim = r_prim.max((self.ax[i] - self.z[i]).abs() * inv_e);
            prim_scale = prim_scale.max((self.ax[i] * inv_e).abs()).max((self.z[i] * inv_e).abs());
        }
        let mut r_dual: f64 = 0.0;
        let mut dual_scale: f64 = 0.0;
        let inv_c = 1.0 / self.c;
        for j in 0..self.n {
            let inv_d = 1.0 / self.d[j];
            let stat = (self.px[j] + self.q[j] + self.aty[j]) * inv_d * inv_c;
            r_dual = r_dual.max(stat.abs());
            dual_scale = dual_scale
                .max((self.px[j] * inv_d * inv_c).abs())
                .max((self.aty[j] * inv_d * inv_c).abs())
                .max((self.q[j] * inv_d * inv_c).abs());
        }
        ResidualReport {
            r_prim,
            r_dual,
            prim_limit: self.settings.eps_abs + self.settings.eps_rel * prim_scale,
            dual_limit: self.settings.eps_abs + self.settings.eps_rel * dual_scale,
        }
    }

    /// Primal infeasibility certificate on the latest dual increment:
    /// Aᵀδy ≈ 0 while the support function uᵀ(δy)₊ + lᵀ(δy)₋ is negative.
    fn primal_infeasible(&mut self) -> bool {
        let eps = self.settings.eps_infeasible;
        let mut norm: f64 = 0.0;
        for i in 0..self.m {
            // Unscaled increment: δy = E δȳ / c.
            self.delta_y[i] *= self.e[i] / self.c;
            norm = norm.max(self.delta_y[i].abs());
        }
        if norm <= 1e-12 {
            return false;
        }
        self.amat.matvec_transpose(&self.delta_y, &mut self.aty);
        let mut at_dy: f64 = 0.0;
        for j in 0..self.n {
            // Ā = EAD, so Aᵀ(Eδȳ) recovers through the D factor alone.
            at_dy = at_dy.max((self.aty[j] * self.c / (self.d[j] * self.c)).abs());
        }
        if at_dy > eps * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let dy = self.delta_y[i];
            let term = if dy > 0.0 {
                self.problem.upper[i] * dy
            } else {
                self.problem.lower[i] * dy
            };
            if !term.is_finite() {
                return false;
            }
            support += term;
        }
        support <= -eps * norm
    }

    /// Dual infeasibility certificate on the latest primal increment:
    /// an unbounded descent ray with Hδx ≈ 0, gᵀδx < 0, Aδx inside the
    /// recession cone of the constraint set.
    fn dual_infeasible(&mut self) -> bool {
        let eps = self.settings.eps_infeasible;
        let mut norm: f64 = 0.0;
        for j in 0..self.n {
            self.delta_x[j] *= self.d[j];
            norm = norm.max(self.delta_x[j].abs());
        }
        if norm <= 1e-12 {
            return false;
        }
        let mut g_dx = 0.0;
        for j in 0..self.n {
            // q̄ = cDq: dividing by cD recovers original g.
            g_dx += self.q[j] / (self.c * self.d[j]) * self.delta_x[j];
        }
        if g_dx > -eps * norm {
            return false;
        }
        let scaled_dx: Vec<f64> = (0..self.n).map(|j| self.delta_x[j] / self.d[j]).collect();
        self.hmat.matvec(&scaled_dx, &mut self.px);
        for j in 0..self.n {
            if (self.px[j] / (self.c * self.d[j])).abs() > eps * norm {
                return false;
            }
        }
        self.amat.matvec(&scaled_dx, &mut self.ax);
        for i in 0..self.m {
            let a_dx = self.ax[i] / self.e[i];
            let lo = self.problem.lower[i];
            let hi = self.problem.upper[i];
            if (hi.is_finite() && a_dx > eps * norm) || (lo.is_finite() && a_dx < -eps * norm) {
                return false;
            }
        }
        true
    }

    fn snapshot(&self, status: QpStatus, iterations: usize, report: &ResidualReport) -> QpSolution {
        let primal: Vec<f64> = (0..self.n).map(|j| self.x[j] * self.d[j]).collect();
        let dual: Vec<f64> = (0..self.m).map(|i| self.y[i] * self.e[i] / self.c).collect();
        QpSolution {
            objective: self.problem.objective_at(&primal),
            primal,
            dual,
            status,
            iterations,
            primal_residual: report.r_prim,
            dual_residual: report.r_dual,
        }
    }

    /// Finishing step: treat the bounds the iterate has settled on as
    /// equalities and solve that reduced problem with a few multiplier
    /// updates around one extra factorization. Splitting iterations identify
    /// the active set long before they grind the residuals down, so this
    /// reaches accuracies the main loop would need orders of magnitude more
    /// iterations for. Returns the candidate and its score; the caller keeps
    /// whichever iterate scores better, so a misidentified set is harmless.
    fn polish(&mut self, iterations: usize) -> Option<(f64, QpSolution)> {
        const RHO_POLISH: f64 = 1e4;
        const PASSES: usize = 8;
        const ROUNDS: usize = 4;

        // A multiplier is zero up to roundoff crumbs whenever the latest
        // projection was interior, so its sign classifies the row once the
        // crumbs are thresholded away. Mid-convergence iterates overestimate
        // the set; the rounds below prune it.
        let ymax = self.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let noise = 1e-12 * (1.0 + ymax);
        let mut active = vec![false; self.m];
        let mut at_lower = vec![false; self.m];
        for i in 0..self.m {
            if self.is_eq[i] || (self.y[i] < -noise && self.l[i].is_finite()) {
                active[i] = true;
                at_lower[i] = true;
            } else if self.y[i] > noise && self.u[i].is_finite() {
                active[i] = true;
            } else {
                self.y[i] = 0.0;
            }
        }

        for round in 0..ROUNDS {
            for i in 0..self.m {
                self.rho[i] = if active[i] { RHO_POLISH } else { 0.0 };
            }
            let chol = self.try_factor_kkt()?;

            // Multiplier iterations on the reduced equality system:
            //   (H + σI + Aᵀρ̂A) x⁺ = σx − q + Aᵀ(ρ̂ b − ŷ),   ŷ⁺ = ŷ + ρ̂ (Ax⁺ − b).
            // Re-centering the proximal term on the latest x drives its bias
            // to zero, so the fixpoint is a stationary point of the reduced
            // problem.
            for _ in 0..PASSES {
                for i in 0..self.m {
                    let target = if at_lower[i] { self.l[i] } else { self.u[i] };
                    self.delta_y[i] = if active[i] { self.rho[i] * target - self.y[i] } else { 0.0 };
                }
                self.amat.matvec_transpose(&self.delta_y, &mut self.rhs);
                for j in 0..self.n {
                    self.rhs[j] += self.settings.sigma * self.x[j] - self.q[j];
                }
                chol.solve(&mut self.rhs);
                std::mem::swap(&mut self.x, &mut self.rhs);
                self.amat.matvec(&self.x, &mut self.ax);
                let mut gap: f64 = 0.0;
                for i in 0..self.m {
                    if active[i] {
                        let target = if at_lower[i] { self.l[i] } else { self.u[i] };
                        let r = self.ax[i] - target;
                        gap = gap.max(r.abs());
                        self.y[i] += self.rho[i] * r;
                    }
                }
                if !gap.is_finite() {
                    return None;
                }
                if gap <= 1e-13 {
                    break;
                }
            }
            if self.x.iter().any(|v| !v.is_finite()) {
                return None;
            }
            if std::env::var("QP_POLISH_DEBUG").is_ok() {
                let n_active = active.iter().filter(|a| **a).count();
                let n_lower = (0..self.m).filter(|&i| active[i] && at_lower[i] && !self.is_eq[i]).count();
                eprintln!("round {round}: active {n_active} (lower {n_lower})");
            }
            if round + 1 == ROUNDS {
                // The verified point must come from a solve of the final
                // set, so the last allotted round never revises.
                break;
            }

            // Revise the set from this round's outcome. A pinned row whose
            // multiplier settles on the wrong sign was never truly active on
            // that side: the force holds the point AT the bound instead of
            // against it, and over-pinned sets are even infeasible, sending
            // the fighting rows' multipliers off in illegal directions. Drop
            // those, then pin any row the re-solved point runs past, on the
            // side it crossed. Rows this still misjudges surface in the
            // residuals below, and the candidate loses the score comparison.
            let mut changed = false;
            for i in 0..self.m {
                if self.is_eq[i] {
                    continue;
                }
                if active[i] {
                    let wrong_sign = if at_lower[i] { self.y[i] > 0.0 } else { self.y[i] < 0.0 };
                    if wrong_sign {
                        active[i] = false;
                        self.y[i] = 0.0;
                        changed = true;
                    }
                } else if self.ax[i] < self.l[i] - 1e-10 && self.l[i].is_finite() {
                    active[i] = true;
                    at_lower[i] = true;
                    changed = true;
                } else if self.ax[i] > self.u[i] + 1e-10 && self.u[i].is_finite() {
                    active[i] = true;
                    at_lower[i] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        // Leftover wrong signs after the last revision would misreport the
        // point as stationary; zeroing them moves the force into the dual
        // residual instead, where the score comparison can see it.
        for i in 0..self.m {
            if active[i] && !self.is_eq[i] {
                let wrong_sign = if at_lower[i] { self.y[i] > 0.0 } else { self.y[i] < 0.0 };
                if wrong_sign {
                    self.y[i] = 0.0;
                }
            }
        }

        for i in 0..self.m {
            self.z[i] = self.ax[i].clamp(self.l[i], self.u[i]);
        }
        let report = self.residuals();
        if std::env::var("QP_POLISH_DEBUG").is_ok() {
            let n_active = active.iter().filter(|a| **a).count();
            eprintln!(
                "polish: active {n_active}/{} rp {:.2e}/{:.2e} rd {:.2e}/{:.2e}",
                self.m, report.r_prim, report.prim_limit, report.r_dual, report.dual_limit
            );
            let worst = (0..self.m)
                .max_by(|&a, &b| {
                    let va = (self.ax[a] - self.z[a]).abs() / self.e[a];
                    let vb = (self.ax[b] - self.z[b]).abs() / self.e[b];
                    va.partial_cmp(&vb).unwrap()
                })
                .unwrap();
            let cols: Vec<usize> = self.amat.row(worst).map(|(j, _)| j).collect();
            eprintln!(
                "worst row {worst}: viol {:.2e} eq {} active {} at_lower {} l {:.3e} u {:.3e} cols {:?}",
                (self.ax[worst] - self.z[worst]).abs() / self.e[worst],
                self.is_eq[worst],
                active[worst],
                at_lower[worst],
                self.l[worst] / self.e[worst],
                self.u[worst] / self.e[worst],
                cols
            );
        }
        let status = if report.converged() { QpStatus::Optimal } else { QpStatus::MaxIterations };
        Some((report.score(), self.snapshot(status, iterations, &report)))
    }

    fn run(mut self, warm_start: Option<&[f64]>) -> QpSolution {
        if let Some(x0) = warm_start {
            assert_eq!(x0.len(), self.n, "warm start dimension mismatch");
            for j in 0..self.n {
                self.x[j] = x0[j] / self.d[j];
            }
        }
        self.amat.matvec(&self.x, &mut self.ax);
        for i in 0..self.m {
            self.z[i] = self.ax[i].clamp(self.l[i], self.u[i]);
        }

        let mut chol = self.factor_kkt();
        let alpha = self.settings.alpha;
        let mut best: Option<(f64, QpSolution)> = None;
        let mut iterations = 0;

        for k in 1..=self.settings.max_iterations {
            iterations = k;
            // Reduced KKT step: (H + σI + AᵀρA) x̃ = σx − q + Aᵀ(ρz − y).
            for i in 0..self.m {
                self.delta_y[i] = self.rho[i] * self.z[i] - self.y[i];
            }
            self.amat.matvec_transpose(&self.delta_y, &mut self.rhs);
            for j in 0..self.n {
                self.rhs[j] += self.settings.sigma * self.x[j] - self.q[j];
            }
            chol.solve(&mut self.rhs);
            self.amat.matvec(&self.rhs, &mut self.ax);

            for j in 0..self.n {
                let x_new = alpha * self.rhs[j] + (1.0 - alpha) * self.x[j];
                self.delta_x[j] = x_new - self.x[j];
                self.x[j] = x_new;
            }
            for i in 0..self.m {
                let relaxed = alpha * self.ax[i] + (1.0 - alpha) * self.z[i];
                let z_new = (relaxed + self.y[i] / self.rho[i]).clamp(self.l[i], self.u[i]);
                let y_new = self.y[i] + self.rho[i] * (relaxed - z_new);
                self.delta_y[i] = y_new - self.y[i];
                self.z[i] = z_new;
                self.y[i] = y_new;
            }

            let at_check = k % self.settings.check_interval == 0 || k == self.settings.max_iterations;
            if !at_check {
                continue;
            }
            let report = self.residuals();
            if report.converged() {
                let base = self.snapshot(QpStatus::Optimal, k, &report);
                if self.settings.polish {
                    if let Some((s, refined)) = self.polish(k) {
                        if s < report.score() {
                            return refined;
                        }
                    }
                }
                return base;
            }
            if self.primal_infeasible() || self.dual_infeasible() {
                return self.snapshot(QpStatus::Infeasible, k, &report);
            }
            let score = report.score();
            if best.as_ref().map_or(true, |(s, _)| score < *s) {
                best = Some((score, self.snapshot(QpStatus::MaxIterations, k, &report)));
            }
            if k % self.settings.adapt_interval == 0 {
                let prim_rel = report.r_prim / report.prim_limit.max(1e-30);
                let dual_rel = report.r_dual / report.dual_limit.max(1e-30);
                if prim_rel > 0.0 && dual_rel > 0.0 {
                    let target = (self.rho_base * (prim_rel / dual_rel).sqrt()).clamp(RHO_MIN, RHO_MAX);
                    let ratio = target / self.rho_base;
                    if !(0.2..=5.0).contains(&ratio) {
                        self.set_rho(target);
                        chol = self.factor_kkt();
                    }
                }
            }
        }

        let report = self.residuals();
        let mut score = report.score();
        let mut sol = self.snapshot(QpStatus::MaxIterations, iterations, &report);
        if let Some((s, kept)) = best {
            if s <= score {
                score = s;
                sol = QpSolution { iterations, ..kept };
            }
        }
        if self.settings.polish {
            // The classification reads the latest multipliers, which settle
            // well before the residuals do, so polishing can still rescue a
            // capped run to full optimality.
            if let Some((s, refined)) = self.polish(iterations) {
                if s < score {
                    return refined;
                }
            }
        }
        sol
    }
}
