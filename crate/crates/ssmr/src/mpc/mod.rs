//! Reduced-order model predictive control.
//!
//! The continuous control model is discretized by one RK4 step per control
//! period with analytically propagated Jacobians, linearized along a nominal
//! trajectory, and optimized by sequential convex programming over an
//! embedded dense QP solver. Performance constraints are softened with
//! penalized slack variables; dynamics and control bounds stay hard.

pub mod closed_loop;
pub mod qp;
pub mod scp;

use nalgebra::{DMatrix, DVector};

use crate::control::SSMRModel;
use crate::error::{Error, Result};
use crate::ssm::TimeSemantics;

pub use closed_loop::{
    run_receding_horizon, tracking_mse, ClosedLoopLog, ClosedLoopStep, MseReport, ReferenceTask,
};
pub use qp::{solve_qp, QpProblem, QpSolution, QpStatus};
pub use scp::{scp_solve, ScpResult, ScpStatus};

/// Polytope `{ v : a v <= b }`.
#[derive(Debug, Clone)]
pub struct Polytope {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polytope {
    /// Axis-aligned box `lo <= v <= hi`.
    pub fn from_box(lo: &DVector<f64>, hi: &DVector<f64>) -> Self {
        let m = lo.len();
        let mut a = DMatrix::zeros(2 * m, m);
        let mut b = DVector::zeros(2 * m);
        for i in 0..m {
            a[(i, i)] = 1.0;
            b[i] = hi[i];
            a[(m + i, i)] = -1.0;
            b[m + i] = -lo[i];
        }
        Polytope { a, b }
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        let r = &self.a * v - &self.b;
        r.iter().all(|&x| x <= tol)
    }

    /// Cheap emptiness probe: accepts if the origin is feasible, otherwise
    /// intersects the interval bounds implied by single-variable rows. Rows
    /// coupling several variables are skipped, so `None` means "not decided".
    pub fn trivially_nonempty(&self) -> Option<bool> {
        if self.b.iter().all(|&b| b >= 0.0) {
            return Some(true);
        }
        let m = self.a.ncols();
        let mut lo = vec![f64::NEG_INFINITY; m];
        let mut hi = vec![f64::INFINITY; m];
        let mut all_single = true;
        for r in 0..self.a.nrows() {
            let nonzero: Vec<usize> = (0..m).filter(|&j| self.a[(r, j)] != 0.0).collect();
            match nonzero.len() {
                0 => {
                    if self.b[r] < 0.0 {
                        return Some(false);
                    }
                }
                1 => {
                    let j = nonzero[0];
                    let coeff = self.a[(r, j)];
                    let bound = self.b[r] / coeff;
                    if coeff > 0.0 {
                        hi[j] = hi[j].min(bound);
                    } else {
                        lo[j] = lo[j].max(bound);
                    }
                }
                _ => all_single = false,
            }
        }
        if (0..m).any(|j| lo[j] > hi[j]) {
            return Some(false);
        }
        all_single.then_some(true)
    }
}

/// Trust-region schedule for the SCP loop.
#[derive(Debug, Clone)]
pub struct TrustRegionParams {
    pub initial_radius: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Minimum true-to-predicted cost reduction ratio to accept a step.
    pub acceptance_ratio: f64,
}

impl Default for TrustRegionParams {
    fn default() -> Self {
        TrustRegionParams {
            initial_radius: 0.1,
            shrink: 0.5,
            grow: 2.0,
            acceptance_ratio: 0.1,
        }
    }
}

/// Configuration of the reduced optimal control problem.
#[derive(Debug, Clone)]
pub struct OCPConfig {
    pub stage_weight: DMatrix<f64>,
    pub terminal_weight: DMatrix<f64>,
    pub control_weight: DMatrix<f64>,
    /// Horizon length in steps; the OCP spans states `1..=N`.
    pub horizon: usize,
    /// Discretization period of the dynamics.
    pub dt: f64,
    /// Controls applied per receding-horizon solve (`T_c = N_r * dt`).
    pub rollout_horizon: usize,
    pub control_polytope: Option<Polytope>,
    pub performance_polytope: Option<Polytope>,
    /// Weight of the l1 penalty on performance-constraint slack.
    pub soft_penalty: f64,
    pub trust_region: TrustRegionParams,
    /// SCP convergence threshold on the reduced-state trajectory 2-norm.
    pub scp_tolerance: f64,
    pub scp_max_iters: usize,
}

impl OCPConfig {
    pub fn validate(&self) -> Result<()> {
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() < 1e-10;
        if !sym(&self.stage_weight) || !sym(&self.terminal_weight) || !sym(&self.control_weight) {
            return Err(Error::InvalidConfig("cost matrices must be symmetric".into()));
        }
        let min_eig = |m: &DMatrix<f64>| {
            m.clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        };
        if min_eig(&self.stage_weight) < -1e-10 || min_eig(&self.terminal_weight) < -1e-10 {
            return Err(Error::InvalidConfig(
                "stage and terminal weights must be positive semidefinite".into(),
            ));
        }
        if min_eig(&self.control_weight) < 1e-8 {
            return Err(Error::InvalidConfig(
                "control weight must be positive definite".into(),
            ));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidConfig("horizon must be at least 2".into()));
        }
        if self.rollout_horizon < 1 || self.rollout_horizon > self.horizon {
            return Err(Error::InvalidConfig(
                "rollout horizon must satisfy 1 <= N_r <= N".into(),
            ));
        }
        if self.dt <= 0.0 || self.soft_penalty <= 0.0 || self.scp_tolerance <= 0.0 {
            return Err(Error::InvalidConfig(
                "dt, soft penalty, and SCP tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Discrete one-step dynamics with analytic Jacobians. Continuous models get
/// one RK4 step under zero-order hold; discrete models pass through.
#[derive(Debug, Clone)]
pub struct DiscreteDynamics<'m> {
    model: &'m SSMRModel,
    pub dt: f64,
    passthrough: bool,
}

/// Discretizes the model's dynamics at period `dt`.
pub fn discretize_dynamics(model: &SSMRModel, dt: f64) -> Result<DiscreteDynamics<'_>> {
    if dt <= 0.0 {
        return Err(Error::InvalidInput("discretization period must be positive".into()));
    }
    match model.dynamics.time {
        TimeSemantics::Continuous => Ok(DiscreteDynamics {
            model,
            dt,
            passthrough: false,
        }),
        TimeSemantics::Discrete { dt: model_dt } => {
            if (model_dt - dt).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "discrete-time model at {model_dt} s cannot be re-discretized to {dt} s"
                )));
            }
            Ok(DiscreteDynamics {
                model,
                dt,
                passthrough: true,
            })
        }
    }
}

impl DiscreteDynamics<'_> {
    pub fn model(&self) -> &SSMRModel {
        self.model
    }

    /// One-step map `x+ = r_d(x, u)`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if self.passthrough {
            return self.model.eval(x, u);
        }
        let dt = self.dt;
        let k1 = self.model.eval(x, u)?;
        let k2 = self.model.eval(&(x + &k1 * (dt / 2.0)), u)?;
        let k3 = self.model.eval(&(x + &k2 * (dt / 2.0)), u)?;
        let k4 = self.model.eval(&(x + &k3 * dt), u)?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
    }

    /// `(r_d(x,u), d r_d/dx, d r_d/du)` with the Jacobians chained through
    /// the RK4 stages.
    pub fn step_with_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let n = self.model.reduced_dim();
        if self.passthrough {
            let next = self.model.eval(x, u)?;
            let a = self.model.jacobian_x(x)?;
            let b = self.model.jacobian_u().clone();
            return Ok((next, a, b));
        }
        let dt = self.dt;
        let eye = DMatrix::<f64>::identity(n, n);
        let b_r = self.model.jacobian_u();

        let k1 = self.model.eval(x, u)?;
        let x2 = x + &k1 * (dt / 2.0);
        let k2 = self.model.eval(&x2, u)?;
        let x3 = x + &k2 * (dt / 2.0);
        let k3 = self.model.eval(&x3, u)?;
        let x4 = x + &k3 * dt;
        let k4 = self.model.eval(&x4, u)?;
        let next = x + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (dt / 6.0);

        let j1 = self.model.jacobian_x(x)?;
        let j2 = self.model.jacobian_x(&x2)?;
        let j3 = self.model.jacobian_x(&x3)?;
        let j4 = self.model.jacobian_x(&x4)?;

        // Stage sensitivities w.r.t. x.
        let k1x = j1.clone();
        let k2x = &j2 * (&eye + &k1x * (dt / 2.0));
        let k3x = &j3 * (&eye + &k2x * (dt / 2.0));
        let k4x = &j4 * (&eye + &k3x * dt);
        let a = &eye + (k1x + &k2x * 2.0 + &k3x * 2.0 + k4x) * (dt / 6.0);

        // Stage sensitivities w.r.t. u.
        let k1u = b_r.clone();
        let k2u = &j2 * (&k1u * (dt / 2.0)) + b_r;
        let k3u = &j3 * (&k2u * (dt / 2.0)) + b_r;
        let k4u = &j4 * (&k3u * dt) + b_r;
        let b = (k1u + &k2u * 2.0 + &k3u * 2.0 + k4u) * (dt / 6.0);

        Ok((next, a, b))
    }
}

/// Linearization of the discrete dynamics and the observation map about a
/// nominal point, exact at that point by construction.
#[derive(Debug, Clone)]
pub struct LinearizedStep {
    /// `d r_d / dx` at the nominal point.
    pub a_k: DMatrix<f64>,
    /// `d r_d / du` at the nominal point.
    pub b_k: DMatrix<f64>,
    /// Dynamics residual `r_d(x,u) - A x - B u`.
    pub d_k: DVector<f64>,
    /// Performance Jacobian `C dw/dx`.
    pub h_k: DMatrix<f64>,
    /// Observation residual `z(x) - H x`.
    pub c_k: DVector<f64>,
    /// Nominal state the step was linearized about.
    pub x_nominal: DVector<f64>,
    /// Nominal control the step was linearized about.
    pub u_nominal: DVector<f64>,
}

/// Linearizes one step of the discrete dynamics and the observation map.
pub fn linearize(
    model: &SSMRModel,
    discrete: &DiscreteDynamics<'_>,
    x_k: &DVector<f64>,
    u_k: &DVector<f64>,
) -> Result<LinearizedStep> {
    let (next, a_k, b_k) = discrete.step_with_jacobians(x_k, u_k)?;
    let d_k = next - &a_k * x_k - &b_k * u_k;
    let h_k = model.performance_jacobian(x_k)?;
    let c_k = model.performance(x_k)? - &h_k * x_k;
    Ok(LinearizedStep {
        a_k,
        b_k,
        d_k,
        h_k,
        c_k,
        x_nominal: x_k.clone(),
        u_nominal: u_k.clone(),
    })
}

/// Variable layout of the stacked LOCP decision vector
/// `[x_1..x_N, u_1..u_{N-1}, s_2..s_N]`.
#[derive(Debug, Clone, Copy)]
pub struct LocpLayout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub slack_rows: usize,
}

impl LocpLayout {
    pub fn x_offset(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.horizon);
        (k - 1) * self.n
    }

    pub fn u_offset(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k < self.horizon);
        self.horizon * self.n + (k - 1) * self.m
    }

    pub fn slack_offset(&self, k: usize) -> usize {
        debug_assert!(k >= 2 && k <= self.horizon);
        self.horizon * self.n + (self.horizon - 1) * self.m + (k - 2) * self.slack_rows
    }

    pub fn total(&self) -> usize {
        self.horizon * self.n + (self.horizon - 1) * self.m
            + (self.horizon - 1) * self.slack_rows
    }
}

/// Assembles the linearized OCP as a convex QP.
///
/// `steps` carries one linearization per horizon state `1..=N`; the terminal
/// entry contributes only its observation maps. Cost: terminal tracking plus
/// stage tracking/control effort, with an l1 penalty on performance-slack.
/// Equalities pin the initial state and the linearized dynamics.
/// Inequalities: hard control polytope, softened performance polytope, and an
/// infinity-norm trust region on states.
pub fn build_locp(
    steps: &[LinearizedStep],
    x_init: &DVector<f64>,
    reference: &[DVector<f64>],
    config: &OCPConfig,
    trust_radius: f64,
) -> Result<Locp> {
    let horizon = config.horizon;
    if steps.len() != horizon {
        return Err(Error::DimensionMismatch {
            context: "linearized steps",
            expected: horizon,
            got: steps.len(),
        });
    }
    if reference.len() != horizon {
        return Err(Error::DimensionMismatch {
            context: "reference samples",
            expected: horizon,
            got: reference.len(),
        });
    }
    if let Some(poly) = &config.control_polytope {
        if poly.trivially_nonempty() == Some(false) {
            return Err(Error::InfeasibleHardConstraints);
        }
    }
    let n = x_init.len();
    let m = steps[0].b_k.ncols();
    let slack_rows = config
        .performance_polytope
        .as_ref()
        .map(|p| p.rows())
        .unwrap_or(0);
    let layout = LocpLayout {
        n,
        m,
        horizon,
        slack_rows,
    };
    let total = layout.total();

    let mut hessian = DMatrix::zeros(total, total);
    let mut gradient = DVector::zeros(total);
    let mut cost_constant = 0.0;

    // Tracking costs; each stage uses the observation maps linearized at its
    // own nominal state.
    for k in 1..=horizon {
        let step = &steps[k - 1];
        let weight = if k == horizon {
            &config.terminal_weight
        } else {
            &config.stage_weight
        };
        if weight.amax() == 0.0 {
            continue;
        }
        let offset = layout.x_offset(k);
        let h = &step.h_k;
        let defect = &step.c_k - &reference[k - 1];
        let block = h.transpose() * weight * h * 2.0;
        hessian
            .view_mut((offset, offset), (n, n))
            .add_assign_workaround(&block);
        let grad = h.transpose() * weight * &defect * 2.0;
        for i in 0..n {
            gradient[offset + i] += grad[i];
        }
        cost_constant += defect.dot(&(weight * &defect));
    }
    // Control effort.
    for k in 1..horizon {
        let offset = layout.u_offset(k);
        let block = &config.control_weight * 2.0;
        hessian
            .view_mut((offset, offset), (m, m))
            .add_assign_workaround(&block);
    }
    // Slack penalty: l1 with a tiny quadratic term. The curvature keeps the
    // Newton systems nonsingular when a slack's constraints are inactive and
    // does not move the optimum (slack is either zero or pinned by its
    // violation).
    for k in 2..=horizon {
        let offset = layout.slack_offset(k);
        for i in 0..slack_rows {
            gradient[offset + i] += config.soft_penalty;
            hessian[(offset + i, offset + i)] += 2e-6 * config.soft_penalty;
        }
    }

    // Equalities: initial condition plus linearized dynamics over the N-1
    // transitions.
    let eq_rows = n * horizon;
    let mut a_eq = DMatrix::zeros(eq_rows, total);
    let mut b_eq = DVector::zeros(eq_rows);
    a_eq.view_mut((0, layout.x_offset(1)), (n, n))
        .copy_from(&DMatrix::identity(n, n));
    b_eq.rows_mut(0, n).copy_from(x_init);
    for k in 1..horizon {
        let row = n * k;
        let step = &steps[k - 1];
        a_eq.view_mut((row, layout.x_offset(k + 1)), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        a_eq.view_mut((row, layout.x_offset(k)), (n, n))
            .copy_from(&(-&step.a_k));
        a_eq.view_mut((row, layout.u_offset(k)), (n, m))
            .copy_from(&(-&step.b_k));
        b_eq.rows_mut(row, n).copy_from(&step.d_k);
    }

    // Inequalities.
    let control_rows = config
        .control_polytope
        .as_ref()
        .map(|p| p.rows() * (horizon - 1))
        .unwrap_or(0);
    let trust_rows = 2 * n * (horizon - 1);
    let soft_rows = 2 * slack_rows * (horizon - 1);
    let ineq_rows = control_rows + trust_rows + soft_rows;
    let mut g = DMatrix::zeros(ineq_rows, total);
    let mut h_vec = DVector::zeros(ineq_rows);
    let mut row = 0;

    if let Some(poly) = &config.control_polytope {
        for k in 1..horizon {
            g.view_mut((row, layout.u_offset(k)), (poly.rows(), m))
                .copy_from(&poly.a);
            h_vec.rows_mut(row, poly.rows()).copy_from(&poly.b);
            row += poly.rows();
        }
    }
    // Trust region |x_k - x_nominal_k|_inf <= radius for k = 2..N (x_1 is
    // pinned by the initial condition).
    for k in 2..=horizon {
        let center = &steps[k - 1].x_nominal;
        let offset = layout.x_offset(k);
        for i in 0..n {
            g[(row, offset + i)] = 1.0;
            h_vec[row] = center[i] + trust_radius;
            row += 1;
            g[(row, offset + i)] = -1.0;
            h_vec[row] = -(center[i] - trust_radius);
            row += 1;
        }
    }
    // Softened performance polytope: M_z z_k - s_k <= b_z, s_k >= 0.
    if let Some(poly) = &config.performance_polytope {
        for k in 2..=horizon {
            let step = &steps[k - 1];
            let mzh = &poly.a * &step.h_k;
            let x_off = layout.x_offset(k);
            let s_off = layout.slack_offset(k);
            g.view_mut((row, x_off), (slack_rows, n)).copy_from(&mzh);
            for i in 0..slack_rows {
                g[(row + i, s_off + i)] = -1.0;
            }
            let rhs = &poly.b - &poly.a * &step.c_k;
            h_vec.rows_mut(row, slack_rows).copy_from(&rhs);
            row += slack_rows;
            for i in 0..slack_rows {
                g[(row + i, s_off + i)] = -1.0;
            }
            row += slack_rows;
        }
    }
    debug_assert_eq!(row, ineq_rows);

    Ok(Locp {
        problem: QpProblem {
            hessian,
            gradient,
            eq_matrix: a_eq,
            eq_rhs: b_eq,
            ineq_matrix: g,
            ineq_rhs: h_vec,
        },
        layout,
        cost_constant,
    })
}

/// Assembled linearized OCP: the QP, its variable layout, and the constant
/// cost term dropped from the quadratic form (needed to compare the QP
/// optimum against nonlinear merit values).
#[derive(Debug, Clone)]
pub struct Locp {
    pub problem: QpProblem,
    pub layout: LocpLayout,
    pub cost_constant: f64,
}

// nalgebra views lack +=; small helper extension.
trait AddAssignView {
    fn add_assign_workaround(&mut self, other: &DMatrix<f64>);
}

impl AddAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_workaround(&mut self, other: &DMatrix<f64>) {
        for j in 0..other.ncols() {
            for i in 0..other.nrows() {
                self[(i, j)] += other[(i, j)];
            }
        }
    }
}
