//! Control-matrix identification and the assembled control model.
//!
//! The autonomous reduced dynamics explain most of a controlled trajectory;
//! the remaining derivative residual is regressed linearly against the
//! applied inputs to obtain `B_r`, giving the controlled reduced model
//! `x' = R0 x + R feats(x) + B_r u` with performance output
//! `z = C w(x) + z_eq`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::data::{EmbeddingSpec, Trajectory};
use crate::error::{Error, Result};
use crate::plant::ControlSchedule;
use crate::ssm::{ReducedDynamics, SSMGeometry};

/// Condition-number gate on `U U^T` guarding against unexciting inputs.
const EXCITATION_CONDITION_LIMIT: f64 = 1e10;

/// Complete learned control model.
#[derive(Debug, Clone)]
pub struct SSMRModel {
    pub geometry: SSMGeometry,
    pub dynamics: ReducedDynamics,
    pub control_matrix: DMatrix<f64>,
    /// Selection of performance variables from the observed state.
    pub performance_matrix: DMatrix<f64>,
    /// Performance value at the equilibrium.
    pub performance_equilibrium: DVector<f64>,
    /// Embedding layout of the observed state the model was trained on.
    pub embedding: EmbeddingSpec,
    /// Sampling period of the training data (drives delay reconstruction).
    pub sample_period: f64,
    /// Largest reduced-state norm seen during training; sizes trust regions.
    pub training_amplitude: f64,
}

impl SSMRModel {
    pub fn reduced_dim(&self) -> usize {
        self.dynamics.reduced_dim()
    }

    pub fn observed_dim(&self) -> usize {
        self.geometry.observed_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.control_matrix.ncols()
    }

    pub fn performance_dim(&self) -> usize {
        self.performance_matrix.nrows()
    }

    /// Controlled reduced vector field `r(x, u) = r_aut(x) + B_r u`.
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "control input",
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        Ok(self.dynamics.eval(x)? + &self.control_matrix * u)
    }

    /// `d r / d x`, shared with the autonomous dynamics.
    pub fn jacobian_x(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.dynamics.jacobian(x)
    }

    /// `d r / d u = B_r`.
    pub fn jacobian_u(&self) -> &DMatrix<f64> {
        &self.control_matrix
    }

    /// Performance output `z = C w(x) + z_eq` of a reduced state.
    pub fn performance(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.performance_matrix * self.geometry.lift_shifted(x)?
            + &self.performance_equilibrium)
    }

    /// `d z / d x = C * dw/dx`.
    pub fn performance_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.performance_matrix * self.geometry.lift_jacobian(x)?)
    }

    /// Performance value of a raw observed state (shift-consistent with
    /// [`Self::performance`]).
    pub fn performance_from_observation(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.observed_dim() {
            return Err(Error::DimensionMismatch {
                context: "performance observation",
                expected: self.observed_dim(),
                got: y.len(),
            });
        }
        Ok(&self.performance_matrix * (y - &self.geometry.equilibrium)
            + &self.performance_equilibrium)
    }

    /// Initial reduced state for control, `x = V^T (y - y_eq)`.
    pub fn initial_condition(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.geometry.reduce(y)
    }

    pub fn dominant_mode_period(&self) -> Option<f64> {
        self.dynamics.dominant_mode_period()
    }
}

/// Uniform random piecewise-constant excitation schedule, deterministic in
/// `seed`. Each hold draws every channel uniformly within its bounds.
pub fn random_control_sequence(
    input_dim: usize,
    duration: f64,
    hold_period: f64,
    bounds: (&DVector<f64>, &DVector<f64>),
    seed: u64,
) -> Result<ControlSchedule> {
    let (lo, hi) = bounds;
    if lo.len() != input_dim || hi.len() != input_dim {
        return Err(Error::DimensionMismatch {
            context: "control bounds",
            expected: input_dim,
            got: lo.len(),
        });
    }
    if hold_period <= 0.0 || duration <= 0.0 {
        return Err(Error::InvalidInput(
            "excitation duration and hold period must be positive".into(),
        ));
    }
    for i in 0..input_dim {
        if !(lo[i].is_finite() && hi[i].is_finite()) || lo[i] > hi[i] {
            return Err(Error::InvalidInput(format!(
                "invalid excitation bounds on channel {i}: [{}, {}]",
                lo[i], hi[i]
            )));
        }
    }
    let holds = (duration / hold_period).ceil() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let values = (0..holds)
        .map(|_| {
            DVector::from_fn(input_dim, |i, _| {
                if hi[i] > lo[i] {
                    rng.random_range(lo[i]..hi[i])
                } else {
                    lo[i]
                }
            })
        })
        .collect();
    Ok(ControlSchedule {
        hold_period,
        values,
    })
}

/// Diagnostics of a control-matrix fit.
#[derive(Debug, Clone)]
pub struct ControlFitReport {
    /// Frobenius norm of the derivative residual before the control term.
    pub residual_before: f64,
    /// Residual after subtracting `B_r U`.
    pub residual_after: f64,
    /// Condition number of the excitation Gram matrix `U U^T`.
    pub excitation_condition: f64,
}

/// Least-squares control matrix: minimizes `|Xdot_u - r_aut(X_u) - B_r U|_F`.
/// For discrete-time dynamics the residual is the one-step difference
/// `X_next - r_d(X)` instead of a derivative.
pub fn fit_control_matrix(
    x_u: &DMatrix<f64>,
    xdot_u: &DMatrix<f64>,
    controls: &DMatrix<f64>,
    dynamics: &ReducedDynamics,
) -> Result<(DMatrix<f64>, ControlFitReport)> {
    let cols = x_u.ncols();
    if xdot_u.ncols() != cols || controls.ncols() != cols {
        return Err(Error::DimensionMismatch {
            context: "control regression alignment",
            expected: cols,
            got: controls.ncols(),
        });
    }
    let n = dynamics.reduced_dim();
    if x_u.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "control regression states",
            expected: n,
            got: x_u.nrows(),
        });
    }
    // Residual after the autonomous model explains what it can.
    let mut residual = DMatrix::zeros(n, cols);
    for k in 0..cols {
        let x = x_u.column(k).into_owned();
        residual.set_column(k, &(xdot_u.column(k) - dynamics.eval(&x)?));
    }
    let gram = controls * controls.transpose();
    let eigs = gram.clone().symmetric_eigen().eigenvalues;
    let max_eig = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min_eig > 0.0 {
        max_eig / min_eig
    } else {
        f64::INFINITY
    };
    if !condition.is_finite() || condition > EXCITATION_CONDITION_LIMIT {
        return Err(Error::RankDeficientExcitation {
            cond: condition,
            limit: EXCITATION_CONDITION_LIMIT,
        });
    }
    let rhs = controls * residual.transpose();
    let solved = gram
        .lu()
        .solve(&rhs)
        .ok_or(Error::RankDeficientExcitation {
            cond: condition,
            limit: EXCITATION_CONDITION_LIMIT,
        })?;
    let b_r = solved.transpose();
    let residual_after = (&residual - &b_r * controls).norm();
    Ok((
        b_r,
        ControlFitReport {
            residual_before: residual.norm(),
            residual_after,
            excitation_condition: condition,
        },
    ))
}

/// Regression data for the control fit, extracted from controlled
/// trajectories in reduced coordinates.
#[derive(Debug, Clone)]
pub struct ControlRegressionData {
    pub x: DMatrix<f64>,
    pub xdot: DMatrix<f64>,
    pub controls: DMatrix<f64>,
}

/// Projects controlled trajectories to reduced coordinates and pairs
/// finite-difference derivatives with the inputs that produced them.
///
/// Central-difference stencils are only valid inside a constant control hold:
/// a sample whose stencil window spans a control switch sees an average of
/// two different inputs and would bias `B_r` toward zero. Such samples are
/// dropped, which requires the trajectory sampling to be finer than the hold
/// period.
pub fn assemble_control_regression(
    trajectories: &[Trajectory],
    geometry: &SSMGeometry,
) -> Result<ControlRegressionData> {
    let n = geometry.reduced_dim();
    let mut xs = Vec::new();
    let mut xdots = Vec::new();
    let mut us = Vec::new();
    for traj in trajectories {
        let controls = traj.controls().ok_or_else(|| {
            Error::InvalidInput("control regression needs controlled trajectories".into())
        })?;
        if traj.raw_dim() != geometry.observed_dim() {
            return Err(Error::DimensionMismatch {
                context: "control regression observations",
                expected: geometry.observed_dim(),
                got: traj.raw_dim(),
            });
        }
        if traj.len() < 3 {
            return Err(Error::TooShortTrajectory {
                needed: 3,
                got: traj.len(),
            });
        }
        let h = traj.sample_period().expect("len >= 3");
        // Project, then differentiate in reduced coordinates.
        let mut x_red = DMatrix::zeros(n, traj.len());
        for k in 0..traj.len() {
            x_red.set_column(k, &geometry.reduce(&traj.observations().column(k).into_owned())?);
        }
        for k in 1..traj.len() - 1 {
            // The centered stencil covers (t_{k-1}, t_{k+1}); keep the sample
            // only if the control is constant across that window.
            let same_before = (controls.column(k) - controls.column(k - 1)).amax() == 0.0;
            let same_after = (controls.column(k + 1) - controls.column(k)).amax() == 0.0;
            if !(same_before && same_after) {
                continue;
            }
            let d = (x_red.column(k + 1) - x_red.column(k - 1)) / (2.0 * h);
            xs.push(x_red.column(k).into_owned());
            xdots.push(d);
            us.push(controls.column(k).into_owned());
        }
    }
    if xs.is_empty() {
        return Err(Error::InvalidInput(
            "no usable control regression samples; is the hold period a multiple of the sampling period?".into(),
        ));
    }
    let cols = xs.len();
    let m = us[0].len();
    let mut x = DMatrix::zeros(n, cols);
    let mut xdot = DMatrix::zeros(n, cols);
    let mut controls = DMatrix::zeros(m, cols);
    for k in 0..cols {
        x.set_column(k, &xs[k]);
        xdot.set_column(k, &xdots[k]);
        controls.set_column(k, &us[k]);
    }
    Ok(ControlRegressionData { x, xdot, controls })
}

/// Discrete-time counterpart of [`assemble_control_regression`]: pairs each
/// reduced state with its one-step successor and the input held over that
/// step, for regressing `x+ - r_d(x) = B_r u`. Zero-order hold makes every
/// in-trajectory pair valid, so nothing is dropped.
pub fn assemble_control_regression_discrete(
    trajectories: &[Trajectory],
    geometry: &SSMGeometry,
) -> Result<ControlRegressionData> {
    let n = geometry.reduced_dim();
    let mut xs = Vec::new();
    let mut nexts = Vec::new();
    let mut us = Vec::new();
    for traj in trajectories {
        let controls = traj.controls().ok_or_else(|| {
            Error::InvalidInput("control regression needs controlled trajectories".into())
        })?;
        if traj.len() < 2 {
            return Err(Error::TooShortTrajectory {
                needed: 2,
                got: traj.len(),
            });
        }
        for k in 0..traj.len() - 1 {
            xs.push(geometry.reduce(&traj.observations().column(k).into_owned())?);
            nexts.push(geometry.reduce(&traj.observations().column(k + 1).into_owned())?);
            us.push(controls.column(k).into_owned());
        }
    }
    let cols = xs.len();
    let m = us[0].len();
    let mut x = DMatrix::zeros(n, cols);
    let mut xdot = DMatrix::zeros(n, cols);
    let mut controls = DMatrix::zeros(m, cols);
    for k in 0..cols {
        x.set_column(k, &xs[k]);
        xdot.set_column(k, &nexts[k]);
        controls.set_column(k, &us[k]);
    }
    Ok(ControlRegressionData { x, xdot, controls })
}

/// Assembles the complete model, validating dimensional consistency.
pub fn assemble_model(
    geometry: SSMGeometry,
    dynamics: ReducedDynamics,
    control_matrix: DMatrix<f64>,
    performance_matrix: DMatrix<f64>,
    performance_equilibrium: DVector<f64>,
    embedding: EmbeddingSpec,
    sample_period: f64,
) -> Result<SSMRModel> {
    let n = geometry.reduced_dim();
    if dynamics.reduced_dim() != n {
        return Err(Error::DimensionMismatch {
            context: "model dynamics vs geometry",
            expected: n,
            got: dynamics.reduced_dim(),
        });
    }
    if control_matrix.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "model control matrix rows",
            expected: n,
            got: control_matrix.nrows(),
        });
    }
    if performance_matrix.ncols() != geometry.observed_dim() {
        return Err(Error::DimensionMismatch {
            context: "performance selector columns",
            expected: geometry.observed_dim(),
            got: performance_matrix.ncols(),
        });
    }
    if performance_equilibrium.len() != performance_matrix.nrows() {
        return Err(Error::DimensionMismatch {
            context: "performance equilibrium",
            expected: performance_matrix.nrows(),
            got: performance_equilibrium.len(),
        });
    }
    if embedding.embedded_dim() != geometry.observed_dim() {
        return Err(Error::DimensionMismatch {
            context: "embedding vs geometry",
            expected: geometry.observed_dim(),
            got: embedding.embedded_dim(),
        });
    }
    Ok(SSMRModel {
        geometry,
        dynamics,
        control_matrix,
        performance_matrix,
        performance_equilibrium,
        embedding,
        sample_period,
        training_amplitude: 1.0,
    })
}
