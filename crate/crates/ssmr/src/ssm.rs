//! Manifold geometry and reduced-dynamics identification.
//!
//! The observed state is projected to reduced coordinates by the leading
//! principal directions of the decay dataset, the manifold is parameterized
//! by a polynomial lift fitted by least squares, and the reduced dynamics are
//! regressed either in continuous time (against finite-difference
//! derivatives) or as a discrete-time shift map. Invariance diagnostics
//! quantify how well held-out trajectories stay on the learned manifold and
//! follow the learned flow.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, MultiIndexBasis};
use crate::data::Trajectory;
use crate::error::{Error, Result};

/// Condition-number gate for unregularized polynomial regressions.
const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Learned manifold parameterization `y = y_eq + W0 x + W feats(x)` with the
/// linear chart `x = V^T (y - y_eq)`.
#[derive(Debug, Clone)]
pub struct SSMGeometry {
    pub tangent_basis: DMatrix<f64>,
    pub linear_lift: DMatrix<f64>,
    pub nonlinear_lift: DMatrix<f64>,
    pub lift_basis: MultiIndexBasis,
    pub equilibrium: DVector<f64>,
}

impl SSMGeometry {
    pub fn observed_dim(&self) -> usize {
        self.tangent_basis.nrows()
    }

    pub fn reduced_dim(&self) -> usize {
        self.tangent_basis.ncols()
    }

    /// `x = V^T (y - y_eq)`.
    pub fn reduce(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.observed_dim() {
            return Err(Error::DimensionMismatch {
                context: "reduce",
                expected: self.observed_dim(),
                got: y.len(),
            });
        }
        Ok(self.tangent_basis.transpose() * (y - &self.equilibrium))
    }

    /// `y = y_eq + W0 x + W feats(x)`.
    pub fn reconstruct(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.reduced_dim() {
            return Err(Error::DimensionMismatch {
                context: "reconstruct",
                expected: self.reduced_dim(),
                got: x.len(),
            });
        }
        let mut y = &self.equilibrium + &self.linear_lift * x;
        if !self.lift_basis.is_empty() {
            y += &self.nonlinear_lift * self.lift_basis.evaluate(x)?;
        }
        Ok(y)
    }

    /// Shifted lift `w(x) = W0 x + W feats(x)` without the equilibrium.
    pub fn lift_shifted(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.reconstruct(x)? - &self.equilibrium)
    }

    /// Jacobian of the lift, `W0 + W * d feats / dx`.
    pub fn lift_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.reduced_dim() {
            return Err(Error::DimensionMismatch {
                context: "lift Jacobian",
                expected: self.reduced_dim(),
                got: x.len(),
            });
        }
        let mut jac = self.linear_lift.clone();
        if !self.lift_basis.is_empty() {
            jac += &self.nonlinear_lift * self.lift_basis.jacobian(x)?;
        }
        Ok(jac)
    }

    /// `(|V^T W0 - I|, |V^T W|)` in Frobenius norm; near zero when the fitted
    /// lift satisfies the chart/lift invertibility relations.
    pub fn invertibility_residuals(&self) -> (f64, f64) {
        let n = self.reduced_dim();
        let vtw0 = self.tangent_basis.transpose() * &self.linear_lift;
        let first = (vtw0 - DMatrix::<f64>::identity(n, n)).norm();
        let second = if self.lift_basis.is_empty() {
            0.0
        } else {
            (self.tangent_basis.transpose() * &self.nonlinear_lift).norm()
        };
        (first, second)
    }

    /// Projects the lift so `V^T W0 = I` and `V^T W = 0` hold exactly,
    /// redistributing the removed components. Optional post-processing;
    /// fitting never applies it silently.
    pub fn enforce_invertibility(&mut self) {
        let n = self.reduced_dim();
        let vt = self.tangent_basis.transpose();
        let correction = &self.tangent_basis
            * ((&vt * &self.linear_lift) - DMatrix::<f64>::identity(n, n));
        self.linear_lift -= correction;
        if !self.lift_basis.is_empty() {
            let correction = &self.tangent_basis * (&vt * &self.nonlinear_lift);
            self.nonlinear_lift -= correction;
        }
    }
}

/// Time semantics of a fitted reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeSemantics {
    /// `x' = R0 x + R feats(x)`.
    Continuous,
    /// One-step map `x+ = R0 x + R feats(x)` at the recorded period.
    Discrete { dt: f64 },
}

/// Polynomial reduced dynamics on the manifold.
#[derive(Debug, Clone)]
pub struct ReducedDynamics {
    pub linear: DMatrix<f64>,
    pub nonlinear: DMatrix<f64>,
    pub basis: MultiIndexBasis,
    pub time: TimeSemantics,
}

impl ReducedDynamics {
    pub fn reduced_dim(&self) -> usize {
        self.linear.nrows()
    }

    /// Autonomous right-hand side (or one-step map) `R0 x + R feats(x)`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.reduced_dim() {
            return Err(Error::DimensionMismatch {
                context: "reduced dynamics evaluation",
                expected: self.reduced_dim(),
                got: x.len(),
            });
        }
        let mut out = &self.linear * x;
        if !self.basis.is_empty() {
            out += &self.nonlinear * self.basis.evaluate(x)?;
        }
        Ok(out)
    }

    /// `R0 + R * d feats / dx`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut jac = self.linear.clone();
        if !self.basis.is_empty() {
            jac += &self.nonlinear * self.basis.jacobian(x)?;
        }
        Ok(jac)
    }

    /// Eigenvalues of the linear part as `(re, im)` pairs, sorted by
    /// decreasing real part.
    pub fn linear_spectrum(&self) -> Vec<(f64, f64)> {
        let mut eigs: Vec<(f64, f64)> = self
            .linear
            .complex_eigenvalues()
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        eigs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        eigs
    }

    /// Period of the slowest oscillatory mode, if any. For discrete models
    /// the spectrum is mapped through the matrix logarithm of the scalars.
    pub fn dominant_mode_period(&self) -> Option<f64> {
        let continuous: Vec<(f64, f64)> = match self.time {
            TimeSemantics::Continuous => self.linear_spectrum(),
            TimeSemantics::Discrete { dt } => self
                .linear_spectrum()
                .into_iter()
                .map(|(re, im)| {
                    let modulus = (re * re + im * im).sqrt();
                    (modulus.ln() / dt, im.atan2(re) / dt)
                })
                .collect(),
        };
        continuous
            .iter()
            .filter(|(_, im)| im.abs() > 1e-9)
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
            .map(|(_, im)| 2.0 * std::f64::consts::PI / im.abs())
    }
}

/// PCA tangent-space estimate: the `n` leading left singular directions of
/// the (already equilibrium-shifted) data matrix, plus the full variance
/// ratio spectrum. The sign convention makes the largest-magnitude entry of
/// each column positive.
pub fn fit_pca(y: &DMatrix<f64>, n: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = y.nrows();
    if n == 0 || n > p {
        return Err(Error::InvalidInput(format!(
            "cannot extract {n} directions from {p}-dimensional data"
        )));
    }
    if y.ncols() < p {
        return Err(Error::InvalidInput(format!(
            "need at least {p} samples for a {p}-dimensional PCA, got {}",
            y.ncols()
        )));
    }
    // Gram-matrix route: eigenvectors of Y Y^T are the left singular vectors.
    let gram = y * y.transpose();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });
    let total: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::RankDeficientData { ratio: 0.0 });
    }
    let sigma1 = eig.eigenvalues[order[0]].max(0.0).sqrt();
    let sigma_n = eig.eigenvalues[order[n - 1]].max(0.0).sqrt();
    if sigma_n / sigma1 < 1e-12 {
        return Err(Error::RankDeficientData {
            ratio: sigma_n / sigma1,
        });
    }
    let mut v = DMatrix::zeros(p, n);
    for (col, &idx) in order.iter().take(n).enumerate() {
        let mut direction = eig.eigenvectors.column(idx).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let mut max_idx = 0;
        for i in 1..p {
            if direction[i].abs() > direction[max_idx].abs() {
                max_idx = i;
            }
        }
        if direction[max_idx] < 0.0 {
            direction = -direction;
        }
        v.set_column(col, &(direction.normalize()));
    }
    let ratios: Vec<f64> = order
        .iter()
        .map(|&idx| eig.eigenvalues[idx].max(0.0) / total)
        .collect();
    Ok((v, ratios))
}

/// Shared least-squares core: finds `(C0, C)` minimizing
/// `|targets - C0 X - C feats(X)|_F` with optional ridge `lambda`.
fn polynomial_regression(
    targets: &DMatrix<f64>,
    x: &DMatrix<f64>,
    basis: &MultiIndexBasis,
    ridge: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let cols = x.ncols();
    if targets.ncols() != cols {
        return Err(Error::DimensionMismatch {
            context: "regression targets vs states",
            expected: cols,
            got: targets.ncols(),
        });
    }
    let q = basis.len();
    let rows = n + q;
    let mut features = DMatrix::zeros(rows, cols);
    features.view_mut((0, 0), (n, cols)).copy_from(x);
    if q > 0 {
        for k in 0..cols {
            let f = basis.evaluate(&x.column(k).into_owned())?;
            features.view_mut((n, k), (q, 1)).copy_from(&f);
        }
    }
    let mut gram = &features * features.transpose();
    // The Gram matrix is symmetric PSD; its eigenvalues are the squared
    // singular values of the feature matrix.
    let eigs = gram.clone().symmetric_eigen().eigenvalues;
    let max_eig = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if min_eig > 0.0 {
        max_eig / min_eig
    } else {
        f64::INFINITY
    };
    if ridge == 0.0 && cond > GRAM_CONDITION_LIMIT {
        return Err(Error::IllConditionedRegression {
            cond,
            limit: GRAM_CONDITION_LIMIT,
        });
    }
    if ridge > 0.0 {
        for i in 0..rows {
            gram[(i, i)] += ridge;
        }
    }
    let chol = Cholesky::new(gram).ok_or(Error::IllConditionedRegression {
        cond,
        limit: GRAM_CONDITION_LIMIT,
    })?;
    // Solve G C^T = F T^T, i.e. C = T F^T G^{-1}.
    let rhs = &features * targets.transpose();
    let coeffs_t = chol.solve(&rhs);
    let coeffs = coeffs_t.transpose();
    Ok((
        coeffs.columns(0, n).into_owned(),
        coeffs.columns(n, q).into_owned(),
    ))
}

/// Fits the manifold lift `(W0, W)` by regressing observations on reduced
/// coordinates; `x` must already be `V^T y`. `n_w = 1` yields a linear-only
/// lift with an empty nonlinear basis.
pub fn fit_geometry(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    tangent_basis: &DMatrix<f64>,
    equilibrium: &DVector<f64>,
    n_w: u32,
    ridge: f64,
) -> Result<SSMGeometry> {
    if n_w < 1 {
        return Err(Error::InvalidInput("lift order must be >= 1".into()));
    }
    let n = x.nrows();
    let basis = if n_w >= 2 {
        build_basis(n, 2, n_w)?
    } else {
        MultiIndexBasis::empty(n)
    };
    let (w0, w) = polynomial_regression(y, x, &basis, ridge)?;
    Ok(SSMGeometry {
        tangent_basis: tangent_basis.clone(),
        linear_lift: w0,
        nonlinear_lift: w,
        lift_basis: basis,
        equilibrium: equilibrium.clone(),
    })
}

/// Continuous-time reduced dynamics `(R0, R)` from states and their
/// finite-difference derivatives.
pub fn fit_reduced_dynamics(
    x: &DMatrix<f64>,
    xdot: &DMatrix<f64>,
    n_r: u32,
    ridge: f64,
) -> Result<ReducedDynamics> {
    if n_r < 1 {
        return Err(Error::InvalidInput("dynamics order must be >= 1".into()));
    }
    let n = x.nrows();
    let basis = if n_r >= 2 {
        build_basis(n, 2, n_r)?
    } else {
        MultiIndexBasis::empty(n)
    };
    let (r0, r) = polynomial_regression(xdot, x, &basis, ridge)?;
    Ok(ReducedDynamics {
        linear: r0,
        nonlinear: r,
        basis,
        time: TimeSemantics::Continuous,
    })
}

/// Discrete-time variant: regresses the one-step shift `x_{k+1}` on
/// `[x_k; feats(x_k)]`. Pairs must already respect trajectory boundaries.
pub fn fit_discrete_dynamics(
    x: &DMatrix<f64>,
    x_next: &DMatrix<f64>,
    n_r: u32,
    dt: f64,
    ridge: f64,
) -> Result<ReducedDynamics> {
    if n_r < 1 {
        return Err(Error::InvalidInput("dynamics order must be >= 1".into()));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidInput("discrete period must be positive".into()));
    }
    let n = x.nrows();
    let basis = if n_r >= 2 {
        build_basis(n, 2, n_r)?
    } else {
        MultiIndexBasis::empty(n)
    };
    let (r0, r) = polynomial_regression(x_next, x, &basis, ridge)?;
    Ok(ReducedDynamics {
        linear: r0,
        nonlinear: r,
        basis,
        time: TimeSemantics::Discrete { dt },
    })
}

/// Invariance diagnostics over held-out trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// Per-sample relative reconstruction error `|y - w(v(y))| / |y|`.
    pub geometry_median: f64,
    pub geometry_p95: f64,
    /// Reduced rollout error against the projected trajectory, normalized by
    /// the trajectory's reduced amplitude.
    pub dynamics_median: f64,
    pub dynamics_p95: f64,
    pub samples: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Measures geometry and dynamics residuals on preprocessed held-out decay
/// trajectories (already truncated/embedded exactly like the training data).
pub fn invariance_error(
    geometry: &SSMGeometry,
    dynamics: &ReducedDynamics,
    trajectories: &[Trajectory],
) -> Result<InvarianceReport> {
    let mut geometry_errs = Vec::new();
    let mut dynamics_errs = Vec::new();
    for traj in trajectories {
        let h = traj
            .sample_period()
            .ok_or(Error::TooShortTrajectory { needed: 2, got: traj.len() })?;
        // Amplitude scale of the shifted observations for the relative error.
        let mut scale: f64 = 0.0;
        for k in 0..traj.len() {
            let shifted = traj.observations().column(k) - &geometry.equilibrium;
            scale = scale.max(shifted.norm());
        }
        if scale <= 0.0 {
            continue;
        }
        let mut reduced_track = Vec::with_capacity(traj.len());
        for k in 0..traj.len() {
            let y = traj.observations().column(k).into_owned();
            let shifted_norm = (&y - &geometry.equilibrium).norm();
            let x = geometry.reduce(&y)?;
            let reconstructed = geometry.reconstruct(&x)?;
            if shifted_norm > 1e-6 * scale {
                geometry_errs.push((&reconstructed - &y).norm() / shifted_norm);
            }
            reduced_track.push(x);
        }
        // Roll the learned reduced dynamics from the first projected sample.
        let reduced_scale = reduced_track
            .iter()
            .map(|x| x.norm())
            .fold(0.0f64, f64::max);
        if reduced_scale <= 0.0 {
            continue;
        }
        let mut x = reduced_track[0].clone();
        dynamics_errs.push(0.0);
        for target in reduced_track.iter().skip(1) {
            x = match dynamics.time {
                TimeSemantics::Continuous => {
                    // RK4 substeps over one sampling period.
                    let substeps = 4;
                    let dt = h / substeps as f64;
                    let mut state = x;
                    for _ in 0..substeps {
                        let k1 = dynamics.eval(&state)?;
                        let k2 = dynamics.eval(&(&state + &k1 * (dt / 2.0)))?;
                        let k3 = dynamics.eval(&(&state + &k2 * (dt / 2.0)))?;
                        let k4 = dynamics.eval(&(&state + &k3 * dt))?;
                        state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                    }
                    state
                }
                TimeSemantics::Discrete { .. } => dynamics.eval(&x)?,
            };
            if x.iter().any(|v| !v.is_finite()) {
                dynamics_errs.push(f64::INFINITY);
                break;
            }
            dynamics_errs.push((&x - target).norm() / reduced_scale);
        }
    }
    geometry_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dynamics_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(InvarianceReport {
        geometry_median: percentile(&geometry_errs, 0.5),
        geometry_p95: percentile(&geometry_errs, 0.95),
        dynamics_median: percentile(&dynamics_errs, 0.5),
        dynamics_p95: percentile(&dynamics_errs, 0.95),
        samples: geometry_errs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble_regression_data, EmbeddingSpec};
    use crate::plant::{build_benchmark_plant, sample_decay_initial_conditions, simulate_decay};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn benchmark_dataset(
        n: usize,
        n_f: usize,
        seed: u64,
        count: usize,
        duration: f64,
    ) -> (crate::plant::GroundTruthPlant, crate::data::AssembledData) {
        let plant = build_benchmark_plant(n, n_f, seed).unwrap();
        let ics = sample_decay_initial_conditions(plant.system(), count, 0.5, seed ^ 1).unwrap();
        let trajs: Vec<_> = ics
            .iter()
            .map(|x0| simulate_decay(plant.system(), x0, duration, 1e-3).unwrap())
            .collect();
        let spec = EmbeddingSpec::new(0, n_f);
        let data = assemble_regression_data(&trajs, &spec, &DVector::zeros(n_f)).unwrap();
        (plant, data)
    }

    #[test]
    fn pca_on_single_axis_data() {
        let mut y = DMatrix::zeros(4, 20);
        for k in 0..20 {
            y[(0, k)] = (k as f64 * 0.3).sin();
        }
        // Rank-1 data: asking for one direction works, two errors out.
        let (v, ratios) = fit_pca(&y, 1).unwrap();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((ratios[0] - 1.0).abs() < 1e-12);
        assert!(matches!(
            fit_pca(&y, 2),
            Err(Error::RankDeficientData { .. })
        ));
    }

    #[test]
    fn pca_orthonormality_and_sign_convention() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let y = DMatrix::from_fn(6, 300, |_, _| rng.random_range(-1.0..1.0));
        let (v, ratios) = fit_pca(&y, 3).unwrap();
        let gram = v.transpose() * &v;
        assert!((gram - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        let total: f64 = ratios.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        for col in 0..3 {
            let c = v.column(col);
            let max = c.iter().cloned().fold(f64::NEG_INFINITY, |a, b| a.max(b.abs()));
            assert!(c.iter().any(|&x| (x.abs() - max).abs() < 1e-12 && x > 0.0));
        }
    }

    #[test]
    fn pca_recovers_benchmark_tangent_space() {
        let (plant, data) = benchmark_dataset(2, 8, 13, 8, 3.0);
        let (v, ratios) = fit_pca(&data.y, 2).unwrap();
        let leading: f64 = ratios[..2].iter().sum();
        assert!(leading > 0.95, "leading variance {leading}");
        let angle = plant.principal_angle(&v).to_degrees();
        assert!(angle < 2.0, "principal angle {angle} deg");
    }

    #[test]
    fn geometry_on_linear_data_has_no_nonlinear_part() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        // Observations lie exactly in a 2-D subspace of R^5.
        let basis_cols = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = DMatrix::from_fn(2, 200, |_, _| rng.random_range(-1.0..1.0));
        let y = &basis_cols * &x;
        let (v, _) = fit_pca(&y, 2).unwrap();
        let x_red = v.transpose() * &y;
        let geometry =
            fit_geometry(&y, &x_red, &v, &DVector::zeros(5), 2, 0.0).unwrap();
        assert!(geometry.nonlinear_lift.norm() < 1e-8);
        for k in (0..200).step_by(17) {
            let reconstructed = geometry
                .reconstruct(&x_red.column(k).into_owned())
                .unwrap();
            assert!((reconstructed - y.column(k)).norm() < 1e-8);
        }
    }

    #[test]
    fn geometry_reconstructs_benchmark_manifold() {
        let (_, data) = benchmark_dataset(2, 8, 3, 8, 3.0);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let geometry =
            fit_geometry(&data.y, &x, &v, &DVector::zeros(8), 2, 0.0).unwrap();
        let residual = (&data.y
            - x.column_iter()
                .enumerate()
                .fold(DMatrix::zeros(8, data.y.ncols()), |mut acc, (k, xc)| {
                    let rec = geometry.lift_shifted(&xc.into_owned()).unwrap();
                    acc.set_column(k, &rec);
                    acc
                }))
        .norm()
            / data.y.norm();
        assert!(residual < 1e-4, "relative reconstruction residual {residual:.2e}");
    }

    #[test]
    fn reduced_dynamics_recovers_planted_coefficients() {
        let (plant, data) = benchmark_dataset(2, 8, 23, 10, 4.0);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let xdot = v.transpose() * &data.ydot;
        let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0).unwrap();
        let (r0_true, r_true) = plant.conjugated_reduced_truth(&v).unwrap();
        let err_linear = (&dynamics.linear - &r0_true).norm() / r0_true.norm();
        let err_nonlinear = (&dynamics.nonlinear - &r_true).norm() / r_true.norm();
        assert!(err_linear < 0.01, "linear coefficient error {err_linear:.4}");
        assert!(
            err_nonlinear < 0.01,
            "nonlinear coefficient error {err_nonlinear:.4}"
        );
    }

    #[test]
    fn linear_decay_yields_negligible_cubic_terms() {
        // Data from a pure linear system fitted at cubic order.
        let a = DMatrix::from_row_slice(2, 2, &[-0.2, 2.0, -2.0, -0.2]);
        let mut x = DMatrix::zeros(2, 4000);
        // Two runs from different starts, RK4 at 1 kHz.
        for (run, start) in [[0.5, 0.1], [-0.3, 0.45]].iter().enumerate() {
            let mut state = DVector::from_column_slice(start);
            for k in 0..2000 {
                x.set_column(run * 2000 + k, &state);
                let dt = 1e-3;
                let k1 = &a * &state;
                let k2 = &a * (&state + &k1 * (dt / 2.0));
                let k3 = &a * (&state + &k2 * (dt / 2.0));
                let k4 = &a * (&state + &k3 * dt);
                state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
        }
        let xdot = &a * &x;
        let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0).unwrap();
        assert!(dynamics.nonlinear.norm() < 1e-8);
        let eigs = dynamics.linear_spectrum();
        assert!((eigs[0].0 - (-0.2)).abs() < 0.001);
        assert!((eigs[0].1.abs() - 2.0).abs() < 0.01);
    }

    #[test]
    fn zero_targets_give_zero_coefficients() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(2, 100, |_, _| rng.random_range(-1.0..1.0));
        let dynamics = fit_reduced_dynamics(&x, &DMatrix::zeros(2, 100), 3, 0.0).unwrap();
        assert!(dynamics.linear.norm() < 1e-12);
        assert!(dynamics.nonlinear.norm() < 1e-12);
    }

    #[test]
    fn discrete_fit_recovers_linear_step_map() {
        // Known one-step map: x+ = A_d x with A_d from a symmetric matrix
        // exponential (test-side oracle via eigendecomposition).
        let sym: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, 0.4, -2.0]);
        let dt = 0.01;
        let eig = (sym.clone() * dt).symmetric_eigen();
        let mut exp_d: DMatrix<f64> = DMatrix::zeros(2, 2);
        for i in 0..2 {
            exp_d[(i, i)] = eig.eigenvalues[i].exp();
        }
        let a_d = &eig.eigenvectors * exp_d * eig.eigenvectors.transpose();

        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(2, 400, |_, _| rng.random_range(-1.0..1.0));
        let x_next = &a_d * &x;
        let dynamics = fit_discrete_dynamics(&x, &x_next, 3, dt, 0.0).unwrap();
        assert!((&dynamics.linear - &a_d).amax() < 1e-6);
        assert!(dynamics.nonlinear.norm() < 1e-6);
        assert!(matches!(dynamics.time, TimeSemantics::Discrete { .. }));
    }

    #[test]
    fn identity_shift_fits_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(3, 200, |_, _| rng.random_range(-1.0..1.0));
        let dynamics = fit_discrete_dynamics(&x, &x.clone(), 2, 0.1, 0.0).unwrap();
        assert!((&dynamics.linear - DMatrix::<f64>::identity(3, 3)).amax() < 1e-9);
        assert!(dynamics.nonlinear.norm() < 1e-9);
    }

    #[test]
    fn discrete_one_step_prediction_on_held_out_data() {
        let (plant, data) = benchmark_dataset(2, 8, 31, 8, 3.0);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let projected = crate::data::AssembledData {
            y: v.transpose() * &data.y,
            ydot: v.transpose() * &data.ydot,
            controls: None,
            columns_per_trajectory: data.columns_per_trajectory.clone(),
            sample_period: data.sample_period,
        };
        let (x, x_next) = projected.shift_pairs();
        let dynamics = fit_discrete_dynamics(&x, &x_next, 3, 1e-3, 0.0).unwrap();

        // Held-out trajectory from a fresh initial condition.
        let x0 = plant.lift_to_full(&DVector::from_column_slice(&[0.31, -0.22]));
        let held_out = simulate_decay(plant.system(), &x0, 1.0, 1e-3).unwrap();
        let mut max_rel = 0.0f64;
        for k in 0..held_out.len() - 1 {
            let xx = v.transpose() * held_out.observations().column(k);
            let predicted = dynamics.eval(&xx).unwrap();
            let actual = v.transpose() * held_out.observations().column(k + 1);
            let denom = actual.norm().max(1e-9);
            max_rel = max_rel.max((predicted - actual).norm() / denom);
        }
        assert!(max_rel < 1e-3, "one-step relative error {max_rel:.2e}");
    }

    #[test]
    fn reduce_reconstruct_round_trip() {
        let (_, data) = benchmark_dataset(2, 8, 41, 8, 3.0);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let geometry =
            fit_geometry(&data.y, &x, &v, &DVector::zeros(8), 3, 0.0).unwrap();
        let (inv0, inv1) = geometry.invertibility_residuals();
        assert!(inv0 < 1e-6, "V^T W0 - I residual {inv0:.2e}");
        assert!(inv1 < 1e-6, "V^T W residual {inv1:.2e}");
        for k in (0..x.ncols()).step_by(97) {
            let xc = x.column(k).into_owned();
            let round = geometry.reduce(&geometry.reconstruct(&xc).unwrap()).unwrap();
            assert!((round - &xc).norm() < 1e-8);
        }
        // x = 0 reconstructs the equilibrium exactly.
        let y0 = geometry.reconstruct(&DVector::zeros(2)).unwrap();
        assert_eq!(y0, geometry.equilibrium);
    }

    #[test]
    fn lift_jacobian_matches_finite_differences() {
        let (_, data) = benchmark_dataset(2, 8, 43, 6, 2.5);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let geometry =
            fit_geometry(&data.y, &x, &v, &DVector::zeros(8), 3, 0.0).unwrap();
        let point = DVector::from_column_slice(&[0.21, -0.33]);
        let jac = geometry.lift_jacobian(&point).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut plus = point.clone();
            let mut minus = point.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (geometry.reconstruct(&plus).unwrap()
                - geometry.reconstruct(&minus).unwrap())
                / (2.0 * h);
            let col = jac.column(i);
            let scale = col.norm().max(1.0);
            assert!((col - fd).norm() / scale < 1e-5);
        }
    }

    #[test]
    fn regression_beats_random_perturbations() {
        let (_, data) = benchmark_dataset(2, 8, 47, 6, 2.0);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let xdot = v.transpose() * &data.ydot;
        let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0).unwrap();

        let residual = |lin: &DMatrix<f64>, non: &DMatrix<f64>| -> f64 {
            let mut total = 0.0;
            for k in 0..x.ncols() {
                let xc = x.column(k).into_owned();
                let pred = lin * &xc + non * dynamics.basis.evaluate(&xc).unwrap();
                total += (pred - xdot.column(k)).norm_squared();
            }
            total
        };
        let base = residual(&dynamics.linear, &dynamics.nonlinear);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..100 {
            let lin = &dynamics.linear
                + DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1e-3..1e-3));
            let non = &dynamics.nonlinear
                + DMatrix::from_fn(2, dynamics.nonlinear.ncols(), |_, _| {
                    rng.random_range(-1e-3..1e-3)
                });
            assert!(residual(&lin, &non) >= base);
        }
    }

    #[test]
    fn invariance_diagnostics_on_benchmark() {
        let plant = build_benchmark_plant(2, 8, 53).unwrap();
        let train_ics =
            sample_decay_initial_conditions(plant.system(), 8, 0.5, 7).unwrap();
        let trajs: Vec<_> = train_ics
            .iter()
            .map(|x0| simulate_decay(plant.system(), x0, 3.0, 1e-3).unwrap())
            .collect();
        let spec = EmbeddingSpec::new(0, 8);
        let data = assemble_regression_data(&trajs, &spec, &DVector::zeros(8)).unwrap();
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let xdot = v.transpose() * &data.ydot;
        let geometry = fit_geometry(&data.y, &x, &v, &DVector::zeros(8), 3, 0.0).unwrap();
        let dynamics = fit_reduced_dynamics(&x, &xdot, 3, 0.0).unwrap();

        let held_out: Vec<_> =
            sample_decay_initial_conditions(plant.system(), 4, 0.45, 1234)
                .unwrap()
                .iter()
                .map(|x0| simulate_decay(plant.system(), x0, 2.0, 1e-3).unwrap())
                .collect();
        let report = invariance_error(&geometry, &dynamics, &held_out).unwrap();
        assert!(report.geometry_median < 1e-3, "{report:?}");
        assert!(report.dynamics_median < 1e-3, "{report:?}");

        // Linear-only lift cannot beat the cubic lift on the training set.
        let linear_geometry =
            fit_geometry(&data.y, &x, &v, &DVector::zeros(8), 1, 0.0).unwrap();
        let linear_report =
            invariance_error(&linear_geometry, &dynamics, &held_out).unwrap();
        assert!(report.geometry_median <= linear_report.geometry_median);

        // A too-small reduced dimension degrades the dynamics residual by
        // an order of magnitude.
        let (v1, _) = fit_pca(&data.y, 1).unwrap();
        let x1 = v1.transpose() * &data.y;
        let xdot1 = v1.transpose() * &data.ydot;
        let geometry1 = fit_geometry(&data.y, &x1, &v1, &DVector::zeros(8), 3, 0.0).unwrap();
        let dynamics1 = fit_reduced_dynamics(&x1, &xdot1, 3, 0.0).unwrap();
        let report1 = invariance_error(&geometry1, &dynamics1, &held_out).unwrap();
        assert!(
            report1.dynamics_median > 10.0 * report.dynamics_median,
            "correct n: {:.2e}, wrong n: {:.2e}",
            report.dynamics_median,
            report1.dynamics_median
        );
    }

    #[test]
    fn ill_conditioned_regression_is_gated() {
        // Duplicate a single sample: the Gram matrix is singular.
        let x = DMatrix::from_fn(2, 50, |i, _| if i == 0 { 1.0 } else { 2.0 });
        let xdot = DMatrix::zeros(2, 50);
        assert!(matches!(
            fit_reduced_dynamics(&x, &xdot, 3, 0.0),
            Err(Error::IllConditionedRegression { .. })
        ));
        // Ridge makes it solvable.
        assert!(fit_reduced_dynamics(&x, &xdot, 3, 1e-8).is_ok());
    }

    #[test]
    fn enforce_invertibility_zeroes_residuals() {
        let (_, data) = benchmark_dataset(2, 8, 61, 6, 2.0);
        let (v, _) = fit_pca(&data.y, 2).unwrap();
        let x = v.transpose() * &data.y;
        let mut geometry =
            fit_geometry(&data.y, &x, &v, &DVector::zeros(8), 3, 0.0).unwrap();
        geometry.enforce_invertibility();
        let (inv0, inv1) = geometry.invertibility_residuals();
        assert!(inv0 < 1e-12);
        assert!(inv1 < 1e-12);
    }
}
