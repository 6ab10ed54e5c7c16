//! Ground-truth plant with an analytically known slow invariant manifold.
//!
//! The construction composes a stable cubic reduced system `x' = r*(x)` on
//! coordinates `x` with fast transverse dynamics `s' = L (s - phi(x)) + Dphi(x) r*(x)`
//! so that the graph `s = phi(x)` is exactly invariant and exponentially
//! attracting. The full system is emitted in randomly rotated coordinates so
//! that learning the manifold is nontrivial, while the true tangent basis,
//! lift, and reduced coefficients stay available for oracle comparisons.
//!
//! Two symmetry choices make the plant a sharp test instrument: the reduced
//! vector field is odd (linear plus purely cubic terms) and the lift is even
//! (purely quadratic), so decay datasets generated from opposite-sign initial
//! condition pairs carry no tangent/transverse cross-correlation and PCA can
//! recover the tangent space to high accuracy.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::basis::{build_basis, MultiIndexBasis};
use crate::error::{Error, Result};

use super::{random_unit_vector, FirstOrderSystem, NonlinearPart};

/// Tuning knobs for [`build_benchmark_plant`]. The defaults are calibrated so
/// that the standard acceptance tolerances hold with margin.
#[derive(Debug, Clone)]
pub struct BenchmarkParams {
    /// Decay rate of the slowest reduced pair (positive number).
    pub slow_decay: f64,
    /// Extra decay added per successive pair.
    pub decay_step: f64,
    /// Angular frequency of the slowest pair (rad/s).
    pub base_frequency: f64,
    /// Frequency increment per successive pair.
    pub frequency_step: f64,
    /// Strength of the stabilizing radial cubic term `-gamma * x_i * |x|^2`.
    pub radial_cubic: f64,
    /// Amplitude-dependent frequency shift per pair (Duffing-like).
    pub frequency_shift: f64,
    /// Frobenius norm of the random extra cubic coefficients.
    pub random_cubic: f64,
    /// Target ratio `|phi(x)| / |x|^2` of the quadratic manifold lift.
    pub lift_scale: f64,
    /// Transverse decay rate as a multiple of the slowest reduced decay.
    pub fast_rate_factor: f64,
    /// Number of control inputs.
    pub inputs: usize,
    /// Column norm of the tangent control component.
    pub control_tangent_scale: f64,
    /// Column norm of the transverse control component. Kept well below the
    /// tangent authority so moderate inputs act mostly along the manifold.
    pub control_transverse_scale: f64,
    /// Control magnitude scale of the emitted first-order system.
    pub epsilon: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            slow_decay: 0.7,
            decay_step: 0.35,
            base_frequency: 6.0,
            frequency_step: 4.5,
            radial_cubic: 2.5,
            frequency_shift: 3.0,
            random_cubic: 0.1,
            lift_scale: 0.45,
            fast_rate_factor: 12.0,
            inputs: 2,
            control_tangent_scale: 2.0,
            control_transverse_scale: 0.05,
            epsilon: 1.0,
        }
    }
}

/// Internals of the composed benchmark right-hand side, in mixed coordinates.
#[derive(Debug, Clone)]
pub struct ComposedNonlinearity {
    rotation: DMatrix<f64>,
    reduced_dim: usize,
    r0: DMatrix<f64>,
    r_nonlinear: DMatrix<f64>,
    dynamics_basis: MultiIndexBasis,
    lift_coeffs: DMatrix<f64>,
    lift_basis: MultiIndexBasis,
    fast_decay: DVector<f64>,
}

impl ComposedNonlinearity {
    pub fn reduced_dim(&self) -> usize {
        self.reduced_dim
    }

    /// Orthogonal map from aligned `(x, s)` coordinates to mixed ones.
    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    fn transverse_dim(&self) -> usize {
        self.fast_decay.len()
    }

    /// Quadratic lift `phi(x)` of a reduced state.
    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.lift_coeffs * self.lift_basis.evaluate(x).expect("reduced dim")
    }

    /// True reduced vector field `r*(x)`.
    pub fn reduced_rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.r0 * x + &self.r_nonlinear * self.dynamics_basis.evaluate(x).expect("reduced dim")
    }

    /// Full mixed-coordinate state on the manifold above `x`.
    pub fn lift_to_full(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut aligned = DVector::zeros(self.reduced_dim + self.transverse_dim());
        aligned.rows_mut(0, self.reduced_dim).copy_from(x);
        aligned
            .rows_mut(self.reduced_dim, self.transverse_dim())
            .copy_from(&self.lift(x));
        &self.rotation * aligned
    }

    /// Splits a mixed-coordinate state into `(x, s)` aligned coordinates.
    pub fn split(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let aligned = self.rotation.transpose() * y;
        (
            aligned.rows(0, self.reduced_dim).into_owned(),
            aligned
                .rows(self.reduced_dim, self.transverse_dim())
                .into_owned(),
        )
    }

    /// Distance to the invariant graph, `|s - phi(x)|`.
    pub fn transverse_residual(&self, y: &DVector<f64>) -> f64 {
        let (x, s) = self.split(y);
        (s - self.lift(&x)).norm()
    }

    pub(super) fn evaluate(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.reduced_dim;
        let ns = self.transverse_dim();
        let aligned = self.rotation.transpose() * y;
        let x = aligned.rows(0, n).into_owned();

        let feats = self.dynamics_basis.evaluate(&x).expect("reduced dim");
        let g_x = &self.r_nonlinear * feats;
        let reduced_rhs = &self.r0 * &x + &g_x;

        let lift_jac = self.lift_basis.jacobian(&x).expect("reduced dim");
        let phi = self.lift(&x);
        let mut g_s = &self.lift_coeffs * (lift_jac * &reduced_rhs);
        for i in 0..ns {
            g_s[i] -= self.fast_decay[i] * phi[i];
        }

        let mut g = DVector::zeros(n + ns);
        g.rows_mut(0, n).copy_from(&g_x);
        g.rows_mut(n, ns).copy_from(&g_s);
        &self.rotation * g
    }
}

/// Synthetic plant with exactly known manifold geometry and reduced dynamics.
#[derive(Debug, Clone)]
pub struct GroundTruthPlant {
    pub reduced_dim: usize,
    pub full_dim: usize,
    system: FirstOrderSystem,
    composed: ComposedNonlinearity,
    control_full: DMatrix<f64>,
}

impl GroundTruthPlant {
    pub fn system(&self) -> &FirstOrderSystem {
        &self.system
    }

    pub fn composed(&self) -> &ComposedNonlinearity {
        &self.composed
    }

    /// Orthonormal basis of the manifold's tangent space at the origin, in
    /// mixed coordinates.
    pub fn true_tangent_basis(&self) -> DMatrix<f64> {
        self.composed
            .rotation
            .columns(0, self.reduced_dim)
            .into_owned()
    }

    /// True linear part of the observed-state lift (`y = W0 x + W feats(x)`).
    pub fn true_linear_lift(&self) -> DMatrix<f64> {
        self.true_tangent_basis()
    }

    /// True nonlinear lift coefficients in mixed coordinates.
    pub fn true_nonlinear_lift(&self) -> DMatrix<f64> {
        let t_s = self
            .composed
            .rotation
            .columns(self.reduced_dim, self.full_dim - self.reduced_dim);
        t_s * &self.composed.lift_coeffs
    }

    pub fn lift_basis(&self) -> &MultiIndexBasis {
        &self.composed.lift_basis
    }

    pub fn dynamics_basis(&self) -> &MultiIndexBasis {
        &self.composed.dynamics_basis
    }

    pub fn true_reduced_linear(&self) -> &DMatrix<f64> {
        &self.composed.r0
    }

    pub fn true_reduced_nonlinear(&self) -> &DMatrix<f64> {
        &self.composed.r_nonlinear
    }

    /// Full-state on-manifold point above the true reduced state `x`.
    pub fn lift_to_full(&self, x: &DVector<f64>) -> DVector<f64> {
        self.composed.lift_to_full(x)
    }

    /// `|s - phi(x)|` for a mixed-coordinate state.
    pub fn transverse_residual(&self, y: &DVector<f64>) -> f64 {
        self.composed.transverse_residual(y)
    }

    /// Slowest transverse time constant; transients die off on this scale.
    pub fn fast_time_constant(&self) -> f64 {
        1.0 / self
            .composed
            .fast_decay
            .iter()
            .map(|l| -l)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest principal angle (radians) between `span(v)` and the true
    /// tangent space.
    pub fn principal_angle(&self, v: &DMatrix<f64>) -> f64 {
        let overlap = self.true_tangent_basis().transpose() * v;
        let smallest_sv = overlap
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        smallest_sv.clamp(-1.0, 1.0).acos()
    }

    /// True reduced coefficients expressed in the learned reduced frame
    /// `x_hat = v^T (y - y_eq)`: with `S = v^T W0*`, the truth conjugates to
    /// `(S R0 S^{-1}, S R Mon(S^{-1}))`.
    pub fn conjugated_reduced_truth(&self, v: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let s = v.transpose() * self.true_linear_lift();
        let s_inv = s.clone().try_inverse().ok_or_else(|| {
            Error::InvalidInput("learned basis is orthogonal to the true tangent space".into())
        })?;
        let mon = self
            .composed
            .dynamics_basis
            .linear_substitution_matrix(&s_inv)?;
        let r0 = &s * self.true_reduced_linear() * &s_inv;
        let r = &s * self.true_reduced_nonlinear() * mon;
        Ok((r0, r))
    }

    /// True control matrix as seen in the learned reduced frame: `v^T B`.
    pub fn planted_control_matrix(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v.transpose() * &self.control_full
    }
}

/// Builds the benchmark plant. `n` must be even (oscillatory pairs) and the
/// full dimension must leave room for at least `n + 2` transverse directions.
pub fn build_benchmark_plant(n: usize, n_f: usize, seed: u64) -> Result<GroundTruthPlant> {
    build_benchmark_plant_with(n, n_f, seed, BenchmarkParams::default())
}

pub fn build_benchmark_plant_with(
    n: usize,
    n_f: usize,
    seed: u64,
    params: BenchmarkParams,
) -> Result<GroundTruthPlant> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidInput(
            "reduced dimension must be even and at least 2".into(),
        ));
    }
    if n_f < 2 * n + 2 {
        return Err(Error::InvalidInput(format!(
            "full dimension {n_f} too small; need at least {}",
            2 * n + 2
        )));
    }
    let ns = n_f - n;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // Reduced linear part: stable 2x2 rotation blocks.
    let mut r0 = DMatrix::zeros(n, n);
    let mut slowest_decay = f64::INFINITY;
    for pair in 0..n / 2 {
        let sigma = -(params.slow_decay
            + params.decay_step * pair as f64
            + 0.05 * rng.random_range(0.0..1.0));
        let omega = params.base_frequency
            + params.frequency_step * pair as f64
            + 0.5 * rng.random_range(0.0..1.0);
        let i = 2 * pair;
        r0[(i, i)] = sigma;
        r0[(i, i + 1)] = omega;
        r0[(i + 1, i)] = -omega;
        r0[(i + 1, i + 1)] = sigma;
        slowest_decay = slowest_decay.min(-sigma);
    }

    // Cubic-only nonlinear coefficients over the order 2..3 basis; quadratic
    // columns stay zero so the reduced field is odd.
    let dynamics_basis = build_basis(n, 2, 3)?;
    let mut r_nonlinear = DMatrix::zeros(n, dynamics_basis.len());
    let col_of = |target: &[u32], basis: &MultiIndexBasis| -> usize {
        basis
            .exponents()
            .iter()
            .position(|e| e.as_slice() == target)
            .expect("cubic monomial present in order 2..3 basis")
    };
    // Radial damping -gamma x_i |x|^2.
    for i in 0..n {
        for j in 0..n {
            let mut exps = vec![0u32; n];
            if i == j {
                exps[i] = 3;
            } else {
                exps[i] = 1;
                exps[j] = 2;
            }
            r_nonlinear[(i, col_of(&exps, &dynamics_basis))] -= params.radial_cubic;
        }
    }
    // Pairwise frequency shift: rotate each pair at a rate growing with its
    // squared radius.
    for pair in 0..n / 2 {
        let (a, b) = (2 * pair, 2 * pair + 1);
        for &sq in &[a, b] {
            let mut to_a = vec![0u32; n];
            to_a[b] += 1;
            to_a[sq] += 2;
            r_nonlinear[(a, col_of(&to_a, &dynamics_basis))] += params.frequency_shift;
            let mut to_b = vec![0u32; n];
            to_b[a] += 1;
            to_b[sq] += 2;
            r_nonlinear[(b, col_of(&to_b, &dynamics_basis))] -= params.frequency_shift;
        }
    }
    // Small random extra cubic terms for genericity.
    if params.random_cubic > 0.0 {
        let cubic_cols: Vec<usize> = dynamics_basis
            .exponents()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.iter().sum::<u32>() == 3)
            .map(|(q, _)| q)
            .collect();
        let mut raw = DMatrix::zeros(n, dynamics_basis.len());
        for &q in &cubic_cols {
            for i in 0..n {
                raw[(i, q)] = rng.random_range(-1.0..1.0);
            }
        }
        let norm = raw.norm();
        if norm > 0.0 {
            r_nonlinear += raw * (params.random_cubic / norm);
        }
    }

    // Even quadratic lift, normalized so |phi(x)| ~ lift_scale |x|^2.
    let lift_basis = build_basis(n, 2, 2)?;
    let mut lift_coeffs = DMatrix::from_fn(ns, lift_basis.len(), |_, _| rng.random_range(-1.0..1.0));
    if params.lift_scale > 0.0 {
        let mut mean_gain = 0.0;
        let probes = 64;
        let mut probe_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5bd1_e995);
        for _ in 0..probes {
            let x = random_unit_vector(n, &mut probe_rng);
            mean_gain += (&lift_coeffs * lift_basis.evaluate(&x).unwrap()).norm();
        }
        mean_gain /= probes as f64;
        lift_coeffs *= params.lift_scale / mean_gain;
    } else {
        lift_coeffs.fill(0.0);
    }

    // Transverse decay rates, all at least `fast_rate_factor` times the
    // slowest reduced decay.
    let fast_rate = params.fast_rate_factor * slowest_decay;
    let fast_decay = DVector::from_fn(ns, |_, _| -(fast_rate * rng.random_range(1.0..1.6)));
    let gap = fast_decay.iter().map(|l| -l).fold(f64::INFINITY, f64::min) / slowest_decay;
    if gap < 5.0 {
        return Err(Error::SpectralGapViolation {
            ratio: gap,
            required: 5.0,
        });
    }

    // Random orthogonal mixing, sign-fixed for determinism.
    let gaussian = DMatrix::from_fn(n_f, n_f, |_, _| {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    });
    let qr = gaussian.qr();
    let mut rotation = qr.q();
    let r_diag = qr.r();
    for j in 0..n_f {
        if r_diag[(j, j)] < 0.0 {
            for i in 0..n_f {
                rotation[(i, j)] = -rotation[(i, j)];
            }
        }
    }

    // Control matrix: unit-norm tangent columns plus a smaller transverse
    // component.
    let m = params.inputs;
    let mut control_aligned = DMatrix::zeros(n_f, m);
    for c in 0..m {
        let tangent = random_unit_vector(n, &mut rng) * params.control_tangent_scale;
        let transverse = random_unit_vector(ns, &mut rng) * params.control_transverse_scale;
        control_aligned.view_mut((0, c), (n, 1)).copy_from(&tangent);
        control_aligned
            .view_mut((n, c), (ns, 1))
            .copy_from(&transverse);
    }
    let control_full = &rotation * control_aligned;

    let composed = ComposedNonlinearity {
        rotation: rotation.clone(),
        reduced_dim: n,
        r0: r0.clone(),
        r_nonlinear,
        dynamics_basis,
        lift_coeffs,
        lift_basis,
        fast_decay: fast_decay.clone(),
    };

    // Linear part in mixed coordinates: T blkdiag(R0, Lambda) T^T.
    let mut aligned_linear = DMatrix::zeros(n_f, n_f);
    aligned_linear.view_mut((0, 0), (n, n)).copy_from(&r0);
    for i in 0..ns {
        aligned_linear[(n + i, n + i)] = fast_decay[i];
    }
    let linear = &rotation * aligned_linear * rotation.transpose();

    let system = FirstOrderSystem {
        linear,
        control: control_full.clone(),
        epsilon: params.epsilon,
        nonlinear: NonlinearPart::ManifoldComposed(composed.clone()),
        dt: 1e-4,
    };

    Ok(GroundTruthPlant {
        reduced_dim: n,
        full_dim: n_f,
        system,
        composed,
        control_full,
    })
}
