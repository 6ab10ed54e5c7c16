//! Synthetic high-dimensional plants and trajectory generation.
//!
//! A [`MechanicalPlant`] is a second-order system
//! `M q'' + C q' + K q + F_int(q, q') = H u` with Duffing-type cubic internal
//! forces. [`assemble_first_order`] realizes it as `x' = A x + f_nl(x) + eps B u`
//! over the stacked state `x = [q; q']`. The [`benchmark`] submodule builds a
//! plant with an analytically known slow invariant manifold for oracle
//! testing. All rollouts use fixed-step classical RK4 for reproducibility.

pub mod benchmark;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::data::{Trajectory, TrajectoryKind};
use crate::error::{Error, Result};

pub use benchmark::{build_benchmark_plant, BenchmarkParams, GroundTruthPlant};

/// One cubic internal-force term. `other = None` is a grounded spring acting
/// on coordinate `dof` alone; `other = Some(j)` couples coordinates `dof` and
/// `j` through the relative displacement.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CubicSpring {
    pub dof: usize,
    pub other: Option<usize>,
    pub coeff: f64,
}

/// Second-order mechanical system with cubic internal forces.
///
/// The internal force derives from the potential
/// `U(q) = sum_g k_g q_i^4 / 4 + sum_c k_c (q_i - q_j)^4 / 4`, so
/// `F_int(0, 0) = 0` and its Jacobian vanishes at the origin by construction.
#[derive(Debug, Clone)]
pub struct MechanicalPlant {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub cubic_springs: Vec<CubicSpring>,
    pub input_map: DMatrix<f64>,
    /// Rayleigh coefficients `(alpha, beta)` when `damping = alpha M + beta K`.
    pub rayleigh: Option<(f64, f64)>,
}

impl MechanicalPlant {
    /// Fixed-free chain of `dof` unit masses with linear springs `k` between
    /// neighbors (and to ground at the first mass), Rayleigh damping, cubic
    /// springs of strength `kappa` alongside every linear spring, and force
    /// inputs applied at `input_dofs`.
    pub fn chain(
        dof: usize,
        k: f64,
        rayleigh: (f64, f64),
        kappa: f64,
        input_dofs: &[usize],
    ) -> Result<Self> {
        if dof == 0 {
            return Err(Error::InvalidInput("chain needs at least one mass".into()));
        }
        let mass = DMatrix::identity(dof, dof);
        let mut stiffness = DMatrix::zeros(dof, dof);
        for i in 0..dof {
            stiffness[(i, i)] += k;
            if i + 1 < dof {
                stiffness[(i, i)] += k;
                stiffness[(i, i + 1)] -= k;
                stiffness[(i + 1, i)] -= k;
            }
        }
        let (alpha, beta) = rayleigh;
        let damping = &mass * alpha + &stiffness * beta;
        let mut cubic_springs = Vec::new();
        if kappa != 0.0 {
            cubic_springs.push(CubicSpring {
                dof: 0,
                other: None,
                coeff: kappa,
            });
            for i in 0..dof - 1 {
                cubic_springs.push(CubicSpring {
                    dof: i,
                    other: Some(i + 1),
                    coeff: kappa,
                });
            }
        }
        let mut input_map = DMatrix::zeros(dof, input_dofs.len());
        for (col, &d) in input_dofs.iter().enumerate() {
            if d >= dof {
                return Err(Error::InvalidInput(format!(
                    "input dof {d} out of range for a {dof}-dof chain"
                )));
            }
            input_map[(d, col)] = 1.0;
        }
        Ok(MechanicalPlant {
            mass,
            damping,
            stiffness,
            cubic_springs,
            input_map,
            rayleigh: Some(rayleigh),
        })
    }

    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    /// Internal nonlinear force `F_int(q)`.
    pub fn internal_force(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.dof());
        for s in &self.cubic_springs {
            match s.other {
                None => {
                    f[s.dof] += s.coeff * q[s.dof].powi(3);
                }
                Some(j) => {
                    let rel = q[s.dof] - q[j];
                    let force = s.coeff * rel.powi(3);
                    f[s.dof] += force;
                    f[j] -= force;
                }
            }
        }
        f
    }

    /// Potential energy of the cubic springs.
    pub fn cubic_potential(&self, q: &DVector<f64>) -> f64 {
        let mut u = 0.0;
        for s in &self.cubic_springs {
            let d = match s.other {
                None => q[s.dof],
                Some(j) => q[s.dof] - q[j],
            };
            u += 0.25 * s.coeff * d.powi(4);
        }
        u
    }

    /// Total mechanical energy `q'ᵀMq'/2 + qᵀKq/2 + U_cubic(q)` of the full
    /// state `[q; q']`. Non-increasing along unforced trajectories when the
    /// damping matrix is positive semidefinite.
    pub fn mechanical_energy(&self, state: &DVector<f64>) -> f64 {
        let dof = self.dof();
        let q = state.rows(0, dof).into_owned();
        let qdot = state.rows(dof, dof).into_owned();
        0.5 * qdot.dot(&(&self.mass * &qdot))
            + 0.5 * q.dot(&(&self.stiffness * &q))
            + self.cubic_potential(&q)
    }

    /// Checks symmetry/definiteness of `M`, `K` and the recorded Rayleigh
    /// relation.
    pub fn validate(&self) -> Result<()> {
        let sym_err = |m: &DMatrix<f64>| (m - m.transpose()).amax();
        if sym_err(&self.mass) > 1e-10 || sym_err(&self.stiffness) > 1e-10 {
            return Err(Error::InvalidInput(
                "mass and stiffness matrices must be symmetric".into(),
            ));
        }
        if self.mass.clone().cholesky().is_none() {
            return Err(Error::SingularMassMatrix);
        }
        let k_eigs = self.stiffness.clone().symmetric_eigen().eigenvalues;
        if k_eigs.iter().any(|&e| e < -1e-10) {
            return Err(Error::InvalidInput(
                "stiffness matrix must be positive semidefinite".into(),
            ));
        }
        if let Some((alpha, beta)) = self.rayleigh {
            let expected = &self.mass * alpha + &self.stiffness * beta;
            if (&expected - &self.damping).amax() > 1e-8 {
                return Err(Error::InvalidInput(
                    "damping does not match the recorded Rayleigh coefficients".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Nonlinear part of a first-order system. Kept as a closed enum so systems
/// stay `Send + Sync` and clonable.
#[derive(Debug, Clone)]
pub enum NonlinearPart {
    /// `f_nl(x) = 0`.
    Zero,
    /// `f_nl = [0; -M^{-1} F_int(q)]` from a mechanical plant.
    MechanicalCubic {
        mass_inv: DMatrix<f64>,
        springs: Vec<CubicSpring>,
        dof: usize,
    },
    /// Polynomial dynamics composed around a known invariant manifold; see
    /// [`benchmark::GroundTruthPlant`].
    ManifoldComposed(benchmark::ComposedNonlinearity),
}

impl NonlinearPart {
    pub fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            NonlinearPart::Zero => DVector::zeros(x.len()),
            NonlinearPart::MechanicalCubic {
                mass_inv,
                springs,
                dof,
            } => {
                let q = x.rows(0, *dof).into_owned();
                let mut f = DVector::zeros(*dof);
                for s in springs {
                    match s.other {
                        None => f[s.dof] += s.coeff * q[s.dof].powi(3),
                        Some(j) => {
                            let force = s.coeff * (q[s.dof] - q[j]).powi(3);
                            f[s.dof] += force;
                            f[j] -= force;
                        }
                    }
                }
                let accel = mass_inv * f;
                let mut out = DVector::zeros(2 * dof);
                out.rows_mut(*dof, *dof).copy_from(&(-accel));
                out
            }
            NonlinearPart::ManifoldComposed(c) => c.evaluate(x),
        }
    }
}

/// First-order realization `x' = A x + f_nl(x) + eps B u`.
#[derive(Debug, Clone)]
pub struct FirstOrderSystem {
    pub linear: DMatrix<f64>,
    pub control: DMatrix<f64>,
    pub epsilon: f64,
    pub nonlinear: NonlinearPart,
    /// Integrator step used by the rollout helpers.
    pub dt: f64,
}

impl FirstOrderSystem {
    pub fn state_dim(&self) -> usize {
        self.linear.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.control.ncols()
    }

    /// Right-hand side of the ODE under the control `u`.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + self.nonlinear.evaluate(x) + &self.control * (self.epsilon * u)
    }

    /// Largest real part over the spectrum of the linear part.
    pub fn spectral_abscissa(&self) -> f64 {
        self.linear
            .complex_eigenvalues()
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the first-order form of a mechanical plant:
/// `A = [[0, I], [-M⁻¹K, -M⁻¹C]]`, `f_nl = [0; -M⁻¹F_int]`, `B = [0; M⁻¹H]`.
pub fn assemble_first_order(plant: &MechanicalPlant, epsilon: f64) -> Result<FirstOrderSystem> {
    plant.validate()?;
    let dof = plant.dof();
    let mass_inv = plant
        .mass
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMassMatrix)?;

    let mut linear = DMatrix::zeros(2 * dof, 2 * dof);
    linear
        .view_mut((0, dof), (dof, dof))
        .copy_from(&DMatrix::identity(dof, dof));
    linear
        .view_mut((dof, 0), (dof, dof))
        .copy_from(&(-(&mass_inv * &plant.stiffness)));
    linear
        .view_mut((dof, dof), (dof, dof))
        .copy_from(&(-(&mass_inv * &plant.damping)));

    let m = plant.input_map.ncols();
    let mut control = DMatrix::zeros(2 * dof, m);
    control
        .view_mut((dof, 0), (dof, m))
        .copy_from(&(&mass_inv * &plant.input_map));

    let nonlinear = if plant.cubic_springs.is_empty() {
        NonlinearPart::Zero
    } else {
        NonlinearPart::MechanicalCubic {
            mass_inv,
            springs: plant.cubic_springs.clone(),
            dof,
        }
    };

    let system = FirstOrderSystem {
        linear,
        control,
        epsilon,
        nonlinear,
        dt: 1e-4,
    };
    let abscissa = system.spectral_abscissa();
    if abscissa >= 0.0 {
        return Err(Error::UnstableLinearization { max_real: abscissa });
    }
    Ok(system)
}

/// One classical RK4 step with zero-order-hold control.
pub fn step_rk4(
    system: &FirstOrderSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    let k1 = system.rhs(x, u);
    let k2 = system.rhs(&(x + &k1 * (dt / 2.0)), u);
    let k3 = system.rhs(&(x + &k2 * (dt / 2.0)), u);
    let k4 = system.rhs(&(x + &k3 * dt), u);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { time: dt });
    }
    Ok(next)
}

fn steps_per_sample(sample_period: f64, dt: f64) -> Result<usize> {
    if sample_period < dt - 1e-12 {
        return Err(Error::InvalidInput(format!(
            "sample period {sample_period} is smaller than the integrator step {dt}"
        )));
    }
    let ratio = sample_period / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "sample period {sample_period} is not an integer multiple of dt {dt}"
        )));
    }
    Ok(rounded as usize)
}

/// Unforced rollout sampled at `sample_period`; the first sample is `x0`.
pub fn simulate_decay(
    system: &FirstOrderSystem,
    x0: &DVector<f64>,
    duration: f64,
    sample_period: f64,
) -> Result<Trajectory> {
    let substeps = steps_per_sample(sample_period, system.dt)?;
    let samples = (duration / sample_period).floor() as usize + 1;
    let u = DVector::zeros(system.input_dim());
    let mut x = x0.clone();
    let mut observations = DMatrix::zeros(system.state_dim(), samples);
    let mut timestamps = Vec::with_capacity(samples);
    for k in 0..samples {
        observations.set_column(k, &x);
        timestamps.push(k as f64 * sample_period);
        if k + 1 < samples {
            for s in 0..substeps {
                x = step_rk4(system, &x, &u, system.dt).map_err(|_| Error::NonFiniteState {
                    time: k as f64 * sample_period + s as f64 * system.dt,
                })?;
            }
        }
    }
    Trajectory::new(timestamps, observations, None, TrajectoryKind::Decay)
}

/// Piecewise-constant control schedule: `values[k]` is held on
/// `[k*hold_period, (k+1)*hold_period)`.
#[derive(Debug, Clone)]
pub struct ControlSchedule {
    pub hold_period: f64,
    pub values: Vec<DVector<f64>>,
}

impl ControlSchedule {
    pub fn duration(&self) -> f64 {
        self.hold_period * self.values.len() as f64
    }

    /// Control active at time `t` (clamped to the last hold). Times sit on a
    /// uniform grid, so a relative nudge keeps accumulated floating-point
    /// error from flipping hold boundaries.
    pub fn at(&self, t: f64) -> &DVector<f64> {
        let ratio = t / self.hold_period + 1e-9;
        let idx = (ratio.floor() as usize).min(self.values.len() - 1);
        &self.values[idx]
    }
}

/// Zero-order-hold rollout under `schedule`, sampled at `sample_period`. The
/// returned trajectory stores the control active on `[t_k, t_{k+1})` in the
/// control column aligned with sample `k`.
pub fn simulate_controlled(
    system: &FirstOrderSystem,
    x0: &DVector<f64>,
    schedule: &ControlSchedule,
    sample_period: f64,
) -> Result<Trajectory> {
    let substeps = steps_per_sample(sample_period, system.dt)?;
    let samples = (schedule.duration() / sample_period).floor() as usize + 1;
    let mut x = x0.clone();
    let mut observations = DMatrix::zeros(system.state_dim(), samples);
    let mut controls = DMatrix::zeros(system.input_dim(), samples);
    let mut timestamps = Vec::with_capacity(samples);
    for k in 0..samples {
        let t_k = k as f64 * sample_period;
        observations.set_column(k, &x);
        controls.set_column(k, schedule.at(t_k));
        timestamps.push(t_k);
        if k + 1 < samples {
            for s in 0..substeps {
                let t = t_k + s as f64 * system.dt;
                let u = schedule.at(t);
                x = step_rk4(system, &x, u, system.dt)
                    .map_err(|_| Error::NonFiniteState { time: t })?;
            }
        }
    }
    Trajectory::new(
        timestamps,
        observations,
        Some(controls),
        TrajectoryKind::Controlled,
    )
}

/// How decay initial conditions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialConditionMode {
    /// Pick per system: on-manifold displacements for benchmark plants,
    /// actuator preloads otherwise.
    Auto,
    /// Steady-state displacement of the linearization under a random constant
    /// preload applied through `B`.
    Preload,
    /// Random displacements on the known invariant manifold (benchmark plants
    /// only).
    Manifold,
}

/// Random decay initial conditions, deterministic in `seed`.
///
/// Preload mode solves `A x = -B u` for random constant inputs and rescales
/// to `amplitude`; manifold mode draws reduced states in opposite-sign pairs
/// and lifts them through the known manifold map, which keeps even-degree
/// lift content statistically balanced in the dataset.
pub fn sample_decay_initial_conditions(
    system: &FirstOrderSystem,
    count: usize,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    sample_decay_initial_conditions_with_mode(
        system,
        count,
        amplitude,
        seed,
        InitialConditionMode::Auto,
    )
}

pub fn sample_decay_initial_conditions_with_mode(
    system: &FirstOrderSystem,
    count: usize,
    amplitude: f64,
    seed: u64,
    mode: InitialConditionMode,
) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::InvalidInput(
            "need at least one initial condition".into(),
        ));
    }
    let mode = match (mode, &system.nonlinear) {
        (InitialConditionMode::Auto, NonlinearPart::ManifoldComposed(_)) => {
            InitialConditionMode::Manifold
        }
        (InitialConditionMode::Auto, _) => InitialConditionMode::Preload,
        (m, _) => m,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match mode {
        InitialConditionMode::Preload => {
            let lu = system.linear.clone().lu();
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let u = DVector::from_fn(system.input_dim(), |_, _| rng.random_range(-1.0..1.0));
                let forcing = &system.control * u;
                let x = lu.solve(&(-forcing)).ok_or(Error::SingularMassMatrix)?;
                let norm = x.norm();
                out.push(if norm > 0.0 { x * (amplitude / norm) } else { x });
            }
            Ok(out)
        }
        InitialConditionMode::Manifold => {
            let composed = match &system.nonlinear {
                NonlinearPart::ManifoldComposed(c) => c,
                _ => {
                    return Err(Error::InvalidInput(
                        "manifold initial conditions need a benchmark plant".into(),
                    ))
                }
            };
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let dir = random_unit_vector(composed.reduced_dim(), &mut rng);
                let scale = amplitude * rng.random_range(0.6..1.0);
                let x_reduced = dir * scale;
                out.push(composed.lift_to_full(&x_reduced));
                if out.len() < count {
                    out.push(composed.lift_to_full(&(-x_reduced)));
                }
            }
            Ok(out)
        }
        InitialConditionMode::Auto => unreachable!(),
    }
}

pub(crate) fn random_unit_vector(n: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    // Box-Muller Gaussian draws, normalized.
    loop {
        let v = DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_dof_plant() -> MechanicalPlant {
        MechanicalPlant {
            mass: DMatrix::from_element(1, 1, 1.0),
            damping: DMatrix::from_element(1, 1, 0.2),
            stiffness: DMatrix::from_element(1, 1, 1.0),
            cubic_springs: vec![],
            input_map: DMatrix::from_element(1, 1, 1.0),
            rayleigh: None,
        }
    }

    #[test]
    fn one_dof_first_order_blocks() {
        let system = assemble_first_order(&one_dof_plant(), 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.2]);
        assert_eq!(system.linear, a);
        assert_eq!(system.control.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn zero_internal_force_means_zero_nonlinearity() {
        let system = assemble_first_order(&one_dof_plant(), 1.0).unwrap();
        for v in [-2.0, 0.0, 1.5] {
            let x = DVector::from_column_slice(&[v, -v]);
            assert_eq!(system.nonlinear.evaluate(&x).amax(), 0.0);
        }
    }

    #[test]
    fn rayleigh_chain_is_stable() {
        let plant = MechanicalPlant::chain(10, 40.0, (2.5, 0.01), 5.0, &[0, 9]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let eigs = system.linear.complex_eigenvalues();
        assert!(eigs.iter().all(|l| l.re < 0.0), "spectrum: {eigs:?}");
    }

    #[test]
    fn singular_mass_is_rejected() {
        let mut plant = one_dof_plant();
        plant.mass[(0, 0)] = 0.0;
        assert!(matches!(
            assemble_first_order(&plant, 1.0),
            Err(Error::SingularMassMatrix)
        ));
    }

    #[test]
    fn undamped_plant_fails_stability_gate() {
        let mut plant = one_dof_plant();
        plant.damping[(0, 0)] = 0.0;
        assert!(matches!(
            assemble_first_order(&plant, 1.0),
            Err(Error::UnstableLinearization { .. })
        ));
    }

    #[test]
    fn nonlinearity_has_zero_value_and_jacobian_at_origin() {
        let plant = MechanicalPlant::chain(4, 20.0, (1.0, 0.01), 6.0, &[0]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let n = system.state_dim();
        assert_eq!(system.nonlinear.evaluate(&DVector::zeros(n)).amax(), 0.0);
        // Finite-difference Jacobian at the origin.
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut plus = DVector::zeros(n);
            let mut minus = DVector::zeros(n);
            plus[i] += h;
            minus[i] -= h;
            let column =
                (system.nonlinear.evaluate(&plus) - system.nonlinear.evaluate(&minus)) / (2.0 * h);
            worst = worst.max(column.amax());
        }
        assert!(worst < 1e-8, "f_nl Jacobian at origin {worst:.3e}");
    }

    #[test]
    fn rk4_matches_scalar_exponential() {
        let system = FirstOrderSystem {
            linear: DMatrix::from_element(1, 1, -1.0),
            control: DMatrix::zeros(1, 1),
            epsilon: 1.0,
            nonlinear: NonlinearPart::Zero,
            dt: 0.01,
        };
        let x = DVector::from_element(1, 1.0);
        let u = DVector::zeros(1);
        let next = step_rk4(&system, &x, &u, 0.01).unwrap();
        assert!((next[0] - (-0.01f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let plant = MechanicalPlant::chain(3, 10.0, (0.5, 0.01), 2.0, &[0]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let x = DVector::zeros(6);
        let u = DVector::zeros(1);
        let next = step_rk4(&system, &x, &u, 1e-3).unwrap();
        assert_eq!(next.amax(), 0.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Terminal error against a dt/100 reference should shrink ~16x when
        // dt halves on a stiff nonlinear 2-dof plant.
        let plant = MechanicalPlant::chain(2, 200.0, (1.0, 0.002), 400.0, &[0]).unwrap();
        let mut system = assemble_first_order(&plant, 1.0).unwrap();
        let x0 = DVector::from_column_slice(&[0.8, -0.5, 0.0, 0.0]);
        let u = DVector::zeros(1);
        let horizon = 0.2;

        let roll = |sys: &FirstOrderSystem, dt: f64| {
            let mut x = x0.clone();
            let steps = (horizon / dt).round() as usize;
            for _ in 0..steps {
                x = step_rk4(sys, &x, &u, dt).unwrap();
            }
            x
        };
        system.dt = 1e-3;
        let reference = roll(&system, 1e-3 / 100.0);
        let err_h = (roll(&system, 1e-3) - &reference).norm();
        let err_h2 = (roll(&system, 5e-4) - &reference).norm();
        let ratio = err_h / err_h2;
        assert!(
            (10.0..24.0).contains(&ratio),
            "convergence ratio {ratio}, errors {err_h:.3e}/{err_h2:.3e}"
        );
    }

    #[test]
    fn decay_from_origin_stays_zero() {
        let plant = MechanicalPlant::chain(2, 10.0, (0.5, 0.01), 1.0, &[0]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let traj = simulate_decay(&system, &DVector::zeros(4), 0.05, 1e-3).unwrap();
        assert_eq!(traj.len(), 51);
        assert_eq!(traj.observations().amax(), 0.0);
    }

    #[test]
    fn decay_sampling_grid() {
        let plant = MechanicalPlant::chain(1, 4.0, (0.4, 0.01), 0.0, &[0]).unwrap();
        let mut system = assemble_first_order(&plant, 1.0).unwrap();
        system.dt = 1e-4;
        let x0 = DVector::from_column_slice(&[0.1, 0.0]);
        let traj = simulate_decay(&system, &x0, 0.01, 1e-3).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.observations().column(0), x0);
        assert_relative_eq!(traj.timestamps()[10], 0.01, epsilon = 1e-12);
        // Rejects non-multiple sampling.
        assert!(simulate_decay(&system, &x0, 0.01, 2e-4).is_ok());
        assert!(simulate_decay(&system, &x0, 0.01, 2.5e-4).is_err());
    }

    #[test]
    fn controlled_with_zero_schedule_equals_decay() {
        let plant = MechanicalPlant::chain(2, 10.0, (0.5, 0.01), 3.0, &[1]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let x0 = DVector::from_column_slice(&[0.2, -0.1, 0.0, 0.05]);
        let schedule = ControlSchedule {
            hold_period: 0.01,
            values: vec![DVector::zeros(1); 10],
        };
        let controlled = simulate_controlled(&system, &x0, &schedule, 1e-3).unwrap();
        let decay = simulate_decay(&system, &x0, 0.1, 1e-3).unwrap();
        assert_eq!(controlled.observations(), decay.observations());
    }

    #[test]
    fn constant_control_reaches_linear_steady_state() {
        let plant = MechanicalPlant::chain(2, 25.0, (2.0, 0.01), 0.0, &[0]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let u = DVector::from_element(1, 0.4);
        // Slowest time constant from the spectral abscissa.
        let tau = -1.0 / system.spectral_abscissa();
        let duration = 10.0 * tau;
        let holds = (duration / 0.01).ceil() as usize + 1;
        let schedule = ControlSchedule {
            hold_period: 0.01,
            values: vec![u.clone(); holds],
        };
        let traj = simulate_controlled(&system, &DVector::zeros(4), &schedule, 0.01).unwrap();
        let expected = system
            .linear
            .clone()
            .lu()
            .solve(&(-(&system.control * &u)))
            .unwrap();
        let last = traj.observations().column(traj.len() - 1);
        assert!(
            (last - &expected).norm() <= 0.005 * expected.norm(),
            "steady state error too large"
        );
    }

    #[test]
    fn preload_initial_conditions_are_deterministic() {
        let plant = MechanicalPlant::chain(4, 30.0, (1.5, 0.01), 2.0, &[0, 3]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let a = sample_decay_initial_conditions(&system, 44, 0.3, 11).unwrap();
        let b = sample_decay_initial_conditions(&system, 44, 0.3, 11).unwrap();
        assert_eq!(a.len(), 44);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
        for x in &a {
            assert_relative_eq!(x.norm(), 0.3, epsilon = 1e-12);
        }
        let zero = sample_decay_initial_conditions(&system, 3, 0.0, 11).unwrap();
        assert!(zero.iter().all(|x| x.amax() == 0.0));
    }

    #[test]
    fn unforced_energy_is_nonincreasing() {
        let plant = MechanicalPlant::chain(3, 30.0, (1.0, 0.02), 8.0, &[0]).unwrap();
        let system = assemble_first_order(&plant, 1.0).unwrap();
        let x0 = DVector::from_column_slice(&[0.5, -0.3, 0.2, 0.0, 0.1, 0.0]);
        let traj = simulate_decay(&system, &x0, 1.0, 1e-3).unwrap();
        let mut prev = plant.mechanical_energy(&x0);
        for k in 1..traj.len() {
            let e = plant.mechanical_energy(&traj.observations().column(k).into_owned());
            assert!(e <= prev + 1e-6, "energy rose at sample {k}: {prev} -> {e}");
            prev = e;
        }
    }
}
