//! Sequential convex programming over the linearized OCP.
//!
//! The loop iterates on the control sequence: each candidate is re-rolled
//! through the true discrete dynamics (shooting), so every accepted iterate
//! is dynamically consistent and the merit comparison is honest. Trust
//! regions on the states keep each linearization valid; steps are accepted
//! on the classical predicted-vs-true reduction ratio.

use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::control::SSMRModel;
use crate::error::{Error, Result};
use crate::mpc::qp::{solve_qp, QpStatus};
use crate::mpc::{build_locp, linearize, DiscreteDynamics, LinearizedStep, OCPConfig};

/// Smallest trust radius before the loop gives up.
const RADIUS_UNDERFLOW: f64 = 1e-10;
/// Defect tolerance certifying that the linearization is exact (linear
/// models converge in one iteration through this test).
const EXACTNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScpStatus {
    /// Trajectory change fell below the configured tolerance.
    Converged,
    /// Linearized model reproduced the rollout exactly (linear dynamics).
    ConvergedExact,
    /// Iteration limit hit; the last accepted iterate is returned.
    MaxIterations,
}

/// Result of one SCP solve.
#[derive(Debug, Clone)]
pub struct ScpResult {
    /// Accepted state trajectory `x_1..x_N` (dynamically consistent).
    pub states: Vec<DVector<f64>>,
    /// Accepted controls `u_1..u_{N-1}`.
    pub controls: Vec<DVector<f64>>,
    /// Accepted-iterate merit values, one per accepted step, non-increasing.
    pub cost_trace: Vec<f64>,
    pub iterations: usize,
    pub status: ScpStatus,
    /// Wall time spent inside the QP solver.
    pub qp_time: Duration,
}

/// Rolls the discrete dynamics from `x_init` under `controls`.
fn rollout(
    discrete: &DiscreteDynamics<'_>,
    x_init: &DVector<f64>,
    controls: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x_init.clone());
    for u in controls {
        let next = discrete.step(states.last().unwrap(), u)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { time: 0.0 });
        }
        states.push(next);
    }
    Ok(states)
}

/// Nonlinear merit: tracking plus control cost plus the l1 soft-constraint
/// penalty, evaluated on a dynamically consistent trajectory.
fn merit(
    model: &SSMRModel,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
    reference: &[DVector<f64>],
    config: &OCPConfig,
) -> Result<f64> {
    let horizon = states.len();
    let mut total = 0.0;
    for (k, x) in states.iter().enumerate() {
        let z = model.performance(x)?;
        let defect = &z - &reference[k];
        let weight = if k + 1 == horizon {
            &config.terminal_weight
        } else {
            &config.stage_weight
        };
        total += defect.dot(&(weight * &defect));
        if k >= 1 {
            if let Some(poly) = &config.performance_polytope {
                let violation = &poly.a * &z - &poly.b;
                total += config.soft_penalty
                    * violation.iter().map(|&v| v.max(0.0)).sum::<f64>();
            }
        }
    }
    for u in controls {
        total += u.dot(&(&config.control_weight * u));
    }
    Ok(total)
}

/// Solves the reduced OCP by SCP. `reference` holds `N` performance samples
/// (`reference[0]` is the current time). The warm start, when given, is the
/// control sequence to linearize around first; otherwise a zero-control
/// rollout seeds the iteration.
pub fn scp_solve(
    discrete: &DiscreteDynamics<'_>,
    x_init: &DVector<f64>,
    reference: &[DVector<f64>],
    config: &OCPConfig,
    warm_start: Option<&[DVector<f64>]>,
) -> Result<ScpResult> {
    config.validate()?;
    let model = discrete.model();
    let horizon = config.horizon;
    if reference.len() != horizon {
        return Err(Error::DimensionMismatch {
            context: "SCP reference samples",
            expected: horizon,
            got: reference.len(),
        });
    }
    let m = model.input_dim();
    let mut controls: Vec<DVector<f64>> = match warm_start {
        Some(w) => {
            if w.len() != horizon - 1 {
                return Err(Error::DimensionMismatch {
                    context: "SCP warm start",
                    expected: horizon - 1,
                    got: w.len(),
                });
            }
            w.to_vec()
        }
        None => vec![DVector::zeros(m); horizon - 1],
    };
    let mut states = rollout(discrete, x_init, &controls)?;
    let mut current_merit = merit(model, &states, &controls, reference, config)?;

    let mut radius = config.trust_region.initial_radius;
    let radius_cap = config.trust_region.initial_radius * 1e3;
    let mut cost_trace = vec![current_merit];
    let mut qp_time = Duration::ZERO;
    let mut status = ScpStatus::MaxIterations;
    let mut iterations = 0;
    let mut accepted_any = false;

    for _ in 0..config.scp_max_iters {
        iterations += 1;
        // Linearize at every nominal state; the terminal entry pairs with a
        // zero control and only contributes its observation maps.
        let mut steps: Vec<LinearizedStep> = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let u = if k + 1 < horizon {
                controls[k].clone()
            } else {
                DVector::zeros(m)
            };
            let step = linearize(model, discrete, &states[k], &u)?;
            debug_assert!(
                {
                    let exact = discrete.step(&states[k], &u)?;
                    (&exact - &step.a_k * &states[k] - &step.b_k * &u - &step.d_k).amax() < 1e-10
                },
                "linearization exactness identity violated"
            );
            steps.push(step);
        }

        let mut accepted = false;
        while !accepted {
            let locp = build_locp(&steps, x_init, reference, config, radius)?;
            let start = Instant::now();
            let solution = solve_qp(&locp.problem)?;
            qp_time += start.elapsed();
            if solution.status == QpStatus::Infeasible {
                return Err(Error::QpInfeasible);
            }
            debug_assert!(
                solution.residuals.max() < 1e-6 * (1.0 + locp.problem.gradient.amax()),
                "accepted QP solve with KKT residuals {:?}",
                solution.residuals
            );
            let predicted_cost = locp.problem.objective(&solution.x) + locp.cost_constant;
            let predicted_reduction = current_merit - predicted_cost;

            let candidate_controls: Vec<DVector<f64>> = (1..horizon)
                .map(|k| {
                    solution
                        .x
                        .rows(locp.layout.u_offset(k), m)
                        .into_owned()
                })
                .collect();
            let candidate_states = rollout(discrete, x_init, &candidate_controls)?;
            let candidate_merit =
                merit(model, &candidate_states, &candidate_controls, reference, config)?;
            let true_reduction = current_merit - candidate_merit;

            if predicted_reduction <= f64::EPSILON * (1.0 + current_merit.abs()) {
                // The convex model sees no further improvement.
                status = ScpStatus::Converged;
                return Ok(ScpResult {
                    states,
                    controls,
                    cost_trace,
                    iterations,
                    status,
                    qp_time,
                });
            }

            let ratio = true_reduction / predicted_reduction;
            if ratio >= config.trust_region.acceptance_ratio {
                // Exactness of the convex model on the accepted candidate:
                // compare the QP state trajectory with the true rollout. Only
                // meaningful when the trust region is not the binding
                // constraint.
                let mut model_defect: f64 = 0.0;
                let mut trust_deviation: f64 = 0.0;
                for k in 1..=horizon {
                    let qp_state = solution.x.rows(locp.layout.x_offset(k), locp.layout.n);
                    model_defect =
                        model_defect.max((&candidate_states[k - 1] - qp_state).amax());
                    trust_deviation =
                        trust_deviation.max((qp_state - &steps[k - 1].x_nominal).amax());
                }
                let trust_inactive = trust_deviation < 0.999 * radius;
                let step_change: f64 = states
                    .iter()
                    .zip(&candidate_states)
                    .map(|(a, b)| (a - b).norm_squared())
                    .sum::<f64>()
                    .sqrt();

                states = candidate_states;
                controls = candidate_controls;
                current_merit = candidate_merit;
                cost_trace.push(current_merit);
                radius = (radius * config.trust_region.grow).min(radius_cap);
                accepted = true;
                accepted_any = true;

                let scale = 1.0 + states.iter().map(|x| x.amax()).fold(0.0, f64::max);
                if trust_inactive && model_defect <= EXACTNESS_TOL * scale {
                    status = ScpStatus::ConvergedExact;
                    return Ok(ScpResult {
                        states,
                        controls,
                        cost_trace,
                        iterations,
                        status,
                        qp_time,
                    });
                }
                if trust_inactive && step_change < config.scp_tolerance {
                    status = ScpStatus::Converged;
                    return Ok(ScpResult {
                        states,
                        controls,
                        cost_trace,
                        iterations,
                        status,
                        qp_time,
                    });
                }
            } else {
                radius *= config.trust_region.shrink;
                if radius < RADIUS_UNDERFLOW {
                    if accepted_any {
                        // The last accepted iterate stands; further predicted
                        // improvements did not materialize.
                        return Ok(ScpResult {
                            states,
                            controls,
                            cost_trace,
                            iterations,
                            status: ScpStatus::MaxIterations,
                            qp_time,
                        });
                    }
                    return Err(Error::ScpNoProgress { radius });
                }
            }
        }
    }

    Ok(ScpResult {
        states,
        controls,
        cost_trace,
        iterations,
        status,
        qp_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::control::{assemble_model, SSMRModel};
    use crate::data::EmbeddingSpec;
    use crate::mpc::{discretize_dynamics, Polytope, TrustRegionParams};
    use crate::ssm::{ReducedDynamics, SSMGeometry, TimeSemantics};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn linear_model() -> SSMRModel {
        let geometry = SSMGeometry {
            tangent_basis: DMatrix::identity(2, 2),
            linear_lift: DMatrix::identity(2, 2),
            nonlinear_lift: DMatrix::zeros(2, 0),
            lift_basis: crate::basis::MultiIndexBasis::empty(2),
            equilibrium: DVector::zeros(2),
        };
        let dynamics = ReducedDynamics {
            linear: DMatrix::from_row_slice(2, 2, &[-0.4, 2.0, -2.0, -0.4]),
            nonlinear: DMatrix::zeros(2, 0),
            basis: crate::basis::MultiIndexBasis::empty(2),
            time: TimeSemantics::Continuous,
        };
        assemble_model(
            geometry,
            dynamics,
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::zeros(1),
            EmbeddingSpec::new(0, 2),
            1e-3,
        )
        .unwrap()
    }

    fn cubic_model(seed: u64) -> SSMRModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let basis = build_basis(2, 2, 3).unwrap();
        let geometry = SSMGeometry {
            tangent_basis: DMatrix::identity(2, 2),
            linear_lift: DMatrix::identity(2, 2),
            nonlinear_lift: DMatrix::from_fn(2, basis.len(), |_, _| rng.random_range(-0.05..0.05)),
            lift_basis: basis.clone(),
            equilibrium: DVector::zeros(2),
        };
        let mut nonlinear = DMatrix::from_fn(2, basis.len(), |_, _| rng.random_range(-0.1..0.1));
        // Stabilizing radial cubic so rollouts stay bounded.
        for (q, e) in basis.exponents().iter().enumerate() {
            for i in 0..2 {
                let mut pure = vec![0u32; 2];
                pure[i] = 3;
                if e == &pure {
                    nonlinear[(i, q)] -= 1.0;
                }
            }
        }
        let dynamics = ReducedDynamics {
            linear: DMatrix::from_row_slice(2, 2, &[-0.3, 3.0, -3.0, -0.3]),
            nonlinear,
            basis,
            time: TimeSemantics::Continuous,
        };
        assemble_model(
            geometry,
            dynamics,
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.9]),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            EmbeddingSpec::new(0, 2),
            1e-3,
        )
        .unwrap()
    }

    fn default_config(horizon: usize, o: usize, m: usize) -> OCPConfig {
        OCPConfig {
            stage_weight: DMatrix::identity(o, o),
            terminal_weight: DMatrix::identity(o, o),
            control_weight: DMatrix::identity(m, m) * 0.1,
            horizon,
            dt: 0.02,
            rollout_horizon: 1,
            control_polytope: None,
            performance_polytope: None,
            soft_penalty: 1e4,
            trust_region: TrustRegionParams::default(),
            scp_tolerance: 1e-6,
            scp_max_iters: 30,
        }
    }

    #[test]
    fn linear_model_converges_in_one_iteration() {
        let model = linear_model();
        let config = default_config(8, 1, 1);
        let discrete = discretize_dynamics(&model, config.dt).unwrap();
        let x_init = DVector::from_column_slice(&[0.5, -0.2]);
        let reference: Vec<DVector<f64>> =
            (0..8).map(|_| DVector::from_element(1, 0.3)).collect();
        let result = scp_solve(&discrete, &x_init, &reference, &config, None).unwrap();
        assert_eq!(result.status, ScpStatus::ConvergedExact);
        assert_eq!(result.iterations, 1);

        // Must equal the one-shot QP solution built at the same nominal.
        let mut steps = Vec::new();
        let zero_controls = vec![DVector::zeros(1); 7];
        let nominal = rollout(&discrete, &x_init, &zero_controls).unwrap();
        for k in 0..8 {
            let u = if k < 7 {
                zero_controls[k].clone()
            } else {
                DVector::zeros(1)
            };
            steps.push(linearize(&model, &discrete, &nominal[k], &u).unwrap());
        }
        let locp = build_locp(&steps, &x_init, &reference, &config, 1e6).unwrap();
        let qp = solve_qp(&locp.problem).unwrap();
        for k in 1..8 {
            let u_qp = qp.x.rows(locp.layout.u_offset(k), 1).into_owned();
            assert!(
                (&result.controls[k - 1] - &u_qp).amax() < 1e-8,
                "control {k} differs from direct QP"
            );
        }
    }

    #[test]
    fn accepted_costs_are_monotone_on_nonlinear_models() {
        for seed in 0..6 {
            let model = cubic_model(seed);
            let mut config = default_config(10, 2, 2);
            config.trust_region.initial_radius = 0.3;
            let discrete = discretize_dynamics(&model, config.dt).unwrap();
            let x_init = DVector::from_column_slice(&[0.6, -0.5]);
            let reference: Vec<DVector<f64>> = (0..10)
                .map(|k| {
                    DVector::from_column_slice(&[
                        0.3 * (0.2 * k as f64).sin(),
                        0.3 * (0.2 * k as f64).cos(),
                    ])
                })
                .collect();
            let result = scp_solve(&discrete, &x_init, &reference, &config, None).unwrap();
            assert!(
                result.cost_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12),
                "seed {seed}: cost trace not monotone: {:?}",
                result.cost_trace
            );
            assert!(result.iterations <= 15, "seed {seed}: {} iterations", result.iterations);
        }
    }

    #[test]
    fn warm_start_reduces_iterations() {
        let model = cubic_model(3);
        let config = default_config(10, 2, 2);
        let discrete = discretize_dynamics(&model, config.dt).unwrap();
        let reference: Vec<DVector<f64>> = (0..10)
            .map(|k| {
                DVector::from_column_slice(&[
                    0.4 * (0.15 * k as f64).sin(),
                    0.4 * (0.15 * k as f64 + 0.4).cos(),
                ])
            })
            .collect();
        let mut cold_total = 0usize;
        let mut warm_total = 0usize;
        let mut x = DVector::from_column_slice(&[0.5, -0.3]);
        let mut previous: Option<Vec<DVector<f64>>> = None;
        for _ in 0..20 {
            let cold = scp_solve(&discrete, &x, &reference, &config, None).unwrap();
            let warm = match &previous {
                Some(w) => scp_solve(&discrete, &x, &reference, &config, Some(w)).unwrap(),
                None => scp_solve(&discrete, &x, &reference, &config, None).unwrap(),
            };
            cold_total += cold.iterations;
            warm_total += warm.iterations;
            // Receding-horizon shift: drop the first control, repeat the last.
            let mut shifted = warm.controls.clone();
            shifted.rotate_left(1);
            let last = shifted.last().cloned().unwrap();
            *shifted.last_mut().unwrap() = last;
            previous = Some(shifted);
            x = warm.states[1].clone();
        }
        assert!(
            warm_total <= cold_total,
            "warm {warm_total} vs cold {cold_total} iterations"
        );
    }

    #[test]
    fn control_bounds_are_respected() {
        let model = cubic_model(11);
        let mut config = default_config(6, 2, 2);
        let lo = DVector::from_column_slice(&[-0.05, -0.05]);
        let hi = DVector::from_column_slice(&[0.05, 0.05]);
        config.control_polytope = Some(Polytope::from_box(&lo, &hi));
        let discrete = discretize_dynamics(&model, config.dt).unwrap();
        let x_init = DVector::from_column_slice(&[0.4, 0.4]);
        let reference: Vec<DVector<f64>> = (0..6)
            .map(|_| DVector::from_column_slice(&[-0.5, 0.5]))
            .collect();
        let result = scp_solve(&discrete, &x_init, &reference, &config, None).unwrap();
        for u in &result.controls {
            assert!(u.amax() <= 0.05 + 1e-7, "control bound violated: {u:?}");
        }
    }
}
