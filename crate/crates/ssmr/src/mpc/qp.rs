//! Dense convex QP solver.
//!
//! Solves `min 1/2 x'Px + q'x  s.t.  Ax = b, Gx <= h` with a primal-dual
//! interior-point method (Mehrotra predictor-corrector). Every solution
//! carries its KKT residuals so callers can verify optimality instead of
//! trusting a status flag; infeasibility is signaled, never silently returned
//! as optimal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITERS: usize = 60;
/// Relative convergence target for the scaled KKT residuals.
const TOLERANCE: f64 = 1e-10;
/// Static regularization applied to the condensed Newton system.
const STATIC_REG: f64 = 1e-12;

/// Problem data: `min 1/2 x'Px + q'x  s.t.  Ax = b, Gx <= h`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

impl QpProblem {
    pub fn unconstrained(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        QpProblem {
            hessian,
            gradient,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
        }
    }

    pub fn vars(&self) -> usize {
        self.gradient.len()
    }

    /// Objective value at `x`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// Max-norm KKT residuals of a primal-dual point.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_ineq)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    pub slacks: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
}

fn kkt_residuals(problem: &QpProblem, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, w: &DVector<f64>) -> KktResiduals {
    let stationarity = (&problem.hessian * x
        + &problem.gradient
        + problem.eq_matrix.transpose() * y
        + problem.ineq_matrix.transpose() * z)
        .amax();
    let primal_eq = if problem.eq_rhs.is_empty() {
        0.0
    } else {
        (&problem.eq_matrix * x - &problem.eq_rhs).amax()
    };
    let primal_ineq = if problem.ineq_rhs.is_empty() {
        0.0
    } else {
        (&problem.ineq_matrix * x + w - &problem.ineq_rhs).amax()
    };
    let complementarity = if z.is_empty() {
        0.0
    } else {
        (0..z.len())
            .map(|i| (z[i] * w[i]).abs())
            .fold(0.0, f64::max)
    };
    KktResiduals {
        stationarity,
        primal_eq,
        primal_ineq,
        complementarity,
    }
}

/// Solves an equality-constrained (or unconstrained) QP by one KKT solve.
fn solve_equality_qp(problem: &QpProblem) -> Result<QpSolution> {
    let n = problem.vars();
    let p = problem.eq_rhs.len();
    let mut kkt = DMatrix::zeros(n + p, n + p);
    kkt.view_mut((0, 0), (n, n)).copy_from(&problem.hessian);
    if p > 0 {
        kkt.view_mut((0, n), (n, p))
            .copy_from(&problem.eq_matrix.transpose());
        kkt.view_mut((n, 0), (p, n)).copy_from(&problem.eq_matrix);
    }
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(-&problem.gradient));
    if p > 0 {
        rhs.rows_mut(n, p).copy_from(&problem.eq_rhs);
    }
    let solved = kkt
        .lu()
        .solve(&rhs)
        .ok_or(Error::InvalidInput("singular KKT system".into()))?;
    let x = solved.rows(0, n).into_owned();
    let y = solved.rows(n, p).into_owned();
    let residuals = kkt_residuals(problem, &x, &y, &DVector::zeros(0), &DVector::zeros(0));
    let scale = 1.0 + problem.gradient.amax().max(problem.eq_rhs.amax());
    let status = if residuals.max() <= 1e-8 * scale {
        QpStatus::Optimal
    } else {
        QpStatus::Infeasible
    };
    Ok(QpSolution {
        x,
        eq_duals: y,
        ineq_duals: DVector::zeros(0),
        slacks: DVector::zeros(0),
        status,
        iterations: 1,
        residuals,
    })
}

/// Solves a convex QP. The Hessian must be positive semidefinite; strict
/// convexity on the constraint null space is required for a unique solution.
///
/// The objective is normalized to unit magnitude internally (the minimizer is
/// invariant, duals scale linearly), which keeps the interior-point iteration
/// well-behaved when cost terms span many orders of magnitude.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution> {
    let magnitude = problem.hessian.amax().max(problem.gradient.amax());
    if magnitude > 10.0 {
        let c = 1.0 / magnitude;
        let scaled = QpProblem {
            hessian: &problem.hessian * c,
            gradient: &problem.gradient * c,
            eq_matrix: problem.eq_matrix.clone(),
            eq_rhs: problem.eq_rhs.clone(),
            ineq_matrix: problem.ineq_matrix.clone(),
            ineq_rhs: problem.ineq_rhs.clone(),
        };
        let mut solution = solve_qp_core(&scaled)?;
        solution.eq_duals /= c;
        solution.ineq_duals /= c;
        solution.residuals =
            kkt_residuals(problem, &solution.x, &solution.eq_duals, &solution.ineq_duals, &solution.slacks);
        return Ok(solution);
    }
    solve_qp_core(problem)
}

fn solve_qp_core(problem: &QpProblem) -> Result<QpSolution> {
    let n = problem.vars();
    let p = problem.eq_rhs.len();
    let m = problem.ineq_rhs.len();
    if problem.hessian.nrows() != n || problem.hessian.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "QP Hessian",
            expected: n,
            got: problem.hessian.nrows(),
        });
    }
    if problem.eq_matrix.ncols() != n || problem.ineq_matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "QP constraint columns",
            expected: n,
            got: problem.eq_matrix.ncols().max(problem.ineq_matrix.ncols()),
        });
    }
    if m == 0 {
        return solve_equality_qp(problem);
    }

    let scale = 1.0
        + problem
            .gradient
            .amax()
            .max(problem.eq_rhs.amax())
            .max(problem.ineq_rhs.amax());

    // Starting point: minimum-norm equality-feasible primal (cost gradient
    // deliberately excluded, so variables with purely linear cost do not
    // start at extreme values), slacks shifted uniformly into the interior.
    let mut x = {
        let mut reg = problem.hessian.clone();
        for i in 0..n {
            reg[(i, i)] += 1.0;
        }
        let eq_only = QpProblem {
            hessian: reg,
            gradient: DVector::zeros(n),
            eq_matrix: problem.eq_matrix.clone(),
            eq_rhs: problem.eq_rhs.clone(),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
        };
        solve_equality_qp(&eq_only)?.x
    };
    let mut y = DVector::zeros(p);
    let raw = &problem.ineq_rhs - &problem.ineq_matrix * &x;
    let shift = (-raw.min()).max(0.0) + 1.0;
    let mut w = raw.add_scalar(shift);
    let mut z = DVector::from_element(m, 1.0);

    let mut stalled = 0usize;
    for iter in 0..MAX_ITERS {
        let r_dual = &problem.hessian * &x
            + &problem.gradient
            + problem.eq_matrix.transpose() * &y
            + problem.ineq_matrix.transpose() * &z;
        let r_eq = &problem.eq_matrix * &x - &problem.eq_rhs;
        let r_ineq = &problem.ineq_matrix * &x + &w - &problem.ineq_rhs;
        let mu = w.dot(&z) / m as f64;

        let residuals = kkt_residuals(problem, &x, &y, &z, &w);
        if residuals.max() <= TOLERANCE * scale {
            return Ok(QpSolution {
                x,
                eq_duals: y,
                ineq_duals: z,
                slacks: w,
                status: QpStatus::Optimal,
                iterations: iter,
                residuals,
            });
        }

        // Newton system condensed over the inequality block only; equalities
        // stay explicit so their residuals keep converging even when the
        // active-set weights z/w blow up late in the run.
        let d = DVector::from_fn(m, |i, _| (z[i] / w[i]).min(1e14));
        let mut kkt = DMatrix::zeros(n + p, n + p);
        {
            let mut top_left = problem.hessian.clone();
            for r in 0..m {
                let row = problem.ineq_matrix.row(r);
                let dr = d[r];
                for i in 0..n {
                    let gi = row[i];
                    if gi == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        top_left[(i, j)] += dr * gi * row[j];
                    }
                }
            }
            for i in 0..n {
                top_left[(i, i)] += STATIC_REG;
            }
            kkt.view_mut((0, 0), (n, n)).copy_from(&top_left);
            if p > 0 {
                kkt.view_mut((0, n), (n, p))
                    .copy_from(&problem.eq_matrix.transpose());
                kkt.view_mut((n, 0), (p, n)).copy_from(&problem.eq_matrix);
                for i in 0..p {
                    kkt[(n + i, n + i)] = -STATIC_REG;
                }
            }
        }
        let lu = kkt.lu();

        // Direction solver for a given centering target.
        let solve_direction = |r_cent: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // rhs_x = -r_dual - G'(D r_ineq - W^{-1} r_cent)
            let tmp = DVector::from_fn(m, |i, _| d[i] * r_ineq[i] - r_cent[i] / w[i]);
            let rhs_x = -&r_dual - problem.ineq_matrix.transpose() * tmp;
            let mut rhs = DVector::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&rhs_x);
            if p > 0 {
                rhs.rows_mut(n, p).copy_from(&(-&r_eq));
            }
            let solved = lu.solve(&rhs)?;
            let dx = solved.rows(0, n).into_owned();
            let dy = solved.rows(n, p).into_owned();
            let g_dx = &problem.ineq_matrix * &dx;
            let dz = DVector::from_fn(m, |i, _| d[i] * (g_dx[i] + r_ineq[i]) - r_cent[i] / w[i]);
            let dw = DVector::from_fn(m, |i, _| -(r_cent[i] + w[i] * dz[i]) / z[i]);
            Some((dx, dy, dz, dw))
        };

        // Affine (predictor) direction: drive complementarity to zero.
        let r_cent_aff = DVector::from_fn(m, |i, _| w[i] * z[i]);
        let Some((dx_aff, _dy_aff, dz_aff, dw_aff)) = solve_direction(&r_cent_aff) else {
            break;
        };

        let step_to_boundary = |v: &DVector<f64>, dv: &DVector<f64>| -> f64 {
            let mut alpha: f64 = 1.0;
            for i in 0..v.len() {
                if dv[i] < 0.0 {
                    alpha = alpha.min(-v[i] / dv[i]);
                }
            }
            alpha
        };
        let alpha_aff = step_to_boundary(&w, &dw_aff).min(step_to_boundary(&z, &dz_aff));
        let mu_aff = (0..m)
            .map(|i| (w[i] + alpha_aff * dw_aff[i]) * (z[i] + alpha_aff * dz_aff[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };

        // Corrector direction with centering and Mehrotra correction.
        let r_cent = DVector::from_fn(m, |i, _| {
            w[i] * z[i] + dw_aff[i] * dz_aff[i] - sigma * mu
        });
        let Some((dx, dy, dz, dw)) = solve_direction(&r_cent) else {
            break;
        };
        let _ = dx_aff;

        let alpha = 0.99 * step_to_boundary(&w, &dw).min(step_to_boundary(&z, &dz));
        let alpha = alpha.min(1.0);
        if alpha < 1e-11 {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        w += &dw * alpha;

        if z.amax() > 1e13 || w.amax() > 1e13 {
            // Diverging duals certify infeasibility for all practical data.
            let residuals = kkt_residuals(problem, &x, &y, &z, &w);
            return Ok(QpSolution {
                x,
                eq_duals: y,
                ineq_duals: z,
                slacks: w,
                status: QpStatus::Infeasible,
                iterations: iter + 1,
                residuals,
            });
        }
    }

    let residuals = kkt_residuals(problem, &x, &y, &z, &w);
    let mu = w.dot(&z) / m as f64;
    // Complementarity closed but primal residuals stuck: no feasible point.
    let status = if residuals.max() <= 1e-6 * scale {
        QpStatus::Optimal
    } else if mu < 1e-8 * scale
        && residuals.primal_eq.max(residuals.primal_ineq) > 1e-6 * scale
    {
        QpStatus::Infeasible
    } else {
        QpStatus::MaxIterations
    };
    Ok(QpSolution {
        x,
        eq_duals: y,
        ineq_duals: z,
        slacks: w,
        status,
        iterations: MAX_ITERS,
        residuals,
    })
}
