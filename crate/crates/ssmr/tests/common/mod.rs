//! Shared oracles and helpers for the integration suites. Everything here is
//! deliberately independent of the library's solution paths: the QP oracle
//! enumerates active sets by brute force and the finite-difference helpers
//! use plain central stencils.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use ssmr::mpc::QpProblem;

/// Random strictly convex QP with a strictly feasible origin.
pub fn random_strictly_convex_qp(
    rng: &mut ChaCha12Rng,
    n: usize,
    m: usize,
    with_eq: bool,
) -> QpProblem {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut hessian = &raw * raw.transpose();
    for i in 0..n {
        hessian[(i, i)] += 0.5 + rng.random_range(0.0..1.0);
    }
    let gradient = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let ineq_matrix = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let ineq_rhs = DVector::from_fn(m, |_, _| rng.random_range(0.2..1.5));
    let (eq_matrix, eq_rhs) = if with_eq && n > 2 {
        let a = DMatrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0));
        (a, DVector::from_fn(1, |_, _| rng.random_range(-0.2..0.2)))
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    QpProblem {
        hessian,
        gradient,
        eq_matrix,
        eq_rhs,
        ineq_matrix,
        ineq_rhs,
    }
}

/// Brute-force active-set enumeration: solves every candidate KKT system and
/// returns the feasible minimizer.
pub fn enumerate_qp(problem: &QpProblem) -> Option<DVector<f64>> {
    let n = problem.vars();
    let p = problem.eq_rhs.len();
    let m = problem.ineq_rhs.len();
    assert!(m <= 16, "enumeration oracle is exponential in m");
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let rows = p + active.len();
        let mut kkt = DMatrix::zeros(n + rows, n + rows);
        kkt.view_mut((0, 0), (n, n)).copy_from(&problem.hessian);
        let mut rhs = DVector::zeros(n + rows);
        rhs.rows_mut(0, n).copy_from(&(-&problem.gradient));
        if p > 0 {
            kkt.view_mut((0, n), (n, p))
                .copy_from(&problem.eq_matrix.transpose());
            kkt.view_mut((n, 0), (p, n)).copy_from(&problem.eq_matrix);
            rhs.rows_mut(n, p).copy_from(&problem.eq_rhs);
        }
        for (row, &c) in active.iter().enumerate() {
            for col in 0..n {
                kkt[(n + p + row, col)] = problem.ineq_matrix[(c, col)];
                kkt[(col, n + p + row)] = problem.ineq_matrix[(c, col)];
            }
            rhs[n + p + row] = problem.ineq_rhs[c];
        }
        let Some(solved) = kkt.lu().solve(&rhs) else {
            continue;
        };
        let x = solved.rows(0, n).into_owned();
        if (0..active.len()).any(|r| solved[n + p + r] < -1e-9) {
            continue;
        }
        let feasible = (0..m).all(|i| {
            problem.ineq_matrix.row(i).transpose().dot(&x) - problem.ineq_rhs[i] <= 1e-9
        });
        if !feasible {
            continue;
        }
        let value = 0.5 * x.dot(&(&problem.hessian * &x)) + problem.gradient.dot(&x);
        if best.as_ref().map(|(_, v)| value < *v).unwrap_or(true) {
            best = Some((x, value));
        }
    }
    best.map(|(x, _)| x)
}

/// Central-difference Jacobian of a vector map.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let fx = f(x);
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        let column = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(i, &column);
    }
    jac
}

/// Worst relative entry deviation between an analytic Jacobian and its
/// finite-difference counterpart, scaled by the matrix magnitude.
pub fn jacobian_rel_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
    let scale = analytic.amax().max(1.0);
    (analytic - fd).amax() / scale
}

/// Deterministic RNG for a named check.
pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
