//! Ordered multivariate monomial bases and their Jacobians.
//!
//! A [`MultiIndexBasis`] enumerates every monomial of total degree
//! `min_order..=max_order` in `n` variables, in graded-lexicographic order
//! (by total degree, then lexicographically with the first variable
//! dominating). The nonlinear parts of the geometry and reduced-dynamics
//! maps are coefficient matrices over such a basis, so the ordering must be
//! deterministic across runs and platforms. Model files store the exponent
//! list explicitly rather than regenerating it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of monomial exponent tuples for features `x^{min..max}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiIndexBasis {
    n: usize,
    min_order: u32,
    max_order: u32,
    exponents: Vec<Vec<u32>>,
}

/// Builds the monomial basis of all total degrees in `[min_order, max_order]`.
///
/// Tuples are ordered by total degree, then lexicographically with the
/// leading variable carrying the highest weight, e.g. for `n = 2`, degree 2:
/// `(2,0), (1,1), (0,2)`.
pub fn build_basis(n: usize, min_order: u32, max_order: u32) -> Result<MultiIndexBasis> {
    if n == 0 {
        return Err(Error::InvalidInput("basis dimension must be >= 1".into()));
    }
    if min_order < 1 || min_order > max_order {
        return Err(Error::InvalidDegreeRange {
            min_order,
            max_order,
        });
    }
    let mut exponents = Vec::new();
    let mut current = vec![0u32; n];
    for degree in min_order..=max_order {
        push_compositions(degree, 0, &mut current, &mut exponents);
    }
    Ok(MultiIndexBasis {
        n,
        min_order,
        max_order,
        exponents,
    })
}

/// Emits all compositions of `remaining` into slots `idx..n`, largest-first
/// in the leading slot, which yields descending lexicographic order within a
/// degree.
fn push_compositions(
    remaining: u32,
    idx: usize,
    current: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
) {
    if idx == current.len() - 1 {
        current[idx] = remaining;
        out.push(current.clone());
        current[idx] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[idx] = k;
        push_compositions(remaining - k, idx + 1, current, out);
    }
    current[idx] = 0;
}

impl MultiIndexBasis {
    /// Degenerate empty basis used by linear-only models (`n_w = 1` or
    /// `n_r = 1`). Satisfies the count law with zero members.
    pub fn empty(n: usize) -> Self {
        MultiIndexBasis {
            n,
            min_order: 2,
            max_order: 1,
            exponents: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn min_order(&self) -> u32 {
        self.min_order
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Re-checks the structural invariants; used after deserializing a model
    /// file so a corrupted exponent list cannot propagate.
    pub fn validate(&self) -> Result<()> {
        for e in &self.exponents {
            if e.len() != self.n {
                return Err(Error::InvalidInput(format!(
                    "exponent tuple of length {} in a basis of dimension {}",
                    e.len(),
                    self.n
                )));
            }
            let total: u32 = e.iter().sum();
            if total < self.min_order || total > self.max_order {
                return Err(Error::InvalidInput(format!(
                    "exponent tuple of degree {total} outside [{}, {}]",
                    self.min_order, self.max_order
                )));
            }
        }
        for pair in self.exponents.windows(2) {
            if graded_lex_cmp(&pair[0], &pair[1]) != std::cmp::Ordering::Less {
                return Err(Error::InvalidInput(
                    "basis exponents are not strictly graded-lexicographically ordered".into(),
                ));
            }
        }
        Ok(())
    }

    /// Evaluates every monomial at `x`; entry `j` is `prod_i x_i^{e_ji}`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "basis evaluation",
                expected: self.n,
                got: x.len(),
            });
        }
        let mut out = DVector::zeros(self.len());
        for (j, exps) in self.exponents.iter().enumerate() {
            let mut value = 1.0;
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    value *= x[i].powi(e as i32);
                }
            }
            out[j] = value;
        }
        Ok(out)
    }

    /// Analytic Jacobian of [`Self::evaluate`]: entry `(j, i)` is the partial
    /// derivative of monomial `j` with respect to `x_i`.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "basis Jacobian",
                expected: self.n,
                got: x.len(),
            });
        }
        let mut out = DMatrix::zeros(self.len(), self.n);
        for (j, exps) in self.exponents.iter().enumerate() {
            for i in 0..self.n {
                let e_i = exps[i];
                if e_i == 0 {
                    continue;
                }
                let mut value = e_i as f64;
                for (l, &e) in exps.iter().enumerate() {
                    let power = if l == i { e - 1 } else { e };
                    if power > 0 {
                        value *= x[l].powi(power as i32);
                    }
                }
                out[(j, i)] = value;
            }
        }
        Ok(out)
    }

    /// Matrix `M` such that `evaluate(L x) = M * evaluate(x)` for the linear
    /// map `L` (n-by-n). A linear substitution preserves total degree, so `M`
    /// is square over the same basis. Used to move polynomial coefficient
    /// matrices between reduced-coordinate frames.
    pub fn linear_substitution_matrix(&self, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if l.nrows() != self.n || l.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                context: "basis substitution",
                expected: self.n,
                got: l.nrows(),
            });
        }
        let index: BTreeMap<&[u32], usize> = self
            .exponents
            .iter()
            .enumerate()
            .map(|(j, e)| (e.as_slice(), j))
            .collect();
        let mut out = DMatrix::zeros(self.len(), self.len());
        for (j, exps) in self.exponents.iter().enumerate() {
            // Expand prod_i (sum_k L[i,k] x_k)^{e_i} into monomials of x.
            let mut poly: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            poly.insert(vec![0; self.n], 1.0);
            for (i, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
                    for (mono, coeff) in &poly {
                        for k in 0..self.n {
                            let weight = l[(i, k)];
                            if weight == 0.0 {
                                continue;
                            }
                            let mut m = mono.clone();
                            m[k] += 1;
                            *next.entry(m).or_insert(0.0) += coeff * weight;
                        }
                    }
                    poly = next;
                }
            }
            for (mono, coeff) in poly {
                let q = index
                    .get(mono.as_slice())
                    .copied()
                    .expect("substitution preserves total degree");
                out[(j, q)] = coeff;
            }
        }
        Ok(out)
    }
}

fn graded_lex_cmp(a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    // Within a degree the order is descending-lexicographic, so reverse.
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// `C(n + max, n) - C(n + min - 1, n)`: the closed-form basis length.
pub fn basis_count(n: usize, min_order: u32, max_order: u32) -> usize {
    binomial(n + max_order as usize, n) - binomial(n + min_order as usize - 1, n)
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dvec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn quadratic_basis_in_two_vars() {
        let basis = build_basis(2, 2, 2).unwrap();
        assert_eq!(basis.exponents(), &[vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn univariate_powers() {
        let basis = build_basis(1, 2, 3).unwrap();
        assert_eq!(basis.exponents(), &[vec![2], vec![3]]);
    }

    #[test]
    fn six_vars_orders_two_to_three_has_77_terms() {
        let basis = build_basis(6, 2, 3).unwrap();
        assert_eq!(basis.len(), 77);
        assert_eq!(basis_count(6, 2, 3), 77);

        // Independent oracle: odometer enumeration of all tuples with
        // component max <= 3, filtered by total degree.
        let mut count = 0usize;
        let mut tuple = [0u32; 6];
        loop {
            let total: u32 = tuple.iter().sum();
            if (2..=3).contains(&total) {
                count += 1;
            }
            let mut idx = 0;
            loop {
                if idx == 6 {
                    assert_eq!(count, basis.len());
                    return;
                }
                tuple[idx] += 1;
                if tuple[idx] <= 3 {
                    break;
                }
                tuple[idx] = 0;
                idx += 1;
            }
        }
    }

    #[test]
    fn rejects_invalid_degree_ranges() {
        assert!(matches!(
            build_basis(2, 0, 2),
            Err(Error::InvalidDegreeRange { .. })
        ));
        assert!(matches!(
            build_basis(2, 3, 2),
            Err(Error::InvalidDegreeRange { .. })
        ));
    }

    #[test]
    fn count_law_exhaustive() {
        for n in 1..=8 {
            for min in 1..=5u32 {
                for max in min..=5u32 {
                    let basis = build_basis(n, min, max).unwrap();
                    assert_eq!(basis.len(), basis_count(n, min, max), "n={n} {min}..{max}");
                    basis.validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn evaluate_simple_cases() {
        let basis = build_basis(2, 2, 2).unwrap();
        let f = basis.evaluate(&dvec(&[1.0, 2.0])).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 4.0]);

        let z = basis.evaluate(&dvec(&[0.0, 0.0])).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluate_matches_per_term_product_oracle() {
        let basis = build_basis(3, 2, 3).unwrap();
        // 6 quadratic + 10 cubic terms.
        assert_eq!(basis.len(), 16);
        let x = dvec(&[0.5, -1.0, 2.0]);
        let f = basis.evaluate(&x).unwrap();
        for (j, exps) in basis.exponents().iter().enumerate() {
            // Repeated multiplication, no powi.
            let mut expected = 1.0;
            for (i, &e) in exps.iter().enumerate() {
                for _ in 0..e {
                    expected *= x[i];
                }
            }
            assert!(
                (f[j] - expected).abs() <= 1e-14 * expected.abs().max(1.0),
                "term {j}: {} vs {expected}",
                f[j]
            );
        }
    }

    #[test]
    fn jacobian_hand_case() {
        let basis = build_basis(2, 2, 2).unwrap();
        let j = basis.jacobian(&dvec(&[1.0, 2.0])).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 2.0, 1.0, 0.0, 4.0]);
        assert_eq!(j, expected);
    }

    #[test]
    fn jacobian_vanishes_at_origin() {
        let basis = build_basis(3, 2, 4).unwrap();
        let j = basis.jacobian(&dvec(&[0.0, 0.0, 0.0])).unwrap();
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let basis = build_basis(4, 2, 3).unwrap();
        let x = dvec(&[0.3, -0.7, 1.1, 0.4]);
        let jac = basis.jacobian(&x).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (basis.evaluate(&xp).unwrap() - basis.evaluate(&xm).unwrap()) / (2.0 * h);
            for j in 0..basis.len() {
                let denom = jac[(j, i)].abs().max(1.0);
                assert!(
                    (jac[(j, i)] - fd[j]).abs() / denom < 1e-6,
                    "entry ({j},{i}): {} vs fd {}",
                    jac[(j, i)],
                    fd[j]
                );
            }
        }
    }

    #[test]
    fn empty_basis_behaves() {
        let basis = MultiIndexBasis::empty(3);
        assert_eq!(basis.len(), 0);
        let f = basis.evaluate(&dvec(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(f.len(), 0);
        let j = basis.jacobian(&dvec(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!((j.nrows(), j.ncols()), (0, 3));
    }

    #[test]
    fn substitution_swap_is_antidiagonal() {
        let basis = build_basis(2, 2, 2).unwrap();
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = basis.linear_substitution_matrix(&swap).unwrap();
        // (x,y) -> (y,x) maps (x^2, xy, y^2) -> (y^2, xy, x^2).
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m, expected);
    }

    #[test]
    fn substitution_matches_direct_evaluation() {
        let basis = build_basis(3, 2, 3).unwrap();
        let l = DMatrix::from_row_slice(
            3,
            3,
            &[0.9, -0.2, 0.1, 0.3, 1.1, -0.4, -0.5, 0.2, 0.8],
        );
        let m = basis.linear_substitution_matrix(&l).unwrap();
        let x = dvec(&[0.4, -0.3, 0.25]);
        let lhs = basis.evaluate(&(&l * &x)).unwrap();
        let rhs = &m * basis.evaluate(&x).unwrap();
        for j in 0..basis.len() {
            assert!(
                (lhs[j] - rhs[j]).abs() < 1e-12,
                "component {j}: {} vs {}",
                lhs[j],
                rhs[j]
            );
        }
    }

    proptest! {
        #[test]
        fn build_is_deterministic(n in 1usize..6, min in 1u32..4, span in 0u32..3) {
            let a = build_basis(n, min, min + span).unwrap();
            let b = build_basis(n, min, min + span).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn directional_derivative_consistency(
            seed in 0u64..1000,
            n in 2usize..5,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let basis = build_basis(n, 2, 3).unwrap();
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let h = 1e-6;
            let fd = (basis.evaluate(&(&x + &dir * h)).unwrap()
                - basis.evaluate(&(&x - &dir * h)).unwrap())
                / (2.0 * h);
            let analytic = basis.jacobian(&x).unwrap() * &dir;
            let scale = analytic.norm().max(1.0);
            prop_assert!((analytic - fd).norm() / scale < 1e-5);
        }
    }
}
