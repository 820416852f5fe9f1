//! Solver-agnostic conic programs.
//!
//! A [`ConeProgram`] minimizes a linear objective subject to affine
//! expressions lying in products of zero, nonnegative, second-order and PSD
//! cones. PSD blocks are stored packed (see [`svec_pack`]). [`solve`] hands
//! the program to the Clarabel interior-point solver.

mod expr;
mod program;
mod solve;

pub use expr::{AffineExpr, ExprMatrix};
pub use program::{Cone, ConeBlock, ConeProgram};
pub use solve::{cone_margins, solve, solve_with, SolveResult, SolveStatus, SolverSettings};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, SYM_TOL};

/// Margin used in place of strict matrix inequalities.
pub const EPS_PSD: f64 = 1e-9;

/// Packed length of an `n × n` symmetric matrix.
pub const fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Scaled symmetric vectorization: upper triangle, column by column, with
/// off-diagonal entries multiplied by √2 so that `⟨M, N⟩ = svec(M)·svec(N)`.
pub fn svec_pack(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !is_symmetric(m, SYM_TOL) {
        return Err(Error::contract("svec_pack needs a symmetric matrix"));
    }
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            out.push(if i == j {
                m[(i, j)]
            } else {
                m[(i, j)] * std::f64::consts::SQRT_2
            });
        }
    }
    Ok(DVector::from_vec(out))
}

pub fn svec_unpack(v: &DVector<f64>, n: usize) -> Result<DMatrix<f64>> {
    if v.len() != svec_len(n) {
        return Err(Error::contract(format!(
            "packed length {} does not match side {n}",
            v.len()
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut idx = 0;
    for j in 0..n {
        for i in 0..=j {
            let val = if i == j {
                v[idx]
            } else {
                v[idx] / std::f64::consts::SQRT_2
            };
            m[(i, j)] = val;
            m[(j, i)] = val;
            idx += 1;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_packs_to_unit_diagonal() {
        let v = svec_pack(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn off_diagonal_gets_sqrt2() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let v = svec_pack(&m).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0 * std::f64::consts::SQRT_2, 3.0]);
    }

    #[test]
    fn asymmetric_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        assert!(svec_pack(&m).is_err());
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(svec_unpack(&DVector::zeros(4), 2).is_err());
    }

    fn sym_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n * n).prop_map(move |v| {
            let m = DMatrix::from_vec(n, n, v);
            &m + m.transpose()
        })
    }

    proptest! {
        #[test]
        fn round_trip_within_one_ulp(m in sym_matrix(5)) {
            let back = svec_unpack(&svec_pack(&m).unwrap(), 5).unwrap();
            // The diagonal is untouched; off-diagonals go through fl(√2·x) and
            // come back within one ulp.
            for i in 0..5 {
                prop_assert_eq!(back[(i, i)], m[(i, i)]);
                for j in 0..5 {
                    prop_assert!((back[(i, j)] - m[(i, j)]).abs() <= f64::EPSILON * m[(i, j)].abs());
                }
            }
        }

        #[test]
        fn inner_product_preserved(a in sym_matrix(4), b in sym_matrix(4)) {
            let lhs = a.component_mul(&b).sum();
            let rhs = svec_pack(&a).unwrap().dot(&svec_pack(&b).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
