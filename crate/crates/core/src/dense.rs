//! Small dense linear-algebra helpers shared by the map estimators.

use nalgebra::{DMatrix, DVector};

use crate::sparse::Scalar;

/// Moore-Penrose pseudoinverse with singular values below `rel_tol * sigma_max`
/// truncated. Returns the pseudoinverse and the numerical rank.
pub fn pseudo_inverse<T: Scalar>(a: &DMatrix<T>, rel_tol: f64) -> (DMatrix<T>, usize) {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let inv = T::from_real(1.0 / s);
            // out += v_k * (1/s) * u_k^H
            for i in 0..out.nrows() {
                let vik = vt[(k, i)].conjugate() * inv;
                for j in 0..out.ncols() {
                    out[(i, j)] += vik * u[(j, k)].conjugate();
                }
            }
        }
    }
    (out, rank)
}

/// Solves a Hermitian positive definite system, falling back to LU when
/// the Cholesky factorization fails.
pub fn solve_hermitian<T: Scalar>(k: &DMatrix<T>, rhs: &DVector<T>) -> Option<DVector<T>> {
    if let Some(ch) = k.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let x = k.clone().lu().solve(rhs)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Frobenius norm for any scalar type.
pub fn frobenius<T: Scalar>(a: &DMatrix<T>) -> f64 {
    a.iter().map(|v| v.modulus_squared()).sum::<f64>().sqrt()
}

/// Mass-weighted inner product `Re sum_i m_i conj(x_i) y_i`.
pub fn mass_inner<T: Scalar>(mass: &[f64], x: &[T], y: &[T]) -> f64 {
    mass.iter()
        .zip(x.iter().zip(y))
        .map(|(&m, (a, b))| m * (a.conjugate() * *b).real())
        .sum()
}

/// Row-major flattening.
pub fn to_row_major<T: Scalar>(a: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn pinv_of_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let (p, rank) = pseudo_inverse(&a, 1e-10);
        assert_eq!(rank, 1);
        let apa = &a * &p * &a;
        assert!((apa - &a).norm() < 1e-12);
    }

    #[test]
    fn complex_pinv_is_left_inverse() {
        let a = DMatrix::from_fn(5, 3, |i, j| {
            Complex64::new(((i * 7 + j * 3) % 5) as f64, (i * j * j) as f64 - 1.0)
        });
        let (p, rank) = pseudo_inverse(&a, 1e-10);
        assert_eq!(rank, 3);
        let id = &p * &a;
        assert!((id - DMatrix::identity(3, 3)).norm() < 1e-10);
    }
}
