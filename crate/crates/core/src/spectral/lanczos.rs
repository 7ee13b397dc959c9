//! Shift-invert block Lanczos for the smallest generalized eigenpairs of a
//! Hermitian pencil `(K, M)` with diagonal positive `M`.
//!
//! The Krylov basis is kept `M`-orthonormal with two passes of classical
//! Gram-Schmidt against every stored vector, and Ritz pairs are extracted
//! with the unshifted stiffness `V^H K V`, so eigenvalue accuracy does not
//! depend on the conditioning of the shifted factorization.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::sparse::{LdlFactor, Scalar, SparseMatrix};
use crate::{Error, Result};

/// Eigensolver knobs. Defaults match the pipeline contracts.
#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Factor `K - shift * M`; a slightly negative shift keeps the
    /// factorization positive definite on closed meshes.
    pub shift: f64,
    pub block_size: usize,
    /// Convergence threshold on the relative residual of every pair.
    pub tolerance: f64,
    /// Krylov dimension cap, in multiples of `k`.
    pub max_iterations_factor: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            shift: -1e-8,
            block_size: 8,
            tolerance: 1e-10,
            max_iterations_factor: 50,
        }
    }
}

/// Sorted eigenvalues and `M`-orthonormal eigenvectors (columns).
pub struct EigenPairs<T: Scalar> {
    pub values: Vec<f64>,
    pub vectors: DMatrix<T>,
    pub residuals: Vec<f64>,
    pub krylov_dim: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic start value in `[-1, 1)` for vertex key `key` and column `c`.
pub(crate) fn start_value(key: u64, c: u64) -> f64 {
    let bits = splitmix(key ^ splitmix(c.wrapping_add(0x5151)));
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn m_inner<T: Scalar>(mass: &[f64], x: &[T], y: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..x.len() {
        s += x[i].conjugate() * y[i] * T::from_real(mass[i]);
    }
    s
}

fn m_norm<T: Scalar>(mass: &[f64], x: &[T]) -> f64 {
    m_inner(mass, x, x).real().max(0.0).sqrt()
}

/// The start block is the all-ones vector followed by `block_size - 1`
/// columns seeded per vertex by `keys`; pass geometry-derived keys to make
/// the solve equivariant under vertex relabeling.
///
/// Keeping the constant in its own column matters for Laplacians with a
/// kernel: the shifted inverse scales that direction by `1 / |shift|`, and
/// several start columns with a large constant part would collapse onto it
/// and leave only rounding noise behind.
pub fn smallest_eigenpairs<T: Scalar>(
    stiffness: &SparseMatrix<T>,
    mass: &[f64],
    k: usize,
    keys: &[u64],
    opts: &LanczosOptions,
) -> Result<EigenPairs<T>> {
    let n = stiffness.rows();
    if stiffness.cols() != n || mass.len() != n || keys.len() != n {
        return Err(Error::Dimension(format!(
            "stiffness {}x{}, mass {}, keys {}",
            stiffness.rows(),
            stiffness.cols(),
            mass.len(),
            keys.len()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Dimension(format!(
            "requested {k} eigenpairs of a {n}x{n} pencil"
        )));
    }
    let mass_op =
        SparseMatrix::from_diagonal(&mass.iter().map(|&m| T::from_real(m)).collect::<Vec<_>>());
    let shifted = stiffness.add_scaled(&mass_op, T::from_real(-opts.shift));
    let factor = LdlFactor::new(&shifted)?;
    let k_norm = (0..n)
        .map(|i| stiffness.row(i).1.iter().map(|v| v.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let cap = n.min(opts.max_iterations_factor.max(2) * k);
    let b = opts.block_size.max(1);
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut k_basis: Vec<Vec<T>> = Vec::new();
    let mut h = DMatrix::<T>::zeros(0, 0);
    let mut refill = 0u64;

    let mut block: Vec<Vec<T>> = (0..b as u64)
        .map(|c| {
            keys.iter()
                .map(|&key| {
                    let v = start_value(key, c);
                    T::from_real(if c == 0 { 1.0 } else { v })
                })
                .collect()
        })
        .collect();

    loop {
        let mut added = Vec::new();
        for mut v in block.drain(..) {
            if basis.len() >= cap {
                break;
            }
            let before = m_norm(mass, &v);
            if !(before > 0.0) {
                continue;
            }
            for _ in 0..2 {
                for q in &basis {
                    let c = m_inner(mass, q, &v);
                    for i in 0..n {
                        v[i] -= q[i] * c;
                    }
                }
            }
            let after = m_norm(mass, &v);
            if after <= 1e-10 * before {
                continue;
            }
            let inv = T::from_real(1.0 / after);
            v.iter_mut().for_each(|x| *x *= inv);
            let kv = stiffness.mul_vec(&v);
            let m = basis.len();
            let mut grown = DMatrix::<T>::zeros(m + 1, m + 1);
            grown.view_mut((0, 0), (m, m)).copy_from(&h);
            for (i, q) in basis.iter().enumerate() {
                let hij = (0..n).fold(T::zero(), |s, r| s + q[r].conjugate() * kv[r]);
                grown[(i, m)] = hij;
                grown[(m, i)] = hij.conjugate();
            }
            grown[(m, m)] = T::from_real(
                (0..n)
                    .fold(T::zero(), |s, r| s + v[r].conjugate() * kv[r])
                    .real(),
            );
            h = grown;
            basis.push(v);
            k_basis.push(kv);
            added.push(basis.len() - 1);
        }

        let m = basis.len();
        let exhausted = m >= cap;
        if m >= k + b.min(n - k) || exhausted {
            let pairs = rayleigh_ritz(&basis, &k_basis, &h, mass, k, k_norm)?;
            let converged = pairs
                .residuals
                .iter()
                .filter(|&&r| r <= opts.tolerance)
                .count();
            if converged == k || m == n {
                return Ok(pairs);
            }
            if exhausted {
                return Err(Error::Convergence {
                    iterations: m,
                    converged,
                    requested: k,
                });
            }
        }

        if added.is_empty() {
            // Invariant subspace: continue from fresh deterministic vectors.
            refill += 1;
            block = (0..b as u64)
                .map(|c| {
                    keys.iter()
                        .map(|&key| T::from_real(start_value(key, 1000 * refill + c)))
                        .collect()
                })
                .collect();
        } else {
            block = added
                .iter()
                .map(|&idx| {
                    let mv: Vec<T> = basis[idx]
                        .iter()
                        .zip(mass)
                        .map(|(x, &w)| *x * T::from_real(w))
                        .collect();
                    factor.solve(&mv)
                })
                .collect();
        }
    }
}

fn rayleigh_ritz<T: Scalar>(
    basis: &[Vec<T>],
    k_basis: &[Vec<T>],
    h: &DMatrix<T>,
    mass: &[f64],
    k: usize,
    k_norm: f64,
) -> Result<EigenPairs<T>> {
    let n = mass.len();
    let m = basis.len();
    let hs = (h + h.adjoint()) * T::from_real(0.5);
    let eig = SymmetricEigen::new(hs);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let take = k.min(m);
    let mut vectors = DMatrix::<T>::zeros(n, take);
    let mut values = Vec::with_capacity(take);
    let mut residuals = Vec::with_capacity(take);
    for (c, &idx) in order.iter().take(take).enumerate() {
        let theta = eig.eigenvalues[idx];
        let y = eig.eigenvectors.column(idx);
        let mut x = vec![T::zero(); n];
        let mut kx = vec![T::zero(); n];
        for j in 0..m {
            let yj = y[j];
            for i in 0..n {
                x[i] += basis[j][i] * yj;
                kx[i] += k_basis[j][i] * yj;
            }
        }
        let mut rn = 0.0;
        let mut xn = 0.0;
        for i in 0..n {
            rn += (kx[i] - x[i] * T::from_real(theta * mass[i])).modulus_squared();
            xn += x[i].modulus_squared();
        }
        residuals.push(rn.sqrt() / (k_norm * xn.sqrt()));
        values.push(theta);
        for i in 0..n {
            vectors[(i, c)] = x[i];
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Ritz value".into()));
    }
    Ok(EigenPairs {
        values,
        vectors,
        residuals,
        krylov_dim: m,
    })
}
