//! Real functional maps between Laplace-Beltrami eigenbases.
//!
//! `C` is `k_M x k_N` and consumes target coefficients: `C A_N ≈ A_M`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dense::{pseudo_inverse, solve_hermitian};
use crate::sparse::Scalar;
use crate::{Error, Result};

const PINV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FmapOptions {
    /// Weight of the commutativity penalty.
    pub lambda: f64,
    /// Divide each spectrum by its largest eigenvalue before penalizing.
    pub use_normalized_spectra: bool,
}

impl Default for FmapOptions {
    fn default() -> Self {
        FmapOptions {
            lambda: 1e-3,
            use_normalized_spectra: true,
        }
    }
}

impl FmapOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub(crate) fn spectrum(&self, values: &[f64]) -> Vec<f64> {
        if !self.use_normalized_spectra {
            return values.to_vec();
        }
        match values.last() {
            Some(&top) if top > 0.0 => values.iter().map(|v| v / top).collect(),
            _ => values.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    pub c: DMatrix<f64>,
    pub lambda: f64,
    /// Set when the descriptor system was rank deficient or underdetermined.
    pub rank_warning: Option<String>,
}

impl FunctionalMap {
    pub fn k_source(&self) -> usize {
        self.c.nrows()
    }

    pub fn k_target(&self) -> usize {
        self.c.ncols()
    }
}

pub(crate) fn check_pair<T: Scalar>(a_m: &DMatrix<T>, a_n: &DMatrix<T>) -> Result<()> {
    if a_m.ncols() != a_n.ncols() {
        return Err(Error::Dimension(format!(
            "descriptor counts differ: {} vs {}",
            a_m.ncols(),
            a_n.ncols()
        )));
    }
    if a_m.iter().chain(a_n.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "spectral coefficients are not finite".into(),
        ));
    }
    Ok(())
}

pub(crate) fn rank_warning(k: usize, d: usize, rank: usize) -> Option<String> {
    if d < k {
        Some(format!(
            "underdetermined: {d} descriptors for {k} basis functions"
        ))
    } else if rank < k {
        Some(format!("descriptor coefficients have rank {rank} < {k}"))
    } else {
        None
    }
}

/// Minimum-norm least squares `C = A_M pinv(A_N)`.
pub fn estimate_c_plain(a_m: &DMatrix<f64>, a_n: &DMatrix<f64>) -> Result<FunctionalMap> {
    check_pair(a_m, a_n)?;
    let (pinv, rank) = pseudo_inverse(a_n, PINV_TOL);
    Ok(FunctionalMap {
        c: a_m * pinv,
        lambda: 0.0,
        rank_warning: rank_warning(a_n.nrows(), a_n.ncols(), rank),
    })
}

/// Per-row penalty diagonals `(lambda_N[j] - lambda_M[i])^2`.
pub(crate) fn penalty_rows(row_spectrum: &[f64], col_spectrum: &[f64]) -> Vec<Vec<f64>> {
    row_spectrum
        .iter()
        .map(|&r| col_spectrum.iter().map(|&c| (c - r) * (c - r)).collect())
        .collect()
}

/// Row systems `gram + lambda diag(penalty_i)`, shared with the refinement
/// gradient.
pub(crate) fn row_system<T: Scalar>(gram: &DMatrix<T>, lambda: f64, penalty: &[f64]) -> DMatrix<T> {
    let mut k = gram.clone();
    for (j, &p) in penalty.iter().enumerate() {
        k[(j, j)] += T::from_real(lambda * p);
    }
    k
}

/// Solves every row system in parallel. Row `i` of the result solves
/// `(gram + lambda D_i) x = rhs[:, i]`.
pub(crate) fn solve_rows<T: Scalar>(
    gram: &DMatrix<T>,
    rhs: &DMatrix<T>,
    lambda: f64,
    penalties: &[Vec<f64>],
) -> Result<DMatrix<T>> {
    let cols: Vec<Result<DVector<T>>> = penalties
        .par_iter()
        .enumerate()
        .map(|(i, pen)| {
            let k = row_system(gram, lambda, pen);
            solve_hermitian(&k, &rhs.column(i).into_owned()).ok_or(Error::Solve { row: i })
        })
        .collect();
    let mut out = DMatrix::zeros(penalties.len(), gram.nrows());
    for (i, col) in cols.into_iter().enumerate() {
        out.row_mut(i).copy_from(&col?.transpose());
    }
    Ok(out)
}

/// Descriptor preservation plus the Laplacian commutativity penalty,
/// solved exactly row by row.
pub fn estimate_c_regularized(
    a_m: &DMatrix<f64>,
    a_n: &DMatrix<f64>,
    lambda_m: &[f64],
    lambda_n: &[f64],
    opts: &FmapOptions,
) -> Result<FunctionalMap> {
    opts.validate()?;
    check_pair(a_m, a_n)?;
    if lambda_m.len() != a_m.nrows() || lambda_n.len() != a_n.nrows() {
        return Err(Error::Dimension(format!(
            "spectra of length {}/{} for coefficient rows {}/{}",
            lambda_m.len(),
            lambda_n.len(),
            a_m.nrows(),
            a_n.nrows()
        )));
    }
    let (lm, ln) = (opts.spectrum(lambda_m), opts.spectrum(lambda_n));
    let gram = a_n * a_n.transpose();
    let rhs = a_n * a_m.transpose();
    let c = solve_rows(&gram, &rhs, opts.lambda, &penalty_rows(&lm, &ln))?;
    let (_, rank) = pseudo_inverse(a_n, PINV_TOL);
    Ok(FunctionalMap {
        c,
        lambda: opts.lambda,
        rank_warning: rank_warning(a_n.nrows(), a_n.ncols(), rank),
    })
}

/// `||C^T C - I||_F^2` and its gradient `4 C (C^T C - I)`.
pub fn loss_ortho_c(c: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let mut e = c.transpose() * c;
    for i in 0..e.nrows() {
        e[(i, i)] -= 1.0;
    }
    (e.norm_squared(), c * &e * 4.0)
}

/// `sum_ij (lambda_N[j] - lambda_M[i])^2 C_ij^2` and its gradient. Spectra are
/// used as given.
pub fn loss_iso_c(
    c: &DMatrix<f64>,
    lambda_m: &[f64],
    lambda_n: &[f64],
) -> Result<(f64, DMatrix<f64>)> {
    if lambda_m.len() != c.nrows() || lambda_n.len() != c.ncols() {
        return Err(Error::Dimension("spectra do not match map shape".into()));
    }
    let w = DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        (lambda_n[j] - lambda_m[i]).powi(2)
    });
    let value = c.zip_map(&w, |x, w| w * x * x).sum();
    Ok((value, c.zip_map(&w, |x, w| 2.0 * w * x)))
}

pub fn write_fmap(path: impl AsRef<Path>, map: &FunctionalMap) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!(
        "#duo-fmap v1 k_m={} k_n={} lambda={}\n",
        map.c.nrows(),
        map.c.ncols(),
        map.lambda
    )
    .into_bytes();
    for i in 0..map.c.nrows() {
        for j in 0..map.c.ncols() {
            buf.extend_from_slice(&map.c[(i, j)].to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Splits a `#...\n` header of `key=value` tokens from a binary body.
pub(crate) fn split_header<'a>(
    bytes: &'a [u8],
    magic: &str,
) -> Result<(Vec<(String, String)>, &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(1, "missing header line"))?;
    let header =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::parse(1, "header is not utf-8"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(magic) {
        return Err(Error::parse(
            1,
            format!("expected header starting with {magic}"),
        ));
    }
    let fields = tokens
        .filter_map(|t| {
            t.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    Ok((fields, &bytes[nl + 1..]))
}

pub(crate) fn header_value<T: std::str::FromStr>(
    fields: &[(String, String)],
    key: &str,
) -> Result<T> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::parse(1, format!("missing or invalid header field {key}")))
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FunctionalMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (fields, body) = split_header(&bytes, "#duo-fmap")?;
    let (rows, cols): (usize, usize) =
        (header_value(&fields, "k_m")?, header_value(&fields, "k_n")?);
    let lambda = header_value(&fields, "lambda")?;
    if body.len() != 8 * rows * cols {
        return Err(Error::Corruption(format!(
            "{} has a truncated body",
            path.display()
        )));
    }
    let mut c = DMatrix::zeros(rows, cols);
    for (idx, chunk) in body.chunks_exact(8).enumerate() {
        c[(idx / cols, idx % cols)] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok(FunctionalMap {
        c,
        lambda,
        rank_warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_and_scaling() {
        let a = random(6, 12, 1);
        let c = estimate_c_plain(&a, &a).unwrap();
        assert!((c.c.clone() - DMatrix::identity(6, 6)).norm() < 1e-8);
        assert!(c.rank_warning.is_none());
        let half = estimate_c_plain(&a, &(&a * 2.0)).unwrap();
        assert!((half.c - DMatrix::identity(6, 6) * 0.5).norm() < 1e-8);
    }

    #[test]
    fn plain_matches_normal_equations() {
        let (am, an) = (random(6, 12, 2), random(6, 12, 3));
        let c = estimate_c_plain(&am, &an).unwrap().c;
        let oracle = (&am * an.transpose()) * (&an * an.transpose()).try_inverse().unwrap();
        assert!((c - oracle).norm() < 1e-9);
    }

    #[test]
    fn regularized_matches_full_quadratic() {
        let (k, d) = (5, 10);
        let (am, an) = (random(k, d, 4), random(k, d, 5));
        let lm: Vec<f64> = (0..k).map(|i| i as f64 * 0.7).collect();
        let ln: Vec<f64> = (0..k).map(|i| i as f64 * 0.8 + 0.1).collect();
        let opts = FmapOptions {
            lambda: 0.3,
            use_normalized_spectra: false,
        };
        let c = estimate_c_regularized(&am, &an, &lm, &ln, &opts).unwrap().c;
        // k^2 unknowns, vec(C) row-major: x[i*k + j] = C_ij
        let mut h = DMatrix::<f64>::zeros(k * k, k * k);
        let mut g = DVector::<f64>::zeros(k * k);
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let s: f64 = (0..d).map(|t| an[(j, t)] * an[(l, t)]).sum();
                    h[(i * k + j, i * k + l)] += s;
                }
                g[i * k + j] = (0..d).map(|t| am[(i, t)] * an[(j, t)]).sum();
                h[(i * k + j, i * k + j)] += opts.lambda * (ln[j] - lm[i]).powi(2);
            }
        }
        let x = h.lu().solve(&g).unwrap();
        for i in 0..k {
            for j in 0..k {
                assert!((c[(i, j)] - x[i * k + j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_lambda_equals_plain_and_identity_pair() {
        let (am, an) = (random(6, 12, 6), random(6, 12, 7));
        let spec: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let opts = FmapOptions {
            lambda: 0.0,
            ..Default::default()
        };
        let r = estimate_c_regularized(&am, &an, &spec, &spec, &opts)
            .unwrap()
            .c;
        let p = estimate_c_plain(&am, &an).unwrap().c;
        assert!((r - p).norm() < 1e-9);
        let same = estimate_c_regularized(&am, &am, &spec, &spec, &FmapOptions::default())
            .unwrap()
            .c;
        assert!((same - DMatrix::identity(6, 6)).norm() < 1e-6);
    }

    #[test]
    fn ortho_closed_form() {
        let (v, g) = loss_ortho_c(&(DMatrix::identity(3, 3) * 2.0));
        assert!((v - 27.0).abs() < 1e-12);
        assert!((g - DMatrix::identity(3, 3) * 24.0).norm() < 1e-12);
        let (v, g) = loss_ortho_c(&DMatrix::identity(4, 4));
        assert_eq!(v, 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn iso_single_slot() {
        let c = DMatrix::identity(3, 3);
        let (v, _) = loss_iso_c(&c, &[0.0, 1.0, 2.0], &[0.0, 1.0, 2.25]).unwrap();
        assert!((v - 0.0625).abs() < 1e-15);
    }

    fn fd_check(f: impl Fn(&DMatrix<f64>) -> f64, grad: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
        let h = 1e-5;
        let mut fd = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let (mut p, mut m) = (x.clone(), x.clone());
                p[(i, j)] += h;
                m[(i, j)] -= h;
                fd[(i, j)] = (f(&p) - f(&m)) / (2.0 * h);
            }
        }
        (fd - grad).norm() / grad.norm()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = random(6, 6, 8);
        let (_, g) = loss_ortho_c(&c);
        assert!(fd_check(|x| loss_ortho_c(x).0, &g, &c) < 1e-6);
        let lm: Vec<f64> = (0..6).map(|i| i as f64 * 0.3).collect();
        let ln: Vec<f64> = (0..6).map(|i| i as f64 * 0.35).collect();
        let (_, g) = loss_iso_c(&c, &lm, &ln).unwrap();
        assert!(fd_check(|x| loss_iso_c(x, &lm, &ln).unwrap().0, &g, &c) < 1e-6);
    }

    #[test]
    fn fmap_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.fmap");
        let map = FunctionalMap {
            c: random(3, 4, 9),
            lambda: 1e-3,
            rank_warning: None,
        };
        write_fmap(&path, &map).unwrap();
        assert_eq!(read_fmap(&path).unwrap(), map);
    }
}
