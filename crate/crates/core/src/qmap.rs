//! Complex functional maps between connection-Laplacian eigenbases.
//!
//! `Q` is `k_N x k_M` and consumes source coefficients: `Q B_M ≈ B_N`.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dense::pseudo_inverse;
use crate::fmap::{
    check_pair, header_value, penalty_rows, rank_warning, solve_rows, split_header, FmapOptions,
    FunctionalMap,
};
use crate::operators::GradientOperator;
use crate::spectral::{project_complex, ComplexSpectralBasis, RealSpectralBasis, SpectralData};
use crate::{Error, Result};

const PINV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFunctionalMap {
    pub q: DMatrix<Complex64>,
    pub lambda: f64,
    pub rank_warning: Option<String>,
}

/// `B = Psi^H M (G D)`: spectral coefficients of descriptor gradients.
pub fn complex_spectral_coeffs(
    basis: &ComplexSpectralBasis,
    gradient: &GradientOperator,
    descriptors: &DMatrix<f64>,
) -> Result<DMatrix<Complex64>> {
    if gradient.matrix().cols() != descriptors.nrows() {
        return Err(Error::Dimension(format!(
            "gradient acts on {} vertices, descriptors have {} rows",
            gradient.matrix().cols(),
            descriptors.nrows()
        )));
    }
    project_complex(basis, &gradient.apply_columns(descriptors))
}

/// Complex least squares `Q = B_N pinv(B_M)`.
pub fn estimate_q_plain(
    b_m: &DMatrix<Complex64>,
    b_n: &DMatrix<Complex64>,
) -> Result<ComplexFunctionalMap> {
    check_pair(b_m, b_n)?;
    let (pinv, rank) = pseudo_inverse(b_m, PINV_TOL);
    Ok(ComplexFunctionalMap {
        q: b_n * pinv,
        lambda: 0.0,
        rank_warning: rank_warning(b_m.nrows(), b_m.ncols(), rank),
    })
}

/// Descriptor-gradient preservation plus commutativity with the connection
/// Laplacians, solved exactly row by row.
pub fn estimate_q_regularized(
    b_m: &DMatrix<Complex64>,
    b_n: &DMatrix<Complex64>,
    mu_m: &[f64],
    mu_n: &[f64],
    opts: &FmapOptions,
) -> Result<ComplexFunctionalMap> {
    opts.validate()?;
    check_pair(b_m, b_n)?;
    if mu_m.len() != b_m.nrows() || mu_n.len() != b_n.nrows() {
        return Err(Error::Dimension(format!(
            "spectra of length {}/{} for coefficient rows {}/{}",
            mu_m.len(),
            mu_n.len(),
            b_m.nrows(),
            b_n.nrows()
        )));
    }
    let (sm, sn) = (opts.spectrum(mu_m), opts.spectrum(mu_n));
    let gram = b_m * b_m.adjoint();
    let rhs = b_m * b_n.adjoint();
    // rows of the solve are q_i^H
    let q = solve_rows(&gram, &rhs, opts.lambda, &penalty_rows(&sn, &sm))?.map(|z| z.conj());
    let (_, rank) = pseudo_inverse(b_m, PINV_TOL);
    Ok(ComplexFunctionalMap {
        q,
        lambda: opts.lambda,
        rank_warning: rank_warning(b_m.nrows(), b_m.ncols(), rank),
    })
}

/// `||Q^H Q - I||_F^2` and its co-gradient `2 Q (Q^H Q - I)` with respect to
/// `conj(Q)`. The gradient over real and imaginary parts is twice this.
pub fn loss_ortho_q(q: &DMatrix<Complex64>) -> (f64, DMatrix<Complex64>) {
    let mut e = q.adjoint() * q;
    for i in 0..e.nrows() {
        e[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    let value = e.iter().map(|z| z.norm_sqr()).sum();
    (value, q * e * Complex64::new(2.0, 0.0))
}

/// `sum_ij (mu_M[j] - mu_N[i])^2 |Q_ij|^2` and its co-gradient. Spectra are
/// used as given.
pub fn loss_iso_q(
    q: &DMatrix<Complex64>,
    mu_m: &[f64],
    mu_n: &[f64],
) -> Result<(f64, DMatrix<Complex64>)> {
    if mu_n.len() != q.nrows() || mu_m.len() != q.ncols() {
        return Err(Error::Dimension("spectra do not match map shape".into()));
    }
    let w = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| (mu_m[j] - mu_n[i]).powi(2));
    let value = q.zip_map(&w, |z, w| w * z.norm_sqr()).sum();
    Ok((value, q.zip_map(&w, |z, w| z * w)))
}

/// Bases and operators of one shape needed by the pushforward check.
#[derive(Debug, Clone, Copy)]
pub struct ShapeView<'a> {
    pub lb: &'a RealSpectralBasis,
    pub conn: &'a ComplexSpectralBasis,
    pub gradient: &'a GradientOperator,
}

impl<'a> ShapeView<'a> {
    pub fn of(data: &'a SpectralData) -> Self {
        ShapeView {
            lb: &data.lb,
            conn: &data.conn,
            gradient: &data.gradient,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardReport {
    pub max_residual: f64,
    pub mean_residual: f64,
    /// Per-probe normalized residuals.
    pub residuals: Vec<f64>,
    /// `L_Q-ortho(Q)`, near zero only for orientation-preserving isometries.
    pub q_ortho: f64,
}

/// Residual of `<X, grad(C f)>_M = <Q X, grad f>_N` for paired probe
/// columns `f` (functions on N) and `X` (fields on M). Each residual is
/// normalized by the larger of the two sides' Cauchy-Schwarz bounds.
pub fn verify_pushforward_relation(
    c: &FunctionalMap,
    q: &ComplexFunctionalMap,
    source: ShapeView<'_>,
    target: ShapeView<'_>,
    functions: &DMatrix<f64>,
    fields: &DMatrix<Complex64>,
) -> Result<PushforwardReport> {
    let (n_m, n_n) = (source.lb.n(), target.lb.n());
    if c.c.nrows() != source.lb.k() || c.c.ncols() != target.lb.k() {
        return Err(Error::Dimension(
            "C does not match the Laplace-Beltrami bases".into(),
        ));
    }
    if q.q.nrows() != target.conn.k() || q.q.ncols() != source.conn.k() {
        return Err(Error::Dimension(
            "Q does not match the connection bases".into(),
        ));
    }
    if functions.nrows() != n_n || fields.nrows() != n_m || functions.ncols() != fields.ncols() {
        return Err(Error::Dimension(
            "probe functions and fields must pair up column by column".into(),
        ));
    }

    let (mass_m, mass_n) = (&source.lb.mass, &target.lb.mass);
    let coeffs = crate::spectral::project_real(target.lb, functions)?;
    let pulled = &source.lb.phi * (&c.c * coeffs);
    let field_coeffs = project_complex(source.conn, fields)?;
    let pushed = &target.conn.psi * (&q.q * field_coeffs);

    let grad_pulled = source.gradient.apply_columns(&pulled);
    let grad_f = target.gradient.apply_columns(functions);

    let inner = |mass: &[f64],
                 a: &DMatrix<Complex64>,
                 b: &DMatrix<Complex64>,
                 j: usize|
     -> (f64, f64, f64) {
        let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
        for (i, &m) in mass.iter().enumerate() {
            let (x, y) = (a[(i, j)], b[(i, j)]);
            dot += m * (x.conj() * y).re;
            na += m * x.norm_sqr();
            nb += m * y.norm_sqr();
        }
        (dot, na.sqrt(), nb.sqrt())
    };

    let mut residuals = Vec::with_capacity(functions.ncols());
    for j in 0..functions.ncols() {
        let (lhs, nx, ngc) = inner(mass_m, fields, &grad_pulled, j);
        let (rhs, nqx, ngf) = inner(mass_n, &pushed, &grad_f, j);
        let scale = (nx * ngc).max(nqx * ngf);
        residuals.push(if scale > 0.0 {
            (lhs - rhs).abs() / scale
        } else {
            0.0
        });
    }
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let mean_residual = residuals.iter().sum::<f64>() / residuals.len().max(1) as f64;
    Ok(PushforwardReport {
        max_residual,
        mean_residual,
        residuals,
        q_ortho: loss_ortho_q(&q.q).0,
    })
}

/// Band-limited probes: Laplace-Beltrami eigenfunctions `2..=min(10, k)` of
/// the target, cycled to `count` columns, and the first `count` connection
/// eigenfields of the source.
pub fn default_probes(
    source: ShapeView<'_>,
    target: ShapeView<'_>,
    count: usize,
) -> (DMatrix<f64>, DMatrix<Complex64>) {
    let hi = target.lb.k().min(10);
    let idx: Vec<usize> = (1..hi).collect();
    let functions = DMatrix::from_fn(target.lb.n(), count, |i, j| {
        target.lb.phi[(i, idx[j % idx.len()])]
    });
    let kq = source.conn.k();
    let fields = DMatrix::from_fn(source.conn.n(), count, |i, j| source.conn.psi[(i, j % kq)]);
    (functions, fields)
}

pub fn write_qmap(path: impl AsRef<Path>, map: &ComplexFunctionalMap) -> Result<()> {
    let path = path.as_ref();
    let (r, c) = map.q.shape();
    let mut buf = format!("#duo-qmap v1 k_n={r} k_m={c} lambda={}\n", map.lambda).into_bytes();
    for i in 0..r {
        for j in 0..c {
            buf.extend_from_slice(&map.q[(i, j)].re.to_le_bytes());
            buf.extend_from_slice(&map.q[(i, j)].im.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_qmap(path: impl AsRef<Path>) -> Result<ComplexFunctionalMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (fields, body) = split_header(&bytes, "#duo-qmap")?;
    let (rows, cols): (usize, usize) =
        (header_value(&fields, "k_n")?, header_value(&fields, "k_m")?);
    let lambda = header_value(&fields, "lambda")?;
    if body.len() != 16 * rows * cols {
        return Err(Error::Corruption(format!(
            "{} has a truncated body",
            path.display()
        )));
    }
    let mut q = DMatrix::zeros(rows, cols);
    for (idx, chunk) in body.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(chunk[8..].try_into().expect("8 bytes"));
        q[(idx / cols, idx % cols)] = Complex64::new(re, im);
    }
    Ok(ComplexFunctionalMap {
        q,
        lambda,
        rank_warning: None,
    })
}
