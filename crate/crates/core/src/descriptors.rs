//! Wave kernel signatures, the gradient-based orientation channel and
//! linear probes over descriptor matrices.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::operators::GradientOperator;
use crate::spectral::RealSpectralBasis;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Wks,
    Refined,
}

/// Energy grid settings for [`wks`].
#[derive(Debug, Clone, PartialEq)]
pub struct WksParams {
    pub num_energies: usize,
    /// Gaussian width as a multiple of the energy step.
    pub sigma_scale: f64,
}

impl Default for WksParams {
    fn default() -> Self {
        WksParams {
            num_energies: 128,
            sigma_scale: 7.0,
        }
    }
}

impl WksParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_energies < 2 {
            return Err(Error::Config(format!(
                "num_energies must be >= 2, got {}",
                self.num_energies
            )));
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_scale must be positive, got {}",
                self.sigma_scale
            )));
        }
        Ok(())
    }
}

/// Per-vertex descriptor functions, one column per descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub values: DMatrix<f64>,
    pub kind: DescriptorKind,
    /// Energy grid used, for WKS sets.
    pub wks_params: Option<WksParams>,
}

impl DescriptorSet {
    pub fn new(values: DMatrix<f64>, kind: DescriptorKind) -> Self {
        DescriptorSet {
            values,
            kind,
            wks_params: None,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Checks finiteness and that no column has zero `L2(M)` norm.
    pub fn validate(&self, mass: &[f64]) -> Result<()> {
        if mass.len() != self.values.nrows() {
            return Err(Error::Dimension(format!(
                "descriptors have {} rows, mass has {}",
                self.values.nrows(),
                mass.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("descriptor values are not finite".into()));
        }
        for (j, col) in self.values.column_iter().enumerate() {
            let norm: f64 = col.iter().zip(mass).map(|(v, m)| v * v * m).sum();
            if !(norm > 0.0) {
                return Err(Error::Rank(format!(
                    "descriptor column {j} is identically zero"
                )));
            }
        }
        Ok(())
    }

    /// Rows permuted so that row `i` of the result is row `perm[i]` of `self`,
    /// i.e. the descriptors composed with the vertex map `perm`.
    pub fn composed_with(&self, perm: &[usize]) -> Result<DescriptorSet> {
        if perm.len() != self.values.nrows() {
            return Err(Error::Dimension(format!(
                "permutation has {} entries, descriptors have {} rows",
                perm.len(),
                self.values.nrows()
            )));
        }
        let values = DMatrix::from_fn(perm.len(), self.dim(), |i, j| self.values[(perm[i], j)]);
        Ok(DescriptorSet {
            values,
            kind: self.kind,
            wks_params: self.wks_params.clone(),
        })
    }

    /// Column-wise concatenation `[self, other]`.
    pub fn concat(&self, other: &DescriptorSet) -> Result<DescriptorSet> {
        if self.num_vertices() != other.num_vertices() {
            return Err(Error::Dimension(
                "descriptor sets differ in vertex count".into(),
            ));
        }
        let (n, a, b) = (self.num_vertices(), self.dim(), other.dim());
        let values = DMatrix::from_fn(n, a + b, |i, j| {
            if j < a {
                self.values[(i, j)]
            } else {
                other.values[(i, j - a)]
            }
        });
        Ok(DescriptorSet::new(values, self.kind))
    }
}

/// Wave kernel signature over a log-spaced energy grid; the constant mode is
/// skipped.
pub fn wks(basis: &RealSpectralBasis, params: &WksParams) -> Result<DescriptorSet> {
    params.validate()?;
    let k = basis.k();
    if k < 8 {
        return Err(Error::Dimension(format!(
            "WKS needs at least 8 eigenpairs, got {k}"
        )));
    }
    let evals = &basis.eigenvalues[1..];
    if evals.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Spectrum(
            "non-constant modes must have positive eigenvalues".into(),
        ));
    }
    let logs: Vec<f64> = evals.iter().map(|l| l.ln()).collect();
    let (e_min, e_max) = (logs[0], logs[logs.len() - 1]);
    if !(e_max - e_min > 1e-12 * e_max.abs().max(1.0)) {
        return Err(Error::Spectrum(
            "fewer than 2 distinct positive eigenvalues".into(),
        ));
    }
    let ne = params.num_energies;
    let sigma = params.sigma_scale * (e_max - e_min) / ne as f64;
    let (lo, hi) = (e_min + 2.0 * sigma, e_max - 2.0 * sigma);
    if !(hi > lo) {
        return Err(Error::Spectrum(format!(
            "energy range [{lo:.4}, {hi:.4}] is empty; lower sigma_scale or raise k"
        )));
    }

    // coefficient of eigenfunction j at energy e, already divided by C_e
    let mut weights = DMatrix::zeros(logs.len(), ne);
    for e in 0..ne {
        let energy = lo + (hi - lo) * e as f64 / (ne - 1) as f64;
        let g: Vec<f64> = logs
            .iter()
            .map(|l| (-(energy - l).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = g.iter().sum();
        for (j, v) in g.into_iter().enumerate() {
            weights[(j, e)] = v / total;
        }
    }
    let sq = basis.phi.columns(1, k - 1).map(|v| v * v);
    Ok(DescriptorSet {
        values: sq * weights,
        kind: DescriptorKind::Wks,
        wks_params: Some(params.clone()),
    })
}

/// Refined descriptors `base * probe`.
pub fn apply_probe(base: &DescriptorSet, probe: &DMatrix<f64>) -> Result<DescriptorSet> {
    if base.dim() != probe.nrows() {
        return Err(Error::Dimension(format!(
            "descriptor dim {} does not match probe rows {}",
            base.dim(),
            probe.nrows()
        )));
    }
    Ok(DescriptorSet::new(
        &base.values * probe,
        DescriptorKind::Refined,
    ))
}

const PSEUDO_EPS: f64 = 1e-12;

/// Orientation-sensitive channel from a set of tangent fields: the modulus of
/// every field followed by the normalized cross product
/// `Im(conj(g_a) g_b) / (|g_a| |g_b| + eps)` of consecutive fields. The cross
/// terms change sign under an orientation-reversing map; moduli do not.
pub fn orientation_features(fields: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (n, m) = fields.shape();
    let pairs = m.saturating_sub(1);
    let mut out = DMatrix::zeros(n, m + pairs);
    for i in 0..n {
        for a in 0..m {
            out[(i, a)] = fields[(i, a)].norm();
        }
        for a in 0..pairs {
            let (ga, gb) = (fields[(i, a)], fields[(i, a + 1)]);
            out[(i, m + a)] = (ga.conj() * gb).im / (ga.norm() * gb.norm() + PSEUDO_EPS);
        }
    }
    out
}

/// Evenly spaced descriptor columns used for the orientation channel.
pub fn default_channel_columns(d: usize, count: usize) -> Vec<usize> {
    let count = count.min(d).max(1);
    (0..count).map(|i| (2 * i + 1) * d / (2 * count)).collect()
}

/// Scales each column to unit `L2(M)` norm; zero columns are left as is.
pub fn normalize_columns(values: &mut DMatrix<f64>, mass: &[f64]) {
    for mut col in values.column_iter_mut() {
        let norm: f64 = col
            .iter()
            .zip(mass)
            .map(|(v, m)| v * v * m)
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Orientation channel of the selected descriptor columns, with every output
/// column normalized in `L2(M)`.
pub fn orientation_channel(
    descriptors: &DescriptorSet,
    gradient: &GradientOperator,
    mass: &[f64],
    columns: &[usize],
) -> Result<DescriptorSet> {
    if let Some(&bad) = columns.iter().find(|&&c| c >= descriptors.dim()) {
        return Err(Error::Dimension(format!(
            "channel column {bad} out of range"
        )));
    }
    if gradient.matrix().rows() != descriptors.num_vertices()
        || mass.len() != descriptors.num_vertices()
    {
        return Err(Error::Dimension(
            "gradient, mass and descriptors disagree in size".into(),
        ));
    }
    let selected = DMatrix::from_fn(descriptors.num_vertices(), columns.len(), |i, j| {
        descriptors.values[(i, columns[j])]
    });
    let mut values = orientation_features(&gradient.apply_columns(&selected));
    normalize_columns(&mut values, mass);
    Ok(DescriptorSet::new(values, DescriptorKind::Refined))
}

/// Writes `n`, `d` (u64) and row-major f64 values, plus a `.txt` sidecar
/// describing the set.
pub fn write_descriptors(path: impl AsRef<Path>, set: &DescriptorSet) -> Result<()> {
    let path = path.as_ref();
    let (n, d) = set.values.shape();
    let mut buf = Vec::with_capacity(16 + 8 * n * d);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..d {
            buf.extend_from_slice(&set.values[(i, j)].to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;

    let sidecar = path.with_extension("txt");
    let mut f = std::fs::File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let kind = match set.kind {
        DescriptorKind::Wks => "wks",
        DescriptorKind::Refined => "refined",
    };
    let mut text = format!("kind={kind}\nn={n}\nd={d}\n");
    if let Some(p) = &set.wks_params {
        text += &format!(
            "num_energies={}\nsigma_scale={}\n",
            p.num_energies, p.sigma_scale
        );
    }
    f.write_all(text.as_bytes())
        .map_err(|e| Error::io(&sidecar, e))
}

/// Reads the binary part written by [`write_descriptors`].
pub fn read_descriptors(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_matrix_bytes(&bytes)
        .ok_or_else(|| Error::Corruption(format!("{} is not a descriptor file", path.display())))
}

pub(crate) fn read_matrix_bytes(bytes: &[u8]) -> Option<DMatrix<f64>> {
    let word = |i: usize| -> Option<[u8; 8]> { bytes.get(8 * i..8 * i + 8)?.try_into().ok() };
    let rows = u64::from_le_bytes(word(0)?) as usize;
    let cols = u64::from_le_bytes(word(1)?) as usize;
    if bytes.len() != 16 + 8 * rows.checked_mul(cols)? {
        return None;
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = f64::from_le_bytes(word(2 + i * cols + j)?);
        }
    }
    Some(m)
}

pub(crate) fn matrix_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let (r, c) = m.shape();
    let mut buf = Vec::with_capacity(16 + 8 * r * c);
    buf.extend_from_slice(&(r as u64).to_le_bytes());
    buf.extend_from_slice(&(c as u64).to_le_bytes());
    for i in 0..r {
        for j in 0..c {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    buf
}
