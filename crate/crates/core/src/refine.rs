//! Unsupervised refinement of a shared linear probe over base descriptors.
//!
//! The objective is `w_ortho L_ortho(C) + w_q_ortho L_Q-ortho(Q)` where `C` and
//! `Q` come from the regularized closed-form estimators applied to the probed
//! descriptors of both shapes. Gradients flow back through the per-row
//! solves with one adjoint solve per row.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::solve_hermitian;
use crate::descriptors::{
    matrix_bytes, normalize_columns, orientation_channel, read_matrix_bytes, wks, WksParams,
};
use crate::fmap::{loss_iso_c, loss_ortho_c, penalty_rows, row_system, FmapOptions};
use crate::qmap::{complex_spectral_coeffs, loss_iso_q, loss_ortho_q};
use crate::sparse::Scalar;
use crate::spectral::{project_real, SpectralData};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub w_ortho: f64,
    pub w_q_ortho: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    pub fmap: FmapOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            w_ortho: 1.0,
            w_q_ortho: 1.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 15,
            seed: 0,
            fmap: FmapOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_ortho >= 0.0 && self.w_q_ortho >= 0.0) {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::Config(
                "adam betas must lie in [0, 1) and eps must be > 0".into(),
            ));
        }
        self.fmap.validate()
    }
}

/// `d x d'` weights applied on the right of the base descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub w: DMatrix<f64>,
}

impl LinearProbe {
    pub fn new(w: DMatrix<f64>) -> Self {
        LinearProbe { w }
    }

    /// Leading `d' x d'` identity padded with zero rows.
    pub fn identity(d: usize, d_out: usize) -> Self {
        LinearProbe {
            w: DMatrix::identity(d, d_out),
        }
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random(d: usize, d_out: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LinearProbe {
            w: DMatrix::from_fn(d, d_out, |_, _| rng.gen_range(-scale..=scale)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Checkpoint: `d`, `d'` as u64 then row-major f64, little-endian.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, matrix_bytes(&self.w)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let w = read_matrix_bytes(&bytes).ok_or_else(|| {
            Error::Corruption(format!("{} is not a probe checkpoint", path.display()))
        })?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Corruption(
                "probe checkpoint holds non-finite weights".into(),
            ));
        }
        Ok(LinearProbe { w })
    }
}

/// Base input for the probe: column-normalized WKS followed by the
/// orientation channel of selected WKS columns.
pub fn probe_input(
    data: &SpectralData,
    params: &WksParams,
    channel_columns: &[usize],
) -> Result<DMatrix<f64>> {
    let mut base = match &data.wks {
        Some(set) if set.wks_params.as_ref() == Some(params) => set.clone(),
        _ => wks(&data.lb, params)?,
    };
    let mass = data.mass_diagonal();
    normalize_columns(&mut base.values, mass);
    if channel_columns.is_empty() {
        return Ok(base.values);
    }
    let channel = orientation_channel(&base, &data.gradient, mass, channel_columns)?;
    Ok(base.concat(&channel)?.values)
}

/// Spectral images of the base descriptors of one shape pair. Because the
/// probe acts linearly, `A = A0 W` and `B = B0 W`, so one pair never touches
/// vertex-sized arrays during optimization.
#[derive(Debug, Clone)]
pub struct PairState {
    pub id: String,
    a0_m: DMatrix<f64>,
    a0_n: DMatrix<f64>,
    b0_m: DMatrix<Complex64>,
    b0_n: DMatrix<Complex64>,
    lambda_m: Vec<f64>,
    lambda_n: Vec<f64>,
    mu_m: Vec<f64>,
    mu_n: Vec<f64>,
}

impl PairState {
    pub fn new(
        id: impl Into<String>,
        source: &SpectralData,
        target: &SpectralData,
        base_m: &DMatrix<f64>,
        base_n: &DMatrix<f64>,
    ) -> Result<Self> {
        if base_m.ncols() != base_n.ncols() {
            return Err(Error::Dimension("base descriptors differ in width".into()));
        }
        Ok(PairState {
            id: id.into(),
            a0_m: project_real(&source.lb, base_m)?,
            a0_n: project_real(&target.lb, base_n)?,
            b0_m: complex_spectral_coeffs(&source.conn, &source.gradient, base_m)?,
            b0_n: complex_spectral_coeffs(&target.conn, &target.gradient, base_n)?,
            lambda_m: source.lb.eigenvalues.clone(),
            lambda_n: target.lb.eigenvalues.clone(),
            mu_m: source.conn.eigenvalues.clone(),
            mu_n: target.conn.eigenvalues.clone(),
        })
    }

    /// Width of the base descriptors, i.e. the probe's input dimension.
    pub fn dim(&self) -> usize {
        self.a0_m.ncols()
    }
}

/// Loss value and its parts. Only the orthogonality terms are optimized;
/// the commutativity terms are monitored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    pub l_final: f64,
    pub l_ortho: f64,
    pub l_q_ortho: f64,
    pub l_iso: f64,
    pub l_q_iso: f64,
}

struct Solved<T: Scalar> {
    map: DMatrix<T>,
    systems: Vec<DMatrix<T>>,
}

/// Row `i` of the result solves `(gram + lambda D_i) x = rhs[:, i]`; the
/// assembled systems are kept for the adjoint pass.
fn solve_rows_keep<T: Scalar>(
    gram: &DMatrix<T>,
    rhs: &DMatrix<T>,
    lambda: f64,
    penalties: &[Vec<f64>],
) -> Result<Solved<T>> {
    let rows: Vec<Result<(DVector<T>, DMatrix<T>)>> = penalties
        .par_iter()
        .enumerate()
        .map(|(i, pen)| {
            let k = row_system(gram, lambda, pen);
            let x =
                solve_hermitian(&k, &rhs.column(i).into_owned()).ok_or(Error::Solve { row: i })?;
            Ok((x, k))
        })
        .collect();
    let mut map = DMatrix::zeros(penalties.len(), gram.nrows());
    let mut systems = Vec::with_capacity(penalties.len());
    for (i, r) in rows.into_iter().enumerate() {
        let (x, k) = r?;
        map.row_mut(i).copy_from(&x.transpose());
        systems.push(k);
    }
    Ok(Solved { map, systems })
}

/// Row `i` of the result is `systems[i]^{-1} g[i, :]^T`, transposed back.
fn adjoint_rows<T: Scalar>(systems: &[DMatrix<T>], g: &DMatrix<T>) -> Result<DMatrix<T>> {
    let rows: Vec<Result<DVector<T>>> = systems
        .par_iter()
        .enumerate()
        .map(|(i, k)| solve_hermitian(k, &g.row(i).transpose()).ok_or(Error::Solve { row: i }))
        .collect();
    let mut out = DMatrix::zeros(g.nrows(), g.ncols());
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).copy_from(&r?.transpose());
    }
    Ok(out)
}

fn evaluate(
    pair: &PairState,
    w: &DMatrix<f64>,
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<(Diagnostics, Option<DMatrix<f64>>)> {
    if w.nrows() != pair.dim() {
        return Err(Error::Dimension(format!(
            "probe has {} rows, descriptors have {} columns",
            w.nrows(),
            pair.dim()
        )));
    }
    let a_m = &pair.a0_m * w;
    let a_n = &pair.a0_n * w;
    if a_m.norm() == 0.0 || a_n.norm() == 0.0 {
        return Err(Error::Rank(
            "probed descriptors are identically zero".into(),
        ));
    }
    let wc = w.map(|x| Complex64::new(x, 0.0));
    let b_m = &pair.b0_m * &wc;
    let b_n = &pair.b0_n * &wc;
    let opts = &cfg.fmap;

    // C side: row i solves (A_N A_N^T + lambda D_i) c_i = A_N a_i
    let (lm, ln) = (opts.spectrum(&pair.lambda_m), opts.spectrum(&pair.lambda_n));
    let c_sol = solve_rows_keep(
        &(&a_n * a_n.transpose()),
        &(&a_n * a_m.transpose()),
        opts.lambda,
        &penalty_rows(&lm, &ln),
    )?;
    let c = &c_sol.map;
    let (l_ortho, g_ortho) = loss_ortho_c(c);
    let l_iso = loss_iso_c(c, &lm, &ln)?.0;

    // Q side: row i solves (B_M B_M^H + lambda D_i) q_i^H = B_M b_i^H
    let (sm, sn) = (opts.spectrum(&pair.mu_m), opts.spectrum(&pair.mu_n));
    let q_sol = solve_rows_keep(
        &(&b_m * b_m.adjoint()),
        &(&b_m * b_n.adjoint()),
        opts.lambda,
        &penalty_rows(&sn, &sm),
    )?;
    let q = q_sol.map.map(|z| z.conj());
    let (l_q_ortho, g_q_ortho) = loss_ortho_q(&q);
    let l_q_iso = loss_iso_q(&q, &sm, &sn)?.0;

    let diag = Diagnostics {
        l_final: cfg.w_ortho * l_ortho + cfg.w_q_ortho * l_q_ortho,
        l_ortho,
        l_q_ortho,
        l_iso,
        l_q_iso,
    };
    if !want_grad {
        return Ok((diag, None));
    }

    let mut grad = DMatrix::zeros(w.nrows(), w.ncols());
    if cfg.w_ortho != 0.0 {
        let v = adjoint_rows(&c_sol.systems, &(g_ortho * cfg.w_ortho))?;
        let vt = v.transpose();
        let grad_a_n = &vt * &a_m - &vt * (c * &a_n) - c.transpose() * (&v * &a_n);
        let grad_a_m = &v * &a_n;
        grad += pair.a0_n.transpose() * grad_a_n + pair.a0_m.transpose() * grad_a_m;
    }
    if cfg.w_q_ortho != 0.0 {
        // columns u_i = H_i^{-1} conj(Gamma_i)^T
        let gamma = g_q_ortho * Complex64::new(cfg.w_q_ortho, 0.0);
        let u = adjoint_rows(&q_sol.systems, &gamma.map(|z| z.conj()))?.transpose();
        let uh = u.adjoint();
        let grad_b_m = &u * &b_n - q.adjoint() * (&uh * &b_m) - &u * (&q * &b_m);
        let grad_b_n = &uh * &b_m;
        let g = pair.b0_m.adjoint() * grad_b_m + pair.b0_n.adjoint() * grad_b_n;
        grad += g.map(|z| 2.0 * z.re);
    }
    Ok((diag, Some(grad)))
}

/// `L_final` and its parts for one pair.
pub fn total_loss(pair: &PairState, w: &DMatrix<f64>, cfg: &TrainConfig) -> Result<Diagnostics> {
    Ok(evaluate(pair, w, cfg, false)?.0)
}

/// Analytic gradient of `L_final` with respect to the probe weights.
pub fn grad_total_loss(
    pair: &PairState,
    w: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<DMatrix<f64>> {
    Ok(evaluate(pair, w, cfg, true)?.1.expect("gradient requested"))
}

pub fn loss_and_grad(
    pair: &PairState,
    w: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<(Diagnostics, DMatrix<f64>)> {
    let (d, g) = evaluate(pair, w, cfg, true)?;
    Ok((d, g.expect("gradient requested")))
}

/// One optimizer step, logged before the update is applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub pair: String,
    pub l_final: f64,
    pub l_ortho: f64,
    pub l_q_ortho: f64,
    pub l_iso: f64,
    pub l_q_iso: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub probe: LinearProbe,
    pub history: Vec<StepRecord>,
}

/// Standard ADAM with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(shape: (usize, usize), cfg: &TrainConfig) -> Self {
        Adam {
            m: DMatrix::zeros(shape.0, shape.1),
            v: DMatrix::zeros(shape.0, shape.1),
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    pub fn step(&mut self, w: &mut DMatrix<f64>, grad: &DMatrix<f64>) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        self.m = &self.m * b1 + grad * (1.0 - b1);
        self.v = &self.v * b2 + grad.map(|g| g * g) * (1.0 - b2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for ((wi, &mi), &vi) in w.iter_mut().zip(self.m.iter()).zip(self.v.iter()) {
            *wi -= self.lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
        }
    }
}

/// ADAM over `epochs` passes, one pair per step, pairs shuffled per epoch by
/// the seeded generator.
pub fn optimize(pairs: &[PairState], init: &LinearProbe, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("refinement needs at least one pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = init.w.clone();
    let mut adam = Adam::new(w.shape(), cfg);
    let mut history = Vec::with_capacity(cfg.epochs * pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &p in &order {
            let step = history.len();
            let (diag, grad) = loss_and_grad(&pairs[p], &w, cfg)?;
            let grad_norm = grad.norm();
            if !diag.l_final.is_finite() || !grad_norm.is_finite() {
                return Err(Error::Divergence { step });
            }
            history.push(StepRecord {
                step,
                pair: pairs[p].id.clone(),
                l_final: diag.l_final,
                l_ortho: diag.l_ortho,
                l_q_ortho: diag.l_q_ortho,
                l_iso: diag.l_iso,
                l_q_iso: diag.l_q_iso,
                grad_norm,
            });
            adam.step(&mut w, &grad);
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Divergence { step });
            }
        }
    }
    Ok(TrainResult {
        probe: LinearProbe::new(w),
        history,
    })
}

/// One JSON object per line.
pub fn write_training_log(path: impl AsRef<Path>, history: &[StepRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in history {
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_lr_sized() {
        let cfg = TrainConfig::default();
        let mut w = DMatrix::from_element(2, 2, 1.0);
        let mut adam = Adam::new((2, 2), &cfg);
        adam.step(
            &mut w,
            &DMatrix::from_row_slice(2, 2, &[3.0, -0.5, 0.0, 1e-3]),
        );
        assert!((w[(0, 0)] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[(0, 1)] - (1.0 + 1e-3)).abs() < 1e-9);
        assert_eq!(w[(1, 0)], 1.0);
    }

    #[test]
    fn probe_checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.bin");
        let p = LinearProbe::random(5, 3, 0.1, 4);
        p.write(&path).unwrap();
        assert_eq!(LinearProbe::read(&path).unwrap(), p);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            w_q_ortho: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    use crate::mesh::{generate_symmetric_blob, permuted_copy, BlobOptions, SelfSymmetry};
    use crate::spectral::SpectralData;

    struct Fixture {
        data: SpectralData,
        sym: SelfSymmetry,
        base: DMatrix<f64>,
    }

    fn fixture() -> Fixture {
        let opts = BlobOptions {
            resolution: 2,
            ..Default::default()
        };
        let (mesh, sym) = generate_symmetric_blob(7, &opts).unwrap();
        let data = SpectralData::compute(&mesh, 16, 8).unwrap();
        let params = WksParams {
            num_energies: 12,
            sigma_scale: 2.0,
        };
        let base = probe_input(&data, &params, &[1, 5, 9]).unwrap();
        Fixture { data, sym, base }
    }

    fn quiet() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            ..Default::default()
        }
    }

    #[test]
    fn identity_pair_has_zero_loss_and_zero_gradient() {
        let f = fixture();
        let pair = PairState::new("self", &f.data, &f.data, &f.base, &f.base).unwrap();
        let w = DMatrix::identity(pair.dim(), pair.dim());
        let (diag, grad) = loss_and_grad(&pair, &w, &quiet()).unwrap();
        assert!(diag.l_final <= 1e-10, "{diag:?}");
        assert!(grad.norm() <= 1e-6, "{}", grad.norm());
    }

    #[test]
    fn zero_probe_is_a_rank_error() {
        let f = fixture();
        let pair = PairState::new("self", &f.data, &f.data, &f.base, &f.base).unwrap();
        let w = DMatrix::zeros(pair.dim(), 4);
        assert!(matches!(
            total_loss(&pair, &w, &quiet()),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn relabeled_target_gives_the_same_loss() {
        let f = fixture();
        let (mesh_p, new_of_old) = permuted_copy(&f.data.mesh, 9).unwrap();
        let data_p = SpectralData::compute(&mesh_p, 16, 8).unwrap();
        let params = WksParams {
            num_energies: 12,
            sigma_scale: 2.0,
        };
        // Channel columns refer to WKS columns, so they survive relabeling.
        let base_p = probe_input(&data_p, &params, &[1, 5, 9]).unwrap();
        for (v, &nv) in new_of_old.iter().enumerate() {
            let diff = (f.base.row(v) - base_p.row(nv)).abs().max();
            assert!(diff <= 1e-8, "vertex {v}: {diff}");
        }
        let w = LinearProbe::random(f.base.ncols(), 6, 0.5, 2).w;
        let same = PairState::new("same", &f.data, &f.data, &f.base, &f.base).unwrap();
        let perm = PairState::new("perm", &f.data, &data_p, &f.base, &base_p).unwrap();
        let a = total_loss(&same, &w, &quiet()).unwrap();
        let b = total_loss(&perm, &w, &quiet()).unwrap();
        assert!(
            (a.l_final - b.l_final).abs() <= 1e-8 * (1.0 + a.l_final),
            "{a:?} {b:?}"
        );
    }

    #[test]
    fn gradient_is_linear_in_the_weights() {
        let f = fixture();
        let target = f.base.clone()
            + DMatrix::from_fn(f.base.nrows(), f.base.ncols(), |i, j| {
                1e-2 * ((i * 7 + j * 3) % 11) as f64
            });
        let pair = PairState::new("p", &f.data, &f.data, &f.base, &target).unwrap();
        let w = LinearProbe::random(pair.dim(), 5, 0.5, 8).w;
        let both = grad_total_loss(&pair, &w, &quiet()).unwrap();
        let c_only = TrainConfig {
            w_q_ortho: 0.0,
            ..quiet()
        };
        let q_only = TrainConfig {
            w_ortho: 0.0,
            ..quiet()
        };
        let gc = grad_total_loss(&pair, &w, &c_only).unwrap();
        let gq = grad_total_loss(&pair, &w, &q_only).unwrap();
        assert!((&gq - (&both - &gc)).abs().max() <= 1e-12 * (1.0 + both.abs().max()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let f = fixture();
        let target = f.base.map(|x| x * (1.0 + 0.05 * x));
        let pair = PairState::new("p", &f.data, &f.data, &f.base, &target).unwrap();
        let w = LinearProbe::random(pair.dim(), 3, 0.5, 1).w;
        let cfg = quiet();
        let g = grad_total_loss(&pair, &w, &cfg).unwrap();
        let h = 1e-6;
        let mut fd = DMatrix::zeros(w.nrows(), w.ncols());
        for i in 0..w.nrows() {
            for j in 0..w.ncols() {
                let mut wp = w.clone();
                wp[(i, j)] += h;
                let mut wm = w.clone();
                wm[(i, j)] -= h;
                let lp = total_loss(&pair, &wp, &cfg).unwrap().l_final;
                let lm = total_loss(&pair, &wm, &cfg).unwrap().l_final;
                fd[(i, j)] = (lp - lm) / (2.0 * h);
            }
        }
        let rel = (&g - &fd).norm() / fd.norm();
        assert!(rel <= 1e-4, "relative error {rel}");
    }

    #[test]
    fn mirror_ambiguity_in_the_loss() {
        // Non-symmetric descriptors, so composing with the mirror changes them.
        let f = fixture();
        let n = f.base.nrows();
        let wks_cols = f.base.ncols() - 2 * 3;
        let mut bump = DMatrix::from_fn(n, wks_cols, |i, j| f.base[(i, j)]);
        let pos = f.data.mesh.vertices();
        for i in 0..n {
            bump[(i, 0)] += 0.3 * (pos[i].x + 0.5 * pos[i].y + 0.2 * pos[i].z);
        }
        let set = crate::descriptors::DescriptorSet::new(
            bump,
            crate::descriptors::DescriptorKind::Refined,
        );
        let mass = f.data.mass_diagonal();
        let chan = orientation_channel(&set, &f.data.gradient, mass, &[1, 5, 9]).unwrap();
        let full = set.concat(&chan).unwrap();
        let base_m = full.values.clone();
        let base_n = full.composed_with(f.sym.permutation()).unwrap().values;

        let direct = PairState::new("d", &f.data, &f.data, &base_m, &base_m).unwrap();
        let swapped = PairState::new("t", &f.data, &f.data, &base_m, &base_n).unwrap();
        let w = LinearProbe::random(base_m.ncols(), 6, 0.5, 3).w;
        let c_only = TrainConfig {
            w_q_ortho: 0.0,
            ..quiet()
        };
        let a = total_loss(&direct, &w, &c_only).unwrap().l_final;
        let b = total_loss(&swapped, &w, &c_only).unwrap().l_final;
        assert!((a - b).abs() <= 1e-8 * (1.0 + a), "{a} vs {b}");
        let a = total_loss(&direct, &w, &quiet()).unwrap().l_q_ortho;
        let b = total_loss(&swapped, &w, &quiet()).unwrap().l_q_ortho;
        assert!(b > a, "direct {a}, mirrored {b}");
    }

    #[test]
    fn training_is_seeded_and_descends() {
        let f = fixture();
        let target = f.base.map(|x| x * (1.0 + 0.05 * x));
        let pair = PairState::new("p", &f.data, &f.data, &f.base, &target).unwrap();
        let d = pair.dim();
        let mut init = LinearProbe::identity(d, d);
        init.w += LinearProbe::random(d, d, 0.05, 5).w;
        let cfg = TrainConfig {
            epochs: 40,
            learning_rate: 2e-3,
            seed: 12,
            ..Default::default()
        };
        let pairs = vec![pair.clone(), pair];
        let a = optimize(&pairs, &init, &cfg).unwrap();
        let b = optimize(&pairs, &init, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.probe, b.probe);
        let losses: Vec<f64> = a.history.iter().map(|r| r.l_final).collect();
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
        assert!(losses.last() <= losses.first());
        assert!(matches!(optimize(&[], &init, &cfg), Err(Error::Config(_))));
    }
}
