//! Point-to-point maps: extraction from `C` and `Q`, orientation vote,
//! geodesic evaluation and the mirror-ambiguity probe.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::fmap::{estimate_c_regularized, loss_iso_c, loss_ortho_c, FmapOptions};
use crate::mesh::{SelfSymmetry, TriangleMesh};
use crate::operators::DivergenceOperator;
use crate::qmap::{complex_spectral_coeffs, estimate_q_regularized, loss_iso_q, loss_ortho_q};
use crate::spectral::{project_real, SpectralData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMethod {
    RowNnC,
    DiracDivQ,
    /// Loaded from a file or given as ground truth.
    External,
}

impl fmt::Display for MapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapMethod::RowNnC => "row_nn_C",
            MapMethod::DiracDivQ => "dirac_div_Q",
            MapMethod::External => "external",
        })
    }
}

impl std::str::FromStr for MapMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row_nn_C" => Ok(MapMethod::RowNnC),
            "dirac_div_Q" => Ok(MapMethod::DiracDivQ),
            "external" => Ok(MapMethod::External),
            other => Err(Error::parse(1, format!("unknown map method {other:?}"))),
        }
    }
}

/// `indices[v]` is the target vertex assigned to source vertex `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointMap {
    pub indices: Vec<usize>,
    pub method: MapMethod,
    /// +1 preserving, -1 reversing, 0 undetermined.
    pub orientation: i8,
}

impl PointMap {
    pub fn new(indices: Vec<usize>, method: MapMethod) -> Self {
        PointMap {
            indices,
            method,
            orientation: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fraction of vertices mapped to `expected[v]`.
    pub fn accuracy(&self, expected: &[usize]) -> f64 {
        let hits = self
            .indices
            .iter()
            .zip(expected)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / expected.len().max(1) as f64
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        out.extend(m.row(i).iter());
    }
    out
}

/// For each row of `query`, the index of the nearest row of `target` in
/// Euclidean distance; ties go to the lowest index.
pub fn nearest_rows(query: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<Vec<usize>> {
    if query.ncols() != target.ncols() {
        return Err(Error::Dimension(format!(
            "query has {} columns, target has {}",
            query.ncols(),
            target.ncols()
        )));
    }
    if target.nrows() == 0 {
        return Err(Error::Dimension("empty target set".into()));
    }
    let d = query.ncols();
    let (q, t) = (row_major(query), row_major(target));
    Ok((0..query.nrows())
        .into_par_iter()
        .map(|i| {
            let x = &q[i * d..(i + 1) * d];
            let mut best = (0, f64::INFINITY);
            for (j, y) in t.chunks_exact(d.max(1)).enumerate().take(target.nrows()) {
                let mut s = 0.0;
                for (a, b) in x.iter().zip(y) {
                    s += (a - b) * (a - b);
                    if s >= best.1 {
                        break;
                    }
                }
                if s < best.1 {
                    best = (j, s);
                }
            }
            best.0
        })
        .collect())
}

/// Rows of `Phi_M C` matched against rows of `Phi_N`.
pub fn p2p_from_c(
    c: &DMatrix<f64>,
    phi_m: &DMatrix<f64>,
    phi_n: &DMatrix<f64>,
) -> Result<PointMap> {
    if phi_m.ncols() != c.nrows() || phi_n.ncols() != c.ncols() {
        return Err(Error::Dimension(format!(
            "C is {}x{}, bases have {} and {} columns",
            c.nrows(),
            c.ncols(),
            phi_m.ncols(),
            phi_n.ncols()
        )));
    }
    Ok(PointMap::new(
        nearest_rows(&(phi_m * c), phi_n)?,
        MapMethod::RowNnC,
    ))
}

/// Dirac matching: rows of `div_M Psi_M` against rows of `div_N (Psi_N Q)`.
pub fn p2p_from_q(
    q: &DMatrix<Complex64>,
    psi_m: &DMatrix<Complex64>,
    psi_n: &DMatrix<Complex64>,
    div_m: &DivergenceOperator,
    div_n: &DivergenceOperator,
) -> Result<PointMap> {
    if psi_m.ncols() != q.ncols() || psi_n.ncols() != q.nrows() {
        return Err(Error::Dimension(format!(
            "Q is {}x{}, bases have {} and {} columns",
            q.nrows(),
            q.ncols(),
            psi_m.ncols(),
            psi_n.ncols()
        )));
    }
    let source = div_m.apply_columns(psi_m);
    let target = div_n.apply_columns(&(psi_n * q));
    Ok(PointMap::new(
        nearest_rows(&source, &target)?,
        MapMethod::DiracDivQ,
    ))
}

/// Votes over source faces whether the image triangles keep the target's
/// outward orientation. Returns +1 or -1 on a 90% majority, else 0.
pub fn orientation_sign(map: &PointMap, source: &TriangleMesh, target: &TriangleMesh) -> i8 {
    if map.indices.len() != source.num_vertices()
        || map.indices.iter().any(|&i| i >= target.num_vertices())
    {
        return 0;
    }
    let normals = target.vertex_normals();
    let tv = target.vertices();
    let (mut agree, mut disagree) = (0usize, 0usize);
    for f in source.faces() {
        let [a, b, c] = f.map(|v| map.indices[v]);
        if a == b || b == c || a == c {
            continue;
        }
        let image = (tv[b] - tv[a]).cross(&(tv[c] - tv[a]));
        let reference = normals[a] + normals[b] + normals[c];
        let s = image.dot(&reference);
        if s > 0.0 {
            agree += 1;
        } else if s < 0.0 {
            disagree += 1;
        }
    }
    let total = agree + disagree;
    if total == 0 {
        0
    } else if agree as f64 >= 0.9 * total as f64 {
        1
    } else if disagree as f64 >= 0.9 * total as f64 {
        -1
    } else {
        0
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn adjacency(mesh: &TriangleMesh) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); mesh.num_vertices()];
    let v = mesh.vertices();
    for (a, b) in mesh.edges() {
        let len = (v[a] - v[b]).norm();
        adj[a].push((b, len));
        adj[b].push((a, len));
    }
    adj
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Edge-graph shortest-path distances from each source to every vertex.
pub fn geodesic_distances(mesh: &TriangleMesh, sources: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n = mesh.num_vertices();
    if let Some(&bad) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::Dimension(format!(
            "source vertex {bad} out of range"
        )));
    }
    let adj = adjacency(mesh);
    let rows: Vec<Vec<f64>> = sources.par_iter().map(|&s| dijkstra(&adj, s)).collect();
    if let Some(row) = rows.first() {
        let unreachable: Vec<usize> = (0..n).filter(|&v| row[v].is_infinite()).collect();
        if !unreachable.is_empty() {
            return Err(Error::Disconnected(unreachable));
        }
    }
    Ok(rows)
}

/// Mean normalized geodesic error and the cumulative error curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean of `d(predicted, true) / sqrt(area)`, times 100.
    pub mean_error: f64,
    pub n_evaluated: usize,
    /// `(threshold, fraction of vertices with error <= threshold)`.
    pub pmf: Vec<(f64, f64)>,
}

pub const PMF_SAMPLES: usize = 100;
pub const PMF_MAX: f64 = 0.25;

pub fn evaluate(
    map: &PointMap,
    ground_truth: &[usize],
    target: &TriangleMesh,
) -> Result<EvalReport> {
    if ground_truth.len() != map.indices.len() {
        return Err(Error::Dimension(format!(
            "ground truth has {} entries, map has {}",
            ground_truth.len(),
            map.indices.len()
        )));
    }
    let n = target.num_vertices();
    if let Some(&bad) = ground_truth.iter().chain(&map.indices).find(|&&i| i >= n) {
        return Err(Error::Dimension(format!("target index {bad} out of range")));
    }
    let mut sources = ground_truth.to_vec();
    sources.sort_unstable();
    sources.dedup();
    let table = geodesic_distances(target, &sources)?;
    let scale = target.total_area().sqrt();
    let errors: Vec<f64> = ground_truth
        .iter()
        .zip(&map.indices)
        .map(|(&t, &p)| {
            let row = sources.binary_search(&t).expect("source present");
            table[row][p] / scale
        })
        .collect();
    let count = errors.len().max(1) as f64;
    let mean_error = 100.0 * errors.iter().sum::<f64>() / count;
    let pmf = (0..PMF_SAMPLES)
        .map(|k| {
            let t = PMF_MAX * k as f64 / (PMF_SAMPLES - 1) as f64;
            (t, errors.iter().filter(|&&e| e <= t).count() as f64 / count)
        })
        .collect();
    Ok(EvalReport {
        mean_error,
        n_evaluated: errors.len(),
        pmf,
    })
}

pub fn write_point_map(path: impl AsRef<Path>, map: &PointMap) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!(
        "#duo-p2p v1 n={} method={} orientation={}\n",
        map.indices.len(),
        map.method,
        map.orientation
    );
    for i in &map.indices {
        text += &format!("{i}\n");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_point_map(path: impl AsRef<Path>) -> Result<PointMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_point_map(&text)
}

pub fn parse_point_map(text: &str) -> Result<PointMap> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty point map"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("#duo-p2p") || tokens.next() != Some("v1") {
        return Err(Error::parse(1, "expected '#duo-p2p v1' header"));
    }
    let (mut n, mut method, mut orientation) = (None, MapMethod::External, 0i8);
    for t in tokens {
        match t.split_once('=') {
            Some(("n", v)) => n = v.parse().ok(),
            Some(("method", v)) => method = v.parse()?,
            Some(("orientation", v)) => {
                orientation = v
                    .parse()
                    .map_err(|_| Error::parse(1, format!("bad orientation {v:?}")))?
            }
            _ => return Err(Error::parse(1, format!("unexpected header token {t:?}"))),
        }
    }
    let n: usize = n.ok_or_else(|| Error::parse(1, "missing n="))?;
    let mut indices = Vec::with_capacity(n);
    for (k, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        indices.push(
            line.parse()
                .map_err(|_| Error::parse(k + 2, format!("bad index {line:?}")))?,
        );
    }
    if indices.len() != n {
        return Err(Error::parse(
            n + 1,
            format!("expected {n} indices, found {}", indices.len()),
        ));
    }
    Ok(PointMap {
        indices,
        method,
        orientation,
    })
}

/// Plain index list, one per line; `#` lines are ignored. Used for ground
/// truth and symmetry files.
pub fn read_index_list(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(k, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::parse(k + 1, format!("bad index {l:?}")))
        })
        .collect()
}

pub fn write_index_list(path: impl AsRef<Path>, indices: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let text: String = indices.iter().map(|i| format!("{i}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The four energies of one `(C, Q)` solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTuple {
    pub ortho: f64,
    pub iso: f64,
    pub q_ortho: f64,
    pub q_iso: f64,
}

impl LossTuple {
    /// Estimates `C` and `Q` from descriptor matrices on both shapes and
    /// evaluates all four energies.
    pub fn evaluate(
        source: &SpectralData,
        target: &SpectralData,
        desc_m: &DMatrix<f64>,
        desc_n: &DMatrix<f64>,
        opts: &FmapOptions,
    ) -> Result<LossTuple> {
        let a_m = project_real(&source.lb, desc_m)?;
        let a_n = project_real(&target.lb, desc_n)?;
        let c = estimate_c_regularized(
            &a_m,
            &a_n,
            &source.lb.eigenvalues,
            &target.lb.eigenvalues,
            opts,
        )?;
        let b_m = complex_spectral_coeffs(&source.conn, &source.gradient, desc_m)?;
        let b_n = complex_spectral_coeffs(&target.conn, &target.gradient, desc_n)?;
        let q = estimate_q_regularized(
            &b_m,
            &b_n,
            &source.conn.eigenvalues,
            &target.conn.eigenvalues,
            opts,
        )?;
        let (lm, ln) = (
            opts.spectrum(&source.lb.eigenvalues),
            opts.spectrum(&target.lb.eigenvalues),
        );
        let (mm, mn) = (
            opts.spectrum(&source.conn.eigenvalues),
            opts.spectrum(&target.conn.eigenvalues),
        );
        Ok(LossTuple {
            ortho: loss_ortho_c(&c.c).0,
            iso: loss_iso_c(&c.c, &lm, &ln)?.0,
            q_ortho: loss_ortho_q(&q.q).0,
            q_iso: loss_iso_q(&q.q, &mm, &mn)?.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbiguityReport {
    pub direct: LossTuple,
    /// Target descriptors composed with the self-symmetry.
    pub mirrored: LossTuple,
    /// Largest relative difference of the intrinsic pair `(L_ortho, L_iso)`.
    pub intrinsic_rel_diff: f64,
    /// `mirrored.q_ortho - direct.q_ortho`.
    pub q_ortho_margin: f64,
}

/// Evaluates the direct solution and the one with target descriptors
/// composed with the target's self-symmetry, after applying `probe` to the
/// base descriptors of both shapes.
pub fn symmetry_ambiguity_probe(
    source: &SpectralData,
    target: &SpectralData,
    base_m: &DMatrix<f64>,
    base_n: &DMatrix<f64>,
    symmetry: &SelfSymmetry,
    probe: &DMatrix<f64>,
    opts: &FmapOptions,
) -> Result<AmbiguityReport> {
    if base_m.ncols() != probe.nrows() || base_n.ncols() != probe.nrows() {
        return Err(Error::Dimension(
            "probe rows must match descriptor dimension".into(),
        ));
    }
    let perm = symmetry.permutation();
    if perm.len() != base_n.nrows() {
        return Err(Error::Dimension(
            "symmetry does not act on the target".into(),
        ));
    }
    let (dm, dn) = (base_m * probe, base_n * probe);
    let dn_t = DMatrix::from_fn(dn.nrows(), dn.ncols(), |i, j| dn[(perm[i], j)]);
    let direct = LossTuple::evaluate(source, target, &dm, &dn, opts)?;
    let mirrored = LossTuple::evaluate(source, target, &dm, &dn_t, opts)?;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    Ok(AmbiguityReport {
        direct,
        mirrored,
        intrinsic_rel_diff: rel(direct.ortho, mirrored.ortho).max(rel(direct.iso, mirrored.iso)),
        q_ortho_margin: mirrored.q_ortho - direct.q_ortho,
    })
}
