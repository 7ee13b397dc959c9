//! Truncated generalized eigenbases, spectral projection and the binary cache.

mod cache;
mod lanczos;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::descriptors::DescriptorSet;
use crate::mesh::TriangleMesh;
use crate::operators::{DivergenceOperator, GradientOperator, MeshOperators};
use crate::sparse::{ComplexSparseOperator, RealSparseOperator, Scalar, SparseMatrix};
use crate::{Error, Result};

pub use cache::{cache_read, cache_read_for, cache_write, CACHE_VERSION};
pub use lanczos::{smallest_eigenpairs, EigenPairs, LanczosOptions};

/// Default Laplace-Beltrami basis size.
pub const DEFAULT_K_C: usize = 50;
/// Default connection-Laplacian basis size.
pub const DEFAULT_K_Q: usize = 20;

/// First `k` generalized eigenpairs of the cotan pencil `(W, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectralBasis {
    /// `n x k`, `M`-orthonormal columns.
    pub phi: DMatrix<f64>,
    /// Nondecreasing eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Lumped mass diagonal.
    pub mass: Vec<f64>,
}

/// First `k` generalized eigenpairs of the connection pencil `(L, M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectralBasis {
    pub psi: DMatrix<Complex64>,
    pub eigenvalues: Vec<f64>,
    pub mass: Vec<f64>,
}

fn normalized(values: &[f64]) -> Vec<f64> {
    let top = values.last().copied().unwrap_or(1.0);
    if top > 0.0 {
        values.iter().map(|v| v / top).collect()
    } else {
        values.to_vec()
    }
}

impl RealSpectralBasis {
    pub fn k(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    /// `lambda / lambda_k`, used inside the commutativity regularizer.
    pub fn normalized_eigenvalues(&self) -> Vec<f64> {
        normalized(&self.eigenvalues)
    }

    /// Leading `k` columns.
    pub fn truncated(&self, k: usize) -> RealSpectralBasis {
        let k = k.min(self.k());
        RealSpectralBasis {
            phi: self.phi.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            mass: self.mass.clone(),
        }
    }
}

impl ComplexSpectralBasis {
    pub fn k(&self) -> usize {
        self.psi.ncols()
    }

    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn normalized_eigenvalues(&self) -> Vec<f64> {
        normalized(&self.eigenvalues)
    }

    pub fn truncated(&self, k: usize) -> ComplexSpectralBasis {
        let k = k.min(self.k());
        ComplexSpectralBasis {
            psi: self.psi.columns(0, k).into_owned(),
            eigenvalues: self.eigenvalues[..k].to_vec(),
            mass: self.mass.clone(),
        }
    }
}

/// Per-vertex keys derived from positions only, so start vectors follow
/// the geometry under vertex relabeling.
pub fn vertex_keys(mesh: &TriangleMesh) -> Vec<u64> {
    mesh.vertices()
        .iter()
        .map(|p| {
            p.iter().fold(0x243f_6a88_85a3_08d3u64, |h, c| {
                (h ^ (c + 0.0).to_bits())
                    .wrapping_mul(0x0100_0000_01b3)
                    .rotate_left(17)
            })
        })
        .collect()
}

fn index_keys(n: usize) -> Vec<u64> {
    (0..n as u64).collect()
}

fn mass_vector(mass: &RealSparseOperator) -> Result<Vec<f64>> {
    if mass.nnz() != mass.rows() || (0..mass.rows()).any(|i| mass.row(i).0 != [i]) {
        return Err(Error::Dimension(
            "mass matrix must be diagonal (lumped)".into(),
        ));
    }
    let d = mass.diagonal();
    if d.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Numerical(
            "mass matrix has a non-positive entry".into(),
        ));
    }
    Ok(d)
}

/// Scales each column so that its largest-magnitude entry is real and
/// positive (ties resolved by lowest index).
pub(crate) fn fix_gauge<T: Scalar>(vectors: &mut DMatrix<T>) {
    for j in 0..vectors.ncols() {
        let mut best = 0;
        let mut best_mod = -1.0;
        for i in 0..vectors.nrows() {
            let m = vectors[(i, j)].modulus();
            if m > best_mod {
                best_mod = m;
                best = i;
            }
        }
        if best_mod > 0.0 {
            let z = vectors[(best, j)];
            let phase = z.conjugate() * T::from_real(1.0 / best_mod);
            for i in 0..vectors.nrows() {
                vectors[(i, j)] *= phase;
            }
        }
    }
}

fn solve_pencil<T: Scalar>(
    stiffness: &SparseMatrix<T>,
    mass: &RealSparseOperator,
    k: usize,
    keys: &[u64],
    opts: &LanczosOptions,
) -> Result<(DMatrix<T>, Vec<f64>, Vec<f64>)> {
    let m = mass_vector(mass)?;
    if stiffness.rows() != m.len() {
        return Err(Error::Dimension(format!(
            "stiffness has {} rows, mass has {}",
            stiffness.rows(),
            m.len()
        )));
    }
    let mut pairs = smallest_eigenpairs(stiffness, &m, k, keys, opts)?;
    fix_gauge(&mut pairs.vectors);
    Ok((pairs.vectors, pairs.values, m))
}

/// Smallest `k` eigenpairs of the Laplace-Beltrami pencil.
pub fn eigensolve_lb(
    stiffness: &RealSparseOperator,
    mass: &RealSparseOperator,
    k: usize,
) -> Result<RealSpectralBasis> {
    eigensolve_lb_with(
        stiffness,
        mass,
        k,
        &index_keys(stiffness.rows()),
        &LanczosOptions::default(),
    )
}

pub fn eigensolve_lb_with(
    stiffness: &RealSparseOperator,
    mass: &RealSparseOperator,
    k: usize,
    keys: &[u64],
    opts: &LanczosOptions,
) -> Result<RealSpectralBasis> {
    let (phi, eigenvalues, mass) = solve_pencil(stiffness, mass, k, keys, opts)?;
    Ok(RealSpectralBasis {
        phi,
        eigenvalues,
        mass,
    })
}

/// Smallest `k` eigenpairs of the connection-Laplacian pencil.
pub fn eigensolve_connection(
    connection: &ComplexSparseOperator,
    mass: &RealSparseOperator,
    k: usize,
) -> Result<ComplexSpectralBasis> {
    eigensolve_connection_with(
        connection,
        mass,
        k,
        &index_keys(connection.rows()),
        &LanczosOptions::default(),
    )
}

pub fn eigensolve_connection_with(
    connection: &ComplexSparseOperator,
    mass: &RealSparseOperator,
    k: usize,
    keys: &[u64],
    opts: &LanczosOptions,
) -> Result<ComplexSpectralBasis> {
    let (psi, eigenvalues, mass) = solve_pencil(connection, mass, k, keys, opts)?;
    Ok(ComplexSpectralBasis {
        psi,
        eigenvalues,
        mass,
    })
}

/// Spectral coefficients `Phi^T M D` of the columns of `functions`.
pub fn project_real(basis: &RealSpectralBasis, functions: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if functions.nrows() != basis.n() {
        return Err(Error::Dimension(format!(
            "functions have {} rows, basis has {} vertices",
            functions.nrows(),
            basis.n()
        )));
    }
    let mut md = functions.clone();
    for (i, &m) in basis.mass.iter().enumerate() {
        md.row_mut(i).scale_mut(m);
    }
    Ok(basis.phi.transpose() * md)
}

/// Spectral coefficients `Psi^H M X` of the columns of `fields`.
pub fn project_complex(
    basis: &ComplexSpectralBasis,
    fields: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if fields.nrows() != basis.n() {
        return Err(Error::Dimension(format!(
            "fields have {} rows, basis has {} vertices",
            fields.nrows(),
            basis.n()
        )));
    }
    let mut mx = fields.clone();
    for (i, &m) in basis.mass.iter().enumerate() {
        mx.row_mut(i).scale_mut(m);
    }
    Ok(basis.psi.adjoint() * mx)
}

/// Everything the matching pipeline needs for one mesh, as cached on disk.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub mesh: TriangleMesh,
    pub stiffness: RealSparseOperator,
    pub mass: RealSparseOperator,
    pub connection: ComplexSparseOperator,
    pub gradient: GradientOperator,
    pub lb: RealSpectralBasis,
    pub conn: ComplexSpectralBasis,
    pub wks: Option<DescriptorSet>,
}

impl SpectralData {
    pub fn compute(mesh: &TriangleMesh, k_c: usize, k_q: usize) -> Result<Self> {
        let ops = MeshOperators::build(mesh)?;
        Self::from_operators(mesh, ops, k_c, k_q)
    }

    pub fn from_operators(
        mesh: &TriangleMesh,
        ops: MeshOperators,
        k_c: usize,
        k_q: usize,
    ) -> Result<Self> {
        let keys = vertex_keys(mesh);
        let opts = LanczosOptions::default();
        let lb = eigensolve_lb_with(&ops.stiffness, &ops.mass, k_c, &keys, &opts)?;
        let conn = eigensolve_connection_with(&ops.connection, &ops.mass, k_q, &keys, &opts)?;
        Ok(SpectralData {
            mesh: mesh.clone(),
            stiffness: ops.stiffness,
            mass: ops.mass,
            connection: ops.connection,
            gradient: ops.gradient,
            lb,
            conn,
            wks: None,
        })
    }

    pub fn mass_diagonal(&self) -> &[f64] {
        &self.lb.mass
    }

    pub fn divergence(&self) -> DivergenceOperator {
        crate::operators::divergence_operator(&self.gradient, &self.lb.mass)
    }

    pub fn mesh_hash(&self) -> u64 {
        self.mesh.content_hash()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_icosphere, generate_symmetric_blob, permuted_copy, BlobOptions};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn small_blob() -> TriangleMesh {
        let opts = BlobOptions {
            resolution: 2,
            ..Default::default()
        };
        generate_symmetric_blob(5, &opts).unwrap().0
    }

    /// Eigenvalues of `M^-1/2 K M^-1/2` by a dense Hermitian solve.
    fn dense_reference(k: &DMatrix<f64>, mass: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| s[i] * k[(i, j)] * s[j]);
        let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn dense_reference_complex(k: &DMatrix<Complex64>, mass: &[f64]) -> Vec<f64> {
        let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let a = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * (s[i] * s[j]));
        let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn lb_matches_dense_solver() {
        let m = small_blob();
        assert!(m.num_vertices() <= 500);
        let ops = MeshOperators::build(&m).unwrap();
        let basis = eigensolve_lb(&ops.stiffness, &ops.mass, 20).unwrap();
        let reference = dense_reference(&ops.stiffness.to_dense(), &basis.mass);
        for (a, b) in basis.eigenvalues.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn connection_matches_dense_solver() {
        let m = small_blob();
        let ops = MeshOperators::build(&m).unwrap();
        let basis = eigensolve_connection(&ops.connection, &ops.mass, 12).unwrap();
        let reference = dense_reference_complex(&ops.connection.to_dense(), &basis.mass);
        for (a, b) in basis.eigenvalues.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert!(reference[0] > -1e-10);
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal_with_small_residual() {
        let m = small_blob();
        let ops = MeshOperators::build(&m).unwrap();
        let basis = eigensolve_lb(&ops.stiffness, &ops.mass, 15).unwrap();
        let mut mphi = basis.phi.clone();
        for (i, &w) in basis.mass.iter().enumerate() {
            mphi.row_mut(i).scale_mut(w);
        }
        let gram = basis.phi.transpose() * &mphi;
        assert!((gram - DMatrix::identity(15, 15)).abs().max() <= 1e-10);
        let kphi = ops.stiffness.mul_dense(&basis.phi);
        for j in 0..15 {
            let r = kphi.column(j) - mphi.column(j) * basis.eigenvalues[j];
            assert!(r.norm() <= 1e-8 * (1.0 + basis.eigenvalues[j]));
        }
    }

    #[test]
    fn sphere_multiplicities() {
        let m = generate_icosphere(2, 1.0).unwrap();
        let ops = MeshOperators::build(&m).unwrap();
        let ev = eigensolve_lb(&ops.stiffness, &ops.mass, 16)
            .unwrap()
            .eigenvalues;
        assert!(ev[0].abs() < 1e-8);
        // Groups of 1, 3, 5, 7 close to l(l+1).
        let groups = [(1usize, 4usize, 2.0), (4, 9, 6.0), (9, 16, 12.0)];
        for (a, b, target) in groups {
            let spread = ev[a..b].iter().cloned().fold(f64::MIN, f64::max)
                - ev[a..b].iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 0.02 * target, "group {a}..{b}: {:?}", &ev[a..b]);
            assert!((ev[a] - target).abs() < 0.1 * target);
            if b < 16 {
                assert!(ev[b] - ev[b - 1] > 0.2 * target);
            }
        }
    }

    #[test]
    fn truncation_is_consistent() {
        let m = small_blob();
        let ops = MeshOperators::build(&m).unwrap();
        let a = eigensolve_lb(&ops.stiffness, &ops.mass, 10).unwrap();
        let b = eigensolve_lb(&ops.stiffness, &ops.mass, 15).unwrap();
        for j in 0..10 {
            assert!((a.eigenvalues[j] - b.eigenvalues[j]).abs() <= 1e-9 * (1.0 + a.eigenvalues[j]));
        }
        let t = b.truncated(10);
        assert_eq!(t.k(), 10);
        assert_eq!(t.eigenvalues, b.eigenvalues[..10].to_vec());
    }

    #[test]
    fn eigenvalues_sorted_and_nonnegative() {
        let m = small_blob();
        let d = SpectralData::compute(&m, 20, 10).unwrap();
        for ev in [&d.lb.eigenvalues, &d.conn.eigenvalues] {
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
            assert!(ev[0] >= -1e-10);
        }
    }

    #[test]
    fn gauge_fixed_columns_peak_real_positive() {
        let m = small_blob();
        let d = SpectralData::compute(&m, 8, 8).unwrap();
        for j in 0..8 {
            let col = d.conn.psi.column(j);
            let peak = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let first = col.iter().find(|z| z.norm() == peak).unwrap();
            assert!(first.im.abs() <= 1e-14 && first.re > 0.0);
        }
    }

    #[test]
    fn projection_of_basis_is_identity() {
        let m = small_blob();
        let d = SpectralData::compute(&m, 12, 6).unwrap();
        let c = project_real(&d.lb, &d.lb.phi).unwrap();
        assert!((c - DMatrix::identity(12, 12)).abs().max() < 1e-10);
        let q = project_complex(&d.conn, &d.conn.psi).unwrap();
        assert!((q - DMatrix::identity(6, 6)).map(|z| z.norm()).max() < 1e-10);
        assert!(matches!(
            project_real(&d.lb, &DMatrix::zeros(3, 1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rejects_non_diagonal_mass() {
        let m = small_blob();
        let ops = MeshOperators::build(&m).unwrap();
        let err = eigensolve_lb(&ops.stiffness, &ops.stiffness, 4);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn relabeling_permutes_eigenvectors() {
        let m = small_blob();
        let (p, new_of_old) = permuted_copy(&m, 4).unwrap();
        let a = SpectralData::compute(&m, 10, 6).unwrap();
        let b = SpectralData::compute(&p, 10, 6).unwrap();
        for j in 0..10 {
            assert!((a.lb.eigenvalues[j] - b.lb.eigenvalues[j]).abs() <= 1e-9);
        }
        // Simple eigenvalues: columns agree up to sign after relabeling.
        for j in 1..10 {
            let gap_lo = a.lb.eigenvalues[j] - a.lb.eigenvalues[j - 1];
            let gap_hi =
                a.lb.eigenvalues
                    .get(j + 1)
                    .map_or(1.0, |e| e - a.lb.eigenvalues[j]);
            if gap_lo.min(gap_hi) < 1e-3 * a.lb.eigenvalues[j] {
                continue;
            }
            let dot: f64 = (0..m.num_vertices())
                .map(|v| a.lb.phi[(v, j)] * b.lb.phi[(new_of_old[v], j)] * a.lb.mass[v])
                .sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "column {j}: {dot}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn quadratic_forms_nonnegative(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let m = small_blob();
            let ops = MeshOperators::build(&m).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = m.num_vertices();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let wf = ops.stiffness.mul_vec(&f);
            let ef: f64 = f.iter().zip(&wf).map(|(a, b)| a * b).sum();
            let lx = ops.connection.mul_vec(&x);
            let ex: Complex64 = x.iter().zip(&lx).map(|(a, b)| a.conj() * b).sum();
            prop_assert!(ef >= -1e-12);
            prop_assert!(ex.re >= -1e-12 && ex.im.abs() <= 1e-10 * (1.0 + ex.re));
        }
    }
}
