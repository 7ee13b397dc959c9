//! Binary spectral cache.
//!
//! Layout (little-endian): magic `DUOF`, format version `u32`, mesh content
//! hash `u64`, then the sections mesh, stiffness, mass, connection, gradient,
//! `Phi`, `lambda`, `Psi`, `mu`, optional WKS, and a trailing CRC32 over all
//! preceding bytes. Sparse operators are stored as sorted `(row, col, value)`
//! triples.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ComplexSpectralBasis, RealSpectralBasis, SpectralData};
use crate::descriptors::{DescriptorKind, DescriptorSet, WksParams};
use crate::mesh::{Point, TriangleMesh};
use crate::operators::GradientOperator;
use crate::sparse::SparseMatrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DUOF";
pub const CACHE_VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn c64(&mut self, v: Complex64) {
        self.f64(v.re);
        self.f64(v.im);
    }
    fn real_sparse(&mut self, m: &SparseMatrix<f64>) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        let t = m.triplets();
        self.u64(t.len() as u64);
        for (i, j, v) in t {
            self.u64(i as u64);
            self.u64(j as u64);
            self.f64(v);
        }
    }
    fn complex_sparse(&mut self, m: &SparseMatrix<Complex64>) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        let t = m.triplets();
        self.u64(t.len() as u64);
        for (i, j, v) in t {
            self.u64(i as u64);
            self.u64(j as u64);
            self.c64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Corruption(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Corruption(format!("size {v} out of range")))
    }
    fn len(&mut self, per_item: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(per_item) > self.buf.len() - self.pos {
            return Err(Error::Corruption(format!(
                "section length {n} exceeds file size"
            )));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
    fn real_sparse(&mut self) -> Result<SparseMatrix<f64>> {
        let (r, c) = (self.usize()?, self.usize()?);
        let nnz = self.len(24)?;
        let mut t = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let (i, j, v) = (self.usize()?, self.usize()?, self.f64()?);
            if i >= r || j >= c {
                return Err(Error::Corruption(format!(
                    "entry ({i}, {j}) outside {r}x{c}"
                )));
            }
            t.push((i, j, v));
        }
        Ok(SparseMatrix::from_triplets(r, c, t))
    }
    fn complex_sparse(&mut self) -> Result<SparseMatrix<Complex64>> {
        let (r, c) = (self.usize()?, self.usize()?);
        let nnz = self.len(32)?;
        let mut t = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let (i, j, v) = (self.usize()?, self.usize()?, self.c64()?);
            if i >= r || j >= c {
                return Err(Error::Corruption(format!(
                    "entry ({i}, {j}) outside {r}x{c}"
                )));
            }
            t.push((i, j, v));
        }
        Ok(SparseMatrix::from_triplets(r, c, t))
    }
}

fn encode(data: &SpectralData) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(CACHE_VERSION);
    w.u64(data.mesh.content_hash());

    let mesh = &data.mesh;
    w.u64(mesh.num_vertices() as u64);
    for p in mesh.vertices() {
        w.f64(p.x);
        w.f64(p.y);
        w.f64(p.z);
    }
    w.u64(mesh.num_faces() as u64);
    for f in mesh.faces() {
        for &v in f {
            w.u64(v as u64);
        }
    }

    w.real_sparse(&data.stiffness);
    w.real_sparse(&data.mass);
    w.complex_sparse(&data.connection);
    w.complex_sparse(data.gradient.matrix());

    let (n, kc) = data.lb.phi.shape();
    w.u64(n as u64);
    w.u64(kc as u64);
    for i in 0..n {
        for j in 0..kc {
            w.f64(data.lb.phi[(i, j)]);
        }
    }
    data.lb.eigenvalues.iter().for_each(|&v| w.f64(v));

    let kq = data.conn.psi.ncols();
    w.u64(kq as u64);
    for i in 0..n {
        for j in 0..kq {
            w.c64(data.conn.psi[(i, j)]);
        }
    }
    data.conn.eigenvalues.iter().for_each(|&v| w.f64(v));

    match &data.wks {
        Some(d) => {
            w.u8(1);
            let p = d.wks_params.clone().unwrap_or_default();
            w.u64(p.num_energies as u64);
            w.f64(p.sigma_scale);
            w.u64(d.values.ncols() as u64);
            for i in 0..n {
                for j in 0..d.values.ncols() {
                    w.f64(d.values[(i, j)]);
                }
            }
        }
        None => w.u8(0),
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

fn decode(bytes: &[u8]) -> Result<SpectralData> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return Err(Error::Corruption("missing DUOF magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Corruption("checksum mismatch".into()));
    }
    if version != CACHE_VERSION {
        return Err(Error::CacheVersion {
            found: version,
            expected: CACHE_VERSION,
        });
    }
    let mut r = Reader { buf: body, pos: 8 };
    let hash = r.u64()?;

    let nv = r.len(24)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        vertices.push(Point::new(r.f64()?, r.f64()?, r.f64()?));
    }
    let nf = r.len(24)?;
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        faces.push([r.usize()?, r.usize()?, r.usize()?]);
    }
    let mesh = TriangleMesh::new(vertices, faces)
        .map_err(|e| Error::Corruption(format!("stored mesh invalid: {e}")))?;
    if mesh.content_hash() != hash {
        return Err(Error::Corruption(
            "stored mesh does not match header hash".into(),
        ));
    }

    let stiffness = r.real_sparse()?;
    let mass = r.real_sparse()?;
    let connection = r.complex_sparse()?;
    let gradient = GradientOperator::from_matrix(r.complex_sparse()?);

    let n = r.usize()?;
    let kc = r.usize()?;
    if n != nv || kc.saturating_mul(n).saturating_mul(8) > body.len() {
        return Err(Error::Corruption(format!(
            "basis shape {n}x{kc} inconsistent"
        )));
    }
    let mut phi = DMatrix::zeros(n, kc);
    for i in 0..n {
        for j in 0..kc {
            phi[(i, j)] = r.f64()?;
        }
    }
    let lambda = (0..kc).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let kq = r.usize()?;
    if kq.saturating_mul(n).saturating_mul(16) > body.len() {
        return Err(Error::Corruption(format!(
            "connection basis size {kq} inconsistent"
        )));
    }
    let mut psi = DMatrix::zeros(n, kq);
    for i in 0..n {
        for j in 0..kq {
            psi[(i, j)] = r.c64()?;
        }
    }
    let mu = (0..kq).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;

    let wks = match r.u8()? {
        0 => None,
        1 => {
            let num_energies = r.usize()?;
            let sigma_scale = r.f64()?;
            let d = r.usize()?;
            if d.saturating_mul(n).saturating_mul(8) > body.len() {
                return Err(Error::Corruption(format!(
                    "descriptor width {d} inconsistent"
                )));
            }
            let mut values = DMatrix::zeros(n, d);
            for i in 0..n {
                for j in 0..d {
                    values[(i, j)] = r.f64()?;
                }
            }
            Some(DescriptorSet {
                values,
                kind: DescriptorKind::Wks,
                wks_params: Some(WksParams {
                    num_energies,
                    sigma_scale,
                }),
            })
        }
        t => return Err(Error::Corruption(format!("unknown descriptor tag {t}"))),
    };
    if r.pos != body.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes",
            body.len() - r.pos
        )));
    }

    let mass_diag = mass.diagonal();
    Ok(SpectralData {
        mesh,
        stiffness,
        mass,
        connection,
        gradient,
        lb: RealSpectralBasis {
            phi,
            eigenvalues: lambda,
            mass: mass_diag.clone(),
        },
        conn: ComplexSpectralBasis {
            psi,
            eigenvalues: mu,
            mass: mass_diag,
        },
        wks,
    })
}

pub fn cache_write(path: impl AsRef<Path>, data: &SpectralData) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(data)).map_err(|e| Error::io(path, e))
}

/// Reads a cache; the embedded mesh is checked against the header hash.
pub fn cache_read(path: impl AsRef<Path>) -> Result<SpectralData> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Reads a cache and checks it was built for `mesh`.
pub fn cache_read_for(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<SpectralData> {
    let data = cache_read(path)?;
    let (found, expected) = (data.mesh.content_hash(), mesh.content_hash());
    if found != expected {
        return Err(Error::HashMismatch { found, expected });
    }
    Ok(data)
}
