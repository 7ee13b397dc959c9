//! Triangle meshes and the geometric primitives the operators build on.

mod generate;
mod io;

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::{Error, Result};

pub use generate::{
    generate_blob, generate_grid, generate_icosphere, generate_symmetric_blob, generate_torus,
    permuted_copy, BlobOptions,
};
pub use io::{load_mesh, save_mesh, MeshFormat};

pub type Point = Vector3<f64>;

/// A validated, immutable, edge-manifold and consistently oriented triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    name: Option<String>,
}

impl TriangleMesh {
    /// Validates and wraps raw geometry.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            name: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.faces.is_empty() {
            return Err(Error::Topology("mesh has no faces".into()));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Topology(format!(
                    "vertex {i} has non-finite coordinates"
                )));
            }
        }
        let mut used = vec![false; n];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::Topology(format!(
                        "face {fi} references vertex {v} but mesh has {n} vertices"
                    )));
                }
                used[v] = true;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!(
                    "face {fi} is degenerate (repeated vertex)"
                )));
            }
            if self.face_area(fi) <= 0.0 {
                return Err(Error::Topology(format!(
                    "face {fi} is degenerate (zero area)"
                )));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Topology(format!("vertex {v} has no incident face")));
        }

        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if let Some(other) = directed.insert((a, b), fi) {
                    return Err(Error::Topology(format!(
                        "inconsistent winding: edge ({a}, {b}) traversed in the same direction by faces {other} and {fi}"
                    )));
                }
            }
        }
        // With unique directed edges an undirected edge can carry at most two faces.
        // Fan check: every vertex star must be a single fan.
        for (v, faces) in self.vertex_faces().iter().enumerate() {
            if fan_order(self, v, faces).is_none() {
                return Err(Error::Topology(format!(
                    "vertex {v} is non-manifold (star is not a single fan)"
                )));
            }
        }
        Ok(())
    }

    pub fn face_points(&self, f: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized face normal, `(b - a) x (c - a)`; its norm is twice the area.
    pub fn face_normal(&self, f: usize) -> Point {
        let [a, b, c] = self.face_points(f);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_normal(f).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Barycentric lumped areas: one third of every incident face.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let a = self.face_area(fi) / 3.0;
            for &v in f {
                areas[v] += a;
            }
        }
        areas
    }

    /// Area-weighted vertex normals (not normalized).
    pub fn vertex_normals(&self) -> Vec<Point> {
        let mut normals = vec![Point::zeros(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let nf = self.face_normal(fi);
            for &v in f {
                normals[v] += nf;
            }
        }
        normals
    }

    /// Incident faces of every vertex, in face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                out[v].push(fi);
            }
        }
        out
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Sorted neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            out[a].push(b);
            out[b].push(a);
        }
        for l in &mut out {
            l.sort_unstable();
        }
        out
    }

    /// Edges carried by a single face.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<_> = count
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_closed(&self) -> bool {
        self.boundary_edges().is_empty()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Signed enclosed volume via the divergence theorem.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.face_points(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// 64-bit FNV-1a over the canonical little-endian vertex and face bytes.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(&(self.vertices.len() as u64).to_le_bytes());
        h.write(&(self.faces.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.write(&c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &i in f {
                h.write(&(i as u64).to_le_bytes());
            }
        }
        h.finish()
    }

    /// Returns a copy with every vertex position transformed.
    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Result<TriangleMesh> {
        let vertices = self.vertices.iter().map(f).collect();
        let mut out = TriangleMesh::new(vertices, self.faces.clone())?;
        out.name = self.name.clone();
        Ok(out)
    }

    /// Returns a copy with every face's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            name: self.name.clone(),
        }
    }
}

/// Orders the faces around vertex `v` into a fan: each entry is
/// `(face, a, b)` where `(v, a, b)` is the face in counter-clockwise order,
/// and consecutive entries share `b == next.a`. Boundary fans start at the
/// unique face whose `a` edge is not shared. Returns `None` when the star
/// is not a single fan.
pub(crate) fn fan_order(
    mesh: &TriangleMesh,
    v: usize,
    faces: &[usize],
) -> Option<Vec<(usize, usize, usize)>> {
    let corners: Vec<(usize, usize, usize)> = faces
        .iter()
        .map(|&fi| {
            let f = mesh.faces[fi];
            let k = f
                .iter()
                .position(|&x| x == v)
                .expect("incident face contains vertex");
            (fi, f[(k + 1) % 3], f[(k + 2) % 3])
        })
        .collect();
    if corners.is_empty() {
        return None;
    }
    let mut by_a: HashMap<usize, usize> = HashMap::new();
    for (idx, c) in corners.iter().enumerate() {
        if by_a.insert(c.1, idx).is_some() {
            return None;
        }
    }
    let bs: std::collections::HashSet<usize> = corners.iter().map(|c| c.2).collect();
    // Boundary start: corner whose `a` is not any other corner's `b`.
    let starts: Vec<usize> = (0..corners.len())
        .filter(|&i| !bs.contains(&corners[i].1))
        .collect();
    let start = match starts.len() {
        0 => 0,
        1 => starts[0],
        _ => return None,
    };
    let mut order = Vec::with_capacity(corners.len());
    let mut cur = start;
    loop {
        order.push(corners[cur]);
        match by_a.get(&corners[cur].2) {
            Some(&next) if next != start && order.len() < corners.len() => cur = next,
            _ => break,
        }
    }
    (order.len() == corners.len()).then_some(order)
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// An isometric self-map of a mesh recorded as a vertex permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfSymmetry {
    permutation: Vec<usize>,
    orientation: i8,
}

impl SelfSymmetry {
    /// Checks that `permutation` is a bijection that maps faces to faces
    /// (with reversed winding when `orientation == -1`).
    pub fn new(mesh: &TriangleMesh, permutation: Vec<usize>, orientation: i8) -> Result<Self> {
        let n = mesh.num_vertices();
        if permutation.len() != n {
            return Err(Error::Dimension(format!(
                "symmetry has {} entries, mesh has {n} vertices",
                permutation.len()
            )));
        }
        if orientation != 1 && orientation != -1 {
            return Err(Error::Config(format!(
                "orientation must be +1 or -1, got {orientation}"
            )));
        }
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Topology(
                    "symmetry permutation is not a bijection".into(),
                ));
            }
        }
        let sym = SelfSymmetry {
            permutation,
            orientation,
        };
        let faces: std::collections::HashSet<[usize; 3]> =
            mesh.faces.iter().map(|&f| canonical_face(f)).collect();
        for (fi, &f) in mesh.faces.iter().enumerate() {
            let [a, b, c] = f.map(|v| sym.permutation[v]);
            let image = if orientation == 1 {
                [a, b, c]
            } else {
                [a, c, b]
            };
            if !faces.contains(&canonical_face(image)) {
                return Err(Error::Topology(format!(
                    "symmetry maps face {fi} to a non-face (orientation {orientation})"
                )));
            }
        }
        Ok(sym)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn orientation(&self) -> i8 {
        self.orientation
    }

    pub fn apply(&self, v: usize) -> usize {
        self.permutation[v]
    }

    pub fn is_involution(&self) -> bool {
        self.permutation
            .iter()
            .enumerate()
            .all(|(i, &p)| self.permutation[p] == i)
    }
}

/// Rotates a face so its smallest index comes first, keeping winding.
pub(crate) fn canonical_face(f: [usize; 3]) -> [usize; 3] {
    let k = (0..3).min_by_key(|&k| f[k]).unwrap_or(0);
    [f[k], f[(k + 1) % 3], f[(k + 2) % 3]]
}
