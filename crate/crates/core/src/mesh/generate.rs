//! Synthetic test shapes: icospheres, blobs with and without a mirror
//! symmetry, flat grids, tori and relabeled copies.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, SelfSymmetry, TriangleMesh};
use crate::{Error, Result};

const MAX_SUBDIVISIONS: usize = 6;
const MAX_BLOB_VERTICES: usize = 5000;

/// Unit icosphere geometry plus the combinatorial mirror `x -> -x`.
struct SphereMesh {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    mirror: Vec<usize>,
}

fn icosahedron() -> SphereMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let vertices = raw
        .iter()
        .map(|&(x, y, z)| Point::new(x, y, z).normalize())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mirror = vec![1, 0, 3, 2, 4, 5, 6, 7, 10, 11, 8, 9];
    SphereMesh {
        vertices,
        faces,
        mirror,
    }
}

fn subdivide(mesh: SphereMesh) -> SphereMesh {
    let SphereMesh {
        mut vertices,
        faces,
        mut mirror,
    } = mesh;
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
            vertices.len() - 1
        })
    };
    let mut new_faces = Vec::with_capacity(faces.len() * 4);
    let mut edge_mid = Vec::new();
    for &[a, b, c] in &faces {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        edge_mid.push(((a, b), ab));
        edge_mid.push(((b, c), bc));
        edge_mid.push(((c, a), ca));
        new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    let lookup: HashMap<(usize, usize), usize> = edge_mid
        .iter()
        .map(|&((a, b), m)| ((a.min(b), a.max(b)), m))
        .collect();
    mirror.resize(vertices.len(), usize::MAX);
    for (&(a, b), &m) in &lookup {
        let (ta, tb) = (mirror[a], mirror[b]);
        mirror[m] = lookup[&(ta.min(tb), ta.max(tb))];
    }
    SphereMesh {
        vertices,
        faces: new_faces,
        mirror,
    }
}

fn unit_icosphere(subdivisions: usize) -> SphereMesh {
    (0..subdivisions).fold(icosahedron(), |m, _| subdivide(m))
}

/// Closed icosphere with `10 * 4^s + 2` vertices on a sphere of `radius`.
pub fn generate_icosphere(subdivisions: usize, radius: f64) -> Result<TriangleMesh> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::Config(format!(
            "subdivisions must be at most {MAX_SUBDIVISIONS}, got {subdivisions}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let s = unit_icosphere(subdivisions);
    let vertices = s.vertices.iter().map(|v| v * radius).collect();
    Ok(TriangleMesh::new(vertices, s.faces)?.with_name(format!("icosphere_{subdivisions}")))
}

/// Shape parameters of the mirror-symmetric blob.
#[derive(Debug, Clone)]
pub struct BlobOptions {
    /// Icosphere subdivision level of the underlying sphere.
    pub resolution: usize,
    pub bumps: usize,
    pub amplitude_range: (f64, f64),
    pub bump_width: f64,
    /// Axis scaling applied after the radial displacement.
    pub axis_scale: [f64; 3],
}

impl Default for BlobOptions {
    fn default() -> Self {
        BlobOptions {
            resolution: 3,
            bumps: 3,
            amplitude_range: (-0.2, 0.35),
            bump_width: 0.4,
            axis_scale: [1.0, 0.8, 1.3],
        }
    }
}

/// Closed genus-0 blob with an exact bilateral mirror about `x = 0`.
///
/// The radial displacement is a sum of mirrored Gaussian bump pairs with
/// seeded centers, and positions on the `x < 0` half are copied from their
/// mirror partners with the sign of `x` flipped, so every mirrored edge has
/// bit-identical length.
pub fn generate_symmetric_blob(
    seed: u64,
    opts: &BlobOptions,
) -> Result<(TriangleMesh, SelfSymmetry)> {
    let expected = 10 * 4usize.pow(opts.resolution.min(10) as u32) + 2;
    if opts.resolution > 10 || expected > MAX_BLOB_VERTICES {
        return Err(Error::Generation(format!(
            "resolution {} yields {expected} vertices (limit {MAX_BLOB_VERTICES})",
            opts.resolution
        )));
    }
    let sphere = unit_icosphere(opts.resolution);
    let mut last_err = None;
    for attempt in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(attempt),
        );
        match blob_attempt(&sphere, &mut rng, opts, true) {
            Ok(vertices) => {
                let mesh = TriangleMesh::new(vertices, sphere.faces.clone())?
                    .with_name(format!("blob_{seed:04}"));
                let sym = SelfSymmetry::new(&mesh, sphere.mirror.clone(), -1)?;
                return Ok((mesh, sym));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Generation("no attempt made".into())))
}

/// Same construction as [`generate_symmetric_blob`] with unpaired bumps, so
/// the surface has no intrinsic self-symmetry.
pub fn generate_blob(seed: u64, opts: &BlobOptions) -> Result<TriangleMesh> {
    let expected = 10 * 4usize.pow(opts.resolution.min(10) as u32) + 2;
    if opts.resolution > 10 || expected > MAX_BLOB_VERTICES {
        return Err(Error::Generation(format!(
            "resolution {} yields {expected} vertices (limit {MAX_BLOB_VERTICES})",
            opts.resolution
        )));
    }
    let sphere = unit_icosphere(opts.resolution);
    let mut last_err = None;
    for attempt in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            seed.wrapping_mul(0x2545_f491_4f6c_dd1d)
                .wrapping_add(attempt),
        );
        match blob_attempt(&sphere, &mut rng, opts, false) {
            Ok(vertices) => {
                return Ok(TriangleMesh::new(vertices, sphere.faces.clone())?
                    .with_name(format!("ablob_{seed:04}")));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Generation("no attempt made".into())))
}

fn blob_attempt(
    sphere: &SphereMesh,
    rng: &mut ChaCha8Rng,
    opts: &BlobOptions,
    mirrored: bool,
) -> Result<Vec<Point>> {
    let centers: Vec<(Point, f64)> = (0..opts.bumps)
        .map(|_| {
            let c = Point::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let c = if c.norm() < 1e-3 {
                Point::new(0.3, 0.5, 0.8)
            } else {
                c.normalize()
            };
            (
                c,
                rng.gen_range(opts.amplitude_range.0..opts.amplitude_range.1),
            )
        })
        .collect();
    let w2 = 2.0 * opts.bump_width * opts.bump_width;
    let radial = |p: &Point| -> f64 {
        1.0 + centers
            .iter()
            .map(|(c, a)| {
                let g = (-(p - c).norm_squared() / w2).exp();
                if mirrored {
                    let cm = Point::new(-c.x, c.y, c.z);
                    a * (g + (-(p - cm).norm_squared() / w2).exp())
                } else {
                    a * g
                }
            })
            .sum::<f64>()
    };
    let [sx, sy, sz] = opts.axis_scale;
    let mut vertices = vec![Point::zeros(); sphere.vertices.len()];
    for (i, p) in sphere.vertices.iter().enumerate() {
        if mirrored && p.x < 0.0 {
            continue;
        }
        let r = radial(p);
        if r < 0.2 {
            return Err(Error::Generation(format!(
                "radial profile collapses at vertex {i} (r = {r:.3})"
            )));
        }
        let q = Point::new(sx * r * p.x, sy * r * p.y, sz * r * p.z);
        vertices[i] = q;
        if mirrored {
            let m = sphere.mirror[i];
            vertices[m] = Point::new(-q.x, q.y, q.z);
        }
    }
    // Star-shaped surfaces are embedded as long as every face faces away from the origin.
    for (fi, &[a, b, c]) in sphere.faces.iter().enumerate() {
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        let centroid = (vertices[a] + vertices[b] + vertices[c]) / 3.0;
        if n.dot(&centroid) <= 0.0 {
            return Err(Error::Generation(format!(
                "face {fi} folds over (self-intersection risk)"
            )));
        }
    }
    Ok(vertices)
}

/// Flat `nx x ny` vertex grid on `[0, size_x] x [0, size_y]` in the `z = 0`
/// plane, with alternating diagonals so no direction is preferred.
pub fn generate_grid(nx: usize, ny: usize, size_x: f64, size_y: f64) -> Result<TriangleMesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::Config(format!(
            "grid needs at least 2x2 vertices, got {nx}x{ny}"
        )));
    }
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push(Point::new(
                size_x * i as f64 / (nx - 1) as f64,
                size_y * j as f64 / (ny - 1) as f64,
                0.0,
            ));
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, c, d]);
            }
        }
    }
    Ok(TriangleMesh::new(vertices, faces)?.with_name(format!("grid_{nx}x{ny}")))
}

/// Closed genus-1 surface with `n_major * n_minor` vertices. The tube radius
/// varies as `minor * (1 + wobble * cos(u) * sin(2u))`, which leaves no
/// nontrivial isometry when `wobble != 0`.
pub fn generate_torus(
    n_major: usize,
    n_minor: usize,
    major: f64,
    minor: f64,
    wobble: f64,
) -> Result<TriangleMesh> {
    if n_major < 3 || n_minor < 3 {
        return Err(Error::Config(format!(
            "torus needs at least 3x3 samples, got {n_major}x{n_minor}"
        )));
    }
    if !(minor > 0.0 && major > minor * (1.0 + wobble.abs())) || wobble.abs() >= 1.0 {
        return Err(Error::Config(format!(
            "torus radii must satisfy major > minor * (1 + |wobble|) > 0, |wobble| < 1"
        )));
    }
    let tau = std::f64::consts::TAU;
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for a in 0..n_major {
        let u = tau * a as f64 / n_major as f64;
        let r = minor * (1.0 + wobble * u.cos() * (2.0 * u).sin());
        for b in 0..n_minor {
            let v = tau * b as f64 / n_minor as f64;
            let rho = major + r * v.cos();
            vertices.push(Point::new(rho * u.cos(), rho * u.sin(), r * v.sin()));
        }
    }
    let id = |a: usize, b: usize| (a % n_major) * n_minor + (b % n_minor);
    let mut faces = Vec::with_capacity(2 * n_major * n_minor);
    for a in 0..n_major {
        for b in 0..n_minor {
            faces.push([id(a, b), id(a + 1, b), id(a + 1, b + 1)]);
            faces.push([id(a, b), id(a + 1, b + 1), id(a, b + 1)]);
        }
    }
    Ok(TriangleMesh::new(vertices, faces)?.with_name(format!("torus_{n_major}x{n_minor}")))
}

/// Relabels vertices, shuffles the face list and rotates each face's
/// starting corner. Returns the copy and the ground-truth map
/// `original vertex -> copy vertex`.
pub fn permuted_copy(mesh: &TriangleMesh, seed: u64) -> Result<(TriangleMesh, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.num_vertices();
    let mut new_of_old: Vec<usize> = (0..n).collect();
    new_of_old.shuffle(&mut rng);
    let mut vertices = vec![Point::zeros(); n];
    for (old, &new) in new_of_old.iter().enumerate() {
        vertices[new] = mesh.vertices()[old];
    }
    let mut faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .map(|f| {
            let g = f.map(|v| new_of_old[v]);
            let k = rng.gen_range(0..3);
            [g[k], g[(k + 1) % 3], g[(k + 2) % 3]]
        })
        .collect();
    faces.shuffle(&mut rng);
    let name = format!("{}_perm{seed}", mesh.name().unwrap_or("mesh"));
    Ok((
        TriangleMesh::new(vertices, faces)?.with_name(name),
        new_of_old,
    ))
}
