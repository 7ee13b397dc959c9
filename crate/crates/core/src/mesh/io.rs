//! OFF, OBJ and ascii PLY readers and writers.

use std::fmt::Write as _;
use std::path::Path;

use super::{Point, TriangleMesh};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
    PlyAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "off" => Ok(MeshFormat::Off),
            "obj" => Ok(MeshFormat::Obj),
            "ply" => Ok(MeshFormat::PlyAscii),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }

    pub fn parse(&self, text: &str) -> Result<TriangleMesh> {
        let (v, f) = match self {
            MeshFormat::Off => parse_off(text)?,
            MeshFormat::Obj => parse_obj(text)?,
            MeshFormat::PlyAscii => parse_ply(text)?,
        };
        TriangleMesh::new(v, f)
    }

    pub fn write(&self, mesh: &TriangleMesh) -> String {
        match self {
            MeshFormat::Off => write_off(mesh),
            MeshFormat::Obj => write_obj(mesh),
            MeshFormat::PlyAscii => write_ply(mesh),
        }
    }
}

/// Loads and validates a mesh. `format` defaults to the file extension.
pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if format == MeshFormat::PlyAscii && is_binary_ply(&bytes) {
        return Err(Error::BinaryPly);
    }
    let text =
        String::from_utf8(bytes).map_err(|_| Error::parse(0, "file is not valid UTF-8 text"))?;
    let mesh = format.parse(&text)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    Ok(mesh.with_name(name))
}

pub fn save_mesh(
    mesh: &TriangleMesh,
    path: impl AsRef<Path>,
    format: Option<MeshFormat>,
) -> Result<()> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    std::fs::write(path, format.write(mesh)).map_err(|e| Error::io(path, e))
}

fn is_binary_ply(bytes: &[u8]) -> bool {
    let head = &bytes[..bytes.len().min(512)];
    let head = String::from_utf8_lossy(head);
    head.lines()
        .any(|l| l.trim_start().starts_with("format binary"))
}

/// Content lines with 1-based numbers, skipping blanks and `#` comments.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::parse(line, "missing coordinate"))?;
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid number '{tok}'")))
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(line, "missing integer"))?;
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid integer '{tok}'")))
}

type RawMesh = (Vec<Point>, Vec<[usize; 3]>);

fn parse_off(text: &str) -> Result<RawMesh> {
    let mut lines = content_lines(text);
    let (l0, first) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let rest = first
        .strip_prefix("OFF")
        .ok_or_else(|| Error::parse(l0, "missing OFF header"))?
        .trim();
    let (lc, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| Error::parse(l0 + 1, "missing element counts"))?
    } else {
        (l0, rest)
    };
    let mut toks = counts.split_whitespace();
    let nv = parse_usize(toks.next(), lc)?;
    let nf = parse_usize(toks.next(), lc)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(lc, "unexpected end of file in vertex list"))?;
        let mut t = l.split_whitespace();
        vertices.push(Point::new(
            parse_f64(t.next(), ln)?,
            parse_f64(t.next(), ln)?,
            parse_f64(t.next(), ln)?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(lc, "unexpected end of file in face list"))?;
        let mut t = l.split_whitespace();
        let k = parse_usize(t.next(), ln)?;
        if k != 3 {
            return Err(Error::parse(
                ln,
                format!("only triangles are supported, got a {k}-gon"),
            ));
        }
        faces.push([
            parse_usize(t.next(), ln)?,
            parse_usize(t.next(), ln)?,
            parse_usize(t.next(), ln)?,
        ]);
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str) -> Result<RawMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut t = l.split_whitespace();
        match t.next() {
            Some("v") => vertices.push(Point::new(
                parse_f64(t.next(), ln)?,
                parse_f64(t.next(), ln)?,
                parse_f64(t.next(), ln)?,
            )),
            Some("f") => {
                let idx: Vec<usize> = t
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head
                            .parse()
                            .map_err(|_| Error::parse(ln, format!("invalid face index '{tok}'")))?;
                        let resolved = if i > 0 {
                            i - 1
                        } else {
                            vertices.len() as i64 + i
                        };
                        if resolved < 0 {
                            return Err(Error::parse(ln, format!("face index {i} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::parse(
                        ln,
                        format!("only triangles are supported, got {} indices", idx.len()),
                    ));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

fn parse_ply(text: &str) -> Result<RawMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "header not terminated by end_header"))?;
        let mut t = l.split_whitespace();
        match t.next() {
            Some("format") => match t.next() {
                Some("ascii") => {}
                Some(f) if f.starts_with("binary") => return Err(Error::BinaryPly),
                other => return Err(Error::parse(ln, format!("unknown format {other:?}"))),
            },
            Some("element") => {
                let name = t
                    .next()
                    .ok_or_else(|| Error::parse(ln, "element without name"))?
                    .to_string();
                let count = parse_usize(t.next(), ln)?;
                elements.push(PlyElement {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ln, "property before element"))?;
                let name = l.split_whitespace().last().unwrap_or("").to_string();
                el.props.push(name);
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(Error::parse(
                    ln,
                    format!("unknown header keyword '{other}'"),
                ))
            }
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for el in &elements {
        for _ in 0..el.count {
            let (ln, l) = body.next().ok_or_else(|| {
                Error::parse(
                    0,
                    format!("unexpected end of file in element '{}'", el.name),
                )
            })?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let get = |name: &str| -> Result<f64> {
                        let k = el.props.iter().position(|p| p == name).ok_or_else(|| {
                            Error::parse(ln, format!("vertex element lacks property '{name}'"))
                        })?;
                        parse_f64(toks.get(k).copied(), ln)
                    };
                    vertices.push(Point::new(get("x")?, get("y")?, get("z")?));
                }
                "face" => {
                    let k = parse_usize(toks.first().copied(), ln)?;
                    if k != 3 {
                        return Err(Error::parse(
                            ln,
                            format!("only triangles are supported, got a {k}-gon"),
                        ));
                    }
                    faces.push([
                        parse_usize(toks.get(1).copied(), ln)?,
                        parse_usize(toks.get(2).copied(), ln)?,
                        parse_usize(toks.get(3).copied(), ln)?,
                    ]);
                }
                _ => {}
            }
        }
    }
    Ok((vertices, faces))
}

fn write_off(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.num_vertices(), mesh.num_faces());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

fn write_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.num_vertices(),
        mesh.num_faces()
    );
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle_off() {
        let m = MeshFormat::Off
            .parse("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
            .unwrap();
        assert_eq!((m.num_vertices(), m.num_faces()), (3, 1));
    }

    #[test]
    fn off_with_counts_on_header_line_and_comments() {
        let m = MeshFormat::Off
            .parse("OFF 3 1 0\n# comment\n0 0 0\n1 0 0\n0 1 0 # trailing\n3 0 1 2\n")
            .unwrap();
        assert_eq!(m.num_faces(), 1);
    }

    #[test]
    fn tetrahedron_off_is_closed() {
        let text = "OFF\n4 4 0\n1 0 -0.7071067811865476\n-1 0 -0.7071067811865476\n0 1 0.7071067811865476\n\
                    0 -1 0.7071067811865476\n3 0 2 3\n3 1 3 2\n3 0 1 2\n3 0 3 1\n";
        let m = MeshFormat::Off.parse(text).unwrap();
        assert!(m.is_closed());
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn obj_flipped_face_is_inconsistent_winding() {
        // Two-face strip sharing edge (1, 2); the second face repeats its direction.
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 2 3 4\n";
        let err = MeshFormat::Obj.parse(text).unwrap_err();
        match err {
            Error::Topology(msg) => assert!(msg.contains("inconsistent winding"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let ok = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3\nf 3 2 4\n";
        assert_eq!(MeshFormat::Obj.parse(ok).unwrap().num_faces(), 2);
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2/2/2 -1/3/3\n";
        assert_eq!(MeshFormat::Obj.parse(text).unwrap().faces()[0], [0, 1, 2]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = MeshFormat::Off
            .parse("OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
        let err = MeshFormat::Off
            .parse("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err:?}");
    }

    #[test]
    fn ply_ascii_with_extra_properties() {
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\n\
                    property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n0 0 0 255\n1 0 0 0\n0 1 0 0\n3 0 1 2\n";
        let m = MeshFormat::PlyAscii.parse(text).unwrap();
        assert_eq!(m.vertices()[1], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn binary_ply_rejected() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(
            MeshFormat::PlyAscii.parse(text),
            Err(Error::BinaryPly)
        ));
    }
}
