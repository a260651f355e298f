//! ASCII OBJ and PLY readers and writers.
//!
//! Polygons with more than three corners are fan-triangulated on load. OBJ
//! texture/normal references (`f 1/2/3`) and negative indices are accepted;
//! only positions and connectivity are kept.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::{MeshError, Result, TriangleMesh};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    match extension(path).as_deref() {
        Some("obj") => parse_obj(&text, &name),
        Some("ply") => parse_ply(&text, &name),
        other => Err(MeshError::Format(format!("{name}: extension {other:?}"))),
    }
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match extension(path).as_deref() {
        Some("obj") => write_obj(mesh),
        Some("ply") => write_ply(mesh),
        other => {
            return Err(MeshError::Format(format!(
                "{}: extension {other:?}",
                path.display()
            )))
        }
    };
    fs::write(path, text)?;
    Ok(())
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn fan(corners: &[usize], faces: &mut Vec<[usize; 3]>) {
    for i in 1..corners.len() - 1 {
        faces.push([corners[0], corners[i], corners[i + 1]]);
    }
}

pub fn parse_obj(text: &str, path: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(path, lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_err(path, lineno, "vertex needs three coordinates"));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for t in tokens {
                    let idx = t.split('/').next().unwrap_or("");
                    let raw: i64 = idx
                        .parse()
                        .map_err(|_| parse_err(path, lineno, format!("bad face index `{t}`")))?;
                    let resolved = match raw {
                        0 => return Err(parse_err(path, lineno, "face index 0")),
                        r if r > 0 => r - 1,
                        r => vertices.len() as i64 + r,
                    };
                    if resolved < 0 {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("face index {raw} before first vertex"),
                        ));
                    }
                    corners.push(resolved as usize);
                }
                if corners.len() < 3 {
                    return Err(parse_err(path, lineno, "face needs at least three corners"));
                }
                fan(&corners, &mut faces);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    list_property: bool,
}

pub fn parse_ply(text: &str, path: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut header_done = false;
    for (i, line) in lines.by_ref() {
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(MeshError::Format(format!(
                    "{path}: PLY format `{other}` is not ascii"
                )))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad element count `{count}`")))?,
                properties: Vec::new(),
                list_property: false,
            }),
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, lineno, "property before element"))?;
                el.properties.push(name.to_string());
                el.list_property = true;
            }
            ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, lineno, "property before element"))?;
                el.properties.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("unexpected header line `{line}`"),
                ))
            }
        }
    }
    if !header_done {
        return Err(parse_err(path, text.lines().count(), "missing end_header"));
    }

    let mut vertices = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let pos = |name: &str| el.properties.iter().position(|p| p == name);
                let (Some(xi), Some(yi), Some(zi)) = (pos("x"), pos("y"), pos("z")) else {
                    return Err(parse_err(path, 0, "vertex element lacks x/y/z"));
                };
                let li = pos("label");
                for _ in 0..el.count {
                    let (i, line) = lines.next().ok_or_else(|| {
                        parse_err(path, text.lines().count(), "truncated vertex list")
                    })?;
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(path, i + 1, format!("bad vertex value: {e}")))?;
                    if vals.len() < el.properties.len() {
                        return Err(parse_err(path, i + 1, "too few vertex properties"));
                    }
                    vertices.push(Point3::new(vals[xi], vals[yi], vals[zi]));
                    if let Some(li) = li {
                        labels.push(vals[li] as u32);
                    }
                }
            }
            "face" if el.list_property => {
                for _ in 0..el.count {
                    let (i, line) = lines.next().ok_or_else(|| {
                        parse_err(path, text.lines().count(), "truncated face list")
                    })?;
                    let vals: Vec<usize> = line
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(path, i + 1, format!("bad face value: {e}")))?;
                    let Some((&n, rest)) = vals.split_first() else {
                        return Err(parse_err(path, i + 1, "empty face line"));
                    };
                    if n < 3 || rest.len() < n {
                        return Err(parse_err(path, i + 1, format!("face declares {n} corners")));
                    }
                    fan(&rest[..n], &mut faces);
                }
            }
            _ => {
                for _ in 0..el.count {
                    lines.next();
                }
            }
        }
    }
    let mesh = TriangleMesh::new(vertices, faces)?;
    if labels.is_empty() {
        Ok(mesh)
    } else {
        mesh.with_labels(labels)
    }
}

pub fn write_ply(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertex_count());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.labels().is_some() {
        out.push_str("property uint label\n");
    }
    let _ = writeln!(out, "element face {}", mesh.face_count());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, v) in mesh.vertices().iter().enumerate() {
        match mesh.labels() {
            Some(l) => {
                let _ = writeln!(out, "{} {} {} {}", v.x, v.y, v.z, l[i]);
            }
            None => {
                let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
            }
        }
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}
