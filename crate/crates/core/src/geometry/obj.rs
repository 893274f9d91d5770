//! Wavefront OBJ reading (`v`, `vt`, `f`) and writing.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::atlas::naive_atlas;
use super::mesh::{normalize_mesh, uv_chart_overlaps, TriMesh, Uv, Vec3};
use crate::error::{Error, Result};

/// Atlas resolution used when a mesh needs the fallback atlas.
pub const FALLBACK_ATLAS_RESOLUTION: u32 = 2048;

/// Parses OBJ text. Polygons are fan-triangulated. UVs are kept only when
/// every face corner references a `vt`; charts are the UV-connected
/// components.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut texcoords: Vec<Uv> = Vec::new();
    let mut faces = Vec::new();
    let mut corner_uvs: Vec<Option<[usize; 3]>> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let bad = |what: &str| Error::Format(format!("obj line {}: {what}", lineno + 1));
        match parts.next() {
            Some("v") => {
                let xyz: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad vertex"))?;
                if xyz.len() != 3 {
                    return Err(bad("vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("vt") => {
                let uv: Vec<f64> = parts
                    .take(2)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad texcoord"))?;
                if uv.is_empty() {
                    return Err(bad("texcoord needs coordinates"));
                }
                texcoords.push([uv[0], uv.get(1).copied().unwrap_or(0.0)]);
            }
            Some("f") => {
                let mut corners = Vec::new();
                for token in parts {
                    let mut fields = token.split('/');
                    let v = resolve(fields.next(), vertices.len()).ok_or_else(|| bad("bad vertex index"))?;
                    let vt = match fields.next() {
                        Some("") | None => None,
                        Some(s) => Some(resolve(Some(s), texcoords.len()).ok_or_else(|| bad("bad texcoord index"))?),
                    };
                    corners.push((v, vt));
                }
                if corners.len() < 3 {
                    return Err(bad("face needs at least 3 corners"));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push(tri.map(|c| c.0 as u32));
                    corner_uvs.push(match tri {
                        [(_, Some(a)), (_, Some(b)), (_, Some(c))] => Some([a, b, c]),
                        _ => None,
                    });
                }
            }
            _ => {}
        }
    }

    let mesh = TriMesh::new(vertices, faces);
    if mesh.faces.is_empty() {
        return Err(Error::InvalidMesh("obj contains no faces".into()));
    }
    if corner_uvs.iter().all(Option::is_some) {
        let face_uvs: Vec<[Uv; 3]> = corner_uvs
            .iter()
            .map(|c| c.expect("checked").map(|i| texcoords[i]))
            .collect();
        let charts = uv_charts(&corner_uvs.iter().map(|c| c.expect("checked")).collect::<Vec<_>>());
        Ok(mesh.with_uvs(face_uvs, charts))
    } else {
        Ok(mesh)
    }
}

fn resolve(token: Option<&str>, len: usize) -> Option<usize> {
    let i: i64 = token?.parse().ok()?;
    let idx = if i > 0 { i - 1 } else { len as i64 + i };
    (0..len as i64).contains(&idx).then_some(idx as usize)
}

/// Connected components of faces sharing a texcoord index.
fn uv_charts(corner_uvs: &[[usize; 3]]) -> Vec<u32> {
    let n = corner_uvs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut first_face: HashMap<usize, usize> = HashMap::new();
    for (face, uvs) in corner_uvs.iter().enumerate() {
        for &t in uvs {
            let other = *first_face.entry(t).or_insert(face);
            let (a, b) = (find(&mut parent, face), find(&mut parent, other));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut labels = HashMap::new();
    (0..n)
        .map(|f| {
            let root = find(&mut parent, f);
            let next = labels.len() as u32;
            *labels.entry(root).or_insert(next)
        })
        .collect()
}

pub fn load_obj(path: &Path) -> Result<TriMesh> {
    parse_obj(&std::fs::read_to_string(path)?)
}

/// Normalizes the mesh and installs the fallback atlas when the mesh has no
/// UVs, UVs outside the unit square, or overlapping charts.
pub fn prepare_mesh(mesh: &TriMesh) -> Result<TriMesh> {
    mesh.validate().or_else(|e| match e {
        Error::InvalidMesh(ref msg) if msg.contains("uv") => Ok(()),
        other => Err(other),
    })?;
    let normalized = normalize_mesh(mesh)?;
    let usable = normalized.has_uvs()
        && normalized.validate().is_ok()
        && uv_chart_overlaps(&normalized, 1024)? == 0;
    if usable {
        Ok(normalized)
    } else {
        if normalized.has_uvs() {
            log::warn!("mesh uvs are out of range or overlap; using per-face atlas");
        }
        naive_atlas(&normalized, FALLBACK_ATLAS_RESOLUTION)
    }
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    if mesh.has_uvs() {
        // texcoords are shared within a chart so that charts survive a round trip
        let mut index: HashMap<(u32, u64, u64), usize> = HashMap::new();
        let mut corners = Vec::with_capacity(mesh.faces.len());
        for (k, uvs) in mesh.face_uvs.iter().enumerate() {
            let chart = mesh.chart_ids[k];
            corners.push(uvs.map(|uv| {
                let next = index.len() + 1;
                *index.entry((chart, uv[0].to_bits(), uv[1].to_bits())).or_insert_with(|| {
                    let _ = writeln!(out, "vt {} {}", uv[0], uv[1]);
                    next
                })
            }));
        }
        for (f, t) in mesh.faces.iter().zip(&corners) {
            let _ = writeln!(out, "f {}/{} {}/{} {}/{}", f[0] + 1, t[0], f[1] + 1, t[1], f[2] + 1, t[2]);
        }
    } else {
        for f in &mesh.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
    }
    out
}
