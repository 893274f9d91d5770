use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Uv = [f64; 2];

/// Triangle mesh with per-corner UVs grouped into charts.
///
/// `face_uvs` and `chart_ids` are either empty (mesh without a
/// parameterization) or have one entry per face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    #[serde(default)]
    pub face_uvs: Vec<[Uv; 3]>,
    #[serde(default)]
    pub chart_ids: Vec<u32>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            faces,
            face_uvs: Vec::new(),
            chart_ids: Vec::new(),
        }
    }

    pub fn with_uvs(mut self, face_uvs: Vec<[Uv; 3]>, chart_ids: Vec<u32>) -> Self {
        self.face_uvs = face_uvs;
        self.chart_ids = chart_ids;
        self
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn has_uvs(&self) -> bool {
        !self.faces.is_empty() && self.face_uvs.len() == self.faces.len()
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Checks index bounds, UV ranges and per-face array lengths.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.is_empty() || self.faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let n = self.vertices.len() as u32;
        if let Some(f) = self.faces.iter().position(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidMesh(format!("face {f} indexes past {n} vertices")));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex".into()));
        }
        if !self.face_uvs.is_empty() {
            if self.face_uvs.len() != self.faces.len() || self.chart_ids.len() != self.faces.len() {
                return Err(Error::InvalidMesh(
                    "face_uvs/chart_ids length differs from face count".into(),
                ));
            }
            let bad = self
                .face_uvs
                .iter()
                .flatten()
                .any(|uv| !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]));
            if bad {
                return Err(Error::InvalidMesh("uv outside [0,1]^2".into()));
            }
        }
        Ok(())
    }

    pub fn require_uvs(&self) -> Result<()> {
        if self.has_uvs() {
            Ok(())
        } else {
            Err(Error::InvalidMesh("mesh has no uv parameterization".into()))
        }
    }

    pub fn bounds(&self) -> Aabb {
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            min = min.inf(v);
            max = max.sup(v);
        }
        Aabb { min, max }
    }

    /// Radius of the origin-centred sphere enclosing all vertices.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn uv_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_uvs[face];
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
    }

    /// Fraction of the unit UV square covered by charts.
    pub fn uv_area_fraction(&self) -> f64 {
        (0..self.face_uvs.len()).map(|f| self.uv_area(f)).sum()
    }

    /// Surface point at barycentric coordinates on a face.
    pub fn point_at(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let [a, b, c] = self.corners(face);
        a * bary[0] + b * bary[1] + c * bary[2]
    }
}

/// Centres the bounding box at the origin and scales its longest side to 1.
/// UVs are untouched.
pub fn normalize_mesh(mesh: &TriMesh) -> Result<TriMesh> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(Error::InvalidMesh("cannot normalize an empty mesh".into()));
    }
    let bounds = mesh.bounds();
    let side = bounds.longest_side();
    if !(side > 0.0) || !side.is_finite() {
        return Err(Error::InvalidMesh("mesh has zero extent".into()));
    }
    let center = bounds.center();
    // Already normalized within rounding: return as is so that repeated
    // normalization is a bitwise fixed point.
    if center.amax() <= 1e-12 && (side - 1.0).abs() <= 1e-12 {
        return Ok(mesh.clone());
    }
    let scale = 1.0 / side;
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = (*v - center) * scale;
    }
    Ok(out)
}

/// Counts texels of a `resolution²` UV grid claimed by faces of two different
/// charts. Texels are claimed by faces whose UV triangle contains the texel
/// centre (edges inclusive).
pub fn uv_chart_overlaps(mesh: &TriMesh, resolution: usize) -> Result<usize> {
    mesh.require_uvs()?;
    const FREE: u32 = u32::MAX;
    const CONFLICT: u32 = u32::MAX - 1;
    let mut owner = vec![FREE; resolution * resolution];
    let mut conflicts = 0;
    for (face, uvs) in mesh.face_uvs.iter().enumerate() {
        let chart = mesh.chart_ids[face];
        for_each_uv_texel(uvs, resolution, resolution, |idx, _| {
            let slot = &mut owner[idx];
            if *slot == FREE {
                *slot = chart;
            } else if *slot != chart && *slot != CONFLICT {
                *slot = CONFLICT;
                conflicts += 1;
            }
        });
    }
    Ok(conflicts)
}

/// Converts a UV coordinate to continuous texel coordinates `(col, row)`.
/// Rows grow downwards: `v = 1` is row 0.
#[inline]
pub fn uv_to_texel(uv: Uv, tex_h: usize, tex_w: usize) -> (f64, f64) {
    (uv[0] * tex_w as f64, (1.0 - uv[1]) * tex_h as f64)
}

/// Visits every texel whose centre lies inside (or on the boundary of) the
/// UV triangle, passing the flat texel index and barycentric coordinates.
pub fn for_each_uv_texel(
    uvs: &[Uv; 3],
    tex_h: usize,
    tex_w: usize,
    mut visit: impl FnMut(usize, [f64; 3]),
) {
    let p: Vec<(f64, f64)> = uvs.iter().map(|&uv| uv_to_texel(uv, tex_h, tex_w)).collect();
    let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
    if area == 0.0 {
        return;
    }
    let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
    let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
    let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
    let c0 = ((min_x - 0.5).ceil().max(0.0)) as usize;
    let c1 = ((max_x - 0.5).floor().min(tex_w as f64 - 1.0)) as isize;
    let r0 = ((min_y - 0.5).ceil().max(0.0)) as usize;
    let r1 = ((max_y - 0.5).floor().min(tex_h as f64 - 1.0)) as isize;
    if c1 < 0 || r1 < 0 {
        return;
    }
    let edge = |a: (f64, f64), b: (f64, f64), x: f64, y: f64| {
        (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0)
    };
    for row in r0..=r1 as usize {
        let y = row as f64 + 0.5;
        for col in c0..=c1 as usize {
            let x = col as f64 + 0.5;
            let w0 = edge(p[1], p[2], x, y) / area;
            let w1 = edge(p[2], p[0], x, y) / area;
            let w2 = edge(p[0], p[1], x, y) / area;
            if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                visit(row * tex_w + col, [w0, w1, w2]);
            }
        }
    }
}
