use crate::geometry::{Camera, TriMesh, Vec3};

/// Face id stored for pixels that hit no geometry.
pub const BACKGROUND: u32 = u32::MAX;

/// Vertices closer to the eye than this (along the view axis) cause the whole
/// triangle to be skipped.
const NEAR_PLANE: f64 = 1e-3;

/// Per-pixel geometry buffers for one camera against a texture of
/// `tex_h × tex_w` texels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterOutput {
    pub height: usize,
    pub width: usize,
    pub tex_h: usize,
    pub tex_w: usize,
    pub face_id: Vec<u32>,
    /// Continuous texel coordinates `(col, row)`.
    pub uv: Vec<[f32; 2]>,
    /// Flat index `row * tex_w + col` of the nearest texel.
    pub texel_index: Vec<u32>,
    /// View-space depth along the camera axis.
    pub depth: Vec<f32>,
    /// `|∂u/∂p·∂v/∂q − ∂u/∂q·∂v/∂p|` in texels² per pixel².
    pub jac: Vec<f32>,
    pub xyz: Vec<[f32; 3]>,
}

impl RasterOutput {
    fn empty(height: usize, width: usize, tex_h: usize, tex_w: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            tex_h,
            tex_w,
            face_id: vec![BACKGROUND; n],
            uv: vec![[0.0; 2]; n],
            texel_index: vec![0; n],
            depth: vec![0.0; n],
            jac: vec![0.0; n],
            xyz: vec![[0.0; 3]; n],
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn is_foreground(&self, pixel: usize) -> bool {
        self.face_id[pixel] != BACKGROUND
    }

    pub fn foreground_mask(&self) -> Vec<bool> {
        self.face_id.iter().map(|&f| f != BACKGROUND).collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.face_id.iter().filter(|&&f| f != BACKGROUND).count()
    }

    /// Iterator over `(pixel, texel)` for foreground pixels in pixel order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.face_id
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != BACKGROUND)
            .map(|(p, _)| (p, self.texel_index[p] as usize))
    }
}

struct ProjectedVertex {
    screen: [f64; 2],
    inv_z: f64,
    texel: [f64; 2],
    world: Vec3,
}

/// Edge function `(b − a) × (p − a)`, evaluated with the endpoints in a
/// canonical order so that the two triangles sharing an edge get exactly
/// opposite values. Pixels on a shared edge are therefore never dropped.
#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let raw = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (a[0], a[1]) <= (b[0], b[1]) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

/// Rasterizes a UV-mapped mesh from `camera`.
///
/// Occlusion is resolved with a depth buffer (strictly nearer wins, so ties
/// keep the lower face id). UVs, depth and world position use
/// perspective-correct barycentrics at pixel centres; the Jacobian is the
/// exact derivative of the triangle's projective screen→texel map at the pixel
/// centre. Triangles with zero screen area or vertices behind the near plane
/// are skipped.
pub fn rasterize(mesh: &TriMesh, camera: &Camera, tex_h: usize, tex_w: usize) -> RasterOutput {
    let (h, w) = (camera.image_h, camera.image_w);
    let mut out = RasterOutput::empty(h, w, tex_h, tex_w);
    if !mesh.has_uvs() {
        return out;
    }
    let frame = camera.frame();
    let focal = camera.focal_px();
    let (cx, cy) = (0.5 * w as f64, 0.5 * h as f64);
    let mut zbuf = vec![f64::INFINITY; h * w];

    let project = |p: Vec3| -> Option<([f64; 2], f64)> {
        let d = p - camera.eye;
        let z = d.dot(&frame.forward);
        if z <= NEAR_PLANE {
            return None;
        }
        let x = d.dot(&frame.right);
        let y = d.dot(&frame.up);
        Some(([cx + focal * x / z, cy - focal * y / z], z))
    };

    for face in 0..mesh.faces.len() {
        let corners = mesh.corners(face);
        let uvs = mesh.face_uvs[face];
        let mut verts: [Option<ProjectedVertex>; 3] = [None, None, None];
        for k in 0..3 {
            verts[k] = project(corners[k]).map(|(screen, z)| ProjectedVertex {
                screen,
                inv_z: 1.0 / z,
                texel: [uvs[k][0] * tex_w as f64, (1.0 - uvs[k][1]) * tex_h as f64],
                world: corners[k],
            });
        }
        let [Some(v0), Some(v1), Some(v2)] = verts else {
            continue;
        };
        let (s0, s1, s2) = (v0.screen, v1.screen, v2.screen);
        let area = edge(s0, s1, s2);
        if area.abs() < 1e-12 || !area.is_finite() {
            continue;
        }
        let sign = area.signum();

        let min_x = s0[0].min(s1[0]).min(s2[0]);
        let max_x = s0[0].max(s1[0]).max(s2[0]);
        let min_y = s0[1].min(s1[1]).min(s2[1]);
        let max_y = s0[1].max(s1[1]).max(s2[1]);
        let col0 = (min_x - 0.5).ceil().max(0.0);
        let col1 = (max_x - 0.5).floor().min(w as f64 - 1.0);
        let row0 = (min_y - 0.5).ceil().max(0.0);
        let row1 = (max_y - 0.5).floor().min(h as f64 - 1.0);
        if col0 > col1 || row0 > row1 {
            continue;
        }

        // Gradients of the edge functions w.r.t. screen x and y.
        let grad = |a: [f64; 2], b: [f64; 2]| [-(b[1] - a[1]), b[0] - a[0]];
        let g = [grad(s1, s2), grad(s2, s0), grad(s0, s1)];
        let vs = [&v0, &v1, &v2];

        for row in row0 as usize..=row1 as usize {
            let py = row as f64 + 0.5;
            for col in col0 as usize..=col1 as usize {
                let px = col as f64 + 0.5;
                let p = [px, py];
                let e = [edge(s1, s2, p), edge(s2, s0, p), edge(s0, s1, p)];
                if e.iter().any(|&ek| ek * sign < 0.0) {
                    continue;
                }
                let norm = e[0] + e[1] + e[2];
                if norm == 0.0 {
                    continue;
                }
                // perspective-correct weights λ_k = b_k / z_k
                let mut lam = [0.0; 3];
                let mut dlam = [[0.0; 2]; 3];
                for k in 0..3 {
                    lam[k] = e[k] / norm * vs[k].inv_z;
                    dlam[k] = [g[k][0] / norm * vs[k].inv_z, g[k][1] / norm * vs[k].inv_z];
                }
                let d = lam[0] + lam[1] + lam[2];
                let depth = 1.0 / d;
                let pixel = row * w + col;
                if !(depth < zbuf[pixel]) {
                    continue;
                }
                zbuf[pixel] = depth;

                let mut nu = [0.0; 2];
                let mut dnu = [[0.0; 2]; 2];
                let mut dd = [0.0; 2];
                let mut world = Vec3::zeros();
                for k in 0..3 {
                    for a in 0..2 {
                        nu[a] += lam[k] * vs[k].texel[a];
                        for axis in 0..2 {
                            dnu[a][axis] += dlam[k][axis] * vs[k].texel[a];
                        }
                    }
                    dd[0] += dlam[k][0];
                    dd[1] += dlam[k][1];
                    world += vs[k].world * lam[k];
                }
                let u = nu[0] / d;
                let v = nu[1] / d;
                // quotient rule: ∂(N/D) = (∂N·D − N·∂D) / D²
                let du = |a: usize, axis: usize| (dnu[a][axis] * d - nu[a] * dd[axis]) / (d * d);
                let jac = (du(0, 0) * du(1, 1) - du(0, 1) * du(1, 0)).abs();
                let world = world / d;

                let tc = (u.floor().max(0.0) as usize).min(tex_w - 1);
                let tr = (v.floor().max(0.0) as usize).min(tex_h - 1);
                out.face_id[pixel] = face as u32;
                out.uv[pixel] = [u as f32, v as f32];
                out.texel_index[pixel] = (tr * tex_w + tc) as u32;
                out.depth[pixel] = depth as f32;
                out.jac[pixel] = jac as f32;
                out.xyz[pixel] = [world.x as f32, world.y as f32, world.z as f32];
            }
        }
    }
    out
}
