//! Fallback UV atlas: one chart per face, packed on a square grid.

use super::mesh::{TriMesh, Uv};
use crate::error::{Error, Result};

/// Gutter on each side of a grid cell, in texels of the atlas resolution.
const GUTTER_TEXELS: f64 = 1.0;

/// Assigns every face its own chart in a `g × g` grid (`g = ⌈√F⌉`).
///
/// Each triangle keeps its shape (uniform scale) and is placed inside its cell
/// with a one-texel gutter at `resolution`, so no texel centre of a
/// `resolution²` grid is shared between two charts. Existing UVs are
/// discarded.
pub fn naive_atlas(mesh: &TriMesh, resolution: u32) -> Result<TriMesh> {
    let faces = mesh.faces.len();
    if faces == 0 {
        return Err(Error::InvalidMesh("mesh has no faces".into()));
    }
    let grid = (faces as f64).sqrt().ceil() as usize;
    let cell = resolution as f64 / grid as f64;
    let inner = cell - 2.0 * GUTTER_TEXELS;
    if inner < 1.0 {
        return Err(Error::AtlasOverflow { faces, resolution });
    }

    let mut face_uvs = Vec::with_capacity(faces);
    for face in 0..faces {
        let local = planar_layout(mesh, face);
        let extent = local
            .iter()
            .fold([0.0f64, 0.0f64], |acc, p| [acc[0].max(p[0]), acc[1].max(p[1])]);
        let span = extent[0].max(extent[1]);
        let scale = if span > 0.0 { inner / span } else { 0.0 };
        let (gx, gy) = (face % grid, face / grid);
        let ox = gx as f64 * cell + GUTTER_TEXELS;
        let oy = gy as f64 * cell + GUTTER_TEXELS;
        let to_uv = |p: [f64; 2]| -> Uv {
            [
                ((ox + p[0] * scale) / resolution as f64).clamp(0.0, 1.0),
                ((oy + p[1] * scale) / resolution as f64).clamp(0.0, 1.0),
            ]
        };
        face_uvs.push(local.map(to_uv));
    }
    let chart_ids = (0..faces as u32).collect();
    Ok(mesh.clone().with_uvs(face_uvs, chart_ids))
}

/// Lays a triangle flat in its own plane, translated into the positive
/// quadrant.
fn planar_layout(mesh: &TriMesh, face: usize) -> [[f64; 2]; 3] {
    let [a, b, c] = mesh.corners(face);
    let ab = b - a;
    let ac = c - a;
    let len_ab = ab.norm();
    if len_ab == 0.0 {
        let len_ac = ac.norm();
        return [[0.0, 0.0], [0.0, 0.0], [len_ac, 0.0]];
    }
    let x_axis = ab / len_ab;
    let cx = ac.dot(&x_axis);
    let cy = (ac - x_axis * cx).norm();
    let min_x = cx.min(0.0);
    [[-min_x, 0.0], [len_ab - min_x, 0.0], [cx - min_x, cy]]
}
