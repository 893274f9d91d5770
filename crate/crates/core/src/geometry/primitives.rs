//! Procedural meshes used by tests, benchmarks and the verification suites.

use std::f64::consts::PI;

use rand::Rng as _;

use super::atlas::naive_atlas;
use super::mesh::{TriMesh, Vec3};
use crate::rng::Rng;

/// Unit square in the `z = 0` plane spanning `[-0.5, 0.5]²`, facing `+z`,
/// with UVs `(x + 0.5, y + 0.5)` as a single chart.
pub fn quad() -> TriMesh {
    let vertices = vec![
        Vec3::new(-0.5, -0.5, 0.0),
        Vec3::new(0.5, -0.5, 0.0),
        Vec3::new(0.5, 0.5, 0.0),
        Vec3::new(-0.5, 0.5, 0.0),
    ];
    let faces = vec![[0, 1, 2], [0, 2, 3]];
    let uv = |v: &Vec3| [v.x + 0.5, v.y + 0.5];
    let face_uvs = faces
        .iter()
        .map(|f: &[u32; 3]| f.map(|i| uv(&vertices[i as usize])))
        .collect();
    TriMesh::new(vertices, faces).with_uvs(face_uvs, vec![0, 0])
}

/// Unit cube centred at the origin without UVs.
pub fn cube() -> TriMesh {
    let mut vertices = Vec::with_capacity(8);
    for i in 0..8 {
        let c = |bit: u32| if i & (1 << bit) != 0 { 0.5 } else { -0.5 };
        vertices.push(Vec3::new(c(0), c(1), c(2)));
    }
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let faces = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriMesh::new(vertices, faces)
}

/// Latitude/longitude sphere with an equirectangular UV chart covering the
/// whole unit square. Pole triangles are emitted as single triangles.
pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriMesh {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = Vec::new();
    let index = |ring: usize, seg: usize| -> u32 {
        // ring 0 and ring `rings` are single pole vertices
        if ring == 0 {
            0
        } else if ring == rings {
            (1 + (rings - 1) * segments) as u32
        } else {
            (1 + (ring - 1) * segments + seg % segments) as u32
        }
    };
    vertices.push(Vec3::new(0.0, radius, 0.0));
    for ring in 1..rings {
        let theta = PI * ring as f64 / rings as f64;
        for seg in 0..segments {
            let phi = 2.0 * PI * seg as f64 / segments as f64;
            vertices.push(Vec3::new(
                radius * theta.sin() * phi.cos(),
                radius * theta.cos(),
                radius * theta.sin() * phi.sin(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, -radius, 0.0));

    let uv = |ring: usize, seg: f64| [seg / segments as f64, 1.0 - ring as f64 / rings as f64];
    let mut faces = Vec::new();
    let mut face_uvs = Vec::new();
    for ring in 0..rings {
        for seg in 0..segments {
            let s0 = seg as f64;
            let s1 = seg as f64 + 1.0;
            if ring == 0 {
                faces.push([index(0, seg), index(1, seg + 1), index(1, seg)]);
                face_uvs.push([uv(0, s0 + 0.5), uv(1, s1), uv(1, s0)]);
            } else if ring == rings - 1 {
                faces.push([index(ring, seg), index(ring, seg + 1), index(rings, seg)]);
                face_uvs.push([uv(ring, s0), uv(ring, s1), uv(rings, s0 + 0.5)]);
            } else {
                let (a, b) = (index(ring, seg), index(ring, seg + 1));
                let (c, d) = (index(ring + 1, seg), index(ring + 1, seg + 1));
                faces.push([a, b, d]);
                face_uvs.push([uv(ring, s0), uv(ring, s1), uv(ring + 1, s1)]);
                faces.push([a, d, c]);
                face_uvs.push([uv(ring, s0), uv(ring + 1, s1), uv(ring + 1, s0)]);
            }
        }
    }
    let charts = vec![0; faces.len()];
    TriMesh::new(vertices, faces).with_uvs(face_uvs, charts)
}

/// Randomly perturbed sphere with a per-face atlas, already normalized.
/// Used as a varied fixture for raster identities.
pub fn random_blob(rng: &mut Rng) -> TriMesh {
    let segments = rng.random_range(6..14);
    let rings = rng.random_range(4..9);
    let mut m = uv_sphere(0.5, segments, rings);
    let amp = rng.random_range(0.0..0.25);
    let freq = rng.random_range(1.0..4.0);
    let phase: f64 = rng.random_range(0.0..(2.0 * PI));
    for v in &mut m.vertices {
        let r = 1.0 + amp * (freq * v.x * 6.0 + phase).sin() * (freq * v.z * 6.0).cos();
        *v *= r;
        v.y *= rng.random_range(0.7..1.3);
    }
    let m = super::normalize_mesh(&m).expect("non-empty");
    if rng.random_bool(0.5) {
        m
    } else {
        naive_atlas(&m, 1024).expect("small face count fits")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::uv_chart_overlaps;

    #[test]
    fn sphere_uvs_are_valid_and_cover_the_square() {
        let s = uv_sphere(0.5, 32, 16);
        s.validate().unwrap();
        // pole rows are triangles covering half their strip
        assert!((s.uv_area_fraction() - (1.0 - 1.0 / 16.0)).abs() < 1e-9);
        assert_eq!(uv_chart_overlaps(&s, 256).unwrap(), 0);
        assert!((s.bounding_radius() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quad_uv_matches_position() {
        let q = quad();
        q.validate().unwrap();
        assert_eq!(q.face_uvs[0][1], [1.0, 0.0]);
        assert!((q.surface_area() - 1.0).abs() < 1e-12);
    }
}
