//! Forward rendering of a texture through a mesh and camera with
//! nearest-texel lookup, plus its exact adjoint (scatter back to texels).
//!
//! No filtering or mip-mapping happens anywhere here: a rendered pixel is a
//! verbatim copy of one texel, so noise statistics of the texture carry over
//! to the image unchanged.

mod ops;
mod rasterize;

pub use ops::{
    covered_texels, fill_background, inverse_render, normalized_depth, render_texture,
    texel_means, texel_quality,
};
pub use rasterize::{rasterize, RasterOutput, BACKGROUND};

/// Camera at `(0, 0, 1.5)` looking down `-z` whose `size × size` image
/// exactly frames the unit quad `[-0.5, 0.5]²`, one pixel per texel when
/// the texture is also `size × size`.
pub fn quad_camera(size: usize) -> crate::geometry::Camera {
    use crate::geometry::{Camera, Vec3};
    Camera::look_at(
        Vec3::new(0.0, 0.0, 1.5),
        Vec3::zeros(),
        Vec3::y(),
        2.0 * (0.5f64 / 1.5).atan(),
        size,
        size,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{primitives, Camera, Vec3};
    use crate::rng;
    use crate::tensor::Grid;

    #[test]
    fn viewport_filling_quad_has_unit_jacobian() {
        let r = rasterize(&primitives::quad(), &quad_camera(64), 64, 64);
        assert_eq!(r.foreground_count(), 64 * 64);
        for p in 0..r.pixels() {
            assert!((r.jac[p] - 1.0).abs() < 1e-4, "pixel {p}: {}", r.jac[p]);
            assert_eq!(r.texel_index[p] as usize, p, "identity texel mapping");
            assert!((r.depth[p] - 1.5).abs() < 1e-5);
        }
    }

    #[test]
    fn tilted_quad_doubles_the_jacobian_at_center() {
        let mut mesh = primitives::quad();
        let (s, c) = 60f64.to_radians().sin_cos();
        for v in &mut mesh.vertices {
            *v = Vec3::new(v.x * c, v.y, -v.x * s);
        }
        let r = rasterize(&mesh, &quad_camera(64), 64, 64);
        // average the four pixels around the principal point
        let centre = [31 * 64 + 31, 31 * 64 + 32, 32 * 64 + 31, 32 * 64 + 32];
        let mean: f32 = centre.iter().map(|&p| r.jac[p]).sum::<f32>() / 4.0;
        assert!((mean - 2.0).abs() < 0.02, "jac {mean}");
    }

    #[test]
    fn camera_facing_away_sees_background() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 1.5), Vec3::new(0.0, 0.0, 3.0), Vec3::y(), 0.6, 32, 32);
        let r = rasterize(&primitives::quad(), &cam, 64, 64);
        assert_eq!(r.foreground_count(), 0);
    }

    #[test]
    fn nearer_quad_occludes() {
        let mut mesh = primitives::quad();
        let far = primitives::quad();
        // second quad behind the first, mapped to the right half of uv space
        let base = mesh.vertices.len() as u32;
        for v in &far.vertices {
            mesh.vertices.push(Vec3::new(v.x, v.y, -0.3));
        }
        for (f, uv) in far.faces.iter().zip(&far.face_uvs) {
            mesh.faces.push(f.map(|i| i + base));
            mesh.face_uvs.push(uv.map(|t| [0.5 + 0.5 * t[0], t[1]]));
            mesh.chart_ids.push(1);
        }
        // front quad shrinks to [-0.25, 0.25]², covering pixels 16..48
        for v in &mut mesh.vertices[..4] {
            v.x *= 0.5;
            v.y *= 0.5;
        }
        for uv in &mut mesh.face_uvs[..2] {
            for t in uv.iter_mut() {
                t[0] *= 0.5;
            }
        }
        let r = rasterize(&mesh, &quad_camera(64), 64, 64);
        for p in 0..r.pixels() {
            let (row, col) = (p / 64, p % 64);
            let in_front = (16..48).contains(&row) && (16..48).contains(&col);
            if in_front {
                assert!(r.face_id[p] < 2, "front quad must win at {row},{col}");
            }
        }
        assert!(r.face_id.iter().any(|&f| f == 2 || f == 3));
    }

    #[test]
    fn constant_and_one_hot_textures() {
        let mesh = primitives::uv_sphere(0.5, 24, 12);
        let cam = crate::geometry::make_cameras(&crate::geometry::CameraPreset::default9(), &mesh, 0)[0];
        let r = rasterize(&mesh, &cam, 32, 32);
        let img = render_texture(&Grid::filled(32, 32, 4, 0.25), &r).unwrap();
        for p in 0..r.pixels() {
            let want = if r.is_foreground(p) { 0.25 } else { 0.0 };
            assert!(img.cell(p).iter().all(|&v| v == want));
        }
        let (_, hot) = r.foreground().nth(100).unwrap();
        let mut tex = Grid::zeros(32, 32, 1);
        tex.data_mut()[hot] = 1.0;
        let img = render_texture(&tex, &r).unwrap();
        for p in 0..r.pixels() {
            let selected = r.is_foreground(p) && r.texel_index[p] as usize == hot;
            assert_eq!(img.data()[p] == 1.0, selected);
        }
    }

    #[test]
    fn scatter_four_pixels_into_one_texel() {
        // 16x16 image over an 8x8 texture: each texel receives a 2x2 block
        let r = rasterize(&primitives::quad(), &quad_camera(16), 8, 8);
        let img = Grid::filled(16, 16, 1, 2.0);
        let (sums, counts) = inverse_render(&img, &r).unwrap();
        assert!(counts.iter().all(|&c| c == 4.0));
        assert!(sums.data().iter().all(|&s| s == 8.0));
        let (zero_sums, zero_counts) = inverse_render(&Grid::zeros(16, 16, 1), &r).unwrap();
        assert!(zero_sums.data().iter().all(|&s| s == 0.0));
        assert_eq!(zero_counts, counts);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let r = rasterize(&primitives::quad(), &quad_camera(16), 8, 8);
        assert!(render_texture(&Grid::zeros(9, 8, 4), &r).is_err());
        assert!(inverse_render(&Grid::zeros(15, 16, 4), &r).is_err());
    }

    #[test]
    fn render_inverse_render_round_trip() {
        let mut g = rng::stream(3, &[]);
        let mesh = primitives::uv_sphere(0.5, 16, 8);
        let cam = crate::geometry::make_cameras(&crate::geometry::CameraPreset::default9(), &mesh, 0)[2];
        let r = rasterize(&mesh, &cam, 64, 64);
        let tex = rng::normal_grid(64, 64, 4, &mut g);
        let img = render_texture(&tex, &r).unwrap();
        let (means, counts) = texel_means(&img, &r).unwrap();
        let mut back = tex.clone();
        for (t, &c) in counts.iter().enumerate() {
            if c > 0.0 {
                back.cell_mut(t).copy_from_slice(means.cell(t));
            }
        }
        let again = render_texture(&back, &r).unwrap();
        assert_eq!(again, img);
    }

    #[test]
    fn adjoint_identity() {
        let mut g = rng::stream(11, &[]);
        for k in 0..5 {
            let mesh = primitives::random_blob(&mut g);
            let cams = crate::geometry::make_cameras(&crate::geometry::CameraPreset::jittered18(), &mesh, k);
            let r = rasterize(&mesh, &cams[k as usize], 48, 40);
            let z = rng::normal_grid(48, 40, 4, &mut g);
            let x = rng::normal_grid(64, 64, 4, &mut g);
            let lhs = render_texture(&z, &r).unwrap().dot(&x);
            let rhs = z.dot(&inverse_render(&x, &r).unwrap().0);
            assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }

    #[test]
    fn background_fill_statistics() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 1.5), Vec3::new(0.0, 0.0, 3.0), Vec3::y(), 0.6, 64, 64);
        let r = rasterize(&primitives::quad(), &cam, 64, 64);
        let mut img = Grid::zeros(64, 64, 4);
        fill_background(&mut img, &r, &mut rng::stream(5, &[1])).unwrap();
        for ch in 0..4 {
            let v = img.channel(ch);
            let n = v.data().len() as f64;
            let mean = v.data().iter().map(|&x| x as f64).sum::<f64>() / n;
            let var = v.data().iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 0.05, "mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
        let mut again = Grid::zeros(64, 64, 4);
        fill_background(&mut again, &r, &mut rng::stream(5, &[1])).unwrap();
        assert_eq!(again, img);
    }

    #[test]
    fn background_fill_keeps_full_foreground() {
        let r = rasterize(&primitives::quad(), &quad_camera(32), 32, 32);
        let img = Grid::filled(32, 32, 4, 0.5);
        let mut filled = img.clone();
        fill_background(&mut filled, &r, &mut rng::stream(1, &[])).unwrap();
        assert_eq!(filled, img);
    }

    #[test]
    fn depth_is_normalized_over_foreground() {
        let mesh = primitives::uv_sphere(0.5, 24, 12);
        let cam = crate::geometry::make_cameras(&crate::geometry::CameraPreset::default9(), &mesh, 0)[0];
        let r = rasterize(&mesh, &cam, 32, 32);
        let d = normalized_depth(&r);
        let fg: Vec<f32> = r.foreground().map(|(p, _)| d.data()[p]).collect();
        assert_eq!(fg.iter().cloned().fold(f32::INFINITY, f32::min), 0.0);
        assert_eq!(fg.iter().cloned().fold(f32::NEG_INFINITY, f32::max), 1.0);
        assert!((0..r.pixels()).filter(|&p| !r.is_foreground(p)).all(|p| d.data()[p] == 0.0));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::geometry::{make_cameras, primitives, CameraPreset};
    use crate::rng;
    use crate::tensor::Grid;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn raster_invariants(seed in 0u64..10_000, view in 0usize..18, th in 1usize..8, tw in 1usize..8) {
            let mut g = rng::stream(seed, &[]);
            let mesh = primitives::random_blob(&mut g);
            let cam = make_cameras(&CameraPreset::jittered18(), &mesh, seed)[view];
            let (th, tw) = (th * 8, tw * 8);
            let r = rasterize(&mesh, &cam, th, tw);
            for (p, t) in r.foreground() {
                prop_assert!(t < th * tw);
                prop_assert!(r.jac[p] >= 0.0 && r.jac[p].is_finite());
                prop_assert!(r.depth[p] > 0.0);
            }
            // render ∘ inverse-render (normalized) is a projection
            let z = rng::normal_grid(th, tw, 2, &mut g);
            let project = |tex: &Grid| {
                let img = render_texture(tex, &r).unwrap();
                let (m, c) = texel_means(&img, &r).unwrap();
                let mut out = tex.clone();
                for (t, &k) in c.iter().enumerate() {
                    if k > 0.0 { out.cell_mut(t).copy_from_slice(m.cell(t)); }
                }
                out
            };
            let once = project(&z);
            let twice = project(&once);
            prop_assert_eq!(once, twice);
        }
    }
}
