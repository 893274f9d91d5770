use rayon::prelude::*;

use super::field::{ColorField, DistillSample};
use crate::error::{shape_err, Error, Result};
use crate::geometry::{for_each_uv_texel, TriMesh};
use crate::raster::RasterOutput;
use crate::tensor::Grid;

/// Face id and barycentrics of a texel centre.
pub type TexelHit = (u32, [f64; 3]);

/// Texel → hit for every texel whose centre lies in a UV triangle. Lower face
/// ids win on shared boundaries.
pub fn texel_faces(mesh: &TriMesh, tex_h: usize, tex_w: usize) -> Result<Vec<Option<TexelHit>>> {
    mesh.require_uvs()?;
    let mut out = vec![None; tex_h * tex_w];
    for (f, uvs) in mesh.face_uvs.iter().enumerate() {
        for_each_uv_texel(uvs, tex_h, tex_w, |idx, bary| {
            if out[idx].is_none() {
                out[idx] = Some((f as u32, bary));
            }
        });
    }
    Ok(out)
}

/// Queries the field at the surface point of every covered texel and fills
/// the rest by 8-connected dilation. Returns a 3-channel texture.
pub fn bake_texture(field: &ColorField, mesh: &TriMesh, tex_h: usize, tex_w: usize) -> Result<Grid> {
    if tex_h == 0 || tex_w == 0 {
        return Err(shape_err("empty bake resolution"));
    }
    let faces = texel_faces(mesh, tex_h, tex_w)?;
    if faces.iter().all(Option::is_none) {
        return Err(Error::InvalidMesh("no texel centre lies inside the uv charts".into()));
    }
    let values: Vec<Option<[f32; 3]>> = faces
        .par_iter()
        .map(|hit| {
            hit.map(|(f, bary)| {
                let p = mesh.point_at(f as usize, bary);
                field.forward([p.x, p.y, p.z]).map(|c| c as f32)
            })
        })
        .collect();
    let covered: Vec<bool> = values.iter().map(Option::is_some).collect();
    let data = values.into_iter().flat_map(|v| v.unwrap_or([0.0; 3])).collect();
    let mut tex = Grid::from_vec(tex_h, tex_w, 3, data)?;
    dilate(&mut tex, covered);
    Ok(tex)
}

/// Fills uncovered texels with the mean of their covered 8-neighbours,
/// one ring per pass, until every texel is filled.
pub fn dilate(tex: &mut Grid, mut covered: Vec<bool>) {
    let (h, w, c) = tex.dims();
    if !covered.iter().any(|&b| b) {
        return;
    }
    while covered.iter().any(|&b| !b) {
        let mut next = covered.clone();
        let mut updates = Vec::new();
        for r in 0..h {
            for col in 0..w {
                let i = r * w + col;
                if covered[i] {
                    continue;
                }
                let mut acc = vec![0.0f64; c];
                let mut n = 0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let (rr, cc) = (r as isize + dr, col as isize + dc);
                        if (dr, dc) == (0, 0) || rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                            continue;
                        }
                        let j = rr as usize * w + cc as usize;
                        if covered[j] {
                            for (a, &v) in acc.iter_mut().zip(tex.cell(j)) {
                                *a += v as f64;
                            }
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    updates.push((i, acc.into_iter().map(|a| (a / n as f64) as f32).collect::<Vec<_>>()));
                    next[i] = true;
                }
            }
        }
        for (i, v) in updates {
            tex.cell_mut(i).copy_from_slice(&v);
        }
        covered = next;
    }
}

/// Pairs each foreground pixel's surface point with the RGB image value.
pub fn samples_from_view(raster: &RasterOutput, rgb: &Grid, view: usize) -> Result<Vec<DistillSample>> {
    if rgb.dims() != (raster.height, raster.width, 3) {
        return Err(shape_err(format!(
            "rgb view is {:?}, raster is {}x{}",
            rgb.dims(),
            raster.height,
            raster.width
        )));
    }
    Ok((0..raster.pixels())
        .filter(|&p| raster.is_foreground(p))
        .map(|p| {
            let c = rgb.cell(p);
            DistillSample {
                xyz: raster.xyz[p].map(f64::from),
                rgb: [c[0], c[1], c[2]],
                view,
            }
        })
        .collect())
}

/// RGB stand-in for a latent image: first three channels clamped to [0, 1].
pub fn latent_preview(latents: &Grid) -> Result<Grid> {
    let (h, w, c) = latents.dims();
    if c < 3 {
        return Err(shape_err(format!("latent preview needs 3 channels, got {c}")));
    }
    Ok(Grid::from_fn(h, w, 3, |r, col, ch| latents.get(r, col, ch).clamp(0.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorfield::FieldConfig;
    use crate::geometry::primitives;
    use crate::raster::{rasterize, render_texture};
    use crate::rng;

    fn constant_field(logit: [f64; 3]) -> ColorField {
        let mut f = ColorField::zeroed(FieldConfig::default()).unwrap();
        let (_, biases) = f.mlp_ranges();
        f.params_mut()[biases[2].clone()].copy_from_slice(&logit);
        f
    }

    #[test]
    fn constant_field_bakes_everywhere() {
        let f = constant_field([0.0, 1.0, -2.0]);
        let want = f.forward([0.0; 3]).map(|c| c as f32);
        let mesh = primitives::uv_sphere(0.5, 16, 8);
        let tex = bake_texture(&f, &mesh, 32, 32).unwrap();
        for i in 0..tex.cells() {
            assert_eq!(tex.cell(i), want);
        }
    }

    #[test]
    fn boundary_texels_take_lower_face() {
        let mesh = primitives::quad();
        let faces = texel_faces(&mesh, 8, 8).unwrap();
        assert!(faces.iter().all(Option::is_some));
        // texel centres on the shared edge uv (0,0)-(1,1)
        let on_diag: Vec<_> = (0..8).map(|k| faces[k * 8 + 7 - k].unwrap().0).collect();
        let diag_face = on_diag[0];
        assert!(on_diag.iter().all(|&f| f == diag_face));
        assert_eq!(diag_face, 0);
    }

    #[test]
    fn requires_uvs() {
        let f = constant_field([0.0; 3]);
        assert!(matches!(bake_texture(&f, &primitives::cube(), 8, 8), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn dilation_fills_from_neighbours() {
        let mut tex = Grid::zeros(3, 3, 1);
        tex.set(0, 0, 0, 1.0);
        tex.set(0, 2, 0, 3.0);
        let mut cov = vec![false; 9];
        cov[0] = true;
        cov[2] = true;
        dilate(&mut tex, cov);
        assert_eq!(tex.get(0, 1, 0), 2.0);
        assert_eq!(tex.get(1, 0, 0), 1.0);
        assert_eq!(tex.get(2, 1, 0), 2.0);
    }

    #[test]
    fn bake_round_trip_matches_field() {
        // A smooth field (only the coarsest level populated), baked at twice
        // the view size, rendered back and compared against direct queries.
        let mesh = primitives::quad();
        let cam = crate::raster::quad_camera(64);
        let mut g = rng::stream(4, &[]);
        let mut f = ColorField::new(FieldConfig::default(), &mut g).unwrap();
        let coarse = f.table_param(1, 0, 0);
        for (i, p) in f.params_mut()[..coarse].iter_mut().enumerate() {
            *p = (i as f64 * 0.37).sin();
        }
        for p in &mut f.params_mut()[coarse..FieldConfig::default().table_params()] {
            *p = 0.0;
        }

        let tex = bake_texture(&f, &mesh, 128, 128).unwrap();
        let hi = rasterize(&mesh, &cam, 128, 128);
        let img = render_texture(&tex, &hi).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for p in 0..hi.pixels() {
            let want = f.forward(hi.xyz[p].map(f64::from));
            for ch in 0..3 {
                sum += (img.cell(p)[ch] as f64 - want[ch]).abs();
                n += 1;
            }
        }
        let mad = sum / n as f64;
        eprintln!("bake round trip mean abs diff {mad}");
        assert!(mad < 2.0 / 255.0, "{mad}");
        let (lo, hi) = tex.data().iter().fold((1.0f32, 0.0f32), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi - lo > 0.1, "fixture is nearly constant: {lo}..{hi}");
        let bake_again = bake_texture(&f, &mesh, 128, 128).unwrap();
        assert_eq!(tex, bake_again);
    }

    #[test]
    fn preview_clamps() {
        let g = Grid::from_fn(2, 2, 4, |r, c, ch| (r + c + ch) as f32 - 1.0);
        let p = latent_preview(&g).unwrap();
        assert_eq!(p.dims(), (2, 2, 3));
        assert_eq!(p.cell(0), &[0.0, 0.0, 1.0]);
    }
}
