use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ResolutionMode {
    /// Initial size from the mesh's surface area relative to its diameter.
    Coarse,
    /// Rescale an existing side when the field of view narrows (radians).
    Refine { old_fov: f64, new_fov: f64 },
}

/// Rounds up to the next multiple of 8, ignoring float noise below 1e-9.
fn ceil8(x: f64) -> usize {
    let n = (x - 1e-9).ceil().max(1.0) as usize;
    n.div_ceil(8) * 8
}

/// Texture side length `(H, W)` (always square, always a multiple of 8).
///
/// Coarse: `base · ⌈√(A / (f · d²))⌉` where `A` is the surface area, `d` the
/// bounding-sphere diameter and `f` the fraction of UV space covered by
/// charts, clamped to `[base, 8·base]`.
/// Refine: `base · tan(old/2) / tan(new/2)`, rounded up.
pub fn texture_resolution(mesh: &TriMesh, mode: ResolutionMode, base: usize) -> Result<(usize, usize)> {
    if base == 0 || base % 8 != 0 {
        return Err(Error::Config(format!("base texture side {base} is not a positive multiple of 8")));
    }
    let side = match mode {
        ResolutionMode::Coarse => {
            mesh.require_uvs()?;
            let diameter = 2.0 * mesh.bounding_radius();
            let fraction = mesh.uv_area_fraction();
            if !(diameter > 0.0) || !(fraction > 0.0) {
                return Err(Error::InvalidMesh("degenerate mesh or uv layout".into()));
            }
            let density = mesh.surface_area() / (diameter * diameter) / fraction;
            let factor = density.sqrt().ceil().max(1.0) as usize;
            ceil8((base * factor) as f64).clamp(base, 8 * base)
        }
        ResolutionMode::Refine { old_fov, new_fov } => {
            if !(new_fov < old_fov) || !(new_fov > 0.0) {
                return Err(Error::InvalidRefinement { old_fov, new_fov });
            }
            let ratio = (0.5 * old_fov).tan() / (0.5 * new_fov).tan();
            ceil8(base as f64 * ratio)
        }
    };
    Ok((side, side))
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::geometry::primitives;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn refine_is_multiple_of_eight_and_monotone(old in 0.2f64..2.5, a in 0.05f64..0.99, b in 0.05f64..0.99,
                                                   base in 1usize..32) {
            let m = primitives::quad();
            let base = base * 8;
            let (narrow, wide) = if a < b { (a, b) } else { (b, a) };
            let side = |f: f64| texture_resolution(&m, ResolutionMode::Refine { old_fov: old, new_fov: old * f }, base).unwrap().0;
            let s_narrow = side(narrow);
            let s_wide = side(wide);
            prop_assert_eq!(s_narrow % 8, 0);
            prop_assert!(s_narrow >= s_wide);
            prop_assert!(s_wide >= base);
        }
    }
}
