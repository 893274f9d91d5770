use serde::{Deserialize, Serialize};

use crate::geometry::{make_cameras, Camera, CameraPreset, TriMesh};
use crate::rng;

/// The cameras a sampling round sweeps over at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CameraRig {
    /// Same cameras at every step.
    Fixed { cameras: Vec<Camera> },
    /// Preset cameras re-jittered at every step from a seed-derived stream,
    /// with `tan(fov/2)` scaled by `fov_scale`.
    Jittered {
        preset: CameraPreset,
        fov_scale: f64,
        seed: u64,
    },
}

impl CameraRig {
    pub fn fixed(cameras: Vec<Camera>) -> Self {
        Self::Fixed { cameras }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Self::Fixed { .. })
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Fixed { cameras } => cameras.len(),
            Self::Jittered { preset, .. } => preset.camera_count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cameras_at(&self, mesh: &TriMesh, step: usize) -> Vec<Camera> {
        match self {
            Self::Fixed { cameras } => cameras.clone(),
            Self::Jittered {
                preset,
                fov_scale,
                seed,
            } => {
                let step_seed = rng::derive_seed(*seed, &[rng::tag::JITTER, step as u64]);
                make_cameras(preset, mesh, step_seed)
                    .into_iter()
                    .map(|c| c.with_fov_scaled(*fov_scale))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    #[test]
    fn jitter_changes_per_step_but_is_seeded() {
        let mesh = primitives::uv_sphere(0.5, 16, 8);
        let rig = CameraRig::Jittered {
            preset: CameraPreset::jittered18(),
            fov_scale: 2.0,
            seed: 3,
        };
        let a = rig.cameras_at(&mesh, 0);
        assert_eq!(a.len(), 18);
        assert_eq!(a, rig.cameras_at(&mesh, 0));
        assert_ne!(a, rig.cameras_at(&mesh, 1));
        let plain = make_cameras(&CameraPreset::jittered18(), &mesh, 0)[0];
        let widened = (0.5 * a[0].fov_y).tan() / (0.5 * plain.fov_y).tan();
        assert!((widened - 2.0).abs() < 1e-12);
    }
}
