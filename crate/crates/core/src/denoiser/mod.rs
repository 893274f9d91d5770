//! ε-prediction backends: analytic oracles and a remote client.

mod echo;
mod oracle;
mod remote;
pub mod wire;

pub use echo::EchoServer;
pub use oracle::{delta_epsilon, DeltaOracle, GaussianOracle, GaussianOracleParams, ZeroDenoiser};
pub use remote::{BridgeInfo, RemoteDenoiser, BRIDGE_ADDR_ENV};

use crate::diffusion::{cfg_combine, GuidanceConfig};
use crate::error::Result;
use crate::geometry::Camera;
use crate::tensor::{Grid, LatentImage};

/// Which conditioning inputs a single prediction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Unconditional,
    /// depth and text
    Joint,
    TextOnly,
}

impl Conditioning {
    pub fn as_str(self) -> &'static str {
        match self {
            Conditioning::Unconditional => "uncond",
            Conditioning::Joint => "joint",
            Conditioning::TextOnly => "text",
        }
    }
}

/// Everything a denoiser may look at for one view at one step.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub latents: &'a LatentImage,
    /// Diffusion time of `latents`.
    pub t: usize,
    /// `ᾱ_t` under the sampler's schedule.
    pub alpha_bar: f64,
    /// `h × w × 1`, normalized to `[0, 1]`.
    pub depth: &'a Grid,
    pub prompt: &'a str,
    pub view_suffix: &'a str,
    pub guidance: GuidanceConfig,
    pub camera: &'a Camera,
    /// Position of the camera in the current rig.
    pub view: usize,
    pub conditioning: Conditioning,
}

impl DenoiseRequest<'_> {
    pub fn with_conditioning(&self, conditioning: Conditioning) -> Self {
        Self { conditioning, ..*self }
    }
}

pub trait Denoiser: Send + Sync {
    /// Short human-readable identifier recorded in run manifests.
    fn describe(&self) -> String;

    /// Raw prediction for `req.conditioning`.
    fn predict_epsilon(&self, req: &DenoiseRequest) -> Result<LatentImage>;

    /// Guided prediction: unconditional, joint and (when `w_text > 0`)
    /// text-only predictions combined with `req.guidance`.
    fn predict_guided(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        let g = req.guidance;
        g.validate()?;
        let uncond = self.predict_epsilon(&req.with_conditioning(Conditioning::Unconditional))?;
        let joint = self.predict_epsilon(&req.with_conditioning(Conditioning::Joint))?;
        let text = if g.w_text > 0.0 {
            Some(self.predict_epsilon(&req.with_conditioning(Conditioning::TextOnly))?)
        } else {
            None
        };
        cfg_combine(&uncond, &joint, text.as_ref(), &g)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn describe(&self) -> String {
        (**self).describe()
    }
    fn predict_epsilon(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        (**self).predict_epsilon(req)
    }
    fn predict_guided(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        (**self).predict_guided(req)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::geometry::{Camera, Vec3};

    pub fn camera() -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, 1.5), Vec3::zeros(), Vec3::y(), 0.7, 8, 8)
    }

    pub fn request<'a>(latents: &'a Grid, depth: &'a Grid, camera: &'a Camera, alpha_bar: f64) -> DenoiseRequest<'a> {
        DenoiseRequest {
            latents,
            t: 500,
            alpha_bar,
            depth,
            prompt: "a red chair",
            view_suffix: "front view",
            guidance: GuidanceConfig::default(),
            camera,
            view: 0,
            conditioning: Conditioning::Joint,
        }
    }
}
