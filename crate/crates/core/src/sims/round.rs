use std::borrow::Cow;

use super::aggregate::{aggregate_view, copy_selected, renoise_visited, AggregationState};
use super::rig::CameraRig;
use crate::denoiser::{Conditioning, DenoiseRequest, Denoiser};
use crate::diffusion::{ddim_step, predict_x0, GuidanceConfig, NoiseSchedule};
use crate::error::{shape_err, Error, Result};
use crate::geometry::{prompt_view_suffix, Camera, TriMesh};
use crate::raster::{fill_background, normalized_depth, rasterize, render_texture, texel_means, texel_quality, RasterOutput};
use crate::rng::{self, tag};
use crate::tensor::{Grid, LatentImage, LatentTexture};

/// Latent channels of the texture and every view.
pub const LATENT_CHANNELS: usize = 4;

/// Settings of one sampling round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundParams {
    pub eta: f64,
    pub tau: f64,
    pub guidance: GuidanceConfig,
    pub seed: u64,
    /// Distinguishes the random streams of different rounds of one run.
    pub round: u64,
    pub prompt: String,
}

impl Default for RoundParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            tau: 0.5,
            guidance: GuidanceConfig::default(),
            seed: 0,
            round: 1,
            prompt: String::new(),
        }
    }
}

impl RoundParams {
    fn stream(&self, tags: &[u64]) -> rng::Rng {
        let mut path = vec![self.round];
        path.extend_from_slice(tags);
        rng::stream(self.seed, &path)
    }

    /// Initial texture noise of this round.
    pub fn init_noise(&self, tex_h: usize, tex_w: usize) -> LatentTexture {
        rng::normal_grid(tex_h, tex_w, LATENT_CHANNELS, &mut self.stream(&[tag::INIT]))
    }

    pub fn renoise_stream(&self, step: usize) -> rng::Rng {
        self.stream(&[tag::RENOISE, step as u64])
    }

    pub fn background_stream(&self, step: usize, view: usize) -> rng::Rng {
        self.stream(&[tag::BACKGROUND, step as u64, view as u64])
    }

    pub fn ddim_stream(&self, step: usize, view: usize) -> rng::Rng {
        self.stream(&[tag::DDIM, step as u64, view as u64])
    }
}

/// One camera's work at one step, reported to a [`SimsObserver`].
pub struct ViewEvent<'a> {
    /// Step position, 0 for the noisiest.
    pub step: usize,
    pub view: usize,
    pub t: usize,
    pub t_prev: usize,
    pub camera: &'a Camera,
    pub raster: &'a RasterOutput,
    /// Texture the view was rendered from.
    pub input_texture: &'a LatentTexture,
    /// Rendered latents after background fill (`x_{i,n}`).
    pub input: &'a LatentImage,
    pub eps: &'a LatentImage,
    /// DDIM update of the view (`x_{i−1,n}`).
    pub output: &'a LatentImage,
    /// Running texture after aggregating this view.
    pub z_run: &'a LatentTexture,
    pub state: &'a AggregationState,
    pub written: &'a [bool],
}

/// Hooks into the sampling loop, for tracing and tests.
pub trait SimsObserver {
    fn view_done(&mut self, _event: &ViewEvent<'_>) {}
    /// `z` is the texture at the end of step `step` (noise level `t_prev`).
    fn step_done(&mut self, _step: usize, _z: &LatentTexture) {}
}

impl SimsObserver for () {}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    /// Texture assembled from the views' clean predictions at the final
    /// step; texels no final-step view sees keep the last latent value.
    pub z0: LatentTexture,
    /// Latent texture after the last step, at noise level `t_min`.
    pub z_final: LatentTexture,
    /// Clean prediction of every view at the final step.
    pub xhat0_views: Vec<LatentImage>,
    /// Cameras of the final step.
    pub cameras: Vec<Camera>,
    /// Texels seen by some view at the final step.
    pub covered: Vec<bool>,
}

impl RoundOutput {
    pub fn coverage(&self) -> f64 {
        self.covered.iter().filter(|&&c| c).count() as f64 / self.covered.len().max(1) as f64
    }
}

#[derive(Clone)]
struct PreparedView {
    camera: Camera,
    raster: RasterOutput,
    depth: Grid,
    suffix: &'static str,
    prompt: String,
}

fn prepare(mesh: &TriMesh, cameras: Vec<Camera>, tex_h: usize, tex_w: usize, prompt: &str) -> Vec<PreparedView> {
    cameras
        .into_iter()
        .map(|camera| {
            let raster = rasterize(mesh, &camera, tex_h, tex_w);
            let suffix = prompt_view_suffix(&camera);
            PreparedView {
                depth: normalized_depth(&raster),
                prompt: format!("{prompt}, {suffix}"),
                camera,
                raster,
                suffix,
            }
        })
        .collect()
}

/// Runs one full round of the sequential interlaced multiview sampler.
///
/// At every step the views are visited in index order. Each view renders the
/// running texture (re-noised to the step's level where earlier views have
/// already written), denoises it by one DDIM step and writes its result back
/// wherever it is the best view seen so far this step. At the last step the
/// views' clean predictions are merged the same way into `z0`.
#[allow(clippy::too_many_arguments)]
pub fn sims_round(
    mesh: &TriMesh,
    rig: &CameraRig,
    tex_dims: (usize, usize),
    sched: &NoiseSchedule,
    denoiser: &dyn Denoiser,
    params: &RoundParams,
    z_init: Option<&LatentTexture>,
    observer: &mut dyn SimsObserver,
) -> Result<RoundOutput> {
    let (tex_h, tex_w) = tex_dims;
    if tex_h == 0 || tex_w == 0 || tex_h % 8 != 0 || tex_w % 8 != 0 {
        return Err(shape_err(format!("texture {tex_h}x{tex_w} must be a nonzero multiple of 8")));
    }
    if rig.is_empty() {
        return Err(Error::Config("camera rig is empty".into()));
    }
    if !(0.0..=1.0).contains(&params.tau) {
        return Err(Error::Config(format!("temperature {} outside [0, 1]", params.tau)));
    }
    mesh.require_uvs()?;
    params.guidance.validate()?;

    let mut z = match z_init {
        Some(z) => {
            if z.dims() != (tex_h, tex_w, LATENT_CHANNELS) {
                return Err(shape_err(format!(
                    "initial texture is {:?}, expected {:?}",
                    z.dims(),
                    (tex_h, tex_w, LATENT_CHANNELS)
                )));
            }
            z.clone()
        }
        None => params.init_noise(tex_h, tex_w),
    };

    let fixed_views = match rig {
        CameraRig::Fixed { cameras } => Some(prepare(mesh, cameras.clone(), tex_h, tex_w, &params.prompt)),
        CameraRig::Jittered { .. } => None,
    };

    let steps = sched.steps();
    let mut state = AggregationState::new(tex_h * tex_w);
    let mut xhat0_views = Vec::new();
    let mut clean = Grid::zeros(tex_h, tex_w, LATENT_CHANNELS);
    let mut last_cameras = Vec::new();

    for step in 0..steps {
        let t = sched.step_time(step);
        let t_prev = sched.step_target(step);
        let alphas = sched.step_alphas(step);
        let last = step + 1 == steps;

        let views: Cow<[PreparedView]> = match &fixed_views {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(prepare(mesh, rig.cameras_at(mesh, step), tex_h, tex_w, &params.prompt)),
        };

        state.reset();
        let z_level = z;
        let mut z_run = z_level.clone();
        let eps_shared = rng::normal_grid(tex_h, tex_w, LATENT_CHANNELS, &mut params.renoise_stream(step));

        for (n, view) in views.iter().enumerate() {
            let input_texture = renoise_visited(&z_run, &z_level, &state.mask, alphas, &eps_shared);
            let mut input = render_texture(&input_texture, &view.raster)?;
            fill_background(&mut input, &view.raster, &mut params.background_stream(step, n))?;

            let req = DenoiseRequest {
                latents: &input,
                t,
                alpha_bar: alphas.alpha_bar,
                depth: &view.depth,
                prompt: &view.prompt,
                view_suffix: view.suffix,
                guidance: params.guidance,
                camera: &view.camera,
                view: n,
                conditioning: Conditioning::Joint,
            };
            let eps = denoiser.predict_guided(&req)?;
            eps.ensure_same_shape(&input, "denoiser output")?;
            let output = ddim_step(&input, &eps, alphas, params.eta, params.tau, &mut params.ddim_stream(step, n))?;

            let (means, counts) = texel_means(&output, &view.raster)?;
            let quality = texel_quality(&view.raster);
            let written = aggregate_view(&mut z_run, &means, &counts, &quality, &mut state);

            if last {
                let x0 = predict_x0(&input, &eps, alphas.alpha_bar)?;
                let (x0_means, _) = texel_means(&x0, &view.raster)?;
                copy_selected(&mut clean, &x0_means, &written);
                xhat0_views.push(x0);
            }

            observer.view_done(&ViewEvent {
                step,
                view: n,
                t,
                t_prev,
                camera: &view.camera,
                raster: &view.raster,
                input_texture: &input_texture,
                input: &input,
                eps: &eps,
                output: &output,
                z_run: &z_run,
                state: &state,
                written: &written,
            });
        }

        if !z_run.is_finite() {
            return Err(Error::Numerical(format!("non-finite latent texture after step {step} (t = {t})")));
        }
        observer.step_done(step, &z_run);
        if last {
            last_cameras = views.iter().map(|v| v.camera).collect();
        }
        z = z_run;
    }

    let covered = state.mask.clone();
    let mut z0 = z.clone();
    copy_selected(&mut z0, &clean, &covered);
    Ok(RoundOutput {
        z0,
        z_final: z,
        xhat0_views,
        cameras: last_cameras,
        covered,
    })
}
