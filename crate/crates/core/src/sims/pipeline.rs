use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::rig::CameraRig;
use super::round::{sims_round, RoundOutput, RoundParams, SimsObserver};
use crate::denoiser::Denoiser;
use crate::diffusion::{make_schedule, stochastic_encode, GuidanceConfig, NoiseSchedule, ScheduleParams};
use crate::error::{Error, Result};
use crate::geometry::{make_cameras, texture_resolution, Camera, CameraPreset, ResolutionMode, TriMesh};
use crate::rng::{self, tag};
use crate::tensor::LatentTexture;

/// Run-level sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimsConfig {
    pub eta: f64,
    pub tau_coarse: f64,
    pub tau_refine: f64,
    pub schedule: ScheduleParams,
    /// Diffusion time the upsampled coarse texture is re-noised to.
    pub refine_t: usize,
    pub guidance: GuidanceConfig,
    pub seed: u64,
    /// 1: coarse round only. 2: coarse round then refinement.
    pub rounds: u8,
    /// Factor on `tan(fov/2)` of the fitted FOV for the coarse cameras.
    pub coarse_fov_widen: f64,
    /// Base texture side for the coarse resolution rule.
    pub base_resolution: usize,
    /// Overrides the coarse texture side.
    pub coarse_resolution: Option<usize>,
}

impl Default for SimsConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            tau_coarse: 0.5,
            tau_refine: 0.0,
            schedule: ScheduleParams::default(),
            refine_t: 500,
            guidance: GuidanceConfig::default(),
            seed: 0,
            rounds: 2,
            coarse_fov_widen: 2.0,
            base_resolution: 64,
            coarse_resolution: None,
        }
    }
}

impl SimsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, tau) in [("tau_coarse", self.tau_coarse), ("tau_refine", self.tau_refine)] {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("{name} = {tau} outside [0, 1]")));
            }
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Config(format!("eta = {} is negative", self.eta)));
        }
        if !matches!(self.rounds, 1 | 2) {
            return Err(Error::Config(format!("rounds = {} (expected 1 or 2)", self.rounds)));
        }
        let s = &self.schedule;
        if self.rounds == 2 && !(s.t_min < self.refine_t && self.refine_t < s.t_max) {
            return Err(Error::Config(format!(
                "refine_t = {} outside ({}, {})",
                self.refine_t, s.t_min, s.t_max
            )));
        }
        if !(self.coarse_fov_widen >= 1.0) {
            return Err(Error::Config(format!("coarse_fov_widen = {} below 1", self.coarse_fov_widen)));
        }
        if let Some(side) = self.coarse_resolution {
            if side == 0 || side % 8 != 0 {
                return Err(Error::Config(format!("coarse resolution {side} is not a positive multiple of 8")));
            }
        }
        self.guidance.validate()
    }

    /// Parameters of round `round` (1 or 2).
    pub fn round_params(&self, round: u64, prompt: &str) -> RoundParams {
        RoundParams {
            eta: self.eta,
            tau: if round == 1 { self.tau_coarse } else { self.tau_refine },
            guidance: self.guidance,
            seed: self.seed,
            round,
            prompt: prompt.to_owned(),
        }
    }

    /// Coarse-round rig: jittered cameras with the widened FOV.
    pub fn coarse_rig(&self, preset: &CameraPreset) -> CameraRig {
        CameraRig::Jittered {
            preset: CameraPreset {
                distance: preset.distance,
                image_size: preset.image_size,
                ..CameraPreset::jittered18()
            },
            fov_scale: self.coarse_fov_widen,
            seed: rng::derive_seed(self.seed, &[1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub faces: usize,
    pub charts: usize,
    pub surface_area: f64,
    pub uv_fraction: f64,
}

impl MeshSummary {
    pub fn of(mesh: &TriMesh) -> Self {
        let mut charts = mesh.chart_ids.clone();
        charts.sort_unstable();
        charts.dedup();
        Self {
            vertices: mesh.vertices.len(),
            faces: mesh.faces.len(),
            charts: charts.len(),
            surface_area: mesh.surface_area(),
            uv_fraction: mesh.uv_area_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub texture: [usize; 2],
    pub schedule: ScheduleParams,
    /// Visited times including the final target.
    pub times: Vec<usize>,
    pub eta: f64,
    pub tau: f64,
    pub rig: CameraRig,
    /// Cameras of the last step.
    pub cameras: Vec<Camera>,
    pub coverage: f64,
    pub seconds: f64,
}

/// Everything needed to reproduce a pipeline run, plus outcome statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub prompt: String,
    pub denoiser: String,
    pub config: SimsConfig,
    pub preset: CameraPreset,
    pub mesh: MeshSummary,
    pub refine_t: Option<usize>,
    pub rounds: Vec<RoundRecord>,
    pub total_seconds: f64,
}

pub struct PipelineOutput {
    /// Per-round results; the last one is the final texture.
    pub rounds: Vec<RoundOutput>,
    pub manifest: RunManifest,
}

impl PipelineOutput {
    pub fn result(&self) -> &RoundOutput {
        self.rounds.last().expect("at least one round")
    }
}

/// Nearest-upsamples the coarse texture and re-noises it to `t`.
pub fn refine_init(
    z0: &LatentTexture,
    dims: (usize, usize),
    sched: &NoiseSchedule,
    t: usize,
    seed: u64,
) -> LatentTexture {
    let up = z0.resize_nearest(dims.0, dims.1);
    stochastic_encode(&up, sched.alpha_bar(t), &mut rng::stream(seed, &[2, tag::ENCODE]))
}

/// Coarse-to-fine texturing.
///
/// Round 1 samples a coarse texture with wide-FOV jittered cameras. With two
/// rounds, the result is upsampled by the FOV tangent ratio, re-noised to
/// `refine_t`, and sampled again from there with the preset's fitted
/// cameras.
pub fn run_pipeline(
    mesh: &TriMesh,
    prompt: &str,
    preset: &CameraPreset,
    denoiser: &dyn Denoiser,
    cfg: &SimsConfig,
    observer: &mut dyn SimsObserver,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    preset.validate()?;
    let started = Instant::now();
    let sched = make_schedule(cfg.schedule)?;

    let coarse_side = match cfg.coarse_resolution {
        Some(side) => side,
        None => texture_resolution(mesh, ResolutionMode::Coarse, cfg.base_resolution)?.0,
    };
    let rig1 = cfg.coarse_rig(preset);
    let p1 = cfg.round_params(1, prompt);
    let t1 = Instant::now();
    let round1 = sims_round(mesh, &rig1, (coarse_side, coarse_side), &sched, denoiser, &p1, None, observer)?;
    let mut records = vec![record(1, &rig1, &sched, &p1, &round1, t1.elapsed().as_secs_f64())];
    log::info!(
        "round 1: {coarse_side}x{coarse_side} texture, {} steps, coverage {:.3}",
        sched.steps(),
        round1.coverage()
    );
    let mut rounds = vec![round1];

    if cfg.rounds == 2 {
        let cams2 = make_cameras(preset, mesh, cfg.seed);
        let old_fov = rig1.cameras_at(mesh, 0)[0].fov_y;
        let new_fov = cams2[0].fov_y;
        let dims = texture_resolution(mesh, ResolutionMode::Refine { old_fov, new_fov }, coarse_side)?;
        let sched2 = sched.resumed_at(cfg.refine_t)?;
        let init = refine_init(&rounds[0].z0, dims, &sched, cfg.refine_t, cfg.seed);
        let rig2 = CameraRig::fixed(cams2);
        let p2 = cfg.round_params(2, prompt);
        let t2 = Instant::now();
        let round2 = sims_round(mesh, &rig2, dims, &sched2, denoiser, &p2, Some(&init), observer)?;
        records.push(record(2, &rig2, &sched2, &p2, &round2, t2.elapsed().as_secs_f64()));
        log::info!(
            "round 2: {}x{} texture from t = {}, {} steps, coverage {:.3}",
            dims.0,
            dims.1,
            cfg.refine_t,
            sched2.steps(),
            round2.coverage()
        );
        rounds.push(round2);
    }

    let manifest = RunManifest {
        seed: cfg.seed,
        prompt: prompt.to_owned(),
        denoiser: denoiser.describe(),
        config: cfg.clone(),
        preset: preset.clone(),
        mesh: MeshSummary::of(mesh),
        refine_t: (cfg.rounds == 2).then_some(cfg.refine_t),
        rounds: records,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(PipelineOutput { rounds, manifest })
}

fn record(round: u64, rig: &CameraRig, sched: &NoiseSchedule, p: &RoundParams, out: &RoundOutput, seconds: f64) -> RoundRecord {
    RoundRecord {
        round,
        texture: [out.z0.height(), out.z0.width()],
        schedule: *sched.params(),
        times: sched.times().to_vec(),
        eta: p.eta,
        tau: p.tau,
        rig: rig.clone(),
        cameras: out.cameras.clone(),
        coverage: out.coverage(),
        seconds,
    }
}
