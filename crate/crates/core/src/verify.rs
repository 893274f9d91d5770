//! Built-in verification suites with fixed fixtures.
//!
//! Every check computes its expected values independently of the code under
//! test (closed forms, plain DDIM, finite differences) and reports a
//! pass/fail line with the measured quantity and its wall time.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::colorfield::{self, check as fieldcheck, ColorField, DistillConfig, FieldConfig};
use crate::denoiser::{
    delta_epsilon, Conditioning, DeltaOracle, DenoiseRequest, Denoiser, GaussianOracle, GaussianOracleParams,
};
use crate::diffusion::{ddim_step, make_schedule, predict_x0, GuidanceConfig, ScheduleParams, StepAlphas};
use crate::geometry::{make_cameras, primitives, texture_resolution, Camera, CameraPreset, ResolutionMode, TriMesh, Vec3};
use crate::raster::{inverse_render, normalized_depth, quad_camera, rasterize, render_texture, texel_means, texel_quality};
use crate::rng::{self, tag};
use crate::sims::{
    aggregate_view, renoise_visited, sims_round, run_pipeline, AggregationState, CameraRig, RoundParams,
    SimsConfig, SimsObserver,
};
use crate::tensor::Grid;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    /// Criterion number for the acceptance criteria, a short slug otherwise.
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    /// Wall-time budget; exceeding it fails the check.
    pub budget: Option<f64>,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let budget = self.budget.map(|b| format!(" / {b:.0} s")).unwrap_or_default();
        write!(
            f,
            "{} [{}] {}: {} ({:.2} s{budget})",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(id: &str, name: &str, budget: Option<f64>, body: impl FnOnce() -> crate::Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let outcome = body();
    let seconds = start.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = budget.is_none_or(|b| seconds < b);
    let detail = if ok && !in_time { format!("{detail}; over time budget") } else { detail };
    Check {
        id: id.to_owned(),
        name: name.to_owned(),
        passed: ok && in_time,
        detail,
        seconds,
        budget,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Adjoint,
    Schedule,
    Oracle,
    Sims,
    Colorfield,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["adjoint", "schedule", "oracle", "sims", "colorfield", "all"];
}

impl FromStr for Suite {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        Ok(match s {
            "adjoint" => Self::Adjoint,
            "schedule" => Self::Schedule,
            "oracle" => Self::Oracle,
            "sims" => Self::Sims,
            "colorfield" => Self::Colorfield,
            "all" => Self::All,
            other => {
                return Err(crate::Error::Config(format!(
                    "unknown suite {other:?} (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Runs a suite, calling `report` after each check.
pub fn run_suite(suite: Suite, mut report: impl FnMut(&Check)) -> Vec<Check> {
    let checks: Vec<fn() -> Check> = match suite {
        Suite::Adjoint => vec![criterion_5],
        Suite::Schedule => vec![schedule_values, criterion_4, criterion_8],
        Suite::Oracle => vec![oracle_closed_forms, gaussian_ddim_transport],
        Suite::Sims => vec![criterion_1, criterion_2, criterion_6, criterion_3, criterion_9],
        Suite::Colorfield => vec![criterion_7],
        Suite::All => vec![
            criterion_5,
            schedule_values,
            criterion_4,
            criterion_8,
            oracle_closed_forms,
            gaussian_ddim_transport,
            criterion_1,
            criterion_2,
            criterion_6,
            criterion_3,
            criterion_9,
            criterion_7,
        ],
    };
    checks
        .into_iter()
        .map(|c| {
            let r = c();
            report(&r);
            r
        })
        .collect()
}

/// Acceptance criterion `n` (1 to 9).
pub fn criterion(n: usize) -> Option<Check> {
    let f: fn() -> Check = match n {
        1 => criterion_1,
        2 => criterion_2,
        3 => criterion_3,
        4 => criterion_4,
        5 => criterion_5,
        6 => criterion_6,
        7 => criterion_7,
        8 => criterion_8,
        9 => criterion_9,
        _ => return None,
    };
    Some(f())
}

fn sphere() -> TriMesh {
    primitives::uv_sphere(0.5, 24, 12)
}

fn request<'a>(latents: &'a Grid, depth: &'a Grid, camera: &'a Camera, t: usize, alpha_bar: f64) -> DenoiseRequest<'a> {
    DenoiseRequest {
        latents,
        t,
        alpha_bar,
        depth,
        prompt: "",
        view_suffix: "",
        guidance: GuidanceConfig::default(),
        camera,
        view: 0,
        conditioning: Conditioning::Joint,
    }
}

/// One camera that sees the whole quad with one pixel per texel: the SIMS
/// trajectory must equal plain DDIM on that image step for step.
pub fn criterion_1() -> Check {
    timed("1", "single-view equivalence", Some(5.0), || {
        let size = 64;
        let mesh = primitives::quad();
        let cam = quad_camera(size);
        let raster = rasterize(&mesh, &cam, size, size);
        let identity = raster.foreground_count() == size * size
            && raster.texel_index.iter().enumerate().all(|(p, &t)| t as usize == p);
        if !identity {
            return Ok((false, "fixture does not map pixels one-to-one onto texels".into()));
        }
        let sched = make_schedule(ScheduleParams::default())?;
        let oracle = GaussianOracle::new(GaussianOracleParams::uniform(0.7, 0.2))?;
        let params = RoundParams {
            seed: 7,
            ..RoundParams::default()
        };

        struct Trajectory(Vec<Grid>);
        impl SimsObserver for Trajectory {
            fn step_done(&mut self, _step: usize, z: &Grid) {
                self.0.push(z.clone());
            }
        }
        let mut traj = Trajectory(Vec::new());
        sims_round(&mesh, &CameraRig::fixed(vec![cam]), (size, size), &sched, &oracle, &params, None, &mut traj)?;

        // Plain DDIM on the image with the same noise streams.
        let depth = normalized_depth(&raster);
        let mut x = params.init_noise(size, size);
        let mut worst = 0.0f32;
        for step in 0..sched.steps() {
            let a = sched.step_alphas(step);
            let eps = oracle.predict_epsilon(&request(&x, &depth, &cam, sched.step_time(step), a.alpha_bar))?;
            x = ddim_step(&x, &eps, a, params.eta, params.tau, &mut params.ddim_stream(step, 0))?;
            worst = worst.max(traj.0[step].max_abs_diff(&x));
        }
        Ok((
            worst <= 1e-6 && traj.0.len() == sched.steps(),
            format!("{} steps, max |SIMS - DDIM| = {worst:.2e} (limit 1e-6)", sched.steps()),
        ))
    })
}

/// Delta oracle targeting renders of a known texture on a sphere.
pub fn criterion_2() -> Check {
    timed("2", "delta-oracle texture recovery", Some(60.0), || {
        let mesh = sphere();
        let cams = make_cameras(&CameraPreset::default9(), &mesh, 0);
        let target = rng::normal_grid(64, 64, 4, &mut rng::stream(2024, &[]));
        let rasters: Vec<_> = cams.iter().map(|c| rasterize(&mesh, c, 64, 64)).collect();
        let views = rasters
            .iter()
            .map(|r| render_texture(&target, r))
            .collect::<crate::Result<Vec<_>>>()?;
        let oracle = DeltaOracle::from_views(views.clone().into_iter().enumerate());
        let sched = make_schedule(ScheduleParams::default())?;
        let params = RoundParams {
            eta: 0.0,
            seed: 2,
            ..RoundParams::default()
        };
        let out = sims_round(&mesh, &CameraRig::fixed(cams), (64, 64), &sched, &oracle, &params, None, &mut ())?;
        let mut view_err = 0.0f32;
        for (n, r) in rasters.iter().enumerate() {
            for (p, _) in r.foreground() {
                for (a, b) in out.xhat0_views[n].cell(p).iter().zip(views[n].cell(p)) {
                    view_err = view_err.max((a - b).abs());
                }
            }
        }
        let mut tex_err = 0.0f32;
        let mut covered = 0;
        for t in (0..out.covered.len()).filter(|&t| out.covered[t]) {
            covered += 1;
            for (a, b) in out.z0.cell(t).iter().zip(target.cell(t)) {
                tex_err = tex_err.max((a - b).abs());
            }
        }
        Ok((
            view_err <= 1e-2 && tex_err <= 2e-2 && covered > 0,
            format!(
                "views max err {view_err:.2e} (limit 1e-2), z0 max err {tex_err:.2e} on {covered} covered texels (limit 2e-2)"
            ),
        ))
    })
}

/// Distribution of covered texels over 200 single-round pipeline runs with
/// the Gaussian oracle.
pub fn criterion_3() -> Check {
    timed("3", "gaussian-oracle distribution", Some(600.0), || {
        let mesh = sphere();
        let oracle = GaussianOracle::new(GaussianOracleParams::uniform(0.7, 0.2))?;
        let preset = CameraPreset::default9();
        let moments: Vec<(f64, f64, usize)> = (0..200u64)
            .into_par_iter()
            .map(|seed| {
                let cfg = SimsConfig {
                    rounds: 1,
                    seed,
                    ..SimsConfig::default()
                };
                let out = run_pipeline(&mesh, "", &preset, &oracle, &cfg, &mut ())?;
                let r = out.result();
                let mut acc = (0.0, 0.0, 0usize);
                for t in (0..r.covered.len()).filter(|&t| r.covered[t]) {
                    for &v in r.z0.cell(t) {
                        acc.0 += v as f64;
                        acc.1 += (v as f64).powi(2);
                        acc.2 += 1;
                    }
                }
                Ok(acc)
            })
            .collect::<crate::Result<_>>()?;
        let (s, s2, n) = moments.iter().fold((0.0, 0.0, 0), |a, m| (a.0 + m.0, a.1 + m.1, a.2 + m.2));
        let mean = s / n as f64;
        let std = (s2 / n as f64 - mean * mean).max(0.0).sqrt();
        Ok((
            (mean - 0.7).abs() <= 0.05 && std <= 0.25,
            format!("200 runs, {n} texel values: mean {mean:.4} (0.7 ± 0.05), std {std:.4} (≤ 0.25)"),
        ))
    })
}

/// Monte Carlo variance of re-noised texels at five schedule points.
pub fn criterion_4() -> Check {
    timed("4", "renoise marginal variance", Some(10.0), || {
        let sched = make_schedule(ScheduleParams::default())?;
        let (h, w, c) = (250, 100, 4);
        let mask = vec![true; h * w];
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        for (k, step) in [0usize, 12, 25, 37, 49].into_iter().enumerate() {
            let a = sched.step_alphas(step);
            // Noise content of a level-(i−1) latent of zero data.
            let z_prev = rng::normal_grid(h, w, c, &mut rng::stream(4, &[k as u64, 0]))
                .scale((1.0 - a.alpha_bar_prev).sqrt() as f32);
            let z_i = Grid::zeros(h, w, c);
            let eps = rng::normal_grid(h, w, c, &mut rng::stream(4, &[k as u64, 1]));
            let out = renoise_visited(&z_prev, &z_i, &mask, a, &eps);
            let var = out.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / out.data().len() as f64;
            let want = 1.0 - a.alpha_bar;
            let rel = (var / want - 1.0).abs();
            worst = worst.max(rel);
            parts.push(format!("t={} {var:.4}/{want:.4}", sched.step_time(step)));
        }
        Ok((worst <= 0.02, format!("{}; worst rel err {worst:.4} (limit 0.02)", parts.join(", "))))
    })
}

/// Inner-product identity of render and inverse render on random blobs.
pub fn criterion_5() -> Check {
    timed("5", "render adjoint identity", Some(10.0), || {
        let mut g = rng::stream(5, &[]);
        let presets = [CameraPreset::default9(), CameraPreset::jittered18()];
        let mut worst = 0.0f64;
        let mut foreground = 0;
        for k in 0..20u64 {
            let mesh = primitives::random_blob(&mut g);
            let cams = make_cameras(&presets[k as usize % 2], &mesh, k);
            let cam = cams[k as usize % cams.len()];
            let (th, tw) = (32 + 8 * (k as usize % 3), 40);
            let r = rasterize(&mesh, &cam, th, tw);
            foreground += r.foreground_count();
            let z = rng::normal_grid(th, tw, 4, &mut g);
            let x = rng::normal_grid(cam.image_h, cam.image_w, 4, &mut g);
            let lhs = f32_dot(&render_texture(&z, &r)?, &x);
            let rhs = f32_dot(&z, &inverse_render(&x, &r)?.0);
            let rel = (lhs - rhs).abs() as f64 / lhs.abs().max(rhs.abs()).max(f32::MIN_POSITIVE) as f64;
            worst = worst.max(rel);
        }
        Ok((
            worst <= 1e-5 && foreground > 0,
            format!("20 fixtures, {foreground} foreground pixels, worst rel err {worst:.2e} (limit 1e-5)"),
        ))
    })
}

/// Pairwise-summed f32 inner product.
fn f32_dot(a: &Grid, b: &Grid) -> f32 {
    fn sum(v: &[f32]) -> f32 {
        if v.len() <= 64 {
            v.iter().sum()
        } else {
            let (l, r) = v.split_at(v.len() / 2);
            sum(l) + sum(r)
        }
    }
    let prod: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    sum(&prod)
}

/// Head-on and oblique views of the quad write into one texture; the
/// head-on value must win on every texel both see, in either order.
pub fn criterion_6() -> Check {
    timed("6", "quality aggregation", Some(5.0), || {
        let mesh = primitives::quad();
        let size = 64;
        let head_on = quad_camera(size);
        let angle = 60f64.to_radians();
        let oblique = Camera::look_at(
            Vec3::new(0.0, -3.0 * angle.sin(), 3.0 * angle.cos()),
            Vec3::zeros(),
            Vec3::y(),
            head_on.fov_y,
            size,
            size,
        );
        let r_head = rasterize(&mesh, &head_on, size, size);
        let r_obl = rasterize(&mesh, &oblique, size, size);

        // Jacobian at the pixel nearest the image centre: 1 head-on; at
        // twice the distance and 60° tilt, 2 · 2/cos 60° = 8.
        let centre = (size / 2) * size + size / 2;
        let (j_head, j_obl) = (r_head.jac[centre] as f64, r_obl.jac[centre] as f64);
        let jac_ok = (j_head - 1.0).abs() < 1e-3 && (j_obl / 8.0 - 1.0).abs() < 0.05;

        let head_val = 1.0f32;
        let obl_val = -2.0f32;
        let img_head = Grid::filled(size, size, 4, head_val);
        let img_obl = Grid::filled(size, size, 4, obl_val);
        let mut shared = 0;
        let mut wrong = 0;
        for order in [[0, 1], [1, 0]] {
            let mut z = Grid::filled(size, size, 4, 0.0);
            let mut state = AggregationState::new(size * size);
            for v in order {
                let (img, r) = if v == 0 { (&img_head, &r_head) } else { (&img_obl, &r_obl) };
                let (means, counts) = texel_means(img, r)?;
                aggregate_view(&mut z, &means, &counts, &texel_quality(r), &mut state);
            }
            let (_, c_head) = inverse_render(&img_head, &r_head)?;
            let (_, c_obl) = inverse_render(&img_obl, &r_obl)?;
            for t in 0..size * size {
                if c_head[t] > 0.0 && c_obl[t] > 0.0 {
                    shared += 1;
                    if z.cell(t).iter().any(|&v| v != head_val) {
                        wrong += 1;
                    }
                }
            }
        }
        Ok((
            jac_ok && wrong == 0 && shared > 0,
            format!(
                "|J| head-on {j_head:.4} (1), oblique {j_obl:.3} (8); {shared} shared texels over both orders, {wrong} not from the head-on view"
            ),
        ))
    })
}

/// Gradient check on every parameter group, then the checkerboard self-fit.
pub fn criterion_7() -> Check {
    timed("7", "color-field gradient check and self-fit", Some(120.0), || {
        let (field, samples) = fieldcheck::gradient_fixture(0, 10, 0.02);
        let g = fieldcheck::gradient_check(&field, &samples, 1e-3);
        let board = fieldcheck::checkerboard_samples();
        let mut f = ColorField::new(FieldConfig::default(), &mut rng::stream(0, &[tag::FIELD_INIT]))?;
        let cfg = DistillConfig {
            iters: 500,
            lr: 0.01,
            ..DistillConfig::default()
        };
        colorfield::distill(&mut f, &board, &cfg)?;
        let psnr = fieldcheck::psnr(&f, &board);
        Ok((
            g.worst() < 1e-3 && psnr > 30.0,
            format!(
                "{} params, rel err tables {:.1e}, weights {:.1e}, biases {:.1e} (limit 1e-3); checkerboard {psnr:.2} dB after 500 iters (> 30)",
                g.checked, g.tables, g.weights, g.biases
            ),
        ))
    })
}

/// Tangent-ratio refinement from 60° to 30° on a 64 texture.
pub fn criterion_8() -> Check {
    timed("8", "refinement resolution", None, || {
        let (old, new) = (60f64.to_radians(), 30f64.to_radians());
        let (h, w) = texture_resolution(&primitives::quad(), ResolutionMode::Refine { old_fov: old, new_fov: new }, 64)?;
        // 64 · tan 30° / tan 15° = 137.9, next multiple of 8
        let expected = ((64.0 * (old / 2.0).tan() / (new / 2.0).tan() / 8.0).ceil() * 8.0) as usize;
        Ok((
            (h, w) == (144, 144) && expected == 144,
            format!("64 -> {h}x{w} (expected 144)"),
        ))
    })
}

/// Full two-round pipeline with the default 9-camera preset.
pub fn criterion_9() -> Check {
    timed("9", "end-to-end runtime", Some(60.0), || {
        let mesh = sphere();
        let oracle = GaussianOracle::new(GaussianOracleParams::uniform(0.7, 0.2))?;
        let cfg = SimsConfig {
            seed: 9,
            ..SimsConfig::default()
        };
        let out = run_pipeline(&mesh, "a ball", &CameraPreset::default9(), &oracle, &cfg, &mut ())?;
        let m = &out.manifest;
        let shape: Vec<String> = m.rounds.iter().map(|r| format!("{}² × {} steps", r.texture[0], r.times.len() - 1)).collect();
        Ok((
            m.rounds.len() == 2 && out.result().z0.is_finite(),
            format!("rounds [{}], pipeline {:.2} s", shape.join(", "), m.total_seconds),
        ))
    })
}

/// Schedule endpoints and step layout.
pub fn schedule_values() -> Check {
    timed("schedule", "schedule values", None, || {
        let s = make_schedule(ScheduleParams::default())?;
        // scaled-linear betas, cumulative product in f64
        let (b0, b1) = (0.00085f64.sqrt(), 0.012f64.sqrt());
        let mut prod = 1.0;
        let mut at = [0.0; 3];
        for t in 1..=1000 {
            let beta = (b0 + (b1 - b0) * (t - 1) as f64 / 999.0).powi(2);
            prod *= 1.0 - beta;
            match t {
                1 => at[0] = prod,
                500 => at[1] = prod,
                1000 => at[2] = prod,
                _ => {}
            }
        }
        let ok_ab = [1, 500, 1000].iter().zip(at).all(|(&t, want)| (s.alpha_bar(t) - want).abs() < 1e-12);
        let times = s.times();
        let ok_t = s.steps() == 50 && times.first() == Some(&1000) && times.last() == Some(&300);
        Ok((
            ok_ab && ok_t,
            format!(
                "ᾱ(1) {:.5}, ᾱ(500) {:.6}, ᾱ(1000) {:.6}; {} steps {}..{}",
                s.alpha_bar(1),
                s.alpha_bar(500),
                s.alpha_bar(1000),
                s.steps(),
                times[0],
                times[times.len() - 1]
            ),
        ))
    })
}

/// Delta and Gaussian oracle values and the x̂₀ identity.
pub fn oracle_closed_forms() -> Check {
    timed("oracle", "oracle closed forms", None, || {
        let x = Grid::filled(1, 1, 1, (0.5 * 2.0 + 0.75f64.sqrt()) as f32);
        let target = Grid::filled(1, 1, 1, 2.0);
        let eps = delta_epsilon(&x, &target, 0.25)?;
        let d_ok = (eps.data()[0] - 1.0).abs() < 1e-6;
        let x0 = predict_x0(&x, &eps, 0.25)?;
        let x0_ok = (x0.data()[0] - 2.0).abs() < 1e-6;

        let g = GaussianOracle::new(GaussianOracleParams::uniform(2.0, 0.5))?;
        let xt = Grid::filled(4, 4, 4, 2.0);
        let depth = Grid::zeros(4, 4, 1);
        let cam = quad_camera(4);
        let e = g.predict_epsilon(&request(&xt, &depth, &cam, 500, 0.25))?;
        let want = 0.75f64.sqrt() * (2.0 - 1.0) / (0.0625 + 0.75);
        let g_ok = e.data().iter().all(|&v| (v as f64 - want).abs() < 1e-6);
        Ok((
            d_ok && x0_ok && g_ok,
            format!("delta ε {:.6} (1), x̂₀ {:.6} (2), gaussian ε {:.6} ({want:.6})", eps.data()[0], x0.data()[0], e.data()[0]),
        ))
    })
}

/// Deterministic DDIM with the Gaussian oracle transports N(0, 1) to
/// N(μ, s²): 1000 independent runs.
pub fn gaussian_ddim_transport() -> Check {
    timed("oracle-ddim", "gaussian-oracle DDIM transport", Some(60.0), || {
        let (mu, s) = (0.7, 0.2);
        let sched = make_schedule(ScheduleParams {
            t_min: 0,
            ..ScheduleParams::default()
        })?;
        let g = GaussianOracle::new(GaussianOracleParams::uniform(mu, s))?;
        let runs = 1000;
        let mut x = rng::normal_grid(runs, 1, 4, &mut rng::stream(77, &[]));
        let depth = Grid::zeros(runs, 1, 1);
        let cam = quad_camera(4);
        for step in 0..sched.steps() {
            let a: StepAlphas = sched.step_alphas(step);
            let eps = g.predict_epsilon(&request(&x, &depth, &cam, sched.step_time(step), a.alpha_bar))?;
            x = ddim_step(&x, &eps, a, 0.0, 0.0, &mut rng::stream(77, &[step as u64]))?;
        }
        let mut ok = true;
        let mut parts = Vec::new();
        for ch in 0..4 {
            let v = x.channel(ch);
            let n = v.data().len() as f64;
            let mean = v.data().iter().map(|&a| a as f64).sum::<f64>() / n;
            let std = (v.data().iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
            ok &= (mean - mu).abs() <= 0.05 && (std / s - 1.0).abs() <= 0.1;
            parts.push(format!("{mean:.3}/{std:.3}"));
        }
        Ok((ok, format!("per-channel mean/std {} (0.7 ± 0.05 / 0.2 ± 10%)", parts.join(", "))))
    })
}
