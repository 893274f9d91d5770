//! Variance-preserving noise schedule and DDIM stepping.
//!
//! Times are 1-based: `alpha_bar(1) = 1 − β₁`. A schedule of `S` sampling
//! steps visits `S + 1` times `t_S > … > t_1 > t_0`, where `t_0 = t_min` is the
//! target of the last step. Step `i` (counting down from `S` to 1) moves a
//! sample from `t_i` to `t_{i−1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, Rng};
use crate::tensor::Grid;

/// Parameters that fully determine a [`NoiseSchedule`]. Serialized into run
/// manifests with keys `T, S, t_min, t_max, beta_start, beta_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    #[serde(rename = "T")]
    pub train_steps: usize,
    #[serde(rename = "S")]
    pub steps: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleParams {
    /// 1000 training steps, scaled-linear betas 0.00085..0.012, 50 sampling
    /// steps over the truncated range (300, 1000].
    fn default() -> Self {
        Self {
            train_steps: 1000,
            steps: 50,
            t_min: 300,
            t_max: 1000,
            beta_start: 0.00085,
            beta_end: 0.012,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    /// `alpha_bar[t − 1]` for `t = 1..=T`.
    alpha_bar: Vec<f64>,
    /// Sampling times in denoising order: `t_S, …, t_1, t_0`.
    times: Vec<usize>,
}

/// `ᾱ` at the two ends of one sampling step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAlphas {
    /// `ᾱ_i` (noisier end).
    pub alpha_bar: f64,
    /// `ᾱ_{i−1}`.
    pub alpha_bar_prev: f64,
}

pub fn make_schedule(params: ScheduleParams) -> Result<NoiseSchedule> {
    let ScheduleParams {
        train_steps,
        steps,
        t_min,
        t_max,
        beta_start,
        beta_end,
    } = params;
    if steps == 0 || train_steps < steps {
        return Err(Error::Schedule(format!("need T >= S >= 1, got T={train_steps}, S={steps}")));
    }
    if t_min >= t_max || t_max > train_steps || t_max - t_min < steps {
        return Err(Error::Schedule(format!(
            "range ({t_min}, {t_max}] cannot hold {steps} distinct steps within T={train_steps}"
        )));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Schedule(format!("invalid betas {beta_start}..{beta_end}")));
    }

    // scaled-linear: linear in sqrt(beta)
    let (s0, s1) = (beta_start.sqrt(), beta_end.sqrt());
    let mut alpha_bar = Vec::with_capacity(train_steps);
    let mut acc = 1.0;
    for k in 0..train_steps {
        let frac = if train_steps > 1 {
            k as f64 / (train_steps - 1) as f64
        } else {
            0.0
        };
        let sqrt_beta = s0 + (s1 - s0) * frac;
        acc *= 1.0 - sqrt_beta * sqrt_beta;
        alpha_bar.push(acc);
    }

    // t_k = floor(t_min + (t_max − t_min)·k/S), k = S..0
    let span = (t_max - t_min) as f64;
    let times = (0..=steps)
        .rev()
        .map(|k| t_min + (span * k as f64 / steps as f64 + 1e-9).floor() as usize)
        .collect();

    Ok(NoiseSchedule {
        params,
        alpha_bar,
        times,
    })
}

impl NoiseSchedule {
    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    /// Number of sampling steps `S`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Sampling times `t_S, …, t_1` (the start of every step).
    pub fn substeps(&self) -> &[usize] {
        &self.times[..self.times.len() - 1]
    }

    /// All visited times including the final target `t_0`.
    pub fn times(&self) -> &[usize] {
        &self.times
    }

    /// `ᾱ_t`; `t = 0` is the clean-data limit `ᾱ = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Start time of the step at position `k` (0 = first, noisiest step).
    pub fn step_time(&self, k: usize) -> usize {
        self.times[k]
    }

    /// Target time of the step at position `k`.
    pub fn step_target(&self, k: usize) -> usize {
        self.times[k + 1]
    }

    pub fn step_alphas(&self, k: usize) -> StepAlphas {
        StepAlphas {
            alpha_bar: self.alpha_bar(self.times[k]),
            alpha_bar_prev: self.alpha_bar(self.times[k + 1]),
        }
    }

    /// Schedule continuing from `t_start` down to the same `t_min`, keeping
    /// roughly the same step density. Used to resume sampling from a
    /// partially noised state.
    pub fn resumed_at(&self, t_start: usize) -> Result<NoiseSchedule> {
        let p = self.params;
        if t_start <= p.t_min || t_start > p.t_max {
            return Err(Error::Schedule(format!(
                "resume time {t_start} outside ({}, {}]",
                p.t_min, p.t_max
            )));
        }
        let span = (t_start - p.t_min) as f64 / (p.t_max - p.t_min) as f64;
        let steps = ((p.steps as f64 * span).round() as usize).clamp(1, t_start - p.t_min);
        make_schedule(ScheduleParams {
            steps,
            t_max: t_start,
            ..p
        })
    }
}

/// DDIM noise scale `σ = η·√((1−ᾱ_{i−1})/(1−ᾱ_i))·√(1 − ᾱ_i/ᾱ_{i−1})`.
pub fn ddim_sigma(a: StepAlphas, eta: f64) -> f64 {
    if eta == 0.0 {
        return 0.0;
    }
    eta * ((1.0 - a.alpha_bar_prev) / (1.0 - a.alpha_bar)).sqrt()
        * (1.0 - a.alpha_bar / a.alpha_bar_prev).max(0.0).sqrt()
}

/// Coefficients of one DDIM update, precomputed per step.
#[derive(Debug, Clone, Copy)]
pub struct DdimCoefficients {
    /// multiplies `x_i`
    pub x_scale: f64,
    /// multiplies the ε prediction
    pub eps_scale: f64,
    /// multiplies fresh noise (`τ·σ`)
    pub noise_scale: f64,
}

impl DdimCoefficients {
    pub fn new(a: StepAlphas, eta: f64, tau: f64) -> Result<Self> {
        let sigma = ddim_sigma(a, eta);
        let dir = 1.0 - a.alpha_bar_prev - sigma * sigma;
        if dir < -1e-12 {
            return Err(Error::Schedule(format!(
                "1 - alpha_bar_prev - sigma^2 = {dir} is negative (eta {eta} too large)"
            )));
        }
        let ratio = (a.alpha_bar_prev / a.alpha_bar).sqrt();
        // √ᾱ_{i−1}·(x − √(1−ᾱ_i)·ε)/√ᾱ_i + √(1−ᾱ_{i−1}−σ²)·ε
        Ok(Self {
            x_scale: ratio,
            eps_scale: dir.max(0.0).sqrt() - ratio * (1.0 - a.alpha_bar).sqrt(),
            noise_scale: tau * sigma,
        })
    }
}

/// One DDIM step with temperature:
/// `x_{i−1} = √ᾱ_{i−1}·x̂₀ + √(1−ᾱ_{i−1}−σ²)·ε + τ·σ·z`, `z ~ N(0, I)`.
///
/// Noise is drawn (in element order) only when `τ·σ > 0`.
pub fn ddim_step(
    x: &Grid,
    eps: &Grid,
    a: StepAlphas,
    eta: f64,
    tau: f64,
    rng: &mut Rng,
) -> Result<Grid> {
    x.ensure_same_shape(eps, "ddim_step x vs eps")?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("temperature {tau} outside [0, 1]")));
    }
    let c = DdimCoefficients::new(a, eta, tau)?;
    let mut out = x.clone();
    let stochastic = c.noise_scale > 0.0;
    for (o, &e) in out.data_mut().iter_mut().zip(eps.data()) {
        let mut v = c.x_scale * *o as f64 + c.eps_scale * e as f64;
        if stochastic {
            v += c.noise_scale * standard_normal(rng) as f64;
        }
        *o = v as f32;
    }
    Ok(out)
}

/// `x̂₀ = (x − √(1−ᾱ)·ε)/√ᾱ`.
pub fn predict_x0(x: &Grid, eps: &Grid, alpha_bar: f64) -> Result<Grid> {
    x.ensure_same_shape(eps, "predict_x0 x vs eps")?;
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let mut out = x.clone();
    for (o, &e) in out.data_mut().iter_mut().zip(eps.data()) {
        *o = ((*o as f64 - n * e as f64) / s) as f32;
    }
    Ok(out)
}

/// `x_t = √ᾱ·x₀ + √(1−ᾱ)·ε` with fresh `ε ~ N(0, I)`.
pub fn stochastic_encode(x0: &Grid, alpha_bar: f64, rng: &mut Rng) -> Grid {
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    x0.map(|v| (s * v as f64 + n * standard_normal(rng) as f64) as f32)
}

/// Classifier-free guidance weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub w_joint: f64,
    pub w_text: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            w_joint: 5.0,
            w_text: 3.0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_joint >= 0.0 && self.w_text >= 0.0 {
            Ok(())
        } else {
            Err(Error::Guidance(format!("negative guidance weights {self:?}")))
        }
    }
}

/// `ε' = (1 − w_joint − w_text)·ε_uncond + w_joint·ε_joint + w_text·ε_text`.
///
/// `eps_text` must be present exactly when `w_text > 0`. Accumulation is in
/// `f64`, so identical inputs come back bit-exact.
pub fn cfg_combine(
    eps_uncond: &Grid,
    eps_joint: &Grid,
    eps_text: Option<&Grid>,
    cfg: &GuidanceConfig,
) -> Result<Grid> {
    cfg.validate()?;
    eps_uncond.ensure_same_shape(eps_joint, "cfg joint")?;
    let text = match (eps_text, cfg.w_text > 0.0) {
        (Some(t), true) => {
            eps_uncond.ensure_same_shape(t, "cfg text")?;
            Some(t)
        }
        (None, true) => {
            return Err(Error::Guidance("w_text > 0 but no text-only prediction".into()));
        }
        (Some(_), false) => {
            return Err(Error::Guidance("text-only prediction given with w_text = 0".into()));
        }
        (None, false) => None,
    };
    let w_u = 1.0 - cfg.w_joint - cfg.w_text;
    let mut out = eps_uncond.clone();
    for (k, o) in out.data_mut().iter_mut().enumerate() {
        let mut v = w_u * eps_uncond.data()[k] as f64 + cfg.w_joint * eps_joint.data()[k] as f64;
        if let Some(t) = text {
            v += cfg.w_text * t.data()[k] as f64;
        }
        *o = v as f32;
    }
    Ok(out)
}
