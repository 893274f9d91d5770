use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::field::{ColorField, DistillSample};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Dense Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub iters: usize,
    pub lr: f64,
    /// Samples per minibatch; the full set when at least the sample count.
    pub batch: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            lr: 0.01,
            batch: 8192,
            seed: 0,
        }
    }
}

/// Loss after every iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistillStats {
    pub losses: Vec<f64>,
    /// Samples outside the unit cube (clamped during encoding).
    pub clamped: usize,
}

/// Fits `field` to the samples with Adam on the mean squared error.
pub fn distill(field: &mut ColorField, samples: &[DistillSample], cfg: &DistillConfig) -> Result<DistillStats> {
    if samples.is_empty() {
        return Err(Error::Config("no distillation samples".into()));
    }
    if !(cfg.lr > 0.0) || cfg.batch == 0 {
        return Err(Error::Config(format!("invalid distillation settings {cfg:?}")));
    }
    let clamped = samples
        .iter()
        .filter(|s| s.xyz.iter().any(|&v| !(-0.5..=0.5).contains(&v)))
        .count();
    let mut adam = Adam::new(field.param_count(), cfg.lr);
    let full: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let batch = if cfg.batch >= samples.len() {
            full.clone()
        } else {
            let mut g = rng::stream(cfg.seed, &[tag::DISTILL, it as u64]);
            let mut idx = index::sample(&mut g, samples.len(), cfg.batch).into_vec();
            idx.sort_unstable();
            idx
        };
        let (loss, grad) = field.loss_and_grad(samples, &batch);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite distillation loss at iteration {it}")));
        }
        adam.step(field.params_mut(), &grad);
        losses.push(loss);
    }
    Ok(DistillStats { losses, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorfield::FieldConfig;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![1.0, -2.0, 0.0];
        let mut a = Adam::new(3, 0.01);
        a.step(&mut p, &[3.0, -0.5, 0.0]);
        assert!((p[0] - 0.99).abs() < 1e-12);
        assert!((p[1] + 1.99).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
    }

    fn constant_samples(c: [f32; 3]) -> Vec<DistillSample> {
        let mut g = rng::stream(11, &[]);
        use rand::Rng as _;
        (0..256)
            .map(|_| DistillSample {
                xyz: [0; 3].map(|_| g.random_range(-0.5..0.5)),
                rgb: c,
                view: 0,
            })
            .collect()
    }

    #[test]
    fn constant_color_converges() {
        let samples = constant_samples([0.9, 0.2, 0.6]);
        let mut field = ColorField::new(FieldConfig::default(), &mut rng::stream(3, &[tag::FIELD_INIT])).unwrap();
        let cfg = DistillConfig {
            iters: 100,
            ..DistillConfig::default()
        };
        let stats = distill(&mut field, &samples, &cfg).unwrap();
        assert!(*stats.losses.last().unwrap() < 1e-4, "{:?}", stats.losses.last());
        assert_eq!(stats.clamped, 0);
    }

    #[test]
    fn median_loss_decreases_over_windows() {
        let samples = constant_samples([0.1, 0.8, 0.4]);
        let runs: Vec<Vec<f64>> = (0..5)
            .map(|seed| {
                let mut f = ColorField::new(FieldConfig::default(), &mut rng::stream(seed, &[tag::FIELD_INIT])).unwrap();
                let cfg = DistillConfig {
                    iters: 60,
                    batch: 64,
                    seed,
                    ..DistillConfig::default()
                };
                distill(&mut f, &samples, &cfg).unwrap().losses
            })
            .collect();
        let window_median = |w: usize| {
            let mut m: Vec<f64> = runs.iter().map(|l| l[w * 10..(w + 1) * 10].iter().sum::<f64>() / 10.0).collect();
            m.sort_by(f64::total_cmp);
            m[m.len() / 2]
        };
        let medians: Vec<f64> = (0..6).map(window_median).collect();
        assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
    }

    #[test]
    fn rejects_empty_and_is_deterministic() {
        let mut f = ColorField::zeroed(FieldConfig::default()).unwrap();
        assert!(distill(&mut f, &[], &DistillConfig::default()).is_err());
        let samples = constant_samples([0.5, 0.5, 0.2]);
        let cfg = DistillConfig {
            iters: 5,
            batch: 32,
            ..DistillConfig::default()
        };
        let mut a = ColorField::new(FieldConfig::default(), &mut rng::stream(1, &[])).unwrap();
        let mut b = a.clone();
        distill(&mut a, &samples, &cfg).unwrap();
        distill(&mut b, &samples, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
