//! Gradient checking and the self-fit fixtures used by the test suites.

use rand::Rng as _;

use super::field::{ColorField, DistillSample};
use super::hashgrid::FieldConfig;
use crate::rng;

/// Worst relative error of the analytic gradient per parameter group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub tables: f64,
    pub weights: f64,
    pub biases: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.tables.max(self.weights).max(self.biases)
    }
}

/// Compares `loss_and_grad` with central differences of step `h` on every
/// MLP parameter and every table entry the samples touch.
///
/// Relative error is `|a − n| / max(|a|, |n|)`; parameters whose analytic
/// and numeric gradients are both below `1e-9` count as agreeing.
pub fn gradient_check(field: &ColorField, samples: &[DistillSample], h: f64) -> GradCheck {
    let batch: Vec<usize> = (0..samples.len()).collect();
    let (_, grad) = field.loss_and_grad(samples, &batch);
    let rel = |idx: usize| {
        let mut f = field.clone();
        let p0 = f.params()[idx];
        f.params_mut()[idx] = p0 + h;
        let up = f.loss(samples, &batch);
        f.params_mut()[idx] = p0 - h;
        let down = f.loss(samples, &batch);
        let num = (up - down) / (2.0 * h);
        let a = grad[idx];
        let scale = a.abs().max(num.abs());
        if scale < 1e-9 {
            0.0
        } else {
            (a - num).abs() / scale
        }
    };
    let table_idx = field.touched_table_params(samples.iter().map(|s| s.xyz));
    let (weights, biases) = field.mlp_ranges();
    let worst = |idx: Vec<usize>| idx.into_iter().map(rel).fold(0.0, f64::max);
    let w: Vec<usize> = weights.into_iter().flatten().collect();
    let b: Vec<usize> = biases.into_iter().flatten().collect();
    let checked = table_idx.len() + w.len() + b.len();
    GradCheck {
        tables: worst(table_idx),
        weights: worst(w),
        biases: worst(b),
        checked,
    }
}

/// A field with O(1) table entries and biases plus `n` random samples at
/// least `margin` away from every ReLU kink, so that finite differences
/// never straddle one.
pub fn gradient_fixture(seed: u64, n: usize, margin: f64) -> (ColorField, Vec<DistillSample>) {
    let mut g = rng::stream(seed, &[0x6a]);
    let mut field = ColorField::new(FieldConfig::default(), &mut g).expect("default config");
    let tables = field.table_range();
    let (_, biases) = field.mlp_ranges();
    for p in &mut field.params_mut()[tables] {
        *p = g.random_range(-0.5..0.5);
    }
    for r in biases {
        for p in &mut field.params_mut()[r] {
            *p = g.random_range(-0.5..0.5);
        }
    }
    let mut samples = Vec::with_capacity(n);
    while samples.len() < n {
        let xyz = [0; 3].map(|_| g.random_range(-0.45..0.45));
        if field.kink_margin(xyz) < margin {
            continue;
        }
        samples.push(DistillSample {
            xyz,
            rgb: [0; 3].map(|_| g.random_range(0.0..1.0f32)),
            view: 0,
        });
    }
    (field, samples)
}

/// Value of the 64² checkerboard with 8-texel squares at texel `(row, col)`.
pub fn checkerboard(row: usize, col: usize) -> f32 {
    if (row / 8 + col / 8) % 2 == 0 {
        1.0
    } else {
        0.0
    }
}

/// Texel-centre samples of the checkerboard laid on the `z = 0` unit quad,
/// `xyz = (u − 0.5, v − 0.5, 0)`.
pub fn checkerboard_samples() -> Vec<DistillSample> {
    let n = 64;
    (0..n * n)
        .map(|i| {
            let (row, col) = (i / n, i % n);
            let u = (col as f64 + 0.5) / n as f64;
            let v = 1.0 - (row as f64 + 0.5) / n as f64;
            let c = checkerboard(row, col);
            DistillSample {
                xyz: [u - 0.5, v - 0.5, 0.0],
                rgb: [c; 3],
                view: 0,
            }
        })
        .collect()
}

/// Peak signal-to-noise ratio (peak 1) of the field on the samples.
pub fn psnr(field: &ColorField, samples: &[DistillSample]) -> f64 {
    let batch: Vec<usize> = (0..samples.len()).collect();
    -10.0 * field.loss(samples, &batch).log10()
}
