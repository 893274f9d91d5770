use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hashgrid::{levels, locate, FieldConfig, Level, LevelCorners};
use crate::error::Result;
use crate::rng::Rng;

/// Samples per parallel gradient chunk. Fixed, so the reduction order (and
/// therefore the result) does not depend on the thread count.
const GRAD_CHUNK: usize = 256;

/// A surface point and the color it should have.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillSample {
    pub xyz: [f64; 3],
    pub rgb: [f32; 3],
    pub view: usize,
}

/// Offsets of the MLP blocks inside the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MlpLayout {
    input: usize,
    hidden: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

impl MlpLayout {
    fn new(offset: usize, input: usize, hidden: usize) -> Self {
        let w1 = offset;
        let b1 = w1 + hidden * input;
        let w2 = b1 + hidden;
        let b2 = w2 + hidden * hidden;
        let w3 = b2 + hidden;
        let b3 = w3 + 3 * hidden;
        Self {
            input,
            hidden,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + 3,
        }
    }
}

/// Intermediate values of one forward pass, kept for backprop.
struct Trace {
    corners: Vec<LevelCorners>,
    feat: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    rgb: [f64; 3],
}

/// Multi-resolution hash-grid encoder followed by a two-hidden-layer ReLU
/// MLP with sigmoid RGB output.
///
/// All parameters live in one flat `f64` vector: the level tables first
/// (`[level][entry][feature]`), then `W1, b1, W2, b2, W3, b3` with row-major
/// weight matrices (`out × in`).
#[derive(Debug, Clone, PartialEq)]
pub struct ColorField {
    cfg: FieldConfig,
    levels: Vec<Level>,
    mlp: MlpLayout,
    params: Vec<f64>,
}

impl ColorField {
    /// All parameters zero.
    pub fn zeroed(cfg: FieldConfig) -> Result<Self> {
        cfg.validate()?;
        let mlp = MlpLayout::new(cfg.table_params(), cfg.encoded_dim(), cfg.hidden);
        Ok(Self {
            levels: levels(&cfg),
            params: vec![0.0; mlp.end],
            mlp,
            cfg,
        })
    }

    /// Tables uniform in `±1e-4`, Xavier-uniform weights, zero biases.
    pub fn new(cfg: FieldConfig, rng: &mut Rng) -> Result<Self> {
        let mut field = Self::zeroed(cfg)?;
        let tables = cfg.table_params();
        for p in &mut field.params[..tables] {
            *p = rng.random_range(-1e-4..1e-4);
        }
        let m = field.mlp;
        for (start, fan_out, fan_in) in [(m.w1, m.hidden, m.input), (m.w2, m.hidden, m.hidden), (m.w3, 3, m.hidden)] {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut field.params[start..start + fan_out * fan_in] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(field)
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Index range of the hash tables inside the parameter vector.
    pub fn table_range(&self) -> std::ops::Range<usize> {
        0..self.cfg.table_params()
    }

    /// Index ranges of the MLP weight matrices and bias vectors.
    pub fn mlp_ranges(&self) -> (Vec<std::ops::Range<usize>>, Vec<std::ops::Range<usize>>) {
        let m = self.mlp;
        (
            vec![m.w1..m.b1, m.w2..m.b2, m.w3..m.b3],
            vec![m.b1..m.w2, m.b2..m.w3, m.b3..m.end],
        )
    }

    /// Parameter index of a table entry.
    pub fn table_param(&self, level: usize, entry: usize, feature: usize) -> usize {
        (level * self.cfg.table_size() + entry) * self.cfg.features + feature
    }

    fn corners(&self, xyz: [f64; 3]) -> Vec<LevelCorners> {
        locate(&self.levels, self.cfg.table_size(), xyz).0
    }

    /// Concatenated per-level interpolated features.
    pub fn encode(&self, xyz: [f64; 3]) -> Vec<f64> {
        self.encode_corners(&self.corners(xyz))
    }

    fn encode_corners(&self, corners: &[LevelCorners]) -> Vec<f64> {
        let f = self.cfg.features;
        let mut feat = vec![0.0; self.cfg.encoded_dim()];
        for (l, c) in corners.iter().enumerate() {
            for k in 0..8 {
                let base = self.table_param(l, c.entries[k], 0);
                for j in 0..f {
                    feat[l * f + j] += c.weights[k] * self.params[base + j];
                }
            }
        }
        feat
    }

    fn trace(&self, xyz: [f64; 3]) -> Trace {
        let corners = self.corners(xyz);
        let feat = self.encode_corners(&corners);
        let m = self.mlp;
        let p = &self.params;
        let layer = |w: usize, b: usize, x: &[f64], rows: usize| -> Vec<f64> {
            (0..rows)
                .map(|r| {
                    let row = &p[w + r * x.len()..w + (r + 1) * x.len()];
                    p[b + r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        };
        let h1: Vec<f64> = layer(m.w1, m.b1, &feat, m.hidden).into_iter().map(|v| v.max(0.0)).collect();
        let h2: Vec<f64> = layer(m.w2, m.b2, &h1, m.hidden).into_iter().map(|v| v.max(0.0)).collect();
        let out = layer(m.w3, m.b3, &h2, 3);
        let rgb = [sigmoid(out[0]), sigmoid(out[1]), sigmoid(out[2])];
        Trace {
            corners,
            feat,
            h1,
            h2,
            rgb,
        }
    }

    /// Smallest hidden pre-activation magnitude at a point, i.e. the
    /// distance to the nearest ReLU kink.
    pub fn kink_margin(&self, xyz: [f64; 3]) -> f64 {
        let m = self.mlp;
        let p = &self.params;
        let feat = self.encode(xyz);
        let pre = |w: usize, b: usize, x: &[f64]| -> Vec<f64> {
            (0..m.hidden)
                .map(|r| p[b + r] + p[w + r * x.len()..w + (r + 1) * x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        };
        let z1 = pre(m.w1, m.b1, &feat);
        let h1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let z2 = pre(m.w2, m.b2, &h1);
        z1.iter().chain(&z2).fold(f64::INFINITY, |a, v| a.min(v.abs()))
    }

    /// RGB in `(0, 1)³` at a surface point.
    pub fn forward(&self, xyz: [f64; 3]) -> [f64; 3] {
        self.trace(xyz).rgb
    }

    /// Accumulates `∂L/∂θ` of one sample into `grad` given `∂L/∂rgb`.
    /// Table contributions are appended to `table_grad` as `(index, value)`.
    fn backward(&self, tr: &Trace, d_rgb: [f64; 3], grad: &mut [f64], table_grad: &mut Vec<(usize, f64)>) {
        let m = self.mlp;
        let p = &self.params;
        let off = m.w1;
        let h = m.hidden;
        let d_out: Vec<f64> = (0..3).map(|k| d_rgb[k] * tr.rgb[k] * (1.0 - tr.rgb[k])).collect();

        let mut d_h2 = vec![0.0; h];
        for r in 0..3 {
            grad[m.b3 - off + r] += d_out[r];
            for c in 0..h {
                grad[m.w3 - off + r * h + c] += d_out[r] * tr.h2[c];
                d_h2[c] += d_out[r] * p[m.w3 + r * h + c];
            }
        }
        for c in 0..h {
            if tr.h2[c] <= 0.0 {
                d_h2[c] = 0.0;
            }
        }
        let mut d_h1 = vec![0.0; h];
        for r in 0..h {
            if d_h2[r] == 0.0 {
                continue;
            }
            grad[m.b2 - off + r] += d_h2[r];
            for c in 0..h {
                grad[m.w2 - off + r * h + c] += d_h2[r] * tr.h1[c];
                d_h1[c] += d_h2[r] * p[m.w2 + r * h + c];
            }
        }
        for c in 0..h {
            if tr.h1[c] <= 0.0 {
                d_h1[c] = 0.0;
            }
        }
        let n_in = m.input;
        let mut d_feat = vec![0.0; n_in];
        for r in 0..h {
            if d_h1[r] == 0.0 {
                continue;
            }
            grad[m.b1 - off + r] += d_h1[r];
            for c in 0..n_in {
                grad[m.w1 - off + r * n_in + c] += d_h1[r] * tr.feat[c];
                d_feat[c] += d_h1[r] * p[m.w1 + r * n_in + c];
            }
        }
        let f = self.cfg.features;
        for (l, c) in tr.corners.iter().enumerate() {
            for k in 0..8 {
                let base = self.table_param(l, c.entries[k], 0);
                for j in 0..f {
                    table_grad.push((base + j, c.weights[k] * d_feat[l * f + j]));
                }
            }
        }
    }

    /// Mean squared error over `batch` (indices into `samples`, all three
    /// channels) and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, samples: &[DistillSample], batch: &[usize]) -> (f64, Vec<f64>) {
        let norm = 1.0 / (3 * batch.len().max(1)) as f64;
        let mlp_len = self.mlp.end - self.mlp.w1;
        // per chunk: loss, dense MLP gradient, sparse table gradient
        type Partial = (f64, Vec<f64>, Vec<(usize, f64)>);
        let partials: Vec<Partial> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut loss = 0.0;
                let mut grad = vec![0.0; mlp_len];
                let mut table = Vec::with_capacity(chunk.len() * self.levels.len() * 8 * self.cfg.features);
                for &i in chunk {
                    let s = &samples[i];
                    let tr = self.trace(s.xyz);
                    let mut d_rgb = [0.0; 3];
                    for k in 0..3 {
                        let r = tr.rgb[k] - s.rgb[k] as f64;
                        loss += r * r;
                        d_rgb[k] = 2.0 * r * norm;
                    }
                    self.backward(&tr, d_rgb, &mut grad, &mut table);
                }
                (loss, grad, table)
            })
            .collect();

        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g, table) in partials {
            loss += l;
            for (dst, v) in grad[self.mlp.w1..].iter_mut().zip(g) {
                *dst += v;
            }
            for (idx, v) in table {
                grad[idx] += v;
            }
        }
        (loss * norm, grad)
    }

    /// Loss only, for finite-difference checks.
    pub fn loss(&self, samples: &[DistillSample], batch: &[usize]) -> f64 {
        let sum: f64 = batch
            .iter()
            .map(|&i| {
                let s = &samples[i];
                let rgb = self.forward(s.xyz);
                (0..3).map(|k| (rgb[k] - s.rgb[k] as f64).powi(2)).sum::<f64>()
            })
            .sum();
        sum / (3 * batch.len().max(1)) as f64
    }

    /// Table entries (parameter indices) touched by the given points.
    pub fn touched_table_params(&self, points: impl IntoIterator<Item = [f64; 3]>) -> Vec<usize> {
        let mut out: Vec<usize> = points
            .into_iter()
            .flat_map(|xyz| {
                self.corners(xyz)
                    .into_iter()
                    .enumerate()
                    .flat_map(|(l, c)| c.entries.map(|e| (l, e)))
                    .collect::<Vec<_>>()
            })
            .flat_map(|(l, e)| (0..self.cfg.features).map(move |j| (l, e, j)))
            .map(|(l, e, j)| self.table_param(l, e, j))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
