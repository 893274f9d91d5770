use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Shape of the hash-grid encoder and the MLP behind it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub levels: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// log2 of the entries per level table.
    pub log2_table: u32,
    pub features: usize,
    pub hidden: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            n_min: 16,
            n_max: 512,
            log2_table: 14,
            features: 2,
            hidden: 32,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.levels >= 1
            && self.n_min >= 1
            && self.n_max >= self.n_min
            && (self.levels == 1 || self.n_max > self.n_min)
            && (1..=24).contains(&self.log2_table)
            && self.features >= 1
            && self.hidden >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid field config {self:?}")))
        }
    }

    pub fn table_size(&self) -> usize {
        1 << self.log2_table
    }

    /// Length of the concatenated feature vector.
    pub fn encoded_dim(&self) -> usize {
        self.levels * self.features
    }

    pub fn table_params(&self) -> usize {
        self.levels * self.table_size() * self.features
    }

    /// Grid resolution per level, geometric from `n_min` to `n_max`.
    pub fn resolutions(&self) -> Vec<usize> {
        if self.levels == 1 {
            return vec![self.n_min];
        }
        let growth = ((self.n_max as f64).ln() - (self.n_min as f64).ln()) / (self.levels - 1) as f64;
        (0..self.levels)
            .map(|l| ((self.n_min as f64).ln() + growth * l as f64).exp().round() as usize)
            .collect()
    }
}

/// Level geometry: resolution and whether the corner lattice fits the table
/// without hashing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub resolution: usize,
    pub dense: bool,
}

pub fn levels(cfg: &FieldConfig) -> Vec<Level> {
    cfg.resolutions()
        .into_iter()
        .map(|n| Level {
            resolution: n,
            dense: (n + 1).pow(3) <= cfg.table_size(),
        })
        .collect()
}

/// Table entry of lattice corner `(x, y, z)` at a level.
#[inline]
pub fn corner_index(level: Level, corner: [u32; 3], table_size: usize) -> usize {
    if level.dense {
        let side = level.resolution + 1;
        corner[0] as usize + side * (corner[1] as usize + side * corner[2] as usize)
    } else {
        let h = corner[0].wrapping_mul(PRIMES[0]) ^ corner[1].wrapping_mul(PRIMES[1]) ^ corner[2].wrapping_mul(PRIMES[2]);
        h as usize & (table_size - 1)
    }
}

/// The eight corners touched by one point at one level, with their
/// trilinear weights. Entries are table indices within the level.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelCorners {
    pub entries: [usize; 8],
    pub weights: [f64; 8],
}

/// Maps `xyz ∈ [−0.5, 0.5]³` to per-level corners. Points outside the cube
/// are clamped; the second value reports whether that happened.
pub fn locate(levels: &[Level], table_size: usize, xyz: [f64; 3]) -> (Vec<LevelCorners>, bool) {
    let mut clamped = false;
    let unit = xyz.map(|v| {
        let u = v + 0.5;
        if !(0.0..=1.0).contains(&u) {
            clamped = true;
        }
        u.clamp(0.0, 1.0)
    });
    let corners = levels
        .iter()
        .map(|&level| {
            let n = level.resolution;
            let mut cell = [0u32; 3];
            let mut frac = [0.0f64; 3];
            for a in 0..3 {
                let p = unit[a] * n as f64;
                let c = (p.floor() as usize).min(n - 1);
                cell[a] = c as u32;
                frac[a] = p - c as f64;
            }
            let mut out = LevelCorners::default();
            for k in 0..8 {
                let bit = |a: usize| (k >> a) & 1;
                let corner = [cell[0] + bit(0) as u32, cell[1] + bit(1) as u32, cell[2] + bit(2) as u32];
                out.entries[k] = corner_index(level, corner, table_size);
                out.weights[k] = (0..3)
                    .map(|a| if bit(a) == 1 { frac[a] } else { 1.0 - frac[a] })
                    .product();
            }
            out
        })
        .collect();
    (corners, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_levels() {
        let cfg = FieldConfig::default();
        let res = cfg.resolutions();
        assert_eq!(res.len(), 8);
        assert_eq!(res[0], 16);
        assert_eq!(res[7], 512);
        assert!(res.windows(2).all(|w| w[0] < w[1]));
        let lv = levels(&cfg);
        assert!(lv[0].dense);
        assert!(lv[1..].iter().all(|l| !l.dense));
    }

    #[test]
    fn weights_form_a_partition_of_unity() {
        let cfg = FieldConfig::default();
        let lv = levels(&cfg);
        for xyz in [[0.1, -0.2, 0.33], [-0.5, 0.5, 0.0], [0.49, 0.49, -0.49]] {
            let (corners, clamped) = locate(&lv, cfg.table_size(), xyz);
            assert!(!clamped);
            for c in corners {
                assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(c.entries.iter().all(|&e| e < cfg.table_size()));
            }
        }
        assert!(locate(&lv, cfg.table_size(), [0.7, 0.0, 0.0]).1);
    }

    #[test]
    fn lattice_point_selects_one_corner() {
        let cfg = FieldConfig::default();
        let lv = levels(&cfg);
        // x01 = 0.25 → p = 4 at the first (16³) level
        let (corners, _) = locate(&lv, cfg.table_size(), [-0.25, -0.25, -0.25]);
        let c = corners[0];
        assert_eq!(c.weights[0], 1.0);
        assert_eq!(c.entries[0], 4 + 17 * (4 + 17 * 4));
    }

    #[test]
    fn hashing_matches_reference() {
        let level = Level {
            resolution: 100,
            dense: false,
        };
        let h = (3u32 ^ 5u32.wrapping_mul(2_654_435_761) ^ 7u32.wrapping_mul(805_459_861)) as usize & 16383;
        assert_eq!(corner_index(level, [3, 5, 7], 16384), h);
    }
}
