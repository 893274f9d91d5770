use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DenoiseRequest, Denoiser};
use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::raster::{rasterize, render_texture};
use crate::tensor::{Grid, LatentImage, LatentTexture};

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn describe(&self) -> String {
        "zero".into()
    }

    fn predict_epsilon(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        let (h, w, c) = req.latents.dims();
        Ok(Grid::zeros(h, w, c))
    }
}

/// Exact ε for a point-mass data distribution at a known clean image:
/// `ε* = (x_t − √ᾱ·x₀*)/√(1−ᾱ)`.
///
/// The clean image for a request comes either from a per-view table or from
/// rendering a known texture through the request's camera. In both cases
/// background pixels are treated as having target 0.
#[derive(Debug, Clone)]
pub struct DeltaOracle {
    source: DeltaSource,
}

#[derive(Debug, Clone)]
enum DeltaSource {
    Views(HashMap<usize, LatentImage>),
    Texture { mesh: TriMesh, texture: LatentTexture },
}

impl DeltaOracle {
    /// Targets keyed by view index.
    pub fn from_views(targets: impl IntoIterator<Item = (usize, LatentImage)>) -> Self {
        Self {
            source: DeltaSource::Views(targets.into_iter().collect()),
        }
    }

    /// Targets are renders of `texture` on `mesh` from whatever camera the
    /// request carries.
    pub fn from_texture(mesh: TriMesh, texture: LatentTexture) -> Result<Self> {
        mesh.require_uvs()?;
        Ok(Self {
            source: DeltaSource::Texture { mesh, texture },
        })
    }

    pub fn target(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        match &self.source {
            DeltaSource::Views(map) => map
                .get(&req.view)
                .cloned()
                .ok_or_else(|| Error::Oracle(format!("no target registered for view {}", req.view))),
            DeltaSource::Texture { mesh, texture } => {
                let raster = rasterize(mesh, req.camera, texture.height(), texture.width());
                render_texture(texture, &raster)
            }
        }
    }
}

/// `ε* = (x_t − √ᾱ·x₀*)/√(1−ᾱ)`, elementwise.
pub fn delta_epsilon(x_t: &Grid, target: &Grid, alpha_bar: f64) -> Result<Grid> {
    x_t.ensure_same_shape(target, "delta oracle target")?;
    let (s, n) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let mut out = x_t.clone();
    for (o, &x0) in out.data_mut().iter_mut().zip(target.data()) {
        *o = ((*o as f64 - s * x0 as f64) / n) as f32;
    }
    Ok(out)
}

impl Denoiser for DeltaOracle {
    fn describe(&self) -> String {
        match &self.source {
            DeltaSource::Views(map) => format!("delta({} views)", map.len()),
            DeltaSource::Texture { texture, .. } => {
                format!("delta(texture {}x{}x{})", texture.height(), texture.width(), texture.channels())
            }
        }
    }

    fn predict_epsilon(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        delta_epsilon(req.latents, &self.target(req)?, req.alpha_bar)
    }
}

/// Mean and standard deviation of Gaussian latent data, either one value for
/// all channels or one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianOracleParams {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
}

impl GaussianOracleParams {
    pub fn uniform(mu: f64, s: f64) -> Self {
        Self { mu: vec![mu], s: vec![s] }
    }

    fn per_channel(v: &[f64], ch: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[ch]
        }
    }

    fn check(&self, channels: usize) -> Result<()> {
        for (name, v) in [("mu", &self.mu), ("s", &self.s)] {
            if v.len() != 1 && v.len() != channels {
                return Err(Error::Oracle(format!(
                    "{name} has {} entries for {channels} channels",
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

/// Exact ε for `N(μ, s²)` data:
/// `ε* = √(1−ᾱ)·(x_t − √ᾱ·μ)/(ᾱ·s² + 1 − ᾱ)`.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    params: GaussianOracleParams,
}

impl GaussianOracle {
    pub fn new(params: GaussianOracleParams) -> Result<Self> {
        if params.mu.is_empty() || params.s.is_empty() {
            return Err(Error::Oracle("empty gaussian parameters".into()));
        }
        if params.s.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Oracle(format!("non-positive std in {:?}", params.s)));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &GaussianOracleParams {
        &self.params
    }
}

impl Denoiser for GaussianOracle {
    fn describe(&self) -> String {
        format!("gaussian(mu={:?}, s={:?})", self.params.mu, self.params.s)
    }

    fn predict_epsilon(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        let c = req.latents.channels();
        self.params.check(c)?;
        let a = req.alpha_bar;
        let coef: Vec<(f64, f64)> = (0..c)
            .map(|ch| {
                let mu = GaussianOracleParams::per_channel(&self.params.mu, ch);
                let s = GaussianOracleParams::per_channel(&self.params.s, ch);
                ((1.0 - a).sqrt() / (a * s * s + 1.0 - a), a.sqrt() * mu)
            })
            .collect();
        let mut out = req.latents.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let (scale, shift) = coef[k % c];
            *v = (scale * (*v as f64 - shift)) as f32;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{camera, request};
    use super::*;
    use crate::diffusion::predict_x0;
    use crate::geometry::primitives;
    use crate::raster::rasterize;
    use crate::rng;

    fn scalar(v: f32) -> Grid {
        Grid::filled(1, 1, 1, v)
    }

    #[test]
    fn zero_denoiser_is_zero() {
        let x = Grid::filled(8, 8, 4, 3.0);
        let d = Grid::zeros(8, 8, 1);
        let cam = camera();
        let eps = ZeroDenoiser.predict_guided(&request(&x, &d, &cam, 0.5)).unwrap();
        assert!(eps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_epsilon_examples() {
        let x = (0.5 * 2.0 + 0.75f64.sqrt()) as f32;
        let e = delta_epsilon(&scalar(x), &scalar(2.0), 0.25).unwrap();
        assert!((e.data()[0] - 1.0).abs() < 1e-6);
        let e = delta_epsilon(&scalar(1.0), &scalar(2.0), 0.25).unwrap();
        assert_eq!(e.data()[0], 0.0);
    }

    #[test]
    fn delta_x0_is_constant_in_x() {
        let mut g = rng::stream(4, &[]);
        let target = rng::normal_grid(8, 8, 4, &mut g);
        for a in [0.99, 0.5, 0.05] {
            for _ in 0..3 {
                let x = rng::normal_grid(8, 8, 4, &mut g).scale(3.0);
                let eps = delta_epsilon(&x, &target, a).unwrap();
                let x0 = predict_x0(&x, &eps, a).unwrap();
                assert!(x0.max_abs_diff(&target) < 1e-5);
            }
        }
    }

    #[test]
    fn delta_oracle_modes() {
        let cam = camera();
        let d = Grid::zeros(8, 8, 1);
        let x = Grid::filled(8, 8, 4, 1.0);
        let oracle = DeltaOracle::from_views([(0, Grid::filled(8, 8, 4, 2.0))]);
        let req = request(&x, &d, &cam, 0.25);
        assert!(oracle.predict_epsilon(&req).unwrap().data().iter().all(|&v| v == 0.0));
        let other = DeltaOracle::from_views([(3, Grid::zeros(8, 8, 4))]);
        assert!(matches!(other.predict_epsilon(&req), Err(Error::Oracle(_))));

        // texture-backed targets match an explicit render
        let mesh = primitives::quad();
        let tex = rng::normal_grid(16, 16, 4, &mut rng::stream(8, &[]));
        let oracle = DeltaOracle::from_texture(mesh.clone(), tex.clone()).unwrap();
        let want = render_texture(&tex, &rasterize(&mesh, &cam, 16, 16)).unwrap();
        assert_eq!(oracle.target(&req).unwrap(), want);
        assert!(DeltaOracle::from_texture(primitives::cube(), tex).is_err());
    }

    #[test]
    fn gaussian_oracle_examples() {
        let cam = camera();
        let d = Grid::zeros(1, 1, 1);
        let unit = GaussianOracle::new(GaussianOracleParams::uniform(0.0, 1.0)).unwrap();
        let x = scalar(1.3);
        let e = unit.predict_epsilon(&request(&x, &d, &cam, 0.36)).unwrap();
        assert!((e.data()[0] - 0.8 * 1.3).abs() < 1e-6);

        let g = GaussianOracle::new(GaussianOracleParams::uniform(2.0, 0.5)).unwrap();
        let x = scalar(1.0);
        assert_eq!(g.predict_epsilon(&request(&x, &d, &cam, 0.25)).unwrap().data()[0], 0.0);
        let x = scalar(2.0);
        let e = g.predict_epsilon(&request(&x, &d, &cam, 0.25)).unwrap();
        assert!((e.data()[0] - 1.0659).abs() < 1e-4, "{}", e.data()[0]);
    }

    #[test]
    fn gaussian_params_validated() {
        assert!(GaussianOracle::new(GaussianOracleParams::uniform(0.0, 0.0)).is_err());
        let g = GaussianOracle::new(GaussianOracleParams {
            mu: vec![0.0, 1.0],
            s: vec![1.0],
        })
        .unwrap();
        let cam = camera();
        let d = Grid::zeros(1, 1, 1);
        let x = Grid::zeros(1, 1, 4);
        assert!(g.predict_epsilon(&request(&x, &d, &cam, 0.5)).is_err());
    }

    #[test]
    fn oracles_are_deterministic() {
        let cam = camera();
        let d = Grid::zeros(8, 8, 1);
        let x = rng::normal_grid(8, 8, 4, &mut rng::stream(2, &[]));
        let g = GaussianOracle::new(GaussianOracleParams::uniform(0.7, 0.2)).unwrap();
        let r = request(&x, &d, &cam, 0.4);
        assert_eq!(g.predict_guided(&r).unwrap(), g.predict_guided(&r).unwrap());
    }
}
