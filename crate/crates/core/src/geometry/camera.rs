//! Perspective cameras, preset rigs and view-dependent prompt suffixes.
//!
//! World convention: right-handed, `+y` up, object front facing `+x`.
//! Azimuth is measured from `+x` towards `+z`; elevation from the `xz` plane
//! towards `+y`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mesh::{TriMesh, Vec3};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Default latent image side.
pub const LATENT_IMAGE_SIZE: usize = 64;
/// Relative margin around the bounding sphere when fitting the field of view.
pub const FOV_MARGIN: f64 = 1.05;
/// Jitter half-width, in degrees, for the jittered preset.
pub const JITTER_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub image_h: usize,
    pub image_w: usize,
}

/// Orthonormal camera frame: `right`, `up`, and `forward` (towards the target).
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl Camera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, image_h: usize, image_w: usize) -> Self {
        Self {
            eye,
            target,
            up,
            fov_y,
            image_h,
            image_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dir = self.target - self.eye;
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::Config(format!("fov_y {} outside (0, pi)", self.fov_y)));
        }
        if dir.norm() == 0.0 {
            return Err(Error::Config("camera eye equals target".into()));
        }
        if dir.normalize().cross(&self.up).norm() < 1e-9 {
            return Err(Error::Config("camera up is parallel to the view direction".into()));
        }
        if self.image_h == 0 || self.image_w == 0 {
            return Err(Error::Config("camera image has zero size".into()));
        }
        Ok(())
    }

    pub fn frame(&self) -> CameraFrame {
        let forward = (self.target - self.eye).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        CameraFrame { right, up, forward }
    }

    /// Focal length in pixels along the vertical axis.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.image_h as f64 / (0.5 * self.fov_y).tan()
    }

    pub fn distance(&self) -> f64 {
        (self.eye - self.target).norm()
    }

    /// Elevation of the eye above the target, in degrees.
    pub fn elevation_deg(&self) -> f64 {
        let d = self.eye - self.target;
        (d.y / d.norm()).clamp(-1.0, 1.0).asin().to_degrees()
    }

    /// Azimuth of the eye around the target in `[0, 360)` degrees.
    pub fn azimuth_deg(&self) -> f64 {
        let d = self.eye - self.target;
        d.z.atan2(d.x).to_degrees().rem_euclid(360.0)
    }

    /// Same pose with `tan(fov/2)` multiplied by `factor`.
    pub fn with_fov_scaled(mut self, factor: f64) -> Self {
        self.fov_y = 2.0 * ((0.5 * self.fov_y).tan() * factor).atan();
        self
    }

    pub fn with_image_size(mut self, h: usize, w: usize) -> Self {
        self.image_h = h;
        self.image_w = w;
        self
    }
}

/// Eye position on a sphere of `distance` around the origin.
pub fn orbit_eye(distance: f64, azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Vec3::new(
        distance * el.cos() * az.cos(),
        distance * el.sin(),
        distance * el.cos() * az.sin(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetKind {
    Default9,
    Jittered18,
    Human24,
}

/// Camera rig description.
///
/// `default9`: a ring over `azimuths_deg × elevations_deg` plus one camera
/// looking down `-y`. `jittered18`: the `default9` rig drawn twice with
/// uniform ±10° jitter on elevation and azimuth. `human24`: rings of radial
/// cameras at each of `y_offsets`, looking at the `y` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPreset {
    pub kind: PresetKind,
    pub distance: f64,
    pub azimuths_deg: Vec<f64>,
    pub elevations_deg: Vec<f64>,
    #[serde(default)]
    pub y_offsets: Vec<f64>,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
}

fn default_image_size() -> usize {
    LATENT_IMAGE_SIZE
}

fn ring_azimuths() -> Vec<f64> {
    (0..8).map(|k| 45.0 * k as f64).collect()
}

impl CameraPreset {
    pub fn default9() -> Self {
        Self {
            kind: PresetKind::Default9,
            distance: 1.5,
            azimuths_deg: ring_azimuths(),
            elevations_deg: vec![30.0],
            y_offsets: Vec::new(),
            image_size: LATENT_IMAGE_SIZE,
        }
    }

    pub fn jittered18() -> Self {
        Self {
            kind: PresetKind::Jittered18,
            ..Self::default9()
        }
    }

    pub fn human24() -> Self {
        Self {
            kind: PresetKind::Human24,
            distance: 1.5,
            azimuths_deg: ring_azimuths(),
            elevations_deg: vec![0.0],
            y_offsets: vec![0.3, 0.0, -0.3],
            image_size: LATENT_IMAGE_SIZE,
        }
    }

    pub fn from_kind(kind: PresetKind) -> Self {
        match kind {
            PresetKind::Default9 => Self::default9(),
            PresetKind::Jittered18 => Self::jittered18(),
            PresetKind::Human24 => Self::human24(),
        }
    }

    pub fn camera_count(&self) -> usize {
        let ring = self.azimuths_deg.len() * self.elevations_deg.len();
        match self.kind {
            PresetKind::Default9 => ring + 1,
            PresetKind::Jittered18 => 2 * (ring + 1),
            PresetKind::Human24 => self.azimuths_deg.len() * self.y_offsets.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            PresetKind::Default9 => 9,
            PresetKind::Jittered18 => 18,
            PresetKind::Human24 => 24,
        };
        if self.camera_count() != expected {
            return Err(Error::Config(format!(
                "{:?} preset must produce {expected} cameras, lists give {}",
                self.kind,
                self.camera_count()
            )));
        }
        if !(self.distance > 0.0) {
            return Err(Error::Config("camera distance must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let preset: Self = serde_json::from_str(text)?;
        preset.validate()?;
        Ok(preset)
    }
}

const TOP_UP: Vec3 = Vec3::new(-1.0, 0.0, 0.0);

/// Vertical field of view that fits the origin-centred bounding sphere of
/// `radius` seen from `distance`, with the 5% margin.
pub fn fit_fov(radius: f64, distance: f64) -> f64 {
    2.0 * (radius * FOV_MARGIN / distance).atan()
}

/// Builds the cameras of `preset` for a normalized mesh. `seed` only matters
/// for the jittered preset.
pub fn make_cameras(preset: &CameraPreset, mesh: &TriMesh, seed: u64) -> Vec<Camera> {
    let radius = mesh.bounding_radius();
    let size = preset.image_size;
    let fitted = |eye: Vec3, target: Vec3, up: Vec3| {
        let fov = fit_fov(radius, eye.norm());
        Camera::look_at(eye, target, up, fov, size, size)
    };
    let orbit = |az: f64, el: f64| {
        let eye = orbit_eye(preset.distance, az, el);
        // near-vertical eyes need a horizontal up vector
        let up = if el.abs() > 80.0 { TOP_UP } else { Vec3::y() };
        fitted(eye, Vec3::zeros(), up)
    };

    match preset.kind {
        PresetKind::Default9 => default_rig(preset).map(|(az, el)| orbit(az, el)).collect(),
        PresetKind::Jittered18 => {
            let mut rng = rng::stream(seed, &[rng::tag::JITTER]);
            let mut cams = Vec::with_capacity(preset.camera_count());
            for _ in 0..2 {
                for (az, el) in default_rig(preset) {
                    let daz = jitter(&mut rng);
                    let del = jitter(&mut rng);
                    cams.push(orbit(az + daz, el + del));
                }
            }
            cams
        }
        PresetKind::Human24 => {
            let mut cams = Vec::new();
            for &y in &preset.y_offsets {
                for &az in &preset.azimuths_deg {
                    let ring = orbit_eye(preset.distance, az, 0.0);
                    let eye = Vec3::new(ring.x, y, ring.z);
                    cams.push(fitted(eye, Vec3::new(0.0, y, 0.0), Vec3::y()));
                }
            }
            cams
        }
    }
}

fn jitter(rng: &mut Rng) -> f64 {
    rng.random_range(-JITTER_DEG..=JITTER_DEG)
}

/// `(azimuth, elevation)` pairs of the ring plus the top-down camera.
fn default_rig(preset: &CameraPreset) -> impl Iterator<Item = (f64, f64)> + '_ {
    preset
        .elevations_deg
        .iter()
        .flat_map(move |&el| preset.azimuths_deg.iter().map(move |&az| (az, el)))
        .chain(std::iter::once((0.0, 90.0)))
}

/// View-dependent prompt suffix: `top-view` above 60° elevation, otherwise
/// the nearest of front (0°), side (90°, 270°) and rear (180°) by azimuth.
pub fn prompt_view_suffix(camera: &Camera) -> &'static str {
    if camera.elevation_deg() > 60.0 {
        return "top-view";
    }
    let az = camera.azimuth_deg();
    let dist = |center: f64| {
        let d = (az - center).rem_euclid(360.0);
        d.min(360.0 - d)
    };
    let candidates = [
        (0.0, "front view"),
        (90.0, "side view"),
        (180.0, "rear view"),
        (270.0, "side view"),
    ];
    candidates
        .iter()
        .min_by(|a, b| dist(a.0).total_cmp(&dist(b.0)))
        .map(|c| c.1)
        .expect("non-empty")
}

/// `"{prompt}, {suffix}"`.
pub fn augment_prompt(prompt: &str, camera: &Camera) -> String {
    format!("{prompt}, {}", prompt_view_suffix(camera))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn sphere() -> TriMesh {
        primitives::uv_sphere(0.5, 24, 12)
    }

    #[test]
    fn default9_layout() {
        let cams = make_cameras(&CameraPreset::default9(), &sphere(), 0);
        assert_eq!(cams.len(), 9);
        let c0 = &cams[0];
        assert!((c0.eye.norm() - 1.5).abs() < 1e-12);
        assert!((c0.azimuth_deg() - 0.0).abs() < 1e-9);
        assert!((c0.elevation_deg() - 30.0).abs() < 1e-9);
        for c in &cams[..8] {
            assert!((c.eye.norm() - 1.5).abs() < 1e-12);
            c.validate().unwrap();
        }
        let top = &cams[8];
        assert!((top.frame().forward - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        top.validate().unwrap();
    }

    #[test]
    fn unit_diameter_fov() {
        let cams = make_cameras(&CameraPreset::default9(), &sphere(), 0);
        let expected = 2.0 * (0.5f64 * 1.05 / 1.5).atan();
        assert!((cams[3].fov_y - expected).abs() < 1e-12);
        assert!((expected - 0.6734).abs() < 1e-4);
    }

    #[test]
    fn jittered18_stays_near_slots_and_is_seeded() {
        let m = sphere();
        let a = make_cameras(&CameraPreset::jittered18(), &m, 42);
        let b = make_cameras(&CameraPreset::jittered18(), &m, 42);
        let c = make_cameras(&CameraPreset::jittered18(), &m, 43);
        assert_eq!(a.len(), 18);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let base = make_cameras(&CameraPreset::default9(), &m, 0);
        for (k, cam) in a.iter().enumerate() {
            let slot = &base[k % 9];
            let cos = cam.eye.normalize().dot(&slot.eye.normalize()).clamp(-1.0, 1.0);
            // ±10° on both angles moves the eye by at most ~14.2° on the sphere
            assert!(cos.acos().to_degrees() < 14.2, "camera {k} strayed");
        }
    }

    #[test]
    fn human24_cylinder() {
        let cams = make_cameras(&CameraPreset::human24(), &sphere(), 0);
        assert_eq!(cams.len(), 24);
        assert!((cams[0].eye.y - 0.3).abs() < 1e-12);
        assert!((cams[23].eye.y + 0.3).abs() < 1e-12);
        for c in &cams {
            assert!((c.target.x, c.target.z) == (0.0, 0.0));
            assert!(c.frame().forward.y.abs() < 1e-12);
        }
    }

    #[test]
    fn suffixes() {
        let cam = |az: f64, el: f64| {
            Camera::look_at(orbit_eye(1.5, az, el), Vec3::zeros(), Vec3::y(), 0.7, 64, 64)
        };
        assert_eq!(prompt_view_suffix(&cam(0.0, 30.0)), "front view");
        assert_eq!(prompt_view_suffix(&cam(0.0, 75.0)), "top-view");
        assert_eq!(prompt_view_suffix(&cam(100.0, 30.0)), "side view");
        assert_eq!(prompt_view_suffix(&cam(190.0, 10.0)), "rear view");
        assert_eq!(prompt_view_suffix(&cam(280.0, 10.0)), "side view");
        assert_eq!(augment_prompt("a cat", &cam(0.0, 0.0)), "a cat, front view");
    }

    #[test]
    fn preset_json_round_trip_and_validation() {
        let p = CameraPreset::human24();
        let text = p.to_json().unwrap();
        for key in ["kind", "distance", "azimuths_deg", "elevations_deg", "y_offsets"] {
            assert!(text.contains(key));
        }
        assert_eq!(CameraPreset::from_json(&text).unwrap(), p);
        let mut bad = CameraPreset::default9();
        bad.azimuths_deg.pop();
        assert!(CameraPreset::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn fov_scaling_scales_tangent() {
        let c = Camera::look_at(Vec3::new(1.5, 0.0, 0.0), Vec3::zeros(), Vec3::y(), 0.6, 64, 64);
        let w = c.with_fov_scaled(2.0);
        assert!(((0.5 * w.fov_y).tan() / (0.5 * c.fov_y).tan() - 2.0).abs() < 1e-12);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn suffix_ignores_distance_and_fov(az in 0.0f64..360.0, el in -30.0f64..89.0,
                                           d1 in 0.5f64..5.0, d2 in 0.5f64..5.0,
                                           f1 in 0.1f64..2.0, f2 in 0.1f64..2.0) {
            let a = Camera::look_at(orbit_eye(d1, az, el), Vec3::zeros(), Vec3::y(), f1, 64, 64);
            let b = Camera::look_at(orbit_eye(d2, az, el), Vec3::zeros(), Vec3::y(), f2, 32, 48);
            prop_assert_eq!(prompt_view_suffix(&a), prompt_view_suffix(&b));
        }
    }
}
