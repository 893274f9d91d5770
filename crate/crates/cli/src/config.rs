use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use simstex_core::colorfield::{DistillConfig, FieldConfig};
use simstex_core::geometry::{primitives, CameraPreset, PresetKind, TriMesh};
use simstex_core::sims::SimsConfig;

/// Where the ε-predictions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserSpec {
    Zero,
    Gaussian { mu: f64, s: f64 },
    /// Delta oracle targeting renders of the `.ltx` texture at this path.
    Delta(PathBuf),
    /// Bridge address; `None` reads `SIMSTEX_BRIDGE_ADDR`.
    Remote(Option<String>),
}

impl FromStr for DenoiserSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match (kind, arg) {
            ("zero", "") => Ok(Self::Zero),
            ("gaussian", arg) => {
                let parts: Vec<&str> = arg.split(',').collect();
                let [mu, sd] = parts[..] else {
                    return Err(format!("expected gaussian:MU,S, got {s:?}"));
                };
                let mu: f64 = mu.trim().parse().map_err(|_| format!("bad mean in {s:?}"))?;
                let sd: f64 = sd.trim().parse().map_err(|_| format!("bad standard deviation in {s:?}"))?;
                if !mu.is_finite() || !(sd > 0.0 && sd.is_finite()) {
                    return Err(format!("gaussian needs a finite mean and positive std, got {s:?}"));
                }
                Ok(Self::Gaussian { mu, s: sd })
            }
            ("delta", path) if !path.is_empty() => Ok(Self::Delta(PathBuf::from(path))),
            ("remote", "") => Ok(Self::Remote(None)),
            ("remote", addr) => Ok(Self::Remote(Some(addr.to_owned()))),
            _ => Err(format!(
                "unknown denoiser {s:?} (expected zero, gaussian:MU,S, delta:PATH or remote[:HOST:PORT])"
            )),
        }
    }
}

impl fmt::Display for DenoiserSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "zero"),
            Self::Gaussian { mu, s } => write!(f, "gaussian:{mu},{s}"),
            Self::Delta(p) => write!(f, "delta:{}", p.display()),
            Self::Remote(None) => write!(f, "remote"),
            Self::Remote(Some(a)) => write!(f, "remote:{a}"),
        }
    }
}

/// Built-in mesh names accepted in place of an OBJ path.
pub const BUILTIN_MESHES: [&str; 3] = ["builtin:sphere", "builtin:quad", "builtin:cube"];

pub fn load_mesh(spec: &str) -> anyhow::Result<TriMesh> {
    let raw = match spec {
        "builtin:sphere" => primitives::uv_sphere(0.5, 32, 16),
        "builtin:quad" => primitives::quad(),
        "builtin:cube" => primitives::cube(),
        path => {
            if path.starts_with("builtin:") {
                bail!("unknown built-in mesh {path:?} (expected one of {})", BUILTIN_MESHES.join(", "));
            }
            simstex_core::geometry::load_obj(Path::new(path)).with_context(|| format!("loading mesh {path}"))?
        }
    };
    Ok(simstex_core::geometry::prepare_mesh(&raw)?)
}

/// `default9`, `jittered18`, `human24`, or a JSON preset file.
pub fn load_preset(spec: &str) -> anyhow::Result<CameraPreset> {
    let kind = match spec {
        "default9" => Some(PresetKind::Default9),
        "jittered18" => Some(PresetKind::Jittered18),
        "human24" => Some(PresetKind::Human24),
        _ => None,
    };
    match kind {
        Some(k) => Ok(CameraPreset::from_kind(k)),
        None => {
            let text = std::fs::read_to_string(spec).with_context(|| format!("reading camera preset {spec}"))?;
            Ok(CameraPreset::from_json(&text)?)
        }
    }
}

/// Resolved settings of a texture run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// OBJ path or `builtin:NAME`.
    pub mesh: Option<String>,
    pub prompt: String,
    pub preset: String,
    pub denoiser: Option<String>,
    pub out: PathBuf,
    pub sims: SimsConfig,
    pub distill: DistillConfig,
    pub field: FieldConfig,
    /// Side of the baked RGB texture.
    pub bake_resolution: usize,
    /// Skip distillation and baking.
    pub no_bake: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            prompt: String::new(),
            preset: "default9".into(),
            denoiser: None,
            out: PathBuf::from("simstex-out"),
            sims: SimsConfig::default(),
            distill: DistillConfig {
                iters: 200,
                ..DistillConfig::default()
            },
            field: FieldConfig::default(),
            bake_resolution: 1024,
            no_bake: false,
        }
    }
}

impl RunConfig {
    /// Reads a run config, or the `run` section of a previous manifest.
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(run) = value.get_mut("run") {
            value = run.take();
        }
        serde_json::from_value(value).with_context(|| format!("invalid config in {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn denoiser_specs_round_trip() {
        for s in ["zero", "gaussian:0.7,0.2", "delta:tex.ltx", "remote", "remote:127.0.0.1:7000"] {
            let spec: DenoiserSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!(
            "gaussian:0.7, 0.2".parse::<DenoiserSpec>().unwrap(),
            DenoiserSpec::Gaussian { mu: 0.7, s: 0.2 }
        );
        for bad in ["", "gauss", "gaussian:1", "gaussian:1,0", "gaussian:a,b", "delta:", "zero:1"] {
            assert!(bad.parse::<DenoiserSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn manifest_run_section_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            prompt: "x".into(),
            ..RunConfig::default()
        };
        let wrapped = serde_json::json!({ "run": cfg, "other": 1 });
        let path = dir.path().join("m.json");
        std::fs::write(&path, wrapped.to_string()).unwrap();
        assert_eq!(RunConfig::from_file(&path).unwrap(), cfg);
        std::fs::write(&path, r#"{"prompt": "y", "sims": {"seed": 4}}"#).unwrap();
        let partial = RunConfig::from_file(&path).unwrap();
        assert_eq!(partial.sims.seed, 4);
        assert_eq!(partial.sims.rounds, 2);
        assert_eq!(partial.preset, "default9");
    }

    #[test]
    fn presets_and_builtins() {
        assert_eq!(load_preset("human24").unwrap().camera_count(), 24);
        assert!(load_preset("/nonexistent.json").is_err());
        assert!(load_mesh("builtin:sphere").unwrap().has_uvs());
        assert!(load_mesh("builtin:cube").unwrap().has_uvs());
        assert!(load_mesh("builtin:teapot").is_err());
    }
}
