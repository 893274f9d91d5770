use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use simstex_core::colorfield::{self, ColorField};
use simstex_core::denoiser::{DeltaOracle, Denoiser, GaussianOracle, GaussianOracleParams, RemoteDenoiser, ZeroDenoiser, BRIDGE_ADDR_ENV};
use simstex_core::geometry::{write_obj, TriMesh};
use simstex_core::raster::rasterize;
use simstex_core::rng::{self, tag};
use simstex_core::sims::{run_pipeline, RoundOutput, RunManifest};
use simstex_core::{io, Grid};

use crate::config::{load_mesh, load_preset, DenoiserSpec, RunConfig};
use crate::{CliError, TextureArgs};

/// Flags over config file over defaults.
fn resolve(args: TextureArgs) -> Result<(RunConfig, DenoiserSpec), CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| CliError::Usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    fn set<T>(dst: &mut T, v: Option<T>) {
        if let Some(v) = v {
            *dst = v;
        }
    }
    if args.mesh.is_some() {
        cfg.mesh = args.mesh;
    }
    if let Some(d) = args.denoiser {
        cfg.denoiser = Some(d.to_string());
    }
    set(&mut cfg.prompt, args.prompt);
    set(&mut cfg.preset, args.preset);
    set(&mut cfg.out, args.out);
    set(&mut cfg.sims.seed, args.seed);
    set(&mut cfg.sims.rounds, args.rounds);
    set(&mut cfg.sims.schedule.steps, args.steps);
    set(&mut cfg.sims.eta, args.eta);
    set(&mut cfg.sims.tau_coarse, args.tau_coarse);
    set(&mut cfg.sims.tau_refine, args.tau_refine);
    set(&mut cfg.sims.refine_t, args.refine_t);
    set(&mut cfg.sims.guidance.w_joint, args.w_joint);
    set(&mut cfg.sims.guidance.w_text, args.w_text);
    set(&mut cfg.distill.iters, args.distill_iters);
    set(&mut cfg.bake_resolution, args.bake_resolution);
    if args.coarse_resolution.is_some() {
        cfg.sims.coarse_resolution = args.coarse_resolution;
    }
    cfg.no_bake |= args.no_bake;
    cfg.distill.seed = cfg.sims.seed;

    if cfg.mesh.is_none() {
        return Err(CliError::Usage("no mesh given (--mesh or \"mesh\" in the config)".into()));
    }
    let spec: DenoiserSpec = cfg
        .denoiser
        .as_deref()
        .ok_or_else(|| CliError::Usage("no denoiser given (--denoiser or \"denoiser\" in the config)".into()))?
        .parse()
        .map_err(CliError::Usage)?;
    cfg.sims.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if cfg.bake_resolution == 0 {
        return Err(CliError::Usage("bake resolution must be positive".into()));
    }
    Ok((cfg, spec))
}

enum Backend {
    Local(Box<dyn Denoiser>),
    Remote(RemoteDenoiser),
}

impl Backend {
    fn new(spec: &DenoiserSpec, mesh: &TriMesh) -> Result<Self, CliError> {
        Ok(match spec {
            DenoiserSpec::Zero => Self::Local(Box::new(ZeroDenoiser)),
            DenoiserSpec::Gaussian { mu, s } => {
                Self::Local(Box::new(GaussianOracle::new(GaussianOracleParams::uniform(*mu, *s))?))
            }
            DenoiserSpec::Delta(path) => {
                let tex = io::load_ltx(path).with_context(|| format!("loading delta target {}", path.display()))?;
                Self::Local(Box::new(DeltaOracle::from_texture(mesh.clone(), tex)?))
            }
            DenoiserSpec::Remote(addr) => {
                let addr = match addr {
                    Some(a) => a.clone(),
                    None => std::env::var(BRIDGE_ADDR_ENV)
                        .map_err(|_| CliError::Usage(format!("remote denoiser without address and {BRIDGE_ADDR_ENV} unset")))?,
                };
                let remote = RemoteDenoiser::connect(&addr)?;
                log::info!("bridge {addr}: model {}", remote.info().model);
                Self::Remote(remote)
            }
        })
    }

    fn denoiser(&self) -> &dyn Denoiser {
        match self {
            Self::Local(d) => d.as_ref(),
            Self::Remote(r) => r,
        }
    }

    /// RGB images of the clean view predictions: the bridge decoder when
    /// there is one, the latent preview otherwise.
    fn rgb_views(&self, views: &[Grid]) -> simstex_core::Result<Vec<Grid>> {
        views
            .iter()
            .map(|v| match self {
                Self::Remote(r) => r.decode(v),
                Self::Local(_) => colorfield::latent_preview(v),
            })
            .collect()
    }
}

#[derive(Serialize)]
struct DistillSummary {
    samples: usize,
    iters: usize,
    final_loss: f64,
    clamped_samples: usize,
    bake_resolution: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    run: &'a RunConfig,
    pipeline: &'a RunManifest,
    distill: Option<DistillSummary>,
    outputs: Vec<String>,
}

fn bake(
    backend: &Backend,
    mesh: &TriMesh,
    result: &RoundOutput,
    cfg: &RunConfig,
    out: &Path,
    outputs: &mut Vec<String>,
) -> anyhow::Result<DistillSummary> {
    let rgb = backend.rgb_views(&result.xhat0_views).context("decoding views")?;
    let (tex_h, tex_w) = (result.z0.height(), result.z0.width());
    let mut samples = Vec::new();
    for (n, (cam, img)) in result.cameras.iter().zip(&rgb).enumerate() {
        let cam = cam.with_image_size(img.height(), img.width());
        samples.extend(colorfield::samples_from_view(&rasterize(mesh, &cam, tex_h, tex_w), img, n)?);
    }
    let mut field = ColorField::new(cfg.field, &mut rng::stream(cfg.sims.seed, &[tag::FIELD_INIT]))?;
    let stats = colorfield::distill(&mut field, &samples, &cfg.distill)?;
    let side = cfg.bake_resolution;
    let texture = colorfield::bake_texture(&field, mesh, side, side)?;
    io::save_png(&texture, &out.join("texture.png"))?;
    colorfield::save_field(&field, &out.join("field.hgf"))?;
    outputs.extend(["texture.png".into(), "field.hgf".into()]);
    Ok(DistillSummary {
        samples: samples.len(),
        iters: stats.losses.len(),
        final_loss: stats.losses.last().copied().unwrap_or(f64::NAN),
        clamped_samples: stats.clamped,
        bake_resolution: side,
    })
}

pub fn run(args: TextureArgs) -> Result<(), CliError> {
    let (cfg, spec) = resolve(args)?;
    let mesh_spec = cfg.mesh.as_deref().expect("resolved");
    let mesh = load_mesh(mesh_spec)?;
    let preset = load_preset(&cfg.preset).map_err(|e| CliError::Usage(format!("{e:#}")))?;
    let backend = Backend::new(&spec, &mesh)?;

    let out = cfg.out.clone();
    fs::create_dir_all(out.join("views")).with_context(|| format!("creating {}", out.display()))?;

    let run = run_pipeline(&mesh, &cfg.prompt, &preset, backend.denoiser(), &cfg.sims, &mut ())?;
    let result = run.result();

    let mut outputs = vec!["manifest.json".to_owned(), "z0.ltx".into(), "z0.png".into(), "mesh.obj".into()];
    io::save_ltx(&result.z0, &out.join("z0.ltx"))?;
    io::save_png(&io::latent_mosaic(&result.z0), &out.join("z0.png"))?;
    fs::write(out.join("mesh.obj"), write_obj(&mesh))?;
    for (n, view) in result.xhat0_views.iter().enumerate() {
        let name = format!("views/view_{n:02}.ltx");
        io::save_ltx(view, &out.join(&name))?;
        outputs.push(name);
    }

    let distill = if cfg.no_bake {
        None
    } else {
        Some(bake(&backend, &mesh, result, &cfg, &out, &mut outputs)?)
    };

    let manifest = Manifest {
        run: &cfg,
        pipeline: &run.manifest,
        distill,
        outputs,
    };
    let json = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
    fs::write(out.join("manifest.json"), json)?;

    let r = &run.manifest;
    for round in &r.rounds {
        println!(
            "round {}: {}x{} texture, {} steps, coverage {:.1}%, {:.2} s",
            round.round,
            round.texture[0],
            round.texture[1],
            round.times.len() - 1,
            100.0 * round.coverage,
            round.seconds
        );
    }
    if let Some(d) = &manifest.distill {
        println!("distilled {} samples, final loss {:.3e}; baked {}²", d.samples, d.final_loss, d.bake_resolution);
    }
    println!("wrote {}", out.display());
    Ok(())
}
