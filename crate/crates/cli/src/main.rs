//! `simstex`: texture meshes with the multiview latent sampler, run the
//! verification suites, and render textures.

mod config;
mod render;
mod texture;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simstex_core::verify::{self, Suite};

use config::DenoiserSpec;

/// Exit codes.
const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "simstex", version, about = "Multiview latent texture sampling on triangle meshes")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a latent texture for a mesh and bake an RGB texture.
    Texture(TextureArgs),
    /// Run a verification suite and print a pass/fail table.
    Verify {
        /// adjoint, schedule, oracle, sims, colorfield or all.
        #[arg(value_parser = parse_suite)]
        suite: Suite,
    },
    /// Render a texture on a mesh to a PNG.
    Render(RenderArgs),
}

/// Flags of `texture`. Unset flags fall back to the config file, then to
/// built-in defaults.
#[derive(Debug, Args)]
pub struct TextureArgs {
    /// JSON run config, or the manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// OBJ file or builtin:sphere, builtin:quad, builtin:cube.
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    prompt: Option<String>,
    /// default9, jittered18, human24 or a JSON preset file.
    #[arg(long)]
    preset: Option<String>,
    /// zero, gaussian:MU,S, delta:TEXTURE.ltx or remote[:HOST:PORT].
    #[arg(long, value_parser = parse_denoiser)]
    denoiser: Option<DenoiserSpec>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    rounds: Option<u8>,
    /// Sampling steps of the full schedule.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    tau_coarse: Option<f64>,
    #[arg(long)]
    tau_refine: Option<f64>,
    /// Diffusion time the coarse texture is re-noised to before refinement.
    #[arg(long)]
    refine_t: Option<usize>,
    #[arg(long)]
    w_joint: Option<f64>,
    #[arg(long)]
    w_text: Option<f64>,
    /// Coarse texture side (multiple of 8); default from the mesh.
    #[arg(long)]
    coarse_resolution: Option<usize>,
    #[arg(long)]
    distill_iters: Option<usize>,
    #[arg(long)]
    bake_resolution: Option<usize>,
    /// Only write the latent outputs.
    #[arg(long)]
    no_bake: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// .ltx (latent or RGB), .png or .pfm texture.
    #[arg(long)]
    texture: PathBuf,
    /// OBJ file or builtin mesh the texture belongs to.
    #[arg(long)]
    mesh: String,
    /// Camera index into the preset.
    #[arg(long, conflicts_with = "eye")]
    camera: Option<usize>,
    /// Camera position `x,y,z` looking at the origin.
    #[arg(long, value_parser = parse_vec3)]
    eye: Option<[f64; 3]>,
    /// Vertical field of view in degrees for --eye; fitted to the mesh if unset.
    #[arg(long, requires = "eye")]
    fov: Option<f64>,
    #[arg(long, default_value = "default9")]
    preset: String,
    /// Image side in pixels.
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: simstex_core::Error| e.to_string())
}

fn parse_denoiser(s: &str) -> Result<DenoiserSpec, String> {
    s.parse()
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("{s:?}: {e}"))?;
    <[f64; 3]>::try_from(v).map_err(|_| format!("expected x,y,z, got {s:?}"))
}

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.into())
    }
}

impl From<simstex_core::Error> for CliError {
    fn from(e: simstex_core::Error) -> Self {
        Self::Runtime(e.into())
    }
}

fn run_verify(suite: Suite) -> Result<(), CliError> {
    let checks = verify::run_suite(suite, |c| println!("{c}"));
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} passed, {failed} failed", checks.len(), checks.len() - failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!("{failed} verification checks failed")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Texture(args) => texture::run(args),
        Command::Verify { suite } => run_verify(suite),
        Command::Render(args) => render::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
