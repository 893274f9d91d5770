use anyhow::{bail, Context};
use simstex_core::geometry::{fit_fov, make_cameras, Camera, Vec3, FOV_MARGIN};
use simstex_core::raster::{rasterize, render_texture};
use simstex_core::{io, Grid};

use crate::config::{load_mesh, load_preset};
use crate::{CliError, RenderArgs};

fn load_texture(path: &std::path::Path) -> anyhow::Result<Grid> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let grid = match ext.as_str() {
        "ltx" => io::load_ltx(path)?,
        "png" => io::load_png(path)?,
        "pfm" => io::read_pfm(std::fs::File::open(path)?)?,
        other => bail!("unsupported texture extension {other:?} (expected ltx, png or pfm)"),
    };
    Ok(grid)
}

pub fn run(args: RenderArgs) -> Result<(), CliError> {
    if args.size == 0 {
        return Err(CliError::Usage("--size must be positive".into()));
    }
    let texture = load_texture(&args.texture).with_context(|| format!("loading texture {}", args.texture.display()))?;
    let mesh = load_mesh(&args.mesh)?;

    let camera = match args.eye {
        Some([x, y, z]) => {
            let eye = Vec3::new(x, y, z);
            let fov = match args.fov {
                Some(deg) => deg.to_radians(),
                None => fit_fov(mesh.bounding_radius(), eye.norm()) * FOV_MARGIN.max(1.0),
            };
            let up = if eye.normalize().dot(&Vec3::y()).abs() > 0.99 { -Vec3::x() } else { Vec3::y() };
            Camera::look_at(eye, Vec3::zeros(), up, fov, args.size, args.size)
        }
        None => {
            let preset = load_preset(&args.preset).map_err(|e| CliError::Usage(format!("{e:#}")))?;
            let cams = make_cameras(&preset, &mesh, 0);
            let index = args.camera.unwrap_or(0);
            let cam = cams.get(index).ok_or_else(|| {
                CliError::Usage(format!("camera {index} out of range: the preset has {} cameras", cams.len()))
            })?;
            cam.with_image_size(args.size, args.size)
        }
    };
    camera.validate()?;

    let raster = rasterize(&mesh, &camera, texture.height(), texture.width());
    let image = render_texture(&texture, &raster)?;
    let png = if texture.channels() == 3 || texture.channels() == 1 {
        image
    } else {
        io::latent_mosaic(&image)
    };
    io::save_png(&png, &args.out)?;
    println!(
        "rendered {} foreground pixels of {} to {}",
        raster.foreground_count(),
        raster.pixels(),
        args.out.display()
    );
    Ok(())
}
