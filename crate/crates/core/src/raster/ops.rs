use super::rasterize::RasterOutput;
use crate::error::{shape_err, Result};
use crate::rng::{standard_normal, Rng};
use crate::tensor::{Grid, LatentImage, LatentTexture};

fn check_texture(tex: &Grid, raster: &RasterOutput) -> Result<()> {
    if tex.height() != raster.tex_h || tex.width() != raster.tex_w {
        return Err(shape_err(format!(
            "texture is {}x{}, raster was built for {}x{}",
            tex.height(),
            tex.width(),
            raster.tex_h,
            raster.tex_w
        )));
    }
    Ok(())
}

fn check_image(img: &Grid, raster: &RasterOutput) -> Result<()> {
    if img.height() != raster.height || img.width() != raster.width {
        return Err(shape_err(format!(
            "image is {}x{}, raster is {}x{}",
            img.height(),
            img.width(),
            raster.height,
            raster.width
        )));
    }
    Ok(())
}

/// Nearest-texel fetch: foreground pixels copy their texel, background is 0.
pub fn render_texture(tex: &LatentTexture, raster: &RasterOutput) -> Result<LatentImage> {
    check_texture(tex, raster)?;
    let mut img = Grid::zeros(raster.height, raster.width, tex.channels());
    for (pixel, texel) in raster.foreground() {
        img.cell_mut(pixel).copy_from_slice(tex.cell(texel));
    }
    Ok(img)
}

/// Adjoint of [`render_texture`]: scatter-adds foreground pixels into their
/// texels. Returns the per-texel sums and the per-texel pixel counts.
///
/// Pixels are accumulated in row-major order, so the result is
/// bit-reproducible.
pub fn inverse_render(img: &LatentImage, raster: &RasterOutput) -> Result<(LatentTexture, Vec<f32>)> {
    check_image(img, raster)?;
    let c = img.channels();
    let mut sums = Grid::zeros(raster.tex_h, raster.tex_w, c);
    let mut counts = vec![0.0f32; raster.tex_h * raster.tex_w];
    for (pixel, texel) in raster.foreground() {
        let src = img.cell(pixel);
        for (dst, &v) in sums.cell_mut(texel).iter_mut().zip(src) {
            *dst += v;
        }
        counts[texel] += 1.0;
    }
    Ok((sums, counts))
}

/// Per-texel mean of the foreground pixels that map to each texel, with the
/// pixel counts. Accumulation is in `f64`, so a texel whose pixels all carry
/// the same value gets that value back exactly. Texels without pixels are 0.
pub fn texel_means(img: &LatentImage, raster: &RasterOutput) -> Result<(LatentTexture, Vec<f32>)> {
    check_image(img, raster)?;
    let c = img.channels();
    let n = raster.tex_h * raster.tex_w;
    let mut acc = vec![0.0f64; n * c];
    let mut counts = vec![0.0f32; n];
    for (pixel, texel) in raster.foreground() {
        for (dst, &v) in acc[texel * c..(texel + 1) * c].iter_mut().zip(img.cell(pixel)) {
            *dst += v as f64;
        }
        counts[texel] += 1.0;
    }
    let data = acc
        .chunks(c)
        .zip(&counts)
        .flat_map(|(sums, &k)| sums.iter().map(move |&s| if k > 0.0 { (s / k as f64) as f32 } else { 0.0 }))
        .collect();
    Ok((Grid::from_vec(raster.tex_h, raster.tex_w, c, data)?, counts))
}

/// Per-texel view quality: the mean of `−jac` over the pixels that map to
/// the texel, `−∞` where no pixel does.
pub fn texel_quality(raster: &RasterOutput) -> Vec<f32> {
    let n = raster.tex_h * raster.tex_w;
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0u32; n];
    for (pixel, texel) in raster.foreground() {
        sum[texel] -= raster.jac[pixel] as f64;
        count[texel] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &k)| if k > 0 { (s / k as f64) as f32 } else { f32::NEG_INFINITY })
        .collect()
}

/// Replaces background pixels with i.i.d. standard normal samples, drawn in
/// pixel order. Foreground pixels are left untouched.
pub fn fill_background(img: &mut LatentImage, raster: &RasterOutput, rng: &mut Rng) -> Result<()> {
    check_image(img, raster)?;
    for pixel in 0..raster.pixels() {
        if !raster.is_foreground(pixel) {
            for v in img.cell_mut(pixel) {
                *v = standard_normal(rng);
            }
        }
    }
    Ok(())
}

/// Linear view-space depth min-max normalized to `[0, 1]` over the
/// foreground; background is 0. A flat foreground maps to 1.
pub fn normalized_depth(raster: &RasterOutput) -> Grid {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for (pixel, _) in raster.foreground() {
        lo = lo.min(raster.depth[pixel]);
        hi = hi.max(raster.depth[pixel]);
    }
    let mut out = Grid::zeros(raster.height, raster.width, 1);
    for (pixel, _) in raster.foreground() {
        out.data_mut()[pixel] = if hi > lo {
            (raster.depth[pixel] - lo) / (hi - lo)
        } else {
            1.0
        };
    }
    out
}

/// Texels hit by at least one pixel.
pub fn covered_texels(raster: &RasterOutput) -> Vec<bool> {
    let mut hit = vec![false; raster.tex_h * raster.tex_w];
    for (_, texel) in raster.foreground() {
        hit[texel] = true;
    }
    hit
}
