//! Grid file formats: `.ltx`, PFM and 8-bit PNG.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Grid;

const LTX_MAGIC: &[u8; 4] = b"LTX1";

/// `LTX1`, u32 LE height, width, channels, then the data as f32 LE in
/// row-major channel-last order.
pub fn write_ltx(grid: &Grid, mut out: impl Write) -> Result<()> {
    let (h, w, c) = grid.dims();
    out.write_all(LTX_MAGIC)?;
    for d in [h, w, c] {
        let d = u32::try_from(d).map_err(|_| shape_err(format!("dimension {d} does not fit u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(grid.data().len() * 4);
    for v in grid.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_ltx(mut input: impl Read) -> Result<Grid> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head).map_err(|e| Error::Format(format!("truncated ltx header: {e}")))?;
    if &head[..4] != LTX_MAGIC {
        return Err(Error::Format("not an LTX1 file".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .filter(|&n| n <= 1 << 30)
        .ok_or_else(|| Error::Format(format!("ltx dimensions {h}x{w}x{c} too large")))?;
    let mut raw = vec![0u8; n * 4];
    input.read_exact(&mut raw).map_err(|e| Error::Format(format!("truncated ltx payload: {e}")))?;
    let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
    Grid::from_vec(h, w, c, data)
}

pub fn save_ltx(grid: &Grid, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_ltx(grid, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_ltx(path: &Path) -> Result<Grid> {
    read_ltx(std::io::BufReader::new(fs::File::open(path)?))
}

/// Little-endian PFM (`Pf` for one channel, `PF` for three). Rows are stored
/// bottom to top as the format requires.
pub fn write_pfm(grid: &Grid, mut out: impl Write) -> Result<()> {
    let (h, w, c) = grid.dims();
    let kind = match c {
        1 => "Pf",
        3 => "PF",
        _ => return Err(shape_err(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    write!(out, "{kind}\n{w} {h}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(grid.data().len() * 4);
    for row in (0..h).rev() {
        for v in &grid.data()[row * w * c..(row + 1) * w * c] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_pfm(mut input: impl Read) -> Result<Grid> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Format(format!("pfm: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ascii"))?.to_owned());
    }
    pos += 1;
    let c = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(bad(&format!("unknown kind {other:?}"))),
    };
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let n = w * h * c;
    let payload = bytes.get(pos..pos + n * 4).ok_or_else(|| bad("truncated payload"))?;
    let vals: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| {
            let b: [u8; 4] = b.try_into().expect("4 bytes");
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    let mut data = Vec::with_capacity(n);
    for row in (0..h).rev() {
        data.extend_from_slice(&vals[row * w * c..(row + 1) * w * c]);
    }
    Grid::from_vec(h, w, c, data)
}

/// 8-bit RGB image of a 1- or 3-channel grid with values in [0, 1]; no gamma
/// is applied.
pub fn to_rgb8(grid: &Grid) -> Result<image::RgbImage> {
    let (h, w, c) = grid.dims();
    if c != 1 && c != 3 {
        return Err(shape_err(format!("rgb export needs 1 or 3 channels, got {c}")));
    }
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let cell = grid.cell(y as usize * w + x as usize);
        if c == 1 {
            image::Rgb([q(cell[0]); 3])
        } else {
            image::Rgb([q(cell[0]), q(cell[1]), q(cell[2])])
        }
    }))
}

pub fn save_png(grid: &Grid, path: &Path) -> Result<()> {
    to_rgb8(grid)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("writing {}: {e}", path.display())))
}

/// Loads an 8-bit PNG as a 3-channel grid in [0, 1].
pub fn load_png(path: &Path) -> Result<Grid> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("reading {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Grid::from_vec(h, w, 3, data)
}

/// Diverging false colour: white at zero, red towards `+scale`, blue towards
/// `−scale`.
fn false_color(v: f32, scale: f32) -> [f32; 3] {
    let t = (v / scale).clamp(-1.0, 1.0);
    [1.0 - (-t).max(0.0), 1.0 - t.abs(), 1.0 - t.max(0.0)]
}

/// Channel mosaic of a multi-channel grid: two tiles per row (channels 0, 1
/// on top, 2, 3 below for latents), each in false colour scaled by the
/// grid's largest magnitude. Missing tiles stay black.
pub fn latent_mosaic(grid: &Grid) -> Grid {
    let (h, w, c) = grid.dims();
    let rows = c.div_ceil(2).max(1);
    let scale = grid.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    Grid::from_fn(rows * h, 2 * w, 3, |r, col, ch| {
        let tile = (r / h) * 2 + col / w;
        if tile >= c {
            return 0.0;
        }
        false_color(grid.get(r % h, col % w, tile), scale)[ch]
    })
}
