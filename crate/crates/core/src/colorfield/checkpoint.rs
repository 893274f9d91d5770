use std::io::{Read, Write};

use super::field::ColorField;
use super::hashgrid::FieldConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HGF1";

/// Writes `HGF1`, a u32 LE JSON length, the JSON config, then every
/// parameter as f32 LE (tables first, then the MLP).
pub fn write_field(field: &ColorField, mut out: impl Write) -> Result<()> {
    let json = serde_json::to_vec(field.config())?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(field.param_count() * 4);
    for &p in field.params() {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field(mut input: impl Read) -> Result<ColorField> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad field checkpoint magic {magic:?}")));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("field config block of {len} bytes")));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let cfg: FieldConfig = serde_json::from_slice(&json)?;
    let mut field = ColorField::zeroed(cfg)?;
    let mut raw = vec![0u8; field.param_count() * 4];
    input.read_exact(&mut raw).map_err(|e| Error::Format(format!("truncated field parameters: {e}")))?;
    for (p, b) in field.params_mut().iter_mut().zip(raw.chunks_exact(4)) {
        *p = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
    }
    if field.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Format("non-finite field parameter".into()));
    }
    Ok(field)
}

pub fn save_field(field: &ColorField, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &std::path::Path) -> Result<ColorField> {
    read_field(std::io::BufReader::new(std::fs::File::open(path)?))
}
