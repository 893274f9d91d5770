//! Length-prefixed framing for the denoiser bridge.
//!
//! ```text
//! u32 LE  body length (everything after this field)
//! u32 LE  header length
//! [u8]    JSON header (object)
//! [f32]   LE payload: the tensors listed in header["tensors"], CHW order
//! ```
//!
//! The header's `"tensors"` entry is `[{"name": .., "shape": [..]}, ..]` and
//! is maintained by the codec; everything else in the header is free-form.

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

const TENSORS_KEY: &str = "tensors";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Protocol(format!(
                "tensor {name}: shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }
}

#[derive(Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Message {
    pub header: Map<String, Value>,
    pub tensors: Vec<Tensor>,
}

impl Message {
    pub fn new(op: &str) -> Self {
        Self::default().with("op", op)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.header.insert(key.to_owned(), value.into());
        self
    }

    pub fn with_tensor(mut self, tensor: Tensor) -> Self {
        self.tensors.push(tensor);
        self
    }

    pub fn op(&self) -> Option<&str> {
        self.header.get("op").and_then(Value::as_str)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Serializes the whole frame, length prefix included.
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.header.contains_key(TENSORS_KEY) {
            return Err(Error::Protocol(format!("header key {TENSORS_KEY:?} is reserved")));
        }
        let mut header = self.header.clone();
        let specs: Vec<TensorSpec> = self
            .tensors
            .iter()
            .map(|t| TensorSpec {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect();
        header.insert(TENSORS_KEY.into(), serde_json::to_value(specs)?);
        let header = serde_json::to_vec(&Value::Object(header))?;
        let payload_len: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let body_len = 4 + header.len() + payload_len;
        if body_len > MAX_FRAME_BYTES {
            return Err(Error::Protocol(format!("frame of {body_len} bytes exceeds limit")));
        }
        let mut out = Vec::with_capacity(4 + body_len);
        out.extend_from_slice(&(body_len as u32).to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a frame body (the bytes after the length prefix).
    pub fn decode(body: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Protocol(msg);
        if body.len() < 4 {
            return Err(bad(format!("frame body of {} bytes has no header length", body.len())));
        }
        let header_len = u32::from_le_bytes(body[..4].try_into().expect("4 bytes")) as usize;
        let rest = &body[4..];
        if header_len > rest.len() {
            return Err(bad(format!("header length {header_len} exceeds frame")));
        }
        let mut header = match serde_json::from_slice(&rest[..header_len]) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(bad("header is not a JSON object".into())),
            Err(e) => return Err(bad(format!("header is not valid JSON: {e}"))),
        };
        let specs: Vec<TensorSpec> = match header.remove(TENSORS_KEY) {
            Some(v) => serde_json::from_value(v).map_err(|e| bad(format!("bad tensor list: {e}")))?,
            None => Vec::new(),
        };
        let payload = &rest[header_len..];
        let mut declared = 0usize;
        for spec in &specs {
            declared = spec
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| declared.checked_add(n))
                .ok_or_else(|| bad("tensor shapes overflow".into()))?;
        }
        if declared.checked_mul(4) != Some(payload.len()) {
            return Err(bad(format!(
                "shapes declare {declared} floats but payload has {} bytes",
                payload.len()
            )));
        }
        let mut floats = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")));
        let tensors = specs
            .into_iter()
            .map(|s| {
                let n = s.shape.iter().product();
                Tensor {
                    name: s.name,
                    shape: s.shape,
                    data: floats.by_ref().take(n).collect(),
                }
            })
            .collect();
        Ok(Self { header, tensors })
    }
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&msg.encode()?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame body. `Ok(None)` on a clean end of stream before the
/// length prefix.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn read_message(r: &mut impl Read) -> Result<Option<Message>> {
    read_frame(r)?.map(|body| Message::decode(&body)).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Message {
        Message::new("denoise")
            .with("t", 500)
            .with("prompt", "a chair, front view")
            .with_tensor(Tensor::new("latents", vec![2, 2, 2], (0..8).map(|v| v as f32 * 0.5).collect()).unwrap())
            .with_tensor(Tensor::new("depth", vec![1, 2, 2], vec![0.0, 0.25, 0.5, 1.0]).unwrap())
    }

    #[test]
    fn frame_layout() {
        let bytes = sample().encode().unwrap();
        let body_len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(body_len, bytes.len() - 4);
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header: Value = serde_json::from_slice(&bytes[8..8 + header_len]).unwrap();
        assert_eq!(header["op"], "denoise");
        assert_eq!(header["tensors"][0]["shape"], serde_json::json!([2, 2, 2]));
        assert_eq!(bytes.len() - 8 - header_len, 12 * 4);
        assert_eq!(f32::from_le_bytes(bytes[8 + header_len + 4..8 + header_len + 8].try_into().unwrap()), 0.5);
    }

    #[test]
    fn stream_round_trip() {
        let mut buf = Vec::new();
        write_message(&mut buf, &sample()).unwrap();
        write_message(&mut buf, &Message::new("info")).unwrap();
        let mut r = buf.as_slice();
        assert_eq!(read_message(&mut r).unwrap().unwrap(), sample());
        assert_eq!(read_message(&mut r).unwrap().unwrap().op(), Some("info"));
        assert!(read_message(&mut r).unwrap().is_none());
    }

    #[test]
    fn malformed_frames_are_protocol_errors() {
        let body = sample().encode().unwrap()[4..].to_vec();
        for cut in [0, 3, 10, body.len() - 1] {
            assert!(matches!(Message::decode(&body[..cut]), Err(Error::Protocol(_))), "cut {cut}");
        }
        let mut junk = 5u32.to_le_bytes().to_vec();
        junk.extend_from_slice(b"{nope");
        assert!(matches!(Message::decode(&junk), Err(Error::Protocol(_))));
        assert!(Tensor::new("x", vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Message::new("echo").with("tensors", 1).encode().is_err());
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::from),
            any::<bool>().prop_map(Value::from),
            "[a-z ,.]{0,12}".prop_map(Value::from),
            (-1e6f64..1e6).prop_map(Value::from),
        ]
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let header = proptest::collection::btree_map("[a-z_]{1,8}", arb_value(), 0..5);
        let tensor = ("[a-z]{1,6}", proptest::collection::vec(0usize..5, 0..4)).prop_flat_map(|(name, shape)| {
            let n: usize = shape.iter().product();
            proptest::collection::vec(any::<f32>(), n)
                .prop_map(move |data| Tensor::new(name.clone(), shape.clone(), data).unwrap())
        });
        (header, proptest::collection::vec(tensor, 0..4)).prop_map(|(h, tensors)| Message {
            header: h.into_iter().filter(|(k, _)| k != TENSORS_KEY).collect(),
            tensors,
        })
    }

    fn same_bits(a: &Message, b: &Message) -> bool {
        a.header == b.header
            && a.tensors.len() == b.tensors.len()
            && a.tensors.iter().zip(&b.tensors).all(|(x, y)| {
                x.name == y.name
                    && x.shape == y.shape
                    && x.data.iter().map(|v| v.to_bits()).eq(y.data.iter().map(|v| v.to_bits()))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn encode_decode_is_identity(msg in arb_message()) {
            let bytes = msg.encode().unwrap();
            let back = Message::decode(&bytes[4..]).unwrap();
            prop_assert!(same_bits(&msg, &back));
        }
    }
}
