use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::wire::{read_message, write_message, Message, Tensor};
use super::{DenoiseRequest, Denoiser};
use crate::diffusion::GuidanceConfig;
use crate::error::{Error, Result};
use crate::tensor::{Grid, LatentImage};

/// Environment variable holding the bridge `host:port`.
pub const BRIDGE_ADDR_ENV: &str = "SIMSTEX_BRIDGE_ADDR";

/// Capabilities reported by the bridge's `info` op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeInfo {
    pub model: String,
    pub channels: usize,
    pub downscale: usize,
    #[serde(default)]
    pub ops: Vec<String>,
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Client for a denoiser bridge. One request is in flight at a time; the
/// connection is guarded by a mutex so the client can be shared.
pub struct RemoteDenoiser {
    addr: String,
    conn: Mutex<Connection>,
    info: BridgeInfo,
}

fn transport(addr: &str, e: impl std::fmt::Display) -> Error {
    Error::Transport(format!("bridge at {addr}: {e}"))
}

impl RemoteDenoiser {
    /// Connects and queries `info`.
    pub fn connect(addr: &str) -> Result<Self> {
        Self::connect_timeout(addr, None)
    }

    pub fn connect_timeout(addr: &str, timeout: Option<Duration>) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| transport(addr, e))?;
        stream.set_read_timeout(timeout).map_err(|e| transport(addr, e))?;
        stream.set_nodelay(true).map_err(|e| transport(addr, e))?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| transport(addr, e))?);
        let conn = Mutex::new(Connection {
            reader,
            writer: BufWriter::new(stream),
        });
        let mut client = Self {
            addr: addr.to_owned(),
            conn,
            info: BridgeInfo {
                model: String::new(),
                channels: 0,
                downscale: 0,
                ops: Vec::new(),
            },
        };
        let reply = client.call(&Message::new("info"))?;
        client.info = serde_json::from_value(Value::Object(reply.header))
            .map_err(|e| Error::Protocol(format!("bad info reply: {e}")))?;
        Ok(client)
    }

    /// Connects to the address in `SIMSTEX_BRIDGE_ADDR`.
    pub fn from_env() -> Result<Self> {
        let addr = std::env::var(BRIDGE_ADDR_ENV)
            .map_err(|_| Error::Transport(format!("{BRIDGE_ADDR_ENV} is not set")))?;
        Self::connect(&addr)
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub fn info(&self) -> &BridgeInfo {
        &self.info
    }

    /// Sends one request and returns the reply. Replies with `"ok": false`
    /// become protocol errors carrying the server's message.
    pub fn call(&self, msg: &Message) -> Result<Message> {
        let mut conn = self.conn.lock().map_err(|_| transport(&self.addr, "connection poisoned"))?;
        write_message(&mut conn.writer, msg).map_err(|e| match e {
            Error::Io(e) => transport(&self.addr, e),
            other => other,
        })?;
        let mut reply = match read_message(&mut conn.reader) {
            Ok(Some(m)) => m,
            Ok(None) => return Err(transport(&self.addr, "connection closed")),
            Err(Error::Io(e)) => return Err(transport(&self.addr, e)),
            Err(e) => return Err(e),
        };
        drop(conn);
        match reply.header.remove("ok") {
            Some(Value::Bool(true)) => Ok(reply),
            Some(Value::Bool(false)) => {
                let reason = reply.header.get("error").and_then(Value::as_str).unwrap_or("unspecified error");
                Err(Error::Protocol(format!("bridge rejected {}: {reason}", msg.op().unwrap_or("request"))))
            }
            _ => Err(Error::Protocol("reply lacks an ok flag".into())),
        }
    }

    /// Decodes a `h × w × c` latent image to `8h × 8w × 3` RGB in `[0, 1]`.
    pub fn decode(&self, latents: &LatentImage) -> Result<Grid> {
        let (h, w, c) = latents.dims();
        let msg = Message::new("decode").with_tensor(Tensor::new("latents", vec![c, h, w], latents.to_chw())?);
        let reply = self.call(&msg)?;
        let rgb = reply
            .tensors
            .first()
            .ok_or_else(|| Error::Protocol("decode reply has no tensor".into()))?;
        match rgb.shape[..] {
            [3, rh, rw] => Grid::from_chw(3, rh, rw, &rgb.data),
            _ => Err(Error::Protocol(format!("decode reply has shape {:?}", rgb.shape))),
        }
    }

    fn denoise(&self, req: &DenoiseRequest, guidance: Option<GuidanceConfig>) -> Result<LatentImage> {
        let (h, w, c) = req.latents.dims();
        if req.t == 0 {
            return Err(Error::Schedule("diffusion time 0 has no model timestep".into()));
        }
        // Schedule times are 1-based; model timesteps run 0..T.
        let mut msg = Message::new("denoise")
            .with("t", req.t - 1)
            .with("alpha_bar", req.alpha_bar)
            .with("prompt", req.prompt)
            .with("view_suffix", req.view_suffix)
            .with("conditioning", req.conditioning.as_str())
            .with_tensor(Tensor::new("latents", vec![c, h, w], req.latents.to_chw())?)
            .with_tensor(Tensor::new("depth", vec![1, h, w], req.depth.data().to_vec())?);
        if let Some(g) = guidance {
            msg = msg.with("guidance", serde_json::to_value(g)?);
        }
        let reply = self.call(&msg)?;
        let eps = reply
            .tensors
            .first()
            .ok_or_else(|| Error::Protocol("denoise reply has no tensor".into()))?;
        if eps.shape != [c, h, w] {
            return Err(Error::Protocol(format!(
                "denoise reply has shape {:?}, expected {:?}",
                eps.shape,
                [c, h, w]
            )));
        }
        Grid::from_chw(c, h, w, &eps.data)
    }
}

impl Denoiser for RemoteDenoiser {
    fn describe(&self) -> String {
        format!("remote({} at {})", self.info.model, self.addr)
    }

    fn predict_epsilon(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        self.denoise(req, None)
    }

    /// Guidance is applied by the bridge; the weights travel in the header.
    fn predict_guided(&self, req: &DenoiseRequest) -> Result<LatentImage> {
        req.guidance.validate()?;
        self.denoise(req, Some(req.guidance))
    }
}
