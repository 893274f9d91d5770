use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::json;

use super::wire::{read_frame, write_message, Message, Tensor};
use crate::error::{Error, Result};

const CHANNELS: usize = 4;
const DOWNSCALE: usize = 8;

/// In-process bridge in echo mode: `denoise` returns the request latents
/// unchanged and `decode` nearest-upsamples the first three channels. Useful
/// for exercising the remote path without model weights.
///
/// The server stops when dropped.
pub struct EchoServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl EchoServer {
    /// Binds an ephemeral port on localhost.
    pub fn spawn() -> Result<Self> {
        Self::bind("127.0.0.1:0")
    }

    pub fn bind(addr: &str) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let accept = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = conn {
                    std::thread::spawn(move || serve(stream));
                }
            }
        });
        Ok(Self {
            addr,
            stop,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is dropped from another thread (never, in
    /// practice); used by the CLI to host a standalone echo bridge.
    pub fn join(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for EchoServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream) {
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(read_half);
    let mut writer = BufWriter::new(stream);
    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(body)) => body,
            _ => return,
        };
        let reply = Message::decode(&body).and_then(|m| handle(&m)).unwrap_or_else(|e| {
            Message::default().with("ok", false).with("error", e.to_string())
        });
        if write_message(&mut writer, &reply).is_err() {
            return;
        }
    }
}

fn handle(msg: &Message) -> Result<Message> {
    let ok = Message::default().with("ok", true);
    match msg.op() {
        Some("info") => Ok(ok
            .with("model", "echo")
            .with("channels", CHANNELS)
            .with("downscale", DOWNSCALE)
            .with("ops", json!(["info", "denoise", "decode", "echo"]))),
        Some("denoise") => {
            let t = msg.header.get("t").and_then(|v| v.as_u64()).ok_or_else(|| proto("denoise needs integer t"))?;
            if t >= 1000 {
                return Err(proto(&format!("t = {t} outside [0, 1000)")));
            }
            let latents = latents(msg)?;
            Ok(ok.with_tensor(Tensor::new("eps", latents.shape.clone(), latents.data.clone())?))
        }
        Some("decode") => {
            let latents = latents(msg)?;
            let (h, w) = (latents.shape[1], latents.shape[2]);
            let (oh, ow) = (h * DOWNSCALE, w * DOWNSCALE);
            let mut rgb = Vec::with_capacity(3 * oh * ow);
            for ch in 0..3 {
                let plane = &latents.data[ch * h * w..(ch + 1) * h * w];
                for r in 0..oh {
                    for c in 0..ow {
                        rgb.push(plane[(r / DOWNSCALE) * w + c / DOWNSCALE].clamp(0.0, 1.0));
                    }
                }
            }
            Ok(ok.with_tensor(Tensor::new("rgb", vec![3, oh, ow], rgb)?))
        }
        Some("echo") => {
            let mut reply = msg.clone();
            reply.header.insert("ok".into(), true.into());
            Ok(reply)
        }
        Some(other) => Err(proto(&format!("unknown op {other:?}"))),
        None => Err(proto("missing op")),
    }
}

fn latents(msg: &Message) -> Result<&Tensor> {
    let t = msg.tensor("latents").ok_or_else(|| proto("missing latents tensor"))?;
    match t.shape[..] {
        [c, _, _] if c >= 3 => Ok(t),
        _ => Err(proto(&format!("latents shape {:?} is not C×H×W with C ≥ 3", t.shape))),
    }
}

fn proto(msg: &str) -> Error {
    Error::Protocol(msg.to_owned())
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::super::fixtures::{camera, request};
    use super::super::wire::read_message;
    use super::super::{Denoiser, RemoteDenoiser};
    use super::*;
    use crate::rng;
    use crate::tensor::Grid;

    #[test]
    fn info_and_denoise_echo() {
        let server = EchoServer::spawn().unwrap();
        let client = RemoteDenoiser::connect(&server.addr().to_string()).unwrap();
        assert_eq!(client.info().model, "echo");
        assert_eq!((client.info().channels, client.info().downscale), (4, 8));

        let x = rng::normal_grid(8, 8, 4, &mut rng::stream(1, &[]));
        let d = Grid::zeros(8, 8, 1);
        let cam = camera();
        let req = request(&x, &d, &cam, 0.5);
        let eps = client.predict_guided(&req).unwrap();
        assert!(eps.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(client.predict_epsilon(&req).unwrap(), x);
    }

    #[test]
    fn decode_upsamples_and_clamps() {
        let server = EchoServer::spawn().unwrap();
        let client = RemoteDenoiser::connect(&server.addr().to_string()).unwrap();
        let x = Grid::from_fn(2, 3, 4, |r, c, ch| (r * 3 + c) as f32 * 0.2 - 0.1 * ch as f32);
        let rgb = client.decode(&x).unwrap();
        assert_eq!(rgb.dims(), (16, 24, 3));
        assert!(rgb.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(rgb.get(9, 17, 1), x.get(1, 2, 1).clamp(0.0, 1.0));
        assert_eq!(client.decode(&x).unwrap(), rgb);
    }

    #[test]
    fn errors_keep_the_connection_open() {
        let server = EchoServer::spawn().unwrap();
        let mut stream = TcpStream::connect(server.addr()).unwrap();
        // garbage body, valid length prefix
        stream.write_all(&6u32.to_le_bytes()).unwrap();
        stream.write_all(&[2, 0, 0, 0, b'{', b'x']).unwrap();
        let reply = read_message(&mut stream).unwrap().unwrap();
        assert_eq!(reply.header["ok"], false);
        write_message(&mut stream, &Message::new("info")).unwrap();
        let reply = read_message(&mut stream).unwrap().unwrap();
        assert_eq!(reply.header["model"], "echo");

        let client = RemoteDenoiser::connect(&server.addr().to_string()).unwrap();
        let bad_t = Message::new("denoise")
            .with("t", 1000)
            .with_tensor(Tensor::new("latents", vec![4, 1, 1], vec![0.0; 4]).unwrap());
        assert!(matches!(client.call(&bad_t), Err(Error::Protocol(_))));
        assert!(matches!(client.call(&Message::new("train")), Err(Error::Protocol(_))));
        assert!(client.call(&Message::new("info")).is_ok());
    }

    #[test]
    fn echo_op_returns_the_message() {
        let server = EchoServer::spawn().unwrap();
        let client = RemoteDenoiser::connect(&server.addr().to_string()).unwrap();
        let msg = Message::new("echo")
            .with("note", "hello")
            .with_tensor(Tensor::new("a", vec![2, 1], vec![f32::MIN_POSITIVE, -0.0]).unwrap());
        let back = client.call(&msg).unwrap();
        assert_eq!(back, msg);
    }

    #[test]
    fn unreachable_bridge_is_a_transport_error() {
        let addr = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        assert!(matches!(
            RemoteDenoiser::connect(&addr.to_string()),
            Err(Error::Transport(_))
        ));
    }
}
