//! Loss-backend wire protocol, version 1.
//!
//! A frame is a little-endian `u32` byte count followed by that many bytes:
//! one JSON object (the header) immediately followed by a payload of
//! little-endian `f32` values. The header is self-delimiting, so the payload
//! is whatever follows it. Every header carries `"v": 1`.
//!
//! Requests and responses:
//!
//! | request header | request payload | response header | response payload |
//! |---|---|---|---|
//! | `{"op":"loss_grad","w","h","c":3}` | rendered image, HWC | `{"loss"}` | dL/d(rendered), HWC |
//! | `{"op":"embed","w","h","c":3}` | image, HWC | `{"dim"}` | embedding |
//! | `{"op":"embed_text","text"}` | none | `{"dim"}` | embedding |
//!
//! The loss service holds its own target (it is configured with the target
//! image when started); the client's target only fixes the expected shape.
//!
//! A failed request is answered with `{"error":{"code","message"}}` and no
//! payload. Responses may name the model in a `"model"` field.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::optimize::image_loss::ImageLoss;
use crate::raster::Image;

pub const PROTOCOL_VERSION: u64 = 1;
/// Frames above this size are rejected rather than allocated.
pub const MAX_FRAME_BYTES: usize = 1 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub header: Map<String, Value>,
    pub payload: Vec<f32>,
}

impl Frame {
    /// A frame whose header is `fields` plus the protocol version.
    pub fn new(fields: Value, payload: Vec<f32>) -> Frame {
        let mut header = match fields {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        header.insert("v".into(), json!(PROTOCOL_VERSION));
        Frame { header, payload }
    }

    pub fn error(code: &str, message: &str) -> Frame {
        Frame::new(json!({ "error": { "code": code, "message": message } }), Vec::new())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let head = serde_json::to_vec(&self.header)?;
        let len = head.len() + 4 * self.payload.len();
        if len > MAX_FRAME_BYTES {
            return Err(Error::contract(format!("frame of {len} bytes exceeds the limit")));
        }
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_le_bytes());
        out.extend_from_slice(&head);
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parse the body of a frame (the bytes after the length prefix).
    pub fn decode(body: &[u8]) -> std::result::Result<Frame, String> {
        let mut stream = serde_json::Deserializer::from_slice(body).into_iter::<Value>();
        let header = match stream.next() {
            Some(Ok(Value::Object(m))) => m,
            Some(Ok(_)) => return Err("header is not a JSON object".into()),
            Some(Err(e)) => return Err(format!("bad header: {e}")),
            None => return Err("empty frame".into()),
        };
        match header.get("v").and_then(Value::as_u64) {
            Some(PROTOCOL_VERSION) => {}
            other => return Err(format!("unsupported protocol version {other:?}")),
        }
        let rest = &body[stream.byte_offset()..];
        if !rest.len().is_multiple_of(4) {
            return Err(format!("payload of {} bytes is not a whole number of f32", rest.len()));
        }
        let payload = rest.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Ok(Frame { header, payload })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.encode()?)?;
        w.flush()?;
        Ok(())
    }

    /// Read one frame. `Ok(None)` on a clean end of stream before a frame.
    pub fn read_from(r: &mut impl Read) -> Result<Option<std::result::Result<Frame, String>>> {
        let mut len = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            match r.read(&mut len[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(std::io::Error::from(std::io::ErrorKind::UnexpectedEof).into()),
                Ok(k) => got += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let len = u32::from_le_bytes(len) as usize;
        if len > MAX_FRAME_BYTES {
            return Err(Error::contract(format!("frame of {len} bytes exceeds the limit")));
        }
        let mut body = vec![0u8; len];
        r.read_exact(&mut body)?;
        Ok(Some(Frame::decode(&body)))
    }

    pub fn error_message(&self) -> Option<String> {
        let e = self.header.get("error")?;
        let code = e.get("code").and_then(Value::as_str).unwrap_or("unknown");
        let msg = e.get("message").and_then(Value::as_str).unwrap_or("");
        Some(format!("{code}: {msg}"))
    }
}

/// Answer frames from `reader` with `handler` until the stream ends. Frames
/// that fail to decode get an error response; the stream stays in sync
/// because the length prefix was read.
pub fn serve(reader: &mut impl Read, writer: &mut impl Write, mut handler: impl FnMut(&Frame) -> Frame) -> Result<()> {
    while let Some(frame) = Frame::read_from(reader)? {
        let resp = match frame {
            Ok(req) => handler(&req),
            Err(msg) => Frame::error("bad_frame", &msg),
        };
        resp.write_to(writer)?;
    }
    Ok(())
}

/// Where a backend listens: `tcp://host:port`, `unix:///path/to.sock`, or
/// `cmd:program arg ...` to spawn a process and talk over its stdio.
#[derive(Clone, Debug, PartialEq)]
pub enum Endpoint {
    Tcp(String),
    Unix(String),
    Command(Vec<String>),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Endpoint> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(path) = s.strip_prefix("unix://") {
            Ok(Endpoint::Unix(path.to_string()))
        } else if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err(Error::contract("empty backend command"));
            }
            Ok(Endpoint::Command(argv))
        } else {
            Err(Error::contract(format!("backend endpoint `{s}` must start with tcp://, unix:// or cmd:")))
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(a) => write!(f, "tcp://{a}"),
            Endpoint::Unix(p) => write!(f, "unix://{p}"),
            Endpoint::Command(argv) => write!(f, "cmd:{}", argv.join(" ")),
        }
    }
}

/// One connection to a loss backend. Requests are sent one at a time.
pub struct BackendClient {
    name: String,
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    /// Model identifier reported by the last response, if any.
    pub model: Option<String>,
}

impl std::fmt::Debug for BackendClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendClient").field("name", &self.name).finish()
    }
}

impl BackendClient {
    pub fn connect(endpoint: &Endpoint) -> Result<BackendClient> {
        let name = endpoint.to_string();
        let fail =
            |e: std::io::Error| Error::Backend { backend: name.clone(), message: format!("cannot connect: {e}") };
        let (reader, writer, child): (Box<dyn Read + Send>, Box<dyn Write + Send>, _) = match endpoint {
            Endpoint::Tcp(addr) => {
                let s = TcpStream::connect(addr).map_err(fail)?;
                let r = s.try_clone().map_err(fail)?;
                (Box::new(BufReader::new(r)), Box::new(BufWriter::new(s)), None)
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let s = std::os::unix::net::UnixStream::connect(path).map_err(fail)?;
                let r = s.try_clone().map_err(fail)?;
                (Box::new(BufReader::new(r)), Box::new(BufWriter::new(s)), None)
            }
            #[cfg(not(unix))]
            Endpoint::Unix(_) => {
                return Err(Error::Backend {
                    backend: name,
                    message: "unix sockets are not available on this platform".into(),
                })
            }
            Endpoint::Command(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(fail)?;
                let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
                let stdout: ChildStdout = child.stdout.take().expect("piped stdout");
                (Box::new(BufReader::new(stdout)), Box::new(BufWriter::new(stdin)), Some(child))
            }
        };
        Ok(BackendClient { name, reader, writer, child, model: None })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn backend_error(&self, message: impl Into<String>) -> Error {
        Error::Backend { backend: self.name.clone(), message: message.into() }
    }

    /// Send a request and wait for its response; error responses and
    /// malformed frames become [`Error::Backend`].
    pub fn call(&mut self, request: &Frame) -> Result<Frame> {
        let io = |e: Error, this: &Self| match e {
            Error::Io(e) => this.backend_error(format!("connection failed: {e}")),
            other => this.backend_error(other.to_string()),
        };
        request.write_to(&mut self.writer).map_err(|e| io(e, self))?;
        let frame = match Frame::read_from(&mut self.reader).map_err(|e| io(e, self))? {
            None => return Err(self.backend_error("connection closed before a response")),
            Some(Err(msg)) => return Err(self.backend_error(format!("protocol violation: {msg}"))),
            Some(Ok(f)) => f,
        };
        if let Some(msg) = frame.error_message() {
            return Err(self.backend_error(msg));
        }
        if let Some(m) = frame.header.get("model").and_then(Value::as_str) {
            self.model = Some(m.to_string());
        }
        Ok(frame)
    }

    pub fn embed_image(&mut self, img: &Image) -> Result<Vec<f32>> {
        let img = img.to_rgb(crate::svg::Rgb::WHITE);
        let req = Frame::new(
            json!({"op": "embed", "w": img.width, "h": img.height, "c": 3}),
            img.data.iter().map(|&v| v as f32).collect(),
        );
        let resp = self.call(&req)?;
        self.embedding(resp)
    }

    pub fn embed_text(&mut self, text: &str) -> Result<Vec<f32>> {
        let resp = self.call(&Frame::new(json!({"op": "embed_text", "text": text}), Vec::new()))?;
        self.embedding(resp)
    }

    fn embedding(&self, resp: Frame) -> Result<Vec<f32>> {
        let dim = resp.header.get("dim").and_then(Value::as_u64);
        if dim != Some(resp.payload.len() as u64) || resp.payload.is_empty() {
            return Err(self.backend_error(format!(
                "embedding response declares dim {dim:?} but carries {} values",
                resp.payload.len()
            )));
        }
        Ok(resp.payload)
    }
}

impl ImageLoss for BackendClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn loss_grad(&mut self, rendered: &Image, target: &Image) -> Result<(f64, Image)> {
        if !rendered.same_shape(target) || rendered.channels != 3 {
            return Err(Error::contract("backend loss needs two RGB images of equal size"));
        }
        let (w, h) = (rendered.width, rendered.height);
        let payload = rendered.data.iter().map(|&v| v as f32).collect();
        let resp = self.call(&Frame::new(json!({"op": "loss_grad", "w": w, "h": h, "c": 3}), payload))?;
        let loss = resp
            .header
            .get("loss")
            .and_then(Value::as_f64)
            .ok_or_else(|| self.backend_error("loss_grad response has no numeric `loss`"))?;
        if resp.payload.len() != w * h * 3 {
            return Err(self.backend_error(format!(
                "gradient payload has {} values, expected {}",
                resp.payload.len(),
                w * h * 3
            )));
        }
        let grad = Image::from_data(w, h, 3, resp.payload.iter().map(|&v| v as f64).collect())?;
        Ok((loss, grad))
    }
}

impl Drop for BackendClient {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // closing stdin asks a stdio server to exit
            self.writer = Box::new(std::io::sink());
            let _ = child.wait();
        }
    }
}
