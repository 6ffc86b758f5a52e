//! Client side of the external SR plugin protocol.
//!
//! A plugin is a subprocess that reads length-prefixed binary frames on
//! stdin and answers on stdout. All integers are little-endian.
//!
//! ```text
//! handshake  "CSR1" u16 version=1 u16 reserved=0        (echoed by the server)
//! request    u32 len | u8 1 | u32 h | u32 w | u32 c | u32 scale | f32 × h·w·c
//! response   u32 len | u8 2 | u32 h | u32 w | u32 c | f32 × h·w·c
//! error      u32 len | u8 255 | u32 n | n bytes of UTF-8
//! shutdown   u32 len=1 | u8 0
//! ```
//!
//! `len` counts the bytes after the length field, message type included.
//! The codec is symmetric so a plugin written in Rust can reuse it.

use std::io::{self, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub const MAGIC: [u8; 4] = *b"CSR1";
pub const PROTOCOL_VERSION: u16 = 1;

pub const MSG_SHUTDOWN: u8 = 0;
pub const MSG_SR_APPLY: u8 = 1;
pub const MSG_SR_RESULT: u8 = 2;
pub const MSG_ERROR: u8 = 255;

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 1 << 30;

/// The 8 handshake bytes both sides exchange.
pub fn handshake_bytes() -> [u8; 8] {
    let mut b = [0u8; 8];
    b[..4].copy_from_slice(&MAGIC);
    b[4..6].copy_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    b
}

/// A tensor as it crosses the wire: 32-bit floats, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct WireTensor {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl WireTensor {
    pub fn from_image(img: &ImageTensor) -> Self {
        WireTensor {
            height: img.height() as u32,
            width: img.width() as u32,
            channels: img.channels() as u32,
            data: img.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn into_image(self) -> Result<ImageTensor> {
        ImageTensor::new(
            self.height as usize,
            self.width as usize,
            self.channels as usize,
            self.data.into_iter().map(f64::from).collect(),
        )
        .map_err(|e| Error::Protocol(format!("plugin returned an invalid tensor: {e}")))
    }

    fn expected_len(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Apply { scale: u32, tensor: WireTensor },
    Result(WireTensor),
    Error(String),
    Shutdown,
}

impl Frame {
    /// Serializes the frame including its length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        match self {
            Frame::Shutdown => body.push(MSG_SHUTDOWN),
            Frame::Apply { scale, tensor } => {
                body.push(MSG_SR_APPLY);
                put_dims(&mut body, tensor);
                body.extend_from_slice(&scale.to_le_bytes());
                put_payload(&mut body, &tensor.data);
            }
            Frame::Result(tensor) => {
                body.push(MSG_SR_RESULT);
                put_dims(&mut body, tensor);
                put_payload(&mut body, &tensor.data);
            }
            Frame::Error(msg) => {
                body.push(MSG_ERROR);
                body.extend_from_slice(&(msg.len() as u32).to_le_bytes());
                body.extend_from_slice(msg.as_bytes());
            }
        }
        let mut out = Vec::with_capacity(body.len() + 4);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Parses a frame body (everything after the length prefix).
    pub fn decode(body: &[u8]) -> Result<Frame> {
        let mut cur = Cursor { buf: body, pos: 0 };
        let kind = cur.u8()?;
        let frame = match kind {
            MSG_SHUTDOWN => Frame::Shutdown,
            MSG_SR_APPLY => {
                let (h, w, c) = (cur.u32()?, cur.u32()?, cur.u32()?);
                let scale = cur.u32()?;
                let tensor = cur.tensor(h, w, c)?;
                Frame::Apply { scale, tensor }
            }
            MSG_SR_RESULT => {
                let (h, w, c) = (cur.u32()?, cur.u32()?, cur.u32()?);
                Frame::Result(cur.tensor(h, w, c)?)
            }
            MSG_ERROR => {
                let n = cur.u32()? as usize;
                let bytes = cur.take(n)?;
                Frame::Error(String::from_utf8_lossy(bytes).into_owned())
            }
            other => return Err(Error::Protocol(format!("unknown message type {other}"))),
        };
        if cur.pos != body.len() {
            return Err(Error::Protocol(format!(
                "{} trailing bytes after frame",
                body.len() - cur.pos
            )));
        }
        Ok(frame)
    }
}

fn put_dims(buf: &mut Vec<u8>, t: &WireTensor) {
    for v in [t.height, t.width, t.channels] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_payload(buf: &mut Vec<u8>, data: &[f32]) {
    buf.reserve(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Protocol("frame truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self, h: u32, w: u32, c: u32) -> Result<WireTensor> {
        let n = (h as u128) * (w as u128) * (c as u128);
        let remaining = (self.buf.len() - self.pos) as u128;
        if n * 4 != remaining {
            return Err(Error::Protocol(format!(
                "payload of {remaining} bytes does not match {h}x{w}x{c} floats"
            )));
        }
        let data = self
            .take(n as usize * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(WireTensor {
            height: h,
            width: w,
            channels: c,
            data,
        })
    }
}

/// Reads one length-prefixed frame.
pub fn read_frame(r: &mut impl Read) -> Result<Frame> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(transport)?;
    let len = u32::from_le_bytes(len);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("invalid frame length {len}")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(transport)?;
    Frame::decode(&body)
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<()> {
    w.write_all(&frame.encode()).map_err(transport)?;
    w.flush().map_err(transport)
}

fn transport(e: io::Error) -> Error {
    Error::Plugin(format!("transport failure: {e}"))
}

/// A live connection to one plugin. Owned by a single caller at a time.
pub struct PluginSession {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    closed: bool,
}

impl std::fmt::Debug for PluginSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PluginSession")
            .field("pid", &self.child.as_ref().map(Child::id))
            .field("closed", &self.closed)
            .finish()
    }
}

impl PluginSession {
    /// Launches `command` through `sh -c` and performs the handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        if command.trim().is_empty() {
            return Err(Error::Validation("plugin command is empty".into()));
        }
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Plugin(format!("cannot launch {command:?}: {e}")))?;
        let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
        let stdout: ChildStdout = child.stdout.take().expect("piped stdout");
        let mut session = PluginSession {
            reader: Box::new(io::BufReader::new(stdout)),
            writer: Box::new(io::BufWriter::new(stdin)),
            child: Some(child),
            closed: false,
        };
        session
            .handshake()
            .map_err(|e| Error::Plugin(format!("handshake with {command:?} failed: {e}")))?;
        Ok(session)
    }

    /// Wraps an already-connected byte stream pair and performs the handshake.
    pub fn over(reader: impl Read + Send + 'static, writer: impl Write + Send + 'static) -> Result<Self> {
        let mut session = PluginSession {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child: None,
            closed: false,
        };
        session.handshake()?;
        Ok(session)
    }

    fn handshake(&mut self) -> Result<()> {
        let hello = handshake_bytes();
        self.writer.write_all(&hello).map_err(transport)?;
        self.writer.flush().map_err(transport)?;
        let mut reply = [0u8; 8];
        self.reader.read_exact(&mut reply).map_err(transport)?;
        if reply != hello {
            return Err(Error::Protocol(format!(
                "handshake mismatch: sent {hello:02x?}, got {reply:02x?}"
            )));
        }
        Ok(())
    }

    /// Sends one SR request and validates the reply's dimensions.
    pub fn apply(&mut self, img: &ImageTensor, scale: usize) -> Result<ImageTensor> {
        if self.closed {
            return Err(Error::Plugin("session already shut down".into()));
        }
        let request = Frame::Apply {
            scale: scale as u32,
            tensor: WireTensor::from_image(img),
        };
        write_frame(&mut self.writer, &request)?;
        match read_frame(&mut self.reader)? {
            Frame::Result(t) => {
                let want = (
                    (img.height() * scale) as u32,
                    (img.width() * scale) as u32,
                    img.channels() as u32,
                );
                if (t.height, t.width, t.channels) != want || t.data.len() != t.expected_len() {
                    return Err(Error::Protocol(format!(
                        "expected {}x{}x{} result, got {}x{}x{}",
                        want.0, want.1, want.2, t.height, t.width, t.channels
                    )));
                }
                t.into_image()
            }
            Frame::Error(msg) => Err(Error::Plugin(format!("plugin reported: {msg}"))),
            other => Err(Error::Protocol(format!(
                "unexpected reply frame {:?}",
                frame_name(&other)
            ))),
        }
    }

    /// Sends the shutdown frame and reaps the child process.
    pub fn shutdown(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let sent = write_frame(&mut self.writer, &Frame::Shutdown);
        if let Some(mut child) = self.child.take() {
            // Closing stdin lets a well-behaved plugin exit even if it missed
            // the frame.
            self.writer = Box::new(io::sink());
            let status = child
                .wait()
                .map_err(|e| Error::Plugin(format!("waiting for plugin: {e}")))?;
            if !status.success() {
                return Err(Error::Plugin(format!("plugin exited with {status}")));
            }
        }
        sent
    }
}

impl Drop for PluginSession {
    fn drop(&mut self) {
        if let Err(e) = self.shutdown() {
            log::debug!("plugin shutdown: {e}");
        }
    }
}

fn frame_name(f: &Frame) -> &'static str {
    match f {
        Frame::Apply { .. } => "SR_APPLY",
        Frame::Result(_) => "SR_RESULT",
        Frame::Error(_) => "ERROR",
        Frame::Shutdown => "SHUTDOWN",
    }
}
