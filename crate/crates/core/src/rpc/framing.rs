//! LSP base-protocol framing: `Content-Length: <n>\r\n\r\n<body>`.

use std::io::Read;

use super::RpcError;

const CONTENT_LENGTH: &str = "content-length";

/// Prefix `body` with its `Content-Length` header.
pub fn frame_message(body: &str) -> Vec<u8> {
    let mut out = format!("Content-Length: {}\r\n\r\n", body.len()).into_bytes();
    out.extend_from_slice(body.as_bytes());
    out
}

/// Incremental frame decoder.
///
/// Bytes are pushed in arbitrary chunks; complete bodies come out in order.
/// Partial trailing data stays buffered until the rest of the frame arrives.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    poisoned: bool,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, chunk: &[u8]) {
        self.buf.extend_from_slice(chunk);
    }

    /// Number of buffered bytes not yet returned as a body.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Pop the next complete body, `Ok(None)` if more bytes are needed.
    pub fn next_body(&mut self) -> Result<Option<String>, RpcError> {
        if self.poisoned {
            return Err(RpcError::MalformedHeader("decoder poisoned by an earlier error".into()));
        }
        let Some(header_end) = find_header_end(&self.buf) else {
            if self.buf.len() > 64 * 1024 {
                self.poisoned = true;
                return Err(RpcError::MalformedHeader("header block exceeds 64 KiB".into()));
            }
            return Ok(None);
        };
        let length = match parse_header(&self.buf[..header_end]) {
            Ok(length) => length,
            Err(e) => {
                self.poisoned = true;
                return Err(e);
            }
        };
        let body_start = header_end + 4;
        if self.buf.len() < body_start + length {
            return Ok(None);
        }
        let body = self.buf[body_start..body_start + length].to_vec();
        self.buf.drain(..body_start + length);
        match String::from_utf8(body) {
            Ok(body) => Ok(Some(body)),
            Err(_) => {
                self.poisoned = true;
                Err(RpcError::MalformedHeader("frame body is not UTF-8".into()))
            }
        }
    }

    /// Call at end of input. Leftover bytes mean the stream was cut mid-frame.
    pub fn finish(&self) -> Result<(), RpcError> {
        if self.buf.iter().all(|b| b.is_ascii_whitespace()) {
            Ok(())
        } else {
            Err(RpcError::PrematureEof { buffered: self.buf.len() })
        }
    }
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn parse_header(block: &[u8]) -> Result<usize, RpcError> {
    let text = std::str::from_utf8(block)
        .map_err(|_| RpcError::MalformedHeader("header is not ASCII".into()))?;
    let mut length = None;
    for line in text.split("\r\n") {
        let Some((name, value)) = line.split_once(':') else {
            return Err(RpcError::MalformedHeader(format!("header line without colon: {line:?}")));
        };
        // Content-Type and any other header are accepted and ignored.
        if name.trim().eq_ignore_ascii_case(CONTENT_LENGTH) {
            if length.is_some() {
                return Err(RpcError::MalformedHeader("duplicate Content-Length".into()));
            }
            let n: usize = value.trim().parse().map_err(|_| {
                RpcError::MalformedHeader(format!("non-numeric Content-Length {:?}", value.trim()))
            })?;
            length = Some(n);
        }
    }
    length.ok_or_else(|| RpcError::MalformedHeader("missing Content-Length".into()))
}

/// Decode a complete byte stream into its frame bodies.
pub fn parse_frames(bytes: &[u8]) -> Result<Vec<String>, RpcError> {
    let mut decoder = FrameDecoder::new();
    decoder.push(bytes);
    let mut out = Vec::new();
    while let Some(body) = decoder.next_body()? {
        out.push(body);
    }
    decoder.finish()?;
    Ok(out)
}

/// Blocking reader of frames from any byte source.
pub struct FrameReader<R> {
    inner: R,
    decoder: FrameDecoder,
    chunk: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, decoder: FrameDecoder::new(), chunk: vec![0; 8192] }
    }

    /// Next body, `Ok(None)` on clean end of stream.
    pub fn read_body(&mut self) -> Result<Option<String>, RpcError> {
        loop {
            if let Some(body) = self.decoder.next_body()? {
                return Ok(Some(body));
            }
            let n = self.inner.read(&mut self.chunk)?;
            if n == 0 {
                self.decoder.finish()?;
                return Ok(None);
            }
            self.decoder.push(&self.chunk[..n]);
        }
    }
}
