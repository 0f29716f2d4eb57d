//! Binary patch-features protocol spoken with the external feature server.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! request:  "BACF" | version u8 = 1 | kinds u8 (bit0 conv, bit1 fc7) | height u32 | width u32
//!           | RGB8 pixels, row-major (3*height*width bytes)
//! response: "BACR" | status u8 (0 ok, 1 error)
//!           | [conv requested] h u32, w u32, c u32, h*w*c f32 (row-major, channel-minor)
//!           | [fc7 requested]  dim u32, dim f32
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

pub const REQUEST_MAGIC: &[u8; 4] = b"BACF";
pub const RESPONSE_MAGIC: &[u8; 4] = b"BACR";
pub const VERSION: u8 = 1;
pub const KIND_CONV: u8 = 0b01;
pub const KIND_FC7: u8 = 0b10;

/// Upper bound on any single payload, in elements.
const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Io(#[from] io::Error),
    #[error("stream ended mid-frame")]
    Truncated,
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("invalid kinds bitmask {0:#04b}")]
    BadKinds(u8),
    #[error("server reported an error")]
    ServerError,
    #[error("unknown status byte {0}")]
    BadStatus(u8),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), TransportError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TransportError::Truncated,
        _ => TransportError::Io(e),
    })
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8, TransportError> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, TransportError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>, TransportError> {
    if n > MAX_ELEMENTS {
        return Err(TransportError::Dimension(format!("{n} values exceeds limit")));
    }
    let mut bytes = vec![0u8; n * 4];
    read_exact(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Which payloads a request asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kinds {
    pub conv: bool,
    pub fc7: bool,
}

impl Kinds {
    pub const BOTH: Kinds = Kinds {
        conv: true,
        fc7: true,
    };
    pub const CONV: Kinds = Kinds {
        conv: true,
        fc7: false,
    };
    pub const FC7: Kinds = Kinds {
        conv: false,
        fc7: true,
    };

    pub fn bits(self) -> u8 {
        ((self.conv as u8) * KIND_CONV) | ((self.fc7 as u8) * KIND_FC7)
    }

    pub fn from_bits(bits: u8) -> Result<Self, TransportError> {
        if bits & !(KIND_CONV | KIND_FC7) != 0 || bits == 0 {
            return Err(TransportError::BadKinds(bits));
        }
        Ok(Self {
            conv: bits & KIND_CONV != 0,
            fc7: bits & KIND_FC7 != 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRequest {
    pub kinds: Kinds,
    pub height: u32,
    pub width: u32,
    /// RGB8, row-major.
    pub pixels: Vec<u8>,
}

/// Conv payload in wire layout (row-major, channel-minor).
#[derive(Debug, Clone, PartialEq)]
pub struct WireTensor {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureResponse {
    Ok {
        conv: Option<WireTensor>,
        fc7: Option<Vec<f32>>,
    },
    Error,
}

impl FeatureRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.pixels.len());
        out.extend_from_slice(REQUEST_MAGIC);
        out.push(VERSION);
        out.push(self.kinds.bits());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, TransportError> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != REQUEST_MAGIC {
            return Err(TransportError::BadMagic(magic));
        }
        let version = read_u8(r)?;
        if version != VERSION {
            return Err(TransportError::BadVersion(version));
        }
        let kinds = Kinds::from_bits(read_u8(r)?)?;
        let height = read_u32(r)?;
        let width = read_u32(r)?;
        let n = 3 * height as usize * width as usize;
        if n == 0 || n > MAX_ELEMENTS {
            return Err(TransportError::Dimension(format!(
                "patch {width}x{height} out of range"
            )));
        }
        let mut pixels = vec![0u8; n];
        read_exact(r, &mut pixels)?;
        Ok(Self {
            kinds,
            height,
            width,
            pixels,
        })
    }
}

impl FeatureResponse {
    /// Serializes the response. Payloads are written in protocol order, conv first.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(RESPONSE_MAGIC);
        match self {
            FeatureResponse::Error => out.push(1),
            FeatureResponse::Ok { conv, fc7 } => {
                out.push(0);
                if let Some(t) = conv {
                    out.extend_from_slice(&t.height.to_le_bytes());
                    out.extend_from_slice(&t.width.to_le_bytes());
                    out.extend_from_slice(&t.channels.to_le_bytes());
                    for v in &t.values {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                if let Some(v) = fc7 {
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    /// Parses a response to a request for `kinds`. Nothing is returned unless the
    /// whole frame was read.
    pub fn read_from<R: Read>(r: &mut R, kinds: Kinds) -> Result<Self, TransportError> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != RESPONSE_MAGIC {
            return Err(TransportError::BadMagic(magic));
        }
        match read_u8(r)? {
            0 => {}
            1 => return Ok(FeatureResponse::Error),
            s => return Err(TransportError::BadStatus(s)),
        }
        let conv = if kinds.conv {
            let height = read_u32(r)?;
            let width = read_u32(r)?;
            let channels = read_u32(r)?;
            let n = (height as usize)
                .checked_mul(width as usize)
                .and_then(|v| v.checked_mul(channels as usize))
                .unwrap_or(usize::MAX);
            if n == 0 {
                return Err(TransportError::Dimension(format!(
                    "empty conv tensor {height}x{width}x{channels}"
                )));
            }
            Some(WireTensor {
                height,
                width,
                channels,
                values: read_f32s(r, n)?,
            })
        } else {
            None
        };
        let fc7 = if kinds.fc7 {
            let dim = read_u32(r)? as usize;
            if dim == 0 {
                return Err(TransportError::Dimension("empty fc7 vector".into()));
            }
            Some(read_f32s(r, dim)?)
        } else {
            None
        };
        Ok(FeatureResponse::Ok { conv, fc7 })
    }
}

/// Sends one request and waits for its response on a bidirectional stream.
pub fn round_trip<S: Read + Write>(
    stream: &mut S,
    request: &FeatureRequest,
) -> Result<FeatureResponse, TransportError> {
    stream.write_all(&request.encode())?;
    stream.flush()?;
    FeatureResponse::read_from(stream, request.kinds)
}
