//! Binary Netpbm (P5 graymap / P6 pixmap) with maxval 255.
//!
//! Writers emit the canonical header `P5\n<w> <h>\n255\n` (or `P6`) followed by
//! the raw row-major payload, so files are byte-exact for a given frame.

use std::path::Path;

use crate::error::{Error, Result};
use crate::render::Frame;

pub fn encode(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", frame.width, frame.height);
    let mut out = Vec::with_capacity(header.len() + frame.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&frame.pixels);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(format!("malformed header: missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("malformed header: bad {what}")))
    }
}

/// Decode a P5 or P6 image. `expect_channels` restricts the accepted magic.
pub fn decode(bytes: &[u8], expect_channels: Option<usize>) -> Result<Frame> {
    if bytes.len() < 2 {
        return Err(Error::format("truncated header"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::format(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    if let Some(expected) = expect_channels {
        if expected != channels {
            let want = if expected == 1 { "P5" } else { "P6" };
            return Err(Error::format(format!(
                "expected {want}, found {}",
                String::from_utf8_lossy(&bytes[..2])
            )));
        }
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("zero image dimension"));
    }
    // exactly one whitespace byte separates the header from the payload
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format("malformed header: missing payload separator"));
    }
    cur.pos += 1;
    let need = width * height * channels;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(Error::format(format!(
            "truncated payload: {} of {need} bytes",
            payload.len()
        )));
    }
    Frame::new(width, height, channels, payload[..need].to_vec())
}

pub fn write_file(path: &Path, frame: &Frame) -> Result<()> {
    std::fs::write(path, encode(frame)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path, expect_channels: Option<usize>) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, expect_channels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_layout() {
        let f = Frame::gray(2, 2, vec![0, 64, 128, 255]).unwrap();
        let bytes = encode(&f);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 64, 128, 255]);
        assert_eq!(bytes.len(), 15);
        assert_eq!(decode(&bytes, Some(1)).unwrap(), f);
    }

    #[test]
    fn rejects_wrong_magic() {
        let rgb = Frame::new(1, 1, 3, vec![1, 2, 3]).unwrap();
        let err = decode(&encode(&rgb), Some(1)).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = b"P5\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[0; 10]);
        assert!(matches!(decode(&bytes, None), Err(Error::Format(_))));
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x07\x09".to_vec();
        let f = decode(&bytes, Some(1)).unwrap();
        assert_eq!(f.pixels, vec![7, 9]);
    }
}
