//! Binary greymap (`P5`) reading and writing.
//!
//! Writes are either 16-bit (maxval 65535, big-endian samples) or 8-bit
//! (maxval 255). The reader accepts any maxval in `1..=65535`, `#` comments
//! in the header, and reports malformed input with the byte offset at which
//! parsing failed.

use crate::error::{Error, Result};

/// A decoded greymap. Samples are stored as read, not rescaled to `maxval`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Greymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Greymap {
    pub fn encode(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval);
        let wide = self.maxval > 255;
        let mut out = Vec::with_capacity(header.len() + self.samples.len() * if wide { 2 } else { 1 });
        out.extend_from_slice(header.as_bytes());
        for &s in &self.samples {
            if wide {
                out.extend_from_slice(&s.to_be_bytes());
            } else {
                out.push(s.min(255) as u8);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], source_name: &str) -> Result<Self> {
        let err = |offset: usize, message: &str| Error::ParseOffset {
            source_name: source_name.to_string(),
            offset,
            message: message.to_string(),
        };
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(err(0, "missing P5 magic number"));
        }
        let mut pos = 2;
        let mut fields = [0usize; 3];
        for (i, field) in fields.iter_mut().enumerate() {
            // whitespace and comments
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while let Some(&b) = bytes.get(pos) {
                            pos += 1;
                            if b == b'\n' {
                                break;
                            }
                        }
                    }
                    Some(_) => break,
                    None => return Err(err(pos, "truncated header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                return Err(err(pos, "expected a decimal header field"));
            }
            let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
            *field = text
                .parse()
                .map_err(|_| err(start, "header field does not fit in usize"))?;
            if i < 2 && *field == 0 {
                return Err(err(start, "image dimensions must be positive"));
            }
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 65535 {
            return Err(err(pos, "maxval must be in 1..=65535"));
        }
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(err(pos, "expected single whitespace after maxval")),
        }
        let bps = if maxval > 255 { 2 } else { 1 };
        let count = width
            .checked_mul(height)
            .ok_or_else(|| err(pos, "image dimensions overflow"))?;
        let need = count * bps;
        let data = &bytes[pos..];
        if data.len() < need {
            return Err(err(bytes.len(), "truncated pixel data"));
        }
        if data.len() > need {
            return Err(err(pos + need, "trailing bytes after pixel data"));
        }
        let samples: Vec<u16> = if bps == 2 {
            data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            data.iter().map(|&b| u16::from(b)).collect()
        };
        if let Some(i) = samples.iter().position(|&s| usize::from(s) > maxval) {
            return Err(err(pos + i * bps, "sample exceeds maxval"));
        }
        Ok(Greymap {
            width,
            height,
            maxval: maxval as u16,
            samples,
        })
    }
}
