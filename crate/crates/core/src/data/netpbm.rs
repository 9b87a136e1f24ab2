//! Binary NetPBM: P5 (grayscale) and P6 (RGB), maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl PnmImage {
    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::format(format!("NetPBM supports 1 or 3 channels, not {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::format(format!(
                "{} bytes do not fill a {width}x{height}x{channels} raster",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Header { bytes, pos: 0 };
        let magic = cursor.token()?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(Error::format(format!("unsupported NetPBM magic `{other}`"))),
        };
        let width = cursor.number()?;
        let height = cursor.number()?;
        let maxval = cursor.number()?;
        if maxval != 255 {
            return Err(Error::format(format!("unsupported maxval {maxval}; only 255 is accepted")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = cursor.pos + 1;
        let len = width * height * channels;
        if bytes.len() < start + len {
            return Err(Error::format(format!(
                "raster truncated: need {len} bytes, have {}",
                bytes.len().saturating_sub(start)
            )));
        }
        Self::new(width, height, channels, bytes[start..start + len].to_vec())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::decode(&bytes).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    /// File extension matching the channel count.
    pub fn extension(&self) -> &'static str {
        if self.channels == 1 {
            "pgm"
        } else {
            "ppm"
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("truncated NetPBM header"));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::format(format!("invalid NetPBM header field `{tok}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comment_decodes() {
        let mut bytes = b"P5\n# made by hand\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255]);
        let img = PnmImage::decode(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels), (3, 1, 1));
        assert_eq!(img.pixels, vec![0, 128, 255]);
    }

    #[test]
    fn rgb_round_trip() {
        let img = PnmImage::new(2, 2, 3, (0..12).collect()).unwrap();
        assert_eq!(PnmImage::decode(&img.encode()).unwrap(), img);
        assert_eq!(img.extension(), "ppm");
    }

    #[test]
    fn truncated_raster_is_rejected() {
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(PnmImage::decode(&bytes).is_err());
    }

    #[test]
    fn sixteen_bit_maxval_is_rejected() {
        assert!(PnmImage::decode(b"P5 1 1 65535\n\0\0").is_err());
        assert!(PnmImage::decode(b"P2 1 1 255\n0").is_err());
    }
}
