//! Portable graymap (P2 ASCII / P5 binary) reading and 16-bit P5 writing.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major, top row first.
    pub pixels: Vec<u16>,
}

impl Graymap {
    /// gray / maxval for pixel (col, row).
    pub fn amplitude(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col] as f64 / self.maxval as f64
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut p = Header { bytes, pos: 0 };
        let magic = p.token()?;
        let binary = match magic.as_slice() {
            b"P2" => false,
            b"P5" => true,
            _ => return Err(Error::Graymap("expected P2 or P5 magic".into())),
        };
        let width = p.number()?;
        let height = p.number()?;
        let maxval = p.number()?;
        if width == 0 || height == 0 {
            return Err(Error::Graymap("zero image dimension".into()));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Graymap(format!("maxval {maxval} outside 1..=65535")));
        }
        let count = width
            .checked_mul(height)
            .ok_or_else(|| Error::Graymap("image too large".into()))?;
        let mut pixels = Vec::with_capacity(count);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            let start = p.pos + 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let raster = bytes
                .get(start..start + need)
                .ok_or_else(|| Error::Graymap("truncated raster".into()))?;
            if wide {
                pixels.extend(raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])));
            } else {
                pixels.extend(raster.iter().map(|&b| b as u16));
            }
        } else {
            for _ in 0..count {
                pixels.push(p.number()? as u16);
            }
        }
        if pixels.iter().any(|&v| v as usize > maxval) {
            return Err(Error::Graymap("gray value above maxval".into()));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            pixels,
        })
    }

    /// Binary 16-bit P5.
    pub fn to_p5(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for v in &self.pixels {
                out.extend_from_slice(&v.to_be_bytes());
            }
        } else {
            out.extend(self.pixels.iter().map(|&v| v as u8));
        }
        out
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<Vec<u8>> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&c) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::Graymap("unexpected end of header".into())),
            }
        }
        let start = self.pos;
        while let Some(c) = self.bytes.get(self.pos) {
            if c.is_ascii_whitespace() || *c == b'#' {
                break;
            }
            self.pos += 1;
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        std::str::from_utf8(&t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Graymap(format!("bad number {:?}", String::from_utf8_lossy(&t))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_with_comments() {
        let g = Graymap::parse(b"P2\n# c\n3 2 # more\n4\n0 1 2\n3 4 0\n").unwrap();
        assert_eq!((g.width, g.height, g.maxval), (3, 2, 4));
        assert_eq!(g.pixels, vec![0, 1, 2, 3, 4, 0]);
        assert_eq!(g.amplitude(1, 1), 1.0);
    }

    #[test]
    fn binary_eight_bit() {
        let mut b = b"P5 2 2 255\n".to_vec();
        b.extend([0u8, 255, 10, 20]);
        let g = Graymap::parse(&b).unwrap();
        assert_eq!(g.pixels, vec![0, 255, 10, 20]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(Graymap::parse(b"P3 1 1 255 0").is_err());
        assert!(Graymap::parse(b"P2 1 1 0 0").is_err());
        assert!(Graymap::parse(b"P2 1 1 70000 0").is_err());
        assert!(Graymap::parse(b"P2 2 1 3 1").is_err());
        assert!(Graymap::parse(b"P2 1 1 3 9").is_err());
        assert!(Graymap::parse(b"P5 2 2 255\n\x00").is_err());
        assert!(Graymap::parse(b"P2 x 1 3 1").is_err());
    }

    proptest! {
        #[test]
        fn p5_round_trip(w in 1usize..9, h in 1usize..9, maxval in 1u16..=65535, seed in any::<u64>()) {
            let pixels: Vec<u16> = (0..w * h)
                .map(|i| ((seed.wrapping_mul(i as u64 + 1) >> 7) % (maxval as u64 + 1)) as u16)
                .collect();
            let g = Graymap { width: w, height: h, maxval, pixels };
            prop_assert_eq!(Graymap::parse(&g.to_p5()).unwrap(), g);
        }
    }
}
