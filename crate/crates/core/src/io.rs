//! File formats: raw field files and 8-bit PGM images.
//!
//! A field file is the magic `CEITFLD1`, the node counts along x and y as
//! `u64`, the step `h` and the origin `(x, y)` as `f64`, then the values row
//! by row (x fastest). Everything is little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::discrete_ops::ScalarField;
use crate::error::{Error, Result};
use crate::forward::sample_field;
use crate::geometry::GridSpec;

const MAGIC: &[u8; 8] = b"CEITFLD1";

pub fn write_field<W: Write>(mut w: W, f: &ScalarField<f64>) -> Result<()> {
    let s = f.grid.side() as u64;
    w.write_all(MAGIC)?;
    w.write_all(&s.to_le_bytes())?;
    w.write_all(&s.to_le_bytes())?;
    for v in [f.grid.h, f.grid.origin.0, f.grid.origin.1] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<ScalarField<f64>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head != MAGIC {
        return Err(Error::Format("not a field file (bad magic)".into()));
    }
    let mut word = || -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(b)
    };
    let nx = u64::from_le_bytes(word()?);
    let ny = u64::from_le_bytes(word()?);
    let h = f64::from_le_bytes(word()?);
    let ox = f64::from_le_bytes(word()?);
    let oy = f64::from_le_bytes(word()?);
    if nx != ny || nx < 3 || nx > 1 << 16 {
        return Err(Error::Format(format!("unsupported field dimensions {nx} x {ny}")));
    }
    if !(h > 0.0 && h.is_finite() && ox.is_finite() && oy.is_finite()) {
        return Err(Error::Format("bad grid header".into()));
    }
    let grid = GridSpec { n: nx as usize - 2, h, origin: (ox, oy) };
    let mut bytes = vec![0u8; grid.len() * 8];
    r.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::from_values(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_field(path: &Path, f: &ScalarField<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(48 + 8 * f.values.len());
    write_field(&mut buf, f)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<ScalarField<f64>> {
    read_field(fs::read(path)?.as_slice())
}

/// 8-bit grayscale image, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Gray code of a conductivity value: `[1, 2]` maps linearly onto `[0, 255]`.
pub fn sigma_to_code(s: f64) -> u8 {
    ((s - 1.0) * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn code_to_sigma(c: u8) -> f64 {
    1.0 + f64::from(c) / 255.0
}

impl Gray {
    /// One pixel per node; the top row is the largest `y`.
    pub fn from_sigma(f: &ScalarField<f64>) -> Self {
        let s = f.grid.side();
        let mut pixels = Vec::with_capacity(s * s);
        for j in (0..s).rev() {
            for i in 0..s {
                pixels.push(sigma_to_code(f.at(i, j)));
            }
        }
        Self { width: s, height: s, pixels }
    }

    /// Inverse of [`Gray::from_sigma`] for square images.
    pub fn to_sigma(&self, grid: GridSpec<f64>) -> Result<ScalarField<f64>> {
        let s = grid.side();
        if self.width != s || self.height != s {
            return Err(Error::Shape(format!("{}x{} image for a {s}x{s} grid", self.width, self.height)));
        }
        let mut values = Vec::with_capacity(s * s);
        for j in 0..s {
            for i in 0..s {
                values.push(code_to_sigma(self.pixels[(s - 1 - j) * s + i]));
            }
        }
        ScalarField::from_values(grid, values)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Format("only binary PGM (P5) is supported".into()));
        }
        let num = |t: String| t.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM number {t:?}")));
        let width = num(token()?)?;
        let height = num(token()?)?;
        let maxval = num(token()?)?;
        if maxval != 255 {
            return Err(Error::Format(format!("PGM maxval {maxval} is not 255")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let end = start + width * height;
        if end > bytes.len() {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        Ok(Self { width, height, pixels: bytes[start..end].to_vec() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Side-by-side panels of conductivity fields, each resampled bilinearly to
/// `size` x `size` pixels over its own square, separated by white columns.
pub fn render_panels(fields: &[&ScalarField<f64>], size: usize, gap: usize) -> Result<Gray> {
    if fields.is_empty() || size < 2 {
        return Err(Error::Invalid("render needs at least one field and size >= 2".into()));
    }
    let width = fields.len() * size + (fields.len() - 1) * gap;
    let mut pixels = vec![255u8; width * size];
    for (k, f) in fields.iter().enumerate() {
        let w = f.grid.h * (f.grid.n + 1) as f64;
        let x0 = k * (size + gap);
        for row in 0..size {
            let y = f.grid.origin.1 + w * (size - 1 - row) as f64 / (size - 1) as f64;
            for col in 0..size {
                let x = f.grid.origin.0 + w * col as f64 / (size - 1) as f64;
                pixels[row * width + x0 + col] = sigma_to_code(sample_field(f, x, y));
            }
        }
    }
    Ok(Gray { width, height: size, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec<f64> {
        GridSpec { n: 6, h: 0.125, origin: (1.0, 1.0) }
    }

    #[test]
    fn field_file_round_trip_is_bit_exact() {
        let f = ScalarField::from_fn(grid(), |x, y| (x * 7.3).sin() + y.exp() / 3.0);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), 8 + 16 + 24 + 8 * 64);
        assert_eq!(&buf[..8], b"CEITFLD1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(buf[24..32].try_into().unwrap()), 0.125);
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        buf[0] = b'X';
        assert!(matches!(read_field(buf.as_slice()), Err(Error::Format(_))));
        assert!(read_field(&b"CEITFLD1"[..]).is_err());
    }

    #[test]
    fn gray_codes_map_unit_interval() {
        assert_eq!(sigma_to_code(1.0), 0);
        assert_eq!(sigma_to_code(2.0), 255);
        assert_eq!(sigma_to_code(0.5), 0);
        assert_eq!(sigma_to_code(3.0), 255);
        assert_eq!(sigma_to_code(1.5), 128);
        for c in 0..=255u8 {
            assert_eq!(sigma_to_code(code_to_sigma(c)), c);
        }
    }

    #[test]
    fn pgm_round_trip_and_orientation() {
        let f = ScalarField::from_fn(grid(), |_, y| if y > 1.6 { 2.0 } else { 1.0 });
        let img = Gray::from_sigma(&f);
        assert_eq!(img.pixels[0], 255);
        assert_eq!(img.pixels[img.pixels.len() - 1], 0);
        let bytes = img.encode();
        assert!(bytes.starts_with(b"P5\n8 8\n255\n"));
        let back = Gray::decode(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.to_sigma(grid()).unwrap(), f);
        let commented = [b"P5 # c\n8 8\n255\n".as_slice(), &img.pixels].concat();
        assert_eq!(Gray::decode(&commented).unwrap(), img);
        assert!(Gray::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Gray::decode(b"P5\n4 4\n255\n\0").is_err());
    }

    #[test]
    fn panels_lay_out_side_by_side() {
        let a = ScalarField::constant(grid(), 1.0);
        let b = ScalarField::constant(grid(), 2.0);
        let img = render_panels(&[&a, &b], 10, 2).unwrap();
        assert_eq!((img.width, img.height), (22, 10));
        assert!(img.pixels[..10].iter().all(|&p| p == 0));
        assert_eq!(img.pixels[10], 255);
        assert!(img.pixels[12..22].iter().all(|&p| p == 255));
    }
}
