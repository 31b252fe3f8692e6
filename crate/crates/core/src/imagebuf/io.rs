//! Readers and writers for binary PGM/PPM, PFM and plain CSV grids.
//!
//! PGM/PPM values are mapped to `[0, 1]` by the header's maxval. PFM keeps
//! 32-bit floats; the sign of the scale field selects the byte order and
//! rows are stored bottom-to-top.

use std::fs;
use std::path::Path;

use super::Grid;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { offset, message: message.into() })
    }

    fn skip_space_and_comments(&mut self) {
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

    fn token(&mut self, what: &str) -> Result<(&'a str, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err(start, format!("expected {what}, found end of file"));
        }
        match std::str::from_utf8(&self.bytes[start..self.pos]) {
            Ok(s) => Ok((s, start)),
            Err(_) => self.err(start, format!("expected {what}, found non-ASCII bytes")),
        }
    }

    fn usize_token(&mut self, what: &str) -> Result<usize> {
        let (tok, at) = self.token(what)?;
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => self.err(at, format!("invalid {what} '{tok}'")),
        }
    }

    /// Consumes the single whitespace byte that separates the header from the raster.
    fn end_of_header(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(self.pos)
            }
            _ => self.err(self.pos, "expected a single whitespace byte before the raster"),
        }
    }

    fn raster(&self, start: usize, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < start + len {
            return self.err(
                self.bytes.len(),
                format!("truncated raster: expected {len} bytes, found {}", self.bytes.len() - start),
            );
        }
        Ok(&self.bytes[start..start + len])
    }
}

fn decode_pnm(bytes: &[u8], magic: &str, channels: usize) -> Result<Grid> {
    let mut h = Header::new(bytes);
    let (m, at) = h.token("magic number")?;
    if m != magic {
        return h.err(at, format!("expected magic '{magic}', found '{m}'"));
    }
    let width = h.usize_token("width")?;
    let height = h.usize_token("height")?;
    let (tok, at) = h.token("maxval")?;
    let maxval: u32 = match tok.parse() {
        Ok(v) if (1..=65535).contains(&v) => v,
        _ => return h.err(at, format!("invalid maxval '{tok}'")),
    };
    if channels == 3 && maxval > 255 {
        return h.err(at, "only 8-bit PPM is supported");
    }
    let start = h.end_of_header()?;
    let wide = maxval > 255;
    let n = width * height * channels;
    let raster = h.raster(start, if wide { 2 * n } else { n })?;
    let scale = 1.0 / maxval as f64;
    let data = if wide {
        raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * scale).collect()
    } else {
        raster.iter().map(|&b| b as f64 * scale).collect()
    };
    Grid::new(height, width, channels, data)
}

fn encode_pnm(grid: &Grid, magic: &str, depth: BitDepth) -> Vec<u8> {
    let max = match depth {
        BitDepth::Eight => 255u32,
        BitDepth::Sixteen => 65535,
    };
    let mut out = format!("{magic}\n{} {}\n{max}\n", grid.width(), grid.height()).into_bytes();
    for &v in grid.data() {
        let q = (v.clamp(0.0, 1.0) * max as f64).round() as u32;
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

/// Binary greyscale (`P5`), 8- or 16-bit.
pub fn decode_pgm(bytes: &[u8]) -> Result<Grid> {
    decode_pnm(bytes, "P5", 1)
}

pub fn encode_pgm(grid: &Grid, depth: BitDepth) -> Result<Vec<u8>> {
    if grid.channels() != 1 {
        return Err(invalid("PGM holds a single channel"));
    }
    Ok(encode_pnm(grid, "P5", depth))
}

/// Binary 8-bit colour (`P6`).
pub fn decode_ppm(bytes: &[u8]) -> Result<Grid> {
    decode_pnm(bytes, "P6", 3)
}

pub fn encode_ppm(grid: &Grid) -> Result<Vec<u8>> {
    if grid.channels() != 3 {
        return Err(invalid("PPM holds three channels"));
    }
    Ok(encode_pnm(grid, "P6", BitDepth::Eight))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Grid> {
    let mut h = Header::new(bytes);
    let (m, at) = h.token("magic number")?;
    let channels = match m {
        "Pf" => 1,
        "PF" => 3,
        _ => return h.err(at, format!("expected 'Pf' or 'PF', found '{m}'")),
    };
    let width = h.usize_token("width")?;
    let height = h.usize_token("height")?;
    let (tok, at) = h.token("scale")?;
    let scale: f64 = match tok.parse() {
        Ok(v) if v != 0.0 && f64::is_finite(v) => v,
        _ => return h.err(at, format!("invalid scale '{tok}'")),
    };
    let little = scale < 0.0;
    let start = h.end_of_header()?;
    let row_len = width * channels;
    let raster = h.raster(start, 4 * row_len * height)?;
    let mut data = vec![0.0; row_len * height];
    for (file_row, chunk) in raster.chunks_exact(4 * row_len).enumerate() {
        let row = height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            data[row * row_len + i] = v as f64;
        }
    }
    Grid::new(height, width, channels, data)
}

/// Little-endian PFM (scale `-1`). Values are stored as `f32`.
pub fn encode_pfm(grid: &Grid) -> Result<Vec<u8>> {
    let magic = match grid.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(invalid(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n-1\n", grid.width(), grid.height()).into_bytes();
    let row_len = grid.width() * grid.channels();
    for row in (0..grid.height()).rev() {
        for &v in &grid.data()[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// One line per row, comma-separated. Single-channel grids only.
pub fn grid_to_csv(grid: &Grid) -> Result<String> {
    if grid.channels() != 1 {
        return Err(invalid("CSV grids are single-channel"));
    }
    let mut s = String::new();
    for row in grid.data().chunks_exact(grid.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn grid_from_csv(text: &str) -> Result<Grid> {
    let mut data = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut n = 0;
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| Error::ParseLine {
                line: i + 1,
                message: format!("not a number: '{tok}'"),
            })?;
            data.push(v);
            n += 1;
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(Error::ParseLine {
                    line: i + 1,
                    message: format!("expected {w} values, found {n}"),
                })
            }
            _ => {}
        }
        height += 1;
    }
    let width = width.ok_or_else(|| invalid("empty CSV"))?;
    Grid::new(height, width, 1, data)
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Reads a grid, choosing the decoder from the file extension.
pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pgm" => decode_pgm(&fs::read(path)?),
        "ppm" => decode_ppm(&fs::read(path)?),
        "pfm" => decode_pfm(&fs::read(path)?),
        "csv" => grid_from_csv(&fs::read_to_string(path)?),
        e => Err(invalid(format!("unknown grid format '{e}'"))),
    }
}

/// Writes a grid, choosing the encoder from the file extension. PGM output is 16-bit.
pub fn write_grid(path: impl AsRef<Path>, grid: &Grid) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_str() {
        "pgm" => encode_pgm(grid, BitDepth::Sixteen)?,
        "ppm" => encode_ppm(grid)?,
        "pfm" => encode_pfm(grid)?,
        "csv" => grid_to_csv(grid)?.into_bytes(),
        e => return Err(invalid(format!("unknown grid format '{e}'"))),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &Grid, depth: BitDepth) -> Result<()> {
    fs::write(path, encode_pgm(grid, depth)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pfm_two_by_two_round_trip() {
        let g = Grid::new(2, 2, 1, vec![0.25, -1.5, f32::from_bits(0x0000_0201) as f64, 7.0]).unwrap();
        let bytes = encode_pfm(&g).unwrap();
        let back = decode_pfm(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(encode_pfm(&back).unwrap(), bytes);
    }

    #[test]
    fn pfm_big_endian_and_row_order() {
        let mut bytes = b"Pf\n2 2\n1.0\n".to_vec();
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let g = decode_pfm(&bytes).unwrap();
        assert_eq!(g.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn ppm_magic_is_enforced() {
        let mut pgm = encode_pgm(&Grid::zeros(2, 2, 1), BitDepth::Eight).unwrap();
        match decode_ppm(&pgm) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
        pgm[1] = b'6';
        assert!(decode_ppm(&pgm).is_err());
    }

    #[test]
    fn truncated_files_report_offsets() {
        let g = Grid::filled(3, 3, 3, 0.5);
        let bytes = encode_ppm(&g).unwrap();
        let cut = &bytes[..bytes.len() - 4];
        match decode_ppm(cut) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("unexpected {other:?}"),
        }
        match decode_pgm(b"P5\n4 ") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
        match decode_pgm(b"P5\n4 x\n255\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # a comment\n# another\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let g = decode_pgm(&bytes).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn sixteen_bit_pgm() {
        let g = Grid::new(1, 3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let back = decode_pgm(&encode_pgm(&g, BitDepth::Sixteen).unwrap()).unwrap();
        assert!(back.max_abs_diff(&g) <= 0.5 / 65535.0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let g = Grid::new(2, 3, 1, vec![0.1, -2.0, 1e-300, 4.5, 5.0, std::f64::consts::PI]).unwrap();
        assert_eq!(grid_from_csv(&grid_to_csv(&g).unwrap()).unwrap(), g);
        assert!(matches!(grid_from_csv("1,2\n3\n"), Err(Error::ParseLine { line: 2, .. })));
        assert!(matches!(grid_from_csv("1,a\n"), Err(Error::ParseLine { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn pfm_round_trip_exact(bits in prop::collection::vec(any::<u32>(), 12)) {
            // Arbitrary finite f32 bit patterns, denormals included.
            let vals: Vec<f64> = bits.iter().map(|b| {
                let f = f32::from_bits(*b);
                if f.is_finite() { f as f64 } else { f32::from_bits(b & 0x007f_ffff) as f64 }
            }).collect();
            let g = Grid::new(2, 2, 3, vals).unwrap();
            let bytes = encode_pfm(&g).unwrap();
            let back = decode_pfm(&bytes).unwrap();
            for (a, b) in g.data().iter().zip(back.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(encode_pfm(&back).unwrap(), bytes);
        }

        #[test]
        fn pnm_quantisation_within_half_step(vals in prop::collection::vec(0.0f64..=1.0, 12)) {
            let g = Grid::new(2, 2, 3, vals.clone()).unwrap();
            let back = decode_ppm(&encode_ppm(&g).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&g) <= 0.5 / 255.0 + 1e-12);
            let g1 = Grid::new(3, 4, 1, vals).unwrap();
            let back = decode_pgm(&encode_pgm(&g1, BitDepth::Eight).unwrap()).unwrap();
            prop_assert!(back.max_abs_diff(&g1) <= 0.5 / 255.0 + 1e-12);
        }
    }
}
