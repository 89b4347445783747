//! Portable float map (PFM) and 16-bit PGM/PPM image files.
//!
//! PFM stores 32-bit floats, little-endian, rows bottom to top. `Pf` is one
//! channel, `PF` is three interleaved channels. PGM (`P5`) / PPM (`P6`) with
//! `maxval = 65535` store big-endian 16-bit samples, rows top to bottom.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

fn bad(detail: impl Into<String>) -> Error {
    Error::Format { what: "image file", detail: detail.into() }
}

fn check_channels(channels: &[Array2<f64>]) -> Result<(usize, usize)> {
    let first = channels.first().ok_or_else(|| bad("no channels to write"))?;
    if !(channels.len() == 1 || channels.len() == 3) {
        return Err(bad(format!("expected 1 or 3 channels, got {}", channels.len())));
    }
    if channels.iter().any(|c| c.dim() != first.dim()) {
        return Err(bad("channel shapes differ"));
    }
    Ok(first.dim())
}

pub fn write_pfm(path: &Path, channels: &[Array2<f64>]) -> Result<()> {
    let (h, w) = check_channels(channels)?;
    let tag = if channels.len() == 1 { "Pf" } else { "PF" };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "{tag}\n{w} {h}\n-1.0\n")?;
    for r in (0..h).rev() {
        for c in 0..w {
            for ch in channels {
                out.write_all(&(ch[[r, c]] as f32).to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a single-channel PFM into one array.
pub fn read_pfm_gray(path: &Path) -> Result<Array2<f64>> {
    let mut chans = read_pfm(path)?;
    if chans.len() != 1 {
        return Err(bad(format!("{}: expected a single-channel PFM", path.display())));
    }
    Ok(chans.remove(0))
}

pub fn read_pfm(path: &Path) -> Result<Vec<Array2<f64>>> {
    let mut rd = BufReader::new(std::fs::File::open(path)?);
    let tag = read_token(&mut rd)?;
    let nch = match tag.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(bad(format!("not a PFM file (magic {other:?})"))),
    };
    let w: usize = parse_token(&mut rd)?;
    let h: usize = parse_token(&mut rd)?;
    let scale: f64 = parse_token(&mut rd)?;
    let little = scale < 0.0;
    let mut buf = vec![0u8; w * h * nch * 4];
    rd.read_exact(&mut buf).map_err(|_| bad("truncated PFM data"))?;
    let mut chans = vec![Array2::zeros((h, w)); nch];
    let mut it = buf.chunks_exact(4);
    for r in (0..h).rev() {
        for c in 0..w {
            for ch in chans.iter_mut() {
                let b: [u8; 4] = it.next().unwrap().try_into().unwrap();
                let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                ch[[r, c]] = v as f64;
            }
        }
    }
    Ok(chans)
}

/// Writes `round(value * scale)` clamped to `[0, 65535]`.
pub fn write_pnm16(path: &Path, channels: &[Array2<f64>], scale: f64) -> Result<()> {
    let (h, w) = check_channels(channels)?;
    let tag = if channels.len() == 1 { "P5" } else { "P6" };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "{tag}\n{w} {h}\n65535\n")?;
    for r in 0..h {
        for c in 0..w {
            for ch in channels {
                let v = (ch[[r, c]] * scale).round().clamp(0.0, 65535.0) as u16;
                out.write_all(&v.to_be_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a 16-bit PGM/PPM and divides samples by `scale`.
pub fn read_pnm16(path: &Path, scale: f64) -> Result<Vec<Array2<f64>>> {
    let mut rd = BufReader::new(std::fs::File::open(path)?);
    let tag = read_token(&mut rd)?;
    let nch = match tag.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(format!("not a binary PGM/PPM (magic {other:?})"))),
    };
    let w: usize = parse_token(&mut rd)?;
    let h: usize = parse_token(&mut rd)?;
    let maxval: u32 = parse_token(&mut rd)?;
    if maxval < 256 {
        return Err(bad("only 16-bit PGM/PPM files are supported"));
    }
    let mut buf = vec![0u8; w * h * nch * 2];
    rd.read_exact(&mut buf).map_err(|_| bad("truncated PGM data"))?;
    let mut chans = vec![Array2::zeros((h, w)); nch];
    let mut it = buf.chunks_exact(2);
    for r in 0..h {
        for c in 0..w {
            for ch in chans.iter_mut() {
                let b = it.next().unwrap();
                ch[[r, c]] = u16::from_be_bytes([b[0], b[1]]) as f64 / scale;
            }
        }
    }
    Ok(chans)
}

/// Header tokens are whitespace separated and end with exactly one whitespace byte.
fn read_token<R: BufRead>(rd: &mut R) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if rd.read(&mut byte)? == 0 {
            return Err(bad("unexpected end of header"));
        }
        if byte[0] == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            rd.read_until(b'\n', &mut skip)?;
            continue;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| bad("non-ASCII header"))
}

fn parse_token<R: BufRead, T: std::str::FromStr>(rd: &mut R) -> Result<T> {
    let tok = read_token(rd)?;
    tok.parse().map_err(|_| bad(format!("bad header field {tok:?}")))
}
