//! Binary PGM (P5) images, 8 or 16 bit. 16-bit samples are big-endian per
//! the format. Writers take planes in [0, 1] unless an explicit scale is
//! given; `write_pgm16_scaled` records the scale in a sidecar text file so
//! the original value range can be recovered.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::Plane;

pub fn write_pgm8(path: &Path, plane: &Plane) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", plane.width(), plane.height())?;
    let mut buf = Vec::with_capacity(plane.width() * plane.height());
    for &v in plane.data() {
        buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_pgm16(path: &Path, plane: &Plane) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n65535\n", plane.width(), plane.height())?;
    let mut buf = Vec::with_capacity(plane.width() * plane.height() * 2);
    for &v in plane.data() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Scales the plane so its max maps to 65535, writes the 16-bit image, and
/// records `scale` (plane units per count) next to it in `<path>.scale.txt`.
pub fn write_pgm16_scaled(path: &Path, plane: &Plane) -> Result<f64> {
    let (_, hi) = plane.min_max();
    let scale = if hi > 0.0 { hi / 65535.0 } else { 1.0 / 65535.0 };
    let norm = plane.map(|v| (v / (scale * 65535.0)).clamp(0.0, 1.0));
    write_pgm16(path, &norm)?;
    let sidecar = path.with_extension("scale.txt");
    let mut f = BufWriter::new(File::create(sidecar)?);
    writeln!(f, "{scale:.17e}")?;
    Ok(scale)
}

pub fn read_pgm(path: &Path) -> Result<Plane> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

fn parse_pgm(bytes: &[u8]) -> Result<Plane> {
    let mut pos = 0;
    let mut fields = Vec::new();
    // header: magic, width, height, maxval; '#' comments allowed
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse("truncated PGM header"));
        }
        fields.push(&bytes[start..pos]);
    }
    pos += 1; // single whitespace after maxval
    if fields[0] != b"P5" {
        return Err(Error::parse("not a binary PGM (P5)"));
    }
    let width: usize = parse_ascii(fields[1])?;
    let height: usize = parse_ascii(fields[2])?;
    let maxval: u32 = parse_ascii(fields[3])?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(format!("unsupported PGM maxval {maxval}")));
    }
    let n = width * height;
    let data = &bytes[pos..];
    let mut out = Vec::with_capacity(n);
    if maxval < 256 {
        if data.len() < n {
            return Err(Error::parse("truncated PGM pixel data"));
        }
        for &b in &data[..n] {
            out.push(b as f64 / maxval as f64);
        }
    } else {
        if data.len() < 2 * n {
            return Err(Error::parse("truncated PGM pixel data"));
        }
        for c in data[..2 * n].chunks_exact(2) {
            let v = u16::from_be_bytes([c[0], c[1]]);
            out.push(v as f64 / maxval as f64);
        }
    }
    Ok(Plane::from_vec(width, height, out))
}

fn parse_ascii<T: std::str::FromStr>(b: &[u8]) -> Result<T> {
    std::str::from_utf8(b)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse("bad PGM header field"))
}
