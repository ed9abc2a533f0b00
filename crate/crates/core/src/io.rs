//! Bit-exact binary file formats and the PGM preview writer.
//!
//! All formats are little-endian with a 4-byte magic:
//!
//! | format | magic  | header            | payload                          |
//! |--------|--------|-------------------|----------------------------------|
//! | image  | `CIM1` | u32 H, u32 W      | H*W x (f64 re, f64 im) row-major |
//! | maps   | `CMP1` | u32 C, u32 H, u32 W | coil-major complex f64         |
//! | k-space| `KSP1` | u32 C, u32 H, u32 W | coil-major complex f64         |
//! | mask   | `MSK1` | u32 H, u32 W      | H*W bytes in {0, 1}              |
//!
//! Readers validate magic, payload length, and value invariants; every
//! violation surfaces as a format error.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::KSpaceData;
use crate::numerics::ComplexImage;
use crate::phantom::CoilMaps;
use crate::sampling::{MaskKind, SamplingMask};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?
        .read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn check_magic(bytes: &[u8], magic: &[u8; 4], what: &str) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Format(format!("{what}: file shorter than its magic")));
    }
    if &bytes[0..4] != magic {
        return Err(Error::Format(format!(
            "{what}: bad magic {:?}, expected {:?}",
            &bytes[0..4],
            magic
        )));
    }
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

fn complex_payload(bytes: &[u8], count: usize, what: &str) -> Result<Vec<Complex64>> {
    if bytes.len() != count * 16 {
        return Err(Error::Format(format!(
            "{what}: payload is {} bytes, expected {}",
            bytes.len(),
            count * 16
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        data.push(Complex64::new(re, im));
    }
    Ok(data)
}

fn write_complex(out: &mut impl Write, data: &[Complex64]) -> Result<()> {
    for z in data {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_image(img: &ComplexImage, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(b"CIM1")?;
    out.write_all(&(img.height() as u32).to_le_bytes())?;
    out.write_all(&(img.width() as u32).to_le_bytes())?;
    write_complex(&mut out, img.data())?;
    out.flush()?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<ComplexImage> {
    let bytes = read_file(path)?;
    check_magic(&bytes, b"CIM1", "image")?;
    let h = read_u32(&bytes, 4, "image")? as usize;
    let w = read_u32(&bytes, 8, "image")? as usize;
    let data = complex_payload(&bytes[12..], h * w, "image")?;
    ComplexImage::new(h, w, data).map_err(|e| Error::Format(format!("image: {e}")))
}

pub fn write_coil_maps(maps: &CoilMaps, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(b"CMP1")?;
    out.write_all(&(maps.coils() as u32).to_le_bytes())?;
    out.write_all(&(maps.height() as u32).to_le_bytes())?;
    out.write_all(&(maps.width() as u32).to_le_bytes())?;
    write_complex(&mut out, maps.data())?;
    out.flush()?;
    Ok(())
}

pub fn read_coil_maps(path: &Path) -> Result<CoilMaps> {
    let bytes = read_file(path)?;
    check_magic(&bytes, b"CMP1", "coil maps")?;
    let c = read_u32(&bytes, 4, "coil maps")? as usize;
    let h = read_u32(&bytes, 8, "coil maps")? as usize;
    let w = read_u32(&bytes, 12, "coil maps")? as usize;
    let data = complex_payload(&bytes[16..], c * h * w, "coil maps")?;
    CoilMaps::new(c, h, w, data).map_err(|e| Error::Format(format!("coil maps: {e}")))
}

pub fn write_kspace(y: &KSpaceData, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(b"KSP1")?;
    out.write_all(&(y.coils() as u32).to_le_bytes())?;
    out.write_all(&(y.height() as u32).to_le_bytes())?;
    out.write_all(&(y.width() as u32).to_le_bytes())?;
    write_complex(&mut out, y.data())?;
    out.flush()?;
    Ok(())
}

pub fn read_kspace(path: &Path) -> Result<KSpaceData> {
    let bytes = read_file(path)?;
    check_magic(&bytes, b"KSP1", "k-space")?;
    let c = read_u32(&bytes, 4, "k-space")? as usize;
    let h = read_u32(&bytes, 8, "k-space")? as usize;
    let w = read_u32(&bytes, 12, "k-space")? as usize;
    let data = complex_payload(&bytes[16..], c * h * w, "k-space")?;
    KSpaceData::new(c, h, w, data).map_err(|e| Error::Format(format!("k-space: {e}")))
}

pub fn write_mask(mask: &SamplingMask, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(b"MSK1")?;
    out.write_all(&(mask.height() as u32).to_le_bytes())?;
    out.write_all(&(mask.width() as u32).to_le_bytes())?;
    out.write_all(mask.data())?;
    out.flush()?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    let bytes = read_file(path)?;
    check_magic(&bytes, b"MSK1", "mask")?;
    let h = read_u32(&bytes, 4, "mask")? as usize;
    let w = read_u32(&bytes, 8, "mask")? as usize;
    let payload = &bytes[12..];
    if payload.len() != h * w {
        return Err(Error::Format(format!(
            "mask: payload is {} bytes, expected {}",
            payload.len(),
            h * w
        )));
    }
    SamplingMask::new(h, w, payload.to_vec(), MaskKind::Unknown)
        .map_err(|e| Error::Format(format!("mask: {e}")))
}

/// 8-bit binary PGM (P5) of the min-max normalized magnitude.
pub fn write_pgm(img: &ComplexImage, path: &Path) -> Result<()> {
    let mags: Vec<f64> = img.data().iter().map(|z| z.norm()).collect();
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let pixels: Vec<u8> = mags
        .iter()
        .map(|&m| (((m - lo) / range) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    out.write_all(&pixels)?;
    out.flush()?;
    Ok(())
}
