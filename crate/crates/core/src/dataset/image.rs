//! Grayscale exports: binary PGM (P5, maxval 255) and PNG. Solid material is
//! drawn black.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::density::DensityField;
use crate::{Error, Result};

fn to_gray(v: f64) -> u8 {
    (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8
}

fn check(width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height || width == 0 || height == 0 {
        return Err(Error::Dimension {
            what: "image pixels",
            expected: width * height,
            actual: pixels.len(),
        });
    }
    Ok(())
}

fn write_pgm_bytes(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    check(width, height, pixels)?;
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write!(w, "P5\n{width} {height}\n255\n")
        .and_then(|_| w.write_all(pixels))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Write a `[0, 1]` image as PGM.
pub fn write_pgm(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    values: &[f64],
) -> Result<()> {
    let px: Vec<u8> = values.iter().map(|&v| to_gray(v)).collect();
    write_pgm_bytes(path.as_ref(), width, height, &px)
}

/// Read a P5 PGM with maxval 255; returns `(width, height, pixels)`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated(format!(
                "PGM header of {}",
                path.display()
            )));
        }
        fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "P5 with maxval 255",
        });
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Schema(format!("PGM dimension {s:?}")))
    };
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let px = buf
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::Truncated(format!("PGM pixels of {}", path.display())))?;
    Ok((w, h, px.to_vec()))
}

/// Write a density field as an 8-bit grayscale PNG.
pub fn write_density_png(path: impl AsRef<Path>, density: &DensityField) -> Result<()> {
    let path = path.as_ref();
    let px: Vec<u8> = density.values.iter().map(|&v| to_gray(v)).collect();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(f), density.nelx as u32, density.nely as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc
        .write_header()
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_image_data(&px)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

/// Ground truth, prediction and signed difference side by side, separated by
/// one-pixel white gutters. The difference panel is mid-gray where they agree,
/// darker where the prediction has extra material.
pub fn write_triptych(
    path: impl AsRef<Path>,
    truth: &DensityField,
    pred: &DensityField,
) -> Result<()> {
    truth.check_grid(&pred.grid())?;
    let (w, h) = (truth.nelx, truth.nely);
    let width = 3 * w + 2;
    let mut px = vec![255u8; width * h];
    for y in 0..h {
        for x in 0..w {
            let (t, p) = (truth.at(x, y), pred.at(x, y));
            let row = y * width;
            px[row + x] = to_gray(t);
            px[row + w + 1 + x] = to_gray(p);
            px[row + 2 * w + 2 + x] = to_gray(0.5 + 0.5 * (p - t));
        }
    }
    write_pgm_bytes(path.as_ref(), width, h, &px)
}
