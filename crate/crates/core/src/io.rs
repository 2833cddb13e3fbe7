//! Plain-format image writers (binary PGM/PPM) and small text helpers.

use std::io::Write;
use std::path::Path;

use crate::envs::Observation;
use crate::error::{Error, Result};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit binary PGM (P5), row-major from the top row.
pub fn write_pgm(path: &Path, height: usize, width: usize, values: &[f64]) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::DimensionMismatch("pgm buffer size".into()));
    }
    let mut out = Vec::with_capacity(32 + values.len());
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.extend(values.iter().map(|&v| quantize(v)));
    std::fs::write(path, out)?;
    Ok(())
}

/// 8-bit binary PPM (P6) from channel-major planes (r, g, b).
pub fn write_ppm(path: &Path, height: usize, width: usize, planes: &[f64]) -> Result<()> {
    if planes.len() != 3 * height * width {
        return Err(Error::DimensionMismatch("ppm buffer size".into()));
    }
    let plane = height * width;
    let mut out = Vec::with_capacity(32 + 3 * plane);
    write!(out, "P6\n{width} {height}\n255\n")?;
    for i in 0..plane {
        out.push(quantize(planes[i]));
        out.push(quantize(planes[plane + i]));
        out.push(quantize(planes[2 * plane + i]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write an observation as PGM (1 channel) or PPM (3 channels); returns the
/// path actually written, with the extension fixed up.
pub fn write_observation(path_stem: &Path, obs: &Observation) -> Result<std::path::PathBuf> {
    match obs.channels {
        1 => {
            let path = path_stem.with_extension("pgm");
            write_pgm(&path, obs.height, obs.width, &obs.pixels)?;
            Ok(path)
        }
        3 => {
            let path = path_stem.with_extension("ppm");
            write_ppm(&path, obs.height, obs.width, &obs.pixels)?;
            Ok(path)
        }
        n => Err(Error::InvalidArgument(format!(
            "cannot write {n}-channel observation"
        ))),
    }
}

/// Full-precision decimal formatting: shortest string that round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
