//! Binary 16-bit PGM and raw float artifacts.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use rf4d_core::{RangeAzimuthScan, Result};

/// Writes `values` (row-major, `rows x cols`) mapped linearly from
/// `[lo, hi]` onto `0..=65535`. A flat range maps to mid-gray.
pub fn write_pgm16(path: &Path, values: &[f64], rows: usize, cols: usize, lo: f64, hi: f64) -> Result<()> {
    assert_eq!(values.len(), rows * cols, "image size");
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{cols} {rows}\n65535\n")?;
    let span = hi - lo;
    for &v in values {
        let u = if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.5 };
        let q = (u * 65535.0).round() as u16;
        out.write_all(&q.to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pgm16(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = std::fs::read(path)?;
    let bad = || rf4d_core::Error::Invariant(format!("{} is not a 16-bit binary PGM", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    if fields[0] != "P5" || num(&fields[3])? != 65535 {
        return Err(bad());
    }
    let (cols, rows) = (num(&fields[1])?, num(&fields[2])?);
    let data = bytes.get(pos..).ok_or_else(bad)?;
    if data.len() != rows * cols * 2 {
        return Err(bad());
    }
    Ok((rows, cols, data.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()))
}

pub fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn write_f32(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Resamples a polar scan onto a sensor-centered square grid, `2 * n_delta`
/// pixels on a side, +x right and +y up. Pixels outside the retained range
/// band take `fill`.
pub fn polar_to_cartesian(scan: &RangeAzimuthScan, fill: f64) -> (Vec<f64>, usize) {
    let g = &scan.geometry;
    let side = 2 * g.n_delta;
    let pixel = g.max_range() / g.n_delta as f64;
    let half = side as f64 / 2.0;
    let mut out = Vec::with_capacity(side * side);
    for row in 0..side {
        let y = (half - row as f64 - 0.5) * pixel;
        for col in 0..side {
            let x = (col as f64 + 0.5 - half) * pixel;
            let v = match g.bin_covering(x.hypot(y)) {
                Some(bin) => {
                    let beam = (y.atan2(x).rem_euclid(TAU) / TAU * g.n_theta as f64).round() as usize % g.n_theta;
                    scan.get(beam, bin)
                }
                None => fill,
            };
            out.push(v);
        }
    }
    (out, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rf4d_core::PolarGeometry;

    #[test]
    fn pgm_round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm16(&p, &[0.0, 0.5, 1.0, 2.0, -1.0, 0.25], 2, 3, 0.0, 1.0).unwrap();
        let (rows, cols, px) = read_pgm16(&p).unwrap();
        assert_eq!((rows, cols), (2, 3));
        assert_eq!(px, vec![0, 32768, 65535, 65535, 0, 16384]);
        write_pgm16(&p, &[3.0; 4], 2, 2, 3.0, 3.0).unwrap();
        assert!(read_pgm16(&p).unwrap().2.iter().all(|&v| v == 32768));
    }

    #[test]
    fn cartesian_places_beam_zero_on_positive_x() {
        let g = PolarGeometry::new(8, 4, 1.0, 0).unwrap();
        let mut scan = RangeAzimuthScan::filled(g, 0.0, 0.0);
        scan.set(0, 2, 1.0);
        scan.set(2, 1, 2.0);
        let (img, side) = polar_to_cartesian(&scan, -1.0);
        assert_eq!(side, 8);
        // pixel centered at (2.5, 0.5): range 2.55 -> bin 2, azimuth ~0.2 rad -> beam 0
        assert_eq!(img[3 * side + 6], 1.0);
        // (0.5, 1.5): range 1.58 -> bin 1, azimuth 1.25 rad -> beam 2
        assert_eq!(img[2 * side + 4], 2.0);
        // corner lies beyond max range
        assert_eq!(img[0], -1.0);
    }
}
