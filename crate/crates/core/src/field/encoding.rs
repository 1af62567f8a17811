use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::radar::Point3;

/// `[sin(2^k π t), cos(2^k π t)]` for `k = 0..K`, interleaved per octave.
pub fn time_features(t: f64, frequencies: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0,1]")));
    }
    let mut out = Vec::with_capacity(2 * frequencies);
    for k in 0..frequencies {
        let (s, c) = ((1u64 << k) as f64 * PI * t).sin_cos();
        out.push(s);
        out.push(c);
    }
    Ok(out)
}

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Real spherical-harmonic basis up to `degree` (at most 3), giving
/// `(degree + 1)²` values. Directions within 1e-6 of unit length are
/// renormalized; anything further off is rejected.
pub fn sh_encode(d: Point3, degree: usize) -> Result<Vec<f64>> {
    if degree > 3 {
        return Err(Error::Domain(format!("SH degree {degree} exceeds 3")));
    }
    let n = crate::radar::norm3(d);
    if !((n - 1.0).abs() <= 1e-6) {
        return Err(Error::Domain(format!("direction norm {n} is not unit")));
    }
    let (x, y, z) = (d[0] / n, d[1] / n, d[2] / n);
    let mut out = Vec::with_capacity((degree + 1) * (degree + 1));
    out.push(C0);
    if degree >= 1 {
        out.extend([-C1 * y, C1 * z, -C1 * x]);
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out.extend([
            C2[0] * x * y,
            C2[1] * y * z,
            C2[2] * (2.0 * zz - xx - yy),
            C2[3] * x * z,
            C2[4] * (xx - yy),
        ]);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        out.extend([
            C3[0] * y * (3.0 * xx - yy),
            C3[1] * x * y * z,
            C3[2] * y * (4.0 * zz - xx - yy),
            C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            C3[4] * x * (4.0 * zz - xx - yy),
            C3[5] * z * (xx - yy),
            C3[6] * x * (xx - 3.0 * yy),
        ]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_feature_cases() {
        assert_eq!(time_features(0.0, 2).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
        let half = time_features(0.5, 1).unwrap();
        assert!((half[0] - 1.0).abs() < 1e-15 && half[1].abs() < 1e-15);
        assert!(matches!(time_features(1.01, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn time_encoding_has_no_collisions() {
        // every pair of grid times in [0,1] at spacing 1e-3 must differ
        let feats: Vec<Vec<f64>> = (0..=1000).map(|i| time_features(i as f64 / 1000.0, 2).unwrap()).collect();
        let mut min_gap = f64::INFINITY;
        for i in 0..feats.len() {
            for j in i + 1..feats.len() {
                let d: f64 = feats[i].iter().zip(&feats[j]).map(|(a, b)| (a - b).powi(2)).sum();
                min_gap = min_gap.min(d.sqrt());
            }
        }
        assert!(min_gap > 1e-3, "closest pair at distance {min_gap}");
    }

    #[test]
    fn sh_values() {
        assert_eq!(sh_encode([0.6, 0.8, 0.0], 0).unwrap(), vec![0.28209479177387814]);
        // Y₁ at the pole: only the z-aligned term survives, Y₁₀ = √(3/4π)
        let pole = sh_encode([0.0, 0.0, 1.0], 1).unwrap();
        let y10 = (3.0 / (4.0 * PI)).sqrt();
        assert!((pole[2] - y10).abs() < 1e-12);
        assert!((pole[2] - 0.48860251).abs() < 1e-8);
        assert!(pole[1].abs() < 1e-15 && pole[3].abs() < 1e-15);
        assert_eq!(sh_encode([0.0, 1.0, 0.0], 3).unwrap().len(), 16);
    }

    #[test]
    fn sh_band_one_is_odd() {
        let d = [0.48, -0.6, 0.64];
        let a = sh_encode(d, 1).unwrap();
        let b = sh_encode([-d[0], -d[1], -d[2]], 1).unwrap();
        assert_eq!(a[0], b[0]);
        for i in 1..4 {
            assert_eq!(a[i], -b[i]);
        }
    }

    #[test]
    fn sh_normalization_tolerance() {
        assert!(sh_encode([1.0 + 5e-7, 0.0, 0.0], 2).is_ok());
        assert!(matches!(sh_encode([1.1, 0.0, 0.0], 2), Err(Error::Domain(_))));
    }

    #[test]
    fn sh_basis_is_orthonormal() {
        // Fibonacci-sphere quadrature of ∫ Y_i Y_j dΩ
        let n = 20000;
        let mut gram = vec![0.0; 256];
        for k in 0..n {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = k as f64 * PI * (3.0 - 5f64.sqrt());
            let y = sh_encode([r * phi.cos(), r * phi.sin(), z], 3).unwrap();
            for i in 0..16 {
                for j in 0..16 {
                    gram[i * 16 + j] += y[i] * y[j] * 4.0 * PI / n as f64;
                }
            }
        }
        for i in 0..16 {
            for j in 0..16 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[i * 16 + j] - e).abs() < 1e-3, "({i},{j}) = {}", gram[i * 16 + j]);
            }
        }
    }
}
