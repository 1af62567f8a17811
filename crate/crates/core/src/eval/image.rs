use crate::error::{Error, Result};
use crate::radar::RangeAzimuthScan;

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_shapes(pred: &RangeAzimuthScan, gt: &RangeAzimuthScan) -> Result<()> {
    let (p, g) = (&pred.geometry, &gt.geometry);
    if p.n_theta != g.n_theta || p.n_delta != g.n_delta || pred.values.len() != gt.values.len() {
        return Err(Error::Shape(format!(
            "maps are {}x{} and {}x{}",
            p.n_theta, p.n_delta, g.n_theta, g.n_delta
        )));
    }
    Ok(())
}

/// Both maps rescaled by the ground-truth min-max range. A constant ground
/// truth leaves values unscaled and only shifted.
pub fn joint_normalize(pred: &[f64], gt: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lo = gt.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = gt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let f = |v: &f64| (v - lo) / span;
    (pred.iter().map(f).collect(), gt.iter().map(f).collect())
}

/// PSNR from a mean squared error on normalized maps, capped.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

pub fn psnr(pred: &RangeAzimuthScan, gt: &RangeAzimuthScan) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (p, g) = joint_normalize(&pred.values, &gt.values);
    let mse = p.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
    Ok(psnr_from_mse(mse))
}

/// Summed-area table with a zero border: `(rows + 1) × (cols + 1)`.
fn integral(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let w = cols + 1;
    let mut s = vec![0.0; (rows + 1) * w];
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += values[r * cols + c];
            s[(r + 1) * w + c + 1] = s[r * w + c + 1] + acc;
        }
    }
    s
}

fn window_sum(s: &[f64], cols: usize, r: usize, c: usize, k: usize) -> f64 {
    let w = cols + 1;
    s[(r + k) * w + c + k] - s[r * w + c + k] - s[(r + k) * w + c] + s[r * w + c]
}

/// Local SSIM of one window from its moments.
pub fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
}

/// Mean SSIM over every fully contained 11×11 window of a row-major image.
pub fn ssim_image(x: &[f64], y: &[f64], rows: usize, cols: usize) -> Result<f64> {
    let k = SSIM_WINDOW;
    if rows < k || cols < k {
        return Err(Error::Shape(format!("{rows}x{cols} map is smaller than the {k}x{k} window")));
    }
    if x.len() != rows * cols || y.len() != rows * cols {
        return Err(Error::Shape("image buffers do not match the stated shape".into()));
    }
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (sx, sy) = (integral(x, rows, cols), integral(y, rows, cols));
    let (sxx, syy, sxy) = (integral(&xx, rows, cols), integral(&yy, rows, cols), integral(&xy, rows, cols));
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=rows - k {
        for c in 0..=cols - k {
            let mx = window_sum(&sx, cols, r, c, k) / n;
            let my = window_sum(&sy, cols, r, c, k) / n;
            let vx = (window_sum(&sxx, cols, r, c, k) / n - mx * mx).max(0.0);
            let vy = (window_sum(&syy, cols, r, c, k) / n - my * my).max(0.0);
            let cxy = window_sum(&sxy, cols, r, c, k) / n - mx * my;
            total += ssim_from_moments(mx, my, vx, vy, cxy);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean SSIM of the jointly normalized polar maps, beams as rows.
pub fn ssim(pred: &RangeAzimuthScan, gt: &RangeAzimuthScan) -> Result<f64> {
    check_shapes(pred, gt)?;
    let (rows, cols) = (gt.geometry.n_theta, gt.geometry.n_delta);
    let (p, g) = joint_normalize(&pred.values, &gt.values);
    let value = ssim_image(&p, &g, rows, cols)?;
    // rounding in the running moments can leave identical maps a hair below 1
    Ok(if pred.values == gt.values { 1.0 } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::PolarGeometry;

    fn scan(values: Vec<f64>, n_theta: usize, n_delta: usize) -> RangeAzimuthScan {
        RangeAzimuthScan::new(PolarGeometry::new(n_theta, n_delta, 1.0, 1).unwrap(), values, 0.0).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let g = scan((0..64).map(|i| (i % 7) as f64).collect(), 8, 8);
        assert_eq!(psnr(&g, &g).unwrap(), 100.0);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert!((psnr_from_mse(0.001) - 30.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(1e-12), 100.0);
        // gt spans [0, 1]; a uniform offset of 0.1 gives MSE 0.01
        let gt = scan((0..64).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect(), 8, 8);
        let pred = scan(gt.values.iter().map(|v| v + 0.1).collect(), 8, 8);
        assert!((psnr(&pred, &gt).unwrap() - 20.0).abs() < 1e-9);
        // joint normalization makes PSNR invariant to an affine change of units
        let gt2 = scan(gt.values.iter().map(|v| 5.0 * v - 3.0).collect(), 8, 8);
        let pred2 = scan(pred.values.iter().map(|v| 5.0 * v - 3.0).collect(), 8, 8);
        assert!((psnr(&pred2, &gt2).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(psnr(&scan(vec![0.0; 63], 9, 7), &g), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_identity_and_size() {
        let g = scan((0..400).map(|i| ((i * 37) % 11) as f64).collect(), 20, 20);
        assert_eq!(ssim(&g, &g).unwrap(), 1.0);
        let small = scan(vec![0.0; 100], 10, 10);
        assert!(matches!(ssim(&small, &small), Err(Error::Shape(_))));
    }

    /// Direct per-window reference: explicit loops, two-pass moments.
    fn reference_ssim(x: &[f64], y: &[f64], rows: usize, cols: usize) -> f64 {
        let k = SSIM_WINDOW;
        let mut vals = Vec::new();
        for r in 0..=rows - k {
            for c in 0..=cols - k {
                let idx: Vec<usize> = (0..k).flat_map(|i| (0..k).map(move |j| (r + i) * cols + c + j)).collect();
                let n = idx.len() as f64;
                let mx = idx.iter().map(|&i| x[i]).sum::<f64>() / n;
                let my = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
                let vx = idx.iter().map(|&i| (x[i] - mx).powi(2)).sum::<f64>() / n;
                let vy = idx.iter().map(|&i| (y[i] - my).powi(2)).sum::<f64>() / n;
                let cxy = idx.iter().map(|&i| (x[i] - mx) * (y[i] - my)).sum::<f64>() / n;
                let l = (2.0 * mx * my + 1e-4) / (mx * mx + my * my + 1e-4);
                let cs = (2.0 * cxy + 9e-4) / (vx + vy + 9e-4);
                vals.push(l * cs);
            }
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn inverted_binary_map_matches_reference() {
        let (rows, cols) = (16, 24);
        let gt: Vec<f64> = (0..rows * cols).map(|i| if (i / cols + i % cols / 3) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let pred: Vec<f64> = gt.iter().map(|v| 1.0 - v).collect();
        let fast = ssim(&scan(pred.clone(), rows, cols), &scan(gt.clone(), rows, cols)).unwrap();
        let slow = reference_ssim(&pred, &gt, rows, cols);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        assert!(fast < 0.0);
    }

    #[test]
    fn constant_offset_matches_luminance_closed_form() {
        // equal variances and covariance = variance: only luminance differs
        let (rows, cols) = (12, 30);
        let gt: Vec<f64> = (0..rows * cols).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
        let lo = gt.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gt.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
        let pred: Vec<f64> = gt.iter().map(|v| v + 0.1).collect();
        let got = ssim(&scan(pred, rows, cols), &scan(gt.clone(), rows, cols)).unwrap();
        let k = SSIM_WINDOW;
        let mut sum = 0.0;
        let mut n = 0;
        for r in 0..=rows - k {
            for c in 0..=cols - k {
                let mu = (0..k).flat_map(|i| (0..k).map(move |j| (r + i) * cols + c + j)).map(|i| gt[i]).sum::<f64>() / (k * k) as f64;
                let m2 = mu + 0.1;
                sum += (2.0 * mu * m2 + 1e-4) / (mu * mu + m2 * m2 + 1e-4);
                n += 1;
            }
        }
        let closed = sum / n as f64;
        assert!(got < 1.0);
        assert!((got - closed).abs() < 1e-9, "{got} vs {closed}");
    }

    #[test]
    fn random_maps_match_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (rows, cols) = (20, 17);
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.gen()).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v + 0.3 * rng.gen::<f64>()).collect();
        let fast = ssim_image(&x, &y, rows, cols).unwrap();
        assert!((fast - reference_ssim(&x, &y, rows, cols)).abs() < 1e-10);
    }
}
