use crate::error::{Error, Result};
use crate::eval::bev::BevPointSet;
use crate::radar::Point2;

fn sq(a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

/// Nearest-neighbor search over points sorted by x.
struct SortedX {
    pts: Vec<Point2>,
}

impl SortedX {
    fn new(points: &[Point2]) -> Self {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Self { pts }
    }

    fn nearest_sq(&self, q: Point2) -> f64 {
        let start = self.pts.partition_point(|p| p[0] < q[0]);
        let mut best = f64::INFINITY;
        for p in &self.pts[start..] {
            let dx = p[0] - q[0];
            if dx * dx > best {
                break;
            }
            best = best.min(sq(q, *p));
        }
        for p in self.pts[..start].iter().rev() {
            let dx = q[0] - p[0];
            if dx * dx > best {
                break;
            }
            best = best.min(sq(q, *p));
        }
        best
    }
}

fn directed(from: &[Point2], to: &SortedX, weight: impl Fn(Point2) -> Result<f64>) -> Result<f64> {
    let mut sum = 0.0;
    for &p in from {
        sum += to.nearest_sq(p) / weight(p)?;
    }
    Ok(sum / from.len() as f64)
}

fn nonempty(a: &BevPointSet, b: &BevPointSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "chamfer needs two non-empty sets, got {} and {} points",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Symmetric Chamfer distance with squared nearest-neighbor distances,
/// averaged per direction.
pub fn chamfer(a: &BevPointSet, b: &BevPointSet) -> Result<f64> {
    nonempty(a, b)?;
    let one = |_| Ok(1.0);
    Ok(directed(&a.points, &SortedX::new(&b.points), one)? + directed(&b.points, &SortedX::new(&a.points), one)?)
}

/// Chamfer with each squared distance divided by the squared range of the
/// query point from `origin`.
pub fn relative_chamfer(a: &BevPointSet, b: &BevPointSet, origin: Point2) -> Result<f64> {
    nonempty(a, b)?;
    let range_sq = |p: Point2| {
        let r = sq(p, origin);
        if r > 0.0 {
            Ok(r)
        } else {
            Err(Error::DegenerateDirection)
        }
    };
    Ok(directed(&a.points, &SortedX::new(&b.points), range_sq)? + directed(&b.points, &SortedX::new(&a.points), range_sq)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bev::BevSource;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(points: Vec<Point2>) -> BevPointSet {
        BevPointSet::new(points, BevSource::Field)
    }

    pub(crate) fn brute_force(a: &[Point2], b: &[Point2]) -> f64 {
        let dir = |x: &[Point2], y: &[Point2]| {
            x.iter().map(|&p| y.iter().map(|&q| sq(p, q)).fold(f64::INFINITY, f64::min)).sum::<f64>() / x.len() as f64
        };
        dir(a, b) + dir(b, a)
    }

    #[test]
    fn chamfer_cases() {
        let a = set(vec![[1.0, 2.0], [-3.0, 0.5]]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&set(vec![[0.0, 0.0]]), &set(vec![[3.0, 4.0]])).unwrap(), 50.0);
        assert!(matches!(chamfer(&a, &set(vec![])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn chamfer_matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let (n, m) = (rng.gen_range(1..=200), rng.gen_range(1..=200));
            let mut pts = |k: usize| -> Vec<Point2> { (0..k).map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)]).collect() };
            let (a, b) = (pts(n), pts(m));
            assert_eq!(chamfer(&set(a.clone()), &set(b.clone())).unwrap(), brute_force(&a, &b));
        }
    }

    #[test]
    fn relative_chamfer_cases() {
        let a = set(vec![[10.0, 0.0]]);
        let b = set(vec![[13.0, 4.0]]);
        let v = relative_chamfer(&a, &b, [0.0, 0.0]).unwrap();
        assert!((v - (25.0 / 100.0 + 25.0 / 185.0)).abs() < 1e-15);
        assert!((v - 0.38514).abs() < 1e-5);
        assert_eq!(relative_chamfer(&a, &a, [0.0, 0.0]).unwrap(), 0.0);
        let c = 3.5;
        let scaled = relative_chamfer(&set(vec![[10.0 * c, 0.0]]), &set(vec![[13.0 * c, 4.0 * c]]), [0.0, 0.0]).unwrap();
        assert!((scaled - v).abs() < 1e-14);
        let at_origin = set(vec![[0.0, 0.0]]);
        assert!(matches!(relative_chamfer(&at_origin, &b, [0.0, 0.0]), Err(Error::DegenerateDirection)));
    }
}
