use crate::autodiff::ParamStore;
use crate::dataio::SceneScale;
use crate::error::{Error, Result};
use crate::eval::bev::{BevPointSet, BevSource};
use crate::field::{render_power, Field};
use crate::radar::Point2;
use rayon::prelude::*;

/// Square cells tiling a disc in world meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevGrid {
    pub center: Point2,
    pub radius: f64,
    pub cell: f64,
}

impl BevGrid {
    /// Centers of the cells whose center lies inside the disc.
    pub fn cells(&self) -> Result<Vec<Point2>> {
        if !(self.cell > 0.0) || !(self.radius > 0.0) {
            return Err(Error::Domain(format!("grid needs positive cell and radius, got {} and {}", self.cell, self.radius)));
        }
        let n = (2.0 * self.radius / self.cell).ceil() as usize;
        let origin = [self.center[0] - 0.5 * n as f64 * self.cell, self.center[1] - 0.5 * n as f64 * self.cell];
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = [origin[0] + (i as f64 + 0.5) * self.cell, origin[1] + (j as f64 + 0.5) * self.cell];
                let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
                if dx * dx + dy * dy <= self.radius * self.radius {
                    out.push(p);
                }
            }
        }
        Ok(out)
    }
}

/// Deterministic occupancy on the z = 0 plane at every grid cell.
pub fn occupancy_on_grid(field: &Field, store: &ParamStore, scale: &SceneScale, cells: &[Point2], t: f64) -> Result<Vec<f64>> {
    let pts: Vec<_> = cells.iter().map(|c| scale.to_normalized([c[0], c[1], 0.0])).collect();
    field.occupancy_at(store, &pts, t)
}

/// Grid cells whose deterministic occupancy reaches `threshold`.
pub fn extract_occupancy_bev(
    field: &Field,
    store: &ParamStore,
    scale: &SceneScale,
    grid: &BevGrid,
    t: f64,
    threshold: f64,
) -> Result<BevPointSet> {
    let cells = grid.cells()?;
    let alpha = occupancy_on_grid(field, store, scale, &cells, t)?;
    let points = cells.into_iter().zip(alpha).filter(|(_, a)| *a >= threshold).map(|(c, _)| c).collect();
    Ok(BevPointSet::new(points, BevSource::Field))
}

/// Mean linear rendered power over confidently occupied and confidently
/// empty cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyContrast {
    pub mean_high: f64,
    pub mean_low: f64,
    pub n_high: usize,
    pub n_low: usize,
}

impl OccupancyContrast {
    pub fn ratio(&self) -> f64 {
        self.mean_high / self.mean_low
    }
}

/// Renders every grid cell as seen from `sensor` and splits the linear power
/// by occupancy: `α ≥ high` against `α ≤ low`. Cells at the sensor itself
/// are skipped.
pub fn occupancy_power_contrast(
    field: &Field,
    store: &ParamStore,
    scale: &SceneScale,
    grid: &BevGrid,
    sensor: Point2,
    t: f64,
    (low, high): (f64, f64),
) -> Result<OccupancyContrast> {
    let cells = grid.cells()?;
    let samples = cells
        .par_iter()
        .filter_map(|c| {
            let (dx, dy) = (c[0] - sensor[0], c[1] - sensor[1]);
            let range = dx.hypot(dy);
            (range > 0.0).then(|| {
                let x = scale.to_normalized([c[0], c[1], 0.0]);
                let out = field.query(store, x, t, [dx / range, dy / range, 0.0], &mut field.eval_gumbel())?;
                Ok((out.alpha, 10f64.powf(render_power(out.alpha, out.sigma, range)?)))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |keep: &dyn Fn(f64) -> bool| {
        let picked: Vec<f64> = samples.iter().filter(|(a, _)| keep(*a)).map(|(_, p)| *p).collect();
        (picked.iter().sum::<f64>() / picked.len().max(1) as f64, picked.len())
    };
    let (mean_high, n_high) = mean(&|a| a >= high);
    let (mean_low, n_low) = mean(&|a| a <= low);
    if n_high == 0 || n_low == 0 {
        return Err(Error::UndefinedMetric(format!("{n_high} occupied and {n_low} empty cells")));
    }
    Ok(OccupancyContrast { mean_high, mean_low, n_high, n_low })
}
