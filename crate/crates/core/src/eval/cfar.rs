use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::bev::{BevPointSet, BevSource};
use crate::radar::{bin_to_local, local_to_world, Pose, RangeAzimuthScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfarConfig {
    /// Training cells on each side of the cell under test.
    pub training: usize,
    pub guard: usize,
    /// Detection margin above the local mean, in decibels.
    pub offset_db: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self { training: 8, guard: 2, offset_db: 12.0 }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training == 0 {
            return Err(Error::Invariant("CFAR needs at least one training cell per side".into()));
        }
        if !self.offset_db.is_finite() {
            return Err(Error::Invariant("CFAR offset must be finite".into()));
        }
        Ok(())
    }
}

/// Cell-averaging detection along range, per beam. Map values are log₁₀
/// power, so the offset is compared against `10·(value − mean)`. Cells near
/// the ends of a beam use whichever training cells exist.
pub fn cfar_mask(scan: &RangeAzimuthScan, cfg: &CfarConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    let g = &scan.geometry;
    if g.n_delta <= 2 * (cfg.training + cfg.guard) {
        return Err(Error::Shape(format!(
            "{} range bins cannot hold {} training and {} guard cells per side",
            g.n_delta, cfg.training, cfg.guard
        )));
    }
    let reach = cfg.training + cfg.guard;
    let mut hits = Vec::new();
    for j in 0..g.n_theta {
        let beam = scan.beam(j);
        for k in 0..g.n_delta {
            let lead = k.saturating_sub(reach)..k.saturating_sub(cfg.guard);
            let lag = (k + cfg.guard + 1).min(g.n_delta)..(k + reach + 1).min(g.n_delta);
            let cells = lead.chain(lag);
            let (sum, n) = cells.fold((0.0, 0usize), |(s, n), i| (s + beam[i], n + 1));
            if n > 0 && 10.0 * (beam[k] - sum / n as f64) > cfg.offset_db {
                hits.push((j, k));
            }
        }
    }
    Ok(hits)
}

/// CFAR detections as world-frame BEV points.
pub fn cfar_detect(scan: &RangeAzimuthScan, pose: &Pose, cfg: &CfarConfig) -> Result<BevPointSet> {
    let points = cfar_mask(scan, cfg)?
        .into_iter()
        .map(|(j, k)| {
            let w = local_to_world(bin_to_local(j, k, &scan.geometry)?, pose);
            Ok([w[0], w[1]])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BevPointSet::new(points, BevSource::Cfar))
}
