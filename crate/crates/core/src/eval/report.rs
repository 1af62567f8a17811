use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::bev::BevPointSet;
use crate::eval::chamfer::{chamfer, relative_chamfer};
use crate::radar::Point2;

/// Metrics of one evaluated frame; absent entries were not computed or
/// were undefined (empty point set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub cd: Option<f64>,
    pub rcd: Option<f64>,
    pub points: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub cd: Option<f64>,
    pub rcd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub mean: MetricMeans,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricReport {
    pub fn new(frames: Vec<FrameMetrics>) -> Self {
        let mean = MetricMeans {
            psnr: mean(frames.iter().map(|f| f.psnr)),
            ssim: mean(frames.iter().map(|f| f.ssim)),
            cd: mean(frames.iter().map(|f| f.cd)),
            rcd: mean(frames.iter().map(|f| f.rcd)),
        };
        Self { frames, mean }
    }
}

/// CD and RCD of a predicted point set, or `None` for both when either set
/// is empty.
pub fn geometry_metrics(pred: &BevPointSet, gt: &BevPointSet, origin: Point2) -> Result<(Option<f64>, Option<f64>)> {
    match chamfer(pred, gt) {
        Ok(cd) => Ok((Some(cd), Some(relative_chamfer(pred, gt, origin)?))),
        Err(Error::UndefinedMetric(_)) => Ok((None, None)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bev::BevSource;

    #[test]
    fn empty_prediction_reports_null() {
        let gt = BevPointSet::new(vec![[5.0, 0.0]], BevSource::GroundTruth);
        let pred = BevPointSet::new(vec![], BevSource::Field);
        assert_eq!(geometry_metrics(&pred, &gt, [0.0, 0.0]).unwrap(), (None, None));
        let f = FrameMetrics { frame: 3, psnr: Some(31.0), ssim: Some(0.9), cd: None, rcd: None, points: 0, degenerate: true };
        let g = FrameMetrics { frame: 4, psnr: Some(33.0), ssim: Some(0.95), cd: Some(2.0), rcd: Some(0.01), points: 7, degenerate: false };
        let r = MetricReport::new(vec![f, g]);
        assert_eq!(r.mean.psnr, Some(32.0));
        assert_eq!(r.mean.cd, Some(2.0));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["frames"][0]["cd"].is_null());
        for key in ["psnr", "ssim", "cd", "rcd"] {
            assert!(json["mean"].get(key).is_some());
        }
    }
}
