use rand::seq::index;
use rand::Rng;

use crate::dataio::{SceneScale, SequenceBundle};
use crate::error::{Error, Result};
use crate::field::BinQueries;

/// One training batch: bins drawn from a few frames with their targets.
#[derive(Debug, Clone, Default)]
pub struct SampleBatch {
    /// `(frame, beam, bin)` of each sample.
    pub index: Vec<(usize, usize, usize)>,
    pub queries: BinQueries,
    pub times: Vec<f64>,
    pub targets: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Draws `frames` frames uniformly with replacement from `allowed`, then
/// `bins` distinct bins uniformly from each. `bundle` carries normalized
/// poses matching `scale`.
pub fn sample_bins(
    bundle: &SequenceBundle,
    scale: &SceneScale,
    allowed: &[usize],
    frames: usize,
    bins: usize,
    rng: &mut impl Rng,
) -> Result<SampleBatch> {
    let geom = &bundle.geometry;
    let per_frame = geom.bins_per_scan();
    if bins == 0 || bins > per_frame {
        return Err(Error::Invariant(format!("cannot draw {bins} bins from a {per_frame}-bin frame")));
    }
    if allowed.is_empty() {
        return Err(Error::Invariant("no frames to sample from".into()));
    }
    if let Some(&f) = allowed.iter().find(|&&f| f >= bundle.len()) {
        return Err(Error::Range(format!("frame {f} of a {}-frame sequence", bundle.len())));
    }
    let mut batch = SampleBatch::default();
    for _ in 0..frames {
        let frame = allowed[rng.gen_range(0..allowed.len())];
        let scan = &bundle.scans[frame];
        let pose = &bundle.poses[frame];
        for flat in index::sample(rng, per_frame, bins).into_iter() {
            let (beam, bin) = (flat / geom.n_delta, flat % geom.n_delta);
            batch.index.push((frame, beam, bin));
            batch.queries.push(geom, pose, scale, beam, bin)?;
            batch.times.push(bundle.timestamps[frame]);
            batch.targets.push(scan.get(beam, bin));
        }
    }
    Ok(batch)
}
