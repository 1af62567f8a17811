//! On-disk sequence format.
//!
//! A sequence directory holds `meta.json` (geometry, timestamps and
//! row-major 4x4 poses) and `scans.f32`, a little-endian float32 payload
//! indexed as `((frame * n_theta) + beam) * n_delta + bin`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::{Point3, PolarGeometry, Pose, RangeAzimuthScan};

pub const META_FILE: &str = "meta.json";
pub const SCANS_FILE: &str = "scans.f32";

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub geometry: PolarGeometry,
    pub scans: Vec<RangeAzimuthScan>,
    pub poses: Vec<Pose>,
    pub timestamps: Vec<f64>,
}

impl SequenceBundle {
    pub fn new(
        geometry: PolarGeometry,
        scans: Vec<RangeAzimuthScan>,
        poses: Vec<Pose>,
        timestamps: Vec<f64>,
    ) -> Result<Self> {
        let bundle = Self { geometry, scans, poses, timestamps };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let n = self.scans.len();
        if n < 2 {
            return Err(Error::Invariant(format!("sequence needs at least 2 frames, got {n}")));
        }
        if self.poses.len() != n || self.timestamps.len() != n {
            return Err(Error::Invariant(format!(
                "frame count mismatch: {n} scans, {} poses, {} timestamps",
                self.poses.len(),
                self.timestamps.len()
            )));
        }
        if self.timestamps[0] != 0.0 || self.timestamps[n - 1] != 1.0 {
            return Err(Error::Invariant("timestamps must start at 0 and end at 1".into()));
        }
        if self.timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invariant("timestamps must be strictly increasing".into()));
        }
        for (i, (scan, pose)) in self.scans.iter().zip(&self.poses).enumerate() {
            if scan.geometry != self.geometry {
                return Err(Error::Invariant(format!("scan {i} has a different geometry")));
            }
            if scan.timestamp != self.timestamps[i] {
                return Err(Error::Invariant(format!("scan {i} timestamp disagrees with the sequence")));
            }
            scan.validate()?;
            pose.validate()?;
        }
        Ok(())
    }

    /// Normalized-time spacing of adjacent frames.
    pub fn frame_interval(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n_theta: usize,
    n_delta: usize,
    range_resolution: f64,
    min_bin: usize,
    frames: usize,
    timestamps: Vec<f64>,
    poses: Vec<Vec<f64>>,
}

pub fn write_sequence(bundle: &SequenceBundle, dir: &Path) -> Result<()> {
    bundle.validate()?;
    fs::create_dir_all(dir)?;
    let g = bundle.geometry;
    let meta = Meta {
        n_theta: g.n_theta,
        n_delta: g.n_delta,
        range_resolution: g.range_resolution,
        min_bin: g.min_bin,
        frames: bundle.len(),
        timestamps: bundle.timestamps.clone(),
        poses: bundle.poses.iter().map(|p| p.to_matrix().to_vec()).collect(),
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta).expect("meta serializes"))?;

    let mut payload = Vec::with_capacity(bundle.len() * g.bins_per_scan() * 4);
    for scan in &bundle.scans {
        for &v in &scan.values {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(dir.join(SCANS_FILE), payload)?;
    Ok(())
}

fn read_file(path: PathBuf) -> Result<Vec<u8>> {
    match fs::read(&path) {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path)),
        Err(e) => Err(e.into()),
    }
}

pub fn read_sequence(dir: &Path) -> Result<SequenceBundle> {
    let meta_path = dir.join(META_FILE);
    let meta_bytes = read_file(meta_path.clone())?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)
        .map_err(|source| Error::MalformedJson { path: meta_path, source })?;
    let payload = read_file(dir.join(SCANS_FILE))?;

    let geometry = PolarGeometry::new(meta.n_theta, meta.n_delta, meta.range_resolution, meta.min_bin)?;
    let per_frame = geometry.bins_per_scan();
    let expected = meta.frames * per_frame * 4;
    if payload.len() != expected {
        return Err(Error::PayloadSize { expected, found: payload.len() });
    }
    if meta.timestamps.len() != meta.frames || meta.poses.len() != meta.frames {
        return Err(Error::Invariant(format!(
            "meta declares {} frames but lists {} timestamps and {} poses",
            meta.frames,
            meta.timestamps.len(),
            meta.poses.len()
        )));
    }
    let poses = meta.poses.iter().map(|m| Pose::from_matrix(m)).collect::<Result<Vec<_>>>()?;
    let scans = payload
        .chunks_exact(per_frame * 4)
        .zip(&meta.timestamps)
        .map(|(chunk, &t)| {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            RangeAzimuthScan { geometry, values, timestamp: t }
        })
        .collect();
    SequenceBundle::new(geometry, scans, poses, meta.timestamps)
}

/// Uniform isotropic map from metric world coordinates into `[-1, 1]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneScale {
    pub center: Point3,
    pub scale: f64,
}

impl SceneScale {
    pub fn identity() -> Self {
        Self { center: [0.0; 3], scale: 1.0 }
    }

    pub fn to_normalized(&self, p: Point3) -> Point3 {
        [
            (p[0] - self.center[0]) * self.scale,
            (p[1] - self.center[1]) * self.scale,
            (p[2] - self.center[2]) * self.scale,
        ]
    }

    pub fn to_metric(&self, p: Point3) -> Point3 {
        [
            p[0] / self.scale + self.center[0],
            p[1] / self.scale + self.center[1],
            p[2] / self.scale + self.center[2],
        ]
    }

    /// Converts a distance measured in normalized units back to meters.
    pub fn to_metric_distance(&self, d: f64) -> f64 {
        d / self.scale
    }
}

/// Recenters pose translations on their bounding-box midpoint and rescales
/// so every bin center reachable from any pose lies in `[-1, 1]³`.
///
/// Scan values and ranges are untouched; rendering keeps using metric
/// ranges.
pub fn normalize_coordinates(bundle: &SequenceBundle) -> Result<(SequenceBundle, SceneScale)> {
    bundle.validate()?;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for pose in &bundle.poses {
        for a in 0..3 {
            lo[a] = lo[a].min(pose.translation[a]);
            hi[a] = hi[a].max(pose.translation[a]);
        }
    }
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
    let span = bundle
        .poses
        .iter()
        .map(|p| {
            let d = [
                p.translation[0] - center[0],
                p.translation[1] - center[1],
                p.translation[2] - center[2],
            ];
            crate::radar::norm3(d)
        })
        .fold(0.0, f64::max);
    let extent = span + bundle.geometry.max_range();
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::DegenerateScene(format!("scene extent is {extent}")));
    }
    let scale = SceneScale { center, scale: 1.0 / extent };
    let mut out = bundle.clone();
    for pose in &mut out.poses {
        pose.translation = scale.to_normalized(pose.translation);
    }
    Ok((out, scale))
}
