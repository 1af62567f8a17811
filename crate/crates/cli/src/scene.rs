//! Scene description files consumed by `rf4d synth`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use rf4d_core::synth::{Reflector, SceneSpec};
use rf4d_core::{Error, PolarGeometry, Pose, Result};

/// Planar pose in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl PlanarPose {
    pub fn to_pose(self) -> Pose {
        Pose::planar(self.x, self.y, self.yaw)
    }

    /// Parses `x,y[,yaw]`.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad pose component {s:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        match parts[..] {
            [x, y] => Ok(Self { x, y, yaw: 0.0 }),
            [x, y, yaw] => Ok(Self { x, y, yaw }),
            _ => Err(format!("pose needs x,y or x,y,yaw, got {text:?}")),
        }
    }
}

fn default_ego() -> Vec<PlanarPose> {
    vec![PlanarPose { x: 0.0, y: 0.0, yaw: 0.0 }]
}

fn default_bev_samples() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub geometry: PolarGeometry,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub noise_floor_db: f64,
    #[serde(default)]
    pub noise_std_db: f64,
    #[serde(default)]
    pub ghost_probability: f64,
    /// Keyframes spread evenly over the sequence.
    #[serde(default = "default_ego")]
    pub ego_path: Vec<PlanarPose>,
    /// Boundary points per reflector in the ground-truth BEV files.
    #[serde(default = "default_bev_samples")]
    pub bev_samples: usize,
}

impl SceneFile {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let scene: Self =
            serde_json::from_slice(&bytes).map_err(|source| Error::MalformedJson { path: path.to_path_buf(), source })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn spec(&self) -> SceneSpec {
        SceneSpec {
            reflectors: self.reflectors.clone(),
            noise_floor_db: self.noise_floor_db,
            noise_std_db: self.noise_std_db,
            ghost_probability: self.ghost_probability,
        }
    }

    pub fn ego_poses(&self) -> Vec<Pose> {
        self.ego_path.iter().map(|p| p.to_pose()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.spec().validate()?;
        if self.ego_path.is_empty() {
            return Err(Error::Invariant("ego_path has no poses".into()));
        }
        if self.bev_samples == 0 {
            return Err(Error::Invariant("bev_samples must be >= 1".into()));
        }
        Ok(())
    }
}
