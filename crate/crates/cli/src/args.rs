use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use rf4d_core::eval::CfarConfig;
use rf4d_core::field::FieldConfig;
use rf4d_core::train::TrainConfig;
use rf4d_core::{Error, Result};

use crate::run::{CfarSpec, EvalSpec, Invocation, RenderSpec, SynthSpec, TrainSpec};
use crate::scene::{PlanarPose, SceneFile};

#[derive(Debug, Parser)]
#[command(name = "rf4d", version, about = "Spatiotemporal radar neural fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a sequence from a scene file.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a field to a sequence.
    Train {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON with optional `field` and `train` objects.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        lambda_oc: Option<f64>,
        #[arg(long)]
        lambda_p: Option<f64>,
        #[arg(long)]
        lambda_m: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        holdout: Option<Vec<usize>>,
        /// Continue from the checkpoint in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Render a scan from a checkpoint.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Take pose and time from this frame and compare against it.
        #[arg(long)]
        frame: Option<usize>,
        /// World pose `x,y[,yaw]`.
        #[arg(long, value_parser = PlanarPose::parse, allow_hyphen_values = true)]
        pose: Option<PlanarPose>,
        /// Normalized time in [0,1].
        #[arg(long, allow_hyphen_values = true)]
        time: Option<f64>,
    },
    /// Score held-out frames of a trained field.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        holdout: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// BEV cell size in meters; defaults to the range resolution.
        #[arg(long)]
        cell: Option<f64>,
    },
    /// Run the CFAR baseline.
    Cfar {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON CFAR parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Frames to score; all when omitted.
        #[arg(long, value_delimiter = ',')]
        holdout: Option<Vec<usize>>,
    },
    /// Re-run a command from its manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    field: FieldConfig,
    train: TrainConfig,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    serde_json::from_slice(&bytes).map_err(|source| Error::MalformedJson { path: path.to_path_buf(), source })
}

/// What to run and where, or a manifest to replay.
pub enum Plan {
    Run(Invocation, PathBuf),
    Replay { manifest: PathBuf, out: PathBuf },
}

impl Command {
    pub fn plan(self) -> Result<Plan> {
        let plan = match self {
            Command::Synth { scene, out, frames, seed } => {
                Plan::Run(Invocation::Synth(SynthSpec { scene: SceneFile::read(&scene)?, frames, seed }), out)
            }
            Command::Train { seq, out, config, iters, seed, lambda_oc, lambda_p, lambda_m, holdout, resume } => {
                let TrainFile { field, mut train } = match config {
                    Some(p) => read_json(&p)?,
                    None => TrainFile::default(),
                };
                if let Some(v) = iters {
                    train.iterations = v;
                }
                if let Some(v) = seed {
                    train.seed = v;
                }
                if let Some(v) = lambda_oc {
                    train.lambda_oc = v;
                }
                if let Some(v) = lambda_p {
                    train.lambda_p = v;
                }
                if let Some(v) = lambda_m {
                    train.lambda_m = v;
                }
                if let Some(v) = holdout {
                    train.holdout = v;
                }
                Plan::Run(Invocation::Train(TrainSpec { seq, field, train, resume }), out)
            }
            Command::Render { ckpt, seq, out, frame, pose, time } => {
                Plan::Run(Invocation::Render(RenderSpec { ckpt, seq, frame, pose, time }), out)
            }
            Command::Eval { ckpt, seq, out, holdout, threshold, cell } => {
                Plan::Run(Invocation::Eval(EvalSpec { ckpt, seq, holdout, threshold, cell }), out)
            }
            Command::Cfar { seq, out, config, holdout } => {
                let cfar: CfarConfig = match config {
                    Some(p) => read_json(&p)?,
                    None => CfarConfig::default(),
                };
                Plan::Run(Invocation::Cfar(CfarSpec { seq, cfar, frames: holdout.unwrap_or_default() }), out)
            }
            Command::Replay { manifest, out } => Plan::Replay { manifest, out },
        };
        Ok(plan)
    }
}
