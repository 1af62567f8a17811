//! Command-line frontend: synthesize sequences, train fields, render
//! scans, and score fields and the CFAR baseline. Every run leaves a
//! `manifest.json` that is enough to reproduce it.

pub mod args;
pub mod pgm;
pub mod run;
pub mod scene;

pub use args::{Cli, Command, Plan};
pub use run::{evaluate, execute, replay, FrameModel, Invocation, RunManifest, MANIFEST_FILE, REPORT_FILE};
pub use scene::{PlanarPose, SceneFile};

use rf4d_core::Error;

/// 2 for bad input or usage, 1 for failures inside a run.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) | Error::Io(_) | Error::UndefinedMetric(_) | Error::DegenerateDirection => 1,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> rf4d_core::Result<RunManifest> {
    match cli.command.plan()? {
        Plan::Run(inv, out) => execute(inv, &out),
        Plan::Replay { manifest, out } => replay(&manifest, &out),
    }
}
