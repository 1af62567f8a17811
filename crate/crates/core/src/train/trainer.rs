use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step_scaled, lr_schedule, AdamConfig, ParamStore, Tape, Var};
use crate::dataio::{normalize_coordinates, SceneScale, SequenceBundle};
use crate::error::{Error, Result};
use crate::field::{load_checkpoint, render_queries, save_checkpoint, Field, FieldConfig, Gumbel, HASH_BLOCK};
use crate::train::loss::{loss_m, loss_oc, loss_p, loss_rt, total_loss, LossBreakdown, LossWeights};
use crate::train::sample::{sample_bins, SampleBatch};

pub const LOSS_LOG: &str = "loss.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const TRAIN_CONFIG: &str = "train.json";
pub const NONFINITE_DUMP: &str = "nonfinite_batch.json";
const LOG_HEADER: &str = "iteration,lr,l_rt,l_oc,l_p,l_m,total";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub frames_per_batch: usize,
    pub bins_per_frame: usize,
    pub lambda_oc: f64,
    pub lambda_p: f64,
    pub lambda_m: f64,
    /// Adjacent-frame interval in normalized time; `None` uses the
    /// sequence's own frame spacing.
    pub dt: Option<f64>,
    pub seed: u64,
    /// Checkpoint every this many iterations; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Learning-rate multiplier for the hash table. Table entries start near
    /// zero and only see the bins that touch them, so they need larger steps
    /// than the shared MLP weights to localize before occupancy collapses.
    pub hash_lr_scale: f64,
    /// Frames never sampled during training.
    pub holdout: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 15000,
            frames_per_batch: 4,
            bins_per_frame: 1024,
            lambda_oc: 0.1,
            lambda_p: 0.01,
            lambda_m: 0.01,
            dt: None,
            seed: 0,
            checkpoint_every: 1000,
            lr_initial: 1e-3,
            lr_final: 1e-4,
            hash_lr_scale: 30.0,
            holdout: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_oc, self.lambda_p, self.lambda_m].iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Invariant("loss weights must be finite and >= 0".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Invariant(format!("dt must be positive, got {dt}")));
            }
        }
        if self.bins_per_frame == 0 || self.frames_per_batch == 0 {
            return Err(Error::Invariant("batches need at least one frame and one bin".into()));
        }
        if !(self.lr_initial > 0.0) || !(self.lr_final > 0.0) || !(self.hash_lr_scale > 0.0) || !self.hash_lr_scale.is_finite() {
            return Err(Error::Invariant("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { occupancy: self.lambda_oc, prior: self.lambda_p, motion: self.lambda_m }
    }

    pub fn training_frames(&self, n_frames: usize) -> Vec<usize> {
        (0..n_frames).filter(|f| !self.holdout.contains(f)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        let l = &self.loss;
        format!("{},{},{},{},{},{},{}", self.iteration, self.lr, l.l_rt, l.l_oc, l.l_p, l.l_m, l.total)
    }
}

pub struct TrainOutcome {
    pub field: Field,
    pub store: ParamStore,
    pub scale: SceneScale,
    pub log: Vec<LogRow>,
}

/// Records the full objective for one batch and returns the scalar root
/// with its breakdown.
pub fn objective(
    field: &Field,
    tape: &mut Tape,
    store: &ParamStore,
    batch: &SampleBatch,
    dt: f64,
    weights: &LossWeights,
    gumbel: &mut Gumbel,
) -> Result<(Var, LossBreakdown)> {
    let (points, vars, power) = render_queries(field, tape, store, &batch.queries, &batch.times, gumbel)?;
    let (warped, presence) = field.warped_occupancy(tape, store, points, vars.flow, &batch.times, dt, gumbel)?;
    let rt = loss_rt(tape, power, &batch.targets)?;
    let oc = loss_oc(tape, vars.alpha, warped.alpha_prev, warped.alpha_next, &presence)?;
    let p = loss_p(tape, vars.alpha);
    let m = loss_m(tape, vars.flow)?;
    let root = total_loss(tape, [rt, oc, p, m], weights)?;
    let v = |x: Var| tape.value(x).data[0];
    let breakdown = LossBreakdown::combine(v(rt), v(oc), v(p), v(m), weights);
    if breakdown.total.to_bits() != v(root).to_bits() && breakdown.is_finite() {
        return Err(Error::Invariant("loss breakdown does not re-sum to the recorded total".into()));
    }
    Ok((root, breakdown))
}

fn iteration_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rng
}

fn dump_batch(out: &Path, iteration: usize, batch: &SampleBatch, loss: &LossBreakdown) -> Result<()> {
    let dump = serde_json::json!({
        "iteration": iteration,
        "l_rt": format!("{}", loss.l_rt),
        "l_oc": format!("{}", loss.l_oc),
        "l_p": format!("{}", loss.l_p),
        "l_m": format!("{}", loss.l_m),
        "total": format!("{}", loss.total),
        "samples": batch.index,
        "times": batch.times,
        "targets": batch.targets,
    });
    fs::write(out.join(NONFINITE_DUMP), serde_json::to_string_pretty(&dump).expect("dump serializes"))?;
    Ok(())
}

struct Run<'a> {
    bundle: SequenceBundle,
    scale: SceneScale,
    frames: Vec<usize>,
    dt: f64,
    cfg: &'a TrainConfig,
    out: Option<&'a Path>,
}

impl Run<'_> {
    fn checkpoint(&self, field: &Field, store: &ParamStore, log: &mut Option<BufWriter<File>>) -> Result<()> {
        if let Some(out) = self.out {
            save_checkpoint(&out.join(CHECKPOINT_DIR), &field.cfg, store, &self.scale)?;
        }
        if let Some(w) = log {
            w.flush()?;
        }
        Ok(())
    }

    fn execute(&self, field: Field, mut store: ParamStore, mut log: Option<BufWriter<File>>) -> Result<TrainOutcome> {
        let cfg = self.cfg;
        let weights = cfg.weights();
        let start = store.step as usize;
        let mut rows = Vec::with_capacity(cfg.iterations.saturating_sub(start));
        for it in start + 1..=cfg.iterations {
            let frac = (it - 1) as f64 / (cfg.iterations.max(2) - 1) as f64;
            let lr = lr_schedule(it - 1, cfg.iterations, cfg.lr_initial, cfg.lr_final);
            let mut rng = iteration_rng(cfg.seed, it);
            let batch =
                sample_bins(&self.bundle, &self.scale, &self.frames, cfg.frames_per_batch, cfg.bins_per_frame, &mut rng)?;
            let mut gumbel = Gumbel::stochastic(field.cfg.tau_at(frac), rng.gen());
            let mut tape = Tape::new();
            let (root, loss) = objective(&field, &mut tape, &store, &batch, self.dt, &weights, &mut gumbel)?;
            if !loss.is_finite() {
                if let Some(out) = self.out {
                    dump_batch(out, it, &batch, &loss)?;
                }
                return Err(Error::Numeric(format!("non-finite loss at iteration {it}: {loss:?}")));
            }
            tape.backward(root, &mut store)?;
            let hash_scale = cfg.hash_lr_scale;
            adam_step_scaled(&mut store, lr, AdamConfig::default(), |name| if name == HASH_BLOCK { hash_scale } else { 1.0 })?;
            let row = LogRow { iteration: it, lr, loss };
            if let Some(w) = &mut log {
                writeln!(w, "{}", row.to_csv())?;
            }
            rows.push(row);
            if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it != cfg.iterations {
                self.checkpoint(&field, &store, &mut log)?;
            }
        }
        self.checkpoint(&field, &store, &mut log)?;
        Ok(TrainOutcome { field, store, scale: self.scale, log: rows })
    }
}

fn prepare<'a>(bundle: &SequenceBundle, cfg: &'a TrainConfig, out: Option<&'a Path>) -> Result<Run<'a>> {
    cfg.validate()?;
    let (normalized, scale) = normalize_coordinates(bundle)?;
    let frames = cfg.training_frames(bundle.len());
    if frames.is_empty() {
        return Err(Error::Invariant("every frame is held out".into()));
    }
    let dt = cfg.dt.unwrap_or_else(|| bundle.frame_interval());
    Ok(Run { bundle: normalized, scale, frames, dt, cfg, out })
}

/// Fits a fresh field to `bundle`. With `out`, writes `loss.csv`,
/// `train.json` and checkpoints under it.
pub fn train(bundle: &SequenceBundle, field_cfg: &FieldConfig, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let run = prepare(bundle, cfg, out)?;
    let field = Field::new(field_cfg.clone())?;
    let store = field.init_params(cfg.seed)?;
    let log = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(TRAIN_CONFIG), serde_json::to_string_pretty(cfg).expect("config serializes"))?;
            let mut w = BufWriter::new(File::create(dir.join(LOSS_LOG))?);
            writeln!(w, "{LOG_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    run.execute(field, store, log)
}

/// Continues a run from the checkpoint under `out`, keeping the log rows
/// up to the checkpointed iteration.
pub fn resume(bundle: &SequenceBundle, cfg: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    let run = prepare(bundle, cfg, Some(out))?;
    let (field, store, scale) = load_checkpoint(&out.join(CHECKPOINT_DIR))?;
    if scale != run.scale {
        return Err(Error::Contract("checkpoint was trained on a different sequence".into()));
    }
    let done = store.step as usize;
    let log_path = out.join(LOSS_LOG);
    let kept: Vec<String> = match fs::read_to_string(&log_path) {
        Ok(text) => text
            .lines()
            .skip(1)
            .filter(|l| l.split(',').next().and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| i <= done))
            .map(str::to_owned)
            .collect(),
        Err(_) => Vec::new(),
    };
    let mut w = BufWriter::new(File::create(&log_path)?);
    writeln!(w, "{LOG_HEADER}")?;
    for l in &kept {
        writeln!(w, "{l}")?;
    }
    fs::write(out.join(TRAIN_CONFIG), serde_json::to_string_pretty(cfg).expect("config serializes"))?;
    run.execute(field, store, Some(w))
}

/// Parses a loss log written by [`train`].
pub fn read_loss_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::Invariant(format!("{} lacks the loss-log header", path.display())));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Invariant(format!("malformed loss-log row: {line}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(LogRow {
                iteration: f[0].parse().map_err(|_| bad())?,
                lr: num(1)?,
                loss: LossBreakdown { l_rt: num(2)?, l_oc: num(3)?, l_p: num(4)?, l_m: num(5)?, total: num(6)? },
            })
        })
        .collect()
}
