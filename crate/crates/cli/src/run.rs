//! Command execution and run manifests.
//!
//! Each command is described by a fully resolved [`Invocation`]. Running
//! one writes its artifacts plus `manifest.json` into the output directory;
//! feeding that manifest back to [`replay`] reproduces the artifacts
//! bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use rf4d_core::autodiff::ParamStore;
use rf4d_core::eval::{
    cfar_detect, extract_occupancy_bev, geometry_metrics, psnr, ssim, BevGrid, CfarConfig, FrameMetrics, MetricReport,
};
use rf4d_core::field::{load_checkpoint, render_scan, Field, FieldConfig};
use rf4d_core::synth::{ground_truth_bev, make_sequence};
use rf4d_core::train::{resume, train, TrainConfig, CHECKPOINT_DIR, LOSS_LOG, TRAIN_CONFIG};
use rf4d_core::{
    read_sequence, write_sequence, BevPointSet, BevSource, Error, Pose, RangeAzimuthScan, Result, SceneScale,
    SequenceBundle,
};

use crate::pgm::{min_max, polar_to_cartesian, write_f32, write_pgm16};
use crate::scene::{PlanarPose, SceneFile};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

pub fn gt_bev_file(frame: usize) -> String {
    format!("gt_bev_{frame}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scene: SceneFile,
    pub frames: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub seq: PathBuf,
    pub field: FieldConfig,
    pub train: TrainConfig,
    /// Continue from the checkpoint already in the output directory.
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub ckpt: PathBuf,
    /// Supplies the geometry, and with `frame` the pose, time and a
    /// reference scan.
    pub seq: PathBuf,
    pub frame: Option<usize>,
    pub pose: Option<PlanarPose>,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub ckpt: PathBuf,
    pub seq: PathBuf,
    pub holdout: Vec<usize>,
    pub threshold: f64,
    /// BEV cell size in meters; defaults to the range resolution.
    pub cell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfarSpec {
    pub seq: PathBuf,
    pub cfar: CfarConfig,
    /// Frames to evaluate; empty means all.
    pub frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Synth(SynthSpec),
    Train(TrainSpec),
    Render(RenderSpec),
    Eval(EvalSpec),
    Cfar(CfarSpec),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Synth(_) => "synth",
            Self::Train(_) => "train",
            Self::Render(_) => "render",
            Self::Eval(_) => "eval",
            Self::Cfar(_) => "cfar",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Self::Synth(s) => vec![s.seed],
            Self::Train(s) => vec![s.train.seed],
            _ => Vec::new(),
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Self::Synth(_) => Vec::new(),
            Self::Train(s) => vec![s.seq.clone()],
            Self::Render(s) => vec![s.ckpt.clone(), s.seq.clone()],
            Self::Eval(s) => vec![s.ckpt.clone(), s.seq.clone()],
            Self::Cfar(s) => vec![s.seq.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration; replaying it reproduces the run.
    pub config: Invocation,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Files written, relative to `out`.
    pub outputs: Vec<String>,
    pub duration_secs: f64,
    /// Command-specific headline numbers.
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    serde_json::from_slice(&bytes).map_err(|source| Error::MalformedJson { path: path.to_path_buf(), source })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

/// A train output directory or the checkpoint directory inside it.
pub fn checkpoint_dir(path: &Path) -> PathBuf {
    let nested = path.join(CHECKPOINT_DIR);
    if nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

struct Outcome {
    outputs: Vec<String>,
    summary: serde_json::Value,
}

/// Runs `inv`, writing artifacts and the manifest under `out`.
pub fn execute(inv: Invocation, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let mut inv = inv;
    fs::create_dir_all(out)?;
    let outcome = match &mut inv {
        Invocation::Synth(s) => run_synth(s, out)?,
        Invocation::Train(s) => run_train(s, out)?,
        Invocation::Render(s) => run_render(s, out)?,
        Invocation::Eval(s) => run_eval(s, out)?,
        Invocation::Cfar(s) => run_cfar(s, out)?,
    };
    let manifest = RunManifest {
        command: inv.name().to_owned(),
        seeds: inv.seeds(),
        inputs: inv.inputs(),
        config: inv,
        out: out.to_path_buf(),
        outputs: outcome.outputs,
        duration_secs: start.elapsed().as_secs_f64(),
        summary: outcome.summary,
    };
    write_atomic(&out.join(MANIFEST_FILE), to_json(&manifest).as_bytes())?;
    Ok(manifest)
}

/// Re-runs the command recorded in a manifest into `out`.
pub fn replay(manifest: &Path, out: &Path) -> Result<RunManifest> {
    let m = RunManifest::read(manifest)?;
    if let Invocation::Train(s) = &m.config {
        if s.resume && !out.join(CHECKPOINT_DIR).is_dir() {
            return Err(Error::Contract(format!(
                "replaying a resumed run needs its starting checkpoint under {}",
                out.display()
            )));
        }
    }
    execute(m.config, out)
}

fn run_synth(s: &mut SynthSpec, out: &Path) -> Result<Outcome> {
    s.scene.validate()?;
    let scene = s.scene.spec();
    let bundle = make_sequence(&scene, &s.scene.ego_poses(), s.frames, &s.scene.geometry, s.seed)?;
    write_sequence(&bundle, out)?;
    let mut outputs = vec![rf4d_core::dataio::META_FILE.to_owned(), rf4d_core::dataio::SCANS_FILE.to_owned()];
    for (k, &t) in bundle.timestamps.iter().enumerate() {
        let name = gt_bev_file(k);
        ground_truth_bev(&scene, t, s.scene.bev_samples)?.write_csv(&out.join(&name))?;
        outputs.push(name);
    }
    fs::write(out.join("scene.json"), to_json(&s.scene))?;
    outputs.push("scene.json".into());
    Ok(Outcome { outputs, summary: serde_json::json!({ "frames": bundle.len() }) })
}

fn run_train(s: &mut TrainSpec, out: &Path) -> Result<Outcome> {
    require_dir(&s.seq)?;
    let bundle = read_sequence(&s.seq)?;
    let outcome = if s.resume {
        let (field, _, _) = load_checkpoint(&out.join(CHECKPOINT_DIR))?;
        s.field = field.cfg;
        resume(&bundle, &s.train, out)?
    } else {
        train(&bundle, &s.field, &s.train, Some(out))?
    };
    let mut outputs = vec![LOSS_LOG.to_owned(), TRAIN_CONFIG.to_owned()];
    let mut ckpt: Vec<String> = fs::read_dir(out.join(CHECKPOINT_DIR))?
        .map(|e| e.map(|e| format!("{CHECKPOINT_DIR}/{}", e.file_name().to_string_lossy())))
        .collect::<std::io::Result<_>>()?;
    ckpt.sort();
    outputs.extend(ckpt);
    let last = outcome.log.last().map(|r| r.loss.total);
    Ok(Outcome {
        outputs,
        summary: serde_json::json!({ "iterations": s.train.iterations, "final_loss": last }),
    })
}

/// Renders and extracts occupancy for frames of a sequence; implemented by
/// trained fields and by test stand-ins.
pub trait FrameModel: Sync {
    fn render(&self, frame: usize) -> Result<RangeAzimuthScan>;
    fn occupancy(&self, frame: usize) -> Result<BevPointSet>;
}

pub struct FieldModel<'a> {
    pub field: Field,
    pub store: ParamStore,
    pub scale: SceneScale,
    pub bundle: &'a SequenceBundle,
    pub cell: f64,
    pub threshold: f64,
}

impl FieldModel<'_> {
    fn normalized(&self, pose: &Pose) -> Pose {
        Pose { rotation: pose.rotation, translation: self.scale.to_normalized(pose.translation) }
    }

    pub fn render_at(&self, pose: &Pose, t: f64) -> Result<RangeAzimuthScan> {
        render_scan(&self.field, &self.store, &self.normalized(pose), t, &self.bundle.geometry, &self.scale, t)
    }
}

impl FrameModel for FieldModel<'_> {
    fn render(&self, frame: usize) -> Result<RangeAzimuthScan> {
        self.render_at(&self.bundle.poses[frame], self.bundle.timestamps[frame])
    }

    /// Occupied cells the sensor can see: the blind disc inside the first
    /// retained bin is never observed, so it is left out.
    fn occupancy(&self, frame: usize) -> Result<BevPointSet> {
        let p = self.bundle.poses[frame].translation;
        let g = &self.bundle.geometry;
        let grid = BevGrid { center: [p[0], p[1]], radius: g.max_range(), cell: self.cell };
        let mut set =
            extract_occupancy_bev(&self.field, &self.store, &self.scale, &grid, self.bundle.timestamps[frame], self.threshold)?;
        set.points.retain(|q| {
            let r = (q[0] - p[0]).hypot(q[1] - p[1]);
            r > 0.0 && r >= g.min_range()
        });
        Ok(BevPointSet::new(set.points, set.source))
    }
}

fn check_frames(frames: &[usize], n: usize) -> Result<()> {
    if let Some(&k) = frames.iter().find(|&&k| k >= n) {
        return Err(Error::Range(format!("frame {k} outside a {n}-frame sequence")));
    }
    Ok(())
}

pub fn read_gt_bev(seq: &Path, frames: &[usize]) -> Result<Vec<BevPointSet>> {
    frames.iter().map(|&k| BevPointSet::read_csv(&seq.join(gt_bev_file(k)), BevSource::GroundTruth)).collect()
}

fn frame_geometry(k: usize, pred: &BevPointSet, gt: &BevPointSet, pose: &Pose) -> Result<FrameMetrics> {
    let (cd, rcd) = geometry_metrics(pred, gt, [pose.translation[0], pose.translation[1]])?;
    Ok(FrameMetrics { frame: k, psnr: None, ssim: None, cd, rcd, points: pred.len(), degenerate: cd.is_none() })
}

/// Scores `frames` of `bundle`; `gt[i]` is the reference BEV of `frames[i]`.
/// Returns the report and each frame's extracted occupancy.
pub fn evaluate(
    model: &dyn FrameModel,
    bundle: &SequenceBundle,
    gt: &[BevPointSet],
    frames: &[usize],
) -> Result<(MetricReport, Vec<BevPointSet>)> {
    check_frames(frames, bundle.len())?;
    if gt.len() != frames.len() {
        return Err(Error::Shape(format!("{} reference sets for {} frames", gt.len(), frames.len())));
    }
    let mut rows = Vec::with_capacity(frames.len());
    let mut sets = Vec::with_capacity(frames.len());
    for (&k, reference) in frames.iter().zip(gt) {
        let scan = model.render(k)?;
        let pred = model.occupancy(k)?;
        let mut row = frame_geometry(k, &pred, reference, &bundle.poses[k])?;
        row.psnr = Some(psnr(&scan, &bundle.scans[k])?);
        row.ssim = Some(ssim(&scan, &bundle.scans[k])?);
        rows.push(row);
        sets.push(pred);
    }
    Ok((MetricReport::new(rows), sets))
}

fn load_model<'a>(ckpt: &Path, bundle: &'a SequenceBundle, cell: f64, threshold: f64) -> Result<FieldModel<'a>> {
    let dir = checkpoint_dir(ckpt);
    require_dir(&dir)?;
    let (field, store, scale) = load_checkpoint(&dir)?;
    Ok(FieldModel { field, store, scale, bundle, cell, threshold })
}

fn run_render(s: &mut RenderSpec, out: &Path) -> Result<Outcome> {
    require_dir(&s.seq)?;
    let bundle = read_sequence(&s.seq)?;
    if let Some(k) = s.frame {
        check_frames(&[k], bundle.len())?;
    }
    let pose = match (s.pose, s.frame) {
        (Some(p), _) => p.to_pose(),
        (None, Some(k)) => bundle.poses[k],
        (None, None) => return Err(Error::Contract("render needs --pose or --frame".into())),
    };
    let t = match (s.time, s.frame) {
        (Some(t), _) => t,
        (None, Some(k)) => bundle.timestamps[k],
        (None, None) => return Err(Error::Contract("render needs --time or --frame".into())),
    };
    s.time = Some(t);
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0,1]")));
    }
    let model = load_model(&s.ckpt, &bundle, bundle.geometry.range_resolution, 0.5)?;
    let scan = model.render_at(&pose, t)?;
    let reference = s.frame.map(|k| &bundle.scans[k]);

    let g = bundle.geometry;
    let (mut lo, mut hi) = min_max(&scan.values);
    if let Some(r) = reference {
        let (a, b) = min_max(&r.values);
        (lo, hi) = (lo.min(a), hi.max(b));
    }
    write_f32(&out.join("render.f32"), &scan.values)?;
    write_pgm16(&out.join("render.pgm"), &scan.values, g.n_theta, g.n_delta, lo, hi)?;
    let (cart, side) = polar_to_cartesian(&scan, lo);
    write_pgm16(&out.join("render_cart.pgm"), &cart, side, side, lo, hi)?;
    let mut outputs: Vec<String> = ["render.f32", "render.pgm", "render_cart.pgm"].map(String::from).into();
    let mut summary = serde_json::json!({ "time": t, "min": lo, "max": hi });
    if let Some(r) = reference {
        write_pgm16(&out.join("reference.pgm"), &r.values, g.n_theta, g.n_delta, lo, hi)?;
        let (cart, side) = polar_to_cartesian(r, lo);
        write_pgm16(&out.join("reference_cart.pgm"), &cart, side, side, lo, hi)?;
        outputs.extend(["reference.pgm", "reference_cart.pgm"].map(String::from));
        summary["psnr"] = psnr(&scan, r)?.into();
        summary["ssim"] = ssim(&scan, r)?.into();
    }
    Ok(Outcome { outputs, summary })
}

fn write_report(out: &Path, report: &MetricReport, prefix: &str, frames: &[usize], sets: &[BevPointSet]) -> Result<Vec<String>> {
    let mut outputs = Vec::with_capacity(frames.len() + 1);
    for (k, set) in frames.iter().zip(sets) {
        let name = format!("{prefix}_bev_{k}.csv");
        set.write_csv(&out.join(&name))?;
        outputs.push(name);
    }
    fs::write(out.join(REPORT_FILE), to_json(report))?;
    outputs.push(REPORT_FILE.to_owned());
    Ok(outputs)
}

fn run_eval(s: &mut EvalSpec, out: &Path) -> Result<Outcome> {
    require_dir(&s.seq)?;
    let bundle = read_sequence(&s.seq)?;
    if s.holdout.is_empty() {
        return Err(Error::Contract("eval needs at least one frame".into()));
    }
    check_frames(&s.holdout, bundle.len())?;
    let cell = *s.cell.get_or_insert(bundle.geometry.range_resolution);
    if !(cell > 0.0) || !(0.0..=1.0).contains(&s.threshold) {
        return Err(Error::Domain(format!("need cell > 0 and threshold in [0,1], got {cell} and {}", s.threshold)));
    }
    let gt = read_gt_bev(&s.seq, &s.holdout)?;
    let model = load_model(&s.ckpt, &bundle, cell, s.threshold)?;
    let (report, sets) = evaluate(&model, &bundle, &gt, &s.holdout)?;
    let outputs = write_report(out, &report, "field", &s.holdout, &sets)?;
    Ok(Outcome { outputs, summary: serde_json::to_value(&report.mean).expect("means serialize") })
}

/// CFAR detections and geometry metrics for `frames`.
pub fn cfar_report(
    bundle: &SequenceBundle,
    gt: &[BevPointSet],
    frames: &[usize],
    cfg: &CfarConfig,
) -> Result<(MetricReport, Vec<BevPointSet>)> {
    check_frames(frames, bundle.len())?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut sets = Vec::with_capacity(frames.len());
    for (&k, reference) in frames.iter().zip(gt) {
        let pred = cfar_detect(&bundle.scans[k], &bundle.poses[k], cfg)?;
        rows.push(frame_geometry(k, &pred, reference, &bundle.poses[k])?);
        sets.push(pred);
    }
    Ok((MetricReport::new(rows), sets))
}

fn run_cfar(s: &mut CfarSpec, out: &Path) -> Result<Outcome> {
    s.cfar.validate()?;
    require_dir(&s.seq)?;
    let bundle = read_sequence(&s.seq)?;
    if s.frames.is_empty() {
        s.frames = (0..bundle.len()).collect();
    }
    check_frames(&s.frames, bundle.len())?;
    let gt = read_gt_bev(&s.seq, &s.frames)?;
    let (report, sets) = cfar_report(&bundle, &gt, &s.frames, &s.cfar)?;
    let outputs = write_report(out, &report, "cfar", &s.frames, &sets)?;
    Ok(Outcome { outputs, summary: serde_json::to_value(&report.mean).expect("means serialize") })
}
