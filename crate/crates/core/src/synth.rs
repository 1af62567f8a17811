//! Synthetic 2D radar scenes with exact ground truth.
//!
//! Reflectors are discs in the sensor sweep plane (z = 0) moving along
//! piecewise-linear trajectories. Each beam returns the first disc it hits;
//! the return lands in the covering range bin with half-power shoulders in
//! the two neighboring bins, and every untouched bin receives dB-domain
//! Gaussian noise. An optional multipath ghost doubles the range at a
//! quarter of the RCS.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::SequenceBundle;
use crate::error::{Error, Result};
use crate::eval::{BevPointSet, BevSource};
use crate::radar::{power_db, Point2, PolarGeometry, Pose, RangeAzimuthScan};

/// Relative weight of the two bins adjacent to a return.
pub const SHOULDER_WEIGHT: f64 = 0.5;
/// Floor on the angular RCS gain so lobed reflectors never reach σ = 0.
const MIN_LOBE_GAIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub position: Point2,
}

/// Direction-dependent RCS: `σ · max(cos φ, 0)^exponent`, where φ is the
/// angle between `facing` and the direction back toward the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub facing_deg: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub trajectory: Vec<Keyframe>,
    pub radius: f64,
    pub rcs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lobe: Option<Lobe>,
}

impl Reflector {
    pub fn fixed(position: Point2, radius: f64, rcs: f64) -> Self {
        Self { trajectory: vec![Keyframe { t: 0.0, position }], radius, rcs, lobe: None }
    }

    pub fn moving(from: Point2, to: Point2, radius: f64, rcs: f64) -> Self {
        Self {
            trajectory: vec![Keyframe { t: 0.0, position: from }, Keyframe { t: 1.0, position: to }],
            radius,
            rcs,
            lobe: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.rcs > 0.0) {
            return Err(Error::Invariant(format!(
                "reflector needs radius > 0 and rcs > 0, got ({}, {})",
                self.radius, self.rcs
            )));
        }
        if self.trajectory.is_empty() {
            return Err(Error::Invariant("reflector trajectory has no keyframes".into()));
        }
        if self.trajectory.iter().any(|k| !(0.0..=1.0).contains(&k.t)) {
            return Err(Error::Invariant("trajectory keyframes must lie in [0,1]".into()));
        }
        if self.trajectory.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Invariant("trajectory keyframes must be strictly increasing in time".into()));
        }
        Ok(())
    }

    fn gain(&self, center: Point2, sensor: Point2) -> f64 {
        let Some(lobe) = self.lobe else { return 1.0 };
        let (s, c) = lobe.facing_deg.to_radians().sin_cos();
        let (dx, dy) = (sensor[0] - center[0], sensor[1] - center[1]);
        let n = dx.hypot(dy);
        let cos_phi = if n > 0.0 { (c * dx + s * dy) / n } else { 1.0 };
        cos_phi.max(0.0).powf(lobe.exponent).max(MIN_LOBE_GAIN)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
    #[serde(default)]
    pub noise_floor_db: f64,
    #[serde(default)]
    pub noise_std_db: f64,
    #[serde(default)]
    pub ghost_probability: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ghost_probability) {
            return Err(Error::Invariant(format!(
                "ghost probability {} outside [0,1]",
                self.ghost_probability
            )));
        }
        if !(self.noise_std_db >= 0.0) || !self.noise_floor_db.is_finite() {
            return Err(Error::Invariant("noise model needs std >= 0 and a finite floor".into()));
        }
        self.reflectors.iter().try_for_each(Reflector::validate)
    }
}

pub fn reflector_position(r: &Reflector, t: f64) -> Result<Point2> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0,1]")));
    }
    let keys = &r.trajectory;
    let first = keys.first().ok_or_else(|| Error::Invariant("empty trajectory".into()))?;
    if t <= first.t {
        return Ok(first.position);
    }
    for w in keys.windows(2) {
        let (a, b) = (w[0], w[1]);
        if t <= b.t {
            let u = (t - a.t) / (b.t - a.t);
            return Ok([
                a.position[0] + u * (b.position[0] - a.position[0]),
                a.position[1] + u * (b.position[1] - a.position[1]),
            ]);
        }
    }
    Ok(keys[keys.len() - 1].position)
}

/// Smallest positive ray parameter where `origin + s * dir` meets the disc.
fn ray_disc(origin: Point2, dir: Point2, center: Point2, radius: f64) -> Option<f64> {
    let (ox, oy) = (origin[0] - center[0], origin[1] - center[1]);
    let b = ox * dir[0] + oy * dir[1];
    let c = ox * ox + oy * oy - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let near = -b - root;
    if near > 0.0 {
        return Some(near);
    }
    let far = -b + root;
    (far > 0.0).then_some(far)
}

/// First reflector hit along a world-frame ray: (range, effective rcs).
pub fn first_hit(scene: &SceneSpec, t: f64, origin: Point2, dir: Point2) -> Result<Option<(f64, f64)>> {
    let mut best: Option<(f64, f64)> = None;
    for r in &scene.reflectors {
        let center = reflector_position(r, t)?;
        if let Some(s) = ray_disc(origin, dir, center, r.radius) {
            if best.is_none_or(|(b, _)| s < b) {
                best = Some((s, r.rcs * r.gain(center, origin)));
            }
        }
    }
    Ok(best)
}

fn deposit(slots: &mut [Option<f64>], geom: &PolarGeometry, range: f64, rcs: f64) {
    let Some(k) = geom.bin_covering(range) else { return };
    let lo = k.saturating_sub(1);
    let hi = (k + 1).min(geom.n_delta - 1);
    for j in lo..=hi {
        let w = if j == k { 1.0 } else { SHOULDER_WEIGHT };
        let v = w * power_db(rcs, geom.range(j)).expect("rcs and bin range are positive");
        slots[j] = Some(slots[j].map_or(v, |old: f64| old.max(v)));
    }
}

pub fn simulate_scan(
    scene: &SceneSpec,
    pose: &Pose,
    t: f64,
    geom: &PolarGeometry,
    rng_seed: u64,
) -> Result<RangeAzimuthScan> {
    scene.validate()?;
    geom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Normal::new(scene.noise_floor_db, scene.noise_std_db)
        .map_err(|e| Error::Invariant(format!("noise model: {e}")))?;
    let origin = [pose.translation[0], pose.translation[1]];
    let mut values = Vec::with_capacity(geom.bins_per_scan());
    let mut slots = vec![None; geom.n_delta];
    for beam in 0..geom.n_theta {
        let (s, c) = geom.azimuth(beam).sin_cos();
        let d = pose.rotate([c, s, 0.0]);
        let n = d[0].hypot(d[1]);
        let dir = [d[0] / n, d[1] / n];

        slots.iter_mut().for_each(|v| *v = None);
        let ghost_draw: f64 = rng.gen();
        if let Some((range, rcs)) = first_hit(scene, t, origin, dir)? {
            deposit(&mut slots, geom, range, rcs);
            if ghost_draw < scene.ghost_probability {
                deposit(&mut slots, geom, 2.0 * range, rcs / 4.0);
            }
        }
        for slot in &slots {
            let noise_sample = noise.sample(&mut rng);
            let v = slot.unwrap_or(noise_sample);
            // f32-representable so the on-disk payload round-trips exactly
            values.push(v as f32 as f64);
        }
    }
    RangeAzimuthScan::new(*geom, values, t)
}

pub fn ground_truth_bev(scene: &SceneSpec, t: f64, samples_per_reflector: usize) -> Result<BevPointSet> {
    if samples_per_reflector == 0 {
        return Err(Error::Domain("need at least one sample per reflector".into()));
    }
    let mut points = Vec::with_capacity(scene.reflectors.len() * samples_per_reflector);
    for r in &scene.reflectors {
        let c = reflector_position(r, t)?;
        for i in 0..samples_per_reflector {
            let (s, co) = (TAU * i as f64 / samples_per_reflector as f64).sin_cos();
            points.push([c[0] + r.radius * co, c[1] + r.radius * s]);
        }
    }
    Ok(BevPointSet::new(points, BevSource::GroundTruth))
}

fn yaw(p: &Pose) -> f64 {
    p.rotation[1][0].atan2(p.rotation[0][0])
}

/// Ego pose at normalized time `t`; keyframes are spread evenly over [0,1].
pub fn ego_pose_at(ego_path: &[Pose], t: f64) -> Pose {
    if ego_path.len() == 1 {
        return ego_path[0];
    }
    let u = t.clamp(0.0, 1.0) * (ego_path.len() - 1) as f64;
    let i = (u.floor() as usize).min(ego_path.len() - 2);
    let f = u - i as f64;
    let (a, b) = (&ego_path[i], &ego_path[i + 1]);
    if f == 0.0 {
        return *a;
    }
    let mut dyaw = yaw(b) - yaw(a);
    dyaw = (dyaw + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    Pose::planar(
        a.translation[0] + f * (b.translation[0] - a.translation[0]),
        a.translation[1] + f * (b.translation[1] - a.translation[1]),
        yaw(a) + f * dyaw,
    )
}

pub fn frame_times(n_frames: usize) -> Vec<f64> {
    (0..n_frames)
        .map(|k| if k + 1 == n_frames { 1.0 } else { k as f64 / (n_frames - 1) as f64 })
        .collect()
}

pub fn make_sequence(
    scene: &SceneSpec,
    ego_path: &[Pose],
    n_frames: usize,
    geom: &PolarGeometry,
    seed: u64,
) -> Result<SequenceBundle> {
    if n_frames < 2 {
        return Err(Error::Invariant(format!("a sequence needs at least 2 frames, got {n_frames}")));
    }
    if ego_path.is_empty() {
        return Err(Error::Invariant("ego path has no poses".into()));
    }
    let times = frame_times(n_frames);
    let poses: Vec<Pose> = if ego_path.len() == n_frames {
        ego_path.to_vec()
    } else {
        times.iter().map(|&t| ego_pose_at(ego_path, t)).collect()
    };
    let scans = times
        .par_iter()
        .zip(poses.par_iter())
        .enumerate()
        .map(|(k, (&t, pose))| simulate_scan(scene, pose, t, geom, seed.wrapping_add(k as u64)))
        .collect::<Result<Vec<_>>>()?;
    SequenceBundle::new(*geom, scans, poses, times)
}
