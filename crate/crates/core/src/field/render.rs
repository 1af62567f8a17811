use std::f64::consts::LN_10;

use rayon::prelude::*;

use crate::autodiff::{Matrix, ParamStore, Tape, Var};
use crate::dataio::SceneScale;
use crate::error::{Error, Result};
use crate::field::network::{Field, FieldVars, Gumbel};
use crate::radar::{bin_to_local, Point3, PolarGeometry, Pose, RangeAzimuthScan};

/// Occupancy-gated power of one bin: `α · log₁₀(σ / δ²)`.
pub fn render_power(alpha: f64, sigma: f64, range: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("occupancy {alpha} outside [0,1]")));
    }
    if !(sigma > 0.0) || !(range > 0.0) {
        return Err(Error::Domain(format!("render needs sigma > 0 and range > 0, got ({sigma}, {range})")));
    }
    Ok(alpha * (sigma / (range * range)).log10())
}

/// Field queries for a set of bins seen from one pose.
#[derive(Debug, Clone, Default)]
pub struct BinQueries {
    /// Row-major `n × 3`, in normalized coordinates.
    pub points: Vec<f64>,
    pub dirs: Vec<Point3>,
    /// Metric bin-center ranges.
    pub ranges: Vec<f64>,
}

impl BinQueries {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Appends bin `(beam, bin)` seen from `pose`, which is expressed in
    /// normalized coordinates.
    pub fn push(&mut self, geom: &PolarGeometry, pose: &Pose, scale: &SceneScale, beam: usize, bin: usize) -> Result<()> {
        let local = bin_to_local(beam, bin, geom)?;
        let range = geom.range(bin);
        let offset = pose.rotate([local[0] * scale.scale, local[1] * scale.scale, 0.0]);
        for a in 0..3 {
            self.points.push(pose.translation[a] + offset[a]);
        }
        let d = pose.rotate([local[0] / range, local[1] / range, 0.0]);
        self.dirs.push(d);
        self.ranges.push(range);
        Ok(())
    }

    pub fn for_beams(geom: &PolarGeometry, pose: &Pose, scale: &SceneScale, beams: std::ops::Range<usize>) -> Result<Self> {
        let mut q = Self::default();
        for j in beams {
            for k in 0..geom.n_delta {
                q.push(geom, pose, scale, j, k)?;
            }
        }
        Ok(q)
    }
}

/// Rendered power column for recorded field outputs.
pub fn render_on_tape(tape: &mut Tape, vars: &FieldVars, ranges: &[f64]) -> Result<Var> {
    let log_sigma = tape.scale(vars.log_sigma, 1.0 / LN_10);
    let spread = tape.constant(Matrix::column(ranges.iter().map(|r| 2.0 * r.log10()).collect()));
    let log_power = tape.sub(log_sigma, spread)?;
    tape.mul(vars.alpha, log_power)
}

/// Records the field on `tape` for the given queries and returns
/// `(field outputs, rendered powers)`.
pub fn render_queries(
    field: &Field,
    tape: &mut Tape,
    store: &ParamStore,
    queries: &BinQueries,
    times: &[f64],
    gumbel: &mut Gumbel,
) -> Result<(Var, FieldVars, Var)> {
    let points = tape.constant(Matrix::from_vec(queries.len(), 3, queries.points.clone())?);
    let vars = field.forward(tape, store, points, times, &queries.dirs, gumbel)?;
    let power = render_on_tape(tape, &vars, &queries.ranges)?;
    Ok((points, vars, power))
}

const BEAMS_PER_CHUNK: usize = 8;

/// Renders a full scan deterministically at time `t ∈ [0, 1]` from a pose in
/// normalized coordinates.
pub fn render_scan(
    field: &Field,
    store: &ParamStore,
    pose: &Pose,
    t: f64,
    geom: &PolarGeometry,
    scale: &SceneScale,
    timestamp: f64,
) -> Result<RangeAzimuthScan> {
    geom.validate()?;
    pose.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0,1]")));
    }
    let chunks: Vec<std::ops::Range<usize>> = (0..geom.n_theta)
        .step_by(BEAMS_PER_CHUNK)
        .map(|s| s..(s + BEAMS_PER_CHUNK).min(geom.n_theta))
        .collect();
    let parts = chunks
        .into_par_iter()
        .map(|beams| -> Result<Vec<f64>> {
            let q = BinQueries::for_beams(geom, pose, scale, beams)?;
            let mut tape = Tape::new();
            let times = vec![t; q.len()];
            let (_, _, power) = render_queries(field, &mut tape, store, &q, &times, &mut field.eval_gumbel())?;
            Ok(tape.value(power).data.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = parts.into_iter().flatten().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("rendered a non-finite power".into()));
    }
    RangeAzimuthScan::new(*geom, values, timestamp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::relative_error;
    use crate::field::config::{FieldConfig, HashGridConfig};
    use crate::radar::power_db;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn power_cases() {
        assert_eq!(render_power(0.0, 5.0, 12.0).unwrap(), 0.0);
        assert!((render_power(1.0, 100.0, 10.0).unwrap() - 0.0).abs() < 1e-15);
        assert!((render_power(0.5, 100.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(render_power(1.2, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(render_power(0.5, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(render_power(0.5, 1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn full_occupancy_matches_power_law() {
        for (s, r) in [(3.0, 7.5), (0.01, 40.0), (250.0, 25.25)] {
            assert!((render_power(1.0, s, r).unwrap() - power_db(s, r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn fresh_field_renders_flat() {
        // α = 0.5 and σ = 1 everywhere: P = -log₁₀ δ
        let geom = PolarGeometry::new(16, 8, 0.5, 50).unwrap();
        let field = Field::new(FieldConfig::default()).unwrap();
        let store = field.init_params(0).unwrap();
        let scale = SceneScale { center: [0.0; 3], scale: 1.0 / geom.max_range() };
        let scan = render_scan(&field, &store, &Pose::identity(), 0.5, &geom, &scale, 0.0).unwrap();
        for j in 0..16 {
            for k in 0..8 {
                let want = -geom.range(k).log10();
                assert!((scan.get(j, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_gate_renders_zero() {
        let geom = PolarGeometry::new(16, 8, 0.5, 50).unwrap();
        let field = Field::new(FieldConfig::default()).unwrap();
        let mut store = field.init_params(0).unwrap();
        store.get_mut(&field.alpha_output_bias()).unwrap().value[0] = -60.0;
        let scale = SceneScale { center: [0.0; 3], scale: 1.0 / geom.max_range() };
        let scan = render_scan(&field, &store, &Pose::identity(), 0.5, &geom, &scale, 0.0).unwrap();
        assert!(scan.values.iter().all(|v| v.abs() < 1e-30));
    }

    #[test]
    fn render_is_chunking_independent() {
        let geom = PolarGeometry::new(20, 6, 1.0, 3).unwrap();
        let cfg = FieldConfig {
            hash: HashGridConfig { levels: 2, table_size: 256, features: 2, base_resolution: 4, growth: 2.0 },
            ..FieldConfig::default()
        };
        let field = Field::new(cfg).unwrap();
        let mut store = field.init_params(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for b in store.blocks_mut() {
            b.value.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let scale = SceneScale { center: [0.0; 3], scale: 1.0 / 12.0 };
        let pose = Pose::planar(0.1, -0.05, 0.3);
        let scan = render_scan(&field, &store, &pose, 0.25, &geom, &scale, 1.0).unwrap();
        for (j, k) in [(0, 0), (7, 3), (19, 5), (12, 1)] {
            let mut q = BinQueries::default();
            q.push(&geom, &pose, &scale, j, k).unwrap();
            let out = field.query(&store, [q.points[0], q.points[1], q.points[2]], 0.25, q.dirs[0], &mut field.eval_gumbel()).unwrap();
            let want = render_power(out.alpha, out.sigma, geom.range(k)).unwrap();
            assert!((scan.get(j, k) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn render_gradient_matches_finite_differences() {
        let cfg = FieldConfig {
            hash: HashGridConfig { levels: 2, table_size: 64, features: 2, base_resolution: 3, growth: 2.0 },
            time_frequencies: 2,
            time_hidden: vec![4],
            time_width: 3,
            chi_hidden: vec![6],
            chi_width: 5,
            alpha_hidden: vec![4],
            sigma_hidden: vec![4],
            flow_hidden: vec![4],
            sh_degree: 2,
            ..FieldConfig::default()
        };
        let field = Field::new(cfg).unwrap();
        let mut store = field.init_params(11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for b in store.blocks_mut() {
            b.value.iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
        }
        let geom = PolarGeometry::new(8, 4, 1.0, 2).unwrap();
        let scale = SceneScale { center: [0.0; 3], scale: 1.0 / 8.0 };
        let q = BinQueries::for_beams(&geom, &Pose::planar(0.05, 0.02, 0.4), &scale, 0..8).unwrap();
        let times = vec![0.37; q.len()];
        let loss = |store: &ParamStore| -> (Tape, Var) {
            let mut tape = Tape::new();
            let (_, _, p) = render_queries(&field, &mut tape, store, &q, &times, &mut Gumbel::deterministic(0.6)).unwrap();
            let sq = tape.square(p);
            let m = tape.mean(sq);
            (tape, m)
        };
        let (mut tape, m) = loss(&store);
        tape.backward(m, &mut store).unwrap();
        let grads: Vec<(String, Vec<f64>)> = store.blocks().iter().map(|b| (b.name.clone(), b.grad.clone())).collect();
        let mut checked = 0;
        for (name, g) in &grads {
            let n = g.len();
            for i in [0, n / 2, n - 1] {
                if g[i].abs() < 1e-7 {
                    continue;
                }
                let h = 1e-6;
                let orig = store.get(name).unwrap().value[i];
                store.get_mut(name).unwrap().value[i] = orig + h;
                let (t1, m1) = loss(&store);
                store.get_mut(name).unwrap().value[i] = orig - h;
                let (t2, m2) = loss(&store);
                store.get_mut(name).unwrap().value[i] = orig;
                let numeric = (t1.value(m1).data[0] - t2.value(m2).data[0]) / (2.0 * h);
                assert!(relative_error(g[i], numeric) < 1e-4, "{name}[{i}]: {} vs {numeric}", g[i]);
                checked += 1;
            }
        }
        assert!(checked > 10, "only {checked} gradients checked");
    }
}
