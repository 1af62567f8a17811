//! The field network: latent feature from hash grid plus time embedding,
//! then occupancy, RCS and scene-flow heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{mlp_forward, register_mlp, Activation, Matrix, MlpSpec, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::field::config::FieldConfig;
use crate::field::encoding::{sh_encode, time_features};
use crate::field::gumbel::{gumbel_difference, GumbelMode};
use crate::field::hash::{hash_encode, register_hash_table};
use crate::radar::Point3;

pub const TIME_MLP: &str = "time";
pub const CHI_MLP: &str = "chi";
pub const ALPHA_MLP: &str = "alpha";
pub const SIGMA_MLP: &str = "sigma";
pub const FLOW_MLP: &str = "flow";

/// Occupancy activation state: mode, temperature and the noise stream.
pub struct Gumbel {
    pub mode: GumbelMode,
    pub tau: f64,
    rng: ChaCha8Rng,
    last: Vec<f64>,
    replay: bool,
}

impl Gumbel {
    pub fn deterministic(tau: f64) -> Self {
        Self { mode: GumbelMode::Deterministic, tau, rng: ChaCha8Rng::seed_from_u64(0), last: Vec::new(), replay: false }
    }

    pub fn stochastic(tau: f64, seed: u64) -> Self {
        Self { mode: GumbelMode::Stochastic, tau, rng: ChaCha8Rng::seed_from_u64(seed), last: Vec::new(), replay: false }
    }

    /// A sampler that repeats this one's most recent draw, so several
    /// queries of the same rows see identical noise.
    fn replaying(&self) -> Self {
        Self { mode: self.mode, tau: self.tau, rng: self.rng.clone(), last: self.last.clone(), replay: true }
    }

    fn noise(&mut self, n: usize) -> Option<Vec<f64>> {
        match self.mode {
            GumbelMode::Stochastic if self.replay && self.last.len() == n => Some(self.last.clone()),
            GumbelMode::Stochastic => {
                self.last = (0..n).map(|_| gumbel_difference(&mut self.rng)).collect();
                Some(self.last.clone())
            }
            GumbelMode::Deterministic => None,
        }
    }
}

/// Per-query outputs, as recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct FieldVars {
    pub chi: Var,
    pub logit: Var,
    pub alpha: Var,
    /// ln σ; the RCS itself is `exp` of this column.
    pub log_sigma: Var,
    pub flow: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct WarpedVars {
    pub alpha_prev: Var,
    pub alpha_next: Var,
}

/// Which adjacent-frame queries exist; boundary frames lack one side.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPresence {
    pub prev: Vec<bool>,
    pub next: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput {
    pub alpha: f64,
    pub sigma: f64,
    pub flow: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct Field {
    pub cfg: FieldConfig,
    time: MlpSpec,
    chi: MlpSpec,
    alpha: MlpSpec,
    sigma: MlpSpec,
    flow: MlpSpec,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> MlpSpec {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    MlpSpec::new(w, Activation::Relu)
}

impl Field {
    pub fn new(cfg: FieldConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            time: widths(2 * cfg.time_frequencies, &cfg.time_hidden, cfg.time_width),
            chi: widths(cfg.chi_input_width(), &cfg.chi_hidden, cfg.chi_width),
            alpha: widths(cfg.chi_width, &cfg.alpha_hidden, 1),
            sigma: widths(cfg.chi_width + cfg.sh_width(), &cfg.sigma_hidden, 1),
            flow: widths(cfg.chi_width, &cfg.flow_hidden, 6),
            cfg,
        })
    }

    /// Fresh parameters: small uniform hash rows, He-initialized hidden
    /// layers, and zeroed head outputs so the field starts at α = 0.5,
    /// σ = 1 and zero flow.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        register_hash_table(&mut store, &self.cfg.hash, self.cfg.hash_init_range, &mut rng)?;
        if self.cfg.use_time {
            register_mlp(&mut store, TIME_MLP, &self.time, false, &mut rng)?;
        }
        register_mlp(&mut store, CHI_MLP, &self.chi, false, &mut rng)?;
        register_mlp(&mut store, ALPHA_MLP, &self.alpha, true, &mut rng)?;
        register_mlp(&mut store, SIGMA_MLP, &self.sigma, true, &mut rng)?;
        register_mlp(&mut store, FLOW_MLP, &self.flow, true, &mut rng)?;
        Ok(store)
    }

    /// Latent feature χ for each row of `points` at the matching time.
    pub fn latent(&self, tape: &mut Tape, store: &ParamStore, points: Var, times: &[f64]) -> Result<Var> {
        let rows = tape.value(points).rows;
        if times.len() != rows {
            return Err(Error::Shape(format!("{rows} points but {} times", times.len())));
        }
        let spatial = hash_encode(tape, store, points, &self.cfg.hash)?;
        let input = if self.cfg.use_time {
            let k = self.cfg.time_frequencies;
            let mut raw = Vec::with_capacity(rows * 2 * k);
            for &t in times {
                raw.extend(time_features(t, k)?);
            }
            let raw = tape.constant(Matrix::from_vec(rows, 2 * k, raw)?);
            let temporal = mlp_forward(tape, store, TIME_MLP, raw, &self.time)?;
            tape.concat(&[spatial, temporal])?
        } else {
            for &t in times {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::Domain(format!("time {t} outside [0,1]")));
                }
            }
            spatial
        };
        mlp_forward(tape, store, CHI_MLP, input, &self.chi)
    }

    /// Occupancy logit and Gumbel-Sigmoid activation from χ.
    pub fn occupancy(&self, tape: &mut Tape, store: &ParamStore, chi: Var, gumbel: &mut Gumbel) -> Result<(Var, Var)> {
        let logit = mlp_forward(tape, store, ALPHA_MLP, chi, &self.alpha)?;
        let rows = tape.value(logit).rows;
        let pre = match gumbel.noise(rows) {
            Some(noise) => {
                let noise = tape.constant(Matrix::column(noise));
                tape.add(logit, noise)?
            }
            None => logit,
        };
        let scaled = tape.scale(pre, 1.0 / gumbel.tau);
        Ok((logit, tape.sigmoid(scaled)))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        points: Var,
        times: &[f64],
        dirs: &[Point3],
        gumbel: &mut Gumbel,
    ) -> Result<FieldVars> {
        let chi = self.latent(tape, store, points, times)?;
        let (logit, alpha) = self.occupancy(tape, store, chi, gumbel)?;
        let sw = self.cfg.sh_width();
        let mut sh = Vec::with_capacity(dirs.len() * sw);
        for d in dirs {
            sh.extend(sh_encode(*d, self.cfg.sh_degree)?);
        }
        let sh = tape.constant(Matrix::from_vec(dirs.len(), sw, sh)?);
        let sigma_in = tape.concat(&[chi, sh])?;
        let log_sigma = mlp_forward(tape, store, SIGMA_MLP, sigma_in, &self.sigma)?;
        let flow = mlp_forward(tape, store, FLOW_MLP, chi, &self.flow)?;
        Ok(FieldVars { chi, logit, alpha, log_sigma, flow })
    }

    /// Occupancy of each point warped by its predicted offsets into the
    /// previous and next frames. Sides that would leave `[0, 1]` in time are
    /// queried at the clamped time and reported absent.
    pub fn warped_occupancy(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        points: Var,
        flow: Var,
        times: &[f64],
        dt: f64,
        gumbel: &mut Gumbel,
    ) -> Result<(WarpedVars, WarpPresence)> {
        const EPS: f64 = 1e-9;
        let prev_t: Vec<f64> = times.iter().map(|&t| (t - dt).max(0.0)).collect();
        let next_t: Vec<f64> = times.iter().map(|&t| (t + dt).min(1.0)).collect();
        let presence = WarpPresence {
            prev: times.iter().map(|&t| t - dt >= -EPS).collect(),
            next: times.iter().map(|&t| t + dt <= 1.0 + EPS).collect(),
        };

        // warped rows reuse the center noise: consistency should compare
        // occupancies, not independent samples of it
        let mut shared = gumbel.replaying();
        let back = tape.slice(flow, 0, 3)?;
        let xp = tape.add(points, back)?;
        let chi_p = self.latent(tape, store, xp, &prev_t)?;
        let (_, alpha_prev) = self.occupancy(tape, store, chi_p, &mut shared)?;

        let fwd = tape.slice(flow, 3, 3)?;
        let xn = tape.add(points, fwd)?;
        let chi_n = self.latent(tape, store, xn, &next_t)?;
        let (_, alpha_next) = self.occupancy(tape, store, chi_n, &mut shared)?;
        Ok((WarpedVars { alpha_prev, alpha_next }, presence))
    }

    /// Single-query convenience wrapper around [`Field::forward`].
    pub fn query(&self, store: &ParamStore, x: Point3, t: f64, d: Point3, gumbel: &mut Gumbel) -> Result<FieldOutput> {
        let mut tape = Tape::new();
        let p = tape.constant(Matrix::from_vec(1, 3, x.to_vec())?);
        let vars = self.forward(&mut tape, store, p, &[t], &[d], gumbel)?;
        let f = &tape.value(vars.flow).data;
        Ok(FieldOutput {
            alpha: tape.value(vars.alpha).data[0],
            sigma: tape.value(vars.log_sigma).data[0].exp(),
            flow: [f[0], f[1], f[2], f[3], f[4], f[5]],
        })
    }

    /// Name of the block holding the occupancy logit's output bias.
    pub fn alpha_output_bias(&self) -> String {
        format!("{ALPHA_MLP}.{}.bias", self.alpha.layers() - 1)
    }

    /// Name of the block holding the ln σ output bias.
    pub fn sigma_output_bias(&self) -> String {
        format!("{SIGMA_MLP}.{}.bias", self.sigma.layers() - 1)
    }

    /// Deterministic occupancy for many points at one time.
    pub fn occupancy_at(&self, store: &ParamStore, points: &[Point3], t: f64) -> Result<Vec<f64>> {
        const CHUNK: usize = 4096;
        let parts = points
            .par_chunks(CHUNK)
            .map(|chunk| -> Result<Vec<f64>> {
                let mut tape = Tape::new();
                let flat = chunk.iter().flat_map(|p| p.iter().copied()).collect();
                let p = tape.constant(Matrix::from_vec(chunk.len(), 3, flat)?);
                let chi = self.latent(&mut tape, store, p, &vec![t; chunk.len()])?;
                let (_, alpha) = self.occupancy(&mut tape, store, chi, &mut self.eval_gumbel())?;
                Ok(tape.value(alpha).data.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().flatten().collect())
    }

    /// Deterministic occupancy at the final training temperature.
    pub fn eval_gumbel(&self) -> Gumbel {
        Gumbel::deterministic(self.cfg.tau_end)
    }
}
