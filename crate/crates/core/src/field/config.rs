use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    /// Entries per level; a power of two.
    pub table_size: usize,
    pub features: usize,
    pub base_resolution: usize,
    pub growth: f64,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self { levels: 8, table_size: 1 << 14, features: 2, base_resolution: 16, growth: 1.5 }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features == 0 {
            return Err(Error::Invariant("hash grid needs at least one level and feature".into()));
        }
        if self.table_size < 2 || !self.table_size.is_power_of_two() {
            return Err(Error::Invariant(format!("table size {} is not a power of two >= 2", self.table_size)));
        }
        if self.base_resolution < 2 || !(self.growth > 1.0) {
            return Err(Error::Invariant(format!(
                "need base resolution >= 2 and growth > 1, got {} and {}",
                self.base_resolution, self.growth
            )));
        }
        Ok(())
    }

    /// Grid resolution `⌊N_min · b^ℓ⌋` of level `ℓ`.
    pub fn resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * self.growth.powi(level as i32)).floor() as usize
    }

    pub fn output_width(&self) -> usize {
        self.levels * self.features
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub hash: HashGridConfig,
    /// Sinusoid octaves of the time encoding.
    pub time_frequencies: usize,
    pub time_hidden: Vec<usize>,
    pub time_width: usize,
    /// When false the network never sees time (static-field ablation).
    pub use_time: bool,
    pub chi_hidden: Vec<usize>,
    pub chi_width: usize,
    pub alpha_hidden: Vec<usize>,
    pub sigma_hidden: Vec<usize>,
    pub flow_hidden: Vec<usize>,
    pub sh_degree: usize,
    /// Gumbel temperature, annealed linearly from start to end.
    pub tau_start: f64,
    pub tau_end: f64,
    pub hash_init_range: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            hash: HashGridConfig::default(),
            time_frequencies: 3,
            time_hidden: vec![16],
            time_width: 8,
            use_time: true,
            chi_hidden: vec![32],
            chi_width: 32,
            alpha_hidden: vec![32],
            sigma_hidden: vec![32],
            flow_hidden: vec![32],
            sh_degree: 3,
            tau_start: 1.0,
            tau_end: 0.3,
            hash_init_range: 1e-4,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        self.hash.validate()?;
        let widths = [self.time_width, self.chi_width]
            .into_iter()
            .chain(self.time_hidden.iter().copied())
            .chain(self.chi_hidden.iter().copied())
            .chain(self.alpha_hidden.iter().copied())
            .chain(self.sigma_hidden.iter().copied())
            .chain(self.flow_hidden.iter().copied());
        if widths.into_iter().any(|w| w == 0) || self.time_frequencies == 0 {
            return Err(Error::Invariant("all layer widths and the frequency count must be >= 1".into()));
        }
        if !(self.tau_start > 0.0) || !(self.tau_end > 0.0) {
            return Err(Error::Invariant("Gumbel temperature must be positive".into()));
        }
        if self.sh_degree > 3 {
            return Err(Error::Invariant(format!("SH degree {} exceeds 3", self.sh_degree)));
        }
        Ok(())
    }

    /// Temperature at training progress `frac ∈ [0, 1]`.
    pub fn tau_at(&self, frac: f64) -> f64 {
        let f = frac.clamp(0.0, 1.0);
        self.tau_start + f * (self.tau_end - self.tau_start)
    }

    pub fn sh_width(&self) -> usize {
        (self.sh_degree + 1) * (self.sh_degree + 1)
    }

    pub fn chi_input_width(&self) -> usize {
        self.hash.output_width() + if self.use_time { self.time_width } else { 0 }
    }
}
