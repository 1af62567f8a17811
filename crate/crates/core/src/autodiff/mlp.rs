use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::ParamStore;
use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Layer widths including input and output, e.g. `[24, 32, 32]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation) -> Self {
        Self { widths, hidden }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated spec has widths")
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Invariant(format!("invalid MLP widths {:?}", self.widths)));
        }
        Ok(())
    }
}

fn weight_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.{layer}.weight")
}

fn bias_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.{layer}.bias")
}

/// Registers `prefix.{i}.weight` (`[out, in]`) and `prefix.{i}.bias`.
///
/// Weights use He-uniform initialization and biases start at zero. With
/// `zero_output` the last layer starts entirely at zero.
pub fn register_mlp(
    store: &mut ParamStore,
    prefix: &str,
    spec: &MlpSpec,
    zero_output: bool,
    rng: &mut impl Rng,
) -> Result<()> {
    spec.validate()?;
    for l in 0..spec.layers() {
        let (inp, out) = (spec.widths[l], spec.widths[l + 1]);
        let last = l + 1 == spec.layers();
        let bound = (6.0 / inp as f64).sqrt();
        let w = if last && zero_output {
            vec![0.0; out * inp]
        } else {
            (0..out * inp).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        store.register(&weight_name(prefix, l), &[out, inp], w)?;
        store.register(&bias_name(prefix, l), &[out], vec![0.0; out])?;
    }
    Ok(())
}

pub fn mlp_forward(tape: &mut Tape, store: &ParamStore, prefix: &str, input: Var, spec: &MlpSpec) -> Result<Var> {
    let cols = tape.value(input).cols;
    if cols != spec.input_width() {
        return Err(Error::Shape(format!("{prefix}: expected {} inputs, got {cols}", spec.input_width())));
    }
    let mut h = input;
    for l in 0..spec.layers() {
        let w = store.id(&weight_name(prefix, l))?;
        let b = store.id(&bias_name(prefix, l))?;
        h = tape.linear(h, store, w, b)?;
        if l + 1 < spec.layers() && spec.hidden == Activation::Relu {
            h = tape.relu(h);
        }
    }
    Ok(h)
}
