use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub(crate) usize);

/// One named parameter tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// All trainable weights, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    index: HashMap<String, usize>,
    /// Number of optimizer steps applied so far.
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, shape: &[usize], value: Vec<f64>) -> Result<BlockId> {
        let n: usize = shape.iter().product();
        if value.len() != n {
            return Err(Error::Shape(format!("block {name}: shape {shape:?} needs {n} values, got {}", value.len())));
        }
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("block {name} registered twice")));
        }
        let id = self.blocks.len();
        self.blocks.push(ParamBlock {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        self.index.insert(name.to_string(), id);
        Ok(BlockId(id))
    }

    pub fn id(&self, name: &str) -> Result<BlockId> {
        self.index
            .get(name)
            .map(|&i| BlockId(i))
            .ok_or_else(|| Error::Contract(format!("no parameter block named {name}")))
    }

    pub fn block(&self, id: BlockId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn get(&self, name: &str) -> Result<&ParamBlock> {
        self.id(name).map(|id| self.block(id))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamBlock> {
        let id = self.id(name)?;
        Ok(self.block_mut(id))
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn num_params(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// True when every value, gradient and moment is finite.
    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| {
            b.value.iter().chain(&b.grad).chain(&b.m).chain(&b.v).all(|x| x.is_finite())
        })
    }
}
