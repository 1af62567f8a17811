//! The spatiotemporal radar field and its differentiable renderer.

pub mod checkpoint;
pub mod config;
pub mod encoding;
pub mod gumbel;
pub mod hash;
pub mod network;
pub mod render;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{FieldConfig, HashGridConfig};
pub use encoding::{sh_encode, time_features};
pub use gumbel::{gumbel_sigmoid, sigmoid, GumbelMode};
pub use hash::{hash_encode, hash_index, HASH_BLOCK};
pub use network::{Field, FieldOutput, FieldVars, Gumbel, WarpPresence, WarpedVars};
pub use render::{render_on_tape, render_power, render_queries, render_scan, BinQueries};
