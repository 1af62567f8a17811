//! Spatiotemporal radar neural fields.
//!
//! A 4D occupancy and RCS field is fit to a sequence of range-azimuth
//! scans through a differentiable radar power model, with scene-flow
//! warping keeping occupancy consistent between adjacent frames.

pub mod autodiff;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod field;
pub mod radar;
pub mod synth;
pub mod train;

pub use dataio::{normalize_coordinates, read_sequence, write_sequence, SceneScale, SequenceBundle};
pub use error::{Error, Result};
pub use eval::{BevPointSet, BevSource};
pub use radar::{bin_to_local, local_to_world, power_db, view_direction, Point2, Point3, PolarGeometry, Pose, RangeAzimuthScan};
