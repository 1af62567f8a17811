use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BevSource {
    Field,
    Cfar,
    GroundTruth,
}

/// Bird's-eye-view points in world meters.
#[derive(Debug, Clone, PartialEq)]
pub struct BevPointSet {
    pub points: Vec<Point2>,
    pub source: BevSource,
    /// Set when the producer expected points but found none.
    pub degenerate: bool,
}

impl BevPointSet {
    pub fn new(points: Vec<Point2>, source: BevSource) -> Self {
        let degenerate = points.is_empty();
        Self { points, source, degenerate }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,y")?;
        for p in &self.points {
            writeln!(out, "{},{}", p[0], p[1])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, source: BevSource) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => points.push([x, y]),
                _ => {
                    return Err(Error::Invariant(format!("{}: bad row {}", path.display(), i + 1)));
                }
            }
        }
        Ok(Self::new(points, source))
    }
}
