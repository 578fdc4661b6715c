//! JSON map descriptor consumed by `run` and `bench`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use aprol_core::nav::Rect;

use crate::{CliError, Result};

/// On-disk world description: bounds, grid resolution, obstacle rectangles,
/// the goal and an optional start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapFile {
    /// `[[x_min, x_max], [y_min, y_max]]`
    pub bounds: [[f64; 2]; 2],
    pub resolution: f64,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    pub goal: [f64; 2],
    #[serde(default)]
    pub start: Option<[f64; 2]>,
}

impl MapFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("map file {}: {e}", path.display())))
    }

    pub fn bounds_pairs(&self) -> [(f64, f64); 2] {
        [
            (self.bounds[0][0], self.bounds[0][1]),
            (self.bounds[1][0], self.bounds[1][1]),
        ]
    }
}
