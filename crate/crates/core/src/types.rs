//! Task-space points and policy parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// A point (or displacement) in the task-space, `n_s` real coordinates.
///
/// Both built-in tasks use a 2-D task-space measured in meters, but nothing
/// in the archive or the GP machinery assumes `n_s == 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPoint {
    pub coords: Vec<f64>,
}

impl TaskPoint {
    /// Builds a point, rejecting non-finite coordinates.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("task point must have n_s >= 1".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "task point coordinates must be finite".into(),
            ));
        }
        Ok(Self { coords })
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Self { coords: vec![x, y] }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Squared Euclidean distance to `other`.
    pub fn sq_dist(&self, other: &TaskPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn dist(&self, other: &TaskPoint) -> f64 {
        self.sq_dist(other).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &TaskPoint) -> TaskPoint {
        TaskPoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &TaskPoint) -> TaskPoint {
        TaskPoint {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Normalized parameters of an elementary policy, every component in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidInput("policy must have n_theta >= 1".into()));
        }
        if theta.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
            return Err(Error::InvalidInput(
                "policy components must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}
