use serde::{Deserialize, Serialize};

use crate::C64;

/// How a trace was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    /// `"cce"` or `"exact"`.
    pub method: String,
    pub cce_order: usize,
    pub pair_cutoff: Option<f64>,
    pub seed: Option<u64>,
    pub pulse_k: u32,
    pub sw_order: u32,
    pub clusters: usize,
    /// Time points where a cluster contribution was replaced by one because
    /// its sub-cluster denominator vanished.
    pub guard_hits: usize,
}

/// `L^{αβ}(t)` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceTrace {
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub pair: (usize, usize),
    pub meta: TraceMeta,
}

impl CoherenceTrace {
    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// First grid time at which |L| drops below `level`.
    pub fn time_below(&self, level: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.values)
            .find(|(_, v)| v.norm() < level)
            .map(|(t, _)| *t)
    }

    /// Largest |L_self − L_other| over the common grid.
    pub fn max_deviation(&self, other: &CoherenceTrace) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}
