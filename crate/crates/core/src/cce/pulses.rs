use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the total evolution time is split between pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// 2k equal segments (a single free segment when k = 0).
    Uniform,
    /// Explicit segment fractions of the total time; 2k entries (1 when
    /// k = 0), non-negative, summing to one.
    Fractions(Vec<f64>),
}

/// `k` instantaneous π pulses. Free segments alternate between the two
/// conditional Hamiltonians, starting with the one of the propagated
/// branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub k: u32,
    pub schedule: Schedule,
}

impl PulseSequence {
    pub fn free_induction() -> Self {
        PulseSequence {
            k: 0,
            schedule: Schedule::Uniform,
        }
    }

    pub fn hahn_echo() -> Self {
        Self::cpmg(1)
    }

    pub fn cpmg(k: u32) -> Self {
        PulseSequence {
            k,
            schedule: Schedule::Uniform,
        }
    }

    pub fn with_fractions(k: u32, fractions: Vec<f64>) -> Result<Self> {
        let p = PulseSequence {
            k,
            schedule: Schedule::Fractions(fractions),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_segments(&self) -> usize {
        if self.k == 0 {
            1
        } else {
            2 * self.k as usize
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.schedule, Schedule::Uniform)
    }

    pub fn validate(&self) -> Result<()> {
        if let Schedule::Fractions(f) = &self.schedule {
            if f.len() != self.n_segments() {
                return Err(Error::Config(format!(
                    "{} pulses need {} segment fractions, got {}",
                    self.k,
                    self.n_segments(),
                    f.len()
                )));
            }
            if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Config("segment fractions must be finite and non-negative".into()));
            }
            let total: f64 = f.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("segment fractions sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    /// Free-evolution segment lengths for total time `t`; they sum to `t`
    /// exactly (the last segment absorbs rounding).
    pub fn segments(&self, t: f64) -> Vec<f64> {
        let n = self.n_segments();
        let mut out: Vec<f64> = match &self.schedule {
            Schedule::Uniform => vec![t / n as f64; n],
            Schedule::Fractions(f) => f.iter().map(|x| x * t).collect(),
        };
        let head: f64 = out[..n - 1].iter().sum();
        out[n - 1] = (t - head).max(0.0);
        out
    }
}

/// Uniform time grid from zero.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hahn_echo_splits_in_half() {
        assert_eq!(PulseSequence::hahn_echo().segments(3.0), vec![1.5, 1.5]);
        assert_eq!(PulseSequence::free_induction().segments(3.0), vec![3.0]);
    }

    #[test]
    fn segments_sum_exactly() {
        let p = PulseSequence::cpmg(3);
        for &t in &[0.1, 1.0 / 3.0, 7.77] {
            let s = p.segments(t);
            assert_eq!(s.len(), 6);
            assert_eq!(s.iter().sum::<f64>(), t);
        }
    }

    #[test]
    fn fractions_validated() {
        assert!(PulseSequence::with_fractions(1, vec![0.25, 0.75]).is_ok());
        assert!(PulseSequence::with_fractions(1, vec![0.5]).is_err());
        assert!(PulseSequence::with_fractions(1, vec![0.6, 0.6]).is_err());
        assert!(PulseSequence::with_fractions(1, vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let g = uniform_grid(2.0, 5);
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
