//! Diminishing step sizes `ζ^k = ζ0 / (k+1)^p`.
//!
//! For `p ∈ (1/2, 1]` the sequence is not summable while its squares are,
//! which is what both network iterations need.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub zeta0: f64,
    pub exponent: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { zeta0: 1.0, exponent: 1.0 }
    }
}

impl StepSchedule {
    pub fn new(zeta0: f64, exponent: f64) -> Result<Self> {
        let s = Self { zeta0, exponent };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta0 > 0.0 && self.zeta0.is_finite()) {
            return Err(Error::Parameter(format!("zeta0 must be positive, got {}", self.zeta0)));
        }
        if !(self.exponent > 0.5 && self.exponent <= 1.0) {
            return Err(Error::Parameter(format!("exponent must lie in (1/2, 1], got {}", self.exponent)));
        }
        Ok(())
    }

    /// Step for round `k` (rounds count from zero).
    pub fn step(&self, k: u64) -> f64 {
        let denom = (k as f64 + 1.0).powf(self.exponent);
        self.zeta0 / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_default() {
        let s = StepSchedule::default();
        assert_eq!(s.step(0), 1.0);
        assert_eq!(s.step(3), 0.25);
    }

    #[test]
    fn rejects_non_summable_squares() {
        assert!(StepSchedule::new(1.0, 0.5).is_err());
        assert!(StepSchedule::new(1.0, 1.5).is_err());
        assert!(StepSchedule::new(0.0, 1.0).is_err());
        assert!(StepSchedule::new(2.0, 0.75).is_ok());
    }

    #[test]
    fn partial_sums_diverge_logarithmically() {
        let s = StepSchedule::default();
        let mut sum = 0.0;
        for k in 0..10_000u64 {
            sum += s.step(k);
            assert!(sum >= ((k + 1) as f64 + 1.0).ln() - 1e-12);
        }
    }
}
