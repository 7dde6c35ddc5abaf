//! Diminishing adaptation schedule shared by the MGP and CUSP samplers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptation fires at iteration `g` with probability
/// `min(1, exp(alpha0 + alpha1 * g))`, and never before `burn_in_gate`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSchedule {
    pub alpha0: f64,
    pub alpha1: f64,
    pub burn_in_gate: usize,
}

impl AdaptationSchedule {
    pub fn new(alpha0: f64, alpha1: f64, burn_in_gate: usize) -> Result<Self> {
        let s = Self {
            alpha0,
            alpha1,
            burn_in_gate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha1.is_nan() || self.alpha1 >= 0.0 || !self.alpha0.is_finite() {
            return Err(Error::param(format!(
                "adaptation needs finite alpha0 and alpha1 < 0, got ({}, {})",
                self.alpha0, self.alpha1
            )));
        }
        Ok(())
    }

    pub fn probability(&self, g: usize) -> f64 {
        adaptation_probability(g, self)
    }
}

pub fn adaptation_probability(g: usize, sched: &AdaptationSchedule) -> f64 {
    if g < sched.burn_in_gate {
        return 0.0;
    }
    (sched.alpha0 + sched.alpha1 * g as f64).exp().min(1.0)
}
