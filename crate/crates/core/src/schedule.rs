use crate::error::{Error, Result};

/// Gain sequence `γ_t = a / (1 + b·t^{1/2+ε})`.
///
/// With `b > 0` and `0 < ε ≤ ½` the exponent lies in `(½, 1]`, so
/// `Σγ_t = ∞` and `Σγ_t² < ∞`. The common practical choice is `ε = 0`, for
/// which `γ_t·√t → a/b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub a: f64,
    pub b: f64,
    pub eps: f64,
}

impl StepSchedule {
    pub fn new(a: f64, b: f64, eps: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("gain a must be >= 0, got {a}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("decay b must be >= 0, got {b}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("exponent offset must be >= 0, got {eps}")));
        }
        Ok(StepSchedule { a, b, eps })
    }

    pub fn constant(a: f64) -> Self {
        StepSchedule { a, b: 0.0, eps: 0.0 }
    }

    /// The `a / (1 + t/s)^{1/2}` family of the experiment captions, mapped to
    /// `b = s^{-1/2}` (identical asymptotics).
    pub fn from_t_scale(a: f64, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("t-scale must be > 0, got {s}")));
        }
        Self::new(a, s.powf(-0.5), 0.0)
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.a / (1.0 + self.b * (t as f64).powf(0.5 + self.eps))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        StepSchedule {
            a: self.a * factor,
            ..*self
        }
    }

    /// `Σγ_t = ∞` and `Σγ_t² < ∞`.
    pub fn satisfies_step_condition(&self) -> bool {
        self.a > 0.0 && self.b > 0.0 && self.eps > 0.0 && self.eps <= 0.5
    }
}
