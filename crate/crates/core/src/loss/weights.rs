use serde::{Deserialize, Serialize};

use super::ground::Role;
use crate::error::{Error, Result};

/// Balancing coefficients for the mask, node (discrete/continuous) and edge
/// (discrete/continuous) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_h: f64,
    pub alpha_f_d: f64,
    pub alpha_f_c: f64,
    pub alpha_c_d: f64,
    pub alpha_c_c: f64,
}

impl LossWeights {
    /// `1/N, 1/N, 1/(2N), 1/N², 1/(2N²)`.
    pub fn for_size(n: usize) -> Self {
        let n = n as f64;
        Self {
            alpha_h: 1.0 / n,
            alpha_f_d: 1.0 / n,
            alpha_f_c: 1.0 / (2.0 * n),
            alpha_c_d: 1.0 / (n * n),
            alpha_c_c: 1.0 / (2.0 * n * n),
        }
    }

    pub fn unit() -> Self {
        Self::uniform(1.0)
    }

    pub fn uniform(alpha: f64) -> Self {
        Self {
            alpha_h: alpha,
            alpha_f_d: alpha,
            alpha_f_c: alpha,
            alpha_c_d: alpha,
            alpha_c_c: alpha,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            alpha_h: self.alpha_h * c,
            alpha_f_d: self.alpha_f_d * c,
            alpha_f_c: self.alpha_f_c * c,
            alpha_c_d: self.alpha_c_d * c,
            alpha_c_c: self.alpha_c_c * c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_h,
            self.alpha_f_d,
            self.alpha_f_c,
            self.alpha_c_d,
            self.alpha_c_c,
        ];
        if all.iter().all(|a| a.is_finite() && *a >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )))
        }
    }

    pub fn node(&self, role: Role) -> f64 {
        match role {
            Role::Discrete => self.alpha_f_d,
            Role::Continuous => self.alpha_f_c,
        }
    }

    pub fn edge(&self, role: Role) -> f64 {
        match role {
            Role::Discrete => self.alpha_c_d,
            Role::Continuous => self.alpha_c_c,
        }
    }
}
