//! The critical coupling `β^ε`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mollifier::EULER_GAMMA;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub theta: f64,
    pub epsilon: f64,
    pub beta: f64,
}

/// `β^ε = 2π/|log ε| + π/|log ε|² · (θ − 2 log 2 + 2γ + 2c_Φ)`.
pub fn beta_eps(theta: f64, epsilon: f64, c_phi: f64) -> Result<Coupling> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::domain(format!("coupling needs 0 < eps < 1, got {epsilon}")));
    }
    let l = epsilon.ln().abs();
    let beta = 2.0 * PI / l + PI / (l * l) * (theta - 2.0 * LN_2 + 2.0 * EULER_GAMMA + 2.0 * c_phi);
    if !(beta > 0.0) {
        return Err(Error::domain(format!("coupling is not positive at eps = {epsilon}, theta = {theta}")));
    }
    Ok(Coupling { theta, epsilon, beta })
}

impl Coupling {
    /// `β_{ε,σ} = β_ε e^{−σ/(2|log ε|)}`, the coupling seen by the resampled functional.
    pub fn resampled(&self, sigma: f64) -> f64 {
        self.beta * (-sigma / (2.0 * self.epsilon.ln().abs())).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_order_term_vanishes_at_special_theta() {
        let c_phi = 0.3;
        let theta = 2.0 * LN_2 - 2.0 * EULER_GAMMA - 2.0 * c_phi;
        let c = beta_eps(theta, (-10.0f64).exp(), c_phi).unwrap();
        assert!((c.beta - 2.0 * PI / 10.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_eps_outside_unit_interval() {
        assert!(beta_eps(0.0, 1.0, 0.0).is_err());
        assert!(beta_eps(0.0, 0.0, 0.0).is_err());
        assert!(beta_eps(0.0, 1.5, 0.0).is_err());
    }

    #[test]
    fn resampling_at_zero_is_identity() {
        let c = beta_eps(0.0, 0.1, 0.75).unwrap();
        assert_eq!(c.resampled(0.0), c.beta);
    }
}
