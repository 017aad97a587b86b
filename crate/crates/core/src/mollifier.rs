//! Spatial mollifiers `φ`, their self-convolution `Φ = φ⋆φ` and the log-pairing constant
//! `c_Φ = ∫∫ Φ(x) log|x − x'| Φ(x') dx dx'`.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_pieces, QuadratureSpec};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierShape {
    /// Standard Gaussian density `e^{−|x|²/2} / 2π`.
    Gaussian,
    /// `C·exp(−1/(1−|x|²))` on the unit disk.
    CompactBump,
}

fn bump_profile(r: f64) -> f64 {
    if r < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        let q = QuadratureSpec::default().with_rel_tol(1e-13);
        let mass = integrate(|r| 2.0 * PI * r * bump_profile(r), 0.0, 1.0, &q).expect("smooth integrand");
        1.0 / mass.value
    })
}

impl MollifierShape {
    /// Unit-scale density `φ(r)`, `r = |x|`.
    pub fn phi(&self, r: f64) -> f64 {
        match self {
            MollifierShape::Gaussian => (-0.5 * r * r).exp() / (2.0 * PI),
            MollifierShape::CompactBump => bump_norm() * bump_profile(r),
        }
    }

    /// Radial Fourier transform `φ̂(k) = 2π ∫ r φ(r) J₀(kr) dr`, with `φ̂(0) = 1`.
    pub fn phi_hat(&self, k: f64, quad: &QuadratureSpec) -> Result<f64> {
        match self {
            MollifierShape::Gaussian => Ok((-0.5 * k * k).exp()),
            MollifierShape::CompactBump => {
                let pieces = (k / PI).ceil().max(1.0) as usize;
                let breaks: Vec<f64> = (0..=pieces).map(|i| i as f64 / pieces as f64).collect();
                let v = integrate_pieces(|r| 2.0 * PI * r * self.phi(r) * libm::j0(k * r), &breaks, quad)?;
                Ok(v.value)
            }
        }
    }

    /// `Φ(0) = ∫ φ²`.
    pub fn big_phi_at_zero(&self, quad: &QuadratureSpec) -> Result<f64> {
        match self {
            MollifierShape::Gaussian => Ok(1.0 / (4.0 * PI)),
            MollifierShape::CompactBump => {
                Ok(integrate(|r| 2.0 * PI * r * self.phi(r).powi(2), 0.0, 1.0, quad)?.value)
            }
        }
    }

    /// Unit-scale `Φ(r)`: closed form for the Gaussian, a direct 2d convolution otherwise.
    pub fn big_phi(&self, r: f64, quad: &QuadratureSpec) -> Result<f64> {
        match self {
            MollifierShape::Gaussian => Ok((-0.25 * r * r).exp() / (4.0 * PI)),
            MollifierShape::CompactBump => {
                if r >= 2.0 {
                    return Ok(0.0);
                }
                // Φ(r) = ∫ φ(y) φ(|y − r e₁|) dy in polar coordinates around the origin
                let outer = integrate(
                    |rho| {
                        let inner = integrate(
                            |a: f64| {
                                let d2 = rho * rho + r * r - 2.0 * rho * r * a.cos();
                                self.phi(d2.max(0.0).sqrt())
                            },
                            0.0,
                            PI,
                            quad,
                        )
                        .map(|e| e.value)
                        .unwrap_or(f64::NAN);
                        2.0 * rho * self.phi(rho) * inner
                    },
                    0.0,
                    1.0,
                    quad,
                )?;
                if !outer.value.is_finite() {
                    return Err(Error::Accuracy {
                        context: "Φ convolution".into(),
                        requested: quad.rel_tol,
                        achieved: f64::INFINITY,
                    });
                }
                Ok(outer.value)
            }
        }
    }

    /// `c_Φ = log 2 − γ + ∫₀^∞ (1_{k<1} − φ̂(k)⁴) dk/k`.
    pub fn c_phi(&self, quad: &QuadratureSpec) -> Result<(f64, f64)> {
        match self {
            MollifierShape::Gaussian => Ok((0.5 * (8.0f64.ln() - EULER_GAMMA), 0.0)),
            MollifierShape::CompactBump => {
                let inner = quad.with_rel_tol((quad.rel_tol * 1e-2).max(1e-12));
                let mut failure = None;
                let mut f = |k: f64, below: bool| match self.phi_hat(k, &inner) {
                    Ok(p) => ((if below { 1.0 } else { 0.0 }) - p.powi(4)) / k,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                };
                let head = integrate(|k| f(k, true), 0.0, 1.0, quad)?;
                let mut total = head.value;
                let mut err = head.error;
                let mut a = 1.0;
                while a < 1e5 {
                    let piece = integrate(|k| f(k, false), a, 2.0 * a, quad)?;
                    total += piece.value;
                    err += piece.error;
                    if piece.value.abs() < 1e-15 {
                        break;
                    }
                    a *= 2.0;
                }
                if let Some(e) = failure {
                    return Err(e);
                }
                Ok((LN_2 - EULER_GAMMA + total, err))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub shape: MollifierShape,
    pub epsilon: f64,
    /// `Φ(0)` at unit scale.
    pub phi_at_zero: f64,
    /// `Φ_ε(0) = ε⁻² Φ(0)`.
    pub phi_at_zero_eps: f64,
    pub c_phi: f64,
    pub c_phi_error: f64,
}

pub fn build_mollifier(shape: MollifierShape, epsilon: f64, quad: &QuadratureSpec) -> Result<MollifierSpec> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::domain(format!("mollifier scale must be > 0, got {epsilon}")));
    }
    let phi_at_zero = shape.big_phi_at_zero(quad)?;
    let (c_phi, c_phi_error) = shape.c_phi(quad)?;
    Ok(MollifierSpec {
        shape,
        epsilon,
        phi_at_zero,
        phi_at_zero_eps: phi_at_zero / (epsilon * epsilon),
        c_phi,
        c_phi_error,
    })
}

impl MollifierSpec {
    /// `φ_ε(r) = ε⁻² φ(r/ε)`.
    pub fn phi_eps(&self, r: f64) -> f64 {
        self.shape.phi(r / self.epsilon) / (self.epsilon * self.epsilon)
    }

    /// `Φ_ε(r) = ε⁻² Φ(r/ε)`.
    pub fn big_phi_eps(&self, r: f64, quad: &QuadratureSpec) -> Result<f64> {
        Ok(self.shape.big_phi(r / self.epsilon, quad)? / (self.epsilon * self.epsilon))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_normalized() {
        let q = QuadratureSpec::default();
        let m = integrate(|r| 2.0 * PI * r * MollifierShape::CompactBump.phi(r), 0.0, 1.0, &q).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert!((MollifierShape::CompactBump.phi_hat(0.0, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_fourier_formula_reproduces_closed_form() {
        // ∫₀^∞ (1_{k<1} − e^{−2k²}) dk/k evaluated numerically
        let q = QuadratureSpec::default().with_rel_tol(1e-12);
        let a = integrate(|k: f64| (1.0 - (-2.0 * k * k).exp()) / k, 0.0, 1.0, &q).unwrap().value;
        let b = integrate(|k: f64| -(-2.0 * k * k).exp() / k, 1.0, 12.0, &q).unwrap().value;
        let via_fourier = LN_2 - EULER_GAMMA + a + b;
        let (closed, _) = MollifierShape::Gaussian.c_phi(&q).unwrap();
        assert!((via_fourier - closed).abs() < 1e-10);
    }

    #[test]
    fn compact_convolution_at_zero_matches_l2_norm() {
        let q = QuadratureSpec::default().with_rel_tol(1e-9);
        let s = MollifierShape::CompactBump;
        let a = s.big_phi(0.0, &q).unwrap();
        let b = s.big_phi_at_zero(&q).unwrap();
        assert!((a - b).abs() < 1e-7 * b);
        assert_eq!(s.big_phi(2.5, &q).unwrap(), 0.0);
    }

    #[test]
    fn scaled_values() {
        let m = build_mollifier(MollifierShape::Gaussian, 0.1, &QuadratureSpec::default()).unwrap();
        assert!((m.phi_at_zero_eps - 100.0 / (4.0 * PI)).abs() < 1e-12);
        assert!(build_mollifier(MollifierShape::Gaussian, 0.0, &QuadratureSpec::default()).is_err());
    }
}
