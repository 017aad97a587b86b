//! Heat kernel, the function `j^θ`, the two-particle kernel `W^θ` and its pairings
//! against product test functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::RealFft2;
use crate::quad::{gauss_legendre, integrate_pieces, Estimate, QuadratureSpec};

/// `u'` below `t * exp(-LOG_CUTOFF)` is handled with the exact cumulative integral of `j`.
const LOG_CUTOFF: f64 = 40.0;

/// Isotropic 2d Gaussian density with per-coordinate variance `v`, evaluated at squared radius `r2`.
#[inline]
pub fn gaussian_density(r2: f64, v: f64) -> f64 {
    (-r2 / (2.0 * v)).exp() / (2.0 * PI * v)
}

/// The 2d heat kernel `p(t, x) = exp(-|x|²/2t) / (2πt)`.
pub fn heat_kernel(t: f64, x: [f64; 2]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(gaussian_density(x[0] * x[0] + x[1] * x[1], t))
}

/// `∫₀^∞ exp(u·a − lnΓ(u + shift)) du` for `shift` in {0, 1}.
///
/// The exponent is concave in `u`, so the integrand is unimodal; the range is cut where
/// the integrand falls below the underflow threshold relative to its peak.
fn reciprocal_gamma_integral(a: f64, shift: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    let expo = |u: f64| u * a - libm::lgamma(u + shift);
    let mut peak_u = 0.0;
    let mut peak = if shift > 0.0 { 0.0 } else { f64::NEG_INFINITY };
    let mut u = 1e-14;
    while u < 1e6 {
        let e = expo(u);
        if e > peak {
            peak = e;
            peak_u = u;
        } else if e < peak - 60.0 {
            break;
        }
        u *= 1.25;
    }
    let mut threshold = peak - 46.0;
    if quad.abs_tol > 0.0 {
        threshold = threshold.max(quad.abs_tol.ln() - 40.0);
    }
    let mut upper = peak_u.max(1e-14);
    while expo(upper) >= threshold {
        upper = upper * 1.25 + 1e-3;
    }
    let mut breaks = vec![0.0];
    let scale = if a < -1.0 { 1.0 / -a } else { 1.0 };
    for b in [scale, 0.25 * peak_u, peak_u, 4.0 * peak_u, 1.0, 2.0] {
        if b > 0.0 && b < upper {
            breaks.push(b);
        }
    }
    breaks.push(upper);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    integrate_pieces(|u| if u > 0.0 || shift > 0.0 { expo(u).exp() } else { 0.0 }, &breaks, quad)
}

/// `t · j^θ(t)`, bounded as `t → 0` and the natural quantity to integrate against `d log t`.
pub fn scaled_j(theta: f64, t: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("j needs t > 0, got {t}")));
    }
    reciprocal_gamma_integral(t.ln() + theta, 0.0, quad)
}

/// `j^θ(t) = ∫₀^∞ t^{u−1} e^{θu} / Γ(u) du`.
pub fn j_theta(theta: f64, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    Ok(scaled_j(theta, t, quad)?.value / t)
}

/// `∫₀^δ j^θ(s) ds = ∫₀^∞ δ^u e^{θu} / Γ(u+1) du`.
pub fn j_cumulative(theta: f64, delta: f64, quad: &QuadratureSpec) -> Result<Estimate> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("cumulative j needs delta > 0, got {delta}")));
    }
    reciprocal_gamma_integral(delta.ln() + theta, 1.0, quad)
}

/// `j^θ` tabulated on a log-spaced grid, interpolated by cubic Catmull–Rom in `(log t, log(t·j))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelTable {
    pub theta: f64,
    pub t_grid: Vec<f64>,
    pub j_values: Vec<f64>,
    pub quad: QuadratureSpec,
}

impl KernelTable {
    pub fn build(theta: f64, t_min: f64, t_max: f64, points: usize, quad: &QuadratureSpec) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min) || points < 2 {
            return Err(Error::domain("kernel table needs 0 < t_min < t_max and >= 2 points"));
        }
        let (l0, l1) = (t_min.ln(), t_max.ln());
        let t_grid: Vec<f64> = (0..points)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
            .collect();
        let j_values = t_grid
            .iter()
            .map(|&t| j_theta(theta, t, quad))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { theta, t_grid, j_values, quad: *quad })
    }

    pub fn interpolate(&self, t: f64) -> Result<f64> {
        let n = self.t_grid.len();
        let (t0, t1) = (self.t_grid[0], self.t_grid[n - 1]);
        if !(t >= t0 && t <= t1) {
            return Err(Error::domain(format!("t = {t} outside table range [{t0}, {t1}]")));
        }
        let step = (t1.ln() - t0.ln()) / (n - 1) as f64;
        let x = (t.ln() - t0.ln()) / step;
        let i = (x.floor() as usize).min(n - 2);
        let f = x - i as f64;
        let at = |k: usize| (self.t_grid[k] * self.j_values[k]).ln();
        // ghost points past either end by quadratic extrapolation
        let y = |k: isize| match k {
            -1 if n >= 3 => 3.0 * at(0) - 3.0 * at(1) + at(2),
            k if k == n as isize && n >= 3 => 3.0 * at(n - 1) - 3.0 * at(n - 2) + at(n - 3),
            k => at(k.clamp(0, n as isize - 1) as usize),
        };
        let i = i as isize;
        let (p0, p1, p2, p3) = (y(i - 1), y(i), y(i + 1), y(i + 2));
        let val = p1
            + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)));
        Ok(val.exp() / t)
    }

    /// `max t·|log t|²·j(t)` over the grid points with `t ≤ 1/2`.
    pub fn log_bound_sup(&self) -> f64 {
        self.t_grid
            .iter()
            .zip(&self.j_values)
            .filter(|(t, _)| **t <= 0.5)
            .map(|(t, j)| t * t.ln().powi(2) * j)
            .fold(0.0, f64::max)
    }
}

/// `A · exp(−|x − c|² / (2σ²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

impl GaussianBump {
    pub fn unit() -> Self {
        Self { center: [0.0, 0.0], width: 1.0, amplitude: 1.0 }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        self.amplitude * (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp()
    }

    pub fn integral(&self) -> f64 {
        self.amplitude * 2.0 * PI * self.width * self.width
    }

    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.amplitude.is_finite() || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("gaussian bump needs width > 0 and finite center/amplitude"));
        }
        Ok(())
    }
}

/// Samples on the periodic grid `x = −L/2 + j·h`, `y = −L/2 + i·h`, stored row-major (`i` = row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub box_side: f64,
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn spacing(&self) -> f64 {
        self.box_side / self.n as f64
    }

    pub fn coordinate(box_side: f64, n: usize, i: usize) -> f64 {
        -0.5 * box_side + i as f64 * box_side / n as f64
    }

    pub fn sample<F: Fn([f64; 2]) -> f64>(box_side: f64, n: usize, f: F) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            let y = Self::coordinate(box_side, n, i);
            for j in 0..n {
                values.push(f([Self::coordinate(box_side, n, j), y]));
            }
        }
        Self { box_side, n, values }
    }

    pub fn integral(&self) -> f64 {
        let h = self.spacing();
        self.values.iter().sum::<f64>() * h * h
    }

    /// Checks shape and that the samples vanish (relative to their maximum) on the box boundary.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 4 || n % 2 != 0 || self.values.len() != n * n || !(self.box_side > 0.0) {
            return Err(Error::domain("grid function needs even n >= 4, n² samples and a positive box"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid function has non-finite samples"));
        }
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let edge = (0..n)
            .flat_map(|k| [(0, k), (n - 1, k), (k, 0), (k, n - 1)])
            .map(|(i, j)| self.values[i * n + j].abs())
            .fold(0.0f64, f64::max);
        if edge > 1e-10 * max {
            return Err(Error::domain("grid function support touches the box boundary"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    Gaussian(GaussianBump),
    Grid(GridFunction),
}

impl TestFunction {
    pub fn to_grid(&self, box_side: f64, n: usize) -> GridFunction {
        match self {
            TestFunction::Gaussian(b) => GridFunction::sample(box_side, n, |x| b.eval(x)),
            TestFunction::Grid(g) => g.clone(),
        }
    }
}

/// The pair `(g, g')` paired on the left and right of the moment kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionPair {
    pub g: TestFunction,
    pub g_prime: TestFunction,
}

impl TestFunctionPair {
    pub fn gaussian(g: GaussianBump, g_prime: GaussianBump) -> Self {
        Self { g: TestFunction::Gaussian(g), g_prime: TestFunction::Gaussian(g_prime) }
    }

    /// Centered unit-width, unit-amplitude Gaussians.
    pub fn unit() -> Self {
        Self::gaussian(GaussianBump::unit(), GaussianBump::unit())
    }

    pub fn as_gaussian(&self) -> Option<(GaussianBump, GaussianBump)> {
        match (&self.g, &self.g_prime) {
            (TestFunction::Gaussian(a), TestFunction::Gaussian(b)) => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn as_grid(&self) -> Option<(&GridFunction, &GridFunction)> {
        match (&self.g, &self.g_prime) {
            (TestFunction::Grid(a), TestFunction::Grid(b)) => Some((a, b)),
            _ => None,
        }
    }

    pub fn to_grid(&self, box_side: f64, n: usize) -> Self {
        Self {
            g: TestFunction::Grid(self.g.to_grid(box_side, n)),
            g_prime: TestFunction::Grid(self.g_prime.to_grid(box_side, n)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((a, b)) = self.as_gaussian() {
            a.validate()?;
            return b.validate();
        }
        if let Some((a, b)) = self.as_grid() {
            a.validate()?;
            b.validate()?;
            if a.n != b.n || a.box_side != b.box_side {
                return Err(Error::domain("gridded pair must share one grid"));
            }
            return Ok(());
        }
        Err(Error::Unsupported("mixed gaussian/grid test-function pair".into()))
    }

    /// Largest bump width (gaussian) or `L/8` (grid), used for lattice sizing checks.
    pub fn max_width(&self) -> f64 {
        let w = |f: &TestFunction| match f {
            TestFunction::Gaussian(b) => b.width,
            TestFunction::Grid(g) => g.box_side / 8.0,
        };
        w(&self.g).max(w(&self.g_prime))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMethod {
    GaussianAnalytic,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WPairingResult {
    pub value: f64,
    pub est_error: f64,
    pub method: PairingMethod,
}

/// `⟨g, p(t) g'⟩`.
pub fn heat_pairing(t: f64, pair: &TestFunctionPair) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("heat pairing needs t >= 0, got {t}")));
    }
    pair.validate()?;
    if let Some((g, gp)) = pair.as_gaussian() {
        let d2 = (g.center[0] - gp.center[0]).powi(2) + (g.center[1] - gp.center[1]).powi(2);
        let v = g.width * g.width + gp.width * gp.width + t;
        return Ok(g.integral() * gp.integral() * gaussian_density(d2, v));
    }
    let (g, gp) = pair.as_grid().expect("validated pair");
    let mut grid = GridHeat::new(g.box_side, g.n);
    let a = grid.spectrum(&g.values);
    let b = grid.spectrum(&gp.values);
    Ok(grid.pairing(&a, &b, t))
}

/// Closed form of `∫₀^T du / ((a+u)(b+T−u))`, times `(a+b+T)`.
fn simplex_log_factor(a: f64, b: f64, big_t: f64) -> f64 {
    ((big_t / a).ln_1p() + (big_t / b).ln_1p()) / (a + b + big_t)
}

/// `∫₀^t j(u') G(u') du'` for a smooth `G`, split at `δ = t·e^{−40}`: the part below `δ`
/// uses the exact cumulative integral of `j` times `G(0)`, the rest is integrated in `log u'`.
fn integrate_against_j<G: FnMut(f64) -> f64>(
    theta: f64,
    t: f64,
    mut g: G,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    let inner = quad.with_rel_tol((quad.rel_tol * 1e-3).max(1e-12));
    let delta = t * (-LOG_CUTOFF).exp();
    let head = j_cumulative(theta, delta, &inner)?.scale(g(0.0));
    let mut failure = None;
    let (lo, hi) = (delta.ln(), t.ln());
    let breaks: Vec<f64> = (0..=8).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect();
    let body = integrate_pieces(
        |s| {
            let up = s.exp();
            match scaled_j(theta, up, &inner) {
                Ok(tj) => tj.value * g(up),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &breaks,
        quad,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut total = head + body;
    total.error += inner.rel_tol * total.value.abs();
    Ok(total)
}

/// `⟨g^{⊗2}, W^θ̄(t) g'^{⊗2}⟩`, dispatching on the representation of the pair.
pub fn w_pairing(theta_bar: f64, t: f64, pair: &TestFunctionPair, quad: &QuadratureSpec) -> Result<WPairingResult> {
    pair.validate()?;
    if pair.as_gaussian().is_some() {
        w_pairing_analytic(theta_bar, t, pair, quad)
    } else {
        w_pairing_grid(theta_bar, t, pair, 48, 16)
    }
}

/// Gaussian pair: the four spatial integrals and the inner time integral are done in closed form.
pub fn w_pairing_analytic(
    theta_bar: f64,
    t: f64,
    pair: &TestFunctionPair,
    quad: &QuadratureSpec,
) -> Result<WPairingResult> {
    let Some((g, gp)) = pair.as_gaussian() else {
        return Err(Error::Unsupported("analytic W pairing needs a gaussian pair".into()));
    };
    if !(t > 0.0) {
        return Err(Error::domain(format!("W pairing needs t > 0, got {t}")));
    }
    quad.validate()?;
    pair.validate()?;
    let (a, b) = (g.width * g.width, gp.width * gp.width);
    let d2 = (g.center[0] - gp.center[0]).powi(2) + (g.center[1] - gp.center[1]).powi(2);
    // [(p(u)g)(y)]² = A²πσ⁴/(σ²+u) · N(y; c, (σ²+u)/2); the y, y' convolution leaves a
    // Gaussian in c−c' whose variance (σ²+σ'²+t)/2 does not depend on the split of t.
    let prefactor = 4.0
        * PI
        * (g.amplitude.powi(2) * PI * a * a)
        * (gp.amplitude.powi(2) * PI * b * b)
        * gaussian_density(d2, 0.5 * (a + b + t));
    let est = integrate_against_j(theta_bar, t, |up| simplex_log_factor(a, b, t - up), quad)?.scale(prefactor);
    Ok(WPairingResult { value: est.value, est_error: est.error, method: PairingMethod::GaussianAnalytic })
}

/// Heat flow and Parseval pairings on a periodic grid.
pub(crate) struct GridHeat {
    fft: RealFft2,
    k2: Vec<f64>,
    mult: Vec<f64>,
    h: f64,
    n: usize,
    field: Vec<f64>,
}

impl GridHeat {
    pub(crate) fn new(box_side: f64, n: usize) -> Self {
        let fft = RealFft2::new(n);
        let k2 = fft.wavenumbers_sq(box_side);
        let mult = fft.multiplicities();
        Self { fft, k2, mult, h: box_side / n as f64, n, field: vec![0.0; n * n] }
    }

    pub(crate) fn spectrum(&mut self, values: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.fft.spectrum_len()];
        self.fft.forward(values, &mut out);
        out
    }

    /// Spectrum of `[(p(u) f)]²` given the spectrum of `f`.
    fn squared_heat(&mut self, spec: &[Complex64], u: f64) -> Vec<Complex64> {
        let mut tmp: Vec<Complex64> = spec.iter().zip(&self.k2).map(|(c, k2)| c * (-0.5 * k2 * u).exp()).collect();
        self.fft.inverse(&mut tmp, &mut self.field);
        self.field.iter_mut().for_each(|v| *v *= *v);
        let field = std::mem::take(&mut self.field);
        let out = self.spectrum(&field);
        self.field = field;
        out
    }

    /// `∫ a(y) (p(s) b)(y) dy` from spectra.
    pub(crate) fn pairing(&self, a: &[Complex64], b: &[Complex64], s: f64) -> f64 {
        let nn = (self.n * self.n) as f64;
        let sum: f64 = a
            .iter()
            .zip(b)
            .zip(self.k2.iter().zip(&self.mult))
            .map(|((x, y), (k2, m))| m * (x * y.conj()).re * (-0.5 * k2 * s).exp())
            .sum();
        sum * self.h * self.h / nn
    }
}

/// Gridded pair: spatial integrals on the periodic grid, time integrals by Gauss–Legendre rules
/// of `outer` nodes in `log u'` and `inner` nodes in `u`. The error estimate is the change when
/// both orders are halved.
pub fn w_pairing_grid(theta_bar: f64, t: f64, pair: &TestFunctionPair, outer: usize, inner: usize) -> Result<WPairingResult> {
    let Some((g, gp)) = pair.as_grid() else {
        return Err(Error::Unsupported("grid W pairing needs a gridded pair".into()));
    };
    if !(t > 0.0) {
        return Err(Error::domain(format!("W pairing needs t > 0, got {t}")));
    }
    pair.validate()?;
    let mut grid = GridHeat::new(g.box_side, g.n);
    let ga = grid.spectrum(&g.values);
    let gb = grid.spectrum(&gp.values);
    let quad = QuadratureSpec::default().with_rel_tol(1e-10);
    let mut evaluate = |n_out: usize, n_in: usize| -> Result<f64> {
        let (xi, wi) = gauss_legendre(n_in);
        let mut spatial = |up: f64| {
            let span = t - up;
            let mut acc = 0.0;
            for (x, w) in xi.iter().zip(&wi) {
                let u = 0.5 * span * (1.0 + x);
                let a = grid.squared_heat(&ga, u);
                let b = grid.squared_heat(&gb, span - u);
                acc += w * grid.pairing(&a, &b, 0.5 * up);
            }
            4.0 * PI * 0.5 * span * acc
        };
        let delta = t * (-LOG_CUTOFF).exp();
        let mut total = j_cumulative(theta_bar, delta, &quad)?.value * spatial(0.0);
        let (xo, wo) = gauss_legendre((n_out / 8).max(2));
        let mut edges: Vec<f64> = [LOG_CUTOFF, 20.0, 10.0, 5.0, 2.5, 1.25, 0.6, 0.3, 0.1, 0.0]
            .iter()
            .map(|d| t.ln() - d)
            .collect();
        edges[0] = delta.ln();
        for panel in edges.windows(2) {
            let width = panel[1] - panel[0];
            for (x, w) in xo.iter().zip(&wo) {
                let s = panel[0] + 0.5 * width * (1.0 + x);
                let up = s.exp();
                total += 0.5 * width * w * scaled_j(theta_bar, up, &quad)?.value * spatial(up);
            }
        }
        Ok(total)
    };
    let fine = evaluate(outer, inner)?;
    let coarse = evaluate(outer / 2, (inner / 2).max(2))?;
    Ok(WPairingResult { value: fine, est_error: (fine - coarse).abs(), method: PairingMethod::Grid })
}

/// `⟨g, p(t) g'⟩² + ⟨g^{⊗2}, W^θ(t) g'^{⊗2}⟩`.
pub fn q2_pairing(theta: f64, t: f64, pair: &TestFunctionPair, quad: &QuadratureSpec) -> Result<Estimate> {
    let base = heat_pairing(t, pair)?;
    let w = w_pairing(theta, t, pair, quad)?;
    Ok(Estimate::new(base * base + w.value, w.est_error))
}

/// `R(τ̄) = ⟨g^{⊗2}, W^{θ−τ̄}(1) g'^{⊗2}⟩ / ⟨g^{⊗2}, W^θ(1) g'^{⊗2}⟩`.
pub fn sensitivity_limit_ratio(theta: f64, tau_bar: f64, pair: &TestFunctionPair, quad: &QuadratureSpec) -> Result<f64> {
    if !(tau_bar >= 0.0) {
        return Err(Error::domain(format!("tau_bar must be >= 0, got {tau_bar}")));
    }
    let den = w_pairing(theta, 1.0, pair, quad)?.value;
    if tau_bar == 0.0 {
        return Ok(den / den);
    }
    let num = w_pairing(theta - tau_bar, 1.0, pair, quad)?.value;
    Ok(num / den)
}
