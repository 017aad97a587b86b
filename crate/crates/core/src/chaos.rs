//! Wiener-chaos spectrum of `F^ε = ⟨g, Z^ε(1) g'⟩ − E`, its resampling correlation and
//! time-slab restrictions.
//!
//! The order-`k` coefficient is
//! `c_k² = β^k ∫_{u₀+⋯+u_k=1} ⟨g^{⊗2}, p(u₀)^{⊗2} Φ_ε p(u₁)^{⊗2} ⋯ Φ_ε p(u_k)^{⊗2} g'^{⊗2}⟩ du`.
//! Every integral below is computed at `β = 1` and multiplied by `β^k` afterwards.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft2::wavenumber;
use crate::kernels::{GaussianBump, GridFunction, TestFunctionPair};
use crate::mollifier::{MollifierShape, MollifierSpec};
use crate::quad::{integrate, Estimate, QuadratureSpec};

/// Largest order accepted by the gridded path.
pub const GRID_MAX_ORDER: usize = 3;
const STRATA: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChaosMethod {
    GaussianAnalytic,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosCoefficients {
    pub epsilon: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k_max: usize,
    /// `c_k²` for `k = 1..=K`.
    pub ck2: Vec<f64>,
    pub est_errors: Vec<f64>,
    pub method: ChaosMethod,
}

/// Time slab `[s, t] ⊂ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub s: f64,
    pub t: f64,
}

impl SlabSpec {
    pub fn new(s: f64, t: f64) -> Result<Self> {
        if !(0.0 <= s && s < t && t <= 1.0) {
            return Err(Error::domain(format!("slab needs 0 <= s < t <= 1, got [{s}, {t}]")));
        }
        Ok(Self { s, t })
    }

    pub fn full() -> Self {
        Self { s: 0.0, t: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.t - self.s
    }
}

/// The relative-coordinate Gaussian chain for a pair of Gaussian bumps.
///
/// With `X = (x+y)/2` and `r = x − y`, `g⊗g` splits into a center part, which only diffuses, and a
/// relative part `e^{−|r|²/2v}` that alternately diffuses (`v += 2u`) and is multiplied by
/// `Φ_ε(r)`. The chain is tracked as `(a, v)` for `a·e^{−|r|²/2v}`.
#[derive(Clone, Copy, Debug)]
struct GaussianChain {
    center: f64,
    v_start: f64,
    v_end: f64,
    w: f64,
}

impl GaussianChain {
    fn new(g: GaussianBump, gp: GaussianBump, mollifier: &MollifierSpec) -> Result<Self> {
        if mollifier.shape != MollifierShape::Gaussian {
            return Err(Error::Unsupported("analytic chaos path needs a gaussian mollifier".into()));
        }
        let (s2, sp2) = (g.width * g.width, gp.width * gp.width);
        let v = 0.5 * (s2 + sp2 + 1.0);
        let dc2 = (g.center[0] - gp.center[0]).powi(2) + (g.center[1] - gp.center[1]).powi(2);
        let center = g.amplitude.powi(2) * PI * s2 * gp.amplitude.powi(2) * PI * sp2 * (-dc2 / (2.0 * v)).exp()
            / (2.0 * PI * v);
        Ok(Self {
            center,
            v_start: 2.0 * s2,
            v_end: 2.0 * sp2,
            w: 2.0 * mollifier.epsilon * mollifier.epsilon,
        })
    }

    /// Integrand at heat times `u = (u₀, …, u_k)`, `Φ_ε` inserted between consecutive entries.
    fn eval(&self, u: &[f64]) -> f64 {
        let (mut a, mut v) = (1.0, self.v_start);
        for (i, &ui) in u.iter().enumerate() {
            if i > 0 {
                a /= 2.0 * PI * self.w;
                v = v * self.w / (v + self.w);
            }
            let nv = v + 2.0 * ui;
            a *= v / nv;
            v = nv;
        }
        self.center * a * 2.0 * PI * self.v_end * v / (self.v_end + v)
    }
}

fn stratum_seed(k: usize, stratum: usize) -> u64 {
    0x5EED_C4A0_5000_0000 ^ ((k as u64) << 32) ^ stratum as u64
}

/// Importance-sampled simplex integral for `k ≥ 2`.
///
/// Gaps `u₁..u_{k−1}` are drawn from `h(u) ∝ 1/(u + c)` on `(0, t−s)`, which follows the
/// `Φ_ε`-induced peak at short gaps; the first interaction time is uniform on the admissible range.
/// Strata split the uniform driving the first interaction time; each stratum uses antithetic pairs
/// and a seed fixed by `(k, stratum)`.
fn simplex_mc(chain: &GaussianChain, k: usize, slab: SlabSpec, samples: usize) -> Estimate {
    let d = slab.width();
    let c = chain.w / 4.0;
    let log_span = (d / c).ln_1p();
    let pairs = samples.div_ceil(2 * STRATA).max(2);
    let strata: Vec<(f64, f64)> = (0..STRATA)
        .into_par_iter()
        .map(|j| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(stratum_seed(k, j));
            let mut gaps = vec![0.0; k - 1];
            let mut times = vec![0.0; k + 1];
            let mut eval = |ut: f64, ug: &[f64]| -> f64 {
                let mut sum = 0.0;
                let mut inv_density = 1.0;
                for (g, &x) in gaps.iter_mut().zip(ug) {
                    *g = c * (x * log_span).exp_m1();
                    sum += *g;
                    inv_density *= (*g + c) * log_span;
                }
                if sum >= d {
                    return 0.0;
                }
                let len = d - sum;
                let tau1 = slab.s + ut * len;
                times[0] = tau1;
                times[1..k].copy_from_slice(&gaps);
                times[k] = (1.0 - tau1 - sum).max(0.0);
                chain.eval(&times) * len * inv_density
            };
            let mut ug = vec![0.0; k - 1];
            let mut ug_anti = vec![0.0; k - 1];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..pairs {
                let v: f64 = rng.gen();
                for (x, y) in ug.iter_mut().zip(ug_anti.iter_mut()) {
                    *x = rng.gen();
                    *y = 1.0 - *x;
                }
                let ut = (j as f64 + v) / STRATA as f64;
                let ut_anti = (j as f64 + 1.0 - v) / STRATA as f64;
                let y = 0.5 * (eval(ut, &ug) + eval(ut_anti, &ug_anti));
                s1 += y;
                s2 += y * y;
            }
            let m = pairs as f64;
            let mean = s1 / m;
            let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
            (mean, var / m)
        })
        .collect();
    let s = STRATA as f64;
    let value = strata.iter().map(|p| p.0).sum::<f64>() / s;
    let var = strata.iter().map(|p| p.1).sum::<f64>() / (s * s);
    Estimate::new(value, var.sqrt())
}

/// `∫ ⟨g^{⊗2}, p(u₀)^{⊗2} Φ_ε ⋯ p(u_k)^{⊗2} g'^{⊗2}⟩` over the simplex with every interaction time
/// `u₀ + ⋯ + u_{i−1}` in the slab, at `β = 1`.
pub fn slab_simplex_integral(
    k: usize,
    slab: SlabSpec,
    mollifier: &MollifierSpec,
    pair: &TestFunctionPair,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    if k == 0 {
        return Err(Error::domain("chaos order must be >= 1"));
    }
    SlabSpec::new(slab.s, slab.t)?;
    quad.validate()?;
    pair.validate()?;
    let (g, gp) = pair
        .as_gaussian()
        .ok_or_else(|| Error::Unsupported("analytic chaos path needs a gaussian test-function pair".into()))?;
    let chain = GaussianChain::new(g, gp, mollifier)?;
    if k == 1 {
        let mid = 0.5 * (slab.s + slab.t);
        let f = |tau: f64| chain.eval(&[tau, 1.0 - tau]);
        return Ok(integrate(f, slab.s, mid, quad)? + integrate(f, mid, slab.t, quad)?);
    }
    Ok(simplex_mc(&chain, k, slab, quad.simplex_samples))
}

/// `c_k²` through the gaussian-analytic path.
pub fn chaos_coefficient(
    k: usize,
    mollifier: &MollifierSpec,
    beta: f64,
    pair: &TestFunctionPair,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    check_beta(beta)?;
    Ok(slab_simplex_integral(k, SlabSpec::full(), mollifier, pair, quad)?.scale(beta.powi(k as i32)))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("coupling must be > 0, got {beta}")));
    }
    Ok(())
}

/// `c_1², …, c_K²` through the requested path.
pub fn chaos_coefficients(
    k_max: usize,
    mollifier: &MollifierSpec,
    beta: f64,
    pair: &TestFunctionPair,
    quad: &QuadratureSpec,
    method: ChaosMethod,
    grid: &GridChaosSpec,
) -> Result<ChaosCoefficients> {
    if k_max == 0 {
        return Err(Error::domain("K must be >= 1"));
    }
    let mut ck2 = Vec::with_capacity(k_max);
    let mut est_errors = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let e = match method {
            ChaosMethod::GaussianAnalytic => chaos_coefficient(k, mollifier, beta, pair, quad)?,
            ChaosMethod::Grid => chaos_coefficient_grid(k, mollifier, beta, pair, grid)?,
        };
        ck2.push(e.value);
        est_errors.push(e.error);
    }
    Ok(ChaosCoefficients { epsilon: mollifier.epsilon, beta, k_max, ck2, est_errors, method })
}

/// Truncated chaos sum with the geometric tail kept apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosVariance {
    /// `Σ_{k≤K} c_k²`.
    pub partial_sum: f64,
    /// Combined error estimate of the partial sum.
    pub error: f64,
    /// `c_K² r/(1−r)` with `r = c_K²/c_{K−1}²`; `None` when `K < 2` or `r ∉ [0, 1)`.
    pub tail: Option<f64>,
}

impl ChaosVariance {
    pub fn with_tail(&self) -> f64 {
        self.partial_sum + self.tail.unwrap_or(0.0)
    }
}

pub fn variance_from_chaos(coeffs: &ChaosCoefficients) -> ChaosVariance {
    let partial_sum = coeffs.ck2.iter().sum();
    let error = coeffs.est_errors.iter().map(|e| e * e).sum::<f64>().sqrt();
    let tail = match coeffs.ck2.as_slice() {
        [.., prev, last] if *prev > 0.0 => {
            let r = last / prev;
            (0.0..1.0).contains(&r).then(|| last * r / (1.0 - r))
        }
        _ => None,
    };
    ChaosVariance { partial_sum, error, tail }
}

/// `Σ e^{−kτ} c_k² / Σ c_k²`.
pub fn correlation_from_chaos(coeffs: &ChaosCoefficients, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("tau must be >= 0, got {tau}")));
    }
    let total: f64 = coeffs.ck2.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedCorrelation("chaos coefficients carry no mass".into()));
    }
    if tau == 0.0 {
        return Ok(1.0);
    }
    let num: f64 = coeffs.ck2.iter().enumerate().map(|(i, c)| (-((i + 1) as f64) * tau).exp() * c).sum();
    Ok(num / total)
}

/// Smallest `k` whose cumulative chaos mass reaches half of `Σ_{k≤K} c_k²`.
pub fn median_index(coeffs: &ChaosCoefficients) -> Result<usize> {
    let total: f64 = coeffs.ck2.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("median index of an empty chaos spectrum"));
    }
    let mut acc = 0.0;
    for (i, c) in coeffs.ck2.iter().enumerate() {
        acc += c;
        if acc >= 0.5 * total {
            return Ok(i + 1);
        }
    }
    Ok(coeffs.k_max)
}

/// `Σ_{k≤K} β^k ×` (simplex integral with all interaction times in the slab).
pub fn slab_variance(
    k_max: usize,
    slab: SlabSpec,
    mollifier: &MollifierSpec,
    beta: f64,
    pair: &TestFunctionPair,
    quad: &QuadratureSpec,
) -> Result<Estimate> {
    check_beta(beta)?;
    if k_max == 0 {
        return Err(Error::domain("K must be >= 1"));
    }
    let mut value = 0.0;
    let mut var = 0.0;
    for k in 1..=k_max {
        let e = slab_simplex_integral(k, slab, mollifier, pair, quad)?.scale(beta.powi(k as i32));
        value += e.value;
        var += e.error * e.error;
    }
    Ok(Estimate::new(value, var.sqrt()))
}

/// Discretization of the gridded pair-field path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridChaosSpec {
    pub box_side: f64,
    pub n: usize,
    /// Coarse time-step count; the fine run doubles it for Richardson extrapolation.
    pub time_steps: usize,
}

impl Default for GridChaosSpec {
    fn default() -> Self {
        Self { box_side: 16.0, n: 24, time_steps: 32 }
    }
}

struct Fft4 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft4 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            line: vec![Complex64::default(); n],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    fn process(&mut self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let fft = if inverse { self.inverse.clone() } else { self.forward.clone() };
        for axis in 0..4 {
            let stride = n.pow(3 - axis as u32);
            for base in 0..n.pow(4) {
                if (base / stride) % n != 0 {
                    continue;
                }
                for (i, c) in self.line.iter_mut().enumerate() {
                    *c = data[base + i * stride];
                }
                fft.process_with_scratch(&mut self.line, &mut self.scratch);
                for (i, c) in self.line.iter().enumerate() {
                    data[base + i * stride] = *c;
                }
            }
        }
        if inverse {
            let scale = 1.0 / (n.pow(4) as f64);
            data.iter_mut().for_each(|c| *c *= scale);
        }
    }
}

/// `c_k²` from a pair field `G(x, y)` on a periodic `(n × n)²` grid.
///
/// The Dyson levels `G_j(τ) = ∫₀^τ p(τ−r)^{⊗2} Φ_ε G_{j−1}(r) dr`, `G₀(τ) = p(τ)^{⊗2} g^{⊗2}`, are
/// advanced with exact spectral heat flow and the trapezoid rule in `r`; two step counts are
/// combined by Richardson extrapolation, whose correction is reported as the error. Supports any
/// mollifier shape, but only `k ≤ 3` and coarse grids.
pub fn chaos_coefficient_grid(
    k: usize,
    mollifier: &MollifierSpec,
    beta: f64,
    pair: &TestFunctionPair,
    spec: &GridChaosSpec,
) -> Result<Estimate> {
    check_beta(beta)?;
    if k == 0 {
        return Err(Error::domain("chaos order must be >= 1"));
    }
    if k > GRID_MAX_ORDER {
        return Err(Error::Unsupported(format!("grid chaos path supports k <= {GRID_MAX_ORDER}, got {k}")));
    }
    if spec.n < 4 || spec.n % 2 != 0 || spec.n > 48 || spec.time_steps < 2 || !(spec.box_side > 0.0) {
        return Err(Error::config("grid chaos needs even 4 <= n <= 48, time_steps >= 2 and a positive box"));
    }
    let grid_pair = match pair.as_grid() {
        Some(_) => pair.clone(),
        None => pair.to_grid(spec.box_side, spec.n),
    };
    grid_pair.validate()?;
    let (g, gp) = grid_pair.as_grid().expect("gridded pair");
    if g.n != spec.n || g.box_side != spec.box_side {
        return Err(Error::config("gridded test functions must match the chaos grid"));
    }
    let field = PairField::new(g, gp, mollifier)?;
    let coarse = field.dyson(k, spec.time_steps);
    let fine = field.dyson(k, 2 * spec.time_steps);
    let value = (4.0 * fine - coarse) / 3.0;
    Ok(Estimate::new(value, (fine - coarse).abs() / 3.0).scale(beta.powi(k as i32)))
}

struct PairField {
    n: usize,
    cell: f64,
    start: Vec<Complex64>,
    end: Vec<f64>,
    phi: Vec<f64>,
    lambda: Vec<f64>,
}

impl PairField {
    fn new(g: &GridFunction, gp: &GridFunction, mollifier: &MollifierSpec) -> Result<Self> {
        let n = g.n;
        let n2 = n * n;
        let h = g.spacing();
        let quad = QuadratureSpec::default().with_rel_tol(1e-10);
        // Φ_ε on the difference lattice, minimum image
        let mut diff = vec![0.0; n2];
        for a in 0..n {
            for b in 0..n {
                let da = a.min(n - a) as f64 * h;
                let db = b.min(n - b) as f64 * h;
                diff[a * n + b] = mollifier.big_phi_eps((da * da + db * db).sqrt(), &quad)?;
            }
        }
        let mut start = vec![Complex64::default(); n2 * n2];
        let mut end = vec![0.0; n2 * n2];
        let mut phi = vec![0.0; n2 * n2];
        for p in 0..n2 {
            for q in 0..n2 {
                let idx = p * n2 + q;
                start[idx] = Complex64::new(g.values[p] * g.values[q], 0.0);
                end[idx] = gp.values[p] * gp.values[q];
                let (pr, pc, qr, qc) = (p / n, p % n, q / n, q % n);
                phi[idx] = diff[((pr + n - qr) % n) * n + (pc + n - qc) % n];
            }
        }
        let mut fft = Fft4::new(n);
        fft.process(&mut start, false);
        let k2: Vec<f64> = (0..n).map(|i| wavenumber(i, n, g.box_side).powi(2)).collect();
        let mut lambda = vec![0.0; n2 * n2];
        for (idx, l) in lambda.iter_mut().enumerate() {
            let (a, b, c, d) = (idx / (n2 * n), (idx / n2) % n, (idx / n) % n, idx % n);
            *l = 0.5 * (k2[a] + k2[b] + k2[c] + k2[d]);
        }
        Ok(Self { n, cell: h.powi(4), start, end, phi, lambda })
    }

    fn multiply_phi(&self, fft: &mut Fft4, spectrum: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(spectrum);
        fft.process(out, true);
        out.iter_mut().zip(&self.phi).for_each(|(c, p)| *c *= *p);
        fft.process(out, false);
    }

    fn dyson(&self, k: usize, steps: usize) -> f64 {
        let len = self.start.len();
        let dt = 1.0 / steps as f64;
        let decay: Vec<f64> = self.lambda.iter().map(|l| (-l * dt).exp()).collect();
        let mut fft = Fft4::new(self.n);
        // levels[j] = Ĝ_j(τ); sources[j] = FFT(Φ_ε G_{j−1}(τ)) for j ≥ 1
        let mut levels = vec![vec![Complex64::default(); len]; k + 1];
        levels[0].copy_from_slice(&self.start);
        let mut sources = vec![vec![Complex64::default(); len]; k + 1];
        let mut fresh = vec![Complex64::default(); len];
        self.multiply_phi(&mut fft, &levels[0], &mut sources[1]);
        for _ in 0..steps {
            levels[0].iter_mut().zip(&decay).for_each(|(c, e)| *c *= *e);
            for j in 1..=k {
                self.multiply_phi(&mut fft, &levels[j - 1], &mut fresh);
                let half = 0.5 * dt;
                for i in 0..len {
                    levels[j][i] = decay[i] * (levels[j][i] + half * sources[j][i]) + half * fresh[i];
                }
                std::mem::swap(&mut sources[j], &mut fresh);
            }
        }
        let mut last = levels.pop().expect("k >= 1");
        fft.process(&mut last, true);
        last.iter().zip(&self.end).map(|(c, e)| c.re * e).sum::<f64>() * self.cell
    }
}
