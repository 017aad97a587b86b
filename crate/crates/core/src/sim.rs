//! Lattice simulation of the mollified stochastic heat equation with exactly coupled
//! Ornstein–Uhlenbeck resampling of the noise.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::fastmath;
use crate::fft2::{forward_complex, ComplexIfft2, RealFft2};
use crate::kernels::{heat_pairing, TestFunctionPair};
use crate::mollifier::MollifierSpec;
use crate::noise::NoiseBank;
use crate::stats::pairwise_sum;

/// Largest tolerated mass of `p(1)` outside the box.
pub const MAX_LEAKAGE: f64 = 1e-8;

/// Resolution policy relative to the mollifier scale: `h ≤ max_h_over_eps·ε`, `dt ≤ max_dt_over_eps2·ε²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    pub max_h_over_eps: f64,
    pub max_dt_over_eps2: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { max_h_over_eps: 0.5, max_dt_over_eps2: 0.125 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub box_side: f64,
    pub n: usize,
    pub dt: f64,
    /// `dt / ε²` for the scale the lattice was built for.
    pub stability_constant: f64,
}

impl Lattice {
    pub fn new(box_side: f64, n: usize, dt: f64, epsilon: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::config(format!("grid size must be a power of two >= 4, got {n}")));
        }
        if !(box_side > 0.0) || !(dt > 0.0) || !(epsilon > 0.0) {
            return Err(Error::config("box side, time step and epsilon must be positive"));
        }
        Ok(Self { box_side, n, dt, stability_constant: dt / (epsilon * epsilon) })
    }

    /// Smallest power-of-two grid and a time step `1/steps` meeting `policy` at scale `epsilon`.
    pub fn resolving(epsilon: f64, box_side: f64, policy: &Resolution) -> Result<Self> {
        let min_n = (box_side / (policy.max_h_over_eps * epsilon)).ceil() as usize;
        let n = min_n.next_power_of_two().max(4);
        let steps = (1.0 / (policy.max_dt_over_eps2 * epsilon * epsilon)).ceil();
        Self::new(box_side, n, 1.0 / steps, epsilon)
    }

    pub fn spacing(&self) -> f64 {
        self.box_side / self.n as f64
    }

    /// Number of steps to reach time 1.
    pub fn steps(&self) -> usize {
        (1.0 / self.dt).round().max(1.0) as usize
    }

    pub fn check_resolution(&self, epsilon: f64, policy: &Resolution) -> Result<()> {
        let h = self.spacing();
        let mut bad = Vec::new();
        if h > policy.max_h_over_eps * epsilon * (1.0 + 1e-12) {
            bad.push(format!("spacing {h} exceeds {}·eps", policy.max_h_over_eps));
        }
        if self.dt > policy.max_dt_over_eps2 * epsilon * epsilon * (1.0 + 1e-12) {
            bad.push(format!("dt {} exceeds {}·eps²", self.dt, policy.max_dt_over_eps2));
        }
        if (self.steps() as f64 * self.dt - 1.0).abs() > 1e-9 {
            bad.push(format!("dt {} does not divide the unit time interval", self.dt));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::config(bad.join("; ")))
        }
    }

    /// Mass of `p(t)` outside the box `[−L/2, L/2]²`.
    pub fn heat_leakage(&self, t: f64) -> f64 {
        let inside = libm::erf(0.5 * self.box_side / (2.0 * t).sqrt());
        1.0 - inside * inside
    }
}

#[inline(always)]
fn geometric_factor(sqrt_beta: f64, ito: f64, z: f64) -> f64 {
    fastmath::exp(sqrt_beta * z - ito)
}

/// The lattice update of a single isolated cell: `u ← u·exp(√β z − ½β·variance_rate·dt)` for each
/// increment `z`, whose variance should be `variance_rate·dt`. The result is an exact geometric
/// Brownian motion sampled at the step times.
pub fn one_cell_path(beta: f64, variance_rate: f64, dt: f64, u0: f64, increments: &[f64]) -> Result<f64> {
    if !(beta >= 0.0) || !(variance_rate >= 0.0) || !(dt > 0.0) {
        return Err(Error::domain("one-cell update needs beta >= 0, variance_rate >= 0 and dt > 0"));
    }
    let (sb, ito) = (beta.sqrt(), 0.5 * beta * variance_rate * dt);
    let mut u = u0;
    for (step, z) in increments.iter().enumerate() {
        u *= geometric_factor(sb, ito, *z);
        if !u.is_finite() {
            return Err(Error::NumericalOverflow { step: step + 1, replica: 0 });
        }
    }
    Ok(u)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub values: Vec<f64>,
    pub time: f64,
    pub step: usize,
}

/// Per-thread FFT plans and buffers.
pub struct Workspace {
    fft: RealFft2,
    ifft: ComplexIfft2,
    spectrum: Vec<Complex64>,
    noise: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct SimulationSetup {
    pub lattice: Lattice,
    pub coupling: Coupling,
    pub mollifier: MollifierSpec,
    pub pair: TestFunctionPair,
}

/// Precomputed multipliers for one `(lattice, coupling, mollifier, pair)`; read-only and shareable.
pub struct Simulator {
    setup: SimulationSetup,
    heat: Vec<f64>,
    filter: Vec<f64>,
    sqrt_beta: f64,
    ito: f64,
    lattice_phi_at_zero: f64,
    initial: Vec<f64>,
    weights: Vec<f64>,
    mean_term: f64,
}

impl Simulator {
    pub fn new(setup: SimulationSetup) -> Result<Self> {
        let lat = setup.lattice;
        let (n, h) = (lat.n, lat.spacing());
        setup.pair.validate()?;
        let needed = 8.0 * setup.pair.max_width().max(1.0);
        if lat.box_side < needed {
            return Err(Error::config(format!("box side {} below 8·max(width, 1) = {needed}", lat.box_side)));
        }
        let leak = lat.heat_leakage(1.0);
        if leak >= MAX_LEAKAGE {
            return Err(Error::config(format!("p(1) leaks {leak:e} of its mass across the box")));
        }
        if !(setup.coupling.beta >= 0.0) {
            return Err(Error::config("coupling must be nonnegative"));
        }
        let fft = RealFft2::new(n);
        let nn = (n * n) as f64;
        let heat = fft.wavenumbers_sq(lat.box_side).iter().map(|k2| (-0.5 * k2 * lat.dt).exp() / nn).collect();

        // mollifier sampled around the origin with periodic distances, normalized to unit lattice mass
        let dist = |i: usize| i.min(n - i) as f64 * h;
        let mut phi: Vec<f64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                setup.mollifier.phi_eps(dist(i).hypot(dist(j)))
            })
            .collect();
        let mass = pairwise_sum(&phi) * h * h;
        phi.iter_mut().for_each(|v| *v /= mass);
        let lattice_phi_at_zero = h * h * pairwise_sum(&phi.iter().map(|v| v * v).collect::<Vec<_>>());
        let scale = h * lat.dt.sqrt() / nn;
        let filter = forward_complex(n, &phi).iter().map(|c| c.re * scale).collect();

        let (initial, weights, mean_term) = match (setup.pair.as_gaussian(), setup.pair.as_grid()) {
            (Some(_), _) => {
                let grid = setup.pair.to_grid(lat.box_side, n);
                let (g, gp) = grid.as_grid().expect("sampled pair");
                (g.values.clone(), gp.values.iter().map(|v| v * h * h).collect(), heat_pairing(1.0, &setup.pair)?)
            }
            (None, Some((g, gp))) => {
                if g.n != n || g.box_side != lat.box_side {
                    return Err(Error::config("gridded test functions must live on the simulation lattice"));
                }
                (g.values.clone(), gp.values.iter().map(|v| v * h * h).collect(), heat_pairing(1.0, &setup.pair)?)
            }
            _ => unreachable!("validated pair"),
        };
        let beta = setup.coupling.beta;
        Ok(Self {
            heat,
            filter,
            sqrt_beta: beta.sqrt(),
            ito: 0.5 * beta * lattice_phi_at_zero * lat.dt,
            lattice_phi_at_zero,
            initial,
            weights,
            mean_term,
            setup,
        })
    }

    pub fn setup(&self) -> &SimulationSetup {
        &self.setup
    }

    pub fn steps(&self) -> usize {
        self.setup.lattice.steps()
    }

    /// `h² Σ φ_ε²`, the pointwise variance per unit time of the lattice noise.
    pub fn lattice_phi_at_zero(&self) -> f64 {
        self.lattice_phi_at_zero
    }

    /// The centering term `⟨g, p(1) g'⟩`.
    pub fn mean_term(&self) -> f64 {
        self.mean_term
    }

    pub fn workspace(&self) -> Workspace {
        let n = self.setup.lattice.n;
        let fft = RealFft2::new(n);
        let spectrum = vec![Complex64::default(); fft.spectrum_len()];
        Workspace { fft, ifft: ComplexIfft2::new(n), spectrum, noise: vec![Complex64::default(); n * n] }
    }

    pub fn initial_state(&self) -> FieldState {
        FieldState { values: self.initial.clone(), time: 0.0, step: 0 }
    }

    fn heat_step(&self, u: &mut [f64], ws: &mut Workspace) {
        ws.fft.forward(u, &mut ws.spectrum);
        for (c, m) in ws.spectrum.iter_mut().zip(&self.heat) {
            *c *= *m;
        }
        ws.fft.inverse_unnormalized(&mut ws.spectrum, u);
    }

    /// Fills `ws.noise` with two mollified increments packed as real and imaginary parts.
    fn fill_noise(&self, a: (&NoiseBank, u64, usize), b: Option<(&NoiseBank, u64, usize)>, ws: &mut Workspace) {
        let n = self.setup.lattice.n;
        let w = Some(self.filter.as_slice());
        a.0.spectrum_into(a.1, a.2, n, Complex64::new(1.0, 0.0), w, false, &mut ws.noise);
        if let Some(b) = b {
            b.0.spectrum_into(b.1, b.2, n, Complex64::new(0.0, 1.0), w, true, &mut ws.noise);
        }
        ws.ifft.process(&mut ws.noise);
    }

    /// The mollified increment `ΔW_ε` of `bank` at `(replica, step)`; variance `h²Σφ_ε²·dt` per site.
    pub fn mollified_increment(&self, bank: &NoiseBank, replica: u64, step: usize, ws: &mut Workspace) -> Vec<f64> {
        self.fill_noise((bank, replica, step), None, ws);
        ws.noise.iter().map(|c| c.re).collect()
    }

    /// `u ← u·exp(√β (a·Re z + b·Im z) − ½βΦ_ε(0)dt)`. Round-off negatives left by the FFT heat
    /// step (of order 1e-18 far from the bulk) are set to zero first.
    fn geometric_update(&self, u: &mut [f64], noise: &[Complex64], a: f64, b: f64) -> bool {
        let (sb, ito) = (self.sqrt_beta, self.ito);
        for (v, z) in u.iter_mut().zip(noise) {
            *v = v.max(0.0) * geometric_factor(sb, ito, a * z.re + b * z.im);
        }
        u.iter().all(|v| v.is_finite())
    }

    fn finish_step(&self, state: &mut FieldState, finite: bool, replica: u64) -> Result<()> {
        state.step += 1;
        state.time = state.step as f64 * self.setup.lattice.dt;
        if finite {
            Ok(())
        } else {
            Err(Error::NumericalOverflow { step: state.step, replica })
        }
    }

    /// One Lie-splitting step driven by an explicit mollified increment field.
    pub fn evolve_step(&self, state: &mut FieldState, increment: &[f64], ws: &mut Workspace) -> Result<()> {
        let n = self.setup.lattice.n;
        if increment.len() != n * n {
            return Err(Error::domain("increment field does not match the lattice"));
        }
        self.heat_step(&mut state.values, ws);
        for (z, inc) in ws.noise.iter_mut().zip(increment) {
            *z = Complex64::new(*inc, 0.0);
        }
        let noise = std::mem::take(&mut ws.noise);
        let finite = self.geometric_update(&mut state.values, &noise, 1.0, 0.0);
        ws.noise = noise;
        self.finish_step(state, finite, u64::MAX)
    }

    /// Runs `[0, 1]` on bank `bank`, calling `visit` after every step.
    pub fn trajectory<V: FnMut(&FieldState)>(
        &self,
        bank: &NoiseBank,
        replica: u64,
        ws: &mut Workspace,
        mut visit: V,
    ) -> Result<FieldState> {
        let steps = self.steps();
        let mut state = self.initial_state();
        for j in 0..steps {
            if j % 2 == 0 {
                let next = (j + 1 < steps).then_some((bank, replica, j + 1));
                self.fill_noise((bank, replica, j), next, ws);
            }
            self.heat_step(&mut state.values, ws);
            let (a, b) = if j % 2 == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            let finite = self.geometric_update(&mut state.values, &ws.noise, a, b);
            self.finish_step(&mut state, finite, replica)?;
            visit(&state);
        }
        Ok(state)
    }

    /// `⟨u, g'⟩ − ⟨g, p(1) g'⟩`.
    pub fn observe(&self, state: &FieldState) -> f64 {
        let prod: Vec<f64> = state.values.iter().zip(&self.weights).map(|(u, w)| u * w).collect();
        pairwise_sum(&prod) - self.mean_term
    }

    /// `F^ε(ξ)` for one replica.
    pub fn run_observable(&self, bank: &NoiseBank, replica: u64, ws: &mut Workspace) -> Result<f64> {
        let state = self.trajectory(bank, replica, ws, |_| {})?;
        Ok(self.observe(&state))
    }

    /// `F^ε(ξ)` and `F^ε(e^{−τ}ξ + √(1−e^{−2τ})ξ')` for every `τ` in `taus`, all driven by the
    /// same base arrays.
    pub fn run_coupled(
        &self,
        taus: &[f64],
        bank: &NoiseBank,
        bank_prime: &NoiseBank,
        replica: u64,
        ws: &mut Workspace,
    ) -> Result<(f64, Vec<f64>)> {
        if let Some(t) = taus.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::domain(format!("resampling time must be >= 0, got {t}")));
        }
        let weights: Vec<(f64, f64)> = taus.iter().map(|t| ((-t).exp(), (-(-2.0 * t).exp_m1()).sqrt())).collect();
        let mut base = self.initial_state();
        let mut coupled: Vec<FieldState> = taus.iter().map(|_| self.initial_state()).collect();
        for j in 0..self.steps() {
            self.fill_noise((bank, replica, j), Some((bank_prime, replica, j)), ws);
            self.heat_step(&mut base.values, ws);
            let finite = self.geometric_update(&mut base.values, &ws.noise, 1.0, 0.0);
            self.finish_step(&mut base, finite, replica)?;
            for (state, &(a, b)) in coupled.iter_mut().zip(&weights) {
                self.heat_step(&mut state.values, ws);
                let finite = self.geometric_update(&mut state.values, &ws.noise, a, b);
                self.finish_step(state, finite, replica)?;
            }
        }
        Ok((self.observe(&base), coupled.iter().map(|s| self.observe(s)).collect()))
    }

    /// `F^ε` for replicas `first..first+count` in parallel; output order follows the replica index.
    pub fn sample_observable(&self, bank: &NoiseBank, first: u64, count: usize) -> Result<Vec<f64>> {
        (0..count)
            .into_par_iter()
            .map_init(|| self.workspace(), |ws, i| self.run_observable(bank, first + i as u64, ws))
            .collect()
    }

    pub fn sample_coupled(
        &self,
        taus: &[f64],
        bank: &NoiseBank,
        bank_prime: &NoiseBank,
        first: u64,
        count: usize,
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        (0..count)
            .into_par_iter()
            .map_init(|| self.workspace(), |ws, i| self.run_coupled(taus, bank, bank_prime, first + i as u64, ws))
            .collect()
    }
}
