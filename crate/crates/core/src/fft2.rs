//! Two-dimensional FFTs on square periodic grids.
//!
//! Real transforms return the half spectrum in transposed layout: entry `kx * n + ky`
//! with `kx` in `0..=n/2` (transform along rows) and `ky` in `0..n`. Every multiplier
//! used in this crate depends on `|k|` only, so the layout is never visible to callers
//! that build their multipliers through [`RealFft2::wavenumbers_sq`].

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

/// Angular wavenumber of index `i` on a periodic grid of `n` points and side `box_side`.
pub fn wavenumber(i: usize, n: usize, box_side: f64) -> f64 {
    let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    2.0 * std::f64::consts::PI * m / box_side
}

pub struct RealFft2 {
    n: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    rows: Vec<Complex64>,
    row_in: Vec<f64>,
    real_scratch: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RealFft2 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2 && n % 2 == 0, "grid size must be even");
        let mut rp = RealFftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(n);
        let c2r = rp.plan_fft_inverse(n);
        let mut cp = FftPlanner::<f64>::new();
        let fwd = cp.plan_fft_forward(n);
        let inv = cp.plan_fft_inverse(n);
        let half = n / 2 + 1;
        let real_scratch_len = r2c.get_scratch_len().max(c2r.get_scratch_len());
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            n,
            half,
            r2c,
            c2r,
            fwd,
            inv,
            rows: vec![Complex64::default(); n * half],
            row_in: vec![0.0; n],
            real_scratch: vec![Complex64::default(); real_scratch_len],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spectrum_len(&self) -> usize {
        self.half * self.n
    }

    /// Squared wavenumbers |k|² in spectrum layout.
    pub fn wavenumbers_sq(&self, box_side: f64) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.spectrum_len());
        for kx in 0..self.half {
            let a = wavenumber(kx, n, box_side);
            for ky in 0..n {
                let b = wavenumber(ky, n, box_side);
                out.push(a * a + b * b);
            }
        }
        out
    }

    /// Multiplicity of each half-spectrum entry in the full spectrum (1 or 2), for Parseval sums.
    pub fn multiplicities(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spectrum_len());
        for kx in 0..self.half {
            let w = if kx == 0 || kx == self.n / 2 { 1.0 } else { 2.0 };
            out.extend(std::iter::repeat(w).take(self.n));
        }
        out
    }

    /// Forward transform of a row-major `n × n` real field.
    pub fn forward(&mut self, input: &[f64], spectrum: &mut [Complex64]) {
        let (n, half) = (self.n, self.half);
        assert_eq!(input.len(), n * n);
        assert_eq!(spectrum.len(), n * half);
        for (src, dst) in input.chunks_exact(n).zip(self.rows.chunks_exact_mut(half)) {
            self.row_in.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut self.row_in, dst, &mut self.real_scratch)
                .expect("buffer sizes match the plan");
        }
        transpose::transpose(&self.rows, spectrum, half, n);
        self.fwd.process_with_scratch(spectrum, &mut self.scratch);
    }

    /// Inverse transform without the `1/n²` normalization; `spectrum` is used as workspace.
    pub fn inverse_unnormalized(&mut self, spectrum: &mut [Complex64], output: &mut [f64]) {
        let (n, half) = (self.n, self.half);
        assert_eq!(output.len(), n * n);
        assert_eq!(spectrum.len(), n * half);
        self.inv.process_with_scratch(spectrum, &mut self.scratch);
        transpose::transpose(spectrum, &mut self.rows, n, half);
        for (src, dst) in self.rows.chunks_exact_mut(half).zip(output.chunks_exact_mut(n)) {
            src[0].im = 0.0;
            src[half - 1].im = 0.0;
            self.c2r
                .process_with_scratch(src, dst, &mut self.real_scratch)
                .expect("buffer sizes match the plan");
        }
    }

    pub fn inverse(&mut self, spectrum: &mut [Complex64], output: &mut [f64]) {
        self.inverse_unnormalized(spectrum, output);
        let scale = 1.0 / (self.n * self.n) as f64;
        output.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Full complex 2D inverse transform (unnormalized) mapping a spectrum in transposed
/// layout `[kx][ky]` to a row-major spatial field `[y][x]`.
pub struct ComplexIfft2 {
    n: usize,
    inv: Arc<dyn Fft<f64>>,
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl ComplexIfft2 {
    pub fn new(n: usize) -> Self {
        let inv = FftPlanner::<f64>::new().plan_fft_inverse(n);
        let scratch = vec![Complex64::default(); inv.get_inplace_scratch_len()];
        Self { n, inv, tmp: vec![Complex64::default(); n * n], scratch }
    }

    /// Transforms `data` in place; on return it holds the spatial field in row-major order.
    pub fn process(&mut self, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        self.inv.process_with_scratch(data, &mut self.scratch);
        transpose::transpose(data, &mut self.tmp, n, n);
        self.inv.process_with_scratch(&mut self.tmp, &mut self.scratch);
        data.copy_from_slice(&self.tmp);
    }
}

/// Full complex forward 2D transform of a row-major field; result in `[kx][ky]` layout.
pub fn forward_complex(n: usize, field: &[f64]) -> Vec<Complex64> {
    assert_eq!(field.len(), n * n);
    let fwd = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut data: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut data);
    let mut out = vec![Complex64::default(); n * n];
    transpose::transpose(&data, &mut out, n, n);
    fwd.process(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize) -> Vec<f64> {
        (0..n * n).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.3).collect()
    }

    #[test]
    fn real_round_trip() {
        let n = 16;
        let f = field(n);
        let mut fft = RealFft2::new(n);
        let mut spec = vec![Complex64::default(); fft.spectrum_len()];
        fft.forward(&f, &mut spec);
        let mut back = vec![0.0; n * n];
        fft.inverse(&mut spec, &mut back);
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn half_spectrum_matches_full_transform() {
        let n = 8;
        let f = field(n);
        let mut fft = RealFft2::new(n);
        let mut spec = vec![Complex64::default(); fft.spectrum_len()];
        fft.forward(&f, &mut spec);
        let full = forward_complex(n, &f);
        for kx in 0..=n / 2 {
            for ky in 0..n {
                assert!((spec[kx * n + ky] - full[kx * n + ky]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_inverse_inverts_forward() {
        let n = 8;
        let f = field(n);
        let mut spec = forward_complex(n, &f);
        ComplexIfft2::new(n).process(&mut spec);
        for (a, b) in f.iter().zip(&spec) {
            assert!((a - b.re / (n * n) as f64).abs() < 1e-13);
            assert!(b.im.abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_with_multiplicities() {
        let n = 16;
        let f = field(n);
        let mut fft = RealFft2::new(n);
        let mut spec = vec![Complex64::default(); fft.spectrum_len()];
        fft.forward(&f, &mut spec);
        let direct: f64 = f.iter().map(|v| v * v).sum();
        let spectral: f64 = spec
            .iter()
            .zip(fft.multiplicities())
            .map(|(c, w)| w * c.norm_sqr())
            .sum::<f64>()
            / (n * n) as f64;
        assert!((direct - spectral).abs() < 1e-10 * direct);
    }
}
