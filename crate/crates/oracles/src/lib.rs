//! Reference values computed by routes that share no code with `shflab-core`: composite Simpson
//! rules, direct enumeration and brute-force Monte Carlo.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// `A · exp(−|x − c|²/(2σ²))`.
#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn unit() -> Self {
        Self { center: [0.0, 0.0], width: 1.0, amplitude: 1.0 }
    }

    fn mass(&self) -> f64 {
        self.amplitude * 2.0 * PI * self.width * self.width
    }

    /// `(p(u) g)(y)`.
    fn heat(&self, u: f64, y: [f64; 2]) -> f64 {
        let v = self.width * self.width + u;
        let r2 = (y[0] - self.center[0]).powi(2) + (y[1] - self.center[1]).powi(2);
        self.mass() * (-r2 / (2.0 * v)).exp() / (2.0 * PI * v)
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∫₀^∞ t^{u−1} e^{θu} / Γ(u) du` by Simpson on `[0, 80]`.
pub fn j_simpson(theta: f64, t: f64, intervals: usize) -> f64 {
    let lt = t.ln();
    let f = |u: f64| {
        if u == 0.0 {
            0.0
        } else {
            ((u - 1.0) * lt + theta * u - libm::lgamma(u)).exp()
        }
    };
    simpson(f, 0.0, 80.0, intervals)
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let m = sum / nf;
    let var = (sum_sq / nf - m * m) * nf / (nf - 1.0);
    (m, (var.max(0.0) / nf).sqrt())
}

/// Brute-force Monte Carlo of `⟨g^{⊗2}, W^θ(t) g'^{⊗2}⟩`.
///
/// `j^θ` is written as the mixture `∫ ds e^{θs} u'^{s−1}/Γ(s)`; `s` is drawn from `Exp(1)` and
/// `u' = t V^{1/s}`. The split `u` is uniform on `(0, t − u')`. Spatially, `x₁ ∼ g`, `y ∼ N(x₁, u)`,
/// `y' ∼ N(y, u'/2)` and `x'₁ ∼ N(y', u'')` are sampled (eight real coordinates); the two remaining
/// legs `(p(u)g)(y)` and `(p(u'')g')(y')` are evaluated in closed form. Returns mean and standard
/// error.
pub fn w_pairing_mc(theta: f64, t: f64, g: Bump, gp: Bump, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let normal = |rng: &mut Xoshiro256PlusPlus, sd: f64| -> [f64; 2] {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        [a * sd, b * sd]
    };
    for _ in 0..samples {
        let s: f64 = Exp1.sample(&mut rng);
        let v: f64 = rng.gen();
        let up = t * v.powf(1.0 / s);
        let time_weight = (s * (1.0 + theta) + s * t.ln() - libm::lgamma(s + 1.0)).exp() * (t - up);
        let u = rng.gen::<f64>() * (t - up);
        let upp = (t - up - u).max(0.0);
        let dx = normal(&mut rng, g.width);
        let x1 = [g.center[0] + dx[0], g.center[1] + dx[1]];
        let d = normal(&mut rng, u.sqrt());
        let y = [x1[0] + d[0], x1[1] + d[1]];
        let d = normal(&mut rng, (0.5 * up).sqrt());
        let yp = [y[0] + d[0], y[1] + d[1]];
        let d = normal(&mut rng, upp.sqrt());
        let xp1 = [yp[0] + d[0], yp[1] + d[1]];
        let gp_at = gp.amplitude
            * (-((xp1[0] - gp.center[0]).powi(2) + (xp1[1] - gp.center[1]).powi(2)) / (2.0 * gp.width * gp.width)).exp();
        let value = 4.0 * PI * time_weight * g.mass() * g.heat(u, y) * gp.heat(upp, yp) * gp_at;
        sum += value;
        sum_sq += value * value;
    }
    mean_and_se(sum, sum_sq, samples)
}

/// First chaos integral at `β = 1` for centered bumps and a gaussian mollifier, restricted to
/// interaction times in `[s, t]`.
///
/// In absolute coordinates `f = (p(τ)g)(p(1−τ)g')` is a centered Gaussian, and
/// `∫∫ Φ_ε(x−y) f(x) f(y)` is a single Gaussian convolution; the remaining `τ` integral is done by
/// Simpson.
pub fn first_chaos_simpson(eps: f64, g: Bump, gp: Bump, s: f64, t: f64, intervals: usize) -> f64 {
    let (a, b) = (g.width * g.width, gp.width * gp.width);
    let f = |tau: f64| {
        let (v1, v2) = (a + tau, b + 1.0 - tau);
        let a1 = g.amplitude * a / v1;
        let a2 = gp.amplitude * b / v2;
        let v = v1 * v2 / (v1 + v2);
        (a1 * a2).powi(2) * (2.0 * PI * v).powi(2) / (2.0 * PI * (2.0 * v + 2.0 * eps * eps))
    };
    simpson(f, s, t, intervals)
}

/// `∫∫ Φ(x) log|x − x'| Φ(x') dx dx'` for the unit compact bump `C e^{−1/(1−|x|²)}`, as
/// `E log|X₁ + X₂ − X₃ − X₄|` with `X_i` drawn by rejection from the disk.
pub fn c_phi_compact_mc(samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let draw = |rng: &mut Xoshiro256PlusPlus| loop {
        let (x, y): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r2 = x * x + y * y;
        if r2 >= 1.0 {
            continue;
        }
        if rng.gen::<f64>() < (1.0 - 1.0 / (1.0 - r2)).exp() {
            return [x, y];
        }
    };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let p: Vec<[f64; 2]> = (0..4).map(|_| draw(&mut rng)).collect();
        let dx = p[0][0] + p[1][0] - p[2][0] - p[3][0];
        let dy = p[0][1] + p[1][1] - p[2][1] - p[3][1];
        let v = 0.5 * (dx * dx + dy * dy).ln();
        sum += v;
        sum_sq += v * v;
    }
    mean_and_se(sum, sum_sq, samples)
}

/// Walsh coefficients by direct summation over all `4^n` (subset, outcome) pairs.
pub fn walsh_direct(values: &[f64], n: usize) -> Vec<f64> {
    let count = 1usize << n;
    assert_eq!(values.len(), count);
    (0..count)
        .map(|s| {
            let sum: f64 = values
                .iter()
                .enumerate()
                .map(|(b, v)| if (s & b).count_ones() % 2 == 0 { *v } else { -*v })
                .sum();
            sum / count as f64
        })
        .collect()
}

/// `samples` pairs of standard normals with correlation `rho`.
pub fn correlated_normals(rho: f64, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    (0..samples)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            (a, rho * a + c * b)
        })
        .unzip()
}
