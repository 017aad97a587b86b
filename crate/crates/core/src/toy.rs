//! Exact projector machinery on finite product noises.
//!
//! Outcomes of `n` independent coordinates are enumerated in mixed radix with coordinate 0 as the
//! least significant digit. For the sign alphabet digit `b` stands for `x = (−1)^b`, so the Walsh
//! character of a subset mask `S` is `(−1)^{popcount(S & b)}` and the fast Hadamard transform
//! applies directly.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{estimate_correlation, pairwise_sum};

/// Largest number of enumerated outcomes.
pub const MAX_OUTCOMES: u128 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alphabet {
    /// Uniform `±1`.
    Sign,
    /// Three-point Gauss–Hermite quantization of a standard normal: `{−√3, 0, √3}` with weights
    /// `{1/6, 2/3, 1/6}`.
    Gaussian3pt,
}

impl Alphabet {
    pub fn radix(&self) -> usize {
        match self {
            Alphabet::Sign => 2,
            Alphabet::Gaussian3pt => 3,
        }
    }

    pub fn value(&self, digit: usize) -> f64 {
        match self {
            Alphabet::Sign => 1.0 - 2.0 * digit as f64,
            Alphabet::Gaussian3pt => [-(3.0f64.sqrt()), 0.0, 3.0f64.sqrt()][digit],
        }
    }

    pub fn weight(&self, digit: usize) -> f64 {
        match self {
            Alphabet::Sign => 0.5,
            Alphabet::Gaussian3pt => [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0][digit],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteNoise {
    pub n: usize,
    pub alphabet: Alphabet,
}

impl DiscreteNoise {
    pub fn new(n: usize, alphabet: Alphabet) -> Result<Self> {
        let noise = Self { n, alphabet };
        noise.outcome_count()?;
        Ok(noise)
    }

    pub fn sign(n: usize) -> Result<Self> {
        Self::new(n, Alphabet::Sign)
    }

    /// `radix^n`, or an enumeration-bound error beyond [`MAX_OUTCOMES`].
    pub fn outcome_count(&self) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::domain("discrete noise needs at least one coordinate"));
        }
        let outcomes = (self.alphabet.radix() as u128).checked_pow(self.n as u32).unwrap_or(u128::MAX);
        if outcomes > MAX_OUTCOMES {
            return Err(Error::EnumerationBound { outcomes, limit: MAX_OUTCOMES });
        }
        Ok(outcomes as usize)
    }

    fn digit(&self, outcome: usize, coord: usize) -> usize {
        match self.alphabet {
            Alphabet::Sign => (outcome >> coord) & 1,
            Alphabet::Gaussian3pt => (outcome / 3usize.pow(coord as u32)) % 3,
        }
    }

    pub fn coordinate_value(&self, outcome: usize, coord: usize) -> f64 {
        self.alphabet.value(self.digit(outcome, coord))
    }

    /// Probability of every outcome, in enumeration order.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let count = self.outcome_count()?;
        if self.alphabet == Alphabet::Sign {
            return Ok(vec![(0.5f64).powi(self.n as i32); count]);
        }
        Ok((0..count)
            .map(|o| (0..self.n).map(|c| self.alphabet.weight(self.digit(o, c))).product())
            .collect())
    }
}

/// A function of the noise coordinates, stored as its value table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyObservable {
    pub values: Vec<f64>,
}

impl ToyObservable {
    pub fn from_fn<F: Fn(&[f64]) -> f64>(noise: &DiscreteNoise, f: F) -> Result<Self> {
        let count = noise.outcome_count()?;
        let mut x = vec![0.0; noise.n];
        let values = (0..count)
            .map(|o| {
                for (c, v) in x.iter_mut().enumerate() {
                    *v = noise.coordinate_value(o, c);
                }
                f(&x)
            })
            .collect();
        Ok(Self { values })
    }

    /// `x_i`.
    pub fn coordinate(noise: &DiscreteNoise, i: usize) -> Result<Self> {
        check_coord(noise, i)?;
        Self::from_fn(noise, |x| x[i])
    }

    /// `Π_{i∈S} x_i`.
    pub fn product(noise: &DiscreteNoise, coords: &[usize]) -> Result<Self> {
        for &i in coords {
            check_coord(noise, i)?;
        }
        Self::from_fn(noise, |x| coords.iter().map(|&i| x[i]).product())
    }

    /// Sign of the coordinate sum (ties give 0).
    pub fn majority(noise: &DiscreteNoise) -> Result<Self> {
        Self::from_fn(noise, |x| {
            let s: f64 = x.iter().sum();
            if s.abs() < 1e-12 {
                0.0
            } else {
                s.signum()
            }
        })
    }

    /// Independent integer values uniform in `[−1000, 1000]`; integer tables keep every projection
    /// below exact in floating point.
    pub fn random_integer(noise: &DiscreteNoise, seed: u64) -> Result<Self> {
        let count = noise.outcome_count()?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        Ok(Self { values: (0..count).map(|_| rng.gen_range(-1000i32..=1000) as f64).collect() })
    }

    /// Inverse Walsh transform of a coefficient map `{subset mask → coefficient}`.
    pub fn from_walsh(noise: &DiscreteNoise, coefficients: &BTreeMap<u32, f64>) -> Result<Self> {
        require_sign(noise)?;
        let count = noise.outcome_count()?;
        let mut values = vec![0.0; count];
        for (&mask, &c) in coefficients {
            if mask as usize >= count {
                return Err(Error::domain(format!("subset mask {mask:#x} outside {} coordinates", noise.n)));
            }
            values[mask as usize] = c;
        }
        fwht(&mut values);
        Ok(Self { values })
    }

    fn check(&self, noise: &DiscreteNoise) -> Result<usize> {
        let count = noise.outcome_count()?;
        if self.values.len() != count {
            return Err(Error::domain(format!(
                "observable table has {} entries, noise has {count} outcomes",
                self.values.len()
            )));
        }
        Ok(count)
    }

    pub fn expectation(&self, noise: &DiscreteNoise) -> Result<f64> {
        self.check(noise)?;
        let p = noise.probabilities()?;
        Ok(pairwise_sum(&self.values.iter().zip(&p).map(|(v, p)| v * p).collect::<Vec<_>>()))
    }

    /// `E[X²]`.
    pub fn norm_sq(&self, noise: &DiscreteNoise) -> Result<f64> {
        self.check(noise)?;
        let p = noise.probabilities()?;
        Ok(pairwise_sum(&self.values.iter().zip(&p).map(|(v, p)| v * v * p).collect::<Vec<_>>()))
    }

    pub fn variance(&self, noise: &DiscreteNoise) -> Result<f64> {
        let m = self.expectation(noise)?;
        Ok(self.norm_sq(noise)? - m * m)
    }
}

fn check_coord(noise: &DiscreteNoise, i: usize) -> Result<()> {
    if i >= noise.n {
        return Err(Error::domain(format!("coordinate {i} outside 0..{}", noise.n)));
    }
    Ok(())
}

fn require_sign(noise: &DiscreteNoise) -> Result<()> {
    if noise.alphabet != Alphabet::Sign {
        return Err(Error::Unsupported("Walsh analysis needs the sign alphabet".into()));
    }
    Ok(())
}

/// Ordered disjoint blocks of coordinate indices (0-based) covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl CellPartition {
    pub fn new(blocks: Vec<Vec<usize>>) -> Self {
        Self { blocks }
    }

    pub fn singletons(n: usize) -> Self {
        Self { blocks: (0..n).map(|i| vec![i]).collect() }
    }

    /// Consecutive blocks of `size` coordinates (the last may be shorter).
    pub fn intervals(n: usize, size: usize) -> Self {
        let size = size.max(1);
        Self { blocks: (0..n).step_by(size).map(|a| (a..(a + size).min(n)).collect()).collect() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for b in &self.blocks {
            if b.is_empty() {
                return Err(Error::config("partition has an empty block"));
            }
            for &i in b {
                if i >= n {
                    return Err(Error::config(format!("partition index {i} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::config(format!("coordinate {i} appears in two blocks")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("coordinate {i} is not covered by the partition")));
        }
        Ok(())
    }

    /// Whether every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &CellPartition) -> bool {
        let owner: BTreeMap<usize, usize> =
            coarser.blocks.iter().enumerate().flat_map(|(j, b)| b.iter().map(move |&i| (i, j))).collect();
        self.blocks.iter().all(|b| {
            let first = owner.get(&b[0]);
            first.is_some() && b.iter().all(|i| owner.get(i) == first)
        })
    }
}

/// `E[X | x_B]` indexed by the block digits, with the marginal probability of each block value.
fn block_conditional(
    x: &ToyObservable,
    block: &[usize],
    noise: &DiscreteNoise,
    p: &[f64],
) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let radix = noise.alphabet.radix();
    let size = radix.pow(block.len() as u32);
    let mut acc = vec![0.0; size];
    let mut mass = vec![0.0; size];
    let index: Vec<usize> = (0..x.values.len())
        .map(|o| block.iter().rev().fold(0, |idx, &c| idx * radix + noise.digit(o, c)))
        .collect();
    for ((&idx, v), q) in index.iter().zip(&x.values).zip(p) {
        acc[idx] += v * q;
        mass[idx] += q;
    }
    let cond = acc.iter().zip(&mass).map(|(a, m)| a / m).collect();
    (index, cond, mass)
}

/// `P_n X = Σ_blocks (E[X | block] − E[X])`, exactly.
pub fn project_pn(x: &ToyObservable, partition: &CellPartition, noise: &DiscreteNoise) -> Result<ToyObservable> {
    x.check(noise)?;
    partition.validate(noise.n)?;
    let p = noise.probabilities()?;
    let mean = x.expectation(noise)?;
    let mut out = vec![0.0; x.values.len()];
    for block in &partition.blocks {
        let (index, cond, _) = block_conditional(x, block, noise, &p);
        for (o, &idx) in out.iter_mut().zip(&index) {
            *o += cond[idx] - mean;
        }
    }
    Ok(ToyObservable { values: out })
}

/// `Σ_blocks Var(E[X | block])`.
pub fn block_variance_sum(x: &ToyObservable, partition: &CellPartition, noise: &DiscreteNoise) -> Result<f64> {
    x.check(noise)?;
    partition.validate(noise.n)?;
    let p = noise.probabilities()?;
    let mean = x.expectation(noise)?;
    Ok(partition
        .blocks
        .iter()
        .map(|block| {
            let (_, cond, mass) = block_conditional(x, block, noise, &p);
            pairwise_sum(&cond.iter().zip(&mass).map(|(c, m)| m * (c - mean).powi(2)).collect::<Vec<_>>())
        })
        .sum())
}

/// In-place unnormalized fast Walsh–Hadamard transform.
fn fwht(values: &mut [f64]) {
    let len = values.len();
    let mut h = 1;
    while h < len {
        let butterfly = |chunk: &mut [f64]| {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        };
        if len >= 1 << 16 {
            values.par_chunks_mut(2 * h).for_each(butterfly);
        } else {
            values.chunks_mut(2 * h).for_each(butterfly);
        }
        h *= 2;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalshSpectrum {
    pub n: usize,
    /// Coefficient of the character `Π_{i∈S} x_i`, indexed by the subset mask `S`.
    pub coefficients: Vec<f64>,
    /// `W_k = Σ_{|S|=k} coefficient²`, `k = 0..=n`.
    pub degree_mass: Vec<f64>,
}

impl WalshSpectrum {
    /// Nonzero coefficients as a `{mask → coefficient}` map.
    pub fn coefficient_map(&self) -> BTreeMap<u32, f64> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(s, c)| (s as u32, *c))
            .collect()
    }

    /// The part of `X` of Walsh degree exactly `k`.
    pub fn degree_part(&self, k: usize, noise: &DiscreteNoise) -> Result<ToyObservable> {
        let map = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|(s, _)| s.count_ones() as usize == k)
            .map(|(s, c)| (s as u32, *c))
            .collect();
        ToyObservable::from_walsh(noise, &map)
    }
}

pub fn walsh_spectrum(x: &ToyObservable, noise: &DiscreteNoise) -> Result<WalshSpectrum> {
    require_sign(noise)?;
    let count = x.check(noise)?;
    let mut coefficients = x.values.clone();
    fwht(&mut coefficients);
    let scale = 1.0 / count as f64;
    coefficients.iter_mut().for_each(|c| *c *= scale);
    let mut degree_mass = vec![0.0; noise.n + 1];
    for (s, c) in coefficients.iter().enumerate() {
        degree_mass[s.count_ones() as usize] += c * c;
    }
    Ok(WalshSpectrum { n: noise.n, coefficients, degree_mass })
}

/// `Corr(X(x), X(y))` for `ρ`-correlated signs: `Σ_{k≥1} ρ^k W_k / Σ_{k≥1} W_k`.
pub fn resample_correlation_discrete(x: &ToyObservable, rho: f64, noise: &DiscreteNoise) -> Result<f64> {
    check_rho(rho)?;
    let spec = walsh_spectrum(x, noise)?;
    let total: f64 = spec.degree_mass[1..].iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedCorrelation("constant observable".into()));
    }
    let num: f64 = spec.degree_mass[1..].iter().enumerate().map(|(i, w)| rho.powi(i as i32 + 1) * w).sum();
    Ok(num / total)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("resampling correlation must lie in [0, 1], got {rho}")));
    }
    Ok(())
}

/// Monte Carlo cross-check: each sign is kept with probability `(1+ρ)/2` and flipped otherwise.
/// Returns the Pearson estimate and its jackknife standard error.
pub fn resample_correlation_mc(
    x: &ToyObservable,
    rho: f64,
    noise: &DiscreteNoise,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_rho(rho)?;
    require_sign(noise)?;
    x.check(noise)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let keep = 0.5 * (1.0 + rho);
    let mask = (1usize << noise.n) - 1;
    let (mut a, mut b) = (Vec::with_capacity(samples), Vec::with_capacity(samples));
    for _ in 0..samples {
        let o = rng.gen::<u64>() as usize & mask;
        let mut flip = 0usize;
        for c in 0..noise.n {
            if !rng.gen_bool(keep) {
                flip |= 1 << c;
            }
        }
        a.push(x.values[o]);
        b.push(x.values[o ^ flip]);
    }
    estimate_correlation(&a, &b)
}

/// `‖P_n X‖² = Σ_blocks Var(E[X | block])` along a nested ladder of partitions.
pub fn iterate_pn_refinement(
    x: &ToyObservable,
    ladder: &[CellPartition],
    noise: &DiscreteNoise,
) -> Result<Vec<f64>> {
    for (level, pair) in ladder.windows(2).enumerate() {
        if !pair[1].refines(&pair[0]) {
            return Err(Error::config(format!("partition {} does not refine partition {level}", level + 1)));
        }
    }
    ladder.iter().map(|p| block_variance_sum(x, p, noise)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_bound() {
        assert!(DiscreteNoise::sign(24).is_ok());
        assert!(matches!(DiscreteNoise::sign(25), Err(Error::EnumerationBound { .. })));
        assert!(matches!(DiscreteNoise::new(16, Alphabet::Gaussian3pt), Err(Error::EnumerationBound { .. })));
    }

    #[test]
    fn three_point_alphabet_is_standardized() {
        let a = Alphabet::Gaussian3pt;
        let m: f64 = (0..3).map(|d| a.weight(d) * a.value(d)).sum();
        let v: f64 = (0..3).map(|d| a.weight(d) * a.value(d).powi(2)).sum();
        let w: f64 = (0..3).map(|d| a.weight(d)).sum();
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-15 && (w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn linear_and_product_projections() {
        let noise = DiscreteNoise::sign(4).unwrap();
        let singles = CellPartition::singletons(4);
        let x1 = ToyObservable::coordinate(&noise, 0).unwrap();
        assert_eq!(project_pn(&x1, &singles, &noise).unwrap(), x1);
        let x12 = ToyObservable::product(&noise, &[0, 1]).unwrap();
        assert!(project_pn(&x12, &singles, &noise).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn partition_checks() {
        assert!(CellPartition::new(vec![vec![0], vec![0, 1]]).validate(2).is_err());
        assert!(CellPartition::new(vec![vec![0]]).validate(2).is_err());
        assert!(CellPartition::new(vec![vec![], vec![0, 1]]).validate(2).is_err());
        let coarse = CellPartition::intervals(4, 2);
        assert!(CellPartition::singletons(4).refines(&coarse));
        assert!(!CellPartition::new(vec![vec![1, 2], vec![0], vec![3]]).refines(&coarse));
    }

    #[test]
    fn non_nested_ladder_is_rejected() {
        let noise = DiscreteNoise::sign(4).unwrap();
        let x = ToyObservable::majority(&noise).unwrap();
        let ladder = [CellPartition::singletons(4), CellPartition::intervals(4, 2)];
        assert!(matches!(iterate_pn_refinement(&x, &ladder, &noise), Err(Error::Config(_))));
    }

    #[test]
    fn walsh_rejects_three_point_noise() {
        let noise = DiscreteNoise::new(3, Alphabet::Gaussian3pt).unwrap();
        let x = ToyObservable::coordinate(&noise, 0).unwrap();
        assert!(matches!(walsh_spectrum(&x, &noise), Err(Error::Unsupported(_))));
    }

    #[test]
    fn three_point_projection_of_linear_function() {
        let noise = DiscreteNoise::new(4, Alphabet::Gaussian3pt).unwrap();
        let x = ToyObservable::from_fn(&noise, |x| 2.0 * x[0] - x[3]).unwrap();
        let p = project_pn(&x, &CellPartition::singletons(4), &noise).unwrap();
        for (a, b) in p.values.iter().zip(&x.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
