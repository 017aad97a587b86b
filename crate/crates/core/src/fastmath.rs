//! Branch-free `exp` that the compiler can vectorize in the lattice update loop.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-01;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const SHIFTER: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52

/// `e^x` to relative error below 1e-14 for `x` in [−708, 709]; inputs outside are clamped.
#[inline(always)]
pub fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let t = x * LOG2E + SHIFTER;
    let bits = t.to_bits();
    let k = t - SHIFTER;
    let r = x - k * LN2_HI - k * LN2_LO;
    // Taylor polynomial on |r| ≤ ln2/2, degree 11
    let mut p = 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let scale = f64::from_bits(bits.wrapping_add(1023) << 52);
    p * scale
}
