//! Branch-free `tanh` for whole activation slices.
//!
//! libm's scalar `tanh` dominates the forward pass, so this evaluates the
//! classic Cephes rational forms with selects instead of branches, which lets
//! the loop vectorise. Accuracy is within a few ulp of `f64::tanh`.

// tanh(x) = x + x z P(z)/Q(z), z = x², for |x| < 0.625
const TP: [f64; 3] = [-9.643_991_794_250_523e-1, -9.928_772_310_019_186e1, -1.614_687_684_417_084_5e3];
const TQ: [f64; 3] = [1.128_116_784_916_329_3e2, 2.235_488_390_601_004_5e3, 4.844_063_053_251_255e3];

// exp(r) = 1 + 2r P(r²) / (Q(r²) − r P(r²)) on |r| ≤ ln2/2
const EP: [f64; 3] = [1.261_771_930_748_105_9e-4, 3.029_944_077_074_419_6e-2, 9.999_999_999_999_999e-1];
const EQ: [f64; 4] = [3.001_985_051_386_644_5e-6, 2.524_483_403_496_841e-3, 2.272_655_482_081_550_3e-1, 2.0];
const LN2_HI: f64 = 6.931_457_519_531_25e-1;
const LN2_LO: f64 = 1.428_606_820_309_417_2e-6;

/// `exp(x)` for `0 ≤ x ≤ 40`. Rounding and the power of two go through the
/// bit pattern of `x log2(e) + 1.5·2^52`, so no float-to-int conversion is
/// needed and the loop vectorises.
#[inline(always)]
fn exp_bounded(x: f64) -> f64 {
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let k = x * std::f64::consts::LOG2_E + SHIFT;
    let n = k - SHIFT;
    let r = x - n * LN2_HI - n * LN2_LO;
    let rr = r * r;
    let p = r * ((EP[0] * rr + EP[1]) * rr + EP[2]);
    let q = ((EQ[0] * rr + EQ[1]) * rr + EQ[2]) * rr + EQ[3];
    let e = 1.0 + 2.0 * p / (q - p);
    // low bits of k hold n; 0 ≤ n ≤ 58
    let scale = f64::from_bits((k.to_bits().wrapping_add(1023)) << 52);
    e * scale
}

#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs().min(20.0);
    let z = x * x;
    let small = x + x * z * ((TP[0] * z + TP[1]) * z + TP[2]) / (((z + TQ[0]) * z + TQ[1]) * z + TQ[2]);
    let large = 1.0 - 2.0 / (exp_bounded(2.0 * a) + 1.0);
    let v = if a < 0.625 { small.abs() } else { large }.copysign(x);
    // keep NaN propagating
    if x.is_nan() {
        x
    } else {
        v
    }
}

macro_rules! slice_kernels {
    ($f64_name:ident, $f32_name:ident $(, #[$attr:meta])?) => {
        $(#[$attr])?
        unsafe fn $f64_name(v: &mut [f64]) {
            for x in v {
                *x = tanh(*x);
            }
        }

        $(#[$attr])?
        unsafe fn $f32_name(v: &mut [f32]) {
            for x in v {
                *x = tanh(*x as f64) as f32;
            }
        }
    };
}

slice_kernels!(generic_f64, generic_f32);
#[cfg(target_arch = "x86_64")]
slice_kernels!(avx2_f64, avx2_f32, #[target_feature(enable = "avx2,fma")]);

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    use std::sync::OnceLock;
    static AVX2: OnceLock<bool> = OnceLock::new();
    *AVX2.get_or_init(|| is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma"))
}

pub fn tanh_slice_f64(v: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports the enabled features.
        return unsafe { avx2_f64(v) };
    }
    // SAFETY: no target features required.
    unsafe { generic_f64(v) }
}

pub fn tanh_slice_f32(v: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports the enabled features.
        return unsafe { avx2_f32(v) };
    }
    // SAFETY: no target features required.
    unsafe { generic_f32(v) }
}
