//! Normal and chi-square tail functions used by the p-value combiners and
//! the data generators.
//!
//! Upper tails are computed directly rather than as `1 - cdf` so that very
//! small p-values keep their relative precision.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal CDF, accurate to double precision.
///
/// Hart's rational approximation for `|x| < 3` and a continued fraction
/// beyond; both carry the exact density factor, so tails keep their
/// relative precision down to about `Phi(-38.5)`.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x.abs();
    let tail = if z > 38.5 {
        0.0
    } else if z >= 3.0 {
        laplace_tail(z)
    } else {
        hart_tail(z)
    };
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Hart's rational approximation of the upper tail for `0 <= z < 3`.
fn hart_tail(z: f64) -> f64 {
    const N: [f64; 7] = [
        3.526_249_659_989_11e-2,
        0.700_383_064_443_688,
        6.373_962_203_531_65,
        33.912_866_078_383,
        112.079_291_497_871,
        221.213_596_169_931,
        220.206_867_912_376,
    ];
    const D: [f64; 8] = [
        8.838_834_764_831_84e-2,
        1.755_667_163_182_64,
        16.064_177_579_207,
        86.780_732_202_946_1,
        296.564_248_779_674,
        637.333_633_378_831,
        793.826_512_519_948,
        440.413_735_824_752,
    ];
    let num = N.iter().fold(0.0, |acc, &c| acc * z + c);
    let den = D.iter().fold(0.0, |acc, &c| acc * z + c);
    (-z * z / 2.0).exp() * num / den
}

/// Upper tail for `z >= 3` by Laplace's continued fraction
/// `phi(z) / (z + 1/(z + 2/(z + 3/(z + ...))))`, evaluated bottom-up.
fn laplace_tail(z: f64) -> f64 {
    let terms = 8 + (2000.0 / (z * z)) as usize;
    let mut acc = z;
    for k in (1..=terms).rev() {
        acc = z + k as f64 / acc;
    }
    (-z * z / 2.0).exp() / SQRT_2PI / acc
}

/// Standard normal upper tail, `1 - Phi(x)`, without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step against
/// [`normal_cdf`]; returns `-inf` / `+inf` at 0 / 1.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // Reflect into the lower tail, where the refinement keeps precision.
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (x * x / 2.0).exp();
    let refined = x - u / (1.0 + x * u / 2.0);
    if refined.is_finite() {
        refined
    } else {
        x
    }
}

/// Upper tail of the chi-square distribution with `2 * half_df` degrees of
/// freedom at `x`.
///
/// For even degrees of freedom the tail is the Poisson sum
/// `exp(-x/2) * sum_{k < half_df} (x/2)^k / k!`, evaluated in log space.
pub fn chi_square_sf_even(x: f64, half_df: usize) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() || half_df == 0 {
        return 0.0;
    }
    let lambda = x / 2.0;
    let log_lambda = lambda.ln();
    // log of each Poisson term; the largest sits near k = lambda.
    let mut log_terms = Vec::with_capacity(half_df);
    let mut log_term = -lambda;
    for k in 0..half_df {
        if k > 0 {
            log_term += log_lambda - (k as f64).ln();
        }
        log_terms.push(log_term);
    }
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_terms.iter().map(|&t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-x * x / 2.0).exp() * FRAC_1_SQRT_2 / PI.sqrt()
}
