//! Small numeric helpers shared across the estimation modules.

use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal upper-tail probability P(Z > z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// log10 of the two-sided normal p-value 2·P(Z > |z|), computed stably for
/// arbitrarily large |z| (where the p-value itself underflows f64).
pub fn log10_two_sided_normal_p(z: f64) -> f64 {
    let z = z.abs();
    let p = 2.0 * normal_sf(z);
    if p > 1e-290 {
        return p.log10();
    }
    // Asymptotic expansion: ln P(Z>z) = -z^2/2 - ln z - ln sqrt(2pi)
    //                                   + ln(1 - 1/z^2 + 3/z^4 - 15/z^6)
    let zi = 1.0 / (z * z);
    let series = 1.0 - zi + 3.0 * zi * zi - 15.0 * zi * zi * zi;
    let ln_sf = -0.5 * z * z - z.ln() - LN_SQRT_2PI + series.ln();
    (ln_sf + std::f64::consts::LN_2) / std::f64::consts::LN_10
}

/// Kolmogorov asymptotic tail probability Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test of `sample` against the CDF `f`.
/// Returns `(d_n, p)` with the asymptotic p-value Q(sqrt(n)·D).
pub fn ks_test<F: Fn(f64) -> f64>(sample: &mut [f64], f: F) -> (f64, f64) {
    sample.sort_unstable_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let fx = f(x);
        d = d.max(fx - i as f64 / n).max((i + 1) as f64 / n - fx);
    }
    (d, kolmogorov_sf(n.sqrt() * d))
}

/// Empirical quantile with linear interpolation between closest order
/// statistics (the `h = (n-1)p` convention). `sorted` must be ascending.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Empirical quantile as a plain order statistic (nearest-rank, ceiling
/// convention): the smallest value with at least `p·n` mass at or below it.
pub fn quantile_order_stat(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    let k = (p * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `None` for fewer than two observations.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}
