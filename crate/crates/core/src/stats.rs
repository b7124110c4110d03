//! Correlation coefficients and the BCa bootstrap interval.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::sqrt;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Empty("need at least two observations"));
    }
    Ok(())
}

/// Pearson correlation. Errors when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant sample"));
    }
    Ok((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by
/// one Halley step against [`normal_cdf`].
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
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < LOW {
        tail(sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - LOW {
        -tail(sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * sqrt(2.0 * core::f64::consts::PI) * libm::exp(x * x / 2.0);
    x - u / (1.0 + x * u / 2.0)
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub resamples: usize,
    /// Two-sided coverage, e.g. 0.95.
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { resamples: 1000, level: 0.95, seed: 0 }
    }
}

/// A bias-corrected and accelerated interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BcaInterval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub z0: f64,
    pub acceleration: f64,
    /// Resamples on which the statistic was undefined.
    pub dropped: usize,
    /// Resamples kept.
    pub kept: usize,
}

impl BcaInterval {
    /// True when more than a tenth of the resamples were dropped.
    pub fn mostly_degenerate(&self) -> bool {
        self.dropped * 10 > self.dropped + self.kept
    }
}

/// BCa interval for a statistic of `n` paired observations.
///
/// `statistic` receives observation indices (with repeats for resamples)
/// and returns `None` when undefined on that sample. Resampling draws from
/// a ChaCha8 stream seeded with `opts.seed`, so results are reproducible.
pub fn bca_interval<F>(n: usize, statistic: F, opts: BootstrapOptions) -> Result<BcaInterval>
where
    F: Fn(&[usize]) -> Option<f64>,
{
    if n < 2 {
        return Err(Error::Empty("need at least two observations"));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) || opts.resamples == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "bootstrap needs resamples > 0 and level in (0, 1), got {} and {}",
            opts.resamples,
            opts.level
        )));
    }
    let all: Vec<usize> = (0..n).collect();
    let estimate = statistic(&all)
        .filter(|t| t.is_finite())
        .ok_or(Error::Undefined("statistic on the full sample"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut idx = alloc::vec![0usize; n];
    let mut boot = Vec::with_capacity(opts.resamples);
    for _ in 0..opts.resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        if let Some(t) = statistic(&idx).filter(|t| t.is_finite()) {
            boot.push(t);
        }
    }
    let kept = boot.len();
    let dropped = opts.resamples - kept;
    if kept == 0 {
        return Err(Error::Undefined("statistic on every resample"));
    }
    let constant = |lo, hi, z0, acceleration| BcaInterval { estimate, lo, hi, z0, acceleration, dropped, kept };
    if boot.iter().all(|&t| t == estimate) {
        return Ok(constant(estimate, estimate, 0.0, 0.0));
    }

    // A proportion of 0 or 1 would make z0 infinite; clamp half a resample in.
    let below = boot.iter().filter(|&&t| t < estimate).count() as f64;
    let half = 0.5 / kept as f64;
    let z0 = normal_quantile((below / kept as f64).clamp(half, 1.0 - half));

    let mut jack = Vec::with_capacity(n);
    let mut loo = Vec::with_capacity(n - 1);
    for i in 0..n {
        loo.clear();
        loo.extend((0..n).filter(|&j| j != i));
        if let Some(t) = statistic(&loo).filter(|t| t.is_finite()) {
            jack.push(t);
        }
    }
    let acceleration = if jack.is_empty() {
        0.0
    } else {
        let mean = jack.iter().sum::<f64>() / jack.len() as f64;
        let (mut s2, mut s3) = (0.0, 0.0);
        for t in &jack {
            let d = mean - t;
            s2 += d * d;
            s3 += d * d * d;
        }
        if s2 > 0.0 {
            s3 / (6.0 * libm::pow(s2, 1.5))
        } else {
            0.0
        }
    };

    let z_lo = normal_quantile((1.0 - opts.level) / 2.0);
    let adjust = |z: f64| {
        let w = z0 + z;
        normal_cdf(z0 + w / (1.0 - acceleration * w))
    };
    boot.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&boot, adjust(z_lo));
    let hi = quantile_sorted(&boot, adjust(-z_lo));
    Ok(constant(lo, hi, z0, acceleration))
}

/// Pearson correlation of the selected pairs, `None` if undefined.
pub fn pearson_at(x: &[f64], y: &[f64], idx: &[usize]) -> Option<f64> {
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    pearson(&xs, &ys).ok()
}

/// Spearman correlation of the selected pairs, `None` if undefined.
pub fn spearman_at(x: &[f64], y: &[f64], idx: &[usize]) -> Option<f64> {
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    spearman(&xs, &ys).ok()
}
