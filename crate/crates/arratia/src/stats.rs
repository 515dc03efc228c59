//! Statistical test machinery: Kolmogorov-Smirnov statistics, critical
//! values, and running moments with deterministic merging.
//!
//! The harness standardises on the asymptotic one-sided critical value
//! `k / sqrt(n)` with `k = 1.628` at the 1% level. Censored variants compare
//! distributions on `[0, censor]` only; restricting the supremum can only
//! shrink the statistic under the null, so the uncensored critical value
//! stays valid (conservatively) for the restricted test.

use thiserror::Error;

/// Asymptotic Kolmogorov statistic multiplier at the 1% significance level.
pub const KS_K_1PCT: f64 = 1.628;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample contains a non-finite value")]
    NonFiniteSample,
    #[error("empty sample")]
    EmptySample,
}

fn sort_finite(mut values: Vec<f64>) -> Result<Vec<f64>, StatsError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteSample);
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(values)
}

/// One-sample KS statistic of `samples` against the CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let sorted = sort_finite(samples.to_vec())?;
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max((f - (i + 1) as f64 / n).abs());
    }
    Ok(sup)
}

/// One-sample KS statistic restricted to `[0, censor]` for right-censored
/// data. `samples` holds `None` for replications whose event had not
/// occurred by `censor`; the empirical CDF still uses the full replication
/// count in its denominator, so it is exact on the observation window.
pub fn ks_one_sample_censored<F: Fn(f64) -> f64>(
    samples: &[Option<f64>],
    cdf: F,
    censor: f64,
) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = samples.len() as f64;
    let observed: Vec<f64> = samples.iter().filter_map(|s| *s).collect();
    let m = observed.len();
    let sorted = sort_finite(observed)?;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max((f - (i + 1) as f64 / n).abs());
    }
    // Right edge of the window: empirical CDF stays at m/n up to the censor.
    sup = sup.max((cdf(censor) - m as f64 / n).abs());
    Ok(sup)
}

/// Two-sample KS statistic. Ties across samples are handled by evaluating
/// both empirical CDFs strictly after each pooled jump point.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sort_finite(a.to_vec())?;
    let ys = sort_finite(b.to_vec())?;
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Two-sample KS restricted to `[0, censor]`; both samples censored at the
/// same horizon. The censored mass shows up as the terminal gap of the two
/// empirical CDFs, which the pooled sweep already covers.
pub fn ks_two_sample_censored(
    a: &[Option<f64>],
    b: &[Option<f64>],
) -> Result<(f64, f64, f64), StatsError> {
    let na = a.len() as f64;
    let nb = b.len() as f64;
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let xs = sort_finite(a.iter().filter_map(|s| *s).collect())?;
    let ys = sort_finite(b.iter().filter_map(|s| *s).collect())?;
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let t = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok((sup, na, nb))
}

/// Critical value `k / sqrt(n)` for a one-sample test of size `n`.
pub fn ks_critical_one(n: usize, k: f64) -> f64 {
    k / (n as f64).sqrt()
}

/// Critical value for a two-sample test with sizes `na`, `nb`, from the
/// effective sample size `na*nb/(na+nb)`.
pub fn ks_critical_two(na: usize, nb: usize, k: f64) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    k * ((na + nb) / (na * nb)).sqrt()
}

/// Asymptotic p-value of the Kolmogorov statistic, with the finite-sample
/// argument correction `(sqrt(n) + 0.12 + 0.11/sqrt(n)) * d` of Numerical
/// Recipes.
pub fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let sqrt_n = effective_n.sqrt();
    let z = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    if z <= 0.0 {
        return 1.0;
    }
    let term = (-2.0 * z * z).exp();
    (2.0 * (term - term.powi(4) + term.powi(9))).clamp(0.0, 1.0)
}

/// Standard error of a binomial frequency estimate at probability `p`.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n as f64).sqrt()
}

/// Streaming mean/variance accumulator. Merging adds sums, so accumulating
/// fixed-size blocks and merging them in block order gives results that
/// depend only on the block layout, never on which thread ran which block.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Empirical quantile by linear interpolation on the sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}
