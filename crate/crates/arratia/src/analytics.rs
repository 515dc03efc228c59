//! Closed-form distributions, iterated-logarithm envelopes, and exact
//! samplers for Brownian hitting times and two-particle collisions.
//!
//! Everything here is expressed through the complementary error function so
//! that deep tails (`a/sqrt(t)` large) keep full relative accuracy; `1 - Phi`
//! style evaluation would cancel to zero long before the probabilities are
//! actually negligible.
//!
//! The workhorse identities:
//!
//! * `P{theta(a) <= t} = erfc(a / sqrt(2t))` for the level-`a` hitting time
//!   `theta(a)` of a standard Wiener process;
//! * the one-sided width of the cluster containing the origin particle
//!   satisfies `P{width(t) >= r} = P{theta(r/sqrt(2)) <= t} = erfc(r/(2 sqrt(t)))`,
//!   because the difference of two independent Wiener particles divided by
//!   `sqrt(2)` is again a Wiener process until they meet;
//! * `theta(a)` equals `a^2 / Z^2` in law for a standard Gaussian `Z`, which
//!   gives a one-draw exact sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("level must be positive and finite, got {0}")]
    InvalidLevel(f64),
    #[error("time must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error("width must be nonnegative, got {0}")]
    NegativeWidth(f64),
    #[error("argument must be nonnegative, got {0}")]
    NegativeArgument(f64),
    #[error("gap must be positive, got {0}")]
    InvalidGap(f64),
    #[error("envelope undefined for t = {0}: requires 0 < t < 1/e")]
    EnvelopeDomain(f64),
    #[error("probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("envelope parameters must lie in (0,1): epsilon={epsilon}, alpha={alpha}")]
    InvalidEnvelopeParams { epsilon: f64, alpha: f64 },
}

/// A positive spatial level, the barrier of a hitting-time problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level(f64);

impl Level {
    pub fn new(a: f64) -> Result<Self, AnalyticsError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(AnalyticsError::InvalidLevel(a));
        }
        Ok(Level(a))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A strictly positive time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePoint(f64);

impl TimePoint {
    pub fn new(t: f64) -> Result<Self, AnalyticsError> {
        if !(t.is_finite() && t > 0.0) {
            return Err(AnalyticsError::InvalidTime(t));
        }
        Ok(TimePoint(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// The `(epsilon, alpha)` pair of the iterated-logarithm experiments:
/// `epsilon` widens or narrows the envelope, `alpha` sets the geometric
/// time grid `t_k = alpha^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub epsilon: f64,
    pub alpha: f64,
}

impl EnvelopeParams {
    pub fn new(epsilon: f64, alpha: f64) -> Result<Self, AnalyticsError> {
        if !(epsilon > 0.0 && epsilon < 1.0 && alpha > 0.0 && alpha < 1.0) {
            return Err(AnalyticsError::InvalidEnvelopeParams { epsilon, alpha });
        }
        Ok(EnvelopeParams { epsilon, alpha })
    }
}

/// `P{theta(a) <= t}`: probability that a standard Wiener process from 0
/// reaches level `a` by time `t`. Strictly increasing in `t`, strictly
/// decreasing in `a`.
pub fn hitting_time_cdf(a: Level, t: TimePoint) -> f64 {
    libm::erfc(a.get() / (2.0 * t.get()).sqrt())
}

/// Survival function of the one-sided origin-cluster width:
/// `P{width(t) >= r} = erfc(r / (2 sqrt(t)))`, with the convention that the
/// empty constraint `r = 0` has probability 1.
///
/// Shares the `hitting_time_cdf` code path through the reduction
/// `width(t) >= r  <=>  theta(r/sqrt(2)) <= t`.
pub fn cluster_survival(t: TimePoint, r: f64) -> Result<f64, AnalyticsError> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(AnalyticsError::NegativeWidth(r));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let a = Level::new(r / std::f64::consts::SQRT_2)?;
    Ok(hitting_time_cdf(a, t))
}

/// Limit law of the rescaled cluster width `width(t)/sqrt(t)`:
/// `F(y) = erf(y/2)`. For this flow the rescaled law is the same at every
/// `t`, so the limit CDF is exact at all times, not only asymptotically.
pub fn darling_limit_cdf(y: f64) -> Result<f64, AnalyticsError> {
    if !(y.is_finite() && y >= 0.0) {
        return Err(AnalyticsError::NegativeArgument(y));
    }
    Ok(libm::erf(y / 2.0))
}

/// Mean one-sided cluster width, `int_0^inf erfc(r/(2 sqrt(t))) dr = 2 sqrt(t/pi)`.
pub fn mean_cluster_width(t: TimePoint) -> f64 {
    2.0 * (t.get() / std::f64::consts::PI).sqrt()
}

fn log_log_inv(t: f64) -> Result<f64, AnalyticsError> {
    // ln ln (1/t) > 0 requires t < 1/e.
    if !(t > 0.0 && t < (-1.0f64).exp()) {
        return Err(AnalyticsError::EnvelopeDomain(t));
    }
    Ok((1.0 / t).ln().ln())
}

/// Lower iterated-logarithm envelope `psi(t) = sqrt(2 t ln ln(1/t))`,
/// defined for `0 < t < 1/e`.
pub fn lil_envelope_lower(t: TimePoint) -> Result<f64, AnalyticsError> {
    let ll = log_log_inv(t.get())?;
    Ok((2.0 * t.get() * ll).sqrt())
}

/// Upper iterated-logarithm envelope `phi(t) = 2 sqrt(t ln ln(1/t))`;
/// identically `sqrt(2)` times the lower envelope.
pub fn lil_envelope_upper(t: TimePoint) -> Result<f64, AnalyticsError> {
    let ll = log_log_inv(t.get())?;
    Ok(2.0 * (t.get() * ll).sqrt())
}

/// Exact sampler for `theta(a)` via the reciprocal-squared-Gaussian
/// identity `theta(a) = a^2 / Z^2` in law. One normal variate per sample,
/// no branching, no CDF inversion.
pub fn hitting_time_sample<R: Rng + ?Sized>(a: Level, rng: &mut R) -> f64 {
    let mut z: f64 = rng.sample(StandardNormal);
    while z == 0.0 {
        z = rng.sample(StandardNormal);
    }
    let ratio = a.get() / z;
    ratio * ratio
}

/// Exact sampler for the collision time of two independent Wiener particles
/// started `gap` apart: the collision time is `theta(gap/sqrt(2))` in law.
pub fn two_particle_collision_sample<R: Rng + ?Sized>(
    gap: f64,
    rng: &mut R,
) -> Result<f64, AnalyticsError> {
    if !(gap.is_finite() && gap > 0.0) {
        return Err(AnalyticsError::InvalidGap(gap));
    }
    let a = Level::new(gap / std::f64::consts::SQRT_2)?;
    Ok(hitting_time_sample(a, rng))
}

/// Exact sampler of the one-sided cluster width at time `t`, obtained from a
/// collision-time sample by the diffusive scaling
/// `width(t) >= r  <=>  r^2 tau(1) <= t`, i.e. `width(t) = sqrt(t / tau(1))`.
pub fn cluster_width_sample<R: Rng + ?Sized>(t: TimePoint, rng: &mut R) -> f64 {
    let tau = two_particle_collision_sample(1.0, rng).expect("unit gap is valid");
    (t.get() / tau).sqrt()
}

/// Inverse of `cluster_survival` in `r`: the width `r` with
/// `P{width(t) >= r} = p`, namely `r = 2 sqrt(t) erfc_inv(p)`.
pub fn survival_inverse(t: TimePoint, p: f64) -> Result<f64, AnalyticsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(AnalyticsError::InvalidProbability(p));
    }
    Ok(2.0 * t.get().sqrt() * erfc_inv(p))
}

/// Inverse complementary error function on (0, 2), by bisection bracketing
/// followed by Newton polishing. Absolute accuracy is a few ulp, which is
/// far below every tolerance used by the harness.
pub fn erfc_inv(p: f64) -> f64 {
    assert!(p > 0.0 && p < 2.0, "erfc_inv domain is (0, 2), got {p}");
    if p == 1.0 {
        return 0.0;
    }
    if p > 1.0 {
        return -erfc_inv(2.0 - p);
    }
    let (mut lo, mut hi) = (0.0f64, 30.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    for _ in 0..3 {
        let f = libm::erfc(x) - p;
        let df = -two_over_sqrt_pi * (-x * x).exp();
        x -= f / df;
    }
    x
}
