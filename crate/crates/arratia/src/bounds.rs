//! Quantitative bound machinery for the Gaussian process built from scaled
//! increment differences on a ladder of geometric time scales, and its
//! Monte Carlo verification.
//!
//! For parameters `(n, N, epsilon, alpha)` put `t_k = alpha^k` and
//! `u_k = (1 - epsilon) * sqrt(2 t_k ln ln(1/t_k))`. The process lives on
//! disjoint intervals `T_n = [0, t_n]`, `T_k = [k-1, k-1+t_k]` for
//! `n < k <= N`, and on `T_k` equals `(w_0(s) - w_k(s)) / u_k` in local time
//! `s`, with one shared path `w_0` and independent `w_k`. The module
//! computes its sup-variance, a packing radius certifying a capacity lower
//! bound, the Sudakov minoration of the expected supremum, and the Gaussian
//! concentration tail — and simulates the discretised supremum to check all
//! three against samples.

use crate::rng::{derive_stream, tag};
use crate::stats::Moments;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoundsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("log combination ln(n) + ln ln(1/alpha) must be positive (got {0})")]
    NonPositiveLog(f64),
    #[error("point {0} lies outside the indexed time set")]
    OutsideTimeSet(f64),
    #[error("capacity must be at least 2, got {0}")]
    CapacityTooSmall(usize),
    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("sup-variance must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("deviation must be nonnegative, got {0}")]
    NegativeDeviation(f64),
    #[error("mesh needs at least 64 points per interval, got {0}")]
    MeshTooCoarse(usize),
    #[error("need at least 2 replications, got {0}")]
    TooFewReplications(usize),
}

/// Smallest scale index `n` with `alpha^n < 1/e`, i.e. the first index at
/// which the envelope (and hence `u_n`) is defined.
pub fn min_scale_start(alpha: f64) -> usize {
    (1.0 / (1.0 / alpha).ln()).floor() as usize + 1
}

/// Parameters of the ladder process. `scale_start`/`scale_end` are the
/// paper-style `n < N`; `epsilon = 0` is accepted so the closed formulas can
/// be exercised in their limit form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianProcessParams {
    pub scale_start: usize,
    pub scale_end: usize,
    pub epsilon: f64,
    pub alpha: f64,
}

impl GaussianProcessParams {
    pub fn new(
        scale_start: usize,
        scale_end: usize,
        epsilon: f64,
        alpha: f64,
    ) -> Result<Self, BoundsError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(BoundsError::InvalidParams(format!("epsilon {epsilon} not in [0, 1)")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BoundsError::InvalidParams(format!("alpha {alpha} not in (0, 1)")));
        }
        if scale_end <= scale_start {
            return Err(BoundsError::InvalidParams(format!(
                "need scale_end > scale_start, got {scale_start}..{scale_end}"
            )));
        }
        let n0 = min_scale_start(alpha);
        if scale_start < n0 {
            return Err(BoundsError::InvalidParams(format!(
                "scale_start {scale_start} below the envelope domain threshold {n0}"
            )));
        }
        Ok(GaussianProcessParams { scale_start, scale_end, epsilon, alpha })
    }

    /// `t_k = alpha^k`.
    pub fn t_k(&self, k: usize) -> f64 {
        self.alpha.powi(k as i32)
    }

    /// `ln ln (1/t_k)`, evaluated as `ln(k ln(1/alpha))` so it stays exact
    /// when `t_k` underflows toward the tiny end of the ladder.
    pub fn log_log_inv_t(&self, k: usize) -> f64 {
        (k as f64 * (1.0 / self.alpha).ln()).ln()
    }

    /// `u_k = (1 - epsilon) * sqrt(2 t_k ln ln(1/t_k))`.
    pub fn u_k(&self, k: usize) -> f64 {
        (1.0 - self.epsilon) * (2.0 * self.t_k(k) * self.log_log_inv_t(k)).sqrt()
    }

    pub fn interval_count(&self) -> usize {
        self.scale_end - self.scale_start + 1
    }

    /// Capacity certified by the endpoint packing, in the conservative
    /// `scale_end - scale_start` convention.
    pub fn capacity(&self) -> usize {
        self.scale_end - self.scale_start
    }

    pub fn sigma_sup(&self) -> Result<f64, BoundsError> {
        sigma_sup(self.scale_start, self.epsilon, self.alpha)
    }

    /// Packing radius `(1/(1-epsilon)) / sqrt(ln N + ln ln(1/alpha))`; the
    /// interval right-endpoints are pairwise at least this far apart in the
    /// process pseudometric.
    pub fn packing_radius(&self) -> f64 {
        let l_end = self.log_log_inv_t(self.scale_end);
        (1.0 / (1.0 - self.epsilon)) * (1.0 / l_end).sqrt()
    }
}

/// Sup-variance of the ladder process,
/// `1 / ((1-epsilon)^2 (ln n + ln ln(1/alpha)))`. Attained at the right
/// endpoint of the first interval; independent of `scale_end`.
pub fn sigma_sup(scale_start: usize, epsilon: f64, alpha: f64) -> Result<f64, BoundsError> {
    if !(0.0..1.0).contains(&epsilon) || !(alpha > 0.0 && alpha < 1.0) || scale_start == 0 {
        return Err(BoundsError::InvalidParams(format!(
            "(n, epsilon, alpha) = ({scale_start}, {epsilon}, {alpha})"
        )));
    }
    let log_comb = (scale_start as f64).ln() + (1.0 / alpha).ln().ln();
    if log_comb <= 0.0 {
        return Err(BoundsError::NonPositiveLog(log_comb));
    }
    Ok(1.0 / ((1.0 - epsilon) * (1.0 - epsilon) * log_comb))
}

/// A point of the indexed time set, addressed as (interval, local time).
///
/// Intervals deep in the ladder are far narrower than one ulp of their
/// global offset `k - 1`, so a single `f64` global coordinate cannot
/// address their interior; the pair representation stays exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSetPoint {
    pub interval: usize,
    pub local: f64,
}

/// The disjoint intervals carrying the ladder process, with coordinate
/// bookkeeping for covariance evaluation.
#[derive(Debug, Clone, Copy)]
pub struct IndexedTimeSet {
    pub params: GaussianProcessParams,
}

impl IndexedTimeSet {
    pub fn new(params: GaussianProcessParams) -> Self {
        IndexedTimeSet { params }
    }

    /// `(global offset, length)` of interval `k`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        let offset = if k == self.params.scale_start { 0.0 } else { (k - 1) as f64 };
        (offset, self.params.t_k(k))
    }

    /// Validated point of interval `k` at local time `local`.
    pub fn point(&self, k: usize, local: f64) -> Result<TimeSetPoint, BoundsError> {
        let p = &self.params;
        if k < p.scale_start || k > p.scale_end {
            return Err(BoundsError::OutsideTimeSet(k as f64));
        }
        if !(local.is_finite() && (0.0..=p.t_k(k)).contains(&local)) {
            return Err(BoundsError::OutsideTimeSet(local));
        }
        Ok(TimeSetPoint { interval: k, local })
    }

    pub fn right_endpoint(&self, k: usize) -> Result<TimeSetPoint, BoundsError> {
        self.point(k, self.params.t_k(k))
    }

    /// The interval right-endpoints, the designated packing witnesses.
    pub fn right_endpoints(&self) -> Vec<TimeSetPoint> {
        (self.params.scale_start..=self.params.scale_end)
            .map(|k| TimeSetPoint { interval: k, local: self.params.t_k(k) })
            .collect()
    }

    /// Maps a global coordinate to a point. Only meaningful where the
    /// global coordinate resolves the interval (the first interval, and
    /// interval interiors wider than one ulp of their offset).
    pub fn locate(&self, t: f64) -> Result<TimeSetPoint, BoundsError> {
        let p = &self.params;
        if !t.is_finite() || t < 0.0 {
            return Err(BoundsError::OutsideTimeSet(t));
        }
        if t <= p.t_k(p.scale_start) {
            return self.point(p.scale_start, t);
        }
        if t >= p.scale_end as f64 {
            return Err(BoundsError::OutsideTimeSet(t));
        }
        let k = t.floor() as usize + 1;
        if k <= p.scale_start || k > p.scale_end {
            return Err(BoundsError::OutsideTimeSet(t));
        }
        self.point(k, t - (k - 1) as f64)
    }

    /// Covariance of the process at two points. Within one interval both
    /// the shared and the own path contribute `min` terms; across intervals
    /// only the shared path does.
    pub fn covariance(&self, s: TimeSetPoint, t: TimeSetPoint) -> f64 {
        let (uj, uk) = (self.params.u_k(s.interval), self.params.u_k(t.interval));
        let shared = s.local.min(t.local) / (uj * uk);
        if s.interval == t.interval {
            2.0 * shared
        } else {
            shared
        }
    }

    pub fn variance(&self, t: TimeSetPoint) -> f64 {
        self.covariance(t, t)
    }

    /// Process pseudometric `sqrt(Var(X_s - X_t))`.
    pub fn distance(&self, s: TimeSetPoint, t: TimeSetPoint) -> f64 {
        let d2 = self.variance(s) + self.variance(t) - 2.0 * self.covariance(s, t);
        d2.max(0.0).sqrt()
    }
}

/// Sudakov minoration of the expected supremum. Below capacity 24 the
/// textbook constant is not certified; the value is still returned, flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SudakovBound {
    pub bound: f64,
    pub certified: bool,
}

/// Minimum capacity for which the minoration constant is certified.
pub const SUDAKOV_CERTIFIED_CAPACITY: usize = 24;

/// `(1 - 1/sqrt(2M)) * delta * sqrt(ln M)` for a `delta`-packing of size `M`.
pub fn sudakov_lower_bound(capacity: usize, radius: f64) -> Result<SudakovBound, BoundsError> {
    if capacity < 2 {
        return Err(BoundsError::CapacityTooSmall(capacity));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(BoundsError::InvalidRadius(radius));
    }
    let m = capacity as f64;
    let bound = (1.0 - 1.0 / (2.0 * m).sqrt()) * radius * m.ln().sqrt();
    Ok(SudakovBound { bound, certified: capacity >= SUDAKOV_CERTIFIED_CAPACITY })
}

/// Gaussian concentration of the supremum below its mean:
/// `P{xi <= E xi - r} <= exp(-r^2 / (2 sigma))` with `sigma` the
/// sup-variance.
pub fn concentration_tail(r: f64, sigma: f64) -> Result<f64, BoundsError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(BoundsError::InvalidSigma(sigma));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(BoundsError::NegativeDeviation(r));
    }
    Ok((-r * r / (2.0 * sigma)).exp())
}

/// Whether `alpha` is small enough for the gap series of the envelope
/// argument to converge: `((1-epsilon)^2 / 2) (1/sqrt(alpha) - 1)^2 > 1`.
/// At `epsilon = 0` the threshold is `alpha < 1/(3 + 2 sqrt(2)) ~ 0.1716`.
pub fn alpha_admissible(epsilon: f64, alpha: f64) -> bool {
    if !(0.0..1.0).contains(&epsilon) || !(alpha > 0.0 && alpha < 1.0) {
        return false;
    }
    let q = 1.0 / alpha.sqrt() - 1.0;
    (1.0 - epsilon) * (1.0 - epsilon) / 2.0 * q * q > 1.0
}

/// Monte Carlo sample of the discretised supremum `xi`.
#[derive(Debug, Clone)]
pub struct XiSimulation {
    /// One supremum per replication, in replication order.
    pub sup_samples: Vec<f64>,
    pub mesh_per_interval: usize,
    /// Largest across-replication variance over all mesh points: the
    /// empirical sup-variance.
    pub max_point_variance: f64,
    pub mean: f64,
    pub se_mean: f64,
}

/// Simulates `xi = sup X` on a uniform mesh of `mesh_per_interval` points
/// per interval. The shared path `w_0` is sampled once per replication on
/// the union of all local meshes; each interval draws its own independent
/// path. The mesh supremum only underestimates the continuum one.
pub fn simulate_xi(
    params: &GaussianProcessParams,
    mesh_per_interval: usize,
    replications: usize,
    seed: u64,
) -> Result<XiSimulation, BoundsError> {
    if mesh_per_interval < 64 {
        return Err(BoundsError::MeshTooCoarse(mesh_per_interval));
    }
    if replications < 2 {
        return Err(BoundsError::TooFewReplications(replications));
    }
    let m = mesh_per_interval;
    let ks: Vec<usize> = (params.scale_start..=params.scale_end).collect();
    let us: Vec<f64> = ks.iter().map(|&k| params.u_k(k)).collect();
    let locals: Vec<Vec<f64>> = ks
        .iter()
        .map(|&k| {
            let t = params.t_k(k);
            (1..=m).map(|i| t * i as f64 / m as f64).collect()
        })
        .collect();

    // Union of all local meshes: the arguments at which w_0 is needed.
    let mut union: Vec<f64> = locals.iter().flatten().copied().collect();
    union.sort_by(|a, b| a.partial_cmp(b).unwrap());
    union.dedup();
    let union_index: Vec<Vec<usize>> = locals
        .iter()
        .map(|pts| {
            pts.iter()
                .map(|p| union.binary_search_by(|x| x.partial_cmp(p).unwrap()).expect("in union"))
                .collect()
        })
        .collect();
    let union_steps: Vec<f64> = union
        .iter()
        .enumerate()
        .map(|(i, &t)| if i == 0 { t } else { t - union[i - 1] }.max(0.0).sqrt())
        .collect();

    let n_points = ks.len() * m;
    const BLOCK: usize = 64;
    struct BlockOut {
        sups: Vec<f64>,
        point_sum: Vec<f64>,
        point_sum_sq: Vec<f64>,
    }
    let n_blocks = replications.div_ceil(BLOCK);
    let blocks: Vec<BlockOut> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = ((b + 1) * BLOCK).min(replications);
            let mut out = BlockOut {
                sups: Vec::with_capacity(hi - lo),
                point_sum: vec![0.0; n_points],
                point_sum_sq: vec![0.0; n_points],
            };
            let mut w0 = vec![0.0f64; union.len()];
            for rep in lo..hi {
                let mut rng = derive_stream(seed, tag::XI_PROCESS, rep as u64);
                let mut x = 0.0;
                for (w, s) in w0.iter_mut().zip(&union_steps) {
                    let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                    x += s * z;
                    *w = x;
                }
                // The interval left endpoints carry the deterministic value
                // 0, so the supremum starts there.
                let mut sup = 0.0f64;
                for (ki, &k) in ks.iter().enumerate() {
                    let step = (params.t_k(k) / m as f64).sqrt();
                    let mut wk = 0.0;
                    let u = us[ki];
                    for i in 0..m {
                        let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                        wk += step * z;
                        let v = (w0[union_index[ki][i]] - wk) / u;
                        sup = sup.max(v);
                        let pid = ki * m + i;
                        out.point_sum[pid] += v;
                        out.point_sum_sq[pid] += v * v;
                    }
                }
                out.sups.push(sup);
            }
            out
        })
        .collect();

    // Deterministic merge in block order.
    let mut sup_samples = Vec::with_capacity(replications);
    let mut point_sum = vec![0.0f64; n_points];
    let mut point_sum_sq = vec![0.0f64; n_points];
    for b in blocks {
        sup_samples.extend(b.sups);
        for (acc, v) in point_sum.iter_mut().zip(&b.point_sum) {
            *acc += v;
        }
        for (acc, v) in point_sum_sq.iter_mut().zip(&b.point_sum_sq) {
            *acc += v;
        }
    }
    let n = replications as f64;
    let max_point_variance = point_sum
        .iter()
        .zip(&point_sum_sq)
        .map(|(&s, &ss)| ((ss - s * s / n) / (n - 1.0)).max(0.0))
        .fold(0.0f64, f64::max);
    let mut moments = Moments::default();
    sup_samples.iter().for_each(|&x| moments.push(x));

    Ok(XiSimulation {
        sup_samples,
        mesh_per_interval: m,
        max_point_variance,
        mean: moments.mean(),
        se_mean: moments.se_mean(),
    })
}

/// Attempts a Cholesky factorisation of `matrix + shift * I`; success
/// certifies the minimum eigenvalue of `matrix` is at least `-shift`.
pub fn cholesky_psd(matrix: &[Vec<f64>], shift: f64) -> bool {
    let n = matrix.len();
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            let sum = matrix[i][j] + if i == j { shift } else { 0.0 } - dot;
            if i == j {
                if sum < 0.0 {
                    return false;
                }
                l[i][j] = sum.sqrt();
            } else if l[j][j] == 0.0 {
                if sum.abs() > 1e-300 {
                    return false;
                }
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    true
}
