//! Simulation of finitely many coalescing Wiener particles started from a
//! spatial grid, with optional Lipschitz drift.
//!
//! Particles evolve by independent Gaussian increments per step; adjacent
//! clusters merge either when their positions cross within a step or, with
//! the Brownian-bridge correction enabled, with probability
//! `exp(-gap_before * gap_after / dt)` — the crossing probability of the
//! difference process (variance rate 2) conditioned on its endpoints. The
//! correction removes the `O(sqrt(dt))` discretisation bias of collision
//! times; with two particles the simulated merge-time law is exact up to the
//! end-of-step rounding of the recorded time.
//!
//! Clusters never split, and merging is only ever between spatial
//! neighbours, so every cluster's preimage on the start grid stays a
//! contiguous index block.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest allowed `dt * Lipschitz(drift)` for the explicit Euler drift step.
pub const MAX_DRIFT_STEP_FACTOR: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("invalid start grid: {0}")]
    InvalidGrid(String),
    #[error("invalid flow config: {0}")]
    InvalidConfig(String),
    #[error("drift evaluated to a non-finite value at position {position}")]
    NonFiniteDrift { position: f64 },
    #[error("save-time index {0} out of range")]
    BadSaveIndex(usize),
}

/// Strictly increasing start points containing the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartGrid {
    points: Vec<f64>,
}

impl StartGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, FlowError> {
        if points.len() < 2 {
            return Err(FlowError::InvalidGrid("need at least 2 points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(FlowError::InvalidGrid("non-finite point".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FlowError::InvalidGrid("points must be strictly increasing".into()));
        }
        if !points.contains(&0.0) {
            return Err(FlowError::InvalidGrid("grid must contain 0".into()));
        }
        Ok(StartGrid { points })
    }

    /// `2*half + 1` points `{-half*spacing, ..., 0, ..., half*spacing}`.
    pub fn symmetric(half: usize, spacing: f64) -> Result<Self, FlowError> {
        if half == 0 || !(spacing.is_finite() && spacing > 0.0) {
            return Err(FlowError::InvalidGrid(format!(
                "symmetric grid needs half >= 1 and positive spacing, got ({half}, {spacing})"
            )));
        }
        let points = (-(half as i64)..=half as i64).map(|i| i as f64 * spacing).collect();
        Self::new(points)
    }

    /// The two-particle grid `{0, u}` for `u > 0`.
    pub fn pair(u: f64) -> Result<Self, FlowError> {
        Self::new(vec![0.0, u])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the origin point.
    pub fn origin_index(&self) -> usize {
        self.points.iter().position(|&p| p == 0.0).expect("grid contains 0 by construction")
    }

    /// Grid spacing just left of index `i` (None at the boundary).
    pub fn spacing_left(&self, i: usize) -> Option<f64> {
        (i > 0).then(|| self.points[i] - self.points[i - 1])
    }

    /// Grid spacing just right of index `i` (None at the boundary).
    pub fn spacing_right(&self, i: usize) -> Option<f64> {
        (i + 1 < self.points.len()).then(|| self.points[i + 1] - self.points[i])
    }
}

/// Drift fields with a known Lipschitz constant. `Linear { slope }` is
/// `b(x) = slope * x`; negative slopes contract toward the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Drift {
    Constant(f64),
    Linear { slope: f64 },
}

impl Drift {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Drift::Constant(c) => c,
            Drift::Linear { slope } => slope * x,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Constant(_) => 0.0,
            Drift::Linear { slope } => slope.abs(),
        }
    }
}

/// Full description of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub grid: StartGrid,
    pub horizon: f64,
    pub dt: f64,
    pub drift: Option<Drift>,
    /// Times at which cluster states are recorded; increasing, within
    /// `[0, horizon]`. May be empty when only merge events are of interest.
    pub save_times: Vec<f64>,
    pub seed: u64,
    /// Brownian-bridge in-step merge correction (on by default).
    pub bridge_correction: bool,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(FlowError::InvalidConfig(format!("horizon {} must be > 0", self.horizon)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.horizon) {
            return Err(FlowError::InvalidConfig(format!(
                "dt {} must be in (0, horizon]",
                self.dt
            )));
        }
        if self.save_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FlowError::InvalidConfig("save_times must be strictly increasing".into()));
        }
        if self.save_times.iter().any(|&s| !(0.0..=self.horizon).contains(&s)) {
            return Err(FlowError::InvalidConfig("save_times must lie in [0, horizon]".into()));
        }
        if let Some(drift) = &self.drift {
            let lip = drift.lipschitz();
            if !lip.is_finite() {
                return Err(FlowError::InvalidConfig("drift Lipschitz constant not finite".into()));
            }
            if self.dt * lip > MAX_DRIFT_STEP_FACTOR {
                return Err(FlowError::InvalidConfig(format!(
                    "dt * Lipschitz = {} exceeds {MAX_DRIFT_STEP_FACTOR}; refine dt",
                    self.dt * lip
                )));
            }
        }
        Ok(())
    }
}

/// One live cluster in a frame: its position and the contiguous block of
/// start indices it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterSnapshot {
    pub position: f64,
    pub first_start: usize,
    pub last_start: usize,
}

/// Recorded state at one save time.
#[derive(Debug, Clone, Serialize)]
pub struct Frame {
    pub time: f64,
    pub clusters: Vec<ClusterSnapshot>,
    /// start index -> cluster index within `clusters`.
    pub membership: Vec<usize>,
}

/// A merge of two adjacent clusters, recorded at the end of the step in
/// which it fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeEvent {
    pub time: f64,
    pub left_first: usize,
    pub left_last: usize,
    pub right_first: usize,
    pub right_last: usize,
}

/// Time-indexed record of a simulated flow.
#[derive(Debug, Clone, Serialize)]
pub struct FlowPath {
    pub start_points: Vec<f64>,
    pub frames: Vec<Frame>,
    pub merges: Vec<MergeEvent>,
}

/// Widths of the origin cluster along the save times, together with the
/// grid-resolution bias bound (one spacing per side). Widths can only grow:
/// clusters never split.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterWidthSeries {
    pub times: Vec<f64>,
    pub left_width: Vec<f64>,
    pub right_width: Vec<f64>,
    pub nu_hat: Vec<f64>,
    pub bias_bound: Vec<f64>,
    /// True where the origin cluster reached the edge of the start grid, so
    /// the width there is boundary-limited rather than measured.
    pub touched_boundary: Vec<bool>,
}

/// Bridge-crossing merge probability for the difference of two Wiener
/// particles over one step: `exp(-gap_before * gap_after / dt)`.
pub fn bridge_merge_probability(gap_before: f64, gap_after: f64, dt: f64) -> f64 {
    (-gap_before * gap_after / dt).exp()
}

/// Randomised merge decision for one adjacent pair over one step. Both gaps
/// must be positive: a non-positive `gap_after` is a crossing and is merged
/// deterministically by the caller before this check.
pub fn coalesce_check<R: Rng + ?Sized>(
    gap_before: f64,
    gap_after: f64,
    dt: f64,
    rng: &mut R,
) -> bool {
    debug_assert!(gap_before > 0.0 && gap_after > 0.0 && dt > 0.0);
    rng.gen::<f64>() < bridge_merge_probability(gap_before, gap_after, dt)
}

/// Explicit Euler drift update `x += b(x) * dt` applied in place.
pub fn apply_drift_step(positions: &mut [f64], drift: &Drift, dt: f64) -> Result<(), FlowError> {
    for x in positions.iter_mut() {
        let b = drift.eval(*x);
        if !b.is_finite() {
            return Err(FlowError::NonFiniteDrift { position: *x });
        }
        *x += b * dt;
    }
    Ok(())
}

struct LiveCluster {
    position: f64,
    prev: f64,
    first_start: usize,
    last_start: usize,
}

/// Step schedule: multiples of `dt` up to the horizon, plus every save
/// time, deduplicated. Boolean marks scheduled times that are save points.
fn schedule(config: &FlowConfig) -> Vec<(f64, bool)> {
    let n_steps = (config.horizon / config.dt).ceil() as u64;
    let mut times: Vec<f64> = (1..=n_steps)
        .map(|k| (k as f64 * config.dt).min(config.horizon))
        .collect();
    times.extend(config.save_times.iter().copied().filter(|&s| s > 0.0));
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let saves: &[f64] = &config.save_times;
    times.into_iter().map(|t| (t, saves.binary_search_by(|s| s.partial_cmp(&t).unwrap()).is_ok())).collect()
}

/// Runs one replication of the coalescing-particle system.
///
/// The caller supplies the random stream; [`FlowConfig::seed`] identifies
/// the configuration for hashing and for the convenience wrapper
/// [`run_flow`]. Identical config and stream give a bit-identical path.
pub fn simulate_flow<R: Rng + ?Sized>(
    config: &FlowConfig,
    rng: &mut R,
) -> Result<FlowPath, FlowError> {
    config.validate()?;
    let points = config.grid.points();
    let mut clusters: Vec<LiveCluster> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| LiveCluster { position: p, prev: p, first_start: i, last_start: i })
        .collect();
    let mut frames = Vec::with_capacity(config.save_times.len());
    let mut merges: Vec<MergeEvent> = Vec::new();
    let mut saves_remaining = config.save_times.len();
    if config.save_times.first() == Some(&0.0) {
        frames.push(snapshot(0.0, &clusters, points.len()));
        saves_remaining -= 1;
    }

    let mut prev_time = 0.0;
    for (time, is_save) in schedule(config) {
        let h = time - prev_time;
        prev_time = time;
        if h > 0.0 {
            // Euler drift, then the Gaussian increment of variance h.
            if let Some(drift) = &config.drift {
                for c in clusters.iter_mut() {
                    let b = drift.eval(c.position);
                    if !b.is_finite() {
                        return Err(FlowError::NonFiniteDrift { position: c.position });
                    }
                    c.position += b * h;
                }
            }
            for c in clusters.iter_mut() {
                c.prev = c.position;
                let z: f64 = rng.sample(StandardNormal);
                c.position += h.sqrt() * z;
            }
            coalesce_pass(&mut clusters, h, time, config.bridge_correction, rng, &mut merges);
        }
        if is_save {
            frames.push(snapshot(time, &clusters, points.len()));
            saves_remaining -= 1;
        }
        // Once a single cluster remains and no frame is pending, nothing
        // observable is left to simulate.
        if clusters.len() == 1 && saves_remaining == 0 {
            break;
        }
    }

    Ok(FlowPath { start_points: points.to_vec(), frames, merges })
}

/// Convenience wrapper deriving the stream from the config's own seed.
pub fn run_flow(config: &FlowConfig) -> Result<FlowPath, FlowError> {
    let mut rng = crate::rng::derive_stream(config.seed, crate::rng::tag::FLOW, 0);
    simulate_flow(config, &mut rng)
}

fn snapshot(time: f64, clusters: &[LiveCluster], n_points: usize) -> Frame {
    let mut membership = vec![0usize; n_points];
    let clusters: Vec<ClusterSnapshot> = clusters
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            for m in membership.iter_mut().take(c.last_start + 1).skip(c.first_start) {
                *m = ci;
            }
            ClusterSnapshot {
                position: c.position,
                first_start: c.first_start,
                last_start: c.last_start,
            }
        })
        .collect();
    Frame { time, clusters, membership }
}

fn merge_pair(clusters: &mut Vec<LiveCluster>, i: usize, time: f64, merges: &mut Vec<MergeEvent>) {
    let right = clusters.remove(i + 1);
    let left = &mut clusters[i];
    merges.push(MergeEvent {
        time,
        left_first: left.first_start,
        left_last: left.last_start,
        right_first: right.first_start,
        right_last: right.last_start,
    });
    // Equal-weight average of the post-step positions; symmetric and
    // consistent as dt -> 0, validated by the two-particle anchor.
    left.position = 0.5 * (left.position + right.position);
    left.prev = 0.5 * (left.prev + right.prev);
    left.last_start = right.last_start;
}

/// One coalescence pass after a step of length `h`.
///
/// A single left-to-right sweep gives every adjacent pair exactly one
/// bridge check (pairs formed mid-sweep by a merge are checked with the
/// merged cluster's averaged endpoints). Afterwards, deterministic sweeps
/// absorb any ordering violations introduced by position averaging, until
/// the configuration is stable.
fn coalesce_pass<R: Rng + ?Sized>(
    clusters: &mut Vec<LiveCluster>,
    h: f64,
    time: f64,
    bridge: bool,
    rng: &mut R,
    merges: &mut Vec<MergeEvent>,
) {
    let mut i = 0;
    while i + 1 < clusters.len() {
        let gap_after = clusters[i + 1].position - clusters[i].position;
        let merge = if gap_after <= 0.0 {
            true
        } else if bridge {
            let gap_before = clusters[i + 1].prev - clusters[i].prev;
            coalesce_check(gap_before, gap_after, h, rng)
        } else {
            false
        };
        if merge {
            merge_pair(clusters, i, time, merges);
            // Stay at i: the pair (merged, next) has not been checked.
        } else {
            i += 1;
        }
    }
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < clusters.len() {
            if clusters[i + 1].position - clusters[i].position <= 0.0 {
                merge_pair(clusters, i, time, merges);
                changed = true;
            } else {
                i += 1;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Widths of the origin cluster in frame `save_time_index`:
/// `(left_width, right_width, nu_hat)` measured on the start grid.
pub fn origin_cluster_width(
    path: &FlowPath,
    save_time_index: usize,
) -> Result<(f64, f64, f64), FlowError> {
    let frame = path.frames.get(save_time_index).ok_or(FlowError::BadSaveIndex(save_time_index))?;
    let origin = path
        .start_points
        .iter()
        .position(|&p| p == 0.0)
        .expect("flow paths always come from grids containing 0");
    let cluster = &frame.clusters[frame.membership[origin]];
    let left = -path.start_points[cluster.first_start];
    let right = path.start_points[cluster.last_start];
    Ok((left, right, left + right))
}

/// Extracts the full origin-cluster width series from a path.
pub fn cluster_width_series(path: &FlowPath) -> ClusterWidthSeries {
    let n = path.start_points.len();
    let mut series = ClusterWidthSeries {
        times: Vec::new(),
        left_width: Vec::new(),
        right_width: Vec::new(),
        nu_hat: Vec::new(),
        bias_bound: Vec::new(),
        touched_boundary: Vec::new(),
    };
    let origin = path.start_points.iter().position(|&p| p == 0.0).expect("grid contains 0");
    for frame in &path.frames {
        let cluster = &frame.clusters[frame.membership[origin]];
        let left = -path.start_points[cluster.first_start];
        let right = path.start_points[cluster.last_start];
        let touched = cluster.first_start == 0 || cluster.last_start == n - 1;
        let bias_left = if cluster.first_start > 0 {
            path.start_points[cluster.first_start] - path.start_points[cluster.first_start - 1]
        } else {
            0.0
        };
        let bias_right = if cluster.last_start + 1 < n {
            path.start_points[cluster.last_start + 1] - path.start_points[cluster.last_start]
        } else {
            0.0
        };
        series.times.push(frame.time);
        series.left_width.push(left);
        series.right_width.push(right);
        series.nu_hat.push(left + right);
        series.bias_bound.push(bias_left + bias_right);
        series.touched_boundary.push(touched);
    }
    series
}

/// Time at which each start point joined the origin cluster (None if it had
/// not joined by the end of the run), replayed from the merge log.
pub fn origin_join_times(path: &FlowPath) -> Vec<Option<f64>> {
    let n = path.start_points.len();
    let origin = path.start_points.iter().position(|&p| p == 0.0).expect("grid contains 0");
    let mut join: Vec<Option<f64>> = vec![None; n];
    join[origin] = Some(0.0);
    let (mut lo, mut hi) = (origin, origin);
    for ev in &path.merges {
        if ev.left_first == lo && ev.left_last == hi {
            join[ev.right_first..=ev.right_last].fill(Some(ev.time));
            hi = ev.right_last;
        } else if ev.right_first == lo && ev.right_last == hi {
            join[ev.left_first..=ev.left_last].fill(Some(ev.time));
            lo = ev.left_first;
        }
    }
    join
}

/// First merge time of a two-particle run, i.e. the collision time of the
/// pair, censored at the horizon.
pub fn first_merge_time(path: &FlowPath) -> Option<f64> {
    path.merges.first().map(|m| m.time)
}

/// Writes frames of several replications as CSV with columns
/// `(replication, save_time, cluster_index, position, leftmost_start_index,
/// rightmost_start_index)`.
pub fn write_flow_csv<W: std::io::Write>(
    mut out: W,
    paths: &[FlowPath],
) -> std::io::Result<()> {
    writeln!(
        out,
        "replication,save_time,cluster_index,position,leftmost_start_index,rightmost_start_index"
    )?;
    for (rep, path) in paths.iter().enumerate() {
        for frame in &path.frames {
            for (ci, cluster) in frame.clusters.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    rep, frame.time, ci, cluster.position, cluster.first_start, cluster.last_start
                )?;
            }
        }
    }
    Ok(())
}
