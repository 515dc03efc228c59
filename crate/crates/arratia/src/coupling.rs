//! Two-step construction of a coupled family of coalescing paths from
//! independent Wiener processes, and its distributional-equality test
//! against the direct particle simulation.
//!
//! Given decreasing start levels `u_1 > u_2 > ... > u_n > 0` and independent
//! Wiener paths `w_0, ..., w_n` on `[0, 1]`:
//!
//! 1. the free family: `y(u_1) = u_1 + w_1`, and each `y(u_k)` follows
//!    `u_k + w_k` until it first meets `y(u_{k-1})`, then follows it;
//! 2. the glued family: each `yy(u_k)` follows `y(u_k)` until it first meets
//!    `w_0`, then follows `w_0`; `yy(0) = w_0`.
//!
//! The glued family is distributed as the coalescing flow restricted to the
//! start points `{0, u_n, ..., u_1}`; the test below probes exactly that,
//! comparing collision-time marginals and probe-time joint frequencies
//! against direct flow runs.

use crate::analytics::TimePoint;
use crate::flow::{self, FlowConfig, StartGrid};
use crate::report::{config_hash, ExperimentReport, ExperimentRun, PlotPoint};
use crate::rng::{derive_stream, tag};
use crate::stats;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CouplingError {
    #[error("paths live on different meshes")]
    MeshMismatch,
    #[error("levels must be strictly decreasing and positive")]
    InvalidLevels,
    #[error("bundle needs at least levels + 1 paths, got {got}, need {need}")]
    InsufficientPaths { got: usize, need: usize },
    #[error("equivalence test needs at least 2 levels")]
    TooFewLevels,
    #[error("equivalence test needs at least 1000 replications, got {0}")]
    TooFewReplications(usize),
    #[error("invalid mesh step {0}")]
    InvalidMesh(f64),
    #[error("flow simulation failed: {0}")]
    Flow(#[from] flow::FlowError),
    #[error("statistics failed: {0}")]
    Stats(#[from] crate::stats::StatsError),
}

/// Independent Wiener paths on `[0, 1]`, all started at 0, on a common mesh.
#[derive(Debug, Clone)]
pub struct WienerBundle {
    pub dt: f64,
    pub paths: Vec<Vec<f64>>,
}

impl WienerBundle {
    /// `count` paths sampled from `rng`, mesh step `dt` over `[0, 1]`.
    pub fn generate_with<R: Rng + ?Sized>(
        count: usize,
        dt: f64,
        rng: &mut R,
    ) -> Result<Self, CouplingError> {
        if !(dt > 0.0 && dt <= 1.0) {
            return Err(CouplingError::InvalidMesh(dt));
        }
        let steps = (1.0 / dt).round() as usize;
        let scale = dt.sqrt();
        let paths = (0..count)
            .map(|_| {
                let mut w = Vec::with_capacity(steps + 1);
                let mut x = 0.0;
                w.push(x);
                for _ in 0..steps {
                    let z: f64 = rng.sample(StandardNormal);
                    x += scale * z;
                    w.push(x);
                }
                w
            })
            .collect();
        Ok(WienerBundle { dt, paths })
    }

    pub fn generate(count: usize, dt: f64, seed: u64) -> Result<Self, CouplingError> {
        let mut rng = derive_stream(seed, tag::COUPLING_PATH, 0);
        Self::generate_with(count, dt, &mut rng)
    }

    pub fn mesh_len(&self) -> usize {
        self.paths.first().map_or(0, Vec::len)
    }
}

/// First index at which `diff` hits zero or changes sign, with the
/// refined (linearly interpolated) crossing time.
fn first_crossing(diff: impl Iterator<Item = f64>, dt: f64) -> Option<(usize, f64)> {
    let mut prev = f64::NAN;
    let mut sign0 = 0.0;
    for (i, d) in diff.enumerate() {
        if i == 0 {
            if d == 0.0 {
                return Some((0, 0.0));
            }
            sign0 = d.signum();
        } else {
            if d == 0.0 {
                return Some((i, i as f64 * dt));
            }
            if d.signum() != sign0 {
                // Linear interpolation inside the straddling step.
                let frac = prev / (prev - d);
                return Some((i, ((i - 1) as f64 + frac) * dt));
            }
        }
        prev = d;
    }
    None
}

/// Collision time of two paths on a common mesh: the first mesh time where
/// their difference vanishes or changes sign, refined by linear
/// interpolation; `None` when they never meet.
pub fn collision_time(f: &[f64], g: &[f64], dt: f64) -> Result<Option<f64>, CouplingError> {
    if f.len() != g.len() {
        return Err(CouplingError::MeshMismatch);
    }
    Ok(first_crossing(f.iter().zip(g).map(|(a, b)| a - b), dt).map(|(_, t)| t))
}

/// The coupled family: glued paths, absorption indices, and recorded
/// collision times.
#[derive(Debug, Clone)]
pub struct CoupledFamily {
    /// Strictly decreasing positive start levels.
    pub levels: Vec<f64>,
    pub mesh_dt: f64,
    /// `yy(0) = w_0`.
    pub zero_path: Vec<f64>,
    /// `yy(u_k)` per level, same order as `levels`.
    pub paths: Vec<Vec<f64>>,
    /// First mesh index from which `paths[k]` coincides with `zero_path`.
    pub absorbed_at: Vec<Option<usize>>,
    /// Interpolated `tau[yy(u_k), yy(0)]`.
    pub collision_with_zero: Vec<Option<f64>>,
    /// Interpolated `tau[y(u_{k-1}), y(u_k)]` of the free family
    /// (`None` for the first level, which has no predecessor).
    pub collision_with_prev: Vec<Option<f64>>,
}

fn validate_levels(levels: &[f64]) -> Result<(), CouplingError> {
    if levels.is_empty()
        || levels.iter().any(|&u| !(u.is_finite() && u > 0.0))
        || levels.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(CouplingError::InvalidLevels);
    }
    Ok(())
}

/// Builds the coupled family from a bundle of independent Wiener paths.
/// `bundle.paths[0]` plays the role of the level-0 path.
pub fn build_coupled_family(
    levels: &[f64],
    bundle: &WienerBundle,
) -> Result<CoupledFamily, CouplingError> {
    validate_levels(levels)?;
    if bundle.paths.len() < levels.len() + 1 {
        return Err(CouplingError::InsufficientPaths {
            got: bundle.paths.len(),
            need: levels.len() + 1,
        });
    }
    let dt = bundle.dt;
    let mesh = bundle.mesh_len();
    let w0 = &bundle.paths[0];

    // Free family: follow own Wiener path until meeting the predecessor.
    let mut free: Vec<Vec<f64>> = Vec::with_capacity(levels.len());
    let mut collision_with_prev: Vec<Option<f64>> = Vec::with_capacity(levels.len());
    for (k, &u) in levels.iter().enumerate() {
        let own = &bundle.paths[k + 1];
        if k == 0 {
            free.push(own.iter().map(|w| u + w).collect());
            collision_with_prev.push(None);
            continue;
        }
        let pred = &free[k - 1];
        let crossing =
            first_crossing((0..mesh).map(|i| (u + own[i]) - pred[i]), dt);
        let switch = crossing.map(|(i, _)| i).unwrap_or(mesh);
        let mut path = Vec::with_capacity(mesh);
        path.extend(own[..switch].iter().map(|w| u + w));
        path.extend_from_slice(&pred[switch..]);
        free.push(path);
        collision_with_prev.push(crossing.map(|(_, t)| t));
    }

    // Glued family: follow the free path until meeting w_0.
    let mut paths: Vec<Vec<f64>> = Vec::with_capacity(levels.len());
    let mut absorbed_at = Vec::with_capacity(levels.len());
    let mut collision_with_zero = Vec::with_capacity(levels.len());
    for y in &free {
        let crossing = first_crossing((0..mesh).map(|i| y[i] - w0[i]), dt);
        let switch = crossing.map(|(i, _)| i).unwrap_or(mesh);
        let mut path = Vec::with_capacity(mesh);
        path.extend_from_slice(&y[..switch]);
        path.extend_from_slice(&w0[switch..]);
        paths.push(path);
        absorbed_at.push(crossing.map(|(i, _)| i));
        collision_with_zero.push(crossing.map(|(_, t)| t));
    }

    Ok(CoupledFamily {
        levels: levels.to_vec(),
        mesh_dt: dt,
        zero_path: w0.clone(),
        paths,
        absorbed_at,
        collision_with_zero,
        collision_with_prev,
    })
}

impl CoupledFamily {
    /// After its collision with the zero path, every glued path must equal
    /// it bitwise on the remaining mesh.
    pub fn absorption_holds(&self) -> bool {
        self.paths.iter().zip(&self.absorbed_at).all(|(p, a)| match a {
            None => true,
            Some(i) => p[*i..]
                .iter()
                .zip(&self.zero_path[*i..])
                .all(|(x, y)| x.to_bits() == y.to_bits()),
        })
    }

    /// `yy(u_1) >= yy(u_2) >= ... >= yy(0)` pointwise on the mesh.
    pub fn ordering_holds(&self) -> bool {
        let mesh = self.zero_path.len();
        (0..mesh).all(|i| {
            let mut upper = f64::INFINITY;
            for p in &self.paths {
                if p[i] > upper {
                    return false;
                }
                upper = p[i];
            }
            self.zero_path[i] <= upper
        })
    }

    /// Smaller levels collide with the zero path no later than larger ones.
    pub fn collision_order_holds(&self) -> bool {
        self.collision_with_zero.windows(2).all(|w| match (w[0], w[1]) {
            (_, None) => w[0].is_none(),
            (None, Some(_)) => true,
            (Some(a), Some(b)) => b <= a,
        })
    }
}

/// Configuration of the coupling-vs-flow equivalence experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingCheckConfig {
    /// Strictly decreasing positive start levels.
    pub levels: Vec<f64>,
    pub replications: usize,
    /// Mesh step of the coupled construction on [0, 1].
    pub mesh_dt: f64,
    /// Times at which joint collision-indicator frequencies are compared.
    pub probe_times: Vec<f64>,
    /// Step of the direct flow runs used as the reference law.
    pub flow_dt: f64,
    pub seed: u64,
}

impl Default for CouplingCheckConfig {
    fn default() -> Self {
        CouplingCheckConfig {
            levels: vec![1.0, 0.5, 0.25],
            replications: 10_000,
            mesh_dt: 1e-5,
            probe_times: vec![0.05, 0.25, 1.0],
            flow_dt: 1e-4,
            seed: 0,
        }
    }
}

/// One line of the external per-level result table.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingRow {
    pub level: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub replications: usize,
    pub mesh_dt: f64,
}

pub fn coupling_rows_csv(rows: &[CouplingRow]) -> String {
    let mut out = String::from("level,ks_statistic,p_value,replications,mesh_dt\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.level, r.ks_statistic, r.p_value, r.replications, r.mesh_dt)
            .expect("string write");
    }
    out
}

/// Compares the coupled construction against direct flow simulation:
/// per-level collision-time marginals (two-sample KS at the 1% level) and
/// joint collision-count frequencies at probe times (3 pooled binomial
/// standard errors). Also verifies the absorption, ordering, and
/// collision-order invariants in every replication.
pub fn coupling_equivalence_test(
    cfg: &CouplingCheckConfig,
) -> Result<ExperimentRun, CouplingError> {
    let start = std::time::Instant::now();
    validate_levels(&cfg.levels)?;
    if cfg.levels.len() < 2 {
        return Err(CouplingError::TooFewLevels);
    }
    if cfg.replications < 1000 {
        return Err(CouplingError::TooFewReplications(cfg.replications));
    }
    let n_levels = cfg.levels.len();
    let reps = cfg.replications;

    // Coupled side: collision times with the zero path, plus invariant
    // violation counts.
    struct RepOutcome {
        collisions: Vec<Option<f64>>,
        violations: u32,
    }
    let coupled: Vec<RepOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = derive_stream(cfg.seed, tag::COUPLING_PATH, rep);
            let bundle = WienerBundle::generate_with(n_levels + 1, cfg.mesh_dt, &mut rng)
                .expect("validated mesh");
            let family = build_coupled_family(&cfg.levels, &bundle).expect("validated levels");
            let mut violations = 0;
            if !family.absorption_holds() {
                violations += 1;
            }
            if !family.ordering_holds() {
                violations += 1;
            }
            if !family.collision_order_holds() {
                violations += 1;
            }
            RepOutcome { collisions: family.collision_with_zero, violations }
        })
        .collect();
    let violation_total: u64 = coupled.iter().map(|o| o.violations as u64).sum();

    // Direct flow, two-particle runs per level (marginal reference).
    let two_particle: Vec<Vec<Option<f64>>> = cfg
        .levels
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let flow_cfg = FlowConfig {
                grid: StartGrid::pair(u).expect("positive level"),
                horizon: 1.0,
                dt: cfg.flow_dt,
                drift: None,
                save_times: vec![],
                seed: cfg.seed,
                bridge_correction: true,
            };
            (0..reps as u64)
                .into_par_iter()
                .map(|rep| {
                    let mut rng =
                        derive_stream(cfg.seed, tag::FLOW, ((k as u64 + 1) << 40) | rep);
                    flow::first_merge_time(
                        &flow::simulate_flow(&flow_cfg, &mut rng).expect("valid config"),
                    )
                })
                .collect()
        })
        .collect();

    // Direct flow, one multi-particle system per replication (joint
    // reference): join times of each level's particle with the origin.
    let mut grid_points: Vec<f64> = cfg.levels.clone();
    grid_points.push(0.0);
    grid_points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let joint_cfg = FlowConfig {
        grid: StartGrid::new(grid_points.clone()).expect("levels positive and distinct"),
        horizon: 1.0,
        dt: cfg.flow_dt,
        drift: None,
        save_times: vec![],
        seed: cfg.seed,
        bridge_correction: true,
    };
    let level_grid_index: Vec<usize> = cfg
        .levels
        .iter()
        .map(|u| grid_points.iter().position(|p| p == u).expect("level present"))
        .collect();
    // Stream indices: two-particle runs use (k+1) << 40, the joint system
    // uses the next slot.
    let joint_flow: Vec<Vec<Option<f64>>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng =
                derive_stream(cfg.seed, tag::FLOW, ((n_levels as u64 + 1) << 40) | rep);
            let path = flow::simulate_flow(&joint_cfg, &mut rng).expect("valid config");
            let join = flow::origin_join_times(&path);
            level_grid_index.iter().map(|&gi| join[gi]).collect()
        })
        .collect();

    let mut report = ExperimentReport::new("coupling-check", cfg.seed, config_hash(cfg));
    let mut rows = Vec::with_capacity(n_levels);
    report.check("invariant_violations", violation_total as f64, 0.0, 0.0, violation_total == 0);

    for (k, &u) in cfg.levels.iter().enumerate() {
        let ours: Vec<Option<f64>> = coupled.iter().map(|o| o.collisions[k]).collect();
        let (d, na, nb) = stats::ks_two_sample_censored(&ours, &two_particle[k])?;
        let crit = stats::ks_critical_two(na as usize, nb as usize, stats::KS_K_1PCT);
        let p = stats::ks_p_value(d, na * nb / (na + nb));
        report.check(format!("marginal_ks[level={u}]"), d, p, crit, d < crit);
        rows.push(CouplingRow {
            level: u,
            ks_statistic: d,
            p_value: p,
            replications: reps,
            mesh_dt: cfg.mesh_dt,
        });
    }

    // Joint probe-time frequencies: thanks to the monotone coalescence
    // order, the collided set is always a suffix of the level list, so the
    // joint indicator law is the law of the collided count.
    for &s in &cfg.probe_times {
        let count_freq = |all: &mut dyn Iterator<Item = &Vec<Option<f64>>>| -> Vec<f64> {
            let mut counts = vec![0usize; n_levels + 1];
            for collisions in all {
                let c = collisions.iter().filter(|t| matches!(t, Some(v) if *v <= s)).count();
                counts[c] += 1;
            }
            counts.iter().map(|&c| c as f64 / reps as f64).collect()
        };
        let ours = count_freq(&mut coupled.iter().map(|o| &o.collisions));
        let flows = count_freq(&mut joint_flow.iter());
        for c in 0..=n_levels {
            let se = (stats::binomial_se(ours[c], reps).powi(2)
                + stats::binomial_se(flows[c], reps).powi(2))
            .sqrt();
            let dev = (ours[c] - flows[c]).abs();
            // Degenerate cells (both empirical frequencies 0 or 1) have zero
            // estimated SE; they agree exactly, so pass them through.
            let ok = dev <= 3.0 * se || dev == 0.0;
            report.check(format!("joint_count_freq[t={s},count={c}]"), ours[c], se, 3.0 * se, ok);
        }
    }

    let mut run = ExperimentRun::new(report);
    run.tables.insert("coupling_rows".into(), coupling_rows_csv(&rows));

    // Plot data: empirical collision-time CDFs, coupled vs direct.
    let mut points = Vec::new();
    for (k, &u) in cfg.levels.iter().enumerate() {
        for (label, source) in [("coupled", &coupled.iter().map(|o| o.collisions[k]).collect::<Vec<_>>()), ("flow", &two_particle[k])] {
            let mut times: Vec<f64> = source.iter().filter_map(|t| *t).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = source.len() as f64;
            for (i, t) in times.iter().enumerate().step_by(1.max(times.len() / 256)) {
                points.push(PlotPoint {
                    x: *t,
                    y: (i + 1) as f64 / n,
                    series: format!("{label}[u={u}]"),
                });
            }
        }
    }
    run.plots.insert("collision_cdf".into(), points);
    // Exact probabilities for context: P{tau <= t} per level at each probe.
    for &s in &cfg.probe_times {
        for &u in &cfg.levels {
            let exact = crate::analytics::cluster_survival(
                TimePoint::new(s).expect("probe times positive"),
                u,
            )
            .expect("level nonnegative");
            run.report.info(format!("exact_collision_prob[t={s},u={u}]"), exact);
        }
    }
    run.report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{hitting_time_cdf, Level};
    use crate::stats::{ks_critical_two, ks_two_sample_censored, KS_K_1PCT};

    #[test]
    fn collision_time_basics() {
        let dt = 0.25;
        let f = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        let g = vec![0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(collision_time(&f, &f, dt).unwrap(), Some(0.0));
        assert_eq!(collision_time(&f, &g, dt).unwrap(), None);
        // f(t) = t against g(t) = 1 - t crosses exactly at 0.5.
        let t: Vec<f64> = (0..=4).map(|i| i as f64 * dt).collect();
        let f2: Vec<f64> = t.clone();
        let g2: Vec<f64> = t.iter().map(|v| 1.0 - v).collect();
        assert_eq!(collision_time(&f2, &g2, dt).unwrap(), Some(0.5));
        assert_eq!(collision_time(&f, &g[..3], dt), Err(CouplingError::MeshMismatch));
    }

    #[test]
    fn family_construction_invariants() {
        let levels = [1.0, 0.6, 0.3, 0.1];
        for rep in 0..50 {
            let bundle = WienerBundle::generate(5, 1e-3, 1000 + rep).unwrap();
            let family = build_coupled_family(&levels, &bundle).unwrap();
            assert!(family.absorption_holds());
            assert!(family.ordering_holds());
            assert!(family.collision_order_holds());
            // Free-family collision times are recorded for k >= 1.
            assert_eq!(family.collision_with_prev[0], None);
        }
    }

    #[test]
    fn build_rejects_bad_inputs() {
        let bundle = WienerBundle::generate(2, 0.01, 1).unwrap();
        assert_eq!(
            build_coupled_family(&[0.5, 0.5], &bundle).unwrap_err(),
            CouplingError::InvalidLevels
        );
        assert_eq!(
            build_coupled_family(&[0.2, 0.5], &bundle).unwrap_err(),
            CouplingError::InvalidLevels
        );
        assert!(matches!(
            build_coupled_family(&[0.5, 0.2], &bundle).unwrap_err(),
            CouplingError::InsufficientPaths { .. }
        ));
    }

    #[test]
    fn one_level_reduces_to_two_particle_law() {
        // tau[yy(u), w0] is distributed as the exact collision time of a
        // pair started u apart, censored at 1.
        let u = 1.0;
        let reps = 4000u64;
        let mesh = 1e-4;
        let ours: Vec<Option<f64>> = (0..reps)
            .map(|rep| {
                let mut rng = derive_stream(777, tag::COUPLING_PATH, rep);
                let bundle = WienerBundle::generate_with(2, mesh, &mut rng).unwrap();
                let family = build_coupled_family(&[u], &bundle).unwrap();
                family.collision_with_zero[0]
            })
            .collect();
        let exact: Vec<Option<f64>> = {
            let mut rng = derive_stream(778, tag::EXACT_SAMPLER, 0);
            (0..reps)
                .map(|_| {
                    let t = crate::analytics::two_particle_collision_sample(u, &mut rng).unwrap();
                    (t <= 1.0).then_some(t)
                })
                .collect()
        };
        let (d, na, nb) = ks_two_sample_censored(&ours, &exact).unwrap();
        let crit = ks_critical_two(na as usize, nb as usize, KS_K_1PCT);
        assert!(d < crit, "KS {d} >= {crit}");
        // Sanity: censoring frequencies match the closed form.
        let hit = ours.iter().flatten().count() as f64 / reps as f64;
        let p = hitting_time_cdf(
            Level::new(u / 2f64.sqrt()).unwrap(),
            TimePoint::new(1.0).unwrap(),
        );
        assert!((hit - p).abs() < 4.0 * crate::stats::binomial_se(p, reps as usize) + 0.01);
    }

    #[test]
    fn equivalence_test_config_errors() {
        let mut cfg = CouplingCheckConfig { replications: 100, ..Default::default() };
        assert!(matches!(
            coupling_equivalence_test(&cfg),
            Err(CouplingError::TooFewReplications(100))
        ));
        cfg.replications = 1000;
        cfg.levels = vec![1.0];
        assert!(matches!(coupling_equivalence_test(&cfg), Err(CouplingError::TooFewLevels)));
    }

    #[test]
    fn equivalence_test_small_run() {
        // Reduced-size end-to-end run; the full-size version is acceptance
        // criterion 7.
        let cfg = CouplingCheckConfig {
            levels: vec![0.8, 0.4],
            replications: 1500,
            mesh_dt: 1e-4,
            probe_times: vec![0.25, 1.0],
            flow_dt: 1e-3,
            seed: 99,
        };
        let run = coupling_equivalence_test(&cfg).unwrap();
        assert!(run.report.passed(), "rows: {:#?}", run.report.rows);
        assert!(run.tables["coupling_rows"].starts_with("level,ks_statistic"));
        assert_eq!(run.report.find("invariant_violations").unwrap().value, 0.0);
    }
}
