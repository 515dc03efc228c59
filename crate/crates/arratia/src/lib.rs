//! Monte Carlo laboratory for systems of coalescing Brownian particles.
//!
//! The crate has three layers:
//!
//! * closed-form layer ([`analytics`], [`bounds`]): exact hitting-time and
//!   cluster-width distributions, iterated-logarithm envelopes, and the
//!   Gaussian-process bound machinery (sup-variance, packing radius, Sudakov
//!   minoration, concentration tails);
//! * simulation layer ([`flow`], [`coupling`]): a coalescing-particle engine
//!   with Brownian-bridge merge corrections and optional Lipschitz drift, and
//!   the recursive glued-path construction built from independent Wiener
//!   processes;
//! * verification layer ([`harness`], [`stats`], [`report`]): reproducible
//!   experiments that confront simulation output with the closed forms via
//!   Kolmogorov-Smirnov and binomial checks, emitting machine-readable
//!   reports.
//!
//! All randomness derives from a single 64-bit master seed through the
//! counter-based scheme in [`rng`], so every statistic is bit-reproducible
//! for any worker count.

pub mod analytics;
pub mod bounds;
pub mod coupling;
pub mod flow;
pub mod harness;
pub mod report;
pub mod rng;
pub mod stats;
