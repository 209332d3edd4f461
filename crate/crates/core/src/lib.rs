//! Two-stage reverse auction for crowdsourcing.
//!
//! Workers bid a unit price and a maximum amount of work. The platform turns
//! bids into virtual welfare through the bid prior, splits the requested work
//! by minimising `Σ δ_i^k x_i²` under per-worker caps, and pays each worker the
//! Myerson maximum payment `b_i x_i + ∫_{b_i}^{b̄} x_i(s) ds`. Stage two scales
//! the promised pay by the fraction of work that passes quality assessment.
//!
//! The exponent `k` trades equality (`k = 0`, equal split) against cost
//! efficiency (`k = ∞`, lowest virtual welfare first).
//!
//! Modules:
//! - [`distributions`]: bid priors, virtual welfare, regularity, sampling
//! - [`allocation`]: the tight-set solver, the `k = ∞` greedy and an exhaustive oracle
//! - [`payment`]: maximum and realised payments
//! - [`mechanism`]: the two-stage protocol and worker utility
//! - [`strategy`]: best-response search and the departure study
//! - [`simulation`]: ROI, participation and cost-inflation experiments

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod distributions;
pub mod error;
pub mod isotonic;
pub mod mechanism;
pub mod optimize;
pub mod payment;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod strategy;

pub use allocation::{
    allocate, allocate_limit_k_inf, allocation_curve, oracle_allocate, total_virtual_cost,
    AllocationResult, AuctionInstance, Exponent,
};
pub use distributions::BidDistribution;
pub use error::{Error, Result};

pub use mechanism::{run_stage1, run_stage2, worker_utility, Omega, WorkSubmission, WorkerProfile};
pub use payment::{compute_max_payment, payment_schedule, realized_payment, PaymentSchedule};
