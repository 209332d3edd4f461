//! The two-stage protocol: stage one fixes expected work and maximum pay from
//! the bids, stage two scales pay by the accepted share of submitted work.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::allocation::{allocate, AllocationResult, AuctionInstance, Exponent};
use crate::distributions::BidDistribution;
use crate::error::{Error, Result};
use crate::payment::{payment_schedule_with, realized_payment, PaymentRule, PaymentSchedule};

/// Grid used to confirm the prior is regular before running an auction.
pub const REGULARITY_GRID: usize = 1000;

/// A worker's private values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerProfile {
    /// True unit cost.
    pub v: f64,
    /// True capacity.
    pub x_max: f64,
    /// Expected acceptable fraction `E[α]`.
    pub beta: f64,
    pub indirect_cost: f64,
}

impl WorkerProfile {
    pub fn new(v: f64, x_max: f64, beta: f64, indirect_cost: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("unit cost must be positive, got {v}")));
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::domain(format!("capacity must be positive, got {x_max}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("beta must lie in (0, 1], got {beta}")));
        }
        if !(indirect_cost >= 0.0 && indirect_cost.is_finite()) {
            return Err(Error::domain(format!(
                "indirect cost must be non-negative, got {indirect_cost}"
            )));
        }
        Ok(Self {
            v,
            x_max,
            beta,
            indirect_cost,
        })
    }

    /// The dominant bid `v / β`.
    pub fn truthful_bid(&self) -> f64 {
        self.v / self.beta
    }
}

/// Weight applied to utility once submitted work exceeds true capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Omega {
    /// Utility drops to zero beyond capacity.
    Strict,
    /// `1 + s (x̂ - x_max) / x_max` beyond capacity, floored at zero.
    Linear { slope: f64 },
}

impl Omega {
    pub fn weight(&self, submitted: f64, x_max: f64) -> f64 {
        if submitted <= x_max {
            return 1.0;
        }
        match *self {
            Omega::Strict => 0.0,
            Omega::Linear { slope } => (1.0 + slope * (submitted - x_max) / x_max).max(0.0),
        }
    }

    /// Whether `ω(x̂) < x_max / x̂` holds beyond capacity, the condition under
    /// which truthful play stays dominant.
    pub fn keeps_dominance(&self) -> bool {
        match *self {
            Omega::Strict => true,
            Omega::Linear { slope } => slope <= -1.0,
        }
    }
}

/// Stage-one output.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage1 {
    pub instance: AuctionInstance,
    pub allocation: AllocationResult,
    pub payments: PaymentSchedule,
}

/// Runs stage one on `(bid, capacity)` pairs.
pub fn run_stage1(
    bids: &[(f64, f64)],
    k: Exponent,
    c: f64,
    dist: &BidDistribution,
) -> Result<Stage1> {
    run_stage1_with(bids, k, c, dist, &PaymentRule::default())
}

pub fn run_stage1_with(
    bids: &[(f64, f64)],
    k: Exponent,
    c: f64,
    dist: &BidDistribution,
    rule: &PaymentRule,
) -> Result<Stage1> {
    if !dist.check_regularity(REGULARITY_GRID) {
        return Err(Error::Configuration(
            "bid prior is not regular: virtual welfare is not increasing".into(),
        ));
    }
    let (b, caps): (Vec<f64>, Vec<f64>) = bids.iter().copied().unzip();
    let instance = AuctionInstance::from_bids(b, caps, dist, k, c)?;
    let allocation = allocate(&instance)?;
    let payments = payment_schedule_with(&instance, dist, rule)?;
    Ok(Stage1 {
        instance,
        allocation,
        payments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkSubmission {
    pub submitted: f64,
    /// Realised acceptable fraction.
    pub alpha: f64,
}

impl WorkSubmission {
    pub fn new(submitted: f64, alpha: f64) -> Result<Self> {
        if !(submitted >= 0.0 && submitted.is_finite()) {
            return Err(Error::domain(format!(
                "submitted work must be non-negative, got {submitted}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { submitted, alpha })
    }

    /// `α · min(x, x̂)`: the requester assesses at most `x` units.
    pub fn accepted(&self, allocated: f64) -> f64 {
        self.alpha * self.submitted.min(allocated)
    }
}

/// How stage-two quality is realised in simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaModel {
    /// `α = β`.
    Expected,
    /// `α ~ Beta(βκ, (1-β)κ)`, mean `β`.
    Beta { concentration: f64 },
}

impl AlphaModel {
    pub fn draw<R: Rng + ?Sized>(&self, beta: f64, rng: &mut R) -> Result<f64> {
        match *self {
            AlphaModel::Expected => Ok(beta),
            AlphaModel::Beta { .. } if beta >= 1.0 => Ok(1.0),
            AlphaModel::Beta { concentration } => {
                let law = Beta::new(beta * concentration, (1.0 - beta) * concentration)
                    .map_err(|e| Error::domain(format!("beta law: {e}")))?;
                Ok(law.sample(rng))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    pub worker: usize,
    pub allocated: f64,
    pub max_payment: f64,
    pub submitted: f64,
    pub accepted: f64,
    pub paid: f64,
    /// `I(x̂ ≤ x_max)(p̃ - x̂ v)`, present when the worker's profile is known.
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlementRecord {
    pub rows: Vec<Settlement>,
}

impl SettlementRecord {
    pub fn total_paid(&self) -> f64 {
        self.rows.iter().map(|r| r.paid).sum()
    }
}

pub fn run_stage2(
    stage1: &Stage1,
    submissions: &[WorkSubmission],
    profiles: Option<&[WorkerProfile]>,
) -> Result<SettlementRecord> {
    let n = stage1.instance.len();
    if submissions.len() != n || profiles.is_some_and(|p| p.len() != n) {
        return Err(Error::domain(format!(
            "expected {n} submissions and profiles, one per worker"
        )));
    }
    let rows = submissions
        .iter()
        .enumerate()
        .map(|(i, sub)| {
            let allocated = stage1.allocation.x[i];
            let max_payment = stage1.payments.p[i];
            let accepted = sub.accepted(allocated);
            let paid = realized_payment(max_payment, allocated, accepted)?;
            let utility = profiles.map(|p| {
                let p = &p[i];
                if sub.submitted <= p.x_max {
                    paid - sub.submitted * p.v
                } else {
                    0.0
                }
            });
            Ok(Settlement {
                worker: i,
                allocated,
                max_payment,
                submitted: sub.submitted,
                accepted,
                paid,
                utility,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SettlementRecord { rows })
}

/// Work and maximum pay for one worker at one report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offer {
    pub x: f64,
    pub p: f64,
}

/// Expected utility `ω(x̂) (β min(x̂/x, 1) p - x̂ v)` of submitting `x̂` against
/// an offer.
pub fn expected_utility(profile: &WorkerProfile, omega: Omega, offer: Offer, submitted: f64) -> f64 {
    let pay = if offer.x > 0.0 {
        profile.beta * (submitted / offer.x).min(1.0) * offer.p
    } else {
        0.0
    };
    omega.weight(submitted, profile.x_max) * (pay - submitted * profile.v)
}

/// Everything a single worker's utility depends on besides its own report.
#[derive(Debug, Clone)]
pub struct UtilityContext {
    pub instance: AuctionInstance,
    pub dist: BidDistribution,
    pub worker: usize,
    pub rule: PaymentRule,
}

impl UtilityContext {
    pub fn new(instance: AuctionInstance, dist: BidDistribution, worker: usize) -> Result<Self> {
        if worker >= instance.len() {
            return Err(Error::domain(format!("worker {worker} out of range")));
        }
        if instance.bids().is_none() {
            return Err(Error::domain("utility context needs bids"));
        }
        Ok(Self {
            instance,
            dist,
            worker,
            rule: PaymentRule::default(),
        })
    }

    pub fn with_rule(mut self, rule: PaymentRule) -> Self {
        self.rule = rule;
        self
    }

    /// `(x_i, p_i)` when the worker reports `(bid, capacity)`.
    pub fn offer(&self, bid: f64, capacity: f64) -> Result<Offer> {
        let inst = self
            .instance
            .with_worker_bid(&self.dist, self.worker, bid, capacity)?;
        let m = self.rule.max_payment(&inst, &self.dist, self.worker)?;
        Ok(Offer {
            x: m.allocation,
            p: m.value,
        })
    }
}

/// Expected utility of reporting `(bid, capacity)` and submitting `x̂`.
pub fn worker_utility(
    profile: &WorkerProfile,
    ctx: &UtilityContext,
    omega: Omega,
    bid: f64,
    capacity: f64,
    submitted: f64,
) -> Result<f64> {
    let offer = ctx.offer(bid, capacity)?;
    Ok(expected_utility(profile, omega, offer, submitted))
}
