//! Work allocation.
//!
//! Solves
//!
//! ```text
//! minimise  Σ δ_i^k x_i²   subject to  0 ≤ x_i ≤ x̂max_i,  Σ x_i = c
//! ```
//!
//! with the tight-set iteration: start with no capped workers, split the
//! remaining work `c'` in proportion to `δ_i^{-k}` among the free workers, cap
//! every worker whose share exceeds its declared capacity, and repeat until no
//! share does. The `k = ∞` limit is a separate greedy fill in ascending `δ`.
//!
//! Multipliers follow the half-scaled Lagrangian, so at the optimum
//! `δ_i^k x_i + λ_i − μ = 0` for every worker, `μ = c' / Σ_free δ_j^{-k}` and
//! `λ_i = μ − δ_i^k x̂max_i` on the tight set.

use std::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distributions::BidDistribution;
use crate::error::{Error, Result};

/// Exponents at or above this use log-space weights.
pub const LOG_SPACE_FROM: f64 = 8.0;
/// Relative slack on the capacity check before a share counts as a violation.
const VIOLATION_SLACK: f64 = 1e-12;
/// Demand above total capacity by less than this (relative) is clamped.
const FEASIBILITY_SLACK: f64 = 1e-9;
/// Largest instance the exhaustive oracle accepts.
pub const ORACLE_MAX_WORKERS: usize = 16;

/// The equality/efficiency exponent `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exponent::Finite(k) => write!(f, "{k}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::Infinite),
            other => {
                let k: f64 = other
                    .parse()
                    .map_err(|_| Error::domain(format!("invalid exponent {s:?}")))?;
                if k.is_infinite() && k > 0.0 {
                    Ok(Exponent::Infinite)
                } else if k >= 0.0 && k.is_finite() {
                    Ok(Exponent::Finite(k))
                } else {
                    Err(Error::domain(format!("exponent must be >= 0, got {s}")))
                }
            }
        }
    }
}

/// Finite exponents serialise as numbers and `k = ∞` as the string `"inf"`;
/// numeric strings are accepted too.
impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(k) => s.serialize_f64(*k),
            Exponent::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => k.to_string().parse(),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// One auction round as seen by the allocator.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionInstance {
    bids: Option<Vec<f64>>,
    capacities: Vec<f64>,
    virtual_welfare: Vec<f64>,
    exponent: Exponent,
    total_work: f64,
}

impl AuctionInstance {
    /// Instance given directly in virtual-welfare terms.
    pub fn new(
        virtual_welfare: Vec<f64>,
        capacities: Vec<f64>,
        exponent: Exponent,
        total_work: f64,
    ) -> Result<Self> {
        let mut inst = Self {
            bids: None,
            capacities,
            virtual_welfare,
            exponent,
            total_work,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Instance built from unit bids; `δ` comes from the prior.
    pub fn from_bids(
        bids: Vec<f64>,
        capacities: Vec<f64>,
        dist: &BidDistribution,
        exponent: Exponent,
        total_work: f64,
    ) -> Result<Self> {
        if bids.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::domain("bids must be positive"));
        }
        let virtual_welfare = bids
            .iter()
            .map(|&b| dist.virtual_welfare(b))
            .collect::<Result<Vec<_>>>()?;
        let mut inst = Self {
            bids: Some(bids),
            capacities,
            virtual_welfare,
            exponent,
            total_work,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&mut self) -> Result<()> {
        let n = self.virtual_welfare.len();
        if n == 0 {
            return Err(Error::domain("instance needs at least one worker"));
        }
        if self.capacities.len() != n || self.bids.as_ref().is_some_and(|b| b.len() != n) {
            return Err(Error::domain("bids, capacities and virtual welfare differ in length"));
        }
        if self
            .virtual_welfare
            .iter()
            .any(|&d| !(d > 0.0) || !d.is_finite())
        {
            return Err(Error::domain("virtual welfare must be positive and finite"));
        }
        if self
            .capacities
            .iter()
            .any(|&x| !(x > 0.0) || !x.is_finite())
        {
            return Err(Error::domain("capacities must be positive and finite"));
        }
        if let Exponent::Finite(k) = self.exponent {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::domain(format!("exponent must be >= 0, got {k}")));
            }
        }
        if !(self.total_work >= 0.0) || !self.total_work.is_finite() {
            return Err(Error::domain("total work must be a non-negative number"));
        }
        let capacity: f64 = self.capacities.iter().sum();
        if self.total_work > capacity {
            if self.total_work - capacity <= FEASIBILITY_SLACK * capacity {
                self.total_work = capacity;
            } else {
                return Err(Error::Infeasible {
                    requested: self.total_work,
                    capacity,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.virtual_welfare.len()
    }

    pub fn is_empty(&self) -> bool {
        self.virtual_welfare.is_empty()
    }

    pub fn bids(&self) -> Option<&[f64]> {
        self.bids.as_deref()
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn virtual_welfare(&self) -> &[f64] {
        &self.virtual_welfare
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn total_work(&self) -> f64 {
        self.total_work
    }

    pub fn with_exponent(&self, exponent: Exponent) -> Result<Self> {
        let mut inst = self.clone();
        inst.exponent = exponent;
        inst.validate()?;
        Ok(inst)
    }

    /// Same instance with worker `i` bidding `(bid, capacity)` instead.
    pub fn with_worker_bid(
        &self,
        dist: &BidDistribution,
        i: usize,
        bid: f64,
        capacity: f64,
    ) -> Result<Self> {
        if i >= self.len() {
            return Err(Error::domain(format!("worker {i} out of range")));
        }
        let mut inst = self.clone();
        inst.virtual_welfare[i] = dist.virtual_welfare(bid)?;
        inst.capacities[i] = capacity;
        if let Some(bids) = inst.bids.as_mut() {
            bids[i] = bid;
        }
        inst.validate()?;
        Ok(inst)
    }
}

/// Solution of one allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub x: Vec<f64>,
    /// Capped workers, ordered by ascending sort key `δ_i^k x̂max_i`
    /// (by `δ_i` for `k = ∞`), ties in original index order.
    pub tight_set: Vec<usize>,
    pub lambda: Vec<f64>,
    pub mu: f64,
    /// `Σ δ_i^k x_i²` for finite `k`; `Σ δ_i x_i` for `k = ∞`.
    pub objective: f64,
    pub iterations: usize,
}

impl AllocationResult {
    pub fn is_tight(&self, i: usize) -> bool {
        self.tight_set.contains(&i)
    }
}

/// Ordering statistic `γ_i = δ_i^k x̂max_i`, kept in log form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortKey {
    pub index: usize,
    pub log_gamma: f64,
}

pub fn sort_keys(inst: &AuctionInstance, k: f64) -> Vec<SortKey> {
    let mut keys: Vec<SortKey> = inst
        .virtual_welfare
        .iter()
        .zip(&inst.capacities)
        .enumerate()
        .map(|(index, (&d, &cap))| SortKey {
            index,
            log_gamma: k * d.ln() + cap.ln(),
        })
        .collect();
    keys.sort_by(|a, b| a.log_gamma.partial_cmp(&b.log_gamma).unwrap_or(Ordering::Equal));
    keys
}

/// Reusable buffers for repeated solves on instances of one size.
#[derive(Debug, Default, Clone)]
pub(crate) struct Workspace {
    pub x: Vec<f64>,
    tight: Vec<bool>,
    weight: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveSummary {
    /// `μ` as `scaled_mu · exp(-log_scale)`.
    scaled_mu: f64,
    log_scale: f64,
    iterations: usize,
}

/// Weights `δ_j^{-k}` on the free set, scaled by `exp(-log_scale)`.
fn free_weights(delta: &[f64], tight: &[bool], k: f64, weight: &mut [f64]) -> (f64, f64) {
    if k < LOG_SPACE_FROM {
        let mut total = 0.0;
        for ((w, &d), &t) in weight.iter_mut().zip(delta).zip(tight) {
            *w = if t { 0.0 } else { d.powf(-k) };
            total += *w;
        }
        return (total, 0.0);
    }
    // Reference at the smallest free δ keeps the largest weight at 1.
    let log_ref = delta
        .iter()
        .zip(tight)
        .filter(|(_, &t)| !t)
        .map(|(d, _)| d.ln())
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for ((w, &d), &t) in weight.iter_mut().zip(delta).zip(tight) {
        *w = if t { 0.0 } else { (-k * (d.ln() - log_ref)).exp() };
        total += *w;
    }
    (total, -k * log_ref)
}

/// Tight-set iteration on raw slices. Leaves the allocation in `ws.x`.
pub(crate) fn solve_finite(
    delta: &[f64],
    caps: &[f64],
    k: f64,
    c: f64,
    ws: &mut Workspace,
) -> SolveSummary {
    let n = delta.len();
    ws.x.clear();
    ws.x.resize(n, 0.0);
    ws.tight.clear();
    ws.tight.resize(n, false);
    ws.weight.clear();
    ws.weight.resize(n, 0.0);

    let capacity: f64 = caps.iter().sum();
    if n == 1 || c >= capacity {
        if n == 1 {
            ws.x[0] = c;
            ws.tight[0] = c >= caps[0];
        } else {
            ws.x.copy_from_slice(caps);
            ws.tight.iter_mut().for_each(|t| *t = true);
        }
        let scaled_mu = if c >= capacity {
            // Smallest μ keeping every λ non-negative.
            delta
                .iter()
                .zip(caps)
                .map(|(&d, &cap)| d.powf(k) * cap)
                .fold(0.0, f64::max)
        } else {
            delta[0].powf(k) * c
        };
        return SolveSummary {
            scaled_mu,
            log_scale: 0.0,
            iterations: 1,
        };
    }

    let mut iterations = 0;
    loop {
        iterations += 1;
        let remaining = c - caps
            .iter()
            .zip(&ws.tight)
            .filter(|(_, &t)| t)
            .map(|(cap, _)| cap)
            .sum::<f64>();
        let (total_weight, log_scale) = free_weights(delta, &ws.tight, k, &mut ws.weight);
        let scaled_mu = remaining / total_weight;
        let lone_free = ws.tight.iter().filter(|&&t| !t).count() == 1;

        let mut violated = 0;
        let mut free = 0;
        for i in 0..n {
            if ws.tight[i] {
                ws.x[i] = caps[i];
                continue;
            }
            free += 1;
            let share = if lone_free {
                remaining
            } else {
                scaled_mu * ws.weight[i]
            };
            ws.x[i] = share;
            if share > caps[i] * (1.0 + VIOLATION_SLACK) {
                violated += 1;
            }
        }
        if violated == 0 {
            for (x, &cap) in ws.x.iter_mut().zip(caps) {
                *x = x.clamp(0.0, cap);
            }
            return SolveSummary {
                scaled_mu,
                log_scale,
                iterations,
            };
        }
        if violated == free {
            // Only reachable when c sits within rounding of total capacity.
            ws.x.copy_from_slice(caps);
            ws.tight.iter_mut().for_each(|t| *t = true);
            return SolveSummary {
                scaled_mu: delta
                    .iter()
                    .zip(caps)
                    .map(|(&d, &cap)| d.powf(k) * cap)
                    .fold(0.0, f64::max),
                log_scale: 0.0,
                iterations,
            };
        }
        for i in 0..n {
            if !ws.tight[i] && ws.x[i] > caps[i] * (1.0 + VIOLATION_SLACK) {
                ws.tight[i] = true;
            }
        }
    }
}

fn finite_result(inst: &AuctionInstance, k: f64, ws: &mut Workspace) -> AllocationResult {
    let delta = &inst.virtual_welfare;
    let caps = &inst.capacities;
    let summary = solve_finite(delta, caps, k, inst.total_work, ws);
    let n = delta.len();

    // λ_i = μ − δ_i^k x̂max_i, formed in the solver's scaled units.
    let mut lambda = vec![0.0; n];
    for i in 0..n {
        if ws.tight[i] {
            let scaled_gamma = (k * delta[i].ln() + summary.log_scale).exp() * caps[i];
            let scaled = (summary.scaled_mu - scaled_gamma).max(0.0);
            lambda[i] = scaled * (-summary.log_scale).exp();
        }
    }
    let mu = summary.scaled_mu * (-summary.log_scale).exp();
    let objective = delta
        .iter()
        .zip(&ws.x)
        .map(|(&d, &x)| (k * d.ln()).exp() * x * x)
        .sum();

    let tight_set = sort_keys(inst, k)
        .into_iter()
        .map(|key| key.index)
        .filter(|&i| ws.tight[i])
        .collect();
    AllocationResult {
        x: ws.x.clone(),
        tight_set,
        lambda,
        mu,
        objective,
        iterations: summary.iterations,
    }
}

/// Solve the allocation program for the instance's exponent.
///
/// `k = ∞` dispatches to [`allocate_limit_k_inf`].
pub fn allocate(inst: &AuctionInstance) -> Result<AllocationResult> {
    match inst.exponent {
        Exponent::Infinite => allocate_limit_k_inf(inst),
        Exponent::Finite(k) => Ok(finite_result(inst, k, &mut Workspace::default())),
    }
}

/// Workers grouped by equal `δ` (relative tolerance 1e-12), in ascending order.
fn delta_groups(delta: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..delta.len()).collect();
    order.sort_by(|&a, &b| delta[a].partial_cmp(&delta[b]).unwrap_or(Ordering::Equal));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if (delta[i] - delta[g[0]]).abs() <= 1e-12 * delta[g[0]] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Greedy fill used for `k = ∞`; writes into `x` and returns the index of the
/// last group that received work together with the number of groups visited.
pub(crate) fn greedy_fill(delta: &[f64], caps: &[f64], c: f64, x: &mut Vec<f64>) -> (f64, usize) {
    x.clear();
    x.resize(delta.len(), 0.0);
    let mut remaining = c;
    let mut marginal = delta.iter().copied().fold(f64::INFINITY, f64::min);
    let mut visited = 0;
    for group in delta_groups(delta) {
        if remaining <= 0.0 {
            break;
        }
        visited += 1;
        marginal = delta[group[0]];
        let group_cap: f64 = group.iter().map(|&i| caps[i]).sum();
        if group_cap <= remaining {
            for &i in &group {
                x[i] = caps[i];
            }
            remaining -= group_cap;
            continue;
        }
        // Equal split among tied workers, respecting their caps.
        let mut members = group;
        members.sort_by(|&a, &b| caps[a].partial_cmp(&caps[b]).unwrap_or(Ordering::Equal));
        let mut left = members.len();
        for &i in &members {
            let share = remaining / left as f64;
            x[i] = share.min(caps[i]);
            remaining -= x[i];
            left -= 1;
        }
        remaining = 0.0;
    }
    (marginal, visited)
}

/// Cost-minimising allocation: fill workers in ascending `δ`, splitting the
/// marginal share equally among ties. Multipliers are those of the linear
/// program `min Σ δ_i x_i`: `μ` is the marginal `δ`, `λ_i = μ − δ_i` on
/// capped workers.
pub fn allocate_limit_k_inf(inst: &AuctionInstance) -> Result<AllocationResult> {
    let delta = &inst.virtual_welfare;
    let caps = &inst.capacities;
    let mut x = Vec::new();
    let (mu, visited) = greedy_fill(delta, caps, inst.total_work, &mut x);
    let n = delta.len();
    let capped: Vec<bool> = (0..n).map(|i| x[i] > 0.0 && x[i] >= caps[i]).collect();
    let lambda = (0..n)
        .map(|i| if capped[i] { (mu - delta[i]).max(0.0) } else { 0.0 })
        .collect();
    let mut tight_set: Vec<usize> = (0..n).filter(|&i| capped[i]).collect();
    tight_set.sort_by(|&a, &b| delta[a].partial_cmp(&delta[b]).unwrap_or(Ordering::Equal));
    let objective = delta.iter().zip(&x).map(|(d, x)| d * x).sum();
    Ok(AllocationResult {
        x,
        tight_set,
        lambda,
        mu,
        objective,
        iterations: visited.max(1),
    })
}

/// Exhaustive reference solver: tries every subset as the tight set, keeps the
/// candidates that satisfy primal feasibility and `λ ≥ 0`, and returns the one
/// with the smallest objective.
pub fn oracle_allocate(inst: &AuctionInstance) -> Result<AllocationResult> {
    let k = match inst.exponent {
        Exponent::Finite(k) => k,
        Exponent::Infinite => {
            return Err(Error::domain("the exhaustive oracle needs a finite exponent"))
        }
    };
    let n = inst.len();
    if n > ORACLE_MAX_WORKERS {
        return Err(Error::Size(format!(
            "exhaustive oracle handles at most {ORACLE_MAX_WORKERS} workers, got {n}"
        )));
    }
    let delta = &inst.virtual_welfare;
    let caps = &inst.capacities;
    let c = inst.total_work;
    let power: Vec<f64> = delta.iter().map(|d| d.powf(k)).collect();
    let capacity: f64 = caps.iter().sum();

    let mut best: Option<AllocationResult> = None;
    let full = (1u32 << n) - 1;
    for mask in 0..=full {
        let tight = |i: usize| mask & (1 << i) != 0;
        let mut x = vec![0.0; n];
        let mu;
        if mask == full {
            if (c - capacity).abs() > 1e-12 * capacity.max(1.0) {
                continue;
            }
            x.copy_from_slice(caps);
            mu = (0..n).map(|i| power[i] * caps[i]).fold(0.0, f64::max);
        } else {
            let fixed: f64 = (0..n).filter(|&i| tight(i)).map(|i| caps[i]).sum();
            let remaining = c - fixed;
            if remaining < -1e-12 * c.max(1.0) {
                continue;
            }
            let inv_sum: f64 = (0..n).filter(|&i| !tight(i)).map(|i| 1.0 / power[i]).sum();
            mu = remaining / inv_sum;
            let mut feasible = true;
            for i in 0..n {
                x[i] = if tight(i) { caps[i] } else { mu / power[i] };
                if x[i] > caps[i] * (1.0 + 1e-12) || x[i] < 0.0 {
                    feasible = false;
                }
            }
            if !feasible {
                continue;
            }
        }
        let lambda: Vec<f64> = (0..n)
            .map(|i| if tight(i) { mu - power[i] * caps[i] } else { 0.0 })
            .collect();
        if lambda.iter().any(|&l| l < -1e-12 * mu.abs().max(1.0)) {
            continue;
        }
        let objective: f64 = (0..n).map(|i| power[i] * x[i] * x[i]).sum();
        // Degenerate optima (λ_i = 0 with x_i at its cap) report the larger tight set.
        let better = best.as_ref().is_none_or(|b| {
            objective < b.objective - 1e-14 * b.objective.abs()
                || (objective <= b.objective + 1e-14 * b.objective.abs()
                    && mask.count_ones() as usize > b.tight_set.len())
        });
        if better {
            let mut tight_set: Vec<usize> = (0..n).filter(|&i| tight(i)).collect();
            tight_set.sort_by(|&a, &b| {
                (power[a] * caps[a])
                    .partial_cmp(&(power[b] * caps[b]))
                    .unwrap_or(Ordering::Equal)
            });
            best = Some(AllocationResult {
                x,
                tight_set,
                lambda: lambda.into_iter().map(|l| l.max(0.0)).collect(),
                mu,
                objective,
                iterations: 0,
            });
        }
    }
    let mut result = best.ok_or_else(|| Error::domain("no candidate tight set is feasible"))?;
    result.iterations = full as usize + 1;
    Ok(result)
}

/// Worker `i`'s allocation as its bid sweeps `grid`, everything else fixed.
pub fn allocation_curve(
    inst: &AuctionInstance,
    dist: &BidDistribution,
    i: usize,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut eval = MarginalAllocation::new(inst, i)?;
    grid.iter()
        .map(|&s| Ok((s, eval.at_bid(dist, s)?)))
        .collect()
}

/// `Σ x_i δ_i`, the expected-cost surrogate.
pub fn total_virtual_cost(inst: &AuctionInstance, result: &AllocationResult) -> f64 {
    inst.virtual_welfare
        .iter()
        .zip(&result.x)
        .map(|(d, x)| d * x)
        .sum()
}

/// Evaluates one worker's allocation as a function of its own virtual welfare
/// with everything else held fixed, reusing buffers across calls.
#[derive(Debug, Clone)]
pub(crate) struct MarginalAllocation {
    delta: Vec<f64>,
    caps: Vec<f64>,
    exponent: Exponent,
    total_work: f64,
    worker: usize,
    ws: Workspace,
}

impl MarginalAllocation {
    pub fn new(inst: &AuctionInstance, worker: usize) -> Result<Self> {
        if worker >= inst.len() {
            return Err(Error::domain(format!("worker {worker} out of range")));
        }
        Ok(Self {
            delta: inst.virtual_welfare.clone(),
            caps: inst.capacities.clone(),
            exponent: inst.exponent,
            total_work: inst.total_work,
            worker,
            ws: Workspace::default(),
        })
    }

    pub fn at_virtual_welfare(&mut self, delta: f64) -> f64 {
        self.delta[self.worker] = delta;
        match self.exponent {
            Exponent::Finite(k) => {
                solve_finite(&self.delta, &self.caps, k, self.total_work, &mut self.ws);
            }
            Exponent::Infinite => {
                greedy_fill(&self.delta, &self.caps, self.total_work, &mut self.ws.x);
            }
        }
        self.ws.x[self.worker]
    }

    pub fn at_bid(&mut self, dist: &BidDistribution, bid: f64) -> Result<f64> {
        let delta = dist.virtual_welfare(bid)?;
        if !(delta > 0.0) {
            return Err(Error::domain(format!("virtual welfare at bid {bid} is not positive")));
        }
        Ok(self.at_virtual_welfare(delta))
    }
}
