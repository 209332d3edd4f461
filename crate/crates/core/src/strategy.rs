//! Empirical check of truthful dominance: search one worker's reports for a
//! better response while everyone else stays put.
//!
//! Utility depends on the submitted work `x̂` only through the offer `(x, p)`
//! fixed by the other two coordinates, and for a given offer it is piecewise
//! quadratic in `x̂`. The search therefore runs a box-constrained maximiser over
//! `(b, x̂max)` and solves the `x̂` coordinate exactly at every point, with `x̂`
//! expressed as a multiple `r` of the offered work.

use rand::Rng;
use rayon::prelude::*;

use crate::allocation::{AuctionInstance, Exponent};
use crate::distributions::BidDistribution;
use crate::error::Result;
use crate::mechanism::{expected_utility, Offer, Omega, UtilityContext, WorkerProfile};
use crate::optimize::BoxMaximizer;
use crate::payment::PaymentRule;
use crate::rng;
use crate::simulation::sample_population;

/// Two reports closer than this (relative) count as equal.
pub const EQUALITY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyPoint {
    pub bid: f64,
    pub capacity: f64,
    pub submitted: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchSettings {
    pub maximizer: BoxMaximizer,
    /// Bid box as multiples of the start bid, clipped to the support.
    pub bid_range: (f64, f64),
    /// Declared-capacity box as multiples of the true capacity.
    pub capacity_range: (f64, f64),
    /// Largest submission as a multiple of the offered work.
    pub max_submit_ratio: f64,
    pub rule: PaymentRule,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            maximizer: BoxMaximizer {
                min_gain: 1e-10,
                ..BoxMaximizer::default()
            },
            bid_range: (0.5, 1.5),
            capacity_range: (0.25, 3.0),
            max_submit_ratio: 3.0,
            rule: PaymentRule {
                relative_tolerance: 1e-12,
                max_depth: 30,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub start: StrategyPoint,
    pub start_utility: f64,
    pub best: StrategyPoint,
    pub best_utility: f64,
    /// `x̂* / x(b*, x̂max*)`, 1 when nothing is offered.
    pub submit_ratio: f64,
    pub evaluations: usize,
}

impl BestResponse {
    /// Gain over the start relative to `max(1, |U(start)|)`.
    pub fn relative_gain(&self) -> f64 {
        (self.best_utility - self.start_utility) / self.start_utility.abs().max(1.0)
    }
}

/// Best multiple `r ∈ [0, r_max]` of the offered work to submit, with its
/// utility. Ties keep `r = 1`.
pub fn best_submission(
    profile: &WorkerProfile,
    omega: Omega,
    offer: Offer,
    r_max: f64,
    min_gain: f64,
) -> (f64, f64) {
    if !(offer.x > 0.0) {
        return (1.0, 0.0);
    }
    let u = |r: f64| expected_utility(profile, omega, offer, r * offer.x);
    let mut knots = vec![0.0, 1.0, r_max, profile.x_max / offer.x];
    if let Omega::Linear { slope } = omega {
        if slope < 0.0 {
            knots.push(profile.x_max * (1.0 - 1.0 / slope) / offer.x);
        }
    }
    knots.retain(|r| (0.0..=r_max).contains(r));
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut candidates = knots.clone();
    for w in knots.windows(2) {
        // Fit the quadratic through three interior points and add its vertex.
        let (a, b) = (w[0], w[1]);
        let (r0, r1, r2) = (a + 0.25 * (b - a), a + 0.5 * (b - a), a + 0.75 * (b - a));
        let (u0, u1, u2) = (u(r0), u(r1), u(r2));
        let h = 0.25 * (b - a);
        let curvature = (u0 - 2.0 * u1 + u2) / (h * h);
        if curvature < 0.0 {
            let vertex = r1 - (u2 - u0) / (2.0 * h) / curvature;
            if vertex > a && vertex < b {
                candidates.push(vertex);
            }
        }
        // The left end of a piece may be excluded from it (a jump in ω).
        candidates.push(a + 1e-12 * (b - a).max(1.0));
    }
    let (mut best_r, mut best_u) = (1.0f64.min(r_max), u(1.0f64.min(r_max)));
    for r in candidates {
        let v = u(r);
        if v > best_u + min_gain * best_u.abs().max(1.0) {
            best_r = r;
            best_u = v;
        }
    }
    (best_r, best_u)
}

/// Bounded local search for a better response than `start`. Returns `start`
/// itself when nothing better turns up.
pub fn search_best_response(
    profile: &WorkerProfile,
    ctx: &UtilityContext,
    omega: Omega,
    start: StrategyPoint,
    settings: &SearchSettings,
) -> Result<BestResponse> {
    let ctx = ctx.clone().with_rule(settings.rule);
    let min_gain = settings.maximizer.min_gain;
    let start_offer = ctx.offer(start.bid, start.capacity)?;
    let start_utility = expected_utility(profile, omega, start_offer, start.submitted);
    let value = |bid: f64, cap: f64| -> Option<(f64, f64, f64)> {
        let offer = ctx.offer(bid, cap).ok()?;
        let (r, u) = best_submission(profile, omega, offer, settings.max_submit_ratio, min_gain);
        Some((r, u, offer.x))
    };
    let upper_bid = ctx.dist.upper();
    let lower = [
        (settings.bid_range.0 * start.bid).max(ctx.dist.lower() + 1e-9 * upper_bid),
        settings.capacity_range.0 * profile.x_max,
    ];
    let upper = [
        (settings.bid_range.1 * start.bid).min(upper_bid),
        settings.capacity_range.1 * profile.x_max,
    ];
    let found = settings.maximizer.maximize(
        |p: &[f64]| value(p[0], p[1]).map_or(f64::NEG_INFINITY, |v| v.1),
        &[start.bid, start.capacity],
        &lower,
        &upper,
    );
    let (bid, mut capacity) = (found.point[0], found.point[1]);
    let (mut r, mut u, mut x) = value(bid, capacity).unwrap_or((1.0, f64::NEG_INFINITY, 0.0));
    // Over-declaring capacity and then submitting only part of the offer can
    // tie with declaring exactly what is submitted; report the latter.
    if (r - 1.0).abs() >= EQUALITY_TOLERANCE && r * x > 0.0 {
        let declared = (r * x).clamp(lower[1], upper[1]);
        if let Some((r2, u2, x2)) = value(bid, declared) {
            if u2 >= u - min_gain * u.abs().max(1.0) && (r2 - 1.0).abs() < (r - 1.0).abs() {
                (capacity, r, u, x) = (declared, r2, u2, x2);
            }
        }
    }
    let improved = u > start_utility + min_gain * start_utility.abs().max(1.0);
    let start_ratio = if start_offer.x > 0.0 {
        start.submitted / start_offer.x
    } else {
        1.0
    };
    let (best, best_utility, submit_ratio) = if improved {
        let submitted = r * x;
        (
            StrategyPoint {
                bid,
                capacity,
                submitted,
            },
            u,
            r,
        )
    } else {
        (start, start_utility, start_ratio)
    };
    Ok(BestResponse {
        start,
        start_utility,
        best,
        best_utility,
        submit_ratio,
        evaluations: found.evaluations,
    })
}

/// The truthful report `(v/β, x_max, x(v/β, x_max))`.
pub fn nominal_point(profile: &WorkerProfile, ctx: &UtilityContext) -> Result<(StrategyPoint, Offer)> {
    let bid = profile.truthful_bid();
    let offer = ctx.offer(bid, profile.x_max)?;
    Ok((
        StrategyPoint {
            bid,
            capacity: profile.x_max,
            submitted: offer.x,
        },
        offer,
    ))
}

/// Exhaustive lattice around the truthful report under strict utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeCertificate {
    pub nominal_utility: f64,
    pub best_utility: f64,
    pub best: StrategyPoint,
}

impl LatticeCertificate {
    pub fn relative_excess(&self) -> f64 {
        (self.best_utility - self.nominal_utility) / self.nominal_utility.abs().max(1.0)
    }
}

/// Evaluates strict utility on a `points³` lattice spanning `±half_width`
/// around the truthful report (bids clipped to the support).
pub fn lattice_certificate(
    profile: &WorkerProfile,
    ctx: &UtilityContext,
    points: usize,
    half_width: f64,
) -> Result<LatticeCertificate> {
    let (nominal, offer) = nominal_point(profile, ctx)?;
    let nominal_utility = expected_utility(profile, Omega::Strict, offer, nominal.submitted);
    let axis = |centre: f64| -> Vec<f64> {
        (0..points)
            .map(|j| {
                let t = if points > 1 {
                    -half_width + 2.0 * half_width * j as f64 / (points - 1) as f64
                } else {
                    0.0
                };
                centre * (1.0 + t)
            })
            .collect()
    };
    let upper = ctx.dist.upper();
    let mut cert = LatticeCertificate {
        nominal_utility,
        best_utility: nominal_utility,
        best: nominal,
    };
    let submissions = axis(nominal.submitted.max(profile.x_max * 1e-3));
    for bid in axis(nominal.bid) {
        if !(bid > ctx.dist.lower() && bid <= upper) {
            continue;
        }
        for capacity in axis(profile.x_max) {
            let Ok(offer) = ctx.offer(bid, capacity) else {
                continue;
            };
            for &submitted in &submissions {
                let u = expected_utility(profile, Omega::Strict, offer, submitted);
                if u > cert.best_utility {
                    cert.best_utility = u;
                    cert.best = StrategyPoint {
                        bid,
                        capacity,
                        submitted,
                    };
                }
            }
        }
    }
    Ok(cert)
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub n: usize,
    /// Work requested as a fraction of nominal capacity; also the
    /// conditioning level `F(b₁) < ρ`.
    pub rho: f64,
    pub trials: usize,
    pub k_grid: Vec<Exponent>,
    pub slopes: Vec<f64>,
    pub seed: u64,
    pub settings: SearchSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n: 10,
            rho: 0.1,
            trials: 100,
            k_grid: vec![
                Exponent::Finite(0.0),
                Exponent::Finite(1.0),
                Exponent::Finite(2.0),
                Exponent::Finite(4.0),
                Exponent::Finite(8.0),
                Exponent::Infinite,
            ],
            slopes: vec![-0.5, -0.25],
            seed: 2019,
            settings: SearchSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateDeparture {
    /// Fraction of trials where the best response equals the nominal value.
    pub agreement: f64,
    /// Mean relative difference over trials that departed; `None` when all agreed.
    pub mean_relative_difference: Option<f64>,
}

impl CoordinateDeparture {
    fn from_differences(diffs: &[f64]) -> Self {
        let departed: Vec<f64> = diffs
            .iter()
            .copied()
            .filter(|&d| d >= EQUALITY_TOLERANCE)
            .collect();
        let agreement = 1.0 - departed.len() as f64 / diffs.len().max(1) as f64;
        let mean_relative_difference = if departed.is_empty() {
            None
        } else {
            Some(departed.iter().sum::<f64>() / departed.len() as f64)
        };
        Self {
            agreement,
            mean_relative_difference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepartureReport {
    pub k: Exponent,
    pub slope: f64,
    pub trials: usize,
    pub bid: CoordinateDeparture,
    pub capacity: CoordinateDeparture,
    pub submitted: CoordinateDeparture,
    /// Largest relative utility gain over the truthful report in the cell.
    pub max_relative_gain: f64,
}

/// Relative differences of a best response from the truthful report, per
/// coordinate. The submission is compared with the work offered at the best
/// response's own `(b, x̂max)`.
fn differences(nominal: &StrategyPoint, best: &BestResponse) -> [f64; 3] {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    [
        rel(best.best.bid, nominal.bid),
        rel(best.best.capacity, nominal.capacity),
        (best.submit_ratio - 1.0).abs(),
    ]
}

/// One conditioned trial context: worker 0 bids truthfully at a quantile
/// below `ρ`, everyone else is drawn from the population model.
pub fn study_context(
    cfg: &StudyConfig,
    dist: &BidDistribution,
    trial: usize,
    k: Exponent,
) -> Result<(UtilityContext, WorkerProfile)> {
    let mut rng = rng::stream(cfg.seed, &[0x7ab1e2, trial as u64]);
    let mut pop = sample_population(dist, cfg.n, &mut rng);
    let u: f64 = rng.random();
    pop.bids[0] = dist.quantile(u * cfg.rho)?.max(dist.lower() + 1e-9 * dist.upper());
    let profile = WorkerProfile::new(pop.bids[0] * pop.betas[0], pop.capacities[0], pop.betas[0], 0.0)?;
    let c = (100.0 * cfg.n as f64 * cfg.rho).min(pop.capacities.iter().sum());
    let inst = AuctionInstance::from_bids(pop.bids, pop.capacities, dist, k, c)?;
    Ok((UtilityContext::new(inst, dist.clone(), 0)?, profile))
}

fn trial_differences(
    cfg: &StudyConfig,
    dist: &BidDistribution,
    trial: usize,
    k: Exponent,
    omega: Omega,
) -> Result<([f64; 3], f64)> {
    let (ctx, profile) = study_context(cfg, dist, trial, k)?;
    let ctx = ctx.with_rule(cfg.settings.rule);
    let (nominal, _) = nominal_point(&profile, &ctx)?;
    let best = search_best_response(&profile, &ctx, omega, nominal, &cfg.settings)?;
    Ok((differences(&nominal, &best), best.relative_gain()))
}

/// Reproduces the departure table: one report per `(k, s)` cell, every cell
/// run on the same trial populations.
pub fn departure_study(cfg: &StudyConfig, dist: &BidDistribution) -> Result<Vec<DepartureReport>> {
    let mut reports = Vec::with_capacity(cfg.k_grid.len() * cfg.slopes.len());
    for &k in &cfg.k_grid {
        for &slope in &cfg.slopes {
            let omega = Omega::Linear { slope };
            let rows = (0..cfg.trials)
                .into_par_iter()
                .map(|t| trial_differences(cfg, dist, t, k, omega))
                .collect::<Result<Vec<_>>>()?;
            let column = |j: usize| rows.iter().map(|r| r.0[j]).collect::<Vec<_>>();
            reports.push(DepartureReport {
                k,
                slope,
                trials: cfg.trials,
                bid: CoordinateDeparture::from_differences(&column(0)),
                capacity: CoordinateDeparture::from_differences(&column(1)),
                submitted: CoordinateDeparture::from_differences(&column(2)),
                max_relative_gain: rows.iter().map(|r| r.1).fold(0.0, f64::max),
            });
        }
    }
    Ok(reports)
}
