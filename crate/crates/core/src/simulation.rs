//! Monte Carlo studies of worker return on investment, participation and the
//! requester's cost as the allocation exponent varies.
//!
//! Populations are drawn from a stream keyed by `(seed, n, repeat)` only, so
//! every `k`, `ρ` and probe quantile sees the same workers. Repeats run in
//! parallel and are reduced in index order, which keeps results bit-identical
//! across thread counts.

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use crate::allocation::{allocate, total_virtual_cost, AuctionInstance, Exponent};
use crate::distributions::BidDistribution;
use crate::error::{Error, Result};
use crate::isotonic;
use crate::mechanism::AlphaModel;
use crate::payment::{PaymentRule, payment_schedule_with};
use crate::rng;

const POPULATION_STREAM: u64 = 0x9095;
const ALPHA_STREAM: u64 = 0xa1fa;
/// Nominal capacity scale: `x_max ~ 100 · logNormal(0, 0.3)`.
pub const CAPACITY_SCALE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub bids: Vec<f64>,
    pub capacities: Vec<f64>,
    pub betas: Vec<f64>,
}

/// `n` workers with bids from `dist`, truthful capacities
/// `100 · logNormal(0, 0.3)` and `β ~ Uniform(0.9, 1)`.
pub fn sample_population<R: Rng + ?Sized>(dist: &BidDistribution, n: usize, rng: &mut R) -> Population {
    let bids = dist.sample(rng, n);
    let law = LogNormal::new(0.0, 0.3).expect("valid log-normal parameters");
    let capacities = (0..n).map(|_| CAPACITY_SCALE * law.sample(rng)).collect();
    let betas = (0..n).map(|_| rng.random_range(0.9..1.0)).collect();
    Population {
        bids,
        capacities,
        betas,
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    pub k_grid: Vec<Exponent>,
    pub repeats: usize,
    /// Probe bid quantiles `a`, with `b₁ = F⁻¹(a)`.
    pub quantiles: Vec<f64>,
    /// Probe indirect costs `γ₁`.
    pub gammas: Vec<f64>,
    pub probe_capacity: f64,
    pub probe_beta: f64,
    pub alpha: AlphaModel,
    pub seed: u64,
    pub payment: PaymentRule,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_values: vec![10, 100],
            rho_values: vec![0.1, 0.5],
            k_grid: vec![
                Exponent::Finite(0.0),
                Exponent::Finite(1.0),
                Exponent::Finite(2.0),
                Exponent::Finite(4.0),
                Exponent::Finite(8.0),
                Exponent::Infinite,
            ],
            repeats: 100,
            quantiles: (1..=9).map(|i| i as f64 / 10.0).collect(),
            gammas: (0..=5).map(f64::from).collect(),
            probe_capacity: 100.0,
            probe_beta: 0.95,
            alpha: AlphaModel::Expected,
            seed: 2019,
            payment: PaymentRule {
                relative_tolerance: 1e-8,
                max_depth: 20,
            },
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Configuration(msg.into()));
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n grid must be non-empty with n >= 1");
        }
        if self.rho_values.is_empty() || self.rho_values.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return bad("rho grid must be non-empty with values in (0, 1]");
        }
        if self.k_grid.is_empty() {
            return bad("k grid must be non-empty");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if self.quantiles.len() < 2 || self.quantiles.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("quantile grid needs at least two values in (0, 1)");
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(*g >= 0.0)) {
            return bad("gamma grid must be non-empty and non-negative");
        }
        if !(self.probe_capacity > 0.0) || !(self.probe_beta > 0.0 && self.probe_beta <= 1.0) {
            return bad("probe needs positive capacity and beta in (0, 1]");
        }
        Ok(())
    }
}

/// Population for one repeat, shared by every `k`, `ρ` and probe.
pub fn repeat_population(seed: u64, dist: &BidDistribution, n: usize, repeat: usize) -> Population {
    let mut rng = rng::stream(seed, &[POPULATION_STREAM, n as u64, repeat as u64]);
    sample_population(dist, n, &mut rng)
}

/// Work requested in a cell, `100 n ρ`, clipped to what the sampled workers
/// can supply.
pub fn requested_work(n: usize, rho: f64, capacities: &[f64]) -> f64 {
    (CAPACITY_SCALE * n as f64 * rho).min(capacities.iter().sum())
}

/// Per-repeat means for the probe worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeMeans {
    /// Mean realised pay `Σ p̃₁ⱼ / R`.
    pub paid: f64,
    /// Mean allocated work `Σ x₁ⱼ / R`.
    pub work: f64,
}

impl ProbeMeans {
    /// `paid / (work · v₁ + γ₁) − 1`, taken as 0 when nothing is paid and
    /// nothing is spent.
    pub fn roi(&self, v: f64, gamma: f64) -> f64 {
        let cost = self.work * v + gamma;
        if cost == 0.0 && self.paid == 0.0 {
            0.0
        } else {
            self.paid / cost - 1.0
        }
    }
}

/// Probe outcomes for every `(k, a)` pair in one `(n, ρ)` cell, indexed
/// `[k][a]`.
pub fn probe_means(
    cfg: &SimulationConfig,
    dist: &BidDistribution,
    n: usize,
    rho: f64,
) -> Result<Vec<Vec<ProbeMeans>>> {
    let probe_bids = cfg
        .quantiles
        .iter()
        .map(|&a| dist.quantile(a))
        .collect::<Result<Vec<_>>>()?;
    let per_repeat = (0..cfg.repeats)
        .into_par_iter()
        .map(|j| {
            let mut pop = repeat_population(cfg.seed, dist, n, j);
            pop.capacities[0] = cfg.probe_capacity;
            let c = requested_work(n, rho, &pop.capacities);
            let mut alpha_rng = rng::stream(cfg.seed, &[ALPHA_STREAM, n as u64, j as u64]);
            let alpha = cfg.alpha.draw(cfg.probe_beta, &mut alpha_rng)?;
            let mut out = Vec::with_capacity(cfg.k_grid.len() * probe_bids.len());
            for &k in &cfg.k_grid {
                for &b in &probe_bids {
                    pop.bids[0] = b;
                    let inst =
                        AuctionInstance::from_bids(pop.bids.clone(), pop.capacities.clone(), dist, k, c)?;
                    let m = cfg.payment.max_payment(&inst, dist, 0)?;
                    // Truthful play submits x₁; α of it is accepted.
                    out.push((alpha * m.value, m.allocation));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = cfg.repeats as f64;
    Ok((0..cfg.k_grid.len())
        .map(|ki| {
            (0..probe_bids.len())
                .map(|ai| {
                    let idx = ki * probe_bids.len() + ai;
                    let (paid, work) = per_repeat
                        .iter()
                        .fold((0.0, 0.0), |(p, w), rep| (p + rep[idx].0, w + rep[idx].1));
                    ProbeMeans {
                        paid: paid / r,
                        work: work / r,
                    }
                })
                .collect()
        })
        .collect())
}

/// ROI of the probe at quantile `a` under exponent `k`.
pub fn estimate_roi(
    cfg: &SimulationConfig,
    dist: &BidDistribution,
    n: usize,
    rho: f64,
    quantile: f64,
    gamma: f64,
    k: Exponent,
) -> Result<f64> {
    let single = SimulationConfig {
        k_grid: vec![k],
        quantiles: vec![quantile],
        ..cfg.clone()
    };
    let means = probe_means(&single, dist, n, rho)?[0][0];
    Ok(means.roi(dist.quantile(quantile)? * cfg.probe_beta, gamma))
}

/// ROI against unit cost, raw and smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiCurve {
    /// `(v₁, ROI)` in increasing `v₁`.
    pub points: Vec<(f64, f64)>,
    /// Non-increasing least-squares fit to the ROI values.
    pub smoothed: Vec<f64>,
}

/// Isotonic non-increasing fit of ROI against unit cost.
pub fn monotone_smooth(points: &[(f64, f64)]) -> Result<RoiCurve> {
    if points.len() < 2 {
        return Err(Error::domain("smoothing needs at least two points"));
    }
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    Ok(RoiCurve {
        smoothed: isotonic::non_increasing(&y, None),
        points,
    })
}

/// Share of the population whose unit cost lies left of the smoothed ROI
/// curve's zero crossing. Unit costs map to bids through `b = v / β̄`.
pub fn participation_rate(curve: &RoiCurve, dist: &BidDistribution, beta_bar: f64) -> f64 {
    let s = &curve.smoothed;
    if s.iter().all(|&r| r >= 0.0) {
        return 1.0;
    }
    if s[0] < 0.0 {
        return 0.0;
    }
    let j = s.iter().position(|&r| r < 0.0).expect("a negative value exists");
    let (v0, v1) = (curve.points[j - 1].0, curve.points[j].0);
    let (r0, r1) = (s[j - 1], s[j]);
    let crossing = v0 + (v1 - v0) * r0 / (r0 - r1);
    dist.cdf(crossing / beta_bar)
}

/// `mean Σ x^(k) δ / mean Σ x^(∞) δ` over the repeats of one `(n, ρ)` cell.
pub fn cost_inflation(
    cfg: &SimulationConfig,
    dist: &BidDistribution,
    n: usize,
    rho: f64,
) -> Result<Vec<f64>> {
    let per_repeat = (0..cfg.repeats)
        .into_par_iter()
        .map(|j| {
            let pop = repeat_population(cfg.seed, dist, n, j);
            let c = requested_work(n, rho, &pop.capacities);
            let base = AuctionInstance::from_bids(pop.bids, pop.capacities, dist, Exponent::Infinite, c)?;
            let greedy = total_virtual_cost(&base, &allocate(&base)?);
            let costs = cfg
                .k_grid
                .iter()
                .map(|&k| {
                    let inst = base.with_exponent(k)?;
                    Ok(total_virtual_cost(&inst, &allocate(&inst)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((greedy, costs))
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline: f64 = per_repeat.iter().map(|r| r.0).sum();
    Ok((0..cfg.k_grid.len())
        .map(|ki| {
            let total: f64 = per_repeat.iter().map(|r| r.1[ki]).sum();
            if cfg.k_grid[ki].is_infinite() {
                1.0
            } else {
                total / baseline
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiRow {
    pub n: usize,
    pub rho: f64,
    pub gamma: f64,
    pub k: Exponent,
    pub v1: f64,
    pub roi_raw: f64,
    pub roi_smoothed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationRow {
    pub n: usize,
    pub rho: f64,
    pub gamma: f64,
    pub k: Exponent,
    pub participation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InflationRow {
    pub n: usize,
    pub rho: f64,
    pub k: Exponent,
    pub inflation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub n: usize,
    pub rho: f64,
    pub gamma: f64,
    pub k: Exponent,
    pub inflation: f64,
    pub participation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Figures {
    pub roi: Vec<RoiRow>,
    pub participation: Vec<ParticipationRow>,
    pub inflation: Vec<InflationRow>,
    pub tradeoff: Vec<TradeoffRow>,
}

/// Runs every cell of the ROI, participation, inflation and trade-off studies.
pub fn run_figures(cfg: &SimulationConfig, dist: &BidDistribution) -> Result<Figures> {
    cfg.validate()?;
    let v1: Vec<f64> = cfg
        .quantiles
        .iter()
        .map(|&a| Ok(dist.quantile(a)? * cfg.probe_beta))
        .collect::<Result<_>>()?;
    let mut figs = Figures::default();
    for &n in &cfg.n_values {
        for &rho in &cfg.rho_values {
            let means = probe_means(cfg, dist, n, rho)?;
            let inflation = cost_inflation(cfg, dist, n, rho)?;
            for (ki, &k) in cfg.k_grid.iter().enumerate() {
                figs.inflation.push(InflationRow {
                    n,
                    rho,
                    k,
                    inflation: inflation[ki],
                });
            }
            for &gamma in &cfg.gammas {
                for (ki, &k) in cfg.k_grid.iter().enumerate() {
                    let points: Vec<(f64, f64)> = v1
                        .iter()
                        .zip(&means[ki])
                        .map(|(&v, m)| (v, m.roi(v, gamma)))
                        .collect();
                    let curve = monotone_smooth(&points)?;
                    for (&(v, raw), &smooth) in curve.points.iter().zip(&curve.smoothed) {
                        figs.roi.push(RoiRow {
                            n,
                            rho,
                            gamma,
                            k,
                            v1: v,
                            roi_raw: raw,
                            roi_smoothed: smooth,
                        });
                    }
                    let participation = participation_rate(&curve, dist, cfg.probe_beta);
                    figs.participation.push(ParticipationRow {
                        n,
                        rho,
                        gamma,
                        k,
                        participation,
                    });
                    figs.tradeoff.push(TradeoffRow {
                        n,
                        rho,
                        gamma,
                        k,
                        inflation: inflation[ki],
                        participation,
                    });
                }
            }
        }
    }
    Ok(figs)
}

/// Both sides of `E Σ p_i = E Σ x_i δ_i`, estimated on the same draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MyersonCheck {
    pub draws: usize,
    pub mean_payment: f64,
    pub mean_virtual_cost: f64,
}

impl MyersonCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.mean_payment - self.mean_virtual_cost).abs() / self.mean_virtual_cost
    }
}

/// Draws `draws` bid vectors for a fixed set of capacities and computes every
/// worker's maximum payment alongside the virtual cost.
pub fn myerson_identity(
    dist: &BidDistribution,
    n: usize,
    k: Exponent,
    rho: f64,
    draws: usize,
    seed: u64,
    rule: &PaymentRule,
) -> Result<MyersonCheck> {
    if draws == 0 {
        return Err(Error::domain("need at least one draw"));
    }
    let capacities = repeat_population(seed, dist, n, usize::MAX).capacities;
    let c = requested_work(n, rho, &capacities);
    let per_draw = (0..draws)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(seed, &[0x3e75, j as u64]);
            let bids = dist.sample(&mut rng, n);
            let inst = AuctionInstance::from_bids(bids, capacities.clone(), dist, k, c)?;
            let cost = total_virtual_cost(&inst, &allocate(&inst)?);
            let paid: f64 = payment_schedule_with(&inst, dist, rule)?.p.iter().sum();
            Ok((paid, cost))
        })
        .collect::<Result<Vec<_>>>()?;
    let (paid, cost) = per_draw
        .iter()
        .fold((0.0, 0.0), |(p, c), d| (p + d.0, c + d.1));
    Ok(MyersonCheck {
        draws,
        mean_payment: paid / draws as f64,
        mean_virtual_cost: cost / draws as f64,
    })
}
