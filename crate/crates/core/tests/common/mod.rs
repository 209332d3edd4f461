#![allow(dead_code)]

use crowd_auction::rng::StreamRng;
use crowd_auction::{AuctionInstance, BidDistribution, Exponent};
use rand::Rng;

pub const FINITE_K: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];

pub fn prior() -> BidDistribution {
    BidDistribution::default()
}

/// Bids from the prior, capacities spread over a decade, demand anywhere
/// between a sliver and nearly all of the capacity.
pub fn random_instance(rng: &mut StreamRng, dist: &BidDistribution, k: Exponent) -> AuctionInstance {
    let n = rng.random_range(2..=10);
    random_instance_of(rng, dist, k, n)
}

pub fn random_instance_of(
    rng: &mut StreamRng,
    dist: &BidDistribution,
    k: Exponent,
    n: usize,
) -> AuctionInstance {
    let bids = dist.sample(rng, n);
    let caps: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-0.5..0.5))).collect();
    let share: f64 = rng.random_range(0.05..0.95);
    let c = share * caps.iter().sum::<f64>();
    AuctionInstance::from_bids(bids, caps, dist, k, c).expect("valid instance")
}

/// Number of sign changes, ignoring entries within `zero` of 0.
pub fn sign_changes(values: &[f64], zero: f64) -> usize {
    let signs: Vec<bool> = values
        .iter()
        .filter(|v| v.abs() > zero)
        .map(|&v| v > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
