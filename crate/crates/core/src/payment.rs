//! Maximum payments `p_i = b_i x_i(b_i) + ∫_{b_i}^{b̄} x_i(s, b_{-i}) ds` and
//! their quality-scaled realisation.
//!
//! For finite `k` the allocation curve is continuous with kinks wherever the
//! tight set changes, so the integral uses adaptive Simpson. For `k = ∞` the
//! curve is a step function that only moves where `δ(s)` crosses another
//! worker's virtual welfare; those crossings are located and each constant
//! piece is integrated exactly.

use crate::allocation::{AuctionInstance, Exponent, MarginalAllocation};
use crate::distributions::BidDistribution;
use crate::error::{Error, Result};
use crate::quadrature::AdaptiveSimpson;

/// Quadrature settings for the information-rent integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaymentRule {
    /// Target error relative to `max(1, b_i x_i)`, a lower bound on `p_i`.
    pub relative_tolerance: f64,
    pub max_depth: u32,
}

impl Default for PaymentRule {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-9,
            max_depth: 20,
        }
    }
}

/// Stage-one payment vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentSchedule {
    pub p: Vec<f64>,
    pub error: Vec<f64>,
}

/// A payment together with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPayment {
    pub value: f64,
    /// `x_i` at the worker's own bid.
    pub allocation: f64,
    /// `∫_{b_i}^{b̄} x_i(s) ds`.
    pub rent: f64,
    pub error: f64,
}

impl PaymentRule {
    pub fn max_payment(
        &self,
        inst: &AuctionInstance,
        dist: &BidDistribution,
        worker: usize,
    ) -> Result<MaxPayment> {
        let bids = inst
            .bids()
            .ok_or_else(|| Error::domain("payments need bids, not just virtual welfare"))?;
        let bid = *bids
            .get(worker)
            .ok_or_else(|| Error::domain(format!("worker {worker} out of range")))?;
        let upper = dist.upper();
        if bid > upper {
            return Err(Error::domain(format!("bid {bid} above maximum bid {upper}")));
        }
        let mut curve = MarginalAllocation::new(inst, worker)?;
        let allocation = curve.at_virtual_welfare(inst.virtual_welfare()[worker]);
        let (rent, error) = self.rent(&mut curve, inst, dist, worker, bid, allocation)?;
        Ok(MaxPayment {
            value: bid * allocation + rent,
            allocation,
            rent,
            error,
        })
    }

    /// `∫_{from}^{b̄} x_i(s) ds` with worker `i`'s capacity as in `inst`.
    pub fn information_rent(
        &self,
        inst: &AuctionInstance,
        dist: &BidDistribution,
        worker: usize,
        from: f64,
    ) -> Result<(f64, f64)> {
        let mut curve = MarginalAllocation::new(inst, worker)?;
        let at_from = curve.at_bid(dist, from)?;
        self.rent(&mut curve, inst, dist, worker, from, at_from)
    }

    fn rent(
        &self,
        curve: &mut MarginalAllocation,
        inst: &AuctionInstance,
        dist: &BidDistribution,
        worker: usize,
        from: f64,
        allocation: f64,
    ) -> Result<(f64, f64)> {
        let upper = dist.upper();
        if !(from < upper) {
            return Ok((0.0, 0.0));
        }
        match inst.exponent() {
            Exponent::Infinite => {
                let breaks = crossings(inst, dist, worker, from)?;
                let mut total = 0.0;
                for w in breaks.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    total += (w[1] - w[0]) * curve.at_bid(dist, mid)?;
                }
                Ok((total, 0.0))
            }
            Exponent::Finite(_) => {
                let tolerance = self.relative_tolerance * (from * allocation).max(1.0);
                let q = AdaptiveSimpson::new(tolerance, self.max_depth);
                let integral = q.integrate(|s| curve.at_bid(dist, s), from, upper)?;
                Ok((integral.value, integral.error))
            }
        }
    }
}

/// `[from, s_1, ..., s_m, b̄]` where `δ(s_j)` equals another worker's virtual
/// welfare. Located by bisection, relying on `δ` being increasing.
fn crossings(
    inst: &AuctionInstance,
    dist: &BidDistribution,
    worker: usize,
    from: f64,
) -> Result<Vec<f64>> {
    let upper = dist.upper();
    let lo_delta = dist.virtual_welfare(from)?;
    let hi_delta = dist.virtual_welfare(upper)?;
    let mut breaks = vec![from];
    for (j, &target) in inst.virtual_welfare().iter().enumerate() {
        if j == worker || !(target > lo_delta && target < hi_delta) {
            continue;
        }
        if let Some(bids) = inst.bids() {
            // Same prior for everyone: the crossing is the other bid itself.
            if (dist.virtual_welfare(bids[j])? - target).abs() <= 1e-14 * target {
                breaks.push(bids[j]);
                continue;
            }
        }
        let (mut lo, mut hi) = (from, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if dist.virtual_welfare(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        breaks.push(0.5 * (lo + hi));
    }
    breaks.push(upper);
    breaks.sort_by(|a, b| a.partial_cmp(b).expect("finite break points"));
    breaks.dedup();
    Ok(breaks)
}

/// Maximum promised payment for `worker` with default quadrature settings.
pub fn compute_max_payment(
    inst: &AuctionInstance,
    dist: &BidDistribution,
    worker: usize,
) -> Result<f64> {
    PaymentRule::default()
        .max_payment(inst, dist, worker)
        .map(|p| p.value)
}

/// Maximum payment for every worker, including those with no work at their
/// own bid.
pub fn payment_schedule(inst: &AuctionInstance, dist: &BidDistribution) -> Result<PaymentSchedule> {
    payment_schedule_with(inst, dist, &PaymentRule::default())
}

pub fn payment_schedule_with(
    inst: &AuctionInstance,
    dist: &BidDistribution,
    rule: &PaymentRule,
) -> Result<PaymentSchedule> {
    let (p, error) = (0..inst.len())
        .map(|i| rule.max_payment(inst, dist, i).map(|m| (m.value, m.error)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(PaymentSchedule { p, error })
}

/// Pay after quality assessment: `p̃ = p · x̃ / x`, zero when nothing was
/// allocated.
pub fn realized_payment(p: f64, x: f64, accepted: f64) -> Result<f64> {
    if !(accepted >= 0.0) || !(x >= 0.0) {
        return Err(Error::domain("work amounts must be non-negative"));
    }
    if accepted > x * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "accepted work {accepted} exceeds allocated work {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(p * accepted.min(x) / x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform() -> BidDistribution {
        BidDistribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn two_worker_uniform_closed_form() {
        let dist = uniform();
        let inst = AuctionInstance::from_bids(
            vec![0.4, 0.6],
            vec![100.0, 100.0],
            &dist,
            Exponent::Finite(1.0),
            1.0,
        )
        .unwrap();
        let expected = 0.24 + 0.6 * 1.6f64.ln();
        let p = PaymentRule::default().max_payment(&inst, &dist, 0).unwrap();
        assert!((p.value - expected).abs() < 1e-9, "{} vs {expected}", p.value);
        assert!(p.error < 1e-6 * p.value.max(1.0));
    }

    #[test]
    fn flat_allocation_pays_upper_bound() {
        let dist = BidDistribution::default();
        let inst = AuctionInstance::from_bids(
            vec![0.8, 1.2, 1.5],
            vec![100.0; 3],
            &dist,
            Exponent::Finite(0.0),
            30.0,
        )
        .unwrap();
        let p = compute_max_payment(&inst, &dist, 1).unwrap();
        assert!((p - 10.0 * dist.upper()).abs() < 1e-10);
    }

    #[test]
    fn top_bid_gets_no_rent() {
        let dist = uniform();
        let inst = AuctionInstance::from_bids(
            vec![0.5, 1.0],
            vec![10.0, 10.0],
            &dist,
            Exponent::Finite(2.0),
            4.0,
        )
        .unwrap();
        let m = PaymentRule::default().max_payment(&inst, &dist, 1).unwrap();
        assert_eq!(m.rent, 0.0);
        assert!((m.value - m.allocation).abs() < 1e-15);
    }

    #[test]
    fn greedy_rent_is_exact() {
        // Uniform(0,1), k = ∞, worker 0 at 0.2 against 0.5 and 0.7, caps 1, c = 1.5.
        // Worker 0 holds 1 unit until 0.5, then 0.5 unit until 0.7, then none.
        let dist = uniform();
        let inst = AuctionInstance::from_bids(
            vec![0.2, 0.5, 0.7],
            vec![1.0; 3],
            &dist,
            Exponent::Infinite,
            1.5,
        )
        .unwrap();
        let m = PaymentRule::default().max_payment(&inst, &dist, 0).unwrap();
        let expected = 0.2 * 1.0 + 0.3 * 1.0 + 0.2 * 0.5;
        assert!((m.value - expected).abs() < 1e-12, "{}", m.value);
        let crossings_without_bids = {
            let by_delta = AuctionInstance::new(
                inst.virtual_welfare().to_vec(),
                vec![1.0; 3],
                Exponent::Infinite,
                1.5,
            )
            .unwrap();
            crossings(&by_delta, &dist, 0, 0.2).unwrap()
        };
        assert!((crossings_without_bids[1] - 0.5).abs() < 1e-12);
        assert!((crossings_without_bids[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn payments_need_bids() {
        let inst = AuctionInstance::new(vec![1.0, 2.0], vec![5.0, 5.0], Exponent::Finite(1.0), 3.0)
            .unwrap();
        assert!(compute_max_payment(&inst, &uniform(), 0).is_err());
    }

    #[test]
    fn realized_payment_cases() {
        assert_eq!(realized_payment(100.0, 10.0, 10.0).unwrap(), 100.0);
        assert_eq!(realized_payment(100.0, 10.0, 0.0).unwrap(), 0.0);
        assert!((realized_payment(100.0, 10.0, 9.5).unwrap() - 95.0).abs() < 1e-12);
        assert_eq!(realized_payment(100.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(realized_payment(100.0, 10.0, 11.0).is_err());
    }

    #[test]
    fn identical_workers_are_paid_equally() {
        let dist = BidDistribution::default();
        let inst = AuctionInstance::from_bids(
            vec![1.1; 4],
            vec![50.0; 4],
            &dist,
            Exponent::Finite(0.0),
            100.0,
        )
        .unwrap();
        let s = payment_schedule(&inst, &dist).unwrap();
        assert!(s.p.iter().all(|&p| (p - s.p[0]).abs() < 1e-9));
    }
}
