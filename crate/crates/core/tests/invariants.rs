mod common;

use common::{prior, random_instance, rel_close, sign_changes, FINITE_K};
use crowd_auction::mechanism::{expected_utility, UtilityContext};
use crowd_auction::{
    allocate, allocate_limit_k_inf, allocation_curve, compute_max_payment, realized_payment, rng,
    total_virtual_cost, AuctionInstance, Exponent, Omega, WorkerProfile,
};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn kkt_certificate_holds(seed in any::<u64>(), ki in 0usize..5) {
        let k = FINITE_K[ki];
        let mut r = rng::stream(seed, &[1]);
        let inst = random_instance(&mut r, &prior(), Exponent::Finite(k));
        let res = allocate(&inst).unwrap();
        let c = inst.total_work();
        let sum: f64 = res.x.iter().sum();
        prop_assert!((sum - c).abs() <= 1e-9 * c.max(1.0));
        for i in 0..inst.len() {
            let cap = inst.capacities()[i];
            let x = res.x[i];
            let lam = res.lambda[i];
            let grad = inst.virtual_welfare()[i].powf(k) * x;
            prop_assert!(x >= 0.0 && x <= cap * (1.0 + 1e-12));
            prop_assert!(lam >= 0.0);
            prop_assert!(rel_close(grad + lam, res.mu, 1e-9), "stationarity at {i}");
            if res.is_tight(i) {
                prop_assert!(rel_close(x, cap, 1e-12));
            } else {
                prop_assert_eq!(lam, 0.0);
            }
        }
        prop_assert!(res.iterations <= inst.len());
    }

    #[test]
    fn tight_set_is_a_prefix_by_sort_key(seed in any::<u64>(), ki in 0usize..5) {
        let k = FINITE_K[ki];
        let mut r = rng::stream(seed, &[2]);
        let inst = random_instance(&mut r, &prior(), Exponent::Finite(k));
        let res = allocate(&inst).unwrap();
        let keys = crowd_auction::allocation::sort_keys(&inst, k);
        let r_len = res.tight_set.len();
        let prefix: Vec<usize> = keys[..r_len].iter().map(|s| s.index).collect();
        let mut tight = res.tight_set.clone();
        let mut expected = prefix;
        tight.sort_unstable();
        expected.sort_unstable();
        prop_assert_eq!(tight, expected);
    }

    #[test]
    fn cost_falls_as_k_grows(seed in any::<u64>()) {
        let mut r = rng::stream(seed, &[3]);
        let base = random_instance(&mut r, &prior(), Exponent::Finite(0.0));
        let mut costs: Vec<f64> = FINITE_K
            .iter()
            .map(|&k| {
                let inst = base.with_exponent(Exponent::Finite(k)).unwrap();
                total_virtual_cost(&inst, &allocate(&inst).unwrap())
            })
            .collect();
        let inf = base.with_exponent(Exponent::Infinite).unwrap();
        costs.push(total_virtual_cost(&inf, &allocate_limit_k_inf(&inf).unwrap()));
        for w in costs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9), "{costs:?}");
        }
    }

    #[test]
    fn shares_cross_once(seed in any::<u64>(), ki in 0usize..4) {
        let mut r = rng::stream(seed, &[4]);
        let base = random_instance(&mut r, &prior(), Exponent::Finite(0.0));
        let x = |k: f64| allocate(&base.with_exponent(Exponent::Finite(k)).unwrap()).unwrap().x;
        let (lo, hi) = (x(FINITE_K[ki]), x(FINITE_K[ki + 1]));
        let mut order: Vec<usize> = (0..base.len()).collect();
        let bids = base.bids().unwrap();
        order.sort_by(|&a, &b| bids[a].total_cmp(&bids[b]));
        let c = base.total_work();
        let diff: Vec<f64> = order.iter().map(|&i| (lo[i] - hi[i]) / c).collect();
        prop_assert!(sign_changes(&diff, 1e-12) <= 1, "{diff:?}");
    }

    #[test]
    fn quantile_inverts_cdf(q in 1e-6f64..(1.0 - 1e-6)) {
        let d = prior();
        let b = d.quantile(q).unwrap();
        prop_assert!((d.cdf(b) - q).abs() < 1e-10);
    }

    #[test]
    fn virtual_welfare_dominates_bid(b in 1e-3f64..2.01) {
        let d = prior();
        let delta = d.virtual_welfare(b).unwrap();
        prop_assert!(delta >= b);
        prop_assert!(d.virtual_welfare(b * 0.999).unwrap() < delta);
    }

    #[test]
    fn realized_payment_is_proportional(p in 0.0f64..100.0, x in 0.1f64..50.0, f in 0.0f64..1.0) {
        let paid = realized_payment(p, x, f * x).unwrap();
        prop_assert!(paid <= p * (1.0 + 1e-15));
        prop_assert!((paid - p * f).abs() <= 1e-12 * p.max(1.0));
    }
}

proptest! {
    #![proptest_config(config(40))]

    #[test]
    fn allocation_is_non_increasing_in_own_bid(seed in any::<u64>(), ki in 0usize..6) {
        let k = if ki == 5 { Exponent::Infinite } else { Exponent::Finite(FINITE_K[ki]) };
        let d = prior();
        let mut r = rng::stream(seed, &[5]);
        let inst = random_instance(&mut r, &d, k);
        let grid: Vec<f64> = (1..=60).map(|j| d.upper() * j as f64 / 60.0).collect();
        let curve = allocation_curve(&inst, &d, 0, &grid).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].1 <= w[0].1, "{:?} then {:?}", w[0], w[1]);
        }
    }

    #[test]
    fn payment_covers_reported_cost(seed in any::<u64>(), ki in 0usize..6) {
        let k = if ki == 5 { Exponent::Infinite } else { Exponent::Finite(FINITE_K[ki]) };
        let d = prior();
        let mut r = rng::stream(seed, &[6]);
        let inst = random_instance(&mut r, &d, k);
        let x = allocate(&inst).unwrap().x;
        for i in 0..inst.len() {
            let p = compute_max_payment(&inst, &d, i).unwrap();
            let b = inst.bids().unwrap()[i];
            prop_assert!(p >= b * x[i] - 1e-9 * (b * x[i]).max(1.0));
            prop_assert!(p <= d.upper() * x[i] + d.upper() * inst.capacities()[i]);
        }
    }

    #[test]
    fn misreporting_the_bid_never_pays(seed in any::<u64>(), ki in 0usize..6) {
        let k = if ki == 5 { Exponent::Infinite } else { Exponent::Finite(FINITE_K[ki]) };
        let d = prior();
        let mut r = rng::stream(seed, &[7]);
        let inst = random_instance(&mut r, &d, k);
        let b = inst.bids().unwrap()[0];
        let cap = inst.capacities()[0];
        let profile = WorkerProfile::new(b, cap, 1.0, 0.0).unwrap();
        let ctx = UtilityContext::new(inst, d.clone(), 0).unwrap();
        let truthful = ctx.offer(b, cap).unwrap();
        let u0 = expected_utility(&profile, Omega::Strict, truthful, truthful.x);
        prop_assert!(u0 >= -1e-9);
        for j in 1..=25 {
            let bid = d.upper() * j as f64 / 25.0;
            let offer = ctx.offer(bid, cap).unwrap();
            let u = expected_utility(&profile, Omega::Strict, offer, offer.x.min(cap));
            prop_assert!(u <= u0 + 1e-7 * u0.abs().max(1.0), "bid {bid}: {u} > {u0}");
        }
    }
}

#[test]
fn samples_follow_the_prior() {
    let d = prior();
    let n = 20_000;
    let mut xs = d.sample_seeded(7, n);
    xs.sort_by(f64::total_cmp);
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = d.cdf(x);
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample Kolmogorov-Smirnov statistic.
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS statistic {ks}");
    assert!(xs.iter().all(|&x| x > 0.0 && x <= d.upper()));
}

#[test]
fn worked_examples() {
    let inst = AuctionInstance::new(vec![1.0, 2.0, 3.0], vec![2.0; 3], Exponent::Infinite, 3.0).unwrap();
    let greedy = allocate(&inst).unwrap();
    assert_eq!(greedy.x, vec![2.0, 1.0, 0.0]);
    assert_eq!(total_virtual_cost(&inst, &greedy), 4.0);
    let flat = inst.with_exponent(Exponent::Finite(0.0)).unwrap();
    assert!((total_virtual_cost(&flat, &allocate(&flat).unwrap()) - 6.0).abs() < 1e-12);
}
