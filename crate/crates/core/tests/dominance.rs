mod common;

use common::{prior, random_instance, FINITE_K};
use crowd_auction::mechanism::UtilityContext;
use crowd_auction::payment::PaymentRule;
use crowd_auction::strategy::lattice_certificate;
use crowd_auction::{rng, Exponent, WorkerProfile};
use rand::Rng;
use rayon::prelude::*;

#[test]
fn no_lattice_point_beats_the_truthful_report() {
    let d = prior();
    let rule = PaymentRule {
        relative_tolerance: 1e-12,
        max_depth: 30,
    };
    let worst = (0..200u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(2024, &[t]);
            let k = match t % 6 {
                5 => Exponent::Infinite,
                j => Exponent::Finite(FINITE_K[j as usize]),
            };
            let inst = random_instance(&mut r, &d, k);
            let i = r.random_range(0..inst.len());
            let beta: f64 = r.random_range(0.9..=1.0);
            let b = inst.bids().unwrap()[i];
            let profile = WorkerProfile::new(b * beta, inst.capacities()[i], beta, 0.0).unwrap();
            let ctx = UtilityContext::new(inst, d.clone(), i).unwrap().with_rule(rule);
            let cert = lattice_certificate(&profile, &ctx, 21, 0.5).unwrap();
            (cert.relative_excess(), t, cert)
        })
        .reduce_with(|a, b| if b.0 > a.0 { b } else { a })
        .unwrap();
    assert!(worst.0 <= 1e-9, "context {}: {:?}", worst.1, worst.2);
}
