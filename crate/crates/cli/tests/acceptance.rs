//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use crowd_auction::mechanism::UtilityContext;
use crowd_auction::payment::PaymentRule;
use crowd_auction::rng::{self, StreamRng};
use crowd_auction::simulation::{myerson_identity, run_figures, SimulationConfig};
use crowd_auction::strategy::{departure_study, DepartureReport, StudyConfig};
use crowd_auction::{
    allocate, allocate_limit_k_inf, allocation_curve, oracle_allocate, total_virtual_cost,
    worker_utility, AuctionInstance, BidDistribution, Exponent, Omega, WorkerProfile,
};
use rand::Rng;

const FINITE_K: [f64; 5] = [0.0, 1.0, 2.0, 4.0, 8.0];
const SEED: u64 = 20190;

type Outcome = Result<String, String>;

fn prior() -> BidDistribution {
    BidDistribution::default()
}

fn k_grid() -> Vec<Exponent> {
    let mut ks: Vec<Exponent> = FINITE_K.iter().map(|&k| Exponent::Finite(k)).collect();
    ks.push(Exponent::Infinite);
    ks
}

fn random_instance(rng: &mut StreamRng, dist: &BidDistribution, k: Exponent) -> AuctionInstance {
    let n = rng.random_range(2..=10);
    let bids = dist.sample(rng, n);
    let caps: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-0.5..0.5))).collect();
    let share: f64 = rng.random_range(0.05..0.95);
    let c = share * caps.iter().sum::<f64>();
    AuctionInstance::from_bids(bids, caps, dist, k, c).expect("valid instance")
}

fn instances(label: u64, count: usize, k: Exponent) -> Vec<AuctionInstance> {
    let dist = prior();
    (0..count)
        .map(|t| random_instance(&mut rng::stream(SEED, &[label, t as u64]), &dist, k))
        .collect()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn percentiles() -> Outcome {
    let d = prior();
    let target = [(0.05, 0.61), (0.25, 0.81), (0.5, 1.00), (0.75, 1.22), (0.95, 1.60)];
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for (q, want) in target {
        let b = d.quantile(q).map_err(|e| e.to_string())?;
        worst = worst.max((b - want).abs());
        got.push(format!("{b:.4}"));
    }
    check(worst <= 0.005, format!("quantiles [{}], max error {worst:.2e}", got.join(", ")))
}

fn oracle_equivalence() -> Outcome {
    let mut worst_obj: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    for (t, inst) in instances(2, 500, Exponent::Finite(0.0)).into_iter().enumerate() {
        let inst = inst
            .with_exponent(Exponent::Finite(FINITE_K[t % 5]))
            .map_err(|e| e.to_string())?;
        let fast = allocate(&inst).map_err(|e| e.to_string())?;
        let slow = oracle_allocate(&inst).map_err(|e| e.to_string())?;
        let rel = (fast.objective - slow.objective).abs() / slow.objective.abs().max(f64::MIN_POSITIVE);
        worst_obj = worst_obj.max(rel);
        for (a, b) in fast.x.iter().zip(&slow.x) {
            worst_x = worst_x.max((a - b).abs());
        }
    }
    check(
        worst_obj <= 1e-8 && worst_x <= 1e-6,
        format!("500 instances, max objective gap {worst_obj:.2e} rel, max x gap {worst_x:.2e}"),
    )
}

fn individual_rationality() -> Outcome {
    let dist = prior();
    let ks = k_grid();
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for t in 0..1000 {
        let mut r = rng::stream(SEED, &[3, t]);
        let inst = random_instance(&mut r, &dist, ks[t as usize % ks.len()]);
        let x = allocate(&inst).map_err(|e| e.to_string())?.x;
        for i in 0..inst.len() {
            let beta: f64 = r.random_range(0.9..=1.0);
            let b = inst.bids().unwrap()[i];
            let cap = inst.capacities()[i];
            let profile = WorkerProfile::new(b * beta, cap, beta, 0.0).map_err(|e| e.to_string())?;
            let ctx = UtilityContext::new(inst.clone(), dist.clone(), i).map_err(|e| e.to_string())?;
            let u = worker_utility(&profile, &ctx, Omega::Strict, b, cap, x[i])
                .map_err(|e| e.to_string())?;
            worst = worst.min(u);
            checked += 1;
        }
    }
    check(worst >= -1e-9, format!("{checked} workers over 1000 instances, min utility {worst:.3e}"))
}

fn monotonicity() -> Outcome {
    let dist = prior();
    let ks = k_grid();
    let grid: Vec<f64> = (1..=50).map(|j| dist.upper() * j as f64 / 50.0).collect();
    let mut violations = 0;
    for t in 0..100u64 {
        let mut r = rng::stream(SEED, &[4, t]);
        let inst = random_instance(&mut r, &dist, ks[t as usize % ks.len()]);
        let i = r.random_range(0..inst.len());
        let curve = allocation_curve(&inst, &dist, i, &grid).map_err(|e| e.to_string())?;
        violations += curve.windows(2).filter(|w| w[1].1 > w[0].1).count();
    }
    check(violations == 0, format!("100 contexts x 50 bids, {violations} increases"))
}

fn sign_changes(values: &[f64], zero: f64) -> usize {
    let signs: Vec<bool> = values
        .iter()
        .filter(|v| v.abs() > zero)
        .map(|&v| v > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn single_crossing() -> Outcome {
    let mut failures = 0;
    for base in instances(5, 500, Exponent::Finite(0.0)) {
        let mut order: Vec<usize> = (0..base.len()).collect();
        let bids = base.bids().unwrap();
        order.sort_by(|&a, &b| bids[a].total_cmp(&bids[b]));
        let c = base.total_work();
        let shares = FINITE_K
            .iter()
            .map(|&k| {
                let inst = base.with_exponent(Exponent::Finite(k))?;
                Ok(allocate(&inst)?.x.iter().map(|x| x / c).collect::<Vec<f64>>())
            })
            .collect::<crowd_auction::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        for pair in shares.windows(2) {
            let diff: Vec<f64> = order.iter().map(|&i| pair[0][i] - pair[1][i]).collect();
            if sign_changes(&diff, 1e-12) > 1 {
                failures += 1;
            }
        }
    }
    check(failures == 0, format!("500 instances x 4 k pairs, {failures} with more than one crossing"))
}

fn cost_sweep(base: &AuctionInstance) -> crowd_auction::Result<Vec<f64>> {
    k_grid()
        .into_iter()
        .map(|k| {
            let inst = base.with_exponent(k)?;
            Ok(total_virtual_cost(&inst, &allocate(&inst)?))
        })
        .collect()
}

fn cost_monotonicity() -> Outcome {
    let mut failures = 0;
    for base in instances(6, 500, Exponent::Finite(0.0)) {
        let costs = cost_sweep(&base).map_err(|e| e.to_string())?;
        if costs.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9)) {
            failures += 1;
        }
    }
    check(failures == 0, format!("500 instances over k in {{0,1,2,4,8,inf}}, {failures} increases"))
}

fn greedy_limit() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cost_failures = 0;
    for base in instances(7, 200, Exponent::Infinite) {
        let greedy = allocate_limit_k_inf(&base).map_err(|e| e.to_string())?;
        let big = base
            .with_exponent(Exponent::Finite(1e6))
            .and_then(|i| allocate(&i))
            .map_err(|e| e.to_string())?;
        for (a, b) in greedy.x.iter().zip(&big.x) {
            worst = worst.max((a - b).abs());
        }
        let costs = cost_sweep(&base).map_err(|e| e.to_string())?;
        let g = total_virtual_cost(&base, &greedy);
        if costs[..5].iter().any(|&c| g > c * (1.0 + 1e-12)) {
            cost_failures += 1;
        }
    }
    check(
        worst <= 1e-4 && cost_failures == 0,
        format!("200 instances, max |x_inf - x_1e6| {worst:.2e}, {cost_failures} cost violations"),
    )
}

fn myerson() -> Outcome {
    let m = myerson_identity(&prior(), 10, Exponent::Finite(2.0), 0.1, 10_000, SEED, &PaymentRule::default())
        .map_err(|e| e.to_string())?;
    let gap = m.relative_gap();
    check(
        gap < 0.02,
        format!(
            "10000 draws, mean payment {:.4}, mean virtual cost {:.4}, gap {gap:.4}",
            m.mean_payment, m.mean_virtual_cost
        ),
    )
}

fn study(trials: usize, slopes: Vec<f64>) -> Result<Vec<DepartureReport>, String> {
    let cfg = StudyConfig {
        trials,
        slopes,
        seed: SEED,
        ..StudyConfig::default()
    };
    departure_study(&cfg, &prior()).map_err(|e| e.to_string())
}

fn strategy() -> Outcome {
    let mut problems = Vec::new();
    let dominant = study(200, vec![-1.0, -2.0])?;
    let worst_gain = dominant.iter().map(|r| r.max_relative_gain).fold(0.0, f64::max);
    if worst_gain > 1e-9 {
        problems.push(format!("gain {worst_gain:.2e} with s <= -1"));
    }
    let moved = dominant
        .iter()
        .filter(|r| r.bid.agreement < 1.0 || r.capacity.agreement < 1.0 || r.submitted.agreement < 1.0)
        .count();
    if moved > 0 {
        problems.push(format!("{moved} cells with s <= -1 left the truthful report"));
    }
    let trend = study(100, vec![-0.5, -0.25])?;
    let min_submit = dominant
        .iter()
        .chain(&trend)
        .map(|r| r.submitted.agreement)
        .fold(1.0, f64::min);
    if min_submit < 0.99 {
        problems.push(format!("submission agreement {min_submit}"));
    }
    let mut summary = Vec::new();
    for s in [-0.5, -0.25] {
        let col: Vec<f64> = trend
            .iter()
            .filter(|r| r.slope == s)
            .map(|r| r.capacity.agreement)
            .collect();
        let falls = col.last() < col.first() && col.windows(2).all(|w| w[1] <= w[0]);
        if !falls {
            problems.push(format!("capacity agreement at s={s} not decreasing in k: {col:?}"));
        }
        summary.push(format!("s={s}: {col:?}"));
    }
    let detail = format!(
        "max gain {worst_gain:.1e} and full agreement over 2x6x200 trials with s <= -1, min submission agreement {min_submit}, capacity agreement by k {}",
        summary.join("; ")
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn figures() -> Outcome {
    let cfg = SimulationConfig::default();
    let figs = run_figures(&cfg, &prior()).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let eps = 1e-12;
    let ks = &cfg.k_grid;

    for chunk in figs.roi.chunks(cfg.quantiles.len()) {
        if chunk.windows(2).any(|w| w[1].roi_smoothed > w[0].roi_smoothed + eps) {
            problems.push(format!("ROI rises in v1 (n={}, rho={}, k={})", chunk[0].n, chunk[0].rho, chunk[0].k));
        }
    }
    for a in &figs.roi {
        for b in &figs.roi {
            if a.n == b.n && a.rho == b.rho && a.k == b.k && a.v1 == b.v1 && b.gamma > a.gamma && b.roi_raw > a.roi_raw + eps {
                problems.push(format!("ROI rises in gamma (n={}, rho={}, k={})", a.n, a.rho, a.k));
            }
        }
    }
    for a in &figs.participation {
        let next = figs.participation.iter().find(|b| {
            b.n == a.n && b.rho == a.rho && b.gamma == a.gamma && ks.iter().position(|k| *k == b.k) == ks.iter().position(|k| *k == a.k).map(|p| p + 1)
        });
        if let Some(b) = next {
            if b.participation > a.participation + eps {
                problems.push(format!("participation rises in k (n={}, rho={}, gamma={}, k={})", a.n, a.rho, a.gamma, b.k));
            }
        }
        for b in &figs.participation {
            if b.n == a.n && b.gamma == a.gamma && b.k == a.k && b.rho > a.rho && b.participation < a.participation - eps {
                problems.push(format!("participation falls in rho (n={}, gamma={}, k={})", a.n, a.gamma, a.k));
            }
            if b.n == a.n && b.rho == a.rho && b.k == a.k && b.gamma > a.gamma && b.participation > a.participation + eps {
                problems.push(format!("participation rises in gamma (n={}, rho={}, k={})", a.n, a.rho, a.k));
            }
        }
    }
    for chunk in figs.inflation.chunks(ks.len()) {
        let v: Vec<f64> = chunk.iter().map(|r| r.inflation).collect();
        if v.iter().any(|&x| x < 1.0 - eps) || v.windows(2).any(|w| w[1] > w[0] + eps) || v.last() != Some(&1.0) {
            problems.push(format!("inflation shape (n={}, rho={}): {v:?}", chunk[0].n, chunk[0].rho));
        }
    }
    for chunk in figs.tradeoff.chunks(ks.len()) {
        let monotone = chunk.windows(2).all(|w| {
            w[1].inflation <= w[0].inflation + eps && w[1].participation <= w[0].participation + eps
        });
        if !monotone {
            problems.push(format!("tradeoff not monotone (n={}, rho={}, gamma={})", chunk[0].n, chunk[0].rho, chunk[0].gamma));
        }
    }
    let detail = format!(
        "{} ROI, {} participation, {} inflation, {} tradeoff rows",
        figs.roi.len(),
        figs.participation.len(),
        figs.inflation.len(),
        figs.tradeoff.len()
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        problems.truncate(5);
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

const DETERMINISM_CONFIG: &str = r#"
seed = 7

[simulation]
n_values = [10, 100]
rho_values = [0.1, 0.5]
repeats = 10

[strategy]
trials = 4
k_grid = [0, 2, "inf"]
"#;

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn cli_run(dir: &Path, cfg: &Path, bids: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let runs: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--config".into(), s(cfg), "--out".into(), s(&dir.join("sim"))],
        vec!["verify".into(), "--config".into(), s(cfg), "--out".into(), s(&dir.join("table2.csv"))],
        vec![
            "auction".into(), "--k".into(), "2".into(), "--c".into(), "120".into(), "--bids".into(),
            s(bids), "--out".into(), s(&dir.join("stage1.csv")),
        ],
        vec!["dist".into(), "--points".into(), "41".into(), "--out".into(), s(&dir.join("dist.csv"))],
    ];
    for args in runs {
        let o = Command::new(env!("CARGO_BIN_EXE_crowd-auction"))
            .args(["--threads", threads])
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&o.stderr)));
        }
    }
    let mut files = snapshot(dir);
    files.extend(snapshot(&dir.join("sim")).into_iter().map(|(n, b)| (format!("sim/{n}"), b)));
    Ok(files)
}

fn determinism() -> Outcome {
    let root = std::env::temp_dir().join(format!("crowd-auction-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).map_err(|e| e.to_string())?;
    let cfg = root.join("config.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let bids = root.join("bids.csv");
    let mut text = String::from("worker,bid,capacity\n");
    let dist = prior();
    let mut r = rng::stream(SEED, &[11]);
    for (i, b) in dist.sample(&mut r, 12).into_iter().enumerate() {
        text.push_str(&format!("w{i},{b},{}\n", 20.0 + i as f64));
    }
    std::fs::write(&bids, text).map_err(|e| e.to_string())?;

    let first = cli_run(&root.join("a"), &cfg, &bids, "1")?;
    let second = cli_run(&root.join("b"), &cfg, &bids, "4")?;
    let _ = std::fs::remove_dir_all(&root);
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    check(
        first.len() == second.len() && first.len() == 8 && differing.is_empty(),
        format!("{} files from simulate, verify, auction and dist; differing: {differing:?}", first.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("percentile reproduction", percentiles),
        ("oracle equivalence", oracle_equivalence),
        ("individual rationality", individual_rationality),
        ("allocation monotonicity", monotonicity),
        ("single crossing", single_crossing),
        ("cost monotonicity", cost_monotonicity),
        ("k=inf optimality", greedy_limit),
        ("Myerson identity", myerson),
        ("dominant-strategy search", strategy),
        ("figure shapes", figures),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
