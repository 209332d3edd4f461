//! `crowd-auction`: command-line front end.
//!
//! Exit status: 0 on success, 1 on domain, infeasibility, configuration or
//! I/O errors, 2 on quadrature precision failures, 64 on usage errors. Every
//! failure prints one line `error: <kind>: <message>` to stderr.
//!
//! Tabular output is CSV with a header row. Subcommands that also produce a
//! one-line JSON summary print it to stdout when the CSV goes to a file
//! (`--out`) and to stderr when the CSV goes to stdout.

mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crowd_auction::distributions::DistributionSpec;
use crowd_auction::mechanism::{run_stage1, run_stage2, Omega, WorkSubmission, WorkerProfile};
use crowd_auction::payment::payment_schedule;
use crowd_auction::simulation::run_figures;
use crowd_auction::strategy::{departure_study, CoordinateDeparture};
use crowd_auction::{allocate, AuctionInstance, BidDistribution, Exponent};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::io::{csv_bytes, emit, fmt, read_bids, read_profiles, read_submissions, Output};

#[derive(Debug)]
pub enum CliError {
    Core(crowd_auction::Error),
    Configuration(String),
    Input(String),
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Configuration(_) => "configuration",
            CliError::Input(_) => "input",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(crowd_auction::Error::Precision { .. }) => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // Core messages already lead with their kind.
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Configuration(m) | CliError::Input(m) | CliError::Io(m) => {
                write!(f, "{}: {m}", self.kind())
            }
        }
    }
}

impl From<crowd_auction::Error> for CliError {
    fn from(e: crowd_auction::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Two-stage reverse auction for crowdsourcing.
#[derive(Debug, Parser)]
#[command(name = "crowd-auction", version)]
struct Cli {
    /// Worker threads for parallel studies (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate density, CDF and virtual welfare of the bid prior, or its quantiles.
    Dist(DistArgs),
    /// Split the requested work. CSV columns: worker,x,tight,lambda.
    Allocate(InstanceArgs),
    /// Maximum payments. CSV columns: worker,x,p,error.
    Pay(InstanceArgs),
    /// Run stage one, and stage two when submissions are given.
    Auction(AuctionArgs),
    /// Best-response search against truthful play. CSV columns: k,s,coordinate,agreement,mean_rel_diff.
    Verify(VerifyArgs),
    /// ROI, participation, cost-inflation and trade-off studies.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct DistArgs {
    /// TOML file with a distribution table, or a full experiment config.
    #[arg(long)]
    dist_config: Option<PathBuf>,
    /// Number of evenly spaced points across the support, ends included.
    #[arg(long, default_value_t = 11)]
    points: usize,
    /// Comma-separated probabilities; switches output to columns q,b.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    quantiles: Option<Vec<f64>>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// CSV with columns worker,bid,capacity.
    #[arg(long)]
    bids: PathBuf,
    /// Exponent k: a non-negative number or "inf".
    #[arg(long)]
    k: Exponent,
    /// Total work requested.
    #[arg(long)]
    c: f64,
    /// TOML file with a distribution table, or a full experiment config.
    #[arg(long)]
    dist_config: Option<PathBuf>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuctionArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Stage-two CSV with columns worker,submitted,alpha.
    #[arg(long, requires = "settlement_out")]
    submissions: Option<PathBuf>,
    /// Optional CSV with columns worker,v,x_max,beta for utilities.
    #[arg(long, requires = "submissions")]
    profiles: Option<PathBuf>,
    /// Settlement CSV destination: worker,x,p,submitted,accepted,paid,utility.
    #[arg(long)]
    settlement_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Comma-separated exponents, e.g. 0,1,2,4,8,inf.
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<Exponent>>,
    /// Comma-separated ω slopes, e.g. -0.5,-0.25.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    s_values: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment config supplying defaults for the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's `output`, else ./results).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Configuration(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Dist(a) => dist(a),
        Command::Allocate(a) => allocate_cmd(a),
        Command::Pay(a) => pay(a),
        Command::Auction(a) => auction(a),
        Command::Verify(a) => verify(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn load_distribution(path: Option<&PathBuf>) -> CliResult<BidDistribution> {
    let spec = match path {
        None => DistributionSpec::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            match toml::from_str::<DistributionSpec>(&text) {
                Ok(spec) => spec,
                Err(_) => ExperimentConfig::parse(&text)?.distribution,
            }
        }
    };
    Ok(BidDistribution::from_spec(&spec)?)
}

fn summary(out: &Output, value: serde_json::Value) {
    let line = value.to_string();
    if out.is_file() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn dist(a: DistArgs) -> CliResult<()> {
    let d = load_distribution(a.dist_config.as_ref())?;
    let out = Output::from(a.out);
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match &a.quantiles {
        Some(qs) => (
            vec!["q", "b"],
            qs.iter()
                .map(|&q| Ok(vec![fmt(q), fmt(d.quantile(q)?)]))
                .collect::<CliResult<_>>()?,
        ),
        None => {
            if a.points < 2 {
                return Err(CliError::Input("--points must be at least 2".into()));
            }
            let (lo, hi) = (d.lower(), d.upper());
            let rows = (0..a.points)
                .map(|i| {
                    let b = lo + (hi - lo) * i as f64 / (a.points - 1) as f64;
                    Ok(vec![
                        fmt(b),
                        fmt(d.pdf(b)?),
                        fmt(d.cdf(b)),
                        fmt(d.virtual_welfare(b)?),
                    ])
                })
                .collect::<CliResult<_>>()?;
            (vec!["b", "pdf", "cdf", "virtual_welfare"], rows)
        }
    };
    emit(&out, &csv_bytes(&header, &rows)?)?;
    summary(
        &out,
        json!({"lower": d.lower(), "upper": d.upper(), "regular": d.check_regularity(1000)}),
    );
    Ok(())
}

fn instance(a: &InstanceArgs) -> CliResult<(Vec<String>, AuctionInstance, BidDistribution)> {
    let d = load_distribution(a.dist_config.as_ref())?;
    let rows = read_bids(&a.bids)?;
    let (ids, (bids, caps)): (Vec<String>, (Vec<f64>, Vec<f64>)) = rows
        .into_iter()
        .map(|r| (r.worker, (r.bid, r.capacity)))
        .unzip();
    let inst = AuctionInstance::from_bids(bids, caps, &d, a.k, a.c)?;
    Ok((ids, inst, d))
}

fn allocate_cmd(a: InstanceArgs) -> CliResult<()> {
    let (ids, inst, _) = instance(&a)?;
    let r = allocate(&inst)?;
    let rows: Vec<Vec<String>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            vec![
                id.clone(),
                fmt(r.x[i]),
                r.is_tight(i).to_string(),
                fmt(r.lambda[i]),
            ]
        })
        .collect();
    let out = Output::from(a.out);
    emit(&out, &csv_bytes(&["worker", "x", "tight", "lambda"], &rows)?)?;
    summary(
        &out,
        json!({"objective": r.objective, "mu": r.mu, "iterations": r.iterations}),
    );
    Ok(())
}

fn pay(a: InstanceArgs) -> CliResult<()> {
    let (ids, inst, d) = instance(&a)?;
    let r = allocate(&inst)?;
    let s = payment_schedule(&inst, &d)?;
    let rows: Vec<Vec<String>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| vec![id.clone(), fmt(r.x[i]), fmt(s.p[i]), fmt(s.error[i])])
        .collect();
    let out = Output::from(a.out);
    emit(&out, &csv_bytes(&["worker", "x", "p", "error"], &rows)?)?;
    Ok(())
}

fn auction(a: AuctionArgs) -> CliResult<()> {
    let d = load_distribution(a.instance.dist_config.as_ref())?;
    let rows = read_bids(&a.instance.bids)?;
    let ids: Vec<String> = rows.iter().map(|r| r.worker.clone()).collect();
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.bid, r.capacity)).collect();
    let stage1 = run_stage1(&pairs, a.instance.k, a.instance.c, &d)?;
    let table: Vec<Vec<String>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            vec![
                id.clone(),
                fmt(pairs[i].0),
                fmt(pairs[i].1),
                fmt(stage1.allocation.x[i]),
                fmt(stage1.payments.p[i]),
            ]
        })
        .collect();
    let out = Output::from(a.instance.out);
    emit(&out, &csv_bytes(&["worker", "bid", "capacity", "x", "p"], &table)?)?;
    let Some(path) = a.submissions else {
        return Ok(());
    };
    let subs = read_submissions(&path, &ids)?
        .into_iter()
        .map(|(submitted, alpha)| WorkSubmission::new(submitted, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let profiles = match &a.profiles {
        Some(p) => Some(
            read_profiles(p, &ids)?
                .into_iter()
                .map(|(v, x_max, beta)| WorkerProfile::new(v, x_max, beta, 0.0))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    let record = run_stage2(&stage1, &subs, profiles.as_deref())?;
    let table: Vec<Vec<String>> = record
        .rows
        .iter()
        .map(|r| {
            vec![
                ids[r.worker].clone(),
                fmt(r.allocated),
                fmt(r.max_payment),
                fmt(r.submitted),
                fmt(r.accepted),
                fmt(r.paid),
                r.utility.map_or_else(|| "NA".into(), fmt),
            ]
        })
        .collect();
    let header = ["worker", "x", "p", "submitted", "accepted", "paid", "utility"];
    emit(&Output::from(a.settlement_out), &csv_bytes(&header, &table)?)?;
    Ok(())
}

fn departure_cells(c: &CoordinateDeparture) -> [String; 2] {
    [
        fmt(c.agreement),
        c.mean_relative_difference.map_or_else(|| "NA".into(), fmt),
    ]
}

fn verify(a: VerifyArgs) -> CliResult<()> {
    let cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let dist = BidDistribution::from_spec(&cfg.distribution)?;
    let mut study = cfg.study_config();
    if let Some(k) = a.k_grid {
        study.k_grid = k;
    }
    if let Some(s) = a.s_values {
        study.slopes = s;
    }
    if let Some(t) = a.trials {
        study.trials = t;
    }
    if let Some(seed) = a.seed {
        study.seed = seed;
    }
    if study.k_grid.is_empty() || study.slopes.is_empty() || study.trials == 0 {
        return Err(CliError::Input("need at least one k, one s and one trial".into()));
    }
    for &slope in &study.slopes {
        if !(Omega::Linear { slope }).keeps_dominance() {
            eprintln!("warning: slope {slope} exceeds -1, truthful reporting need not be dominant");
        }
    }
    let reports = departure_study(&study, &dist)?;
    let mut rows = Vec::new();
    for &k in &study.k_grid {
        for (name, pick) in [
            ("bid", 0usize),
            ("capacity", 1),
            ("submitted", 2),
        ] {
            for r in reports.iter().filter(|r| r.k == k) {
                let c = [&r.bid, &r.capacity, &r.submitted][pick];
                let [agreement, diff] = departure_cells(c);
                rows.push(vec![k.to_string(), fmt(r.slope), name.to_string(), agreement, diff]);
            }
        }
    }
    let out = Output::from(a.out);
    emit(
        &out,
        &csv_bytes(&["k", "s", "coordinate", "agreement", "mean_rel_diff"], &rows)?,
    )?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let dir = a
        .out
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let dist = BidDistribution::from_spec(&cfg.distribution)?;
    let figs = run_figures(&cfg.simulation_config(), &dist)?;

    let fig2: Vec<Vec<String>> = figs
        .roi
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt(r.rho),
                fmt(r.gamma),
                r.k.to_string(),
                fmt(r.v1),
                fmt(r.roi_raw),
                fmt(r.roi_smoothed),
            ]
        })
        .collect();
    let fig3: Vec<Vec<String>> = figs
        .participation
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt(r.rho),
                fmt(r.gamma),
                r.k.to_string(),
                fmt(r.participation),
            ]
        })
        .collect();
    let fig4: Vec<Vec<String>> = figs
        .inflation
        .iter()
        .map(|r| vec![r.n.to_string(), fmt(r.rho), r.k.to_string(), fmt(r.inflation)])
        .collect();
    let fig5: Vec<Vec<String>> = figs
        .tradeoff
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt(r.rho),
                fmt(r.gamma),
                r.k.to_string(),
                fmt(r.inflation),
                fmt(r.participation),
            ]
        })
        .collect();
    let files = [
        (
            "fig2_roi.csv",
            csv_bytes(&["n", "rho", "gamma", "k", "v1", "roi_raw", "roi_smoothed"], &fig2)?,
        ),
        (
            "fig3_participation.csv",
            csv_bytes(&["n", "rho", "gamma", "k", "participation"], &fig3)?,
        ),
        (
            "fig4_inflation.csv",
            csv_bytes(&["n", "rho", "k", "inflation"], &fig4)?,
        ),
        (
            "fig5_tradeoff.csv",
            csv_bytes(&["n", "rho", "gamma", "k", "inflation", "participation"], &fig5)?,
        ),
    ];
    let mut hashes = serde_json::Map::new();
    for (name, bytes) in &files {
        emit(&Output::File(dir.join(name)), bytes)?;
        hashes.insert(name.to_string(), json!(hex(&Sha256::digest(bytes))));
    }
    let manifest = json!({
        "seed": cfg.seed,
        "config_sha256": cfg.hash(),
        "config": cfg.to_toml(),
        "files": hashes,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    emit(&Output::File(dir.join("manifest.json")), text.as_bytes())?;
    println!("{}", dir.display());
    Ok(())
}
