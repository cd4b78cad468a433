use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use marketsim::engine::{self, generate, EpisodeMetrics, GenSpec, GridSpec, Scenario};
use marketsim::io::{self, NetworkSource, ResultFormat, ResultSet};
use marketsim::mechanisms::{
    contribution_allocate, epm_allocate, run_single_item_auction, shapley, AuctionOutcome, Bid, CoalitionGame,
};
use marketsim::model::PlatformId;
use marketsim::rtv::{MarketStructure, StructureKind};
use marketsim::solve::Objective;

const SEED_ENV: &str = "MARKETSIM_SEED";

/// Multi-platform ride-sharing market simulator.
#[derive(Debug, Parser)]
#[command(name = "marketsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its metrics.
    Simulate(SimulateArgs),
    /// Run one scenario under several market structures with the same seed.
    Compare(CompareArgs),
    /// Allocate a coalition game's value among its players.
    Allocate(AllocateArgs),
    /// Run a single-item second-price auction.
    Auction(AuctionArgs),
    /// Write a synthetic grid scenario.
    GenScenario(GenArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: ResultFormat,
    /// Overrides MARKETSIM_SEED and the file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the inter-platform trade log as CSV.
    #[arg(long)]
    trades: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated structure names.
    #[arg(long, value_delimiter = ',', default_value = "single,segmented,cooperative,bilateral,central,marketplace")]
    structures: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: ResultFormat,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Method {
    Shapley,
    Epm,
    Contribution,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Contribution weights, one per player; required by `contribution`.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuctionArgs {
    /// Comma-separated dollar bids; bidder `i` is the `i`-th entry.
    #[arg(long, allow_hyphen_values = true)]
    bids: String,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    #[arg(long, default_value_t = 300.0)]
    edge_m: f64,
    #[arg(long, default_value_t = 8.0)]
    speed_mps: f64,
    #[arg(long = "n-requests")]
    n_requests: usize,
    #[arg(long = "n-platforms", default_value_t = 2)]
    n_platforms: usize,
    /// Vehicles per platform: one count for all, or one per platform.
    #[arg(long, value_delimiter = ',')]
    fleet: Vec<usize>,
    #[arg(long, default_value_t = 1200.0)]
    duration_s: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "single")]
    structure: String,
    #[arg(long, default_value = "min_delay_penalty")]
    objective: String,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value = "generated")]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("marketsim: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Allocate(a) => allocate(a),
        Command::Auction(a) => auction(a),
        Command::GenScenario(a) => gen_scenario(a),
    }
}

/// Flag, then MARKETSIM_SEED, then whatever the file says.
fn seed_override(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| anyhow!("{SEED_ENV}=`{v}` is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(anyhow!("{SEED_ENV}: {e}")),
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    io::load_scenario_seeded(path, seed_override(seed)?).with_context(|| format!("loading {}", path.display()))
}

fn summary(m: &EpisodeMetrics) {
    println!(
        "{:<24} vmt {:>10}  unsatisfied {}  wait {:>8} s  trips {:>5}  trades {:>4}",
        m.structure, m.total_vmt, m.pct_unsatisfied, m.avg_wait, m.total_trips, m.trades
    );
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let sc = load(&a.scenario, a.seed)?;
    let ep = engine::run_detailed(&sc)?;
    io::write_results(&ep.metrics, &a.out, a.format)?;
    if let Some(path) = &a.trades {
        std::fs::write(path, io::trade_log_csv(&ep.trades, &sc)).with_context(|| format!("writing {}", path.display()))?;
    }
    summary(&ep.metrics);
    Ok(())
}

fn structure_for(name: &str, sc: &Scenario) -> Result<MarketStructure> {
    let kind = StructureKind::parse(name.trim()).ok_or_else(|| anyhow!("unknown structure `{name}`"))?;
    let gamma = sc.constraints.gamma;
    Ok(match kind {
        StructureKind::Cooperative => MarketStructure::cooperative(sc.platform_ids(), gamma)?,
        k => MarketStructure::new(k, gamma)?,
    })
}

fn compare(a: CompareArgs) -> Result<()> {
    let sc = load(&a.scenario, a.seed)?;
    let variants: Vec<Scenario> =
        a.structures.iter().map(|s| Ok(sc.with_structure(structure_for(s, &sc)?))).collect::<Result<_>>()?;
    if variants.is_empty() {
        bail!("no structures given");
    }
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = variants.iter().map(|v| s.spawn(move || engine::run(v))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    io::write_results(ResultSet::Many(&rows), &a.out, a.format)?;
    rows.iter().for_each(summary);
    Ok(())
}

fn allocate(a: AllocateArgs) -> Result<()> {
    let game: CoalitionGame = io::load_game(&a.game).with_context(|| format!("loading {}", a.game.display()))?;
    let out = match a.method {
        Method::Shapley => json!({ "method": "shapley", "result": "allocated", "allocation": shapley(&game) }),
        Method::Epm => {
            let mut v = serde_json::to_value(epm_allocate(&game)?)?;
            v["method"] = json!("epm");
            v
        }
        Method::Contribution => {
            let w = a.weights.ok_or_else(|| anyhow!("`--weights` is required for the contribution method"))?;
            let mut v = serde_json::to_value(contribution_allocate(&game, &w)?)?;
            v["method"] = json!("contribution");
            v
        }
    };
    let text = serde_json::to_string_pretty(&out)? + "\n";
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn auction(a: AuctionArgs) -> Result<()> {
    let bids: Vec<Bid> = io::parse_bids(&a.bids)?
        .into_iter()
        .enumerate()
        .map(|(i, amount)| Ok(Bid { platform: PlatformId(u16::try_from(i).map_err(|_| anyhow!("too many bids"))?), amount }))
        .collect::<Result<_>>()?;
    match run_single_item_auction(&bids, a.gamma)? {
        AuctionOutcome::Sold { winner, payment, .. } => println!("winner {} payment {}", winner.0, payment.dollars()),
        AuctionOutcome::NoSale => println!("no sale"),
    }
    Ok(())
}

fn gen_scenario(a: GenArgs) -> Result<()> {
    if a.n_platforms == 0 {
        bail!("`--n-platforms` must be at least 1");
    }
    let fleet = match a.fleet.len() {
        1 => vec![a.fleet[0]; a.n_platforms],
        n if n == a.n_platforms => a.fleet.clone(),
        n => bail!("`--fleet` has {n} entries for {} platforms", a.n_platforms),
    };
    let grid = GridSpec { rows: a.rows, cols: a.cols, edge_m: a.edge_m, speed_mps: a.speed_mps };
    let kind = StructureKind::parse(&a.structure).ok_or_else(|| anyhow!("unknown structure `{}`", a.structure))?;
    let structure = match kind {
        StructureKind::Cooperative => {
            MarketStructure::cooperative((0..a.n_platforms as u16).map(PlatformId).collect(), a.gamma)?
        }
        k => MarketStructure::new(k, a.gamma)?,
    };
    let spec = GenSpec {
        name: a.name,
        grid,
        requests: a.n_requests,
        duration_s: a.duration_s,
        fleet,
        seed: seed_override(a.seed)?.unwrap_or(0),
        structure,
        objective: Objective::parse(&a.objective).ok_or_else(|| anyhow!("unknown objective `{}`", a.objective))?,
    };
    let sc = generate(&spec)?;
    std::fs::write(&a.out, io::scenario_to_json(&sc, &NetworkSource::Grid(grid)))
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} requests for {} platforms to {}", sc.requests.len(), sc.platforms.len(), a.out.display());
    Ok(())
}
