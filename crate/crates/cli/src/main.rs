use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use displaylab::benchmark::{run_benchmark, write_run_csv};
use displaylab::data_pool::{generate_synthetic, load_pool, split_pool, write_pool, DataPool, PoolFormat, SyntheticSpec};
use displaylab::session::{start_session, SessionConfig};
use displaylab::strategies::Strategy;
use displaylab_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "displaylab", version, about = "Active-learning display selection for change detection")]
struct Cli {
    /// Base directory for relative dataset paths and served files.
    #[arg(long, global = true, env = "DISPLAYLAB_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic pool to a csv or jsonl file.
    Generate(GenerateArgs),
    /// Run one session with the simulated oracle.
    Run(RunArgs),
    /// Run every (strategy, seed) pair and write per-run and summary csvs.
    Benchmark(BenchmarkArgs),
    /// Serve the labeling HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Synthetic spec as a json file; unset fields take their defaults.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    positive_fraction: Option<f64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
}

impl SpecArgs {
    fn spec(&self, data_dir: &Path) -> Result<SyntheticSpec> {
        let mut spec = match &self.synthetic {
            Some(path) => {
                let path = resolve(data_dir, path);
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => SyntheticSpec::default(),
        };
        if let Some(v) = self.n_samples {
            spec.n_samples = v;
        }
        if let Some(v) = self.positive_fraction {
            spec.positive_fraction = v;
        }
        if let Some(v) = self.modes {
            spec.n_modes_per_class = v;
        }
        if let Some(v) = self.dim {
            spec.feature_dim = v;
        }
        if let Some(v) = self.spread {
            spec.mode_spread = v;
        }
        if let Some(v) = self.noise {
            spec.within_mode_noise = v;
        }
        if let Some(v) = self.data_seed {
            spec.seed = v;
        }
        Ok(spec)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Output file; the extension picks the format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PoolArgs {
    /// Pool file (.csv or .jsonl). Without it a synthetic pool is generated.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

impl PoolArgs {
    fn load(&self, data_dir: &Path) -> Result<Arc<DataPool>> {
        let pool = match &self.dataset {
            Some(path) => {
                let path = resolve(data_dir, path);
                let format = PoolFormat::from_path(&path)
                    .with_context(|| format!("{}: expected a .csv or .jsonl file", path.display()))?;
                load_pool(&path, format).with_context(|| format!("loading {}", path.display()))?
            }
            None => generate_synthetic(&self.spec.spec(data_dir)?)?,
        };
        Ok(Arc::new(split_pool(&pool, self.train_fraction, self.split_seed)?))
    }
}

#[derive(Args)]
struct LoopArgs {
    #[arg(short = 'b', long, default_value_t = 8)]
    display_size: usize,
    #[arg(short = 'T', long, default_value_t = 10)]
    iterations: usize,
    /// k-means clusters per iteration (defaults to the display size).
    #[arg(long)]
    clusters: Option<usize>,
    /// Disable EER evaluation on the test split.
    #[arg(long)]
    no_eval: bool,
}

impl LoopArgs {
    fn config(&self) -> SessionConfig {
        SessionConfig {
            display_size: self.display_size,
            iterations: self.iterations,
            clusters: self.clusters,
            evaluation_enabled: !self.no_eval,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pool: PoolArgs,
    #[command(flatten)]
    run: LoopArgs,
    #[arg(long, default_value = "rl")]
    strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `{out}/{strategy}/{seed}.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    pool: PoolArgs,
    #[command(flatten)]
    run: LoopArgs,
    /// Comma-separated strategy names, or `all`.
    #[arg(long, default_value = "all", value_parser = parse_strategies)]
    strategies: StrategyList,
    /// Seeds as `1..10` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "1..10", value_parser = parse_seeds)]
    seeds: SeedList,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Session files directory (defaults to `{data_dir}/sessions`).
    #[arg(long)]
    sessions_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct StrategyList(Vec<Strategy>);

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_strategies(s: &str) -> Result<StrategyList, String> {
    if s.trim() == "all" {
        return Ok(StrategyList(Strategy::ALL_NAMES.iter().map(|n| n.parse().expect("known name")).collect()));
    }
    let list = s
        .split(',')
        .map(|n| n.trim().parse::<Strategy>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if list.is_empty() {
        return Err("no strategies given".into());
    }
    Ok(StrategyList(list))
}

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let bad = |part: &str| format!("invalid seed {part:?}");
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(a))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad(b))?;
        if b < a {
            return Err(format!("empty seed range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad(p))).collect::<Result<Vec<u64>, _>>()?
    };
    Ok(SeedList(seeds))
}

fn resolve(data_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        data_dir.join(path)
    }
}

fn generate(args: GenerateArgs, data_dir: &Path) -> Result<()> {
    let format = PoolFormat::from_path(&args.out)
        .with_context(|| format!("{}: expected a .csv or .jsonl file", args.out.display()))?;
    let pool = generate_synthetic(&args.spec.spec(data_dir)?)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_pool(&pool, &args.out, format)?;
    let (neg, pos) = pool.class_counts(&(0..pool.len()).collect::<Vec<_>>());
    println!("wrote {} rows ({pos} positive, {neg} negative) to {}", pool.len(), args.out.display());
    Ok(())
}

fn run(args: RunArgs, data_dir: &Path) -> Result<()> {
    let pool = args.pool.load(data_dir)?;
    let config = SessionConfig { strategy: args.strategy, seed: args.seed, ..args.run.config() };
    let mut session = start_session(pool, config)?;
    session.run_to_completion()?;

    let dir = args.out.join(args.strategy.to_string());
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.csv", args.seed));
    write_run_csv(fs::File::create(&path)?, args.strategy, session.history())?;
    match session.auc() {
        Ok(auc) => println!("{} seed {}: AUC {:.2}% -> {}", args.strategy, args.seed, 100.0 * auc, path.display()),
        Err(_) => println!("{} seed {} -> {}", args.strategy, args.seed, path.display()),
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs, data_dir: &Path) -> Result<()> {
    if args.run.no_eval {
        bail!("benchmark needs EER evaluation; drop --no-eval");
    }
    let pool = args.pool.load(data_dir)?;
    let report = run_benchmark(pool, &args.strategies.0, &args.seeds.0, &args.run.config())?;
    report.write(&args.out)?;
    for row in report.summary()? {
        let last = row.mean_eer.last().copied().unwrap_or(f64::NAN);
        println!("{:<12} final EER {:6.2}%  AUC {:6.2}%", row.strategy.to_string(), last, row.auc);
    }
    println!("wrote {}", args.out.join("summary.csv").display());
    Ok(())
}

fn serve(args: ServeArgs, data_dir: &Path) -> Result<()> {
    let mut config = ServiceConfig::new(data_dir);
    if let Some(dir) = args.sessions_dir {
        config.sessions_dir = dir;
    }
    let (state, failures) = AppState::open(config.clone())
        .with_context(|| format!("opening {}", config.sessions_dir.display()))?;
    for f in &failures {
        eprintln!("warning: skipped {}: {}", f.path.display(), f.message);
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("invalid address {}:{}", args.host, args.port))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("failed to bind {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        displaylab_service::serve(listener, state).await?;
        Ok(())
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => generate(args, &cli.data_dir),
        Command::Run(args) => run(args, &cli.data_dir),
        Command::Benchmark(args) => benchmark(args, &cli.data_dir),
        Command::Serve(args) => serve(args, &cli.data_dir),
    }
}
