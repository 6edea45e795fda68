use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use expose_bench::ablate::{grid_search, run_ablations, ALPHA_GRID, C_GRID};
use expose_bench::data::{self, EnvKind};
use expose_bench::eval::{dump_root_search, evaluate, to_csv};
use expose_bench::render::ExplorationMap;
use expose_bench::train::{train_prior, Expert};
use expose_bench::{ConfigError, RunConfig};
use expose_core::env::gridnav::{Cell, GridGenParams};
use expose_core::env::{GraphInstance, GridInstance};
use expose_core::policy::{load_checkpoint, save_checkpoint, BehaviorCloning};
use expose_core::tree::StatsDump;
use expose_core::{Environment, Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "expose",
    version,
    about = "Search benchmarks on grid navigation and Hamiltonian cycles"
)]
struct Cli {
    /// Print every configuration key with its default and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a JSONL dataset of instances.
    GenData(GenData),
    /// Behaviour-clone a linear prior from expert demonstrations.
    TrainPrior(TrainPrior),
    /// Evaluate one engine on a dataset.
    Run(Run),
    /// Evaluate the ExPoSe ablations, or grid-search `c` and `alpha`.
    Ablate(Ablate),
    /// Draw the cells visited by a search.
    Render(Render),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    width: usize,
    #[arg(long, default_value_t = 15)]
    height: usize,
    #[arg(long, default_value_t = 0.25)]
    obstacle_prob: f64,
    /// Minimum BFS distance from start to goal.
    #[arg(long, default_value_t = 20)]
    min_shortest: usize,
    #[arg(long, default_value_t = 10)]
    min_manhattan: usize,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    #[arg(long, default_value_t = 0.3)]
    sparsity: f64,
}

#[derive(Args)]
struct TrainPrior {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Demonstrations from random start cells per grid, besides the start.
    #[arg(long, default_value_t = 4)]
    extra_starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    env: EnvKind,
    #[arg(long)]
    dataset: PathBuf,
    /// Prior checkpoint; uniform weights when absent.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set iterations=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write 0 as wall time so repeated runs are byte-identical.
    #[arg(long)]
    deterministic: bool,
    /// Results CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Run {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    engine: Option<expose_core::EngineKind>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Per-episode JSONL log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the statistics of one search from the initial state of
    /// `--dump-instance` to this JSON file.
    #[arg(long)]
    dump_stats: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    dump_instance: usize,
}

#[derive(Args)]
struct Ablate {
    #[command(flatten)]
    common: Common,
    /// Grid-search `c` and `alpha` on a 10% validation split instead.
    #[arg(long)]
    grid: bool,
    #[arg(long, value_delimiter = ',')]
    c_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alpha_values: Option<Vec<f64>>,
}

#[derive(Args)]
struct Render {
    /// Grid navigation dataset.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Statistics dump written by `run --dump-stats`.
    #[arg(long)]
    stats: PathBuf,
    /// Output prefix; writes `<out>.ppm` and `<out>.txt`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    scale: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("no such file: {0}")]
struct MissingFile(PathBuf);

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingFile(path.to_path_buf()).into())
    }
}

enum Dataset {
    Grids(Vec<GridInstance>),
    Graphs(Vec<GraphInstance>),
}

fn load_dataset(env: EnvKind, path: &Path) -> Result<Dataset> {
    require(path)?;
    Ok(match env {
        EnvKind::Gridnav => Dataset::Grids(data::load_grids(path)?),
        EnvKind::Hamcycle => Dataset::Graphs(data::load_graphs(path)?),
    })
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            require(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&common.overrides)?;
    Ok(cfg)
}

fn load_prior<E: Environment>(path: Option<&Path>, env: &E) -> Result<Params> {
    let obs = env.observe::<f64>(&env.initial_state())?;
    let (rows, cols) = obs.param_shape();
    let Some(path) = path else {
        return Ok(Params::zeros(rows, cols));
    };
    require(path)?;
    let ckpt = load_checkpoint(path)?;
    if ckpt.env_tag != env.tag() || ckpt.feature_version != env.feature_version() {
        bail!(
            "checkpoint is for {} v{}, dataset is {} v{}",
            ckpt.env_tag,
            ckpt.feature_version,
            env.tag(),
            env.feature_version()
        );
    }
    if ckpt.params.shape() != (rows, cols) {
        bail!(
            "checkpoint shape {:?} does not fit instances of shape {:?}",
            ckpt.params.shape(),
            (rows, cols)
        );
    }
    Ok(ckpt.params)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn gen_data(args: &GenData) -> Result<()> {
    match args.env {
        EnvKind::Gridnav => {
            let params = GridGenParams::new(
                args.width,
                args.height,
                args.obstacle_prob,
                args.min_shortest,
                args.min_manhattan,
            );
            data::save_grids(
                &args.out,
                &data::generate_grids(&params, args.count, args.seed)?,
            )
        }
        EnvKind::Hamcycle => data::save_graphs(
            &args.out,
            &data::generate_graphs(args.nodes, args.sparsity, args.count, args.seed)?,
        ),
    }
}

fn train_on<E: Expert>(envs: &[E], args: &TrainPrior) -> Result<()> {
    let env = envs.first().context("empty dataset")?;
    let trainer = BehaviorCloning {
        epochs: args.epochs,
        lr: args.lr,
        l2: args.l2,
        batch_size: args.batch_size,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let outcome = train_prior(envs, args.extra_starts, &trainer, &mut rng)?;
    save_checkpoint(&args.out, &outcome.params, env.tag(), env.feature_version())?;
    eprintln!(
        "trained on {} samples, loss {:.4} -> {:.4}",
        outcome.samples,
        outcome.loss[0],
        outcome.loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn run_on<E: Environment>(envs: &[E], args: &Run, mut cfg: RunConfig) -> Result<()> {
    let env = envs.first().context("empty dataset")?;
    if let Some(engine) = args.engine {
        cfg.search.engine = engine;
    }
    if let Some(it) = args.iterations {
        cfg.search.iterations = it;
    }
    if let Some(w) = args.workers {
        cfg.workers = w.max(1);
    }
    let params = load_prior(args.common.prior.as_deref(), env)?;
    if let Some(path) = &args.dump_stats {
        let target = envs
            .get(args.dump_instance)
            .with_context(|| format!("no instance {}", args.dump_instance))?;
        let dump = dump_root_search(target, &params, &cfg, cfg.search.seed)?;
        std::fs::write(path, serde_json::to_string_pretty(&dump)? + "\n")?;
    }
    let label = cfg.search.engine.to_string();
    let (result, episodes) = evaluate(envs, &params, &cfg, &label, args.common.deterministic)?;
    if let Some(path) = &args.log {
        data::write_jsonl(path, &episodes)?;
    }
    emit(args.common.out.as_deref(), &to_csv(&[result]))
}

fn ablate_on<E: Environment + Clone>(envs: &[E], args: &Ablate, cfg: RunConfig) -> Result<()> {
    let env = envs.first().context("empty dataset")?;
    let params = load_prior(args.common.prior.as_deref(), env)?;
    let det = args.common.deterministic;
    let results = if args.grid {
        let cs = args.c_values.as_deref().unwrap_or(C_GRID);
        let alphas = args.alpha_values.as_deref().unwrap_or(ALPHA_GRID);
        let gs = grid_search(envs, &params, &cfg, cs, alphas, det)?;
        eprintln!("selected c = {}, alpha = {}", gs.best_c, gs.best_alpha);
        let mut rows = gs.validation;
        rows.push(gs.test);
        rows
    } else {
        run_ablations(envs, &params, &cfg, det)?
    };
    emit(args.common.out.as_deref(), &to_csv(&results))
}

fn render(args: &Render) -> Result<()> {
    require(&args.dataset)?;
    require(&args.stats)?;
    let grids = data::load_grids(&args.dataset)?;
    let grid = grids
        .get(args.index)
        .with_context(|| format!("no instance {}", args.index))?;
    let dump: StatsDump = serde_json::from_str(&std::fs::read_to_string(&args.stats)?)
        .with_context(|| format!("parsing {}", args.stats.display()))?;
    let map = ExplorationMap::new(grid, &dump, None::<Cell>);
    if map.foreign_keys > 0 {
        eprintln!(
            "warning: {} keys do not belong to this instance",
            map.foreign_keys
        );
    }
    let with_ext = |ext: &str| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(ext);
        PathBuf::from(p)
    };
    std::fs::write(with_ext(".ppm"), map.to_ppm(args.scale))?;
    std::fs::write(with_ext(".txt"), map.to_ascii())?;
    eprintln!("{} visited cells", map.visited_cells());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    if cli.dump_config {
        print!("{}", RunConfig::default().render());
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    match command {
        Command::GenData(args) => gen_data(&args),
        Command::TrainPrior(args) => match load_dataset(args.env, &args.dataset)? {
            Dataset::Grids(d) => train_on(&d, &args),
            Dataset::Graphs(d) => train_on(&d, &args),
        },
        Command::Run(args) => {
            let cfg = load_config(&args.common)?;
            match load_dataset(args.common.env, &args.common.dataset)? {
                Dataset::Grids(d) => run_on(&d, &args, cfg),
                Dataset::Graphs(d) => run_on(&d, &args, cfg),
            }
        }
        Command::Ablate(args) => {
            let cfg = load_config(&args.common)?;
            match load_dataset(args.common.env, &args.common.dataset)? {
                Dataset::Grids(d) => ablate_on(&d, &args, cfg),
                Dataset::Graphs(d) => ablate_on(&d, &args, cfg),
            }
        }
        Command::Render(args) => render(&args),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<MissingFile>() {
            return 3;
        }
        if let Some(cfg) = cause.downcast_ref::<ConfigError>() {
            return match cfg {
                ConfigError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                    3
                }
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
