mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use lazysp::bench::{self, EvalReport};
use lazysp::grid::grid_world_generator;
use lazysp::selectors::{LinearPolicy, SelectorSpec};
use lazysp::training::qlearning::QTableFile;
use lazysp::training::{q_learning, stroll_train_with, QLearningConfig, QTable, RollIn, StrollConfig};
use lazysp::world::{env1_distribution, env2_distribution, WorldSet};
use lazysp::{ExplicitGraph, FeatureModel, World, WorldDistribution};

use config::Config;

const TRAINING_LOG_FORMAT: &str = "lazysp-training-log";
const CHECKPOINT_FORMAT: &str = "lazysp-checkpoint";
const CONTAMINATION_FORMAT: &str = "lazysp-contamination";

#[derive(Parser)]
#[command(name = "lazysp", version, about = "Lazy shortest-path search with learned edge selectors")]
struct Cli {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML configuration with [qlearning], [stroll], [grid] and [evaluate] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for every file a command writes.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a world set and write it with its graph.
    GenerateWorlds {
        #[arg(long, value_enum)]
        env: EnvKind,
        #[arg(long)]
        count: usize,
        /// Output file stem: NAME.graph.json and NAME.worlds.
        #[arg(long, default_value = "worlds")]
        name: String,
    },
    /// Train a Q-table or a linear policy.
    Train {
        #[arg(value_enum)]
        algorithm: Algorithm,
        #[command(flatten)]
        data: DataArgs,
        /// Validation world set for policy selection (defaults to samples of the training distribution).
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Evaluate selectors on a world set.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// forward, backward, alternate, random, failfast, postfailfast, pdl,
        /// oracle, policy:FILE or qtable:FILE. Repeatable.
        #[arg(long = "selector")]
        selectors: Vec<String>,
        /// Training world set for the informed selectors.
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate one selector on increasingly contaminated world sets.
    Contaminate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        contaminant: PathBuf,
        #[arg(long)]
        selector: String,
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
        fractions: Vec<f64>,
    },
    /// Summaries and plot series from logs written by other commands.
    Report {
        /// Per-episode evaluation log; prints the summary table.
        #[arg(long, conflicts_with = "training_log")]
        episodes: Option<PathBuf>,
        /// Training log; prints a mean-reward series.
        #[arg(long)]
        training_log: Option<PathBuf>,
        /// Episodes per point for logs without iterations.
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvKind {
    Env1,
    Env2,
    Grid,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Algorithm {
    Qlearn,
    Stroll,
    Strollh,
    Supervised,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Qlearn => "qlearn",
            Algorithm::Stroll => "stroll",
            Algorithm::Strollh => "strollh",
            Algorithm::Supervised => "supervised",
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Built-in distribution (grid uses the [grid] config table).
    #[arg(long, value_enum, conflicts_with_all = ["graph", "worlds"])]
    env: Option<EnvKind>,
    #[arg(long, requires = "worlds")]
    graph: Option<PathBuf>,
    #[arg(long, requires = "graph")]
    worlds: Option<PathBuf>,
}

struct Ctx {
    seed: u64,
    config: Config,
    out_dir: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        config,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::GenerateWorlds { env, count, name } => generate_worlds(&ctx, env, count, &name),
        Command::Train {
            algorithm,
            data,
            validation,
        } => train(&ctx, algorithm, &data, validation.as_deref()),
        Command::Evaluate {
            data,
            selectors,
            training,
            episodes,
        } => evaluate(&ctx, &data, &selectors, training.as_deref(), episodes),
        Command::Contaminate {
            graph,
            clean,
            contaminant,
            selector,
            training,
            fractions,
        } => contaminate(&ctx, &graph, &clean, &contaminant, &selector, training.as_deref(), &fractions),
        Command::Report {
            episodes,
            training_log,
            window,
        } => report(&ctx, episodes.as_deref(), training_log.as_deref(), window),
    }
}

fn env_distribution(ctx: &Ctx, env: EnvKind) -> Result<(ExplicitGraph, WorldDistribution)> {
    Ok(match env {
        EnvKind::Env1 => env1_distribution(),
        EnvKind::Env2 => env2_distribution(),
        EnvKind::Grid => {
            let spec = ctx
                .config
                .grid
                .as_ref()
                .context("--env grid needs a [grid] table in the config")?;
            grid_world_generator(spec, ctx.seed)?
        }
    })
}

fn load_world_set(graph: &ExplicitGraph, path: &Path) -> Result<Vec<World>> {
    let set = WorldSet::load(path).with_context(|| format!("loading {}", path.display()))?;
    set.check_graph(graph)
        .with_context(|| format!("world set {} does not belong to the graph", path.display()))?;
    Ok(set.worlds)
}

fn load_graph(path: &Path) -> Result<ExplicitGraph> {
    ExplicitGraph::load(path).with_context(|| format!("loading {}", path.display()))
}

/// The training distribution described by `data`.
fn distribution(ctx: &Ctx, data: &DataArgs) -> Result<(ExplicitGraph, WorldDistribution)> {
    match (data.env, &data.graph, &data.worlds) {
        (Some(env), _, _) => env_distribution(ctx, env),
        (None, Some(g), Some(w)) => {
            let graph = load_graph(g)?;
            let worlds = load_world_set(&graph, w)?;
            let dist = WorldDistribution::uniform(&graph, worlds.clone())?.with_training_worlds(worlds);
            Ok((graph, dist))
        }
        _ => bail!("give either --env or both --graph and --worlds"),
    }
}

fn generate_worlds(ctx: &Ctx, env: EnvKind, count: usize, name: &str) -> Result<()> {
    if count == 0 {
        bail!("--count must be positive");
    }
    let (graph, dist) = env_distribution(ctx, env)?;
    let worlds = dist.sample_many(count, ctx.seed)?;
    let set = WorldSet::new(&graph, worlds)?;
    let g = ctx.write(&format!("{name}.graph.json"), &graph.to_json())?;
    let w = ctx.write(&format!("{name}.worlds"), &set.to_text())?;
    log::info!("wrote {} and {} ({count} worlds)", g.display(), w.display());
    Ok(())
}

#[derive(Serialize)]
struct LogRecord {
    iteration: usize,
    episode: usize,
    reward: f64,
}

fn jsonl<T: Serialize>(header: serde_json::Value, rows: impl IntoIterator<Item = T>) -> String {
    let mut out = header.to_string();
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn train(ctx: &Ctx, algorithm: Algorithm, data: &DataArgs, validation: Option<&Path>) -> Result<()> {
    let (graph, dist) = distribution(ctx, data)?;
    if algorithm == Algorithm::Qlearn {
        let cfg = match (ctx.config.qlearning, data.env) {
            (Some(c), _) => c,
            (None, Some(EnvKind::Env2)) => QLearningConfig::env2(),
            (None, _) => QLearningConfig::env1(),
        };
        let run = q_learning(&graph, &dist, &cfg, ctx.seed)?;
        let file = run.table.to_file();
        ctx.write("qtable.json", &serde_json::to_string_pretty(&file)?)?;
        let header = json!({"format": TRAINING_LOG_FORMAT, "version": 1, "algorithm": "qlearn"});
        let rows = run.episode_rewards.iter().enumerate().map(|(i, &r)| LogRecord {
            iteration: 0,
            episode: i,
            reward: r,
        });
        ctx.write("training_log.jsonl", &jsonl(header, rows))?;
        let summary = json!({
            "algorithm": "qlearn",
            "seed": ctx.seed,
            "episodes": cfg.episodes,
            "states": run.table.num_states(),
        });
        ctx.write("train_summary.json", &serde_json::to_string_pretty(&summary)?)?;
        log::info!("q-table with {} states written", run.table.num_states());
        return Ok(());
    }

    let base = ctx
        .config
        .stroll
        .clone()
        .unwrap_or_else(|| StrollConfig::new(10, 40, RollIn::Oracle));
    let cfg = match algorithm {
        Algorithm::Stroll => StrollConfig {
            rollin: RollIn::Oracle,
            ..base
        },
        Algorithm::Strollh => StrollConfig {
            rollin: RollIn::Heuristic,
            ..base
        },
        Algorithm::Supervised => base.behaviour_cloning(),
        Algorithm::Qlearn => unreachable!(),
    };
    let validation_worlds = match validation {
        Some(p) => load_world_set(&graph, p)?,
        None => dist.sample_many(cfg.validation_worlds, lazysp::rng::derive_seed(ctx.seed, u64::MAX))?,
    };
    let mut observer = |rec: &lazysp::training::IterationRecord| -> lazysp::Result<()> {
        let body = json!({
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "iteration": rec.iteration,
            "beta": rec.beta,
            "dataset_size": rec.dataset_size,
            "validation_reward": -rec.validation_mean,
            "policy": rec.policy.to_file(),
        });
        ctx.write(
            &format!("checkpoints/iter_{:03}.json", rec.iteration),
            &serde_json::to_string_pretty(&body).expect("checkpoint serializes"),
        )
        .map_err(|e| lazysp::Error::Config(format!("{e:#}")))?;
        Ok(())
    };
    let outcome = stroll_train_with(&graph, &dist, &validation_worlds, &cfg, ctx.seed, &mut observer)?;
    ctx.write("policy.json", &outcome.policy.to_json())?;
    let header = json!({
        "format": TRAINING_LOG_FORMAT,
        "version": 1,
        "algorithm": algorithm.name(),
        "rollin": outcome.rollin_name,
    });
    let rows = outcome.episodes.iter().map(|e| LogRecord {
        iteration: e.iteration,
        episode: e.episode,
        reward: e.reward,
    });
    ctx.write("training_log.jsonl", &jsonl(header, rows))?;
    let summary = json!({
        "algorithm": algorithm.name(),
        "seed": ctx.seed,
        "rollin": outcome.rollin_name,
        "best_iteration": outcome.best_iteration,
        "dataset_size": outcome.dataset.len(),
        "oracle_fallbacks": outcome.oracle_fallbacks,
        "iterations": outcome.history.iter().map(|h| json!({
            "iteration": h.iteration,
            "beta": h.beta,
            "rolled_in_episodes": h.rolled_in_episodes,
            "dataset_size": h.dataset_size,
            "fit_loss": h.fit_loss,
            "validation_reward": -h.validation_mean,
        })).collect::<Vec<_>>(),
    });
    ctx.write("train_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    log::info!(
        "{}: best iteration {} of {}, roll-in {}",
        algorithm.name(),
        outcome.best_iteration,
        cfg.iterations,
        outcome.rollin_name
    );
    Ok(())
}

fn file_stem(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| path.to_string())
}

fn parse_selector(text: &str) -> Result<SelectorSpec> {
    if let Some(path) = text.strip_prefix("policy:") {
        let body = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let policy = LinearPolicy::from_json(&body).with_context(|| format!("parsing {path}"))?;
        return Ok(SelectorSpec::Linear {
            name: file_stem(path),
            policy,
        });
    }
    if let Some(path) = text.strip_prefix("qtable:") {
        let body = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
        let file: QTableFile = serde_json::from_str(&body).with_context(|| format!("parsing {path}"))?;
        return Ok(SelectorSpec::Tabular {
            name: file_stem(path),
            table: Arc::new(QTable::from_file(file)?),
        });
    }
    Ok(SelectorSpec::parse(text)?)
}

const DEFAULT_SELECTORS: [&str; 7] = ["forward", "backward", "alternate", "random", "failfast", "postfailfast", "pdl"];

/// Graph, evaluation worlds and training worlds for evaluation commands.
fn evaluation_data(
    ctx: &Ctx,
    data: &DataArgs,
    training: Option<&Path>,
    episodes: usize,
) -> Result<(ExplicitGraph, Vec<World>, Option<Vec<World>>)> {
    match (data.env, &data.graph, &data.worlds) {
        (Some(env), _, _) => {
            let (graph, dist) = env_distribution(ctx, env)?;
            let worlds = dist.sample_many(episodes, ctx.seed)?;
            let training = match training {
                Some(p) => Some(load_world_set(&graph, p)?),
                None => Some(dist.training_worlds().to_vec()).filter(|t| !t.is_empty()),
            };
            Ok((graph, worlds, training))
        }
        (None, Some(g), Some(w)) => {
            let graph = load_graph(g)?;
            let worlds = load_world_set(&graph, w)?;
            let training = training.map(|p| load_world_set(&graph, p)).transpose()?;
            Ok((graph, worlds, training))
        }
        _ => bail!("give either --env or both --graph and --worlds"),
    }
}

fn feature_model(training: Option<Vec<World>>, specs: &[SelectorSpec]) -> Result<Option<FeatureModel>> {
    match training {
        Some(t) => Ok(Some(FeatureModel::new(t)?)),
        None if specs.iter().any(|s| s.needs_training()) => {
            bail!("selectors {:?} need --training", specs.iter().filter(|s| s.needs_training()).map(|s| s.name()).collect::<Vec<_>>())
        }
        None => Ok(None),
    }
}

fn evaluate(
    ctx: &Ctx,
    data: &DataArgs,
    selectors: &[String],
    training: Option<&Path>,
    episodes: Option<usize>,
) -> Result<()> {
    let names: Vec<String> = if !selectors.is_empty() {
        selectors.to_vec()
    } else if let Some(list) = &ctx.config.evaluate.selectors {
        list.clone()
    } else {
        DEFAULT_SELECTORS.iter().map(|s| s.to_string()).collect()
    };
    let specs = names.iter().map(|s| parse_selector(s)).collect::<Result<Vec<_>>>()?;
    let requested = episodes.or(ctx.config.evaluate.episodes);
    let sample_count = requested.unwrap_or(200);
    let (graph, worlds, training) = evaluation_data(ctx, data, training, sample_count)?;
    let episodes = requested.unwrap_or(worlds.len());
    let model = feature_model(training, &specs)?;
    let result = bench::evaluate(&graph, &worlds, &specs, model.as_ref(), episodes, ctx.seed)?;
    write_report(ctx, "report", &result.report)?;
    ctx.write("episodes.csv", &bench::episodes_csv(&result.log))?;
    print!("{}", bench::format_table(&result.report));
    Ok(())
}

fn write_report(ctx: &Ctx, stem: &str, report: &EvalReport) -> Result<()> {
    ctx.write(&format!("{stem}.json"), &report.to_json())?;
    ctx.write(&format!("{stem}.txt"), &bench::format_table(report))?;
    Ok(())
}

fn contaminate(
    ctx: &Ctx,
    graph: &Path,
    clean: &Path,
    contaminant: &Path,
    selector: &str,
    training: Option<&Path>,
    fractions: &[f64],
) -> Result<()> {
    let graph = load_graph(graph)?;
    let clean = load_world_set(&graph, clean)?;
    let contaminant = load_world_set(&graph, contaminant)?;
    let spec = parse_selector(selector)?;
    let training = training.map(|p| load_world_set(&graph, p)).transpose()?;
    let model = feature_model(training, std::slice::from_ref(&spec))?;
    let points = bench::contaminate(&graph, &spec, model.as_ref(), &clean, &contaminant, fractions, ctx.seed)?;

    let body = json!({
        "format": CONTAMINATION_FORMAT,
        "version": 1,
        "seed": ctx.seed,
        "selector": spec.name(),
        "points": points.iter().map(|p| json!({
            "fraction": p.fraction,
            "contaminated": p.contaminated,
            "report": p.evaluation.report,
        })).collect::<Vec<_>>(),
    });
    ctx.write("contamination.json", &serde_json::to_string_pretty(&body)?)?;
    let table = bench::format_contamination(&points);
    ctx.write("contamination.txt", &table)?;
    let mut series = String::from("fraction\tmedian\tci_lower\tci_upper\tmean_reward\n");
    for p in &points {
        let r = &p.evaluation.report.rows[0];
        series.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.fraction, r.median, r.ci_lower, r.ci_upper, r.mean_reward
        ));
    }
    ctx.write("contamination.tsv", &series)?;
    for p in &points {
        ctx.write(
            &format!("episodes_lambda_{:.2}.csv", p.fraction),
            &bench::episodes_csv(&p.evaluation.log),
        )?;
    }
    print!("{table}");
    Ok(())
}

fn report(ctx: &Ctx, episodes: Option<&Path>, training_log: Option<&Path>, window: usize) -> Result<()> {
    if let Some(path) = episodes {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let log = bench::parse_episodes_csv(&text)?;
        print!("{}", bench::format_table(&bench::summarize(&log, ctx.seed)?));
        return Ok(());
    }
    let path = training_log.context("give --episodes or --training-log")?;
    if window == 0 {
        bail!("--window must be positive");
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: serde_json::Value =
        serde_json::from_str(lines.next().context("empty training log")?).context("bad log header")?;
    if header["format"] != TRAINING_LOG_FORMAT || header["version"] != 1 {
        bail!("{} is not a training log", path.display());
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("log line {}", i + 2))?;
        let field = |k: &str| v[k].as_f64().with_context(|| format!("log line {}: missing {k}", i + 2));
        records.push((field("iteration")? as usize, field("episode")? as usize, field("reward")?));
    }
    let by_iteration = records.iter().any(|r| r.0 > 0);
    let mut points: Vec<(usize, f64, usize)> = Vec::new();
    for &(it, ep, reward) in &records {
        let key = if by_iteration { it } else { ep / window };
        match points.last_mut() {
            Some(last) if last.0 == key => {
                last.1 += reward;
                last.2 += 1;
            }
            _ => points.push((key, reward, 1)),
        }
    }
    println!("{}\tmean_reward\tepisodes", if by_iteration { "iteration" } else { "block" });
    for (key, sum, n) in points {
        println!("{key}\t{:.4}\t{n}", sum / n as f64);
    }
    Ok(())
}
