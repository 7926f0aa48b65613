//! Command-line driver: reproducible search runs, one-off block evaluations,
//! run analyses, and the stdio worker mode for the trainer plugin protocol.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use blockswarm_core::analysis;
use blockswarm_core::dataset::DatasetDescriptor;
use blockswarm_core::encoding::BlockSpec;
use blockswarm_core::evaluator::{Evaluator, Trainer};
use blockswarm_core::history::HistoryStore;
use blockswarm_core::oracle::{OracleConfig, SyntheticOracle};
use blockswarm_core::plugin::{serve, PluginTrainer};
use blockswarm_core::pso::Swarm;
use blockswarm_core::search::{
    initial_state, resume_search, stack_and_select, RunLog, SearchConfig, SearchState,
};

#[derive(Parser)]
#[command(
    name = "blockswarm",
    version,
    about = "Surrogate-assisted particle swarm search over dense-block architectures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full search and stacking pipeline, writing run artifacts.
    Search {
        /// JSON run configuration; `{}` selects all defaults.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for manifest, history, checkpoints and run log.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trainer: `synthetic` or `plugin:<command>`.
        #[arg(long, default_value = "synthetic")]
        trainer: String,
        /// Overrides the configured parallel evaluation bound.
        #[arg(long)]
        parallel: Option<usize>,
        /// Continue from the latest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Produce one analysis table from a finished run directory.
    Analyze {
        /// Run directory written by `search`.
        #[arg(long)]
        run: PathBuf,
        /// Which analysis to produce.
        #[arg(long)]
        which: Analysis,
    },
    /// Evaluate one block with the full training schedule and print its
    /// training record as JSON.
    EvalBlock {
        /// Block as a JSON array of growth rates, e.g. "[12,24,32]".
        #[arg(long)]
        block: String,
        /// JSON run configuration; `{}` selects all defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Trainer: `synthetic` or `plugin:<command>`.
        #[arg(long, default_value = "synthetic")]
        trainer: String,
    },
    /// Serve the synthetic trainer over stdin/stdout using the plugin
    /// protocol (one JSON request per line).
    Worker {
        /// Optional JSON run configuration supplying the trainer constants.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the default configuration as JSON.
    PrintConfig,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Convergence,
    Ablation,
    Baseline,
    Growth,
    Filterstats,
}

/// Complete run configuration as stored on disk.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct FileConfig {
    #[serde(default)]
    search: SearchConfig<f64>,
    #[serde(default)]
    oracle: OracleConfig<f64>,
}

/// Snapshot that pins a run: configuration, seed, trainer, artifact layout.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    seed: u64,
    trainer: String,
    parallel_evaluations: usize,
    config: FileConfig,
    artifacts: ArtifactPaths,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactPaths {
    history: String,
    runlog: String,
    checkpoints: String,
    analysis: String,
}

impl Default for ArtifactPaths {
    fn default() -> Self {
        Self {
            history: "history.jsonl".into(),
            runlog: "runlog.json".into(),
            checkpoints: "checkpoints".into(),
            analysis: "analysis".into(),
        }
    }
}

enum CliError {
    /// Bad invocation or configuration: exit code 2.
    Usage(String),
    /// Failure while running: exit code 1.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            out,
            seed,
            trainer,
            parallel,
            resume,
        } => cmd_search(&config, &out, seed, &trainer, parallel, resume),
        Command::Analyze { run, which } => cmd_analyze(&run, which),
        Command::EvalBlock {
            block,
            config,
            seed,
            trainer,
        } => cmd_eval_block(&block, &config, seed, &trainer),
        Command::Worker { config } => cmd_worker(config.as_deref()),
        Command::PrintConfig => {
            println!(
                "{}",
                serde_json::to_string_pretty(&FileConfig::default()).expect("serializable")
            );
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(msg) => eprintln!("error: {msg}"),
            }
            e.exit_code()
        }
    }
}

fn load_config(path: &Path) -> Result<FileConfig, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
    let cfg: FileConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("parsing config {}: {e}", path.display())))?;
    cfg.search
        .validate()
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    Ok(cfg)
}

fn build_trainer(
    spec: &str,
    oracle_cfg: &OracleConfig<f64>,
) -> Result<Box<dyn Trainer<f64>>, CliError> {
    if spec == "synthetic" {
        Ok(Box::new(SyntheticOracle::new(oracle_cfg.clone())))
    } else if let Some(command) = spec.strip_prefix("plugin:") {
        if command.trim().is_empty() {
            return Err(CliError::Usage("plugin trainer command is empty".into()));
        }
        Ok(Box::new(PluginTrainer::new(command)))
    } else {
        Err(CliError::Usage(format!(
            "unknown trainer {spec:?}; expected \"synthetic\" or \"plugin:<command>\""
        )))
    }
}

fn cmd_search(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    trainer_spec: &str,
    parallel: Option<usize>,
    resume: bool,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path)?;
    if let Some(seed) = seed {
        cfg.search.pso.rng_seed = seed;
    }
    if let Some(parallel) = parallel {
        cfg.search.parallel_evaluations = parallel;
    }
    let trainer = build_trainer(trainer_spec, &cfg.oracle)?;

    fs::create_dir_all(out).map_err(|e| runtime(format!("creating {}: {e}", out.display())))?;
    let paths = ArtifactPaths::default();
    let checkpoints_dir = out.join(&paths.checkpoints);
    fs::create_dir_all(&checkpoints_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", checkpoints_dir.display())))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.search.pso.rng_seed,
        trainer: trainer_spec.into(),
        parallel_evaluations: cfg.search.parallel_evaluations,
        config: cfg.clone(),
        artifacts: paths,
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    let history_path = out.join(&manifest.artifacts.history);
    let resumed_state = if resume {
        match latest_checkpoint(&checkpoints_dir)? {
            Some(path) => Some(read_json::<SearchState<f64>>(&path)?),
            None => None,
        }
    } else {
        None
    };
    let state = match resumed_state {
        Some(state) => state,
        None => {
            // Fresh start: a leftover history would poison determinism.
            if history_path.exists() {
                fs::remove_file(&history_path)
                    .map_err(|e| runtime(format!("clearing {}: {e}", history_path.display())))?;
            }
            initial_state(&cfg.search)
        }
    };
    let store = HistoryStore::<f64>::with_file(&history_path)
        .map_err(|e| runtime(format!("opening history: {e}")))?;

    let observe = |state: &SearchState<f64>| {
        let path = checkpoints_dir.join(format!("gen_{:04}.json", state.next_generation - 1));
        let data = serde_json::to_vec(state)
            .map_err(|e| blockswarm_core::search::SearchError::Config(e.to_string()))?;
        fs::write(&path, data)?;
        Ok(())
    };
    let (best_block, mut log) =
        resume_search(&cfg.search, trainer.as_ref(), &store, state, observe)
            .map_err(|e| runtime(format!("search failed (checkpoints retained): {e}")))?;

    let stacking = stack_and_select(
        &best_block,
        &cfg.search.dataset,
        trainer.as_ref(),
        &store,
        &cfg.search,
    )
    .map_err(|e| runtime(format!("stacking failed: {e}")))?;
    let chosen = blockswarm_core::blockmodel::StackPlan::<f64>::stacked(
        best_block.clone(),
        stacking.best_repeats,
    );
    println!(
        "best block {:?} ({} layers, {} params single, {} params stacked x{})",
        best_block.growth_rates,
        best_block.len(),
        blockswarm_core::blockmodel::parameter_count(
            &blockswarm_core::blockmodel::StackPlan::<f64>::single(best_block.clone())
        ),
        blockswarm_core::blockmodel::parameter_count(&chosen),
        stacking.best_repeats
    );
    println!(
        "stacking accuracies {:?} | chosen repeats {}",
        stacking.accuracies, stacking.best_repeats
    );
    log.stacking = Some(stacking);
    write_json(&out.join(&manifest.artifacts.runlog), &log)?;
    println!(
        "run complete: {} full evaluations over {} generations",
        log.total_full_evaluations,
        log.generations.len()
    );
    Ok(())
}

fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>, CliError> {
    let mut newest: Option<PathBuf> = None;
    if !dir.exists() {
        return Ok(None);
    }
    let entries =
        fs::read_dir(dir).map_err(|e| runtime(format!("listing {}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| runtime(e.to_string()))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            match &newest {
                Some(best) if best.as_os_str() > path.as_os_str() => {}
                _ => newest = Some(path),
            }
        }
    }
    Ok(newest)
}

fn cmd_analyze(run: &Path, which: Analysis) -> Result<(), CliError> {
    let manifest_path = run.join("manifest.json");
    if !manifest_path.exists() {
        return Err(runtime(format!("missing {}", manifest_path.display())));
    }
    let manifest: RunManifest = read_json(&manifest_path)?;
    let cfg = &manifest.config.search;
    let analysis_dir = run.join(&manifest.artifacts.analysis);
    fs::create_dir_all(&analysis_dir)
        .map_err(|e| runtime(format!("creating {}: {e}", analysis_dir.display())))?;

    let history_path = run.join(&manifest.artifacts.history);
    let runlog_path = run.join(&manifest.artifacts.runlog);
    match which {
        Analysis::Convergence => {
            let checkpoints = load_checkpoints(&run.join(&manifest.artifacts.checkpoints))?;
            let rows = analysis::convergence_trace(&checkpoints)
                .map_err(|e| runtime(format!("convergence trace: {e}")))?;
            write_text(
                &analysis_dir.join("convergence.csv"),
                &analysis::trace_to_csv(&rows),
            )?;
            merge_summary(
                &analysis_dir,
                "convergence",
                serde_json::json!({
                    "rows": rows.len(),
                    "checkpoints": checkpoints.len(),
                }),
            )?;
        }
        Analysis::Ablation => {
            let store = open_history(&history_path)?;
            // The pair dataset itself, for external study of the ablation.
            let pairs = blockswarm_core::surrogate::subsample_pairs(
                blockswarm_core::surrogate::build_pair_dataset(&store, &cfg.surrogate.feature_spec),
                cfg.surrogate.max_pairs,
                manifest.seed,
            );
            write_text(
                &analysis_dir.join("pairs.csv"),
                &blockswarm_core::surrogate::pairs_to_csv(&pairs),
            )?;
            let rows = analysis::feature_ablation(
                &store,
                &cfg.surrogate.feature_spec,
                &cfg.surrogate.svm,
                cfg.surrogate.cv_folds,
                cfg.surrogate.max_pairs,
                manifest.seed,
            )
            .map_err(|e| runtime(format!("feature ablation: {e}")))?;
            write_text(
                &analysis_dir.join("ablation.csv"),
                &analysis::ablation_to_csv(&rows),
            )?;
            let grouped = analysis::grouped_cv(
                &store,
                &cfg.surrogate.feature_spec,
                &cfg.surrogate.svm,
                cfg.surrogate.cv_folds,
                cfg.surrogate.max_pairs,
                manifest.seed,
            )
            .map(|scores| blockswarm_core::svm::mean(&scores))
            .ok();
            merge_summary(
                &analysis_dir,
                "ablation",
                serde_json::json!({
                    "rows": rows,
                    "grouped_cv_mean_all_features": grouped,
                }),
            )?;
        }
        Analysis::Baseline => {
            let store = open_history(&history_path)?;
            let score = analysis::tenth_epoch_baseline(&store)
                .map_err(|e| runtime(format!("baseline: {e}")))?;
            write_text(
                &analysis_dir.join("baseline.csv"),
                &format!("indicator,agreement\naccuracy_at_epoch_10,{score}\n"),
            )?;
            merge_summary(
                &analysis_dir,
                "baseline",
                serde_json::json!({ "agreement": score }),
            )?;
        }
        Analysis::Growth => {
            let store = open_history(&history_path)?;
            let rows = analysis::growth_rate_stats(&store, &cfg.encoding)
                .map_err(|e| runtime(format!("growth stats: {e}")))?;
            write_text(
                &analysis_dir.join("growth.csv"),
                &analysis::growth_stats_to_csv(&rows),
            )?;
            merge_summary(
                &analysis_dir,
                "growth",
                serde_json::json!({
                    "layers": rows.len(),
                }),
            )?;
        }
        Analysis::Filterstats => {
            if !runlog_path.exists() {
                return Err(runtime(format!("missing {}", runlog_path.display())));
            }
            let log: RunLog<f64> = read_json(&runlog_path)?;
            let mut csv = String::from(
                "generation,filtered,trained,surrogate_active,surrogate_cv_mean,gbest_fitness\n",
            );
            for g in &log.generations {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    g.generation,
                    g.filtered,
                    g.trained,
                    g.surrogate_active,
                    g.surrogate_cv_mean.map_or(String::new(), |v| v.to_string()),
                    g.gbest_fitness
                ));
            }
            write_text(&analysis_dir.join("filterstats.csv"), &csv)?;
            let filtered: usize = log.generations.iter().map(|g| g.filtered).sum();
            let trained: usize = log.generations.iter().map(|g| g.trained).sum();
            merge_summary(
                &analysis_dir,
                "filterstats",
                serde_json::json!({
                    "filtered_total": filtered,
                    "trained_total": trained,
                    "filtered_fraction": filtered as f64 / (filtered + trained).max(1) as f64,
                }),
            )?;
        }
    }
    Ok(())
}

fn load_checkpoints(dir: &Path) -> Result<Vec<Swarm<f64>>, CliError> {
    if !dir.exists() {
        return Err(runtime(format!("missing {}", dir.display())));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| runtime(format!("listing {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut swarms = Vec::with_capacity(paths.len());
    for path in paths {
        let state: SearchState<f64> = read_json(&path)?;
        swarms.push(state.swarm);
    }
    if swarms.is_empty() {
        return Err(runtime(format!("no checkpoints in {}", dir.display())));
    }
    Ok(swarms)
}

fn open_history(path: &Path) -> Result<HistoryStore<f64>, CliError> {
    if !path.exists() {
        return Err(runtime(format!("missing {}", path.display())));
    }
    HistoryStore::load_jsonl(path).map_err(|e| runtime(format!("loading history: {e}")))
}

fn cmd_eval_block(
    block_json: &str,
    config_path: &Path,
    seed: Option<u64>,
    trainer_spec: &str,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path)?;
    if let Some(seed) = seed {
        cfg.search.pso.rng_seed = seed;
    }
    let rates: Vec<u32> = serde_json::from_str(block_json)
        .map_err(|e| CliError::Usage(format!("block must be a JSON array of growth rates: {e}")))?;
    let spec = BlockSpec::new(rates);
    spec.validate(&cfg.search.encoding)
        .map_err(|e| CliError::Usage(format!("invalid block: {e}")))?;
    let trainer = build_trainer(trainer_spec, &cfg.oracle)?;
    let store = HistoryStore::<f64>::new();
    let evaluator = Evaluator::new(
        trainer.as_ref(),
        &store,
        cfg.search.encoding,
        cfg.search.max_epochs,
        cfg.search.pso.rng_seed,
    );
    let dataset: DatasetDescriptor<f64> = cfg.search.dataset.clone();
    evaluator
        .evaluate_fitness(&spec, &dataset)
        .map_err(|e| runtime(format!("evaluation failed: {e}")))?;
    let record = store.records().pop().expect("evaluation appends a record");
    println!(
        "{}",
        serde_json::to_string_pretty(&record).expect("record serializes")
    );
    Ok(())
}

fn cmd_worker(config: Option<&Path>) -> Result<(), CliError> {
    let cfg = match config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    let oracle = SyntheticOracle::new(cfg.oracle);
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(&oracle, stdin.lock(), stdout.lock())
        .map_err(|e| runtime(format!("worker stream failed: {e}")))
}

fn runtime(msg: String) -> CliError {
    CliError::Runtime(msg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let data = serde_json::to_vec_pretty(value)
        .map_err(|e| runtime(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, data).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = fs::read(path).map_err(|e| runtime(format!("reading {}: {e}", path.display())))?;
    serde_json::from_slice(&raw).map_err(|e| runtime(format!("parsing {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn merge_summary(analysis_dir: &Path, key: &str, value: serde_json::Value) -> Result<(), CliError> {
    let path = analysis_dir.join("summary.json");
    let mut summary: serde_json::Map<String, serde_json::Value> = if path.exists() {
        read_json(&path)?
    } else {
        serde_json::Map::new()
    };
    summary.insert(key.to_string(), value);
    let mut file =
        fs::File::create(&path).map_err(|e| runtime(format!("writing {}: {e}", path.display())))?;
    let data = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    file.write_all(&data)
        .map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}
