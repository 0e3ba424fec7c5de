//! Command-line interface. [`run`] returns the process exit code: 0 on
//! success, 2 for invalid flags or configuration, 3 for data that does not
//! load or does not fit the request, 1 for anything else.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::evaluate::{aggregate, train_eval, EvalError, EvalReport};
use crate::hin::{load_hin, synth_planted, write_hin, FeatureSet, HinError, HinGraph, SynthConfig, TaskData, TaskKind};
use crate::model::{Model, ModelError, Split, TrainConfig};
use crate::oracle::{
    brute_force_search, gradient_check, joint_cardinality, lambda_grad_check, prop1_numeric_check,
    task_specs, OracleError,
};
use crate::search::{run_search, sample_path, ArchParams, SearchConfig, SearchError, SearchMode};
use crate::space::{build_space, export_dot, MetaGraph, MetaGraphFile, SpaceError};

/// `println!` that ignores a closed standard output.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "diffmg", version, about = "Differentiable meta-graph search on heterogeneous graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Nodeclass,
    Rec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sampled,
    Darts,
    SingleLevel,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search a meta graph per target type and write it with a report.
    Search {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long = "K", default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        /// Defaults to 50 for node classification and 100 for recommendation.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        epsilon0: f64,
        #[arg(long, default_value_t = 0.9)]
        decay: f64,
        /// Adam learning rate for the architecture weights λ.
        #[arg(long, default_value_t = 3e-4)]
        lr_lambda: f64,
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Sampled)]
        mode: ModeArg,
        /// Input dropout on H0 during training steps.
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain fixed meta graphs from scratch over several seeds.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "meta-graph")]
        meta_graph: PathBuf,
        #[arg(long = "meta-graph2")]
        meta_graph2: Option<PathBuf>,
        /// Defaults to 100 for node classification and 200 for recommendation.
        #[arg(long)]
        epochs: Option<usize>,
        /// Inclusive range `a..b` or comma-separated list.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every meta graph of a small space and rank them, or report the
    /// size of a space that is too large.
    Enumerate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "K")]
        k: usize,
        #[arg(long)]
        cap: u64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ranking as JSON lines; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against finite differences on a dataset.
    Gradcheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a planted synthetic dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Other(m) => m,
        }
    }
}

impl From<HinError> for CliError {
    fn from(e: HinError) -> Self {
        match e {
            HinError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SpaceError> for CliError {
    fn from(e: SpaceError) -> Self {
        match e {
            SpaceError::InvalidK => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Config(m) => CliError::Config(m),
            SearchError::Space(s) => s.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(m) => CliError::Config(m),
            EvalError::Space(s) => s.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Space(s) => s.into(),
            OracleError::Eval(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Search {
            data,
            task,
            k,
            hidden,
            epochs,
            epsilon0,
            decay,
            lr_lambda,
            restarts,
            mode,
            dropout,
            seed,
            out,
        } => {
            if k == 0 {
                return Err(CliError::Config("K must be ≥ 1".into()));
            }
            let (graph, features, task_data) = load_hin(&data)?;
            check_task(task, &task_data)?;
            let config = SearchConfig {
                k_states: k,
                epochs: epochs.unwrap_or(match task {
                    TaskArg::Nodeclass => 50,
                    TaskArg::Rec => 100,
                }),
                epsilon0,
                decay,
                restarts,
                mode: match mode {
                    ModeArg::Sampled => SearchMode::Sampled,
                    ModeArg::Darts => SearchMode::DartsReference,
                    ModeArg::SingleLevel => SearchMode::SingleLevel,
                },
                train: TrainConfig {
                    hidden,
                    dropout,
                    seed,
                    lr_lambda,
                    ..TrainConfig::default()
                },
            };
            config.validate()?;
            let model = Model::new(&graph, &features, &task_data);
            let outcome = run_search(model, &config, crate::thread_count())?;
            create_dir(&out)?;
            write_json(&out.join("search_report.json"), &outcome.report)?;
            let names = meta_graph_names(task_data.kind());
            for (mg, name) in outcome.meta_graphs.iter().zip(names) {
                write_text(&out.join(format!("{name}.json")), &mg.to_json())?;
                write_text(&out.join(format!("{name}.dot")), &export_dot(mg, graph.registry()))?;
            }
            let best = &outcome.report.restarts[outcome.report.best_restart];
            say!(
                "task={} best_restart={} val={:.6} out={}",
                task_data.kind(),
                outcome.report.best_restart,
                best.final_val_metric,
                out.display()
            );
            Ok(())
        }
        Command::Eval {
            data,
            meta_graph,
            meta_graph2,
            epochs,
            seeds,
            hidden,
            dropout,
            patience,
            out,
        } => {
            let seeds = parse_seeds(&seeds)?;
            let (graph, features, task_data) = load_hin(&data)?;
            let files = match (task_data.kind(), meta_graph2) {
                (TaskKind::NodeClass, None) => vec![meta_graph],
                (TaskKind::NodeClass, Some(_)) => {
                    return Err(CliError::Config(
                        "node classification takes one meta graph; drop --meta-graph2".into(),
                    ))
                }
                (TaskKind::Rec, Some(second)) => vec![meta_graph, second],
                (TaskKind::Rec, None) => {
                    return Err(CliError::Config(
                        "recommendation requires two meta graphs (one per endpoint type)".into(),
                    ))
                }
            };
            let meta_graphs = load_meta_graphs(&graph, &task_data, &files)?;
            let base = TrainConfig {
                hidden,
                dropout,
                patience,
                epochs: epochs.unwrap_or(match task_data.kind() {
                    TaskKind::NodeClass => 100,
                    TaskKind::Rec => 200,
                }),
                ..TrainConfig::default()
            };
            base.validate().map_err(CliError::Config)?;
            let model = Model::new(&graph, &features, &task_data);
            let results = crate::workers::run_indexed(seeds.len(), crate::thread_count(), |i| {
                let config = TrainConfig {
                    seed: seeds[i],
                    ..base.clone()
                };
                train_eval(&model, &meta_graphs, &config)
            });
            let reports = results.into_iter().collect::<Result<Vec<EvalReport>, _>>()?;
            create_dir(&out)?;
            for r in &reports {
                write_json(&out.join(format!("eval_seed{}.json", r.seed)), r)?;
                write_json(&out.join(format!("eval_seed{}.timing.json", r.seed)), &r.epoch_seconds)?;
                say!("{}", r.summary_line());
            }
            let summary = aggregate(&reports).expect("at least one seed");
            write_json(&out.join("summary.json"), &summary)?;
            say!(
                "task={} runs={} test_mean={:.6} test_std={:.6}",
                summary.task,
                summary.seeds.len(),
                summary.test_mean,
                summary.test_std
            );
            Ok(())
        }
        Command::Enumerate {
            data,
            k,
            cap,
            epochs,
            hidden,
            dropout,
            seed,
            out,
        } => {
            if k == 0 {
                return Err(CliError::Config("K must be ≥ 1".into()));
            }
            let (graph, features, task_data) = load_hin(&data)?;
            let model = Model::new(&graph, &features, &task_data);
            let specs = task_specs(&model, k)?;
            let total = joint_cardinality(&specs);
            if total > num_bigint::BigUint::from(cap) {
                if specs.len() == 1 {
                    say!("{total} meta graphs (cap exceeded)");
                } else {
                    for s in &specs {
                        let n = s.cardinality();
                        let note = if n > num_bigint::BigUint::from(cap) { " (cap exceeded)" } else { "" };
                        say!("{n} meta graphs{note} for target type {}", s.target_type());
                    }
                    say!("{total} meta graph pairs (cap exceeded)");
                }
                return Ok(());
            }
            let config = TrainConfig {
                hidden,
                dropout,
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let ranking = brute_force_search(&model, k, &config, cap, crate::thread_count())?;
            let mut text = String::new();
            for r in &ranking {
                text.push_str(&serde_json::to_string(&r.to_line()).expect("serializable"));
                text.push('\n');
            }
            match out {
                Some(path) => {
                    write_text(&path, &text)?;
                    say!("{} meta graphs ranked into {}", ranking.len(), path.display());
                }
                None => {
                    std::io::stdout()
                        .write_all(text.as_bytes())
                        .map_err(|e| CliError::Other(e.to_string()))?;
                }
            }
            Ok(())
        }
        Command::Gradcheck {
            data,
            k,
            hidden,
            step,
            seed,
        } => {
            if k == 0 {
                return Err(CliError::Config("K must be ≥ 1".into()));
            }
            let (graph, features, task_data) = load_hin(&data)?;
            let failures = gradcheck_suite(&graph, &features, &task_data, k, hidden, step, seed)?;
            if failures > 0 {
                return Err(CliError::Other(format!("{failures} gradient check(s) out of tolerance")));
            }
            say!("gradcheck: all checks within tolerance");
            Ok(())
        }
        Command::Synth { config, seed, out } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            let parsed: SynthConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            let (graph, features, task_data) = synth_planted(&parsed, seed)?;
            write_hin(&out, &graph, Some(&features), &task_data)?;
            say!(
                "wrote {} nodes, {} edges to {}",
                graph.n_nodes(),
                graph.edges().len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn check_task(requested: TaskArg, data: &TaskData) -> Result<(), CliError> {
    let matches = matches!(
        (requested, data.kind()),
        (TaskArg::Nodeclass, TaskKind::NodeClass) | (TaskArg::Rec, TaskKind::Rec)
    );
    if matches {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "--task does not match the dataset, which holds a `{}` task",
            data.kind()
        )))
    }
}

/// File stems for the derived meta graphs of a task.
pub fn meta_graph_names(kind: TaskKind) -> &'static [&'static str] {
    match kind {
        TaskKind::NodeClass => &["meta_graph"],
        TaskKind::Rec => &["meta_graph_src", "meta_graph_dst"],
    }
}

/// `a..b` (inclusive) or `a,b,c`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("cannot parse seeds `{text}`; use `a..b` or `a,b,c`"));
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Reads meta-graph files and orders them to match the task's target types.
fn load_meta_graphs(
    graph: &HinGraph,
    task: &TaskData,
    files: &[PathBuf],
) -> Result<Vec<MetaGraph>, CliError> {
    let mut parsed = Vec::new();
    for path in files {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let file: MetaGraphFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let spec = build_space(graph, &file.target_type, file.k)?;
        let mg = MetaGraph::from_file(&file, &spec)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        parsed.push(mg);
    }
    let targets = task.target_types();
    if parsed.len() == 2 && parsed[0].target_type() == targets[1] && parsed[1].target_type() == targets[0] {
        parsed.swap(0, 1);
    }
    for (mg, t) in parsed.iter().zip(&targets) {
        if mg.target_type() != t {
            return Err(CliError::Data(format!(
                "meta graph targets `{}` but the task needs `{t}`",
                mg.target_type()
            )));
        }
    }
    Ok(parsed)
}

/// Gradient checks on `k`-state random paths of the dataset's search space.
/// Prints one line per check and returns the number of failures.
pub fn gradcheck_suite(
    graph: &HinGraph,
    features: &FeatureSet,
    task: &TaskData,
    k: usize,
    hidden: usize,
    step: f64,
    seed: u64,
) -> Result<usize, CliError> {
    const TOL: f64 = 1e-4;
    let model = Model::new(graph, features, task);
    let specs = task_specs(&model, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = model.init_params(hidden, &mut rng);
    // Well-separated λ so that every link has a clear argmax.
    let archs: Vec<ArchParams> = specs
        .iter()
        .map(|s| {
            ArchParams::from_lambdas(
                s.candidate_sizes()
                    .into_iter()
                    .map(|n| {
                        let mut ranks: Vec<f64> = (0..n).map(|m| 1.5 * m as f64).collect();
                        rand::seq::SliceRandom::shuffle(ranks.as_mut_slice(), &mut rng);
                        ranks
                    })
                    .collect(),
            )
        })
        .collect();
    let paths: Vec<Vec<usize>> = archs
        .iter()
        .map(|a| sample_path(a, 1.0, &mut rng).indices())
        .collect();
    let dags: Vec<_> = specs
        .iter()
        .zip(&archs)
        .zip(&paths)
        .map(|((s, a), p)| crate::oracle::hard_assignment(s, a, p))
        .collect();

    let mut failures = 0;
    let mut report = |name: String, ok: bool, detail: String| {
        say!("{} {name}: {detail}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };
    let g = gradient_check(&model, &params, &dags, Split::Train, step)?;
    for (t, a) in g.tensors.iter().enumerate() {
        report(
            format!("omega tensor {t}"),
            a.within(TOL),
            describe(a),
        );
    }
    report(
        "branch coefficients".into(),
        g.coefficients.within(TOL),
        describe(&g.coefficients),
    );
    for (d, spec) in specs.iter().enumerate() {
        for l in 0..spec.links().len() {
            let a = lambda_grad_check(&model, &params, &specs, &archs, &paths, d, l, Split::Val, step)?;
            report(
                format!("lambda grad dag {d} link {}", spec.links()[l]),
                a.within(TOL),
                describe(&a),
            );
            let p = prop1_numeric_check(
                &model,
                &params,
                &specs,
                &archs,
                d,
                l,
                Split::Val,
                &[1.0, 0.1, 0.01, 0.001],
            )?;
            report(
                format!("temperature limit dag {d} link {}", spec.links()[l]),
                p.passed(),
                format!("selected {} hard grad {:.3e}", p.selected, p.hard_grad),
            );
        }
    }
    Ok(failures)
}

fn describe(a: &crate::oracle::Agreement) -> String {
    format!(
        "max rel err {:.2e}, max abs err {:.2e} over {} entries ({} skipped at relu kinks)",
        a.max_rel_error, a.max_abs_error, a.coordinates, a.skipped
    )
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}
