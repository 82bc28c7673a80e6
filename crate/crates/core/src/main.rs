//! `alforge`: generate toy data, run and replicate active-learning
//! experiments, and check region recovery on the Sigmoid data.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage error, 3 data error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use alforge::data::{load_csv, make_sigmoid_dataset, write_csv, CsvOptions, Dataset, LabelColumn};
use alforge::experiment::{
    export_results, prepare, replicate, run_active_learning_observed, toy_region_demo,
    ExperimentConfig, ExportFormat, Representation, ToyDemoConfig,
};
use alforge::fsutil::write_atomic;
use alforge::strategies::{write_diagnostics_csv, StrategyKind, DEFAULT_BALD_PASSES};
use alforge::Error;

#[derive(Parser, Debug)]
#[command(
    name = "alforge",
    version,
    about = "Pool-based active learning on tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a Sigmoid dataset (features, label `y`, quadrant id) to CSV.
    GenToy {
        #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to `sigmoid_<n>_<seed>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One active-learning run of a single strategy.
    Run(RunArgs),
    /// Every selected strategy over several seeds, with pointwise medians.
    Replicate(ReplicateArgs),
    /// Cluster-purity comparison of sample representations on Sigmoid data.
    ToyDemo(ToyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Rnd,
    Egl,
    Bald,
    Coreset,
    Badge,
    Dami,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Jsonl => ExportFormat::JsonLines,
        }
    }
}

/// Settings shared by `run` and `replicate`. Each may also come from
/// `--config`; a flag given on the command line wins.
#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column: header name or zero-based position.
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    /// Comma-separated columns to drop before parsing.
    #[arg(long)]
    ignore_cols: Option<String>,
    /// Flat `key = value` file; keys are the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    init_fraction: Option<f64>,
    #[arg(long)]
    round_fraction: Option<f64>,
    #[arg(long)]
    stop_fraction: Option<f64>,
    /// Train/validation/test ratios, e.g. `0.6,0.2,0.2`.
    #[arg(long)]
    split: Option<String>,
    /// Hidden layer widths, e.g. `16,8`.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    bald_passes: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `curve_<strategy>_<seed>.<csv|jsonl>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write each round's selection payload as `round_<m>.csv` here.
    #[arg(long)]
    diagnostics_dir: Option<PathBuf>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args, Debug)]
struct ReplicateArgs {
    /// `all` or a comma-separated list of strategy names.
    #[arg(long, default_value = "all")]
    strategies: String,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "ALFORGE_JOBS")]
    jobs: Option<usize>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Number of seeds; seed values are `base_seed .. base_seed + seeds`.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    /// Dropout used while training the demo network.
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
    #[arg(long, default_value = "toy_purity.csv")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenToy { n, seed, out } => gen_toy(n as usize, seed, out),
        Command::Run(args) => cmd_run(args),
        Command::Replicate(args) => cmd_replicate(args),
        Command::ToyDemo(args) => cmd_toy_demo(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn gen_toy(n: usize, seed: u64, out: Option<PathBuf>) -> CliResult<()> {
    let out = out.unwrap_or_else(|| PathBuf::from(format!("sigmoid_{n}_{seed}.csv")));
    let ds = make_sigmoid_dataset(n, seed)?;
    write_csv(&ds, &out, "y")?;
    println!("wrote {n} rows to {}", out.display());
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment.
fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            ))
        })?;
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(usage(format!(
                "{}:{}: unknown key `{key}`",
                path.display(),
                i + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

const CONFIG_KEYS: &[&str] = &[
    "data",
    "label-col",
    "delimiter",
    "ignore-cols",
    "init-fraction",
    "round-fraction",
    "stop-fraction",
    "split",
    "hidden",
    "drop-prob",
    "lr",
    "epochs",
    "batch-size",
    "patience",
    "bald-passes",
    "format",
];

fn parse_list<T: FromStr>(key: &str, s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("--{key}: cannot parse `{p}`")))
        })
        .collect()
}

/// Experiment settings after merging flags, the config file and defaults.
struct Resolved {
    dataset: Dataset,
    config: ExperimentConfig,
    format: ExportFormat,
}

fn resolve(exp: ExperimentArgs) -> CliResult<Resolved> {
    let file = match &exp.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    // flag value, else config-file value, else `None`
    macro_rules! pick {
        ($field:ident, $key:literal) => {
            match exp.$field {
                Some(v) => Some(v),
                None => match file.get($key) {
                    Some(raw) => Some(
                        raw.parse()
                            .map_err(|_| usage(format!("{}: cannot parse `{raw}`", $key)))?,
                    ),
                    None => None,
                },
            }
        };
    }
    let data: Option<PathBuf> = pick!(data, "data");
    let label: Option<String> = pick!(label_col, "label-col");
    let delimiter: Option<char> = pick!(delimiter, "delimiter");
    let ignore: Option<String> = pick!(ignore_cols, "ignore-cols");
    let split: Option<String> = pick!(split, "split");
    let hidden: Option<String> = pick!(hidden, "hidden");
    let format = match exp.format {
        Some(f) => f,
        None => match file.get("format") {
            Some(raw) => FormatArg::from_str(raw, true)
                .map_err(|_| usage(format!("format: unknown `{raw}`")))?,
            None => FormatArg::Csv,
        },
    };

    let data = data.ok_or_else(|| usage("--data is required"))?;
    let label = label.ok_or_else(|| usage("--label-col is required"))?;
    let delimiter = delimiter.unwrap_or(',');
    if !delimiter.is_ascii() {
        return Err(usage("--delimiter must be a single ASCII character"));
    }
    let ignore = ignore.unwrap_or_else(|| "quadrant".into());
    let opts = CsvOptions {
        label: LabelColumn::from_str(&label).expect("infallible"),
        delimiter: delimiter as u8,
        ignore: ignore
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    let dataset = load_csv(&data, &opts)?;

    let mut config = ExperimentConfig {
        dataset: data.display().to_string(),
        ..ExperimentConfig::default()
    };
    if let Some(v) = pick!(init_fraction, "init-fraction") {
        config.init_fraction = v;
    }
    if let Some(v) = pick!(round_fraction, "round-fraction") {
        config.round_fraction = v;
    }
    if let Some(v) = pick!(stop_fraction, "stop-fraction") {
        config.stop_fraction = v;
    }
    if let Some(s) = split {
        let r: Vec<f64> = parse_list("split", &s)?;
        config.split_ratios = r
            .try_into()
            .map_err(|_| usage("--split needs three ratios"))?;
    }
    if let Some(h) = hidden {
        config.hidden_dims = parse_list("hidden", &h)?;
    }
    if let Some(v) = pick!(drop_prob, "drop-prob") {
        config.drop_prob = v;
    }
    if let Some(v) = pick!(lr, "lr") {
        config.train.learning_rate = v;
    }
    if let Some(v) = pick!(epochs, "epochs") {
        config.train.max_epochs = v;
    }
    if let Some(v) = pick!(batch_size, "batch-size") {
        config.train.batch_size = v;
    }
    if let Some(v) = pick!(patience, "patience") {
        config.train.patience = v;
    }
    let passes: usize = pick!(bald_passes, "bald-passes").unwrap_or(DEFAULT_BALD_PASSES);
    config.strategies = config
        .strategies
        .iter()
        .map(|s| match s {
            StrategyKind::Bald { .. } => StrategyKind::Bald { passes },
            other => *other,
        })
        .collect();
    Ok(Resolved {
        dataset,
        config,
        format: format.into(),
    })
}

fn strategy_kind(name: &str, config: &ExperimentConfig) -> CliResult<StrategyKind> {
    let kind: StrategyKind = name.parse().map_err(|e: Error| usage(e.to_string()))?;
    // carry the resolved BALD pass count
    Ok(config
        .strategies
        .iter()
        .copied()
        .find(|k| k.name() == kind.name())
        .unwrap_or(kind))
}

fn extension(format: ExportFormat) -> &'static str {
    match format {
        ExportFormat::Csv => "csv",
        ExportFormat::JsonLines => "jsonl",
    }
}

fn report_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let Resolved {
        dataset,
        mut config,
        format,
    } = resolve(args.exp)?;
    let name = args
        .strategy
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string();
    let kind = strategy_kind(&name, &config)?;
    config.strategies = vec![kind];
    config.n_runs = 1;
    config.base_seed = args.seed;
    config.validate()?;

    let out = args.out.unwrap_or_else(|| {
        PathBuf::from(format!("curve_{name}_{}.{}", args.seed, extension(format)))
    });
    if let Some(dir) = &args.diagnostics_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))?;
    }

    let data = prepare(&dataset, &config, args.seed)?;
    let diag_dir = args.diagnostics_dir.clone();
    let mut observer = |round: usize, _: &_, sel: &_| match &diag_dir {
        Some(dir) => write_diagnostics_csv(sel, &dir.join(format!("round_{round}.csv"))),
        None => Ok(()),
    };
    let curve = run_active_learning_observed(&config, &data, kind, args.seed, &mut observer)?;
    export_results(std::slice::from_ref(&curve), &out, format, Some(&config))?;
    report_warnings(&curve.metadata.warnings);

    let last = curve.points.last().expect("curves have an initial point");
    println!(
        "{name} seed {}: {} rounds, labeled fraction {:.4}, final AUC {:.4} -> {}",
        args.seed,
        curve.points.len() - 1,
        last.labeled_fraction,
        last.test_auc,
        out.display()
    );
    Ok(())
}

fn cmd_replicate(args: ReplicateArgs) -> CliResult<()> {
    let Resolved {
        dataset,
        mut config,
        format,
    } = resolve(args.exp)?;
    let names: Vec<String> = if args.strategies.trim() == "all" {
        StrategyKind::NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        args.strategies
            .split(',')
            .map(|s| s.trim().to_string())
            .collect()
    };
    let mut kinds = Vec::with_capacity(names.len());
    for n in &names {
        let k = strategy_kind(n, &config)?;
        if kinds.contains(&k) {
            return Err(usage(format!("strategy `{n}` listed twice")));
        }
        kinds.push(k);
    }
    config.strategies = kinds;
    config.n_runs = args.runs;
    config.base_seed = args.base_seed;
    config.validate()?;
    let jobs = match args.jobs {
        Some(0) => return Err(usage("--jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    let result = replicate(&config, &dataset, jobs)?;
    let raw_dir = args.out_dir.join("raw");
    std::fs::create_dir_all(&raw_dir)
        .map_err(|e| Failure::Data(format!("{}: {e}", raw_dir.display())))?;
    let ext = extension(format);
    for s in &result.strategies {
        let path = args.out_dir.join(format!("median_{}.{ext}", s.strategy));
        export_results(
            std::slice::from_ref(&s.median),
            &path,
            format,
            Some(&config),
        )?;
        for (i, c) in s.raw.iter().enumerate() {
            let path = raw_dir.join(format!("{}_run{i}_seed{}.{ext}", s.strategy, c.seed));
            export_results(std::slice::from_ref(c), &path, format, Some(&config))?;
        }
        report_warnings(&s.median.metadata.warnings);
    }

    println!("{:<8} {:>10}", "strategy", "final AUC");
    for s in &result.strategies {
        let auc = s.median.final_auc().unwrap_or(f64::NAN);
        println!("{:<8} {:>10.4}", s.strategy, auc);
    }
    println!(
        "{} median and {} raw curves in {}",
        result.strategies.len(),
        result.raw_curves().count(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_toy_demo(args: ToyArgs) -> CliResult<()> {
    let seeds: Vec<u64> = (0..args.seeds)
        .map(|i| args.base_seed.wrapping_add(i))
        .collect();
    let mut cfg = ToyDemoConfig {
        n: args.n,
        seeds: seeds.clone(),
        clusters: args.clusters,
        ..ToyDemoConfig::default()
    };
    cfg.experiment.drop_prob = args.drop_prob;
    cfg.experiment.validate()?;
    let report = toy_region_demo(&cfg)?;
    let single = seeds.len() == 1;

    let mut csv = String::from("representation,seed,triangle_purity,quadrant_purity\n");
    for row in &report.rows {
        for (i, s) in seeds.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{s},{:.16e},{:.16e}",
                row.representation, row.per_seed[i], row.quadrant_per_seed[i]
            );
        }
        if !single {
            let _ = writeln!(
                csv,
                "{},median,{:.16e},{:.16e}",
                row.representation, row.median, row.quadrant_median
            );
        }
    }
    write_atomic(&args.out, csv.as_bytes())?;

    let label = if single { "purity" } else { "median purity" };
    println!("{:<10} {:>14} {:>16}", "repr", label, "quadrant purity");
    for row in &report.rows {
        println!(
            "{:<10} {:>14.4} {:>16.4}",
            row.representation.name(),
            row.median,
            row.quadrant_median
        );
    }
    println!("per-seed values in {}", args.out.display());

    let g = report.median(Representation::InputGradient);
    let e = report.median(Representation::LastLayerEmbedding);
    if report.gradient_beats_embedding() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient purity {g:.4} does not exceed embedding purity {e:.4}"
        )))
    }
}
