//! `ara`: generate report corpora, build the central store, analyze
//! batches and run Table-style evaluations.
//!
//! Exit codes: 0 success, 1 analysis or ingest failure, 2 usage error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ara_core::analysis::{
    achievement_size_correlation, analyze_batch, ground_truth_major, write_results_csv, Experiment,
};
use ara_core::constants::{verify_constant_rule, DEFAULT_AUDIT_SIZES, PUBLISHED_TABLE_32};
use ara_core::fleet::{DEFAULT_RATE, DEFAULT_VALUE_COUNT};
use ara_core::{
    build_constant_table, generate_corpus, read_csv, write_csv, CentralStore, ClientReport,
    EncodingParams, FleetConfig,
};
use clap::{Args, Parser, Subcommand};

/// Offset that separates the test fleet's seed from the training seed.
const TEST_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Parser)]
#[command(
    name = "ara",
    version,
    about = "Local-to-central RAPPOR report aggregation"
)]
struct Cli {
    #[command(flatten)]
    encoding: EncodingArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EncodingArgs {
    /// Report width in bits
    #[arg(long, global = true, default_value_t = 32)]
    k: u32,
    /// Bloom hash count
    #[arg(long, global = true, default_value_t = 2)]
    h: u32,
    /// Cohort count
    #[arg(long, global = true, default_value_t = 64)]
    m: u32,
    /// Permanent-response noise probability
    #[arg(long, global = true, default_value_t = 0.5)]
    f: f64,
    /// Instantaneous P(1) where the PRR bit is 0
    #[arg(long, global = true, default_value_t = 0.5)]
    p: f64,
    /// Instantaneous P(1) where the PRR bit is 1
    #[arg(long, global = true, default_value_t = 0.75)]
    q: f64,
}

impl EncodingArgs {
    fn params(&self) -> EncodingParams {
        EncodingParams {
            k: self.k,
            h: self.h,
            m: self.m,
            f: self.f,
            p: self.p,
            q: self.q,
        }
    }
}

#[derive(Args)]
struct FleetArgs {
    /// Exponential decay rate of the value distribution
    #[arg(long, default_value_t = DEFAULT_RATE)]
    lambda: f64,
    /// Number of distinct values (v1..vN)
    #[arg(long, default_value_t = DEFAULT_VALUE_COUNT)]
    values: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled report corpus
    Generate {
        /// Number of clients
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fleet: FleetArgs,
    },
    /// Ingest a labeled corpus into a central store file
    BuildDb {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match a batch of reports against a store
    Analyze {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Drop true values from the batch before analysis
        #[arg(long)]
        strip_labels: bool,
        /// Per-label credit CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on one fleet and run repeated batch tests against another
    Eval {
        #[arg(long, default_value_t = 40)]
        tests: usize,
        /// Batch size, or a comma-separated list (tests run per size)
        #[arg(long, value_delimiter = ',', default_value = "1000")]
        batch: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 25_000)]
        n_train: usize,
        #[arg(long, default_value_t = 25_000)]
        n_test: usize,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[command(flatten)]
        fleet: FleetArgs,
    },
    /// Audit the constant table and the constant/sample-size rule
    VerifyConstants {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_AUDIT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Run(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn usage(err: impl ToString) -> Failure {
    Failure::Usage(err.to_string())
}

fn run_err(err: impl ToString) -> Failure {
    Failure::Run(err.to_string())
}

fn with_path(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| run_err(format!("{}: {e}", path.display()))
}

fn load_corpus(path: &Path, params: &EncodingParams) -> Result<Vec<ClientReport>, Failure> {
    let file = File::open(path).map_err(with_path(path))?;
    read_csv(BufReader::new(file), params).map_err(|e| run_err(format!("{}: {e}", path.display())))
}

fn fleet_config(
    n: usize,
    seed: u64,
    fleet: &FleetArgs,
    params: EncodingParams,
) -> Result<FleetConfig, Failure> {
    FleetConfig::exponential(n, fleet.values, fleet.lambda, seed, params).map_err(usage)
}

fn cmd_generate(
    params: EncodingParams,
    n: u64,
    seed: u64,
    out: &Path,
    fleet: &FleetArgs,
) -> CmdResult {
    let config = fleet_config(n as usize, seed, fleet, params)?;
    let reports = generate_corpus(&config).map_err(run_err)?;
    let file = File::create(out).map_err(with_path(out))?;
    write_csv(&reports, BufWriter::new(file)).map_err(run_err)?;
    eprintln!("wrote {} reports to {}", reports.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_build_db(params: EncodingParams, corpus: &Path, out: &Path) -> CmdResult {
    let reports = load_corpus(corpus, &params)?;
    let table = build_constant_table(params.k).map_err(usage)?;
    let mut store = CentralStore::new(&params);
    for (i, report) in reports.iter().enumerate() {
        store
            .ingest(report, &table)
            .map_err(|e| run_err(format!("{}: line {}: {e}", corpus.display(), i + 2)))?;
    }
    let file = File::create(out).map_err(with_path(out))?;
    store.save(BufWriter::new(file)).map_err(run_err)?;
    eprintln!(
        "stored {} reports under {} keys in {}",
        store.total_training_reports(),
        store.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(
    params: EncodingParams,
    batch_path: &Path,
    store_path: &Path,
    strip_labels: bool,
    out: Option<&Path>,
) -> CmdResult {
    let mut batch = load_corpus(batch_path, &params)?;
    if batch.is_empty() {
        return Err(usage(format!("{}: empty batch", batch_path.display())));
    }
    if strip_labels {
        batch = batch.into_iter().map(ClientReport::unlabeled).collect();
    }
    let file = File::open(store_path).map_err(with_path(store_path))?;
    let store = CentralStore::load(BufReader::new(file), &params)
        .map_err(|e| run_err(format!("{}: {e}", store_path.display())))?;
    let table = build_constant_table(params.k).map_err(usage)?;
    let report = analyze_batch(&batch, &store, &table).map_err(run_err)?;

    let stdout = io::stdout();
    let mut w = stdout.lock();
    let print = |w: &mut io::StdoutLock, line: String| writeln!(w, "{line}").map_err(run_err);
    print(&mut w, format!("sample size:     {}", report.sample_size))?;
    print(&mut w, format!("matched:         {}", report.matched))?;
    for (label, credits) in &report.credits {
        print(&mut w, format!("  {label}: {credits}"))?;
    }
    print(&mut w, format!("major value:     {}", report.major_value))?;
    print(
        &mut w,
        format!("achievement pct: {:.2}", report.achievement_pct),
    )?;
    if batch.iter().any(|r| r.true_value.is_some()) {
        print(
            &mut w,
            format!("ground truth:    {}", ground_truth_major(&batch)),
        )?;
    }

    if let Some(path) = out {
        let mut file = BufWriter::new(File::create(path).map_err(with_path(path))?);
        let write = |file: &mut BufWriter<File>| -> io::Result<()> {
            writeln!(file, "label,credits,share_pct")?;
            for (label, credits) in &report.credits {
                let share = 100.0 * *credits as f64 / report.sample_size as f64;
                writeln!(file, "{label},{credits},{share}")?;
            }
            file.flush()
        };
        write(&mut file).map_err(with_path(path))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    params: EncodingParams,
    tests: usize,
    batch_sizes: &[usize],
    seed: u64,
    n_train: usize,
    n_test: usize,
    out: &Path,
    fleet: &FleetArgs,
) -> CmdResult {
    if tests == 0 || batch_sizes.is_empty() {
        return Err(usage("need at least one test and one batch size"));
    }
    if let Some(&size) = batch_sizes.iter().find(|&&s| s == 0 || s > n_test) {
        return Err(usage(format!("batch size {size} outside [1, {n_test}]")));
    }
    let train = fleet_config(n_train, seed, fleet, params)?;
    let test = fleet_config(n_test, seed.wrapping_add(TEST_SEED_OFFSET), fleet, params)?;
    let experiment = Experiment::prepare(&train, &test).map_err(run_err)?;
    let rows = experiment.run_sizes(tests, batch_sizes).map_err(run_err)?;
    write_results_csv(&rows, out).map_err(|e| run_err(format!("{}: {e}", out.display())))?;

    let correct = rows.iter().filter(|r| r.detected_correctly).count();
    let mean = rows.iter().map(|r| r.achievement_pct).sum::<f64>() / rows.len() as f64;
    println!("tests:            {}", rows.len());
    println!("detected:         {correct}/{}", rows.len());
    println!("mean achievement: {mean:.2}");
    if let Some(rho) = achievement_size_correlation(&rows) {
        println!("size/achievement rank correlation: {rho:.3}");
    }
    println!("results:          {}", out.display());
    Ok(if correct == rows.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_verify_constants(
    params: EncodingParams,
    corpus: &Path,
    sizes: &[usize],
    seed: u64,
) -> CmdResult {
    let table = build_constant_table(params.k).map_err(usage)?;
    if params.k == 32 {
        println!("count  reconstructed  published    |delta|");
        let mut max_delta: f64 = 0.0;
        for (count, published) in PUBLISHED_TABLE_32 {
            let value = table.constant_for_count(count).map_err(run_err)?;
            let delta = (value - published).abs();
            max_delta = max_delta.max(delta);
            println!("{count:>5}  {value:>13.8}  {published:>10.8}  {delta:.2e}");
        }
        println!("max |delta| = {max_delta:.2e}");
    }

    let reports = load_corpus(corpus, &params)?;
    let checks = match verify_constant_rule(&reports, sizes, &table, seed) {
        Ok(checks) => checks,
        Err(
            e @ (ara_core::Error::SampleTooLarge { .. }
            | ara_core::Error::ZeroSampleSize
            | ara_core::Error::EmptyCorpus),
        ) => return Err(usage(e)),
        Err(e) => return Err(run_err(e)),
    };
    println!("count  sizes observed  max relative deviation");
    let mut worst: f64 = 0.0;
    for check in &checks {
        worst = worst.max(check.max_relative_deviation);
        println!(
            "{:>5}  {:>14}  {:.2e}",
            check.count,
            check.sample_sizes.len(),
            check.max_relative_deviation
        );
    }
    println!("worst deviation = {worst:.2e}");
    Ok(if worst < 1e-12 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run(cli: Cli) -> CmdResult {
    let params = cli.encoding.params();
    params.validate().map_err(usage)?;
    match &cli.command {
        Command::Generate {
            n,
            seed,
            out,
            fleet,
        } => cmd_generate(params, *n, *seed, out, fleet),
        Command::BuildDb { corpus, out } => cmd_build_db(params, corpus, out),
        Command::Analyze {
            batch,
            store,
            strip_labels,
            out,
        } => cmd_analyze(params, batch, store, *strip_labels, out.as_deref()),
        Command::Eval {
            tests,
            batch,
            seed,
            n_train,
            n_test,
            out,
            fleet,
        } => cmd_eval(params, *tests, batch, *seed, *n_train, *n_test, out, fleet),
        Command::VerifyConstants {
            corpus,
            sizes,
            seed,
        } => cmd_verify_constants(params, corpus, sizes, *seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(failure) => {
            let (Failure::Usage(msg) | Failure::Run(msg)) = &failure;
            eprintln!("ara: {msg}");
            ExitCode::from(failure.code())
        }
    }
}
