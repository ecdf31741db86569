mod input;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasitest::rng::{derive_seed, stream_rng, Stream};
use quasitest::simgen::{format_power_table, preset, write_power_csv, PRESET_NAMES};
use quasitest::{
    build_weight_matrix, calibrate_censoring, estimate_marginals_qi, run_test, sample_permutations_mcmc, sis_sample,
    BiasFunction, BiasSpec, BiasedSampler, DiscreteCDF, Error, ExpectedMode, GeneratorSpec, MarginalEstimator,
    McmcConfig, PermutationDraws, PowerRow, Sample, SisScheme, StatisticKind, TestConfig, TestMethod,
};
use serde::{Deserialize, Serialize};

use input::{read_input, sha256_hex, Input, InputSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "quasitest", version, about = "Tests of quasi-independence under biased sampling")]
struct Cli {
    /// Write a run manifest (resolved configuration, seed, version, input digest) here.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(flatten)]
    Job(Job),
    /// Re-run the job recorded in a manifest.
    Replay {
        /// Manifest written by an earlier `--manifest` run.
        file: PathBuf,
    },
}

#[derive(Subcommand, Serialize, Deserialize, Debug, Clone)]
#[serde(rename_all = "kebab-case")]
enum Job {
    /// Run a test of quasi-independence and print a JSON report.
    Test(TestArgs),
    /// Estimate the marginal distributions and print them as CSV.
    Marginals(MarginalsArgs),
    /// Run a power study and write a CSV of rejection rates.
    Simulate(SimulateArgs),
    /// Draw permutations and export them for diagnostics and plotting.
    Draws(DrawsArgs),
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
struct InputArgs {
    /// CSV with columns x, y and optionally delta.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// The file has no header row; columns are read as x, y[, delta].
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
struct TestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// truncation | sum | const[:c] | gauss-prod:rho | strip:delta | huji[:cap:horizon] | censoring | table:path
    #[arg(long, default_value = "truncation")]
    bias: String,
    /// perm-mcmc | perm-is:{uniform,monotone,grid,kou-mccullagh,exact} | bootstrap:{qi,npmle,exchangeable}
    #[arg(long, default_value = "perm-mcmc")]
    method: String,
    /// hoeffding | iw
    #[arg(long, default_value = "hoeffding")]
    statistic: String,
    #[arg(long = "B", visible_alias = "b", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// MCMC steps between retained draws (default 2n).
    #[arg(long)]
    thin: Option<usize>,
    /// Use empirical marginals for the expected counts (diagnostic).
    #[arg(long)]
    naive_expected: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
struct MarginalsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "truncation")]
    bias: String,
    /// qi | npmle | exchangeable
    #[arg(long, default_value = "qi")]
    estimator: String,
    #[arg(long, default_value_t = quasitest::marginals::DEFAULT_QI_EPS)]
    eps: f64,
    #[arg(long, default_value_t = quasitest::marginals::DEFAULT_QI_MAX_ITER)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
struct SimulateArgs {
    /// Named row set (see --help for the list).
    #[arg(long, conflicts_with = "config", required_unless_present = "config", help = preset_help())]
    preset: Option<String>,
    /// JSON file with a `rows` array of {model, generator, bias, method, statistic, n, censored}.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "B", visible_alias = "b", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep only the first N rows.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn preset_help() -> String {
    format!("Named row set: {}", PRESET_NAMES.join(", "))
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
struct DrawsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "truncation")]
    bias: String,
    /// mcmc | is:{uniform,monotone,grid,kou-mccullagh,exact}
    #[arg(long, default_value = "mcmc")]
    sampler: String,
    /// Number of draws besides the identity (MCMC) or number of draws (IS).
    #[arg(long = "B", visible_alias = "b", default_value_t = 100)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    thin: Option<usize>,
    /// Draw summary CSV (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format scatter export `draw,i,x,y` of the permuted pairs.
    #[arg(long)]
    scatter: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    job: Job,
    input_digest: Option<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InfeasibleSample { .. }
        | Error::NonTruncatedInput { .. }
        | Error::InvalidSample(_)
        | Error::EmptyInput
        | Error::TooFewUncensored { .. }
        | Error::LengthMismatch { .. }
        | Error::ZeroWeightAtPoint { .. }
        | Error::Parse { .. } => EXIT_DATA,
        Error::DegenerateLaw
        | Error::AllDrawsDead
        | Error::ZeroTotalWeight
        | Error::NoValidCenters
        | Error::ZeroNormalizer
        | Error::ZeroConditionalExpectation { .. }
        | Error::AcceptanceTooLow { .. }
        | Error::BoundViolated { .. }
        | Error::OracleTooLarge { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// A resolved bias and the sample it applies to. `rows[i]` is the input row
/// of observation `i` of `sample`.
struct Prepared {
    input: Input,
    bias: BiasFunction,
    sample: Sample,
    rows: Vec<usize>,
    censoring: bool,
}

impl Prepared {
    fn load(args: &InputArgs, bias: &str) -> CliResult<Self> {
        let spec: BiasSpec = bias.parse()?;
        if !args.delimiter.is_ascii() {
            return Err(Failure::usage("delimiter must be a single ASCII character"));
        }
        let input =
            read_input(&InputSpec { path: &args.input, delimiter: args.delimiter as u8, has_header: !args.no_header })?;
        let (bias, sample) = spec
            .resolve(&input.sample)
            .map_err(|e| data_failure(&input, &(0..input.sample.len()).collect::<Vec<_>>(), e))?;
        let censoring = spec == BiasSpec::Censoring;
        let rows = match spec {
            BiasSpec::Censoring => input
                .sample
                .observations()
                .iter()
                .enumerate()
                .filter(|(_, o)| o.delta == Some(true))
                .map(|(i, _)| i)
                .collect(),
            BiasSpec::Fixed(_) => (0..input.sample.len()).collect(),
        };
        Ok(Prepared { input, bias, sample, rows, censoring })
    }

    fn fail(&self, e: Error) -> Failure {
        data_failure(&self.input, &self.rows, e)
    }
}

fn data_failure(input: &Input, rows: &[usize], e: Error) -> Failure {
    let code = exit_code(&e);
    let message = match &e {
        Error::InfeasibleSample { row } | Error::ZeroWeightAtPoint { index: row } => format!(
            "{} has zero weight under the bias function; the sample is infeasible",
            input.describe_row(rows.get(*row).copied().unwrap_or(*row))
        ),
        Error::NonTruncatedInput { row } => {
            format!(
                "{} violates x < y required by left truncation",
                input.describe_row(rows.get(*row).copied().unwrap_or(*row))
            )
        }
        _ => e.to_string(),
    };
    Failure { code, message }
}

fn open_out(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn io_fail(e: io::Error) -> Failure {
    Failure::usage(format!("write failed: {e}"))
}

fn cmd_test(a: &TestArgs) -> CliResult<Option<String>> {
    let method: TestMethod = a.method.parse()?;
    let statistic: StatisticKind = a.statistic.parse()?;
    let p = Prepared::load(&a.input, &a.bias)?;
    let mut cfg = TestConfig::new(method, a.b, a.seed).with_statistic(statistic);
    cfg.mcmc.m = a.thin;
    if a.naive_expected {
        cfg.expected_mode = ExpectedMode::NaiveEmpirical;
    }
    let mut report = run_test(&p.sample, &p.bias, &cfg).map_err(|e| p.fail(e))?;
    if p.censoring {
        report.diagnostics.uncensored_n = Some(p.sample.len());
    }
    let mut out = open_out(a.out.as_deref())?;
    writeln!(out, "{}", report.to_json()).map_err(io_fail)?;
    out.flush().map_err(io_fail)?;
    Ok(Some(p.input.digest))
}

fn write_cdf<W: Write>(w: &mut csv::Writer<W>, variable: &str, f: &DiscreteCDF) -> csv::Result<()> {
    for ((v, m), c) in f.support().iter().zip(f.mass()).zip(f.cumulative()) {
        w.write_record([variable, &v.to_string(), &m.to_string(), &c.to_string()])?;
    }
    Ok(())
}

fn cmd_marginals(a: &MarginalsArgs) -> CliResult<Option<String>> {
    let estimator: MarginalEstimator = a.estimator.parse()?;
    let p = Prepared::load(&a.input, &a.bias)?;
    estimator.check_applicable(&p.sample, &p.bias)?;
    let (fx, fy) = match estimator {
        MarginalEstimator::QuasiIndependence => {
            let (fx, fy, trace) =
                estimate_marginals_qi(&p.sample, &p.bias, a.eps, a.max_iter).map_err(|e| p.fail(e))?;
            if !trace.converged {
                log::warn!("estimator did not converge in {} iterations", trace.iterations);
            }
            (fx, fy)
        }
        other => other.estimate(&p.sample, &p.bias).map_err(|e| p.fail(e))?,
    };
    let csv_fail = |e: csv::Error| Failure::usage(format!("write failed: {e}"));
    let mut w = csv::Writer::from_writer(open_out(a.out.as_deref())?);
    w.write_record(["variable", "value", "mass", "cdf"]).map_err(csv_fail)?;
    write_cdf(&mut w, "x", &fx).map_err(csv_fail)?;
    write_cdf(&mut w, "y", &fy).map_err(csv_fail)?;
    w.flush().map_err(io_fail)?;
    Ok(Some(p.input.digest))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyConfig {
    rows: Vec<StudyRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyRow {
    model: Option<String>,
    generator: String,
    #[serde(default = "default_bias")]
    bias: String,
    #[serde(default = "default_method")]
    method: String,
    #[serde(default = "default_statistic")]
    statistic: String,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default)]
    censored: bool,
}

fn default_bias() -> String {
    "truncation".into()
}
fn default_method() -> String {
    "perm-mcmc".into()
}
fn default_statistic() -> String {
    "hoeffding".into()
}
fn default_n() -> usize {
    100
}

fn config_rows(path: &Path, b: usize, seed: u64) -> CliResult<(Vec<PowerRow>, String)> {
    let bytes = fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let cfg: StudyConfig =
        serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, r) in cfg.rows.iter().enumerate() {
        let generator: GeneratorSpec = r.generator.parse()?;
        let bias = match r.bias.parse::<BiasSpec>()? {
            BiasSpec::Fixed(b) => b,
            BiasSpec::Censoring => return Err(Failure::usage("use `censored: true` with a truncation bias instead")),
        };
        let tc = TestConfig::new(r.method.parse()?, b, seed).with_statistic(r.statistic.parse()?);
        let sampler = BiasedSampler::new(generator, bias);
        let mut row = PowerRow::new(sampler, tc, r.n);
        if let Some(m) = &r.model {
            row = row.labelled(m.clone());
        }
        if r.censored {
            let mut rng = stream_rng(derive_seed(seed, k as u64), Stream::Calibration);
            let (c, achieved) = calibrate_censoring(
                &row.sampler,
                quasitest::simgen::DEFAULT_CENSORING_SHAPE,
                quasitest::simgen::TARGET_CENSORING_RATE,
                &mut rng,
            )?;
            log::info!("{}: censoring rate {achieved:.3}", row.model);
            row.censoring = Some(c);
        }
        rows.push(row);
    }
    Ok((rows, sha256_hex(&bytes)))
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult<Option<String>> {
    if !(a.alpha > 0.0 && a.alpha <= 1.0) {
        return Err(Failure::usage("alpha must lie in (0, 1]"));
    }
    let (mut rows, digest) = match (&a.preset, &a.config) {
        (Some(name), _) => (preset(name, a.b, a.seed)?, None),
        (None, Some(path)) => {
            let (r, d) = config_rows(path, a.b, a.seed)?;
            (r, Some(d))
        }
        (None, None) => return Err(Failure::usage("either --preset or --config is required")),
    };
    if let Some(k) = a.limit {
        rows.truncate(k);
    }
    let results = quasitest::power_table(&rows, a.alpha, a.reps);
    eprint!("{}", format_power_table(&results));
    write_power_csv(&results, open_out(a.out.as_deref())?)?;
    Ok(digest)
}

fn draw(p: &Prepared, a: &DrawsArgs) -> CliResult<PermutationDraws> {
    let w = build_weight_matrix(&p.sample, &p.bias).map_err(|e| p.fail(e))?;
    let lower = a.sampler.to_ascii_lowercase();
    let draws = match lower.split_once(':') {
        None if lower == "mcmc" => {
            let mut cfg = McmcConfig::new(a.b + 1, a.seed);
            cfg.m = a.thin;
            sample_permutations_mcmc(&w, &cfg)
        }
        Some(("is", scheme)) => sis_sample(&w, scheme.parse::<SisScheme>()?, a.b, a.seed),
        _ => return Err(Failure::usage(format!("unknown sampler `{}`", a.sampler))),
    };
    draws.map_err(|e| p.fail(e))
}

fn cmd_draws(a: &DrawsArgs) -> CliResult<Option<String>> {
    let p = Prepared::load(&a.input, &a.bias)?;
    let d = draw(&p, a)?;
    d.write_csv(open_out(a.out.as_deref())?)?;
    if let Some(path) = &a.scatter {
        let file = File::create(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let csv_fail = |e: csv::Error| Failure::usage(format!("write failed: {e}"));
        w.write_record(["draw", "i", "x", "y"]).map_err(csv_fail)?;
        for (k, pi) in d.permutations.iter().enumerate() {
            for (i, &j) in pi.as_slice().iter().enumerate() {
                let rec = [k.to_string(), i.to_string(), p.sample.x(i).to_string(), p.sample.y(j).to_string()];
                w.write_record(&rec).map_err(csv_fail)?;
            }
        }
        w.flush().map_err(io_fail)?;
    }
    let diag = serde_json::json!({
        "sampler": d.sampler,
        "draws": d.len(),
        "acceptance_rate": d.acceptance_rate,
        "weight_cv": d.weight_cv(),
        "dead_ends": d.dead_ends,
    });
    eprintln!("{diag}");
    Ok(Some(p.input.digest))
}

fn run_job(job: &Job) -> CliResult<Option<String>> {
    match job {
        Job::Test(a) => cmd_test(a),
        Job::Marginals(a) => cmd_marginals(a),
        Job::Simulate(a) => cmd_simulate(a),
        Job::Draws(a) => cmd_draws(a),
    }
}

fn write_manifest(path: &Path, job: &Job, digest: Option<String>) -> CliResult<()> {
    let m = Manifest { version: env!("CARGO_PKG_VERSION").to_string(), job: job.clone(), input_digest: digest };
    let text = serde_json::to_string_pretty(&m).expect("manifest serialises");
    fs::write(path, text + "\n").map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn replay(path: &Path) -> CliResult<(Job, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let m: Manifest = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: invalid manifest: {e}", path.display())))?;
    if m.version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest was written by version {}, running {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    let digest = run_job(&m.job)?;
    if m.input_digest.is_some() && digest != m.input_digest {
        return Err(Failure {
            code: EXIT_DATA,
            message: "input file changed since the manifest was written (digest mismatch)".into(),
        });
    }
    Ok((m.job, digest))
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("QUASITEST_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::usage(format!("QUASITEST_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Job(job) => run_job(job).map(|d| (job.clone(), d)),
        Command::Replay { file } => replay(file),
    });
    let result = result.and_then(|(job, digest)| match &cli.manifest {
        Some(path) => write_manifest(path, &job, digest),
        None => Ok(()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
