mod io;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pmd::bench::{accuracy_study, timing_study, write_timing_csv, Study, StudyConfig, TimingConfig};
use pmd::confusion::{confusion_report, ClassifierOutput};
use pmd::exact::{cdf_at, pmf_full, ExactOptions, ExactPmd, DEFAULT_MEM_CAP_CELLS};
use pmd::mle::{
    fit, read_aggregated_groups, read_raw_groups, FitOptions, LikelihoodMethod, LikelihoodOptions,
};
use pmd::mvn::MvnOptions;
use pmd::normal::NormalApprox;
use pmd::sim::{sample, sim_pmf_at};
use pmd::spm::grid_cells;
use pmd::voting::{
    mode_of, q_mode_of, winner_probabilities, winner_probs_from_pmf, Method, MethodParams,
};
use pmd::{OutcomeVector, PmdError};

use crate::io::{num, open_output, read_spm, CliError};

#[derive(Parser)]
#[command(name = "pmd", version, about = "Poisson multinomial distribution toolkit")]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Largest pmf grid, in cells, the exact method may allocate.
    #[arg(long, global = true, default_value_t = DEFAULT_MEM_CAP_CELLS)]
    mem_cap_cells: u128,
    /// Suppress informational output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probability mass at a point, or the whole exact pmf.
    Pmf(PmfArgs),
    /// Cumulative probability P(X_j <= x_j for j < m).
    Cdf(CdfArgs),
    /// Draw count vectors.
    Sample(SampleArgs),
    /// Winner and tie probabilities, mode, and optional q-mode.
    Vote(VoteArgs),
    /// Fit softmax regression coefficients to aggregated counts.
    Fit(FitArgs),
    /// Prediction intervals for a soft classifier's confusion matrix.
    Confusion(ConfusionArgs),
    /// Accuracy and timing studies.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Na,
    Sim,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exact => Method::Exact,
            MethodArg::Na => Method::Na,
            MethodArg::Sim => Method::Sim,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PmfFormat {
    Csv,
    Binary,
}

#[derive(Args)]
struct SpmArg {
    /// SPM as CSV, one row per trial; a non-numeric first line is a header.
    #[arg(long)]
    spm: PathBuf,
}

#[derive(Args)]
struct PmfArgs {
    #[command(flatten)]
    spm: SpmArg,
    /// Counts "c1,...,cm"; omit for the whole pmf.
    #[arg(long)]
    x: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    /// Draws for --method sim.
    #[arg(long, default_value_t = 1_000_000)]
    b: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file for the whole pmf (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PmfFormat::Csv)]
    format: PmfFormat,
}

#[derive(Args)]
struct CdfArgs {
    #[command(flatten)]
    spm: SpmArg,
    #[arg(long)]
    x: String,
    /// exact or na.
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    spm: SpmArg,
    #[arg(long)]
    b: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write seed, b, n, m as JSON here.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct VoteArgs {
    #[command(flatten)]
    spm: SpmArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    #[arg(long, default_value_t = 1_000_000)]
    b: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also report the q-mode for this q in (0, 1).
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    /// Unit-level CSV: group_id, covariate_1..covariate_v, category.
    #[arg(long, conflicts_with_all = ["covariates", "counts"], required_unless_present = "covariates")]
    groups: Option<PathBuf>,
    /// Unit-level covariates CSV: group_id, covariate_1..covariate_v.
    #[arg(long, requires = "counts")]
    covariates: Option<PathBuf>,
    /// Per-group counts CSV: group_id, count_1..count_m.
    #[arg(long, requires = "covariates")]
    counts: Option<PathBuf>,
    /// Number of categories (default: largest category seen).
    #[arg(long)]
    m: Option<usize>,
    /// exact or na.
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 200)]
    max_params: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfusionArgs {
    /// CSV: true_label, p_1..p_m.
    #[arg(long)]
    probs: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Include every cell's marginal pmf.
    #[arg(long)]
    marginals: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Error of one method against a reference over random SPMs.
    Accuracy(AccuracyArgs),
    /// Wall-clock time of the exact pmf over an (n, m) grid.
    Timing(TimingArgs),
}

#[derive(Args)]
struct AccuracyArgs {
    /// binomial, poisson-binomial, enumeration, na-vs-exact, or sim-vs-exact.
    #[arg(long)]
    study: String,
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    b: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    ms: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let exact = ExactOptions::default().with_mem_cap(cli.mem_cap_cells);
    match &cli.command {
        Command::Pmf(a) => cmd_pmf(a, &exact),
        Command::Cdf(a) => cmd_cdf(a, &exact),
        Command::Sample(a) => cmd_sample(a),
        Command::Vote(a) => cmd_vote(a, &exact),
        Command::Fit(a) => cmd_fit(a, &exact),
        Command::Confusion(a) => cmd_confusion(a),
        Command::Bench(BenchCommand::Accuracy(a)) => cmd_accuracy(a, &exact, cli.quiet),
        Command::Bench(BenchCommand::Timing(a)) => cmd_timing(a, &exact, cli.quiet),
    }
}

fn parse_point(s: &str, spm: &pmd::Spm) -> Result<OutcomeVector, CliError> {
    Ok(OutcomeVector::for_spm(OutcomeVector::parse(s)?.counts().to_vec(), spm)?)
}

fn cmd_pmf(a: &PmfArgs, exact: &ExactOptions) -> Result<(), CliError> {
    let spm = read_spm(&a.spm.spm)?;
    let Some(xs) = &a.x else {
        if !matches!(a.method, MethodArg::Exact) {
            return Err(CliError::Usage("the whole pmf needs --method exact; give --x for na or sim".into()));
        }
        let pmf = pmf_full(&spm, exact)?;
        let mut out = open_output(a.out.as_deref())?;
        match a.format {
            PmfFormat::Csv => pmf.write_csv(&mut out)?,
            PmfFormat::Binary => pmf.write_binary(&mut out)?,
        }
        out.flush()?;
        return Ok(());
    };
    let x = parse_point(xs, &spm)?;
    match a.method {
        MethodArg::Exact => println!("{}", num(ExactPmd::new(spm, *exact).pmf_at(&x)?)),
        MethodArg::Na => {
            let est = NormalApprox::new(&spm)?.pmf_at(&x, &MvnOptions::default())?;
            println!("{}", num(est.value));
            println!("error {}", num(est.error));
        }
        MethodArg::Sim => {
            let est = sim_pmf_at(&spm, &x, a.b, a.seed)?;
            println!("{}", num(est.value));
            println!("bound {}", num(est.bound));
        }
    }
    Ok(())
}

fn cmd_cdf(a: &CdfArgs, exact: &ExactOptions) -> Result<(), CliError> {
    let spm = read_spm(&a.spm.spm)?;
    let x = OutcomeVector::parse(&a.x)?;
    match a.method {
        MethodArg::Exact => println!("{}", num(cdf_at(&spm, &x, exact)?)),
        MethodArg::Na => {
            let est = NormalApprox::new(&spm)?.cdf_at(&x, &MvnOptions::default())?;
            println!("{}", num(est.value));
            println!("error {}", num(est.error));
        }
        MethodArg::Sim => return Err(CliError::Usage("cdf supports --method exact or na".into())),
    }
    Ok(())
}

fn cmd_sample(a: &SampleArgs) -> Result<(), CliError> {
    let spm = read_spm(&a.spm.spm)?;
    let batch = sample(&spm, a.b, a.seed)?;
    let mut out = open_output(a.out.as_deref())?;
    batch.write_csv(&mut out)?;
    out.flush()?;
    if let Some(meta) = &a.meta {
        io::write_json(Some(meta), &batch.metadata())?;
    }
    Ok(())
}

fn cmd_vote(a: &VoteArgs, exact: &ExactOptions) -> Result<(), CliError> {
    let spm = read_spm(&a.spm.spm)?;
    let params = MethodParams {
        exact: *exact,
        b: a.b,
        seed: a.seed,
        ..MethodParams::default()
    };
    // The mode needs the exact pmf; with na or sim it is left out when the
    // grid is over the cap.
    let method: Method = a.method.into();
    let feasible = grid_cells(spm.n(), spm.m()).is_some_and(|c| c < exact.mem_cap_cells);
    let pmf = if feasible || method == Method::Exact {
        Some(pmf_full(&spm, exact)?)
    } else {
        None
    };
    let winners = match (&pmf, method) {
        (Some(pmf), Method::Exact) => winner_probs_from_pmf(pmf),
        _ => winner_probabilities(&spm, method, &params)?,
    };
    let mode = pmf.as_ref().map(mode_of);
    let q_mode = match (&pmf, a.q) {
        (Some(pmf), Some(q)) => Some(q_mode_of(pmf, q)?),
        _ => None,
    };
    let mut doc = json!({
        "winner_probs": winners.winner_probs,
        "tie_prob": winners.tie_prob,
        "mode": mode.map(|md| json!({"x": md.x.counts(), "p": md.p})),
    });
    if let Some(q) = a.q {
        doc["q_mode"] = json!({"q": q, "point": q_mode.map(|md| json!({"x": md.x.counts(), "p": md.p}))});
    }
    io::print_json(&doc)
}

fn cmd_fit(a: &FitArgs, exact: &ExactOptions) -> Result<(), CliError> {
    let data = match (&a.groups, &a.covariates, &a.counts) {
        (Some(g), _, _) => read_raw_groups(std::fs::File::open(g)?, a.m)?,
        (None, Some(c), Some(k)) => read_aggregated_groups(std::fs::File::open(c)?, std::fs::File::open(k)?)?,
        _ => return Err(CliError::Usage("give --groups, or --covariates with --counts".into())),
    };
    let method = match a.method {
        MethodArg::Exact => LikelihoodMethod::Exact,
        MethodArg::Na => LikelihoodMethod::Na,
        MethodArg::Sim => return Err(CliError::Usage("fit supports --method exact or na".into())),
    };
    let opts = FitOptions {
        likelihood: LikelihoodOptions {
            method,
            exact: *exact,
            mvn: MvnOptions::default(),
        },
        max_iter: a.max_iter,
        max_params: a.max_params,
        ..FitOptions::default()
    };
    let result = fit(&data.groups, &opts)?;
    let mut doc = result.to_json(Some(&data.names));
    doc["groups"] = json!(data.groups.len());
    io::write_json(a.out.as_deref(), &doc)
}

fn cmd_confusion(a: &ConfusionArgs) -> Result<(), CliError> {
    let out = ClassifierOutput::from_csv_path(&a.probs)?;
    let report = confusion_report(&out, a.level, a.marginals)?;
    io::write_json(a.out.as_deref(), &serde_json::to_value(&report)?)
}

fn cmd_accuracy(a: &AccuracyArgs, exact: &ExactOptions, quiet: bool) -> Result<(), CliError> {
    let study: Study = a.study.parse()?;
    let cfg = StudyConfig {
        replicates: a.replicates,
        seed: a.seed,
        b: a.b,
        exact: *exact,
        ..StudyConfig::new(study, a.ns.clone(), a.m)
    };
    let report = accuracy_study(&cfg)?;
    let mut out = open_output(a.out.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if !quiet {
        eprint!("{}", report.summary());
    }
    Ok(())
}

fn cmd_timing(a: &TimingArgs, exact: &ExactOptions, quiet: bool) -> Result<(), CliError> {
    let cfg = TimingConfig {
        ns: a.ns.clone(),
        ms: a.ms.clone(),
        replicates: a.replicates,
        seed: a.seed,
        exact: *exact,
    };
    let rows = timing_study(&cfg)?;
    let mut out = open_output(a.out.as_deref())?;
    write_timing_csv(&rows, &mut out)?;
    out.flush()?;
    if !quiet {
        eprintln!("{:>6} {:>3} {:>12}", "n", "m", "seconds");
        for r in &rows {
            match r.mean_seconds {
                Some(s) => eprintln!("{:>6} {:>3} {:>12.4}", r.n, r.m, s),
                None => eprintln!("{:>6} {:>3} {:>12}", r.n, r.m, "infeasible"),
            }
        }
    }
    Ok(())
}

impl From<PmdError> for CliError {
    fn from(e: PmdError) -> Self {
        CliError::Pmd(e)
    }
}
