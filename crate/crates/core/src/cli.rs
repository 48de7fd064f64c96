//! Command-line front end.
//!
//! Exit codes: 0 success, 1 data or I/O error, 2 invalid configuration,
//! 3 when discovery finds no candidate model.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::basis::{build_design_named, BasisKind, BasisSpec};
use crate::bench::{self, BenchConfig};
use crate::data::Dataset;
use crate::disptest::{TestContext, BOOTSTRAP, CHISQ};
use crate::edf::Family;
use crate::error::{Error, Result};
use crate::fit::{default_lambda_grid, select_lambda};
use crate::registry;
use crate::report::{ConfigEcho, RunReport, SubsetRecord, TestReport, Timing};
use crate::search::{check_target, discover, SearchConfig, FULL};
use crate::simulate::{self, ScmSpec, FIG4_DEFAULT_NOISE_VAR, FIG4_DEFAULT_PI};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CANDIDATE: i32 = 3;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CAUSAL_GLM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "causal-glm", version, about = "Causal parent discovery for GLM targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset from a built-in design or a JSON SEM spec.
    Simulate(SimulateArgs),
    /// Search for the causal parent set of a target column.
    Discover(DiscoverArgs),
    /// Fit and test a single covariate subset.
    Disptest(DisptestArgs),
    /// Run a benchmark experiment and write a CSV table.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// fig1, fig3, fig4, or spec:<path to JSON>
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub shift_sigma2: Option<f64>,
    /// Comma-separated covariates receiving shift noise.
    #[arg(long, value_delimiter = ',')]
    pub shift_vars: Vec<String>,
    #[arg(long, default_value_t = FIG4_DEFAULT_PI)]
    pub pi: f64,
    #[arg(long, default_value_t = FIG4_DEFAULT_NOISE_VAR)]
    pub noise_var: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long, default_value = "spline", value_parser = parse_basis)]
    pub basis: BasisKind,
    #[arg(long, default_value_t = 8)]
    pub spline_df: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = CHISQ)]
    pub test: String,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 500)]
    pub bootstrap_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run a test outside its supported families.
    #[arg(long)]
    pub force: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = FULL)]
    pub search: String,
    #[arg(long)]
    pub max_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DisptestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated covariates; empty for the intercept-only model.
    #[arg(long, default_value = "")]
    pub subset: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub experiment: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "B", default_value_t = 199)]
    pub bootstrap_reps: usize,
    #[arg(long, default_value_t = FIG4_DEFAULT_PI)]
    pub pi: f64,
    #[arg(long, default_value_t = FIG4_DEFAULT_NOISE_VAR)]
    pub noise_var: f64,
    /// Overrides the experiment's default basis.
    #[arg(long, value_parser = parse_basis)]
    pub basis: Option<BasisKind>,
    #[arg(long, default_value_t = 8)]
    pub spline_df: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_basis(s: &str) -> std::result::Result<BasisKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn basis_spec(kind: BasisKind, df: usize) -> BasisSpec {
    match kind {
        BasisKind::Linear => BasisSpec::linear(),
        BasisKind::AdditiveSpline => BasisSpec::spline(df),
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::UnsupportedFamily { .. }
        | Error::InfeasibleSearch { .. }
        | Error::Expr(_)
        | Error::Cyclic(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text.as_bytes()).map_err(|e| io_err(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Caps the global worker pool from the environment. Later calls are
/// no-ops once the pool exists.
pub fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_threads();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Discover(a) => cmd_discover(&a),
        Command::Disptest(a) => cmd_disptest(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let data = match a.model.as_str() {
        "fig1" => simulate::gen_fig1(a.n, a.seed)?,
        "fig3" => simulate::gen_fig3(a.n, a.seed)?,
        "fig4" => simulate::gen_fig4_with(a.n, a.seed, a.pi, a.noise_var)?,
        m => match m.strip_prefix("spec:") {
            Some(path) => {
                let src = std::fs::read_to_string(path).map_err(|e| io_err(Path::new(path), e))?;
                simulate::generate_from_spec(&ScmSpec::from_json(&src)?, a.n, a.seed)?
            }
            None => {
                return Err(Error::Config(format!(
                    "unknown model `{m}` (fig1, fig3, fig4, spec:<path>)"
                )))
            }
        },
    };
    let data = match a.shift_sigma2 {
        Some(s2) => {
            if a.shift_vars.is_empty() {
                return Err(Error::Config("--shift-sigma2 needs --shift-vars".into()));
            }
            let vars: Vec<&str> = a.shift_vars.iter().map(String::as_str).collect();
            simulate::apply_shift(&data, s2, &vars, a.seed)?
        }
        None if !a.shift_vars.is_empty() => {
            return Err(Error::Config("--shift-vars needs --shift-sigma2".into()))
        }
        None => data,
    };
    let file = File::create(&a.out).map_err(|e| io_err(&a.out, e))?;
    data.write_csv(file).map_err(|e| io_err(&a.out, e))?;

    let mut meta = format!(
        "generator={} n={} seed={} columns={}",
        data.meta.generator.as_deref().unwrap_or("?"),
        data.n_rows(),
        a.seed,
        data.names().join(",")
    );
    if a.model == "fig4" {
        meta.push_str(&format!(" pi={} noise_var={}", a.pi, a.noise_var));
    }
    if let Some(s) = &data.meta.shift {
        meta.push_str(&format!(
            " shift_sigma2={} shift_vars={}",
            s.sigma2,
            s.variables.join(",")
        ));
    }
    println!("{meta}");
    Ok(EXIT_OK)
}

fn load(m: &ModelArgs) -> Result<Dataset> {
    let data = Dataset::read_csv(&m.data)?;
    data.index_of(&m.target)?;
    Ok(data)
}

fn search_config(m: &ModelArgs, strategy: &str, max_size: Option<usize>) -> SearchConfig {
    SearchConfig {
        alpha: m.alpha,
        method: m.test.clone(),
        basis: basis_spec(m.basis, m.spline_df),
        strategy: strategy.to_string(),
        bootstrap_reps: m.bootstrap_reps,
        seed: m.seed,
        max_subset_size: max_size,
        lambda_grid: default_lambda_grid(),
        force: m.force,
    }
}

fn timing(start: Instant) -> Timing {
    Timing {
        wall_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    }
}

pub fn cmd_discover(a: &DiscoverArgs) -> Result<i32> {
    let m = &a.model;
    let cfg = search_config(m, &a.search, a.max_size);
    // configuration problems take precedence over data problems
    cfg.validate(registry::global(), m.family)?;
    let data = load(m)?;
    let start = Instant::now();
    let report = discover(&data, &m.target, m.family, &cfg)?;
    let echo = ConfigEcho::from_search(
        Some(m.data.display().to_string()),
        &m.target,
        m.family,
        data.n_rows(),
        &cfg,
    );
    let run = RunReport::from_search(echo, &report, m.seed, timing(start));
    write_output(m.out.as_deref(), &run.to_json())?;
    Ok(if run.selected.is_some() {
        EXIT_OK
    } else {
        EXIT_NO_CANDIDATE
    })
}

pub fn cmd_disptest(a: &DisptestArgs) -> Result<i32> {
    let m = &a.model;
    let cfg = search_config(m, FULL, None);
    cfg.validate(registry::global(), m.family)?;
    let test = registry::global().test(&m.test)?;
    let data = load(m)?;
    let y = data.column(&m.target)?;
    check_target(m.family, y)?;
    let names: Vec<&str> = a
        .subset
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.contains(&m.target.as_str()) {
        return Err(Error::Config(format!(
            "subset contains the target `{}`",
            m.target
        )));
    }
    let start = Instant::now();
    let design = build_design_named(&data, &names, &cfg.basis)?;
    let (_, fit) = select_lambda(m.family, &design, y, &cfg.grid())?;
    let result = test.run(&TestContext {
        family: m.family,
        design: &design,
        fit: &fit,
        y,
        alpha: m.alpha,
        bootstrap_reps: m.bootstrap_reps,
        seed: m.seed,
        force: m.force,
    })?;
    let note = (!fit.converged).then(|| "fit did not converge".to_string());
    let record = SubsetRecord::new(
        names.iter().map(|s| s.to_string()).collect(),
        Some(&fit),
        Some(&result),
        fit.converged && result.accepted,
        note,
    );
    let mut echo = ConfigEcho::from_search(
        Some(m.data.display().to_string()),
        &m.target,
        m.family,
        data.n_rows(),
        &cfg,
    );
    echo.search = None;
    let rep = TestReport::new(echo, record, &result, m.seed, timing(start));
    write_output(m.out.as_deref(), &rep.to_json())?;
    Ok(EXIT_OK)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let exp = bench::experiment(&a.experiment)?;
    let cfg = BenchConfig {
        reps: a.reps,
        seed: a.seed,
        ns: a.n_list.clone(),
        alpha: a.alpha,
        bootstrap_reps: a.bootstrap_reps,
        pi: a.pi,
        noise_var: a.noise_var,
        basis: a.basis.map(|k| basis_spec(k, a.spline_df)),
        ..BenchConfig::default()
    };
    if a.experiment == bench::FIG4_RATES && a.bootstrap_reps < crate::disptest::MIN_BOOTSTRAP_REPS {
        return Err(Error::Config(format!(
            "{BOOTSTRAP} needs at least {} replicates",
            crate::disptest::MIN_BOOTSTRAP_REPS
        )));
    }
    let start = Instant::now();
    let table = exp.run(&cfg)?;
    let file = File::create(&a.out).map_err(|e| io_err(&a.out, e))?;
    table.write_csv(file)?;
    let mut err = std::io::stderr();
    for n in &table.notes {
        let _ = writeln!(err, "# {n}");
    }
    let _ = writeln!(
        err,
        "# {} finished in {:.1}s on {} threads",
        exp.id(),
        start.elapsed().as_secs_f64(),
        rayon::current_num_threads()
    );
    Ok(EXIT_OK)
}
