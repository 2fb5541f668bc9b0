//! Command-line front end for `meanprop`.
//!
//! Exit codes: 0 on success (including when the hypothesis is rejected),
//! 2 for usage and input errors, 3 for numerical failures and failed
//! verification.

pub mod formats;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use meanprop::dominance::{self, Comparison, SuiteReport, VerificationReport};
use meanprop::montecarlo::{simulate_cdf, simulate_sizes};
use meanprop::specfun::legendre_ratios;
use meanprop::wishart::Lambda2Distribution;
use meanprop::{
    fieller_interval, proportionality_test, IntervalKind, NoncentralSpec, Sample, SimulationConfig,
    Slope,
};

use formats::{csv_number, parse_alphas, parse_grid, read_matrix, read_vector};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "meanprop",
    version,
    about = "Exact chi-square test for proportional mean vectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test whether the means of x and y are proportional.
    Test(TestArgs),
    /// Confidence set for the proportionality constant.
    Fieller(FiellerArgs),
    /// Exact density or distribution function of the test statistic.
    Density(DensityArgs),
    /// Monte Carlo sizes or empirical distribution function.
    Simulate(SimulateArgs),
    /// Check the inequalities behind the test's validity on grids.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Observation x (whitespace-separated numbers).
    #[arg(long)]
    pub x: PathBuf,
    /// Observation y, same length as x.
    #[arg(long)]
    pub y: PathBuf,
    /// Known covariance, one row per line.
    #[arg(long)]
    pub sigma: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FiellerArgs {
    #[command(flatten)]
    pub sample: SampleArgs,
    #[arg(long)]
    pub level: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub kappa: f64,
    /// start:stop:count
    #[arg(long)]
    pub grid: String,
    /// Print the distribution function instead of the density.
    #[arg(long)]
    pub cdf: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "0.01,0.05,0.1")]
    pub alphas: String,
    /// start:stop:count; prints the empirical CDF instead of sizes.
    #[arg(long)]
    pub cdf_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    pub jmax: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Append a deliberately false check (for testing the failure path).
    #[arg(long, hide = true)]
    pub inject_violation: bool,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn io(e: std::io::Error) -> Failure {
    Failure::Numerical(format!("write failed: {e}"))
}

/// Parse `args` (program name first) and execute. Diagnostics go to `err`
/// as a single line.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(err, "{}", line.trim());
            return EXIT_USAGE;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message().replace('\n', " "));
            f.exit_code()
        }
    }
}

pub fn execute(command: &Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Test(a) => cmd_test(a, out),
        Command::Fieller(a) => cmd_fieller(a, out),
        Command::Density(a) => cmd_density(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    }
}

fn load_sample(a: &SampleArgs) -> Result<Sample, Failure> {
    let x = read_vector(&a.x).map_err(Failure::Usage)?;
    let y = read_vector(&a.y).map_err(Failure::Usage)?;
    let sample = Sample::new(x, y).map_err(usage)?;
    match &a.sigma {
        Some(path) => sample
            .with_sigma(read_matrix(path).map_err(Failure::Usage)?)
            .map_err(usage),
        None => Ok(sample),
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} = {v} must lie in (0, 1)")))
    }
}

/// A real number, or the string `"inf"` / `"-inf"`.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum JsonReal {
    Finite(f64),
    Infinite(&'static str),
}

impl From<f64> for JsonReal {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            JsonReal::Infinite("inf")
        } else if v == f64::NEG_INFINITY {
            JsonReal::Infinite("-inf")
        } else {
            JsonReal::Finite(v)
        }
    }
}

impl From<Slope> for JsonReal {
    fn from(s: Slope) -> Self {
        match s {
            Slope::Finite(b) => JsonReal::Finite(b),
            Slope::Infinite => JsonReal::Infinite("inf"),
        }
    }
}

#[derive(Debug, Serialize)]
struct TestJson {
    statistic: f64,
    df: usize,
    p_value: f64,
    beta_hat: JsonReal,
    reject: bool,
}

fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    check_unit_interval("alpha", a.alpha)?;
    let sample = load_sample(&a.sample)?;
    let t = proportionality_test(&sample, a.alpha).map_err(numerical)?;
    if a.json {
        let j = TestJson {
            statistic: t.statistic,
            df: t.df,
            p_value: t.p_value,
            beta_hat: t.beta_hat.into(),
            reject: t.reject,
        };
        writeln!(out, "{}", serde_json::to_string(&j).map_err(numerical)?).map_err(io)?;
    } else {
        writeln!(
            out,
            "statistic: {}\ndf: {}\np_value: {}\nbeta_hat: {}\nreject: {}",
            t.statistic, t.df, t.p_value, t.beta_hat, t.reject
        )
        .map_err(io)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct FiellerJson {
    kind: &'static str,
    lower: Option<JsonReal>,
    upper: Option<JsonReal>,
    level: f64,
}

fn cmd_fieller(a: &FiellerArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    check_unit_interval("level", a.level)?;
    let sample = load_sample(&a.sample)?;
    let ci = fieller_interval(&sample, a.level).map_err(numerical)?;
    if a.json {
        let j = FiellerJson {
            kind: ci.kind.as_str(),
            lower: ci.lower.map(JsonReal::from),
            upper: ci.upper.map(JsonReal::from),
            level: ci.level,
        };
        writeln!(out, "{}", serde_json::to_string(&j).map_err(numerical)?).map_err(io)?;
        return Ok(EXIT_OK);
    }
    let text = match (ci.kind, ci.lower, ci.upper) {
        (IntervalKind::Bounded, Some(l), Some(u)) => format!("[{l}, {u}]"),
        (IntervalKind::ComplementOfBounded, Some(l), Some(u)) => {
            format!("(-inf, {l}] U [{u}, inf)")
        }
        (IntervalKind::AllReals, ..) => "(-inf, inf)".to_string(),
        _ => "{}".to_string(),
    };
    writeln!(
        out,
        "kind: {}\nlevel: {}\nset: {text}",
        ci.kind.as_str(),
        ci.level
    )
    .map_err(io)?;
    Ok(EXIT_OK)
}

fn cmd_density(a: &DensityArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let grid = parse_grid(&a.grid).map_err(Failure::Usage)?;
    let spec = NoncentralSpec::new(a.p, a.kappa).map_err(usage)?;
    let dist = Lambda2Distribution::new(spec);
    let (header, values) = if a.cdf {
        ("lambda2,cdf", dist.cdf_grid(&grid).map_err(numerical)?)
    } else {
        let values = grid
            .iter()
            .map(|&l| {
                if l == 0.0 {
                    dist.density_at_zero()
                } else {
                    dist.density(l)
                }
            })
            .collect::<meanprop::Result<Vec<_>>>()
            .map_err(numerical)?;
        ("lambda2,density", values)
    };
    let mut s = format!("{header}\n");
    for (x, v) in grid.iter().zip(&values) {
        s.push_str(&format!("{},{}\n", csv_number(*x), csv_number(*v)));
    }
    out.write_all(s.as_bytes()).map_err(io)?;
    Ok(EXIT_OK)
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = SimulationConfig {
        p: a.p,
        kappa: a.kappa,
        reps: a.reps,
        seed: a.seed,
        alphas: parse_alphas(&a.alphas).map_err(Failure::Usage)?,
    };
    config.validate().map_err(usage)?;
    let mut s = String::new();
    if let Some(spec) = &a.cdf_grid {
        let grid = parse_grid(spec).map_err(Failure::Usage)?;
        let ecdf = simulate_cdf(&config, &grid).map_err(numerical)?;
        s.push_str("lambda2,ecdf\n");
        for (x, v) in ecdf.grid.iter().zip(&ecdf.values) {
            s.push_str(&format!("{},{}\n", csv_number(*x), csv_number(*v)));
        }
    } else {
        let table = simulate_sizes(&config).map_err(numerical)?;
        s.push_str("p,kappa,alpha,reps,rejections,size,stderr\n");
        for r in &table.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.p,
                csv_number(r.kappa),
                csv_number(r.alpha),
                r.reps,
                r.rejections,
                csv_number(r.size),
                csv_number(r.mc_stderr)
            ));
        }
    }
    out.write_all(s.as_bytes()).map_err(io)?;
    Ok(EXIT_OK)
}

/// The key Legendre inequality with its direction reversed; false almost
/// everywhere, so the report must list violations.
pub fn corrupted_check() -> Result<VerificationReport, Failure> {
    let mut comps = Vec::new();
    for x in [1.5, 2.0, 10.0] {
        let ratios = legendre_ratios(x, 3).map_err(numerical)?;
        let root = 1.0 / (x + (x * x - 1.0f64).sqrt());
        for j in 1..=3 {
            let jf = j as f64;
            comps.push(Comparison::le(
                vec![jf, x],
                (jf + 1.0) / jf * root,
                1.0 / ratios[j - 1],
            ));
        }
    }
    Ok(VerificationReport::from_comparisons(
        "injected_reversed_key_inequality",
        "j in [1, 3] x {1.5, 2, 10}; point = [j, x]",
        comps,
    ))
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if a.jmax == 0 {
        return Err(Failure::Usage("--jmax must be at least 1".into()));
    }
    let mut checks = dominance::run_all(a.jmax).map_err(numerical)?.checks;
    if a.inject_violation {
        checks.push(corrupted_check()?);
    }
    let suite = SuiteReport::new(checks);
    let json = serde_json::to_string_pretty(&suite).map_err(numerical)?;
    match &a.report {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            for c in &suite.checks {
                writeln!(
                    out,
                    "{} {} violations={} worst_margin={:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.check_name,
                    c.violations.len(),
                    c.worst_margin
                )
                .map_err(io)?;
            }
        }
        None => writeln!(out, "{json}").map_err(io)?,
    }
    if suite.passed {
        Ok(EXIT_OK)
    } else {
        let failed: Vec<&str> = suite
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.check_name.as_str())
            .collect();
        Err(Failure::Numerical(format!(
            "verification failed: {}",
            failed.join(", ")
        )))
    }
}
