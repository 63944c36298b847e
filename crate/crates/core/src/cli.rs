//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 runtime failure (instability, non-convergence).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::capacity::{self, CapacityResult, ChannelDesign, SignPolicy};
use crate::coding::{self, CheckStatus, Verification};
use crate::config::{CapacitySummary, ChannelConfig, DesignRecord, RunRecord};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::noise::ArmaNoise;

#[derive(Debug, Parser)]
#[command(name = "acgn", version, about = "Feedback capacity lower bounds for parallel colored Gaussian channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the capacity lower bound and its power allocation.
    Capacity(CommonArgs),
    /// Classical water-filling over given noise variances.
    Waterfill(WaterfillArgs),
    /// Simulate the feedback coding scheme and run all checks.
    Simulate(SimulateArgs),
    /// Run the consistency checks on a design.
    Verify(VerifyArgs),
    /// Print the design matrices A, C, K, P.
    Design(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Channel configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the power budget.
    #[arg(long, allow_negative_numbers = true)]
    pub budget: Option<f64>,
    /// Sign branch: auto, + or -.
    #[arg(long, allow_hyphen_values = true)]
    pub sign: Option<SignPolicy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Quadrature nodes for the spectral rate.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Extra random starts for the general search.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Emit a JSON run record instead of tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct WaterfillArgs {
    /// Noise variances, comma separated.
    #[arg(long, value_delimiter = ',', required_unless_present = "config", conflicts_with = "config")]
    pub eigs: Vec<f64>,
    /// Take the variances from the innovation covariance of a configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config", allow_negative_numbers = true)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write the trajectory as CSV.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Verify this design (JSON from `design --json`) instead of a freshly optimized one.
    #[arg(long)]
    pub design: Option<PathBuf>,
}

/// Parse arguments and run, returning the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("ACGN_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            i32::from(e.exit_code())
        }
    }
}

/// Execute a parsed command, writing human or JSON output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Capacity(args) => cmd_capacity(args, out),
        Command::Waterfill(args) => cmd_waterfill(args, out),
        Command::Simulate(args) => cmd_simulate(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Design(args) => cmd_design(args, out),
    }
}

fn load(args: &CommonArgs) -> Result<(ChannelConfig, ArmaNoise)> {
    let mut cfg = ChannelConfig::from_path(&args.config)?;
    if let Some(b) = args.budget {
        cfg.budget = b;
    }
    if let Some(s) = args.sign {
        cfg.options.sign = s;
    }
    if let Some(s) = args.seed {
        cfg.options.seed = s;
    }
    if let Some(s) = args.steps {
        cfg.options.steps = s;
    }
    if let Some(n) = args.nodes {
        cfg.options.nodes = n;
    }
    if let Some(r) = args.restarts {
        cfg.options.restarts = r;
    }
    cfg.check()?;
    let noise = cfg.noise()?;
    Ok((cfg, noise))
}

fn solve(cfg: &ChannelConfig, noise: &ArmaNoise) -> Result<CapacityResult> {
    let result = capacity::solve(noise, cfg.budget, cfg.options.search())?;
    log::info!(
        "{}: {:.9} bits/use at power {:.9}",
        result.method,
        result.lower_bound_bits,
        result.design.transmit_power
    );
    Ok(result)
}

/// Round to six significant digits for tables.
pub fn human(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    if rounded.abs() < 1e-4 || rounded.abs() >= 1e9 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn write_json(out: &mut dyn Write, record: &mut RunRecord, start: Instant) -> Result<()> {
    record.wall_time_s = start.elapsed().as_secs_f64();
    writeln!(out, "{}", record.to_json()?)?;
    Ok(())
}

fn print_capacity(out: &mut dyn Write, r: &CapacityResult) -> Result<()> {
    let al = &r.design.allocation;
    writeln!(out, "lower bound     {} bits/use", human(r.lower_bound_bits))?;
    writeln!(out, "method          {}", r.method)?;
    writeln!(out, "budget          {}", human(r.budget))?;
    writeln!(out, "transmit power  {}", human(r.design.transmit_power))?;
    if let Some(level) = r.trace.water_level {
        writeln!(out, "water level     {}", human(level))?;
    }
    writeln!(out)?;
    writeln!(out, "{:>7}  {:>12}  {:>12}  {:>12}  {:>4}", "channel", "variance", "power", "gain", "sign")?;
    for l in 0..al.powers.len() {
        writeln!(
            out,
            "{:>7}  {:>12}  {:>12}  {:>12}  {:>4}",
            l + 1,
            human(al.variances[l]),
            human(al.powers[l]),
            human(al.gains[l]),
            al.signs[l]
        )?;
    }
    for note in &r.trace.notes {
        writeln!(out, "note: {note}")?;
    }
    Ok(())
}

pub fn cmd_capacity(args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let start = Instant::now();
    let (cfg, noise) = load(args)?;
    let result = solve(&cfg, &noise)?;
    if args.json {
        let mut record = RunRecord::new("capacity", &cfg);
        record.capacity = Some(CapacitySummary::from(&result));
        write_json(out, &mut record, start)?;
    } else {
        print_capacity(out, &result)?;
    }
    Ok(0)
}

pub fn cmd_waterfill(args: &WaterfillArgs, out: &mut dyn Write) -> Result<i32> {
    let (variances, budget) = match &args.config {
        Some(path) => {
            let cfg = ChannelConfig::from_path(path)?;
            let noise = cfg.noise()?;
            let basis = capacity::Eigenbasis::of(&noise)?;
            (basis.variances, args.budget.unwrap_or(cfg.budget))
        }
        None => (args.eigs.clone(), args.budget.unwrap_or(f64::NAN)),
    };
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::Config("budget must be positive".into()));
    }
    let wf = capacity::waterfill(&variances, budget).map_err(|e| Error::Config(e.to_string()))?;
    if args.json {
        let value = serde_json::json!({
            "level": wf.level,
            "variances": wf.allocation.variances,
            "powers": wf.allocation.powers,
            "rate_bits": wf.allocation.rate_bits,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&value).map_err(|e| Error::Internal(e.to_string()))?)?;
    } else {
        writeln!(out, "water level  {}", human(wf.level))?;
        writeln!(out, "rate         {} bits/use", human(wf.allocation.rate_bits))?;
        writeln!(out)?;
        writeln!(out, "{:>7}  {:>12}  {:>12}", "channel", "variance", "power")?;
        for (l, (v, p)) in wf.allocation.variances.iter().zip(&wf.allocation.powers).enumerate() {
            writeln!(out, "{:>7}  {:>12}  {:>12}", l + 1, human(*v), human(*p))?;
        }
    }
    Ok(0)
}

fn print_verification(out: &mut dyn Write, v: &Verification) -> Result<()> {
    for c in &v.checks {
        let value = c.value.map_or_else(|| "-".to_string(), human);
        write!(out, "check {} {:<28} {:<12} value {:<12} tol {}", c.id, c.name, c.status, value, human(c.tolerance))?;
        if c.detail.is_empty() {
            writeln!(out)?;
        } else {
            writeln!(out, "  ({})", c.detail)?;
        }
    }
    writeln!(out, "{}/{} checks pass", v.passed(), v.checks.len())?;
    Ok(())
}

fn verification_exit(v: &Verification) -> i32 {
    if v.inconclusive() > 0 {
        log::warn!("{} check(s) inconclusive", v.inconclusive());
        eprintln!("warning: {} check(s) inconclusive", v.inconclusive());
    }
    if v.all_passed() {
        0
    } else {
        1
    }
}

/// CSV trajectory writer: `k, y'_1..n, e'_1..n, power`.
struct CsvDump {
    out: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl CsvDump {
    fn create(path: &Path, n: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("y'_{i}")));
        header.extend((1..=n).map(|i| format!("e'_{i}")));
        header.push("power".into());
        writeln!(out, "{}", header.join(","))?;
        Ok(Self { out, error: None })
    }

    fn row(&mut self, k: usize, y: &[f64], e: &[f64]) {
        if self.error.is_some() {
            return;
        }
        let power: f64 = y.iter().map(|t| t * t).sum();
        let mut line = k.to_string();
        for x in y.iter().chain(e).chain(std::iter::once(&power)) {
            line.push(',');
            line.push_str(&x.to_string());
        }
        line.push('\n');
        if let Err(err) = self.out.write_all(line.as_bytes()) {
            self.error = Some(err);
        }
    }

    fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error {
            return Err(e.into());
        }
        self.out.flush()?;
        Ok(())
    }
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let start = Instant::now();
    let (cfg, noise) = load(&args.common)?;
    let result = solve(&cfg, &noise)?;
    // Refuse unstable designs up front (exit 3) rather than reporting a failed check.
    coding::synthesize_design(&result.design, &noise, cfg.options.controller)?;
    let mut dump = args
        .dump
        .as_deref()
        .map(|p| CsvDump::create(p, noise.dim()))
        .transpose()?;
    let verification = coding::verify_design_observed(
        &result.design,
        result.budget,
        &noise,
        cfg.options.verify(),
        |k, y, e| {
            if let Some(d) = dump.as_mut() {
                d.row(k, y, e);
            }
        },
    );
    if let Some(d) = dump {
        d.finish()?;
    }
    if args.common.json {
        let mut record = RunRecord::new("simulate", &cfg);
        record.capacity = Some(CapacitySummary::from(&result));
        record.verification = Some(verification.clone());
        write_json(out, &mut record, start)?;
    } else {
        print_capacity(out, &result)?;
        writeln!(out)?;
        if let Some(rep) = &verification.simulation {
            writeln!(out, "steps           {} (burn-in {}, seed {})", rep.steps, rep.burn_in, rep.seed)?;
            writeln!(out, "empirical power {}", human(rep.empirical_power))?;
            writeln!(out, "predicted power {}", human(rep.predicted_power))?;
            writeln!(out, "power rel err   {}", human(rep.power_rel_err))?;
            writeln!(out, "cov rel err     {}", human(rep.cov_rel_err))?;
            writeln!(out, "stability       {}", human(rep.stability_radius))?;
            writeln!(out)?;
        }
        print_verification(out, &verification)?;
    }
    Ok(verification_exit(&verification))
}

fn load_design(path: &Path) -> Result<DesignRecord> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    // Accept either a bare design or a run record carrying one.
    if let Ok(record) = RunRecord::from_json(&text) {
        return record
            .design
            .ok_or_else(|| Error::Config(format!("{} holds no design", path.display())));
    }
    DesignRecord::from_json(&text)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let start = Instant::now();
    let (cfg, noise) = load(&args.common)?;
    let (design, budget, summary): (ChannelDesign, f64, Option<CapacitySummary>) = match &args.design {
        Some(path) => (load_design(path)?.to_design()?, cfg.budget, None),
        None => {
            let r = solve(&cfg, &noise)?;
            let s = CapacitySummary::from(&r);
            (r.design, r.budget, Some(s))
        }
    };
    if design.a.nrows() != noise.dim() {
        return Err(Error::Config("design and noise dimensions differ".into()));
    }
    let verification = coding::verify_design(&design, budget, &noise, cfg.options.verify());
    if args.common.json {
        let mut record = RunRecord::new("verify", &cfg);
        record.capacity = summary;
        record.design = Some(DesignRecord::from(&design));
        record.verification = Some(verification.clone());
        write_json(out, &mut record, start)?;
    } else {
        print_verification(out, &verification)?;
        let failed: Vec<String> = verification
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| format!("{} ({})", c.id, c.name))
            .collect();
        if !failed.is_empty() {
            writeln!(out, "failed: {}", failed.join(", "))?;
        }
    }
    Ok(verification_exit(&verification))
}

fn print_matrix(out: &mut dyn Write, name: &str, m: &Mat) -> Result<()> {
    writeln!(out, "{name} =")?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:>14}", human(m[(r, c)]))).collect();
        writeln!(out, "  {}", row.join(" "))?;
    }
    Ok(())
}

pub fn cmd_design(args: &CommonArgs, out: &mut dyn Write) -> Result<i32> {
    let start = Instant::now();
    let (cfg, noise) = load(args)?;
    let result = solve(&cfg, &noise)?;
    let d = &result.design;
    if args.json {
        let mut record = RunRecord::new("design", &cfg);
        record.capacity = Some(CapacitySummary::from(&result));
        record.design = Some(DesignRecord::from(d));
        write_json(out, &mut record, start)?;
    } else {
        writeln!(out, "lower bound {} bits/use, transmit power {}", human(result.lower_bound_bits), human(d.transmit_power))?;
        print_matrix(out, "A", &d.a)?;
        print_matrix(out, "C", &d.c)?;
        print_matrix(out, "K", &d.gain)?;
        print_matrix(out, "P", &d.p)?;
    }
    Ok(0)
}
