//! Command-line front end: `generate`, `run`, `audit` and `bench`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ppbsp_core::billing::BillingModel;
use ppbsp_core::decimal::{Decimal, Fixed};
use ppbsp_core::market::{generate, SupplierId};
use ppbsp_core::phe::DEFAULT_KEY_BITS;

use crate::bench::benchmark_primitives;
use crate::files::{load_scenario, save_scenario, ScenarioSummary};
use crate::metrics::PeriodKind;
use crate::report::{self, RunManifest};
use crate::simnet::{run_model, setup, Misreport, SimConfig};
use crate::verify::verify_run;

/// Exit code when the run completed but a check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit code for usage and runtime errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ppbsp", version, about = "Privacy-preserving billing and settlement simulator for P2P energy markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario file.
    Generate(GenerateArgs),
    /// Run every slot and the billing period of a scenario.
    Run(RunArgs),
    /// Run, then have the grid operator inspect every supplier.
    Audit(RunArgs),
    /// Time the four expensive primitives.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub users: usize,
    #[arg(long, default_value_t = 3)]
    pub suppliers: usize,
    #[arg(long, default_value_t = 10)]
    pub slots: usize,
    /// Deviations are drawn from [-spread, spread] kWh.
    #[arg(long, default_value = "2", value_parser = parse_via::<Fixed>)]
    pub spread: Fixed,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// status_quo, individual, social or universal.
    #[arg(long, value_parser = parse_via::<BillingModel>)]
    pub model: BillingModel,
    #[arg(long, default_value_t = DEFAULT_KEY_BITS)]
    pub key_bits: u32,
    /// Seeds key generation and meter randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "PPBSP_WORKERS", default_value_t = 1)]
    pub workers: usize,
    /// Compare every bill against the plaintext oracle.
    #[arg(long)]
    pub verify: bool,
    /// Supplier that misreports its residue, e.g. S_2.
    #[arg(long, value_parser = parse_via::<SupplierId>)]
    pub inject_dishonest_supplier: Option<SupplierId>,
    /// Amount the dishonest supplier adds to its residue.
    #[arg(long, default_value = "0.1", value_parser = parse_via::<Decimal>)]
    pub misreport_offset: Decimal,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = DEFAULT_KEY_BITS)]
    pub key_bits: u32,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Repetitions for KeyGen alone; defaults to --reps.
    #[arg(long)]
    pub keygen_reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_via<T>(s: &str) -> Result<T, String>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// Parse `args` and execute. Returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> anyhow::Result<i32> {
    match cmd {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Run(a) => cmd_run(a, false, out),
        Command::Audit(a) => cmd_run(a, true, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let s = generate(a.seed, a.users, a.suppliers, a.slots, a.spread).map_err(|e| anyhow::anyhow!("{e}"))?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    }
    save_scenario(&a.out, &s)?;
    writeln!(out, "wrote {}", a.out.display())?;
    writeln!(out, "{}", ScenarioSummary::of(&s))?;
    Ok(0)
}

fn manifest(a: &RunArgs, command: &str, scenario_bytes: &[u8]) -> RunManifest {
    RunManifest {
        tool: format!("ppbsp {}", env!("CARGO_PKG_VERSION")),
        command: command.into(),
        scenario: a.scenario.display().to_string(),
        scenario_sha256: report::sha256_hex(scenario_bytes),
        model: a.model.name().into(),
        key_bits: a.key_bits,
        seed: a.seed,
        workers: a.workers,
        verify: a.verify,
        inject_dishonest_supplier: a.inject_dishonest_supplier.map(|s| s.to_string()),
        misreport_offset: a.inject_dishonest_supplier.map(|_| a.misreport_offset.to_string()),
    }
}

pub fn cmd_run(a: &RunArgs, force_audit: bool, out: &mut dyn Write) -> anyhow::Result<i32> {
    let bytes = fs::read(&a.scenario).with_context(|| a.scenario.display().to_string())?;
    let scenario = load_scenario(&a.scenario)?;
    if a.key_bits < ppbsp_core::phe::MIN_KEY_BITS {
        bail!("--key-bits must be at least {}", ppbsp_core::phe::MIN_KEY_BITS);
    }
    let (keys, setup_metrics) = setup(&scenario, a.key_bits, a.seed)?;
    let cfg = SimConfig {
        seed: a.seed,
        workers: a.workers,
        misreport: a.inject_dishonest_supplier.map(|supplier| Misreport { supplier, offset: a.misreport_offset.clone() }),
        force_audit,
        capture_partial_bills: a.verify,
    };
    let mut run = run_model(&scenario, &keys, a.model, cfg)?;
    run.metrics.periods.insert(0, setup_metrics);

    let command = if force_audit { "audit" } else { "run" };
    report::write_run(&a.out, &run, &manifest(a, command, &bytes))?;

    let rep = &run.billing.report;
    writeln!(out, "model: {}", a.model)?;
    writeln!(
        out,
        "users: {}, suppliers: {}, slots: {}, key bits: {}",
        scenario.users.len(),
        scenario.suppliers.len(),
        scenario.slots.len(),
        a.key_bits
    )?;
    writeln!(out, "rm volume: {}", run.rm_volume())?;
    for (seg, bits) in report::segment_totals(&run.metrics, PeriodKind::Trading) {
        writeln!(out, "{seg} bits (all slots): {bits}")?;
    }
    writeln!(out, "residue sum: {}", rep.sum.normalized())?;
    writeln!(out, "verdict: {}", if run.settled() { "settled" } else { "audit_required" })?;
    for f in &rep.findings {
        writeln!(out, "audit finding: {} reported {} recomputed {}", f.supplier, f.reported.normalized(), f.recomputed.normalized())?;
    }
    for t in &rep.transfers {
        writeln!(out, "transfer: {} -> {} {}", t.from, t.to, t.amount)?;
    }

    let mut ok = if force_audit { rep.findings.is_empty() } else { run.settled() };
    if a.verify {
        let v = verify_run(&scenario, &keys, &run);
        fs::write(a.out.join("verification.json"), serde_json::to_string_pretty(&v)? + "\n")?;
        writeln!(out, "verification: {} ({} checks, {} failures)", if v.passed() { "passed" } else { "FAILED" }, v.checks, v.failures.len())?;
        for f in v.failures.iter().take(20) {
            writeln!(out, "  {f}")?;
        }
        ok &= v.passed();
    }
    writeln!(out, "outputs: {}", a.out.display())?;
    Ok(if ok { 0 } else { EXIT_CHECK_FAILED })
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let r = benchmark_primitives(a.key_bits, a.reps, a.keygen_reps, a.seed)?;
    let csv = report::bench_csv(&r);
    match &a.out {
        Some(p) => {
            write_file(p, &csv)?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => write!(out, "{csv}")?,
    }
    for row in &r.rows {
        writeln!(
            out,
            "{}: mean {:.3} ms, stddev {:.3} ms, reference {:.2} ms ({:.2}x{})",
            row.op.name(),
            row.mean_ms,
            row.stddev_ms,
            row.reference_ms,
            row.ratio(),
            if row.within_order_of_magnitude() { "" } else { ", outside one order of magnitude" }
        )?;
    }
    writeln!(out, "ordering HomoEnc > HomoDec > BillCalc: {}", if r.ordering_holds() { "holds" } else { "violated" })?;
    writeln!(out, "KeyGen dominates: {}", if r.keygen_dominates() { "holds" } else { "violated" })?;
    Ok(0)
}

fn write_file(p: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(p, contents).with_context(|| p.display().to_string())
}
