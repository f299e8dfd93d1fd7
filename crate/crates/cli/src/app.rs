//! Subcommand dispatch and artifact emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use bgk_sl_core::diagnostics::trace_run;
use bgk_sl_core::harness::write_sweep_csv;
use bgk_sl_core::{cfl_sweep, compute_moments, scaling_study, validate_mesh, Error, Result};
use clap::{Parser, Subcommand};

use crate::config::{parse_config, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "BGK_SL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bgk-sl", version, about = "Semi-Lagrangian solver for the 1D BGK model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON run configuration.
    pub config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress progress and summary output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single simulation with diagnostics.
    Run(Common),
    /// Refinement study against a fine-grid reference.
    Study(Common),
    /// Stability sweep over Courant numbers.
    Sweep(Common),
    /// Check the mesh against the error-estimate hypotheses.
    Validate(Common),
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp { .. } => EXIT_NUMERICAL,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// `x` rounded to `digits` significant digits.
pub fn significant(x: f64, digits: usize) -> String {
    if !x.is_finite() || x == 0.0 {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR}: expected a positive integer, got `{raw}`")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Output {
    dir: PathBuf,
    quiet: bool,
}

impl Output {
    fn new(cfg: &RunConfig, common: &Common) -> Result<Self> {
        let dir = common.out.clone().unwrap_or_else(|| cfg.outputs.clone());
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, quiet: common.quiet })
    }

    fn write(&self, cfg: &RunConfig, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        if !cfg.wants(name) {
            return Ok(());
        }
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.say(format_args!("wrote {}", path.display()));
        Ok(())
    }

    fn say(&self, msg: std::fmt::Arguments<'_>) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

fn cmd_run(common: &Common) -> Result<()> {
    let cfg = parse_config(&common.config)?;
    let grid = cfg.grid()?;
    let ic = cfg.initial_condition()?;
    let out = Output::new(&cfg, common)?;
    let (field, trace) = trace_run(&ic, &grid)?;
    out.write(&cfg, "fields_final.csv", |w| field.write_csv(w))?;
    out.write(&cfg, "moments_final.csv", |w| compute_moments(&field).write_csv(&grid, w))?;
    out.write(&cfg, "diagnostics.csv", |w| trace.write_csv(w))?;
    if let (Some(first), Some(last)) = (trace.levels().next(), trace.levels().last()) {
        out.say(format_args!(
            "steps {}  mass drift {:e}  N_q ratio {}  min rho {}  min T {}",
            grid.nt,
            last.totals[0] - first.totals[0],
            significant(last.nq_norm / first.nq_norm, 6),
            significant(last.min_rho, 6),
            significant(last.min_temp, 6),
        ));
    }
    Ok(())
}

fn cmd_study(common: &Common) -> Result<()> {
    let cfg = parse_config(&common.config)?;
    let grid = cfg.grid()?;
    let ic = cfg.initial_condition()?;
    let out = Output::new(&cfg, common)?;
    let report = scaling_study(&ic, &grid, &cfg.study_options())?;
    out.write(&cfg, "convergence.json", |w| {
        w.write_all(report.to_json()?.as_bytes())?;
        Ok(w.write_all(b"\n")?)
    })?;
    out.write(&cfg, "convergence.csv", |w| report.write_csv(w))?;
    for s in &report.skipped {
        out.say(format_args!("skipped {s}"));
    }
    for (l, r) in report.levels.iter().zip(&report.runs) {
        out.say(format_args!(
            "{:>6} x {:<7} dt {:<10} error {:<12} mesh {}",
            r.nx,
            r.nv,
            l.dt,
            significant(l.error_l1_2, 6),
            if r.mesh.passed() { "valid" } else { "outside hypotheses" }
        ));
    }
    // the rate is the result of this command and is printed even when quiet
    println!("fitted rate: {}", significant(report.fitted_rate, 6));
    Ok(())
}

fn cmd_sweep(common: &Common) -> Result<()> {
    let cfg = parse_config(&common.config)?;
    let grid = cfg.grid_unchecked()?;
    let ic = cfg.initial_condition()?;
    let out = Output::new(&cfg, common)?;
    let rows = cfl_sweep(&ic, &grid, &cfg.cfl_values());
    out.write(&cfg, "cfl_sweep.csv", |w| write_sweep_csv(&rows, w))?;
    for r in &rows {
        let status = if r.blow_up {
            "blow-up"
        } else if !r.note.is_empty() {
            "rejected"
        } else {
            "ok"
        };
        out.say(format_args!(
            "cfl {:<6} actual {:<10} nt {:<6} max N_q ratio {:<10} {status} {}",
            r.cfl_target,
            significant(r.cfl_actual, 6),
            r.nt,
            significant(r.max_nq_ratio, 6),
            r.note
        ));
    }
    Ok(())
}

fn cmd_validate(common: &Common) -> Result<()> {
    let cfg = parse_config(&common.config)?;
    let grid = cfg.grid_unchecked()?;
    let ic = cfg.initial_condition()?;
    println!("{}", validate_mesh(&grid, &ic));
    Ok(())
}

/// Runs the parsed command line and returns the exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Study(c) => cmd_study(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Validate(c) => cmd_validate(c),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("bgk-sl: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point over raw arguments (program name first).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
