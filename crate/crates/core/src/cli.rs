//! Command-line front end. `main.rs` only forwards to [`run`].

use std::fmt::Write as FmtWrite;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{parse_key_values, SimConfig};
use crate::dense::{self, DenseParams, RingModel};
use crate::error::ConfigError;
use crate::experiments::{self, NormalizedEnergyReport};
use crate::geometry::Architecture;
use crate::strategies::Strategy;

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "coopnet", version, about = "Cooperative relaying simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one strategy and report it against DEF.
    Simulate(SimArgs),
    /// Ad hoc table: DEF, COOP, TFT, WSLS.
    Table1(SimArgs),
    /// Central-sink table: DEF, COOP, MINIMAL, TFT (best r0), WSLS.
    Table2(SweepArgs),
    /// Energy against the relay-request fraction nu.
    SweepNu(SweepArgs),
    /// TFT energy against the seed cooperator's radius.
    SweepR0(SweepArgs),
    /// Cooperator fraction per iteration.
    Dynamics(SimArgs),
    /// Optimal relay radius and minimal energy density at one sender radius.
    DenseQmin(DenseArgs),
    /// Minimal total energy of the dense disk.
    DenseEmin(DenseArgs),
    /// Variance-minimising ring distribution.
    DenseBalance(DenseArgs),
}

#[derive(Debug, Clone, Args)]
struct SimArgs {
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    slots: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    scale: Option<String>,
    /// Seed cooperator radius, or `random`.
    #[arg(long)]
    r0: Option<String>,
    /// `repeated` or `fresh`.
    #[arg(long)]
    traffic: Option<String>,
    /// `cooperate` or `defect`.
    #[arg(long)]
    tft_tie: Option<String>,
    /// `stay` or `shift`.
    #[arg(long)]
    wsls_tie: Option<String>,
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated sweep values (default 0.05..0.95 step 0.05).
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct DenseArgs {
    #[arg(long)]
    alpha: Option<String>,
    /// Sender radius (dense-qmin).
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    /// Propagation constant.
    #[arg(long)]
    k: Option<String>,
    /// Ring count (dense-balance).
    #[arg(long)]
    rings: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 success, 2 usage or configuration
/// error, 1 runtime failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let started = Instant::now();
    match command {
        Command::Simulate(args) => {
            let cfg = sim_config(&args, Architecture::AdHoc, Strategy::Tft)?;
            let mut strategies = vec![Strategy::Def];
            if cfg.strategy != Strategy::Def {
                strategies.push(cfg.strategy);
            }
            let reports = experiments::run_table(cfg.architecture, &strategies, &cfg)?;
            let mut out = Output::new(&args.out, "simulate", started);
            out.tables(&reports)?;
            print_table(&reports);
            out.finish(json!(cfg), cfg.seed, Value::Null)
        }
        Command::Table1(args) => {
            let cfg = sim_config(&args, Architecture::AdHoc, Strategy::Def)?;
            let reports = experiments::run_table(
                cfg.architecture,
                &[Strategy::Def, Strategy::Coop, Strategy::Tft, Strategy::Wsls],
                &cfg,
            )?;
            let mut out = Output::new(&args.out, "table1", started);
            out.tables(&reports)?;
            print_table(&reports);
            out.finish(json!(cfg), cfg.seed, Value::Null)
        }
        Command::Table2(args) => {
            let cfg = sim_config(&args.sim, Architecture::CentralSink, Strategy::Def)?;
            if cfg.architecture != Architecture::CentralSink {
                return Err(CliError::Config("table2 is the central-sink table".into()));
            }
            let grid = parse_grid(args.grid.as_deref())?;
            let table = experiments::central_table(&cfg, &grid)?;
            let mut out = Output::new(&args.sim.out, "table2", started);
            out.tables(&table.reports)?;
            out.pairs("sweep_r0.csv", "r0,total_energy", &table.tft_r0_sweep)?;
            print_table(&table.reports);
            say!("TFT row uses r0 = {} (min over r0 grid)", table.tft_best_r0);
            say!(
                "MINIMAL dense-limit prediction: {}",
                table.minimal_prediction
            );
            let extra = json!({
                "tft": { "min_over_r0": true, "best_r0": table.tft_best_r0 },
                "minimal_prediction": table.minimal_prediction,
            });
            out.finish(json!(cfg), cfg.seed, extra)
        }
        Command::SweepNu(args) => {
            let cfg = sim_config(&args.sim, Architecture::AdHoc, Strategy::Coop)?;
            let grid = parse_grid(args.grid.as_deref())?;
            let rows = experiments::sweep_nu(cfg.architecture, cfg.strategy, &grid, &cfg)?;
            let mut out = Output::new(&args.sim.out, "sweep-nu", started);
            out.pairs("sweep_nu.csv", "nu,total_energy", &rows)?;
            print_pairs("nu", &rows);
            let extra = json!({ "argmin": experiments::argmin(&rows).map(|p| p.0) });
            out.finish(json!(cfg), cfg.seed, extra)
        }
        Command::SweepR0(args) => {
            let cfg = sim_config(&args.sim, Architecture::CentralSink, Strategy::Tft)?;
            let grid = parse_grid(args.grid.as_deref())?;
            let rows = experiments::sweep_initial_cooperator(&grid, &cfg)?;
            let mut out = Output::new(&args.sim.out, "sweep-r0", started);
            out.pairs("sweep_r0.csv", "r0,total_energy", &rows)?;
            print_pairs("r0", &rows);
            let extra = json!({ "argmin": experiments::argmin(&rows).map(|p| p.0) });
            out.finish(json!(cfg), cfg.seed, extra)
        }
        Command::Dynamics(args) => {
            let cfg = sim_config(&args, Architecture::AdHoc, Strategy::Tft)?;
            let report = experiments::cooperation_dynamics(cfg.strategy, cfg.architecture, &cfg)?;
            let mut out = Output::new(&args.out, "dynamics", started);
            let mut csv = String::from("strategy,iteration,coop_fraction\n");
            for (n, f) in report.series.iter().enumerate() {
                writeln!(csv, "{},{n},{f}", report.strategy).unwrap();
            }
            out.file("dynamics.csv", &csv)?;
            say!(
                "{} {}: final fraction median {} (mean over run {})",
                report.strategy,
                report.architecture,
                report.median_final(),
                report.series.iter().sum::<f64>() / report.series.len() as f64
            );
            out.finish(json!(cfg), cfg.seed, Value::Null)
        }
        Command::DenseQmin(args) => {
            let d = dense_settings(&args)?;
            let (y, q) = dense::q_min(d.x, d.alpha).map_err(|e| CliError::Config(e.to_string()))?;
            let mut out = Output::new(&args.out, "dense-qmin", started);
            out.file(
                "dense_qmin.csv",
                &format!("alpha,x,y_star,q\n{},{},{y},{q}\n", d.alpha, d.x),
            )?;
            say!("y*={y} q={q}");
            out.finish(json!(d), 0, Value::Null)
        }
        Command::DenseEmin(args) => {
            let d = dense_settings(&args)?;
            let params = DenseParams::new(d.radius, d.alpha, d.k)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let e = dense::minimal_total_energy(&params)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let closed = dense::minimal_total_energy_closed_form(&params)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut out = Output::new(&args.out, "dense-emin", started);
            out.file(
                "dense_emin.csv",
                &format!(
                    "alpha,radius,k,e_min,e_closed_form\n{},{},{},{e},{closed}\n",
                    d.alpha, d.radius, d.k
                ),
            )?;
            say!("E_min={e} (closed form {closed})");
            out.finish(json!(d), 0, Value::Null)
        }
        Command::DenseBalance(args) => {
            let d = dense_settings(&args)?;
            if d.alpha <= 1.0 {
                return Err(CliError::Config(format!(
                    "alpha must exceed 1, got {}",
                    d.alpha
                )));
            }
            let model = RingModel::for_radius(d.radius, d.rings)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let result = dense::balance_optimize(&model, d.alpha, d.max_iters, d.tol);
            let profile = dense::ring_energy_profile(&model, &result.distribution, d.alpha)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let mut out = Output::new(&args.out, "dense-balance", started);
            let mut csv = String::from("i,j,p_ij\n");
            for (i, row) in result.distribution.rows().iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    writeln!(csv, "{},{j},{p}", i + 1).unwrap();
                }
            }
            out.file("dense_balance.csv", &csv)?;
            let mut csv = String::from("i,E_i\n");
            for (i, e) in profile.iter().enumerate() {
                writeln!(csv, "{},{e}", i + 1).unwrap();
            }
            out.file("ring_energy.csv", &csv)?;
            say!(
                "rings={} variance={} mean={} iterations={} converged={} pg_norm={}",
                d.rings,
                result.variance,
                result.mean,
                result.iterations,
                result.converged,
                result.projected_gradient_norm
            );
            let extra = json!({
                "variance": result.variance,
                "mean": result.mean,
                "iterations": result.iterations,
                "converged": result.converged,
                "projected_gradient_norm": result.projected_gradient_norm,
            });
            out.finish(json!(d), 0, extra)
        }
    }
}

/// Defaults, then the config file, then flags.
fn sim_config(
    args: &SimArgs,
    arch: Architecture,
    strategy: Strategy,
) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::desk(arch, strategy);
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    // Scale first so explicit --iters/--reps win over the preset.
    let flags = [
        ("scale", &args.scale),
        ("arch", &args.arch),
        ("strategy", &args.strategy),
        ("protocol", &args.protocol),
        ("m", &args.m),
        ("alpha", &args.alpha),
        ("nu", &args.nu),
        ("slots", &args.slots),
        ("iters", &args.iters),
        ("reps", &args.reps),
        ("seed", &args.seed),
        ("r0", &args.r0),
        ("traffic", &args.traffic),
        ("tft_tie", &args.tft_tie),
        ("wsls_tie", &args.wsls_tie),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)
                .map_err(|e| CliError::Config(format!("--{key}: {e}")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_grid(text: Option<&str>) -> Result<Vec<f64>, CliError> {
    let Some(text) = text else {
        return Ok(experiments::default_grid());
    };
    let grid = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("--grid value '{v}': {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if grid.is_empty() {
        return Err(CliError::Config("--grid is empty".into()));
    }
    Ok(grid)
}

#[derive(Debug, Clone, Serialize)]
struct DenseSettings {
    alpha: f64,
    x: f64,
    radius: f64,
    k: f64,
    rings: usize,
    max_iters: usize,
    tol: f64,
}

impl DenseSettings {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("'{v}': {e}"))
        }
        match key {
            "alpha" => self.alpha = num(value)?,
            "x" => self.x = num(value)?,
            "radius" => self.radius = num(value)?,
            "k" => self.k = num(value)?,
            "rings" => self.rings = num(value)?,
            "max_iters" => self.max_iters = num(value)?,
            "tol" => self.tol = num(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }
}

fn dense_settings(args: &DenseArgs) -> Result<DenseSettings, CliError> {
    let mut d = DenseSettings {
        alpha: 4.0,
        x: 1.0,
        radius: 1.0,
        k: 1.0,
        rings: 50,
        max_iters: 20_000,
        tol: 1e-6,
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        for (key, value, line) in parse_key_values(&text)? {
            d.set(&key, &value)
                .map_err(|reason| CliError::from(ConfigError::Parse { line, reason }))?;
        }
    }
    let flags = [
        ("alpha", &args.alpha),
        ("x", &args.x),
        ("radius", &args.radius),
        ("k", &args.k),
        ("rings", &args.rings),
        ("max_iters", &args.max_iters),
        ("tol", &args.tol),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            d.set(key, v)
                .map_err(|e| CliError::Config(format!("--{key}: {e}")))?;
        }
    }
    if d.rings == 0 {
        return Err(CliError::Config("rings must be at least 1".into()));
    }
    Ok(d)
}

/// Collects output files and writes the manifest last.
struct Output {
    dir: PathBuf,
    command: &'static str,
    started: Instant,
    files: Vec<Value>,
}

impl Output {
    fn new(dir: &Path, command: &'static str, started: Instant) -> Self {
        Output {
            dir: dir.to_path_buf(),
            command,
            started,
            files: Vec::new(),
        }
    }

    fn file(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        write_atomic(&self.dir, name, contents.as_bytes())?;
        self.files.push(json!({
            "name": name,
            "bytes": contents.len(),
            "sha256": hex::encode(Sha256::digest(contents.as_bytes())),
        }));
        Ok(())
    }

    fn pairs(&mut self, name: &str, header: &str, rows: &[(f64, f64)]) -> Result<(), CliError> {
        let mut csv = format!("{header}\n");
        for (x, y) in rows {
            writeln!(csv, "{x},{y}").unwrap();
        }
        self.file(name, &csv)
    }

    fn tables(&mut self, reports: &[NormalizedEnergyReport]) -> Result<(), CliError> {
        let mut table = String::from("strategy,mean_energy,std_energy\n");
        let mut radial = String::from("strategy,bin_center,mean_energy\n");
        let mut dynamics = String::from("strategy,iteration,coop_fraction\n");
        for r in reports {
            writeln!(table, "{},{},{}", r.strategy, r.mean_energy, r.std_energy).unwrap();
            for (c, e) in &r.per_radius_bins {
                writeln!(radial, "{},{c},{e}", r.strategy).unwrap();
            }
            for (n, f) in &r.coop_fraction_series {
                writeln!(dynamics, "{},{n},{f}", r.strategy).unwrap();
            }
        }
        self.file("table.csv", &table)?;
        self.file("radial.csv", &radial)?;
        self.file("dynamics.csv", &dynamics)
    }

    fn finish(self, config: Value, seed: u64, extra: Value) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "coopnet",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": config,
            "seed": seed,
            "duration_secs": self.started.elapsed().as_secs_f64(),
            "files": self.files,
            "results": extra,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_atomic(&self.dir, "manifest.json", text.as_bytes())?;
        say!(
            "wrote {} file(s) and manifest.json to {}",
            self.files.len(),
            self.dir.display()
        );
        Ok(())
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn print_table(reports: &[NormalizedEnergyReport]) {
    say!("{:<10} {:>12} {:>12}", "strategy", "mean", "std");
    for r in reports {
        say!(
            "{:<10} {:>12.5} {:>12.5}",
            r.strategy.name(),
            r.mean_energy,
            r.std_energy
        );
    }
}

fn print_pairs(label: &str, rows: &[(f64, f64)]) {
    say!("{label:<8} {:>12}", "energy");
    for (x, y) in rows {
        say!("{x:<8.3} {y:>12.5}");
    }
    if let Some((x, y)) = experiments::argmin(rows) {
        say!("minimum at {label} = {x} ({y:.5})");
    }
}
