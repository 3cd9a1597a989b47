//! Command-line front end.

mod config_file;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use crate::conditions::{orthogonalize, ConditionReport, Verdict};
use crate::error::{MisfitError, Result};
use crate::inference::{assumed_information, fit_mle, SolverOptions};
use crate::mixture_lik::{ExpectMethod, PairObs};
use crate::scenarios::{run_scenario, scenario_conditions, ScenarioConfig};

pub use config_file::{digest, parse_config, parse_pairs, serialize_config};
pub use output::{conditions_csv, estimates_csv, num, summary_json, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_EXPECT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "misfit", version, about = "Consistency checks and Monte Carlo studies for misspecified nuisance models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the consistency conditions of a scenario and print verdicts.
    Check(Common),
    /// Fit the assumed model to one dataset.
    Fit(FitArgs),
    /// Run the Monte Carlo study of a scenario.
    Simulate(Common),
    /// Emit the orthogonalizing path (ψ, λ(ψ)).
    Orthogonalize(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expect {
    Holds,
    Fails,
    Any,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all logical cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "any")]
    expect: Expect,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with columns y1,y0[,r1,r0]; a header line is optional.
    #[arg(long)]
    data: PathBuf,
}

fn exit_code(e: &MisfitError) -> i32 {
    match e {
        MisfitError::NumericalFailure { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("MISFIT_LOG", "error")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let common = match &cli.command {
        Command::Check(c) | Command::Simulate(c) | Command::Orthogonalize(c) => c,
        Command::Fit(f) => &f.common,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Loaded {
    config: ScenarioConfig,
    digest: String,
}

fn load(c: &Common) -> Result<Loaded> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| MisfitError::Config(format!("cannot read {}: {e}", c.config.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if let Some(r) = c.reps {
        config.reps = r;
    }
    config.validate()?;
    Ok(Loaded { config, digest: digest(&text)? })
}

fn manifest(command: &str, c: &Common, loaded: &Loaded) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config_path: c.config.display().to_string(),
        config_digest: loaded.digest.clone(),
        seed: loaded.config.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        start_unix_secs: output::unix_now(),
        end_unix_secs: None,
        outputs: vec![],
    }
}

fn out_dir(c: &Common) -> Result<Option<&Path>> {
    match &c.out {
        None => Ok(None),
        Some(d) => {
            fs::create_dir_all(d)?;
            Ok(Some(d.as_path()))
        }
    }
}

fn finish(mut m: RunManifest, dir: &Path, outputs: Vec<PathBuf>) -> Result<()> {
    m.end_unix_secs = Some(output::unix_now());
    m.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
    m.write(dir)
}

fn expectation_code(expect: Expect, reports: &[ConditionReport]) -> i32 {
    let fails = reports.iter().any(|r| r.verdict == Verdict::Fails);
    match expect {
        Expect::Holds if fails => EXIT_EXPECT,
        Expect::Fails if !fails => EXIT_EXPECT,
        _ => EXIT_OK,
    }
}

fn print_verdicts(reports: &[ConditionReport]) {
    println!("{:<20} {:<13} {:>24} {:>7}", "condition", "verdict", "max_abs_residual", "points");
    for r in reports {
        println!("{:<20} {:<13} {:>24} {:>7}", r.condition.name(), r.verdict.name(), num(r.max_abs_residual), r.grid.len());
    }
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Check(c) => {
            let loaded = load(c)?;
            let dir = out_dir(c)?;
            let m = manifest("check", c, &loaded);
            if let Some(d) = dir {
                m.write(d)?;
            }
            let reports = scenario_conditions(&loaded.config, true)?;
            print_verdicts(&reports);
            if let Some(d) = dir {
                let p = d.join("conditions.csv");
                fs::write(&p, conditions_csv(&reports))?;
                finish(m, d, vec![p])?;
            }
            Ok(expectation_code(c.expect, &reports))
        }
        Command::Simulate(c) => {
            let mut loaded = load(c)?;
            let dir = out_dir(c)?.ok_or_else(|| MisfitError::Config("simulate needs --out".into()))?;
            if c.expect != Expect::Any {
                loaded.config.check.in_simulate = true;
            }
            let m = manifest("simulate", c, &loaded);
            m.write(dir)?;
            let report = run_scenario(&loaded.config)?;
            let outputs = output::write_simulation(dir, &report)?;
            finish(m, dir, outputs)?;
            let s = &report.summary;
            println!(
                "{}: n={} reps={} converged={} mean_psi_hat={} bias={} sd={} mean_sandwich_se={}{}",
                s.scenario,
                s.n,
                s.reps,
                s.n_converged,
                num(s.mean_psi_hat),
                num(s.bias),
                num(s.sd),
                num(s.mean_sandwich_se),
                if s.degraded { " DEGRADED" } else { "" }
            );
            if !report.conditions.is_empty() {
                print_verdicts(&report.conditions);
            }
            info!("finished in {:.2}s", report.runtime_secs);
            Ok(expectation_code(c.expect, &report.conditions))
        }
        Command::Fit(f) => {
            let c = &f.common;
            let loaded = load(c)?;
            let assumed = loaded
                .config
                .assumed_model()
                .ok_or_else(|| MisfitError::Config("fit supports the stratified pair scenarios".into()))?;
            let data = read_pairs(&f.data)?;
            let dir = out_dir(c)?;
            let m = manifest("fit", c, &loaded);
            if let Some(d) = dir {
                m.write(d)?;
            }
            let fit = fit_mle(&assumed, &data, None, SolverOptions::default())?;
            let v = json!({
                "n": data.len(),
                "psi_hat": fit.psi_hat,
                "lambda_hat": fit.lambda_hat,
                "lambda_names": loaded.config.assumed_mixing.names(),
                "loglik": fit.loglik,
                "converged": fit.converged,
                "iterations": fit.iterations,
                "gradient_norm": fit.gradient_norm,
                "sandwich_se": fit.sandwich_se(),
                "naive_se": fit.naive_se(),
            });
            let text = serde_json::to_string_pretty(&v).expect("fit serializes");
            println!("{text}");
            if let Some(d) = dir {
                let p = d.join("fit.json");
                fs::write(&p, text + "\n")?;
                finish(m, d, vec![p])?;
            }
            if !fit.converged {
                eprintln!("error: fit did not converge (gradient norm {:e})", fit.gradient_norm);
                return Ok(EXIT_NUMERICAL);
            }
            Ok(EXIT_OK)
        }
        Command::Orthogonalize(c) => {
            let loaded = load(c)?;
            let config = &loaded.config;
            let assumed = config
                .assumed_model()
                .ok_or_else(|| MisfitError::Config("orthogonalize supports the stratified pair scenarios".into()))?;
            let dir = out_dir(c)?;
            let m = manifest("orthogonalize", c, &loaded);
            if let Some(d) = dir {
                m.write(d)?;
            }
            let design = config.design();
            let method = ExpectMethod::Quadrature { level: config.check.quadrature_level };
            let info_fn = |phi: &[f64]| assumed_information(&assumed, phi[0], &phi[1..], &design, method);
            let grid = config.ortho_grid();
            let mut phi0 = vec![grid[0]];
            phi0.extend(config.ortho_lambda0());
            let path = orthogonalize(&info_fn, &phi0, &grid)?;
            let k = phi0.len() - 1;
            let mut table = String::from("psi");
            for j in 1..=k {
                table.push_str(&format!(",lambda_{j}"));
            }
            for j in 1..=k {
                table.push_str(&format!(",cross_info_{j}"));
            }
            table.push('\n');
            for row in &path.rows {
                table.push_str(&num(row.psi));
                for v in row.lambda.iter().chain(&row.cross_info) {
                    table.push(',');
                    table.push_str(&num(*v));
                }
                table.push('\n');
            }
            print!("{table}");
            if let Some(d) = dir {
                let p = d.join("orthogonalize.csv");
                fs::write(&p, &table)?;
                finish(m, d, vec![p])?;
            }
            Ok(EXIT_OK)
        }
    }
}

/// Reads `y1,y0[,r1,r0]` rows; a non-numeric first line is taken as a header.
pub fn read_pairs(path: &Path) -> Result<Vec<PairObs>> {
    let text = fs::read_to_string(path).map_err(|e| MisfitError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let vals: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if out.is_empty() && no == 0 => continue,
            Err(_) => return Err(MisfitError::Config(format!("{}:{}: not a number", path.display(), no + 1))),
        };
        let o = match vals.as_slice() {
            [y1, y0] => PairObs::pair(*y1, *y0),
            [y1, y0, r1, r0] => PairObs::stratum(*y1, *y0, *r1, *r0),
            _ => {
                return Err(MisfitError::Config(format!(
                    "{}:{}: expected 2 or 4 columns, found {}",
                    path.display(),
                    no + 1,
                    vals.len()
                )))
            }
        };
        out.push(o);
    }
    if out.is_empty() {
        return Err(MisfitError::Config(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}
