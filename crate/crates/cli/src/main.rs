use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use byzrelay_core::files::{self, builtin_channel, builtin_scenario};
use byzrelay_core::manipulability::{check, ManipulabilityVerdict, Tolerances};
use byzrelay_core::scenario::{parse_records, run_scenario, write_cdf, write_records, ScenarioConfig, TrialRecord};
use byzrelay_core::stats::{empirical_cdf, ks_critical_value, ks_two_sample};
use byzrelay_core::{Decision, Error, Result, StochasticMatrix};

/// Detect Byzantine relays without a clean reference.
///
/// Channel and scenario arguments are TOML files or the names of the
/// bundled configurations (sec5a, sec5b, sec5a-attack1, ...).
#[derive(Parser)]
#[command(name = "byzrelay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify or refute non-manipulability of an observation channel.
    CheckChannel {
        channel: String,
        /// Seed for the random witness-search starts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random witness-search starts.
        #[arg(long, default_value_t = 2000)]
        budget: usize,
    },
    /// Run a scenario and write one CSV record per trial.
    Simulate {
        scenario: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
        /// Output CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write the empirical CDF of the statistic.
    Cdf {
        scenario: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and report the verdict of every trial.
    Detect {
        scenario: String,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Two-sample Kolmogorov-Smirnov distance between two `simulate` outputs.
    Ks {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
    },
}

#[derive(clap::Args)]
struct Overrides {
    /// Block length.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Detection threshold.
    #[arg(long)]
    delta: Option<f64>,
}

fn load_scenario(arg: &str, seed: u64, o: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = if Path::new(arg).exists() {
        files::load_scenario(Path::new(arg))?
    } else {
        builtin_scenario(arg).map_err(|_| {
            Error::InvalidArgument(format!(
                "`{arg}` is neither a file nor a bundled scenario ({})",
                files::builtin_scenario_names().collect::<Vec<_>>().join(", ")
            ))
        })?
    };
    cfg.master_seed = seed;
    if let Some(n) = o.n {
        cfg.n = n;
    }
    if let Some(t) = o.trials {
        cfg.trials = t;
    }
    if let Some(d) = o.delta {
        cfg.delta = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn summary(records: &[TrialRecord]) -> String {
    let detected = records.iter().filter(|r| r.verdict == Decision::AttackDetected).count();
    let mut d: Vec<f64> = records.iter().map(|r| r.statistic).collect();
    d.sort_by(f64::total_cmp);
    format!(
        "{} trials, {detected} AttackDetected ({:.1}%), median D {:.6e}",
        records.len(),
        100.0 * detected as f64 / records.len() as f64,
        d[d.len() / 2]
    )
}

fn print_matrix(name: &str, m: &StochasticMatrix) {
    println!("{name} =");
    for row in m.to_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        println!("  [{}]", cells.join(", "));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CheckChannel { channel, seed, budget } => {
            let desc = if Path::new(&channel).exists() {
                files::load_channel(Path::new(&channel))?
            } else {
                builtin_channel(&channel)?
            };
            let ch = desc.observation_channel()?;
            let verdict = check(&ch, &Tolerances::default(), budget, seed)?;
            println!("verdict: {}", verdict.label());
            println!("lp_optimum: {:.12}", verdict.lp_optimum());
            println!("full_trace: {}", ch.u1_size() + ch.u2_size());
            match &verdict {
                ManipulabilityVerdict::Manipulable { witness, residual, .. } => {
                    println!("residual: {residual:.3e}");
                    print_matrix("relay1", &witness.0);
                    print_matrix("relay2", &witness.1);
                }
                ManipulabilityVerdict::Inconclusive { best_witness_objective, best_residual, .. } => {
                    println!("best_candidate_distance: {best_witness_objective:.6}");
                    println!("best_candidate_residual: {best_residual:.3e}");
                }
                ManipulabilityVerdict::NonManipulable { .. } => {}
            }
        }
        Command::Simulate { scenario, seed, overrides, out } => {
            let cfg = load_scenario(&scenario, seed, &overrides)?;
            let records = run_scenario(&cfg)?;
            let mut w = output(out.as_deref())?;
            write_records(&mut w, &records)?;
            w.flush()?;
            eprintln!("{}: {}", cfg.name, summary(&records));
        }
        Command::Cdf { scenario, seed, overrides, out } => {
            let cfg = load_scenario(&scenario, seed, &overrides)?;
            let stats: Vec<f64> = run_scenario(&cfg)?.into_iter().map(|r| r.statistic).collect();
            let mut w = output(out.as_deref())?;
            write_cdf(&mut w, &empirical_cdf(&stats)?)?;
            w.flush()?;
        }
        Command::Detect { scenario, seed, overrides } => {
            let cfg = load_scenario(&scenario, seed, &overrides)?;
            let records = run_scenario(&cfg)?;
            let mut w = output(None)?;
            writeln!(w, "trial,statistic,verdict")?;
            for r in &records {
                writeln!(w, "{},{:.6e},{}", r.trial_index, r.statistic, r.verdict)?;
            }
            writeln!(w, "# {} (delta = {}): {}", cfg.name, cfg.delta, summary(&records))?;
            w.flush()?;
        }
        Command::Ks { a, b, alpha } => {
            let read = |p: &Path| -> Result<Vec<f64>> {
                let text = std::fs::read_to_string(p)?;
                Ok(parse_records(&text, &p.display().to_string())?.into_iter().map(|r| r.statistic).collect())
            };
            let (sa, sb) = (read(&a)?, read(&b)?);
            let d = ks_two_sample(&sa, &sb)?;
            let crit = ks_critical_value(alpha, sa.len(), sb.len())?;
            println!("ks_statistic: {d:.6}");
            println!("critical_value: {crit:.6} (alpha = {alpha}, sizes {} and {})", sa.len(), sb.len());
            println!("{}", if d < crit { "indistinguishable" } else { "distinguishable" });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
