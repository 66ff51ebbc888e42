//! Monte Carlo scenarios: many independent blocks through one network,
//! each reduced to a decision statistic and verdict.

use std::io::Write;

use rayon::prelude::*;

use crate::attacks::AttackSpec;
use crate::detect::{classify, decision_statistic, Decision};
use crate::error::{Error, Result};
use crate::simulate::{run_network, NetworkSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Label written into every record; letters, digits, `-`, `_`, `.`.
    pub name: String,
    pub network: NetworkSpec,
    pub attack1: AttackSpec,
    pub attack2: AttackSpec,
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub delta: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(Error::field("name", format!("`{}` must be non-empty and use only [A-Za-z0-9_.-]", self.name)));
        }
        if self.n == 0 {
            return Err(Error::field("n", "block length must be at least 1"));
        }
        if self.trials == 0 {
            return Err(Error::field("trials", "at least one trial is required"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::field("delta", format!("threshold must be positive, got {}", self.delta)));
        }
        let shifts = matches!(self.attack1, AttackSpec::PermutationShift) || matches!(self.attack2, AttackSpec::PermutationShift);
        if shifts && self.n % 2 != 0 {
            return Err(Error::field("n", format!("the half-shift permutation needs an even block length, got {}", self.n)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub scenario: String,
    pub trial_index: u64,
    pub n: usize,
    pub seed: u64,
    pub statistic: f64,
    pub verdict: Decision,
}

/// Runs every trial (in parallel) and returns the records in trial order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let ch = cfg.network.observation_channel()?;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let trace = run_network(&cfg.network, &cfg.attack1, &cfg.attack2, cfg.n, cfg.master_seed, t)?;
            let statistic = decision_statistic(&trace.y, &ch)?;
            Ok(TrialRecord {
                scenario: cfg.name.clone(),
                trial_index: t,
                n: cfg.n,
                seed: cfg.master_seed,
                statistic,
                verdict: classify(statistic, cfg.delta)?.decision,
            })
        })
        .collect()
}

pub const RECORD_HEADER: &str = "scenario,trial_index,n,seed,statistic,verdict";
pub const CDF_HEADER: &str = "value,fraction";

/// `{:.16e}` prints 17 significant digits, enough to round-trip any f64.
pub fn write_records<W: Write>(mut out: W, records: &[TrialRecord]) -> Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{:.16e},{}", r.scenario, r.trial_index, r.n, r.seed, r.statistic, r.verdict)?;
    }
    Ok(())
}

pub fn parse_records(text: &str, source_name: &str) -> Result<Vec<TrialRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        _ => return Err(err(1, format!("expected header `{RECORD_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let num = |s: &str, what: &str| -> Result<u64> { s.parse().map_err(|_| err(i + 1, format!("bad {what} `{s}`"))) };
        let statistic: f64 = f[4].parse().map_err(|_| err(i + 1, format!("bad statistic `{}`", f[4])))?;
        if !(statistic >= 0.0) {
            return Err(err(i + 1, format!("statistic must be non-negative, got {statistic}")));
        }
        out.push(TrialRecord {
            scenario: f[0].to_string(),
            trial_index: num(f[1], "trial_index")?,
            n: num(f[2], "n")? as usize,
            seed: num(f[3], "seed")?,
            statistic,
            verdict: f[5].parse().map_err(|e: Error| err(i + 1, e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_cdf<W: Write>(mut out: W, cdf: &[(f64, f64)]) -> Result<()> {
    writeln!(out, "{CDF_HEADER}")?;
    for (v, f) in cdf {
        writeln!(out, "{v:.16e},{f:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::files::builtin_scenario;

    fn small(name: &str, seed: u64) -> ScenarioConfig {
        let mut cfg = builtin_scenario(name).unwrap();
        cfg.n = 1000;
        cfg.trials = 8;
        cfg.master_seed = seed;
        cfg
    }

    #[test]
    fn records_are_ordered_and_deterministic() {
        let cfg = small("sec5a-attack2", 11);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.trial_index).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
        assert!(a.iter().all(|r| r.statistic >= 0.0 && r.n == 1000 && r.seed == 11));
        let c = run_scenario(&small("sec5a-attack2", 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_trial_repeats() {
        let mut cfg = small("sec5a-nonmalicious", 3);
        cfg.trials = 1;
        assert_eq!(run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records = run_scenario(&small("sec5b-attack3", 5)).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(RECORD_HEADER));
        assert_eq!(parse_records(&text, "mem").unwrap(), records);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_records("a,b\n", "mem").is_err());
        let bad = format!("{RECORD_HEADER}\ns,0,10,1,-1.0,Safe\n");
        assert!(parse_records(&bad, "mem").is_err());
        let bad = format!("{RECORD_HEADER}\ns,0,10,1,0.5,Maybe\n");
        assert!(parse_records(&bad, "mem").is_err());
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let mut cfg = small("sec5c-permutation-a", 0);
        cfg.n = 999;
        assert!(matches!(run_scenario(&cfg), Err(Error::Validation { ref field, .. }) if field == "n"));
        let mut cfg = small("sec5a-nonmalicious", 0);
        cfg.delta = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Validation { ref field, .. }) if field == "delta"));
        cfg.delta = 0.01;
        cfg.name = "a,b".into();
        assert!(matches!(cfg.validate(), Err(Error::Validation { ref field, .. }) if field == "name"));
    }
}
