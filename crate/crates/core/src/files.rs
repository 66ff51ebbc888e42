//! TOML channel, attack and scenario files.
//!
//! Every file must declare `convention = "column-stochastic"`. Matrices are
//! written as lists of rows; in a column-stochastic matrix each *column*
//! sums to one, so `P(U|X)` with three outputs and two inputs is written as
//! three rows of two entries. The Markov jammer's `transition_rows` is the
//! one exception: it is row-stochastic, `transition_rows[a][b] =
//! Pr{J_{i+1} = b | J_i = a}`.
//!
//! ```toml
//! convention = "column-stochastic"
//!
//! [network]
//! p_x = [0.5, 0.5]
//! p_u1_given_x = [[0.9, 0.0], [0.1, 0.1], [0.0, 0.9]]
//! p_u2_given_x = [[0.9, 0.0], [0.1, 0.1], [0.0, 0.9]]
//! forward = "identity"
//! ```
//!
//! A scenario file adds `name`, `n`, `trials`, `delta`, an optional `seed`,
//! either an inline `[network]` table or `network_file = "..."`, and
//! `[attack1]` / `[attack2]` tables keyed by `kind`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::attacks::AttackSpec;
use crate::channel::{Alphabet, ObservationChannel, Pmf, StochasticMatrix};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::simulate::{NetworkSpec, RelayChannel};

pub const CONVENTION: &str = "column-stochastic";

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatrixField {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkTable {
    p_x: Vec<f64>,
    p_u1_given_x: Option<Vec<Vec<f64>>>,
    p_u2_given_x: Option<Vec<Vec<f64>>>,
    p_u1u2_given_x: Option<Vec<Vec<f64>>>,
    u1_size: Option<usize>,
    u2_size: Option<usize>,
    forward: MatrixField,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationTable {
    u1_size: usize,
    u2_size: usize,
    joint_input: Vec<f64>,
    forward: MatrixField,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelFile {
    convention: Option<String>,
    network: Option<NetworkTable>,
    observation: Option<ObservationTable>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
enum AttackTable {
    Identity,
    Iid {
        p_v_given_u: Vec<Vec<f64>>,
    },
    Alternating {
        p_odd: Vec<Vec<f64>>,
        p_even: Vec<Vec<f64>>,
    },
    MarkovJammer {
        p_j1: Vec<f64>,
        transition_rows: Vec<Vec<f64>>,
        q: usize,
    },
    PermutationShift,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    convention: Option<String>,
    name: String,
    network: Option<NetworkTable>,
    network_file: Option<String>,
    attack1: Option<AttackTable>,
    attack2: Option<AttackTable>,
    n: usize,
    trials: usize,
    seed: Option<u64>,
    delta: f64,
}

/// What a channel file describes: a full network (which can be
/// simulated) or only the destination's view of it.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelDescription {
    Network(NetworkSpec),
    Observation(ObservationChannel),
}

impl ChannelDescription {
    pub fn observation_channel(&self) -> Result<ObservationChannel> {
        match self {
            ChannelDescription::Network(n) => n.observation_channel(),
            ChannelDescription::Observation(o) => Ok(o.clone()),
        }
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        message: e.to_string(),
    })
}

fn check_convention(c: Option<&str>) -> Result<()> {
    match c {
        Some(CONVENTION) => Ok(()),
        Some(other) => Err(Error::field(
            "convention",
            format!("expected \"{CONVENTION}\", found \"{other}\"; transpose row-stochastic matrices before loading"),
        )),
        None => Err(Error::field("convention", format!("missing; add `convention = \"{CONVENTION}\"`"))),
    }
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<StochasticMatrix> {
    StochasticMatrix::from_rows(rows).map_err(|e| Error::field(field, e.to_string()))
}

fn pmf(values: &[f64], field: &str) -> Result<Pmf> {
    Pmf::new(values.to_vec()).map_err(|e| Error::field(field, e.to_string()))
}

fn forward(m: &MatrixField, joint: usize, field: &str) -> Result<StochasticMatrix> {
    match m {
        MatrixField::Named(s) if s == "identity" => Ok(StochasticMatrix::identity(joint)),
        MatrixField::Named(s) => Err(Error::field(field, format!("unknown matrix name \"{s}\" (only \"identity\")"))),
        MatrixField::Rows(rows) => matrix(rows, field),
    }
}

fn network(t: &NetworkTable, prefix: &str) -> Result<NetworkSpec> {
    let f = |name: &str| format!("{prefix}.{name}");
    let p_x = pmf(&t.p_x, &f("p_x"))?;
    let (relay, joint) = match (&t.p_u1_given_x, &t.p_u2_given_x, &t.p_u1u2_given_x) {
        (Some(a), Some(b), None) => {
            let (a, b) = (matrix(a, &f("p_u1_given_x"))?, matrix(b, &f("p_u2_given_x"))?);
            let joint = a.rows() * b.rows();
            (RelayChannel::Product { p_u1_given_x: a, p_u2_given_x: b }, joint)
        }
        (None, None, Some(j)) => {
            let (Some(u1_size), Some(u2_size)) = (t.u1_size, t.u2_size) else {
                return Err(Error::field(f("u1_size"), "a joint relay channel needs u1_size and u2_size"));
            };
            let m = matrix(j, &f("p_u1u2_given_x"))?;
            (RelayChannel::Joint { p_u1u2_given_x: m, u1_size, u2_size }, u1_size * u2_size)
        }
        _ => {
            return Err(Error::field(
                prefix,
                "give either p_u1_given_x and p_u2_given_x, or p_u1u2_given_x",
            ))
        }
    };
    let fwd = forward(&t.forward, joint, &f("forward"))?;
    NetworkSpec::new(p_x, relay, fwd).map_err(|e| Error::field(prefix, e.to_string()))
}

pub fn parse_channel(text: &str, source_name: &str) -> Result<ChannelDescription> {
    let file: ChannelFile = parse_toml(text, source_name)?;
    check_convention(file.convention.as_deref())?;
    match (file.network, file.observation) {
        (Some(n), None) => Ok(ChannelDescription::Network(network(&n, "network")?)),
        (None, Some(o)) => {
            let p = pmf(&o.joint_input, "observation.joint_input")?;
            let fwd = forward(&o.forward, o.u1_size * o.u2_size, "observation.forward")?;
            let ch = ObservationChannel::new(o.u1_size, o.u2_size, p, fwd)
                .map_err(|e| Error::field("observation", e.to_string()))?;
            Ok(ChannelDescription::Observation(ch))
        }
        (Some(_), Some(_)) => Err(Error::field("network", "give [network] or [observation], not both")),
        (None, None) => Err(Error::field("network", "missing [network] or [observation] table")),
    }
}

fn attack(t: Option<&AttackTable>, alphabet: Alphabet, field: &str) -> Result<AttackSpec> {
    let f = |name: &str| format!("{field}.{name}");
    let spec = match t {
        None | Some(AttackTable::Identity) => AttackSpec::Identity,
        Some(AttackTable::Iid { p_v_given_u }) => AttackSpec::Iid {
            p_v_given_u: matrix(p_v_given_u, &f("p_v_given_u"))?,
        },
        Some(AttackTable::Alternating { p_odd, p_even }) => AttackSpec::Alternating {
            p_odd: matrix(p_odd, &f("p_odd"))?,
            p_even: matrix(p_even, &f("p_even"))?,
        },
        Some(AttackTable::MarkovJammer { p_j1, transition_rows, q }) => AttackSpec::MarkovJammer {
            p_j1: pmf(p_j1, &f("p_j1"))?,
            transition: transition_rows.clone(),
            q: *q,
        },
        Some(AttackTable::PermutationShift) => AttackSpec::PermutationShift,
    };
    spec.validate(alphabet).map_err(|e| match e {
        Error::Validation { field: inner, message } => Error::field(f(&inner), message),
        other => Error::field(field, other.to_string()),
    })?;
    Ok(spec)
}

/// Parses a scenario. `resolve` maps a `network_file` value to the text of
/// that file.
pub fn parse_scenario(
    text: &str,
    source_name: &str,
    resolve: &dyn Fn(&str) -> Result<(String, String)>,
) -> Result<ScenarioConfig> {
    let file: ScenarioFile = parse_toml(text, source_name)?;
    check_convention(file.convention.as_deref())?;
    let net = match (&file.network, &file.network_file) {
        (Some(t), None) => network(t, "network")?,
        (None, Some(path)) => {
            let (text, name) = resolve(path)?;
            match parse_channel(&text, &name)? {
                ChannelDescription::Network(n) => n,
                ChannelDescription::Observation(_) => {
                    return Err(Error::field(
                        "network_file",
                        format!("{name} has only an [observation] table; simulation needs a [network]"),
                    ))
                }
            }
        }
        (Some(_), Some(_)) => return Err(Error::field("network", "give [network] or network_file, not both")),
        (None, None) => return Err(Error::field("network", "missing [network] table or network_file")),
    };
    let a1 = attack(file.attack1.as_ref(), Alphabet::new(net.u1_size())?, "attack1")?;
    let a2 = attack(file.attack2.as_ref(), Alphabet::new(net.u2_size())?, "attack2")?;
    let cfg = ScenarioConfig {
        name: file.name,
        network: net,
        attack1: a1,
        attack2: a2,
        n: file.n,
        trials: file.trials,
        master_seed: file.seed.unwrap_or(0),
        delta: file.delta,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_channel(path: &Path) -> Result<ChannelDescription> {
    let text = std::fs::read_to_string(path)?;
    parse_channel(&text, &path.display().to_string())
}

/// Loads a scenario file; `network_file` is resolved relative to it.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = move |rel: &str| -> Result<(String, String)> {
        let p: PathBuf = dir.join(rel);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::field("network_file", format!("{}: {e}", p.display())))?;
        Ok((text, p.display().to_string()))
    };
    parse_scenario(&text, &path.display().to_string(), &resolve)
}

const BUILTIN_CHANNELS: [(&str, &str); 2] = [
    ("sec5a", include_str!("../scenarios/sec5a.toml")),
    ("sec5b", include_str!("../scenarios/sec5b.toml")),
];

const BUILTIN_SCENARIOS: [(&str, &str); 7] = [
    ("sec5a-nonmalicious", include_str!("../scenarios/sec5a-nonmalicious.toml")),
    ("sec5a-attack1", include_str!("../scenarios/sec5a-attack1.toml")),
    ("sec5a-attack2", include_str!("../scenarios/sec5a-attack2.toml")),
    ("sec5b-nonmalicious", include_str!("../scenarios/sec5b-nonmalicious.toml")),
    ("sec5b-attack3", include_str!("../scenarios/sec5b-attack3.toml")),
    ("sec5c-permutation-a", include_str!("../scenarios/sec5c-permutation-a.toml")),
    ("sec5c-permutation-b", include_str!("../scenarios/sec5c-permutation-b.toml")),
];

pub fn builtin_channel_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_CHANNELS.iter().map(|(n, _)| *n)
}

pub fn builtin_scenario_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_SCENARIOS.iter().map(|(n, _)| *n)
}

fn builtin_channel_text(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUILTIN_CHANNELS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn builtin_channel(name: &str) -> Result<ChannelDescription> {
    let text = builtin_channel_text(name).ok_or_else(|| Error::arg(format!("no builtin channel named `{name}`")))?;
    parse_channel(text, name)
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = BUILTIN_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::arg(format!("no builtin scenario named `{name}`")))?;
    let resolve = |rel: &str| -> Result<(String, String)> {
        builtin_channel_text(rel)
            .map(|t| (t.to_string(), rel.to_string()))
            .ok_or_else(|| Error::field("network_file", format!("no builtin channel `{rel}`")))
    };
    parse_scenario(text, name, &resolve)
}
