//! Detecting Byzantine relays in a two-relay network when the destination
//! has no clean reference to compare against.
//!
//! Two relays observe correlated inputs `U1`, `U2` and forward `V1`, `V2` to
//! a destination that only sees `Y`. The destination compares the type of
//! `Y` with the output distribution it would expect from honest relays
//! ([`detect`]); this works unless the channel admits an undetectable attack
//! ([`manipulability`]).
//!
//! Matrices are column-stochastic throughout: column `j` of a conditional
//! PMF is the distribution of the output given input symbol `j`. Symbols are
//! 1-based and pairs `(k, t)` are packed as `(k − 1)|U2| + t`.

pub mod attacks;
pub mod channel;
pub mod detect;
pub mod empirics;
pub mod error;
pub mod files;
pub mod manipulability;
pub mod scenario;
mod search;
pub mod simulate;
pub mod stats;

pub use attacks::{apply_attack, stationarity_diagnostic, AttackSpec, StationarityReport};
pub use channel::{
    expected_output_pmf, joint_pmf_from_product, kron, pack_pairs, pair_index, pair_unindex, Alphabet,
    ObservationChannel, Pmf, StochasticMatrix, Symbol,
};
pub use detect::{classify, decision_statistic, estimate_attack_types, AttackTypeEstimate, Decision, DetectionVerdict};
pub use empirics::{conditional_type, empirical_pmf, factorization_gap, joint_conditional_type, ConditionalType};
pub use error::{Error, Result};
pub use manipulability::{check, search_witness, verify_witness, ManipulabilityVerdict, Tolerances};
pub use scenario::{run_scenario, ScenarioConfig, TrialRecord};
pub use simulate::{run_network, NetworkSpec, NetworkTrace, RelayChannel, RngStream};
pub use stats::{empirical_cdf, ks_critical_value, ks_two_sample};
