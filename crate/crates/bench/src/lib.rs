//! Fixtures shared by the benchmarks.

use byzrelay_core::files::{builtin_channel, builtin_scenario, ChannelDescription};
use byzrelay_core::{NetworkSpec, ObservationChannel, ScenarioConfig};

pub fn network(name: &str) -> NetworkSpec {
    match builtin_channel(name).expect("builtin channel") {
        ChannelDescription::Network(n) => n,
        ChannelDescription::Observation(_) => unreachable!("builtin channels describe full networks"),
    }
}

pub fn observation(name: &str) -> ObservationChannel {
    network(name).observation_channel().expect("valid builtin network")
}

pub fn scenario(name: &str) -> ScenarioConfig {
    builtin_scenario(name).expect("builtin scenario")
}
