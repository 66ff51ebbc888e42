//! Seedable sampling of source sequences and channel transitions for the
//! two-relay network.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::attacks::{apply_attack, AttackSpec};
use crate::channel::{
    joint_pmf_from_product, kron, pack_pairs, Alphabet, ObservationChannel, Pmf, StochasticMatrix,
    Symbol,
};
use crate::error::{Error, Result};

/// Which relay an attack or jammer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relay {
    One,
    Two,
}

/// The purpose a random stream is drawn for. Each role of each trial has
/// its own independent stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Source,
    RelayChannel,
    Attack(Relay),
    Forward,
    Jammer(Relay),
    /// Random restarts of the numerical searches.
    Search,
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Source => 1,
            Role::RelayChannel => 2,
            Role::Attack(Relay::One) => 3,
            Role::Attack(Relay::Two) => 4,
            Role::Forward => 5,
            Role::Jammer(Relay::One) => 6,
            Role::Jammer(Relay::Two) => 7,
            Role::Search => 8,
        }
    }
}

/// Address of a reproducible random stream.
///
/// The ChaCha8 key is derived from `(master_seed, role)` and the 64-bit
/// ChaCha stream id is the trial index, so streams are independent of the
/// order in which trials are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub trial_index: u64,
    pub role: Role,
}

impl RngStream {
    pub fn new(master_seed: u64, trial_index: u64, role: Role) -> Self {
        RngStream {
            master_seed,
            trial_index,
            role,
        }
    }

    pub fn with_role(self, role: Role) -> Self {
        RngStream { role, ..self }
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = self.master_seed ^ self.role.code().wrapping_mul(0xA076_1D64_78BD_642F);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(self.trial_index);
        StreamRng { inner }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one stream.
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Inverse-CDF sampler for one conditional PMF.
#[derive(Clone, Debug)]
pub(crate) enum ColumnSampler {
    /// Point mass: no randomness is consumed.
    Fixed(Symbol),
    Cdf { cdf: Vec<f64>, last: Symbol },
}

impl ColumnSampler {
    pub(crate) fn new(probs: &[f64]) -> Self {
        if let Some(k) = probs.iter().position(|&p| p == 1.0) {
            return ColumnSampler::Fixed(k as Symbol + 1);
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as Symbol + 1;
        ColumnSampler::Cdf { cdf, last }
    }

    #[inline]
    pub(crate) fn draw(&self, rng: &mut StreamRng) -> Symbol {
        match self {
            ColumnSampler::Fixed(s) => *s,
            ColumnSampler::Cdf { cdf, last } => {
                let u = rng.uniform();
                // first interval containing u; rounding slack goes to the
                // last positive-probability symbol
                match cdf.iter().position(|&c| u < c) {
                    Some(k) => k as Symbol + 1,
                    None => *last,
                }
            }
        }
    }
}

/// Samplers for all columns of a conditional PMF matrix.
#[derive(Clone, Debug)]
pub(crate) struct ChannelSampler {
    columns: Vec<ColumnSampler>,
}

impl ChannelSampler {
    pub(crate) fn new(m: &StochasticMatrix) -> Self {
        ChannelSampler {
            columns: (0..m.cols())
                .map(|j| ColumnSampler::new(m.column_slice(j)))
                .collect(),
        }
    }

    pub(crate) fn inputs(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub(crate) fn draw(&self, input: Symbol, rng: &mut StreamRng) -> Symbol {
        self.columns[input as usize - 1].draw(rng)
    }

    pub(crate) fn run(&self, inputs: &[Symbol], rng: &mut StreamRng) -> Result<Vec<Symbol>> {
        Alphabet::new(self.inputs())?.check_sequence(inputs)?;
        Ok(inputs.iter().map(|&s| self.draw(s, rng)).collect())
    }
}

/// `n` i.i.d. symbols distributed according to `p`.
pub fn sample_iid(p: &Pmf, n: usize, stream: &RngStream) -> Vec<Symbol> {
    let sampler = ColumnSampler::new(p.as_slice());
    let mut rng = stream.rng();
    (0..n).map(|_| sampler.draw(&mut rng)).collect()
}

/// Passes `inputs` through the memoryless channel `cond`, drawing output
/// `i` from column `inputs[i]`.
pub fn sample_through(
    cond: &StochasticMatrix,
    inputs: &[Symbol],
    stream: &RngStream,
) -> Result<Vec<Symbol>> {
    ChannelSampler::new(cond).run(inputs, &mut stream.rng())
}

/// Channel from the source to the two relays.
#[derive(Clone, Debug, PartialEq)]
pub enum RelayChannel {
    /// Independent channels `P_{U1|X}` and `P_{U2|X}`.
    Product {
        p_u1_given_x: StochasticMatrix,
        p_u2_given_x: StochasticMatrix,
    },
    /// General joint channel `P_{U1,U2|X}` with pair-packed rows.
    Joint {
        p_u1u2_given_x: StochasticMatrix,
        u1_size: usize,
        u2_size: usize,
    },
}

/// Source distribution, relay channel and relays-to-destination channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    p_x: Pmf,
    relay: RelayChannel,
    forward: StochasticMatrix,
}

impl NetworkSpec {
    pub fn new(p_x: Pmf, relay: RelayChannel, forward: StochasticMatrix) -> Result<Self> {
        let nx = p_x.len();
        let (n1, n2) = match &relay {
            RelayChannel::Product {
                p_u1_given_x,
                p_u2_given_x,
            } => {
                if p_u1_given_x.cols() != nx {
                    return Err(Error::dims("P(U1|X) columns", nx, p_u1_given_x.cols()));
                }
                if p_u2_given_x.cols() != nx {
                    return Err(Error::dims("P(U2|X) columns", nx, p_u2_given_x.cols()));
                }
                (p_u1_given_x.rows(), p_u2_given_x.rows())
            }
            RelayChannel::Joint {
                p_u1u2_given_x,
                u1_size,
                u2_size,
            } => {
                if p_u1u2_given_x.cols() != nx {
                    return Err(Error::dims("P(U1,U2|X) columns", nx, p_u1u2_given_x.cols()));
                }
                if p_u1u2_given_x.rows() != u1_size * u2_size {
                    return Err(Error::dims(
                        "P(U1,U2|X) rows",
                        u1_size * u2_size,
                        p_u1u2_given_x.rows(),
                    ));
                }
                (*u1_size, *u2_size)
            }
        };
        Alphabet::new(n1)?;
        Alphabet::new(n2)?;
        Alphabet::new(n1 * n2)?;
        if forward.cols() != n1 * n2 {
            return Err(Error::dims("forward channel columns", n1 * n2, forward.cols()));
        }
        Alphabet::new(forward.rows())?;
        Ok(NetworkSpec { p_x, relay, forward })
    }

    /// Network with independent relay channels.
    pub fn product(
        p_x: Pmf,
        p_u1_given_x: StochasticMatrix,
        p_u2_given_x: StochasticMatrix,
        forward: StochasticMatrix,
    ) -> Result<Self> {
        Self::new(
            p_x,
            RelayChannel::Product {
                p_u1_given_x,
                p_u2_given_x,
            },
            forward,
        )
    }

    pub fn p_x(&self) -> &Pmf {
        &self.p_x
    }

    pub fn relay(&self) -> &RelayChannel {
        &self.relay
    }

    pub fn forward(&self) -> &StochasticMatrix {
        &self.forward
    }

    pub fn u1_size(&self) -> usize {
        match &self.relay {
            RelayChannel::Product { p_u1_given_x, .. } => p_u1_given_x.rows(),
            RelayChannel::Joint { u1_size, .. } => *u1_size,
        }
    }

    pub fn u2_size(&self) -> usize {
        match &self.relay {
            RelayChannel::Product { p_u2_given_x, .. } => p_u2_given_x.rows(),
            RelayChannel::Joint { u2_size, .. } => *u2_size,
        }
    }

    /// `P_{U1,U2|X}`; the product form is expanded column by column with
    /// [`kron`].
    pub fn joint_relay_matrix(&self) -> StochasticMatrix {
        match &self.relay {
            RelayChannel::Joint { p_u1u2_given_x, .. } => p_u1u2_given_x.clone(),
            RelayChannel::Product {
                p_u1_given_x,
                p_u2_given_x,
            } => {
                let nx = self.p_x.len();
                let rows = p_u1_given_x.rows() * p_u2_given_x.rows();
                let mut data = Vec::with_capacity(rows * nx);
                for x in 0..nx {
                    let c1 = column_matrix(p_u1_given_x.column_slice(x));
                    let c2 = column_matrix(p_u2_given_x.column_slice(x));
                    data.extend_from_slice(kron(&c1, &c2).col_major());
                }
                StochasticMatrix::from_col_major_unchecked(rows, nx, data)
            }
        }
    }

    /// The observation channel `(P_{U1,U2}, P_{Y|V1,V2})` this network
    /// presents to the destination.
    pub fn observation_channel(&self) -> Result<ObservationChannel> {
        let joint = match &self.relay {
            RelayChannel::Product {
                p_u1_given_x,
                p_u2_given_x,
            } => joint_pmf_from_product(&self.p_x, p_u1_given_x, p_u2_given_x)?,
            RelayChannel::Joint { p_u1u2_given_x, .. } => {
                Pmf::from_vec_unchecked(p_u1u2_given_x.apply(self.p_x.as_slice()))
            }
        };
        ObservationChannel::new(self.u1_size(), self.u2_size(), joint, self.forward.clone())
    }
}

fn column_matrix(col: &[f64]) -> StochasticMatrix {
    StochasticMatrix::from_col_major_unchecked(col.len(), 1, col.to_vec())
}

/// All sequences of one network run, kept for white-box checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkTrace {
    pub x: Vec<Symbol>,
    pub u1: Vec<Symbol>,
    pub u2: Vec<Symbol>,
    pub v1: Vec<Symbol>,
    pub v2: Vec<Symbol>,
    pub y: Vec<Symbol>,
}

/// Simulates one block of `n` symbols through the network.
///
/// Each relay's attack sees only its own received sequence and its own
/// stream, which enforces the Markov structure of the relay actions.
pub fn run_network(
    spec: &NetworkSpec,
    attack1: &AttackSpec,
    attack2: &AttackSpec,
    n: usize,
    master_seed: u64,
    trial_index: u64,
) -> Result<NetworkTrace> {
    if n == 0 {
        return Err(Error::arg("block length n must be at least 1"));
    }
    let stream = |role| RngStream::new(master_seed, trial_index, role);
    let (n1, n2) = (spec.u1_size(), spec.u2_size());
    let (a1, a2) = (Alphabet::new(n1)?, Alphabet::new(n2)?);

    let x = sample_iid(&spec.p_x, n, &stream(Role::Source));
    let pairs = sample_through(&spec.joint_relay_matrix(), &x, &stream(Role::RelayChannel))?;
    let (u1, u2): (Vec<Symbol>, Vec<Symbol>) = pairs
        .iter()
        .map(|&j| {
            let j = j as usize - 1;
            ((j / n2 + 1) as Symbol, (j % n2 + 1) as Symbol)
        })
        .unzip();

    let v1 = apply_attack(attack1, &u1, a1, &stream(Role::Attack(Relay::One)))?;
    let v2 = apply_attack(attack2, &u2, a2, &stream(Role::Attack(Relay::Two)))?;
    let packed = pack_pairs(&v1, &v2, a1, a2)?;
    let y = sample_through(&spec.forward, &packed, &stream(Role::Forward))?;
    Ok(NetworkTrace {
        x,
        u1,
        u2,
        v1,
        v2,
        y,
    })
}
