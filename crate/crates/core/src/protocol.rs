//! One-way broadcasting, streaming and SMP protocols, streaming finite-state
//! machines, and the adapter that turns a streaming machine into players.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::GroupSpec;
use crate::fourier::DenseFunction;
use crate::sketch::{ceil_log2, Sketch, SketchError, SketchState};
use crate::stream::Update;

/// Widest message (or FSM state label) a protocol may use.
pub const MAX_MESSAGE_BITS: u32 = 20;

/// Longest shared-randomness tape.
pub const MAX_TAPE_BITS: u32 = 64;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("expected {expected} inputs, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("input {index} is not an element of the domain")]
    Input { index: usize },
    #[error("player {player} sent message {message}, wider than {bits} bits")]
    MessageWidth { player: usize, message: u32, bits: u32 },
    #[error("message width {0} exceeds the limit of {MAX_MESSAGE_BITS} bits")]
    MessageBudget(u32),
    #[error("machine has {states} states; at most 2^{MAX_MESSAGE_BITS} fit in a message")]
    StateBudget { states: usize },
    #[error("randomness tape of {0} bits exceeds the limit of {MAX_TAPE_BITS}")]
    TapeBudget(u32),
    #[error("tape value {tape} does not fit in {bits} bits")]
    Tape { tape: u64, bits: u32 },
    #[error("protocol needs at least one player")]
    NoPlayers,
    #[error("protocol is not a streaming protocol")]
    NotStreaming,
    #[error("invalid machine: {0}")]
    Fsm(String),
    #[error("invalid table: {0}")]
    Table(String),
    #[error(transparent)]
    Sketch(#[from] SketchError),
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

/// Message and output functions of a broadcast protocol. Inputs are element
/// indices of the protocol's domain.
pub trait MessageRule: Send + Sync + fmt::Debug {
    /// `M_i(x_i, m_1, ..., m_{i-1}, r)` for a non-final player `i` (0-based).
    fn message(&self, player: usize, x: usize, history: &[u32], tape: u64) -> u32;

    /// The final player's output given every earlier message.
    fn output(&self, x: usize, history: &[u32], tape: u64) -> f64;

    /// True when each player reads only the previous message.
    fn streaming(&self) -> bool {
        false
    }
}

/// A one-way broadcasting protocol: players speak once, in order, and the
/// last player announces the output.
#[derive(Clone, Debug)]
pub struct BroadcastProtocol {
    domain: GroupSpec,
    players: usize,
    message_bits: u32,
    randomness_bits: u32,
    rule: Arc<dyn MessageRule>,
}

/// Messages of the non-final players and the final output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub messages: Vec<u32>,
    pub output: f64,
}

impl BroadcastProtocol {
    pub fn new(
        domain: GroupSpec,
        players: usize,
        message_bits: u32,
        randomness_bits: u32,
        rule: Arc<dyn MessageRule>,
    ) -> Result<Self> {
        if players == 0 {
            return Err(ProtocolError::NoPlayers);
        }
        if message_bits > MAX_MESSAGE_BITS {
            return Err(ProtocolError::MessageBudget(message_bits));
        }
        if randomness_bits > MAX_TAPE_BITS {
            return Err(ProtocolError::TapeBudget(randomness_bits));
        }
        Ok(Self {
            domain,
            players,
            message_bits,
            randomness_bits,
            rule,
        })
    }

    pub fn domain(&self) -> &GroupSpec {
        &self.domain
    }

    pub fn players(&self) -> usize {
        self.players
    }

    /// `c`.
    pub fn message_bits(&self) -> u32 {
        self.message_bits
    }

    pub fn randomness_bits(&self) -> u32 {
        self.randomness_bits
    }

    pub fn rule(&self) -> &Arc<dyn MessageRule> {
        &self.rule
    }

    pub fn is_streaming(&self) -> bool {
        self.rule.streaming()
    }

    /// Same rule with a different player count.
    pub fn with_players(&self, players: usize) -> Result<Self> {
        Self::new(
            self.domain.clone(),
            players,
            self.message_bits,
            self.randomness_bits,
            self.rule.clone(),
        )
    }

    pub fn check_tape(&self, tape: u64) -> Result<()> {
        if self.randomness_bits < 64 && tape >> self.randomness_bits != 0 {
            return Err(ProtocolError::Tape {
                tape,
                bits: self.randomness_bits,
            });
        }
        Ok(())
    }

    /// Message of player `i` with range checking.
    pub fn message(&self, player: usize, x: usize, history: &[u32], tape: u64) -> Result<u32> {
        let m = self.rule.message(player, x, history, tape);
        if self.message_bits < 32 && m >> self.message_bits != 0 {
            return Err(ProtocolError::MessageWidth {
                player,
                message: m,
                bits: self.message_bits,
            });
        }
        Ok(m)
    }

    pub fn sample_tape(&self, rng: &mut impl Rng) -> u64 {
        match self.randomness_bits {
            0 => 0,
            64 => rng.gen(),
            b => rng.gen_range(0..1u64 << b),
        }
    }
}

fn check_inputs(p: &BroadcastProtocol, inputs: &[usize], tape: u64) -> Result<()> {
    if inputs.len() != p.players {
        return Err(ProtocolError::Arity {
            expected: p.players,
            found: inputs.len(),
        });
    }
    if let Some(index) = inputs.iter().position(|&x| x >= p.domain.order()) {
        return Err(ProtocolError::Input { index });
    }
    p.check_tape(tape)
}

/// Runs every player in order; each sees all earlier messages.
pub fn run_broadcast(p: &BroadcastProtocol, inputs: &[usize], tape: u64) -> Result<Run> {
    check_inputs(p, inputs, tape)?;
    let last = p.players - 1;
    let mut messages = Vec::with_capacity(last);
    for (i, &x) in inputs[..last].iter().enumerate() {
        let m = p.message(i, x, &messages, tape)?;
        messages.push(m);
    }
    let output = p.rule.output(inputs[last], &messages, tape);
    Ok(Run { messages, output })
}

/// Runs a streaming protocol, handing each player only the previous message.
pub fn run_streaming(p: &BroadcastProtocol, inputs: &[usize], tape: u64) -> Result<Run> {
    if !p.is_streaming() {
        return Err(ProtocolError::NotStreaming);
    }
    check_inputs(p, inputs, tape)?;
    let last = p.players - 1;
    let mut messages: Vec<u32> = Vec::with_capacity(last);
    for (i, &x) in inputs[..last].iter().enumerate() {
        let prev = messages.len().saturating_sub(1);
        let m = p.message(i, x, &messages[prev..], tape)?;
        messages.push(m);
    }
    let prev = messages.len().saturating_sub(1);
    let output = p.rule.output(inputs[last], &messages[prev..], tape);
    Ok(Run { messages, output })
}

// ---------------------------------------------------------------------------
// Additive functions
// ---------------------------------------------------------------------------

/// `F(x_1, ..., x_N) = f(x_1 + ... + x_N)`.
#[derive(Clone, Debug)]
pub struct AdditiveFunction {
    pub base: DenseFunction,
    pub arity: usize,
}

impl AdditiveFunction {
    pub fn eval(&self, inputs: &[usize]) -> Result<f64> {
        if inputs.len() != self.arity {
            return Err(ProtocolError::Arity {
                expected: self.arity,
                found: inputs.len(),
            });
        }
        let g = self.base.domain();
        if let Some(index) = inputs.iter().position(|&x| x >= g.order()) {
            return Err(ProtocolError::Input { index });
        }
        Ok(self.base.re(inputs.iter().fold(0, |s, &x| g.add(s, x))))
    }
}

pub fn additive_lift(f: &DenseFunction, arity: usize) -> Result<AdditiveFunction> {
    if arity == 0 {
        return Err(ProtocolError::NoPlayers);
    }
    Ok(AdditiveFunction {
        base: f.clone(),
        arity,
    })
}

// ---------------------------------------------------------------------------
// Streaming finite-state machines
// ---------------------------------------------------------------------------

/// A deterministic streaming machine over `Z_{m_1} x ... x Z_{m_n}` updates.
///
/// `transitions[s * width + offset(j) + d]` is the state after update
/// `(j, d)` in state `s`, with `d` reduced modulo `m_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FsmRepr", into = "FsmRepr")]
pub struct StreamFsm {
    domain: GroupSpec,
    states: usize,
    initial: usize,
    offsets: Vec<usize>,
    width: usize,
    transitions: Vec<u32>,
    outputs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FsmRepr {
    moduli: GroupSpec,
    states: usize,
    initial: usize,
    transitions: Vec<u32>,
    outputs: Vec<f64>,
}

impl TryFrom<FsmRepr> for StreamFsm {
    type Error = ProtocolError;

    fn try_from(r: FsmRepr) -> Result<Self> {
        StreamFsm::new(r.moduli, r.states, r.initial, r.transitions, r.outputs)
    }
}

impl From<StreamFsm> for FsmRepr {
    fn from(f: StreamFsm) -> Self {
        Self {
            moduli: f.domain,
            states: f.states,
            initial: f.initial,
            transitions: f.transitions,
            outputs: f.outputs,
        }
    }
}

impl StreamFsm {
    pub fn new(
        domain: GroupSpec,
        states: usize,
        initial: usize,
        transitions: Vec<u32>,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 || initial >= states {
            return Err(ProtocolError::Fsm("initial state out of range".into()));
        }
        let mut offsets = Vec::with_capacity(domain.dim());
        let mut width = 0;
        for &m in domain.moduli() {
            offsets.push(width);
            width += m as usize;
        }
        if transitions.len() != states * width {
            return Err(ProtocolError::Fsm(format!(
                "expected {} transitions, found {}",
                states * width,
                transitions.len()
            )));
        }
        if transitions.iter().any(|&t| t as usize >= states) {
            return Err(ProtocolError::Fsm("transition to an unknown state".into()));
        }
        if outputs.len() != states {
            return Err(ProtocolError::Fsm(format!(
                "expected {states} outputs, found {}",
                outputs.len()
            )));
        }
        Ok(Self {
            domain,
            states,
            initial,
            offsets,
            width,
            transitions,
            outputs,
        })
    }

    /// Builds the table from a transition function `(state, coord, delta)`.
    pub fn from_fn(
        domain: GroupSpec,
        states: usize,
        initial: usize,
        step: impl Fn(usize, usize, u32) -> usize,
        output: impl Fn(usize) -> f64,
    ) -> Result<Self> {
        let mut transitions = Vec::new();
        for s in 0..states {
            for (j, &m) in domain.moduli().iter().enumerate() {
                for d in 0..m {
                    transitions.push(step(s, j, d) as u32);
                }
            }
        }
        let outputs = (0..states).map(output).collect();
        Self::new(domain, states, initial, transitions, outputs)
    }

    pub fn domain(&self) -> &GroupSpec {
        &self.domain
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// `ceil(log2(states))`.
    pub fn space_bits(&self) -> u32 {
        ceil_log2(self.states as u128)
    }

    pub fn step(&self, state: usize, update: Update) -> Result<usize> {
        let n = self.domain.dim();
        if update.coord >= n {
            return Err(ProtocolError::Fsm(format!(
                "update coordinate {} out of range for dimension {n}",
                update.coord
            )));
        }
        let m = self.domain.moduli()[update.coord] as i64;
        let d = update.delta.rem_euclid(m) as usize;
        Ok(self.transitions[state * self.width + self.offsets[update.coord] + d] as usize)
    }

    pub fn output(&self, state: usize) -> f64 {
        self.outputs[state]
    }

    pub fn run(&self, updates: &[Update]) -> Result<usize> {
        updates.iter().try_fold(self.initial, |s, &u| self.step(s, u))
    }

    /// Replays `x` (an element index) as one update per nonzero coordinate,
    /// coordinates ascending.
    pub fn replay(&self, state: usize, x: usize) -> usize {
        let mut s = state;
        for j in 0..self.domain.dim() {
            let v = self.domain.coord(x, j);
            if v != 0 {
                s = self.transitions[s * self.width + self.offsets[j] + v as usize] as usize;
            }
        }
        s
    }
}

/// The updates `fsm_to_players` replays for an input element.
pub fn replay_updates(domain: &GroupSpec, x: usize) -> Vec<Update> {
    (0..domain.dim())
        .filter_map(|j| {
            let v = domain.coord(x, j);
            (v != 0).then(|| Update::new(j, v as i64))
        })
        .collect()
}

#[derive(Debug)]
struct StatePassing {
    fsm: StreamFsm,
}

impl MessageRule for StatePassing {
    fn message(&self, _player: usize, x: usize, history: &[u32], _tape: u64) -> u32 {
        let state = history.last().map_or(self.fsm.initial, |&m| m as usize);
        self.fsm.replay(state, x) as u32
    }

    fn output(&self, x: usize, history: &[u32], _tape: u64) -> f64 {
        let state = history.last().map_or(self.fsm.initial, |&m| m as usize);
        self.fsm.output(self.fsm.replay(state, x))
    }

    fn streaming(&self) -> bool {
        true
    }
}

/// Players pass the machine state along; each replays its own vector.
pub fn fsm_to_players(fsm: &StreamFsm, players: usize) -> Result<BroadcastProtocol> {
    let bits = fsm.space_bits();
    if bits > MAX_MESSAGE_BITS {
        return Err(ProtocolError::StateBudget { states: fsm.states });
    }
    BroadcastProtocol::new(
        fsm.domain.clone(),
        players,
        bits,
        0,
        Arc::new(StatePassing { fsm: fsm.clone() }),
    )
}

// ---------------------------------------------------------------------------
// Structured rules
// ---------------------------------------------------------------------------

/// Each player forwards the running parity of `<mask, x_1 + ... + x_i>`; the
/// last player outputs it.
#[derive(Debug)]
pub struct ParityChain {
    pub mask: u64,
}

impl MessageRule for ParityChain {
    fn message(&self, _player: usize, x: usize, history: &[u32], _tape: u64) -> u32 {
        let prev = history.last().copied().unwrap_or(0);
        prev ^ ((x as u64 & self.mask).count_ones() & 1)
    }

    fn output(&self, x: usize, history: &[u32], tape: u64) -> f64 {
        self.message(0, x, history, tape) as f64
    }

    fn streaming(&self) -> bool {
        true
    }
}

pub fn parity_chain(n: usize, mask: u64, players: usize) -> Result<BroadcastProtocol> {
    let domain = GroupSpec::boolean(n).map_err(SketchError::from)?;
    BroadcastProtocol::new(domain, players, 1, 0, Arc::new(ParityChain { mask }))
}

/// Every player sends a fixed message; the output is fixed.
#[derive(Debug)]
pub struct ConstantRule {
    pub message: u32,
    pub output: f64,
}

impl MessageRule for ConstantRule {
    fn message(&self, _player: usize, _x: usize, _history: &[u32], _tape: u64) -> u32 {
        self.message
    }

    fn output(&self, _x: usize, _history: &[u32], _tape: u64) -> f64 {
        self.output
    }

    fn streaming(&self) -> bool {
        true
    }
}

pub fn constant_protocol(domain: GroupSpec, players: usize, bits: u32, output: f64) -> Result<BroadcastProtocol> {
    BroadcastProtocol::new(domain, players, bits, 0, Arc::new(ConstantRule { message: 0, output }))
}

/// Dense per-player lookup tables: `messages[i][(tape * 2^c + prev) * |G| + x]`
/// and `outputs[(tape * 2^c + prev) * |G| + x]`, where `prev` is the previous
/// message (0 for the first player).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRule {
    pub order: usize,
    pub message_bits: u32,
    pub randomness_bits: u32,
    pub messages: Vec<Vec<u32>>,
    pub outputs: Vec<f64>,
}

impl TableRule {
    fn slot(&self, tape: u64, prev: u32, x: usize) -> usize {
        ((tape as usize) << self.message_bits | prev as usize) * self.order + x
    }

    fn table_len(&self) -> usize {
        (1usize << (self.randomness_bits + self.message_bits)) * self.order
    }

    /// Uniformly random tables for `players` players.
    pub fn random(
        order: usize,
        players: usize,
        message_bits: u32,
        randomness_bits: u32,
        binary_output: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let mut rule = Self {
            order,
            message_bits,
            randomness_bits,
            messages: Vec::new(),
            outputs: Vec::new(),
        };
        let len = rule.table_len();
        rule.messages = (0..players.saturating_sub(1))
            .map(|_| (0..len).map(|_| rng.gen_range(0..1u32 << message_bits)).collect())
            .collect();
        rule.outputs = (0..len)
            .map(|_| {
                if binary_output {
                    rng.gen_range(0..2) as f64
                } else {
                    rng.gen()
                }
            })
            .collect();
        rule
    }
}

impl MessageRule for TableRule {
    fn message(&self, player: usize, x: usize, history: &[u32], tape: u64) -> u32 {
        let prev = history.last().copied().unwrap_or(0);
        self.messages[player][self.slot(tape, prev, x)]
    }

    fn output(&self, x: usize, history: &[u32], tape: u64) -> f64 {
        let prev = history.last().copied().unwrap_or(0);
        self.outputs[self.slot(tape, prev, x)]
    }

    fn streaming(&self) -> bool {
        true
    }
}

pub fn table_protocol(domain: GroupSpec, rule: TableRule) -> Result<BroadcastProtocol> {
    if rule.order != domain.order() {
        return Err(ProtocolError::Table("table order differs from the domain".into()));
    }
    if rule.message_bits > MAX_MESSAGE_BITS || rule.randomness_bits > 16 {
        return Err(ProtocolError::Table("table too wide".into()));
    }
    let len = rule.table_len();
    if rule.outputs.len() != len || rule.messages.iter().any(|t| t.len() != len) {
        return Err(ProtocolError::Table(format!("every table needs {len} entries")));
    }
    if rule.messages.iter().flatten().any(|&m| m >> rule.message_bits != 0) {
        return Err(ProtocolError::Table("message wider than declared".into()));
    }
    let players = rule.messages.len() + 1;
    let (c, t) = (rule.message_bits, rule.randomness_bits);
    BroadcastProtocol::new(domain, players, c, t, Arc::new(rule))
}

// ---------------------------------------------------------------------------
// Simultaneous messages
// ---------------------------------------------------------------------------

type PlayerFn = dyn Fn(usize, usize, u64) -> u64 + Send + Sync;
type CoordinatorFn = dyn Fn(&[u64], u64) -> f64 + Send + Sync;

/// One round of simultaneous messages to a coordinator.
#[derive(Clone)]
pub struct SmpProtocol {
    pub players: usize,
    pub message_bits: u32,
    pub player: Arc<PlayerFn>,
    pub coordinator: Arc<CoordinatorFn>,
}

impl fmt::Debug for SmpProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmpProtocol")
            .field("players", &self.players)
            .field("message_bits", &self.message_bits)
            .finish_non_exhaustive()
    }
}

impl SmpProtocol {
    /// Total bits sent to the coordinator.
    pub fn communication(&self) -> u64 {
        self.players as u64 * self.message_bits as u64
    }
}

pub fn run_smp(p: &SmpProtocol, inputs: &[usize], tape: u64) -> Result<f64> {
    if inputs.len() != p.players {
        return Err(ProtocolError::Arity {
            expected: p.players,
            found: inputs.len(),
        });
    }
    let messages: Vec<u64> = inputs.iter().enumerate().map(|(i, &x)| p.player(i, x, tape)).collect();
    Ok((p.coordinator)(&messages, tape))
}

impl SmpProtocol {
    fn player(&self, i: usize, x: usize, tape: u64) -> u64 {
        (self.player)(i, x, tape)
    }
}

fn pack_state(sketch: &Sketch, state: &SketchState) -> u64 {
    let width = match sketch {
        Sketch::Zp(j) => ceil_log2(j.modulus() as u128),
        Sketch::F2(_) => 1,
        Sketch::Invariant(_) => sketch.state_bits(),
    };
    state
        .values
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &v)| acc | ((v as u64) << (i as u32 * width)))
}

fn unpack_state(sketch: &Sketch, word: u64) -> SketchState {
    let (count, width) = match sketch {
        Sketch::Zp(j) => (j.cost(), ceil_log2(j.modulus() as u128)),
        Sketch::F2(j) => (j.cost(), 1),
        Sketch::Invariant(_) => (1, sketch.state_bits()),
    };
    let mask = if width == 0 { 0 } else { (1u64 << width) - 1 };
    SketchState {
        values: (0..count).map(|i| ((word >> (i as u32 * width)) & mask) as u32).collect(),
        updates: 0,
    }
}

/// Each player sends the sketch of its own input; the coordinator adds the
/// states and applies the post-processing.
pub fn smp_from_sketch(sketch: &Sketch, players: usize) -> Result<SmpProtocol> {
    if players == 0 {
        return Err(ProtocolError::NoPlayers);
    }
    let bits = sketch.state_bits();
    if bits > 64 {
        return Err(ProtocolError::MessageBudget(bits));
    }
    let s = Arc::new(sketch.clone());
    let sp = s.clone();
    let player = move |_i: usize, x: usize, _tape: u64| pack_state(&sp, &sp.state_of(x));
    let coordinator = move |messages: &[u64], _tape: u64| {
        let total = messages
            .iter()
            .map(|&m| unpack_state(&s, m))
            .reduce(|a, b| s.combine_states(&a, &b).expect("states of one sketch"))
            .expect("at least one player");
        s.eval_state(&total).expect("state of this sketch")
    };
    Ok(SmpProtocol {
        players,
        message_bits: bits,
        player: Arc::new(player),
        coordinator: Arc::new(coordinator),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::BitVec;
    use crate::sketch::{LinearJuntaF2, ZpJunta};
    use crate::stream::accumulate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_tuples(order: usize, players: usize) -> impl Iterator<Item = Vec<usize>> {
        (0..order.pow(players as u32)).map(move |mut t| {
            (0..players)
                .map(|_| {
                    let x = t % order;
                    t /= order;
                    x
                })
                .collect()
        })
    }

    fn parity_fsm(n: usize) -> StreamFsm {
        StreamFsm::from_fn(GroupSpec::boolean(n).unwrap(), 2, 0, |s, _, d| s ^ d as usize, |s| s as f64).unwrap()
    }

    #[test]
    fn constant_protocol_fixed_transcript() {
        let g = GroupSpec::boolean(3).unwrap();
        let p = constant_protocol(g, 4, 2, 1.0).unwrap();
        let a = run_broadcast(&p, &[1, 2, 3, 4], 0).unwrap();
        let b = run_broadcast(&p, &[7, 0, 5, 6], 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parity_chain_computes_parity_of_sum() {
        let p = parity_chain(3, 0b111, 4).unwrap();
        for inputs in all_tuples(8, 4) {
            let sum = inputs.iter().fold(0, |s, x| s ^ x);
            let run = run_broadcast(&p, &inputs, 0).unwrap();
            assert_eq!(run.output, (sum.count_ones() & 1) as f64);
            assert_eq!(run, run_streaming(&p, &inputs, 0).unwrap());
        }
    }

    #[test]
    fn arity_and_tape_errors() {
        let p = parity_chain(3, 0b111, 4).unwrap();
        assert!(matches!(run_broadcast(&p, &[0, 1], 0), Err(ProtocolError::Arity { expected: 4, found: 2 })));
        assert!(matches!(run_broadcast(&p, &[0, 1, 2, 8], 0), Err(ProtocolError::Input { index: 3 })));
        assert!(matches!(run_broadcast(&p, &[0, 1, 2, 3], 1), Err(ProtocolError::Tape { .. })));
    }

    #[test]
    fn randomness_free_rule_ignores_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = GroupSpec::boolean(2).unwrap();
        let mut rule = TableRule::random(4, 3, 1, 1, true, &mut rng);
        // copy the tape-0 half over the tape-1 half
        let half = rule.outputs.len() / 2;
        for t in rule.messages.iter_mut() {
            let (a, b) = t.split_at_mut(half);
            b.copy_from_slice(a);
        }
        let (a, b) = rule.outputs.split_at_mut(half);
        b.copy_from_slice(a);
        let p = table_protocol(g, rule).unwrap();
        for inputs in all_tuples(4, 3) {
            assert_eq!(run_broadcast(&p, &inputs, 0).unwrap(), run_broadcast(&p, &inputs, 1).unwrap());
        }
    }

    #[test]
    fn message_width_is_enforced() {
        #[derive(Debug)]
        struct Wide;
        impl MessageRule for Wide {
            fn message(&self, _: usize, _: usize, _: &[u32], _: u64) -> u32 {
                2
            }
            fn output(&self, _: usize, _: &[u32], _: u64) -> f64 {
                0.0
            }
        }
        let p = BroadcastProtocol::new(GroupSpec::boolean(1).unwrap(), 2, 1, 0, Arc::new(Wide)).unwrap();
        assert!(matches!(run_broadcast(&p, &[0, 0], 0), Err(ProtocolError::MessageWidth { .. })));
        assert!(matches!(run_streaming(&p, &[0, 0], 0), Err(ProtocolError::NotStreaming)));
    }

    #[test]
    fn fsm_players_match_concatenated_stream() {
        let n = 3;
        let fsm = parity_fsm(n);
        let p = fsm_to_players(&fsm, 3).unwrap();
        assert_eq!(p.message_bits(), 1);
        let g = fsm.domain().clone();
        for inputs in all_tuples(8, 3) {
            let stream: Vec<Update> = inputs.iter().flat_map(|&x| replay_updates(&g, x)).collect();
            let expected = fsm.output(fsm.run(&stream).unwrap());
            let sum = inputs.iter().fold(0, |s, x| s ^ x);
            assert_eq!(expected, (sum.count_ones() & 1) as f64);
            assert_eq!(run_broadcast(&p, &inputs, 0).unwrap().output, expected);
        }
    }

    #[test]
    fn fsm_players_over_z3_match_stream() {
        let g = GroupSpec::cyclic_power(3, 2).unwrap();
        // running sum of all coordinates mod 3, plus a sticky flag once the
        // second coordinate has been touched: order-sensitive on purpose
        let fsm = StreamFsm::from_fn(
            g.clone(),
            6,
            0,
            |s, j, d| {
                let sum = (s % 3 + d as usize) % 3;
                let flag = s / 3 | (j == 1) as usize;
                flag * 3 + sum
            },
            |s| (s % 3 == 0) as u8 as f64,
        )
        .unwrap();
        assert_eq!(fsm.space_bits(), 3);
        let p = fsm_to_players(&fsm, 4).unwrap();
        for inputs in all_tuples(9, 4) {
            let stream: Vec<Update> = inputs.iter().flat_map(|&x| replay_updates(&g, x)).collect();
            let expected = fsm.output(fsm.run(&stream).unwrap());
            assert_eq!(run_broadcast(&p, &inputs, 0).unwrap().output, expected);
            assert_eq!(run_streaming(&p, &inputs, 0).unwrap().output, expected);
        }
    }

    #[test]
    fn inert_fsm_gives_constant_protocol() {
        let g = GroupSpec::boolean(2).unwrap();
        let fsm = StreamFsm::from_fn(g, 3, 1, |s, _, _| s, |s| s as f64 / 2.0).unwrap();
        let p = fsm_to_players(&fsm, 3).unwrap();
        for inputs in all_tuples(4, 3) {
            assert_eq!(run_broadcast(&p, &inputs, 0).unwrap().output, 0.5);
        }
    }

    #[test]
    fn fsm_validation() {
        let g = GroupSpec::boolean(2).unwrap();
        assert!(StreamFsm::new(g.clone(), 2, 0, vec![0; 3], vec![0.0; 2]).is_err());
        assert!(StreamFsm::new(g.clone(), 2, 2, vec![0; 8], vec![0.0; 2]).is_err());
        assert!(StreamFsm::new(g.clone(), 2, 0, vec![5; 8], vec![0.0; 2]).is_err());
        let states = (1 << MAX_MESSAGE_BITS) + 1;
        let one = GroupSpec::boolean(1).unwrap();
        let big = StreamFsm::new(one, states, 0, vec![0; states * 2], vec![0.0; states]).unwrap();
        assert!(matches!(fsm_to_players(&big, 2), Err(ProtocolError::StateBudget { .. })));
    }

    #[test]
    fn fsm_stream_matches_accumulated_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let n = 4;
        let fsm = parity_fsm(n);
        for _ in 0..50 {
            let updates: Vec<Update> = (0..30).map(|_| Update::flip(rng.gen_range(0..n))).collect();
            let x = accumulate(n, 2, &updates);
            assert_eq!(fsm.run(&updates).unwrap() as u32, x.iter().sum::<u32>() % 2);
        }
    }

    #[test]
    fn additive_lift_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let g = GroupSpec::boolean(6).unwrap();
        let values: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
        let f = DenseFunction::from_real(&g, &values).unwrap();
        let one = additive_lift(&f, 1).unwrap();
        for x in 0..64 {
            assert_eq!(one.eval(&[x]).unwrap(), values[x]);
        }
        let two = additive_lift(&f, 2).unwrap();
        assert_eq!(two.eval(&[13, 13]).unwrap(), values[0]);
        let five = additive_lift(&f, 5).unwrap();
        for _ in 0..1000 {
            let xs: Vec<usize> = (0..5).map(|_| rng.gen_range(0..64)).collect();
            let sum = xs.iter().fold(0, |s, x| s ^ x);
            assert_eq!(five.eval(&xs).unwrap(), values[sum]);
        }
        assert!(additive_lift(&f, 0).is_err());
    }

    #[test]
    fn smp_forwarding_inputs_computes_anything() {
        let g = GroupSpec::cyclic_power(3, 2).unwrap();
        let gg = g.clone();
        let p = SmpProtocol {
            players: 3,
            message_bits: 4,
            player: Arc::new(|_, x, _| x as u64),
            coordinator: Arc::new(move |m: &[u64], _| {
                let s = m.iter().fold(0, |s, &x| gg.add(s, x as usize));
                (s * 7 % 5) as f64
            }),
        };
        for inputs in all_tuples(9, 3) {
            let s = inputs.iter().fold(0, |s, &x| g.add(s, x));
            assert_eq!(run_smp(&p, &inputs, 0).unwrap(), (s * 7 % 5) as f64);
        }
        assert!(run_smp(&p, &[0], 0).is_err());
    }

    #[test]
    fn smp_from_sketch_matches_sketch_of_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let p = 5;
        let n = 3;
        let g = GroupSpec::cyclic_power(p, n).unwrap();
        let rows: Vec<Vec<u32>> = (0..2).map(|_| (0..n).map(|_| rng.gen_range(0..p)).collect()).collect();
        let post = (0..25).map(|_| rng.gen_range(0..2) as f64).collect();
        let sk = Sketch::Zp(ZpJunta::new(n, p, rows, post).unwrap());
        let players = 4;
        let smp = smp_from_sketch(&sk, players).unwrap();
        assert_eq!(smp.communication(), (players * 2 * 3) as u64);
        for _ in 0..500 {
            let xs: Vec<usize> = (0..players).map(|_| rng.gen_range(0..g.order())).collect();
            let s = xs.iter().fold(0, |s, &x| g.add(s, x));
            assert_eq!(run_smp(&smp, &xs, 0).unwrap(), sk.eval_index(s));
        }
        let f2 = Sketch::F2(LinearJuntaF2::new(4, &[BitVec::ones(4)], vec![0.0, 1.0]).unwrap());
        let smp = smp_from_sketch(&f2, 3).unwrap();
        assert_eq!(smp.communication(), 3);
        assert_eq!(run_smp(&smp, &[1, 2, 4], 0).unwrap(), 1.0);
    }
}
