//! Protocol-to-sketch reductions.
//!
//! Given a one-way broadcasting protocol with `N + 1` players for
//! `F(x_1, ..., x_{N+1}) = f(x_1 + ... + x_{N+1})` and an input distribution
//! `D`, [`reduce`] fixes the shared randomness, samples a transcript of the
//! first `N` players, extracts the sets `A_i` of inputs consistent with it,
//! finds the heavy Fourier coefficients of those sets, and emits a sketch
//! that is constant on the cosets of the subgroup they annihilate. Every
//! inequality along the way is checked on the actual objects.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::time::Instant;

use num_bigint::BigUint;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{max_independent_subset, orthogonal_complement, rank_basis_in, BitVec, GroupSpec, SubgroupEnum};
use crate::fourier::{
    extract_dissociated, inverse_transform, mixing_bound, mixing_gap, subgroup_spectrum, transform, DenseFunction,
    NormalizedIndicator, Spectrum, CHANG_CONSTANT_F2, DEFAULT_DISSOCIATED_LIMIT,
};
use crate::protocol::{fsm_to_players, BroadcastProtocol, StreamFsm};
use crate::sketch::{EvalMode, HInvariantSketch, InputDistribution, LinearJuntaF2, RandomizedSketch, Sketch};

/// Largest domain the reduction enumerates.
pub const MAX_DOMAIN: usize = 1 << 16;

/// Randomness tapes are searched exhaustively up to this many bits.
pub const EXHAUSTIVE_TAPE_BITS: u32 = 16;

/// Tapes tried when the tape is too long for exhaustive search.
pub const SAMPLED_TAPES: usize = 256;

/// Slack on floating-point boundary comparisons.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ExactF2,
    ApproxF2,
    ExactGroup,
    ApproxGroup,
}

impl Variant {
    pub fn is_exact(self) -> bool {
        matches!(self, Variant::ExactF2 | Variant::ExactGroup)
    }

    pub fn is_f2(self) -> bool {
        matches!(self, Variant::ExactF2 | Variant::ApproxF2)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact-f2" => Ok(Variant::ExactF2),
            "approx-f2" => Ok(Variant::ApproxF2),
            "exact-group" => Ok(Variant::ExactGroup),
            "approx-group" => Ok(Variant::ApproxGroup),
            _ => Err(format!("unknown variant {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionConfig {
    /// `N`; the protocol must have `N + 1` players.
    pub players: usize,
    /// Slack in the transcript conditions; `None` means `min(2^-N, 1e-4)`.
    pub delta: Option<f64>,
    /// Transcripts sampled before selection.
    pub transcript_trials: usize,
    /// Monte-Carlo samples used to score each randomness tape.
    pub tape_trials: usize,
    /// Success target `q` (exact variants) or error target `eps` (approximate
    /// variants). Defaults to 1 and 0 respectively.
    pub target: Option<f64>,
    pub seed: u64,
    pub chang_constant: f64,
    pub dissociated_limit: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            players: 0,
            delta: None,
            transcript_trials: 64,
            tape_trials: 256,
            target: None,
            seed: 0,
            chang_constant: CHANG_CONSTANT_F2,
            dissociated_limit: DEFAULT_DISSOCIATED_LIMIT,
        }
    }
}

impl ReductionConfig {
    pub fn new(players: usize) -> Self {
        Self {
            players,
            ..Self::default()
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
            .unwrap_or_else(|| 2f64.powi(-(self.players.min(1100) as i32)).min(1e-4))
    }

    pub fn target(&self, variant: Variant) -> f64 {
        self.target.unwrap_or(if variant.is_exact() { 1.0 } else { 0.0 })
    }

    /// Hard errors for unusable settings; warnings when `N` is below the
    /// size the guarantees assume.
    pub fn validate(&self, domain: &GroupSpec, variant: Variant) -> Result<Vec<String>, String> {
        if self.players == 0 {
            return Err("player count N must be at least 1".into());
        }
        let delta = self.delta();
        if !(delta > 0.0 && delta < 1.0) {
            return Err(format!("delta must lie in (0, 1), got {delta}"));
        }
        if self.transcript_trials == 0 {
            return Err("transcript_trials must be at least 1".into());
        }
        let target = self.target(variant);
        if !(0.0..=1.0).contains(&target) {
            return Err(format!("target must lie in [0, 1], got {target}"));
        }
        let mut warnings = Vec::new();
        let n = domain.dim() as f64;
        let needed = if variant.is_f2() {
            10.0 * n
        } else {
            10.0 * n * (domain.exponent() as f64).log2()
        };
        if (self.players as f64) < needed {
            warnings.push(format!(
                "N = {} is below {needed:.1}; the quality guarantee may be vacuous",
                self.players
            ));
        }
        Ok(warnings)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Tape,
    Transcript,
    HeavySet,
    Structure,
    Junta,
    Verify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Tape => "tape",
            Stage::Transcript => "transcript",
            Stage::HeavySet => "heavy-set",
            Stage::Structure => "structure",
            Stage::Junta => "junta",
            Stage::Verify => "verify",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct ReduceError {
    pub stage: Stage,
    pub message: String,
}

impl ReduceError {
    fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = ReduceError> = std::result::Result<T, E>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

impl<T, E: fmt::Display> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> Result<T> {
        self.map_err(|e| ReduceError::new(stage, e))
    }
}

// ---------------------------------------------------------------------------
// Player sets
// ---------------------------------------------------------------------------

/// The sets `A_i = {x : M_i(x, m_1, ..., m_{i-1}, r) = m_i}` of a transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerSets {
    domain: GroupSpec,
    members: Vec<Vec<bool>>,
    counts: Vec<usize>,
}

impl PlayerSets {
    /// Evaluates every non-final player on the whole domain.
    pub fn extract(protocol: &BroadcastProtocol, messages: &[u32], tape: u64) -> Result<Self, String> {
        let domain = protocol.domain().clone();
        if messages.len() + 1 != protocol.players() {
            return Err(format!(
                "transcript has {} messages for {} players",
                messages.len(),
                protocol.players()
            ));
        }
        let members: Vec<Vec<bool>> = (0..messages.len())
            .into_par_iter()
            .map(|i| {
                (0..domain.order())
                    .map(|x| protocol.rule().message(i, x, &messages[..i], tape) == messages[i])
                    .collect()
            })
            .collect();
        let counts = members.iter().map(|m| m.iter().filter(|&&b| b).count()).collect();
        Ok(Self {
            domain,
            members,
            counts,
        })
    }

    pub fn domain(&self) -> &GroupSpec {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self, i: usize) -> &[bool] {
        &self.members[i]
    }

    /// `|A_i|`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `alpha_i = |A_i| / |G|`.
    pub fn densities(&self) -> Vec<f64> {
        let order = self.domain.order() as f64;
        self.counts.iter().map(|&c| c as f64 / order).collect()
    }

    pub fn log2_probability(&self) -> f64 {
        let order = (self.domain.order() as f64).log2();
        self.counts.iter().map(|&c| (c as f64).log2() - order).sum()
    }

    /// `a(pi) = prod_i alpha_i` as an exact rational.
    pub fn probability(&self) -> BigRational {
        let num: BigUint = self.counts.iter().map(|&c| BigUint::from(c)).product();
        let den = BigUint::from(self.domain.order()).pow(self.counts.len() as u32);
        BigRational::new(num.into(), den.into())
    }

    /// `prod_i |A_i| * 2^{(c+1)N} >= |G|^N`, i.e. `a(pi) >= 2^{-(c+1)N}`.
    pub fn dense_enough(&self, message_bits: u32) -> bool {
        let n = self.counts.len();
        let lhs: BigUint = self.counts.iter().map(|&c| BigUint::from(c)).product::<BigUint>()
            << ((message_bits as usize + 1) * n);
        lhs >= BigUint::from(self.domain.order()).pow(n as u32)
    }

    /// `B = {i : alpha_i >= 2^{-2(c+1)}}`, compared exactly.
    pub fn heavy_players(&self, message_bits: u32) -> Vec<usize> {
        let shift = 2 * (message_bits + 1);
        let order = self.domain.order() as u128;
        (0..self.counts.len())
            .filter(|&i| (self.counts[i] as u128) << shift >= order)
            .collect()
    }

    pub fn indicator(&self, i: usize) -> NormalizedIndicator {
        NormalizedIndicator::from_bitmap(&self.domain, self.members[i].clone()).expect("A_i holds its own input")
    }

    /// Distinct sets with multiplicities.
    fn distinct(&self) -> Vec<(usize, usize)> {
        let mut first: HashMap<&[bool], usize> = HashMap::new();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for i in 0..self.members.len() {
            match first.get(self.members[i].as_slice()) {
                Some(&slot) => out[slot].1 += 1,
                None => {
                    first.insert(&self.members[i], out.len());
                    out.push((i, 1));
                }
            }
        }
        out
    }
}

/// Spectra of the distinct `phi_{A_i}` and their product over all players.
struct SetSpectra {
    /// (representative player, multiplicity, spectrum)
    distinct: Vec<(usize, usize, Spectrum)>,
    product: Vec<Complex64>,
}

impl SetSpectra {
    fn new(sets: &PlayerSets) -> Result<Self, String> {
        let distinct: Vec<(usize, usize, Spectrum)> = sets
            .distinct()
            .into_par_iter()
            .map(|(i, mult)| sets.indicator(i).spectrum().map(|s| (i, mult, s)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let mut product = vec![Complex64::new(1.0, 0.0); sets.domain.order()];
        for (_, mult, s) in &distinct {
            for (p, c) in product.iter_mut().zip(s.coeffs()) {
                *p *= c.powu(*mult as u32);
            }
        }
        Ok(Self { distinct, product })
    }
}

// ---------------------------------------------------------------------------
// Transcript selection
// ---------------------------------------------------------------------------

/// The last player's output as a function of its own input, given `pi`.
pub fn tail_function(protocol: &BroadcastProtocol, messages: &[u32], tape: u64) -> DenseFunction {
    let rule = protocol.rule();
    DenseFunction::from_fn(protocol.domain(), |x| rule.output(x, messages, tape))
}

/// `E_y [h(x - y_1 - ... - y_N)]` with `y_i` uniform on `A_i`, for every `x`.
fn smoothed(h: &DenseFunction, product: &[Complex64], extra: Option<&Spectrum>) -> Result<Vec<f64>, String> {
    let hh = transform(h).map_err(|e| e.to_string())?;
    let mut coeffs: Vec<Complex64> = hh.coeffs().iter().zip(product).map(|(a, b)| a * b).collect();
    if let Some(s) = extra {
        for (c, v) in coeffs.iter_mut().zip(s.coeffs()) {
            *c *= v;
        }
    }
    let spec = Spectrum::new(h.domain(), coeffs).map_err(|e| e.to_string())?;
    Ok(inverse_transform(&spec).map_err(|e| e.to_string())?.real_values())
}

/// `b(pi)` (exact) or the conditional squared error (approximate), computed
/// from spectral products.
fn transcript_quality(
    h: &DenseFunction,
    product: &[Complex64],
    f: &[f64],
    d: &InputDistribution,
    exact: bool,
) -> Result<f64, String> {
    let p1 = smoothed(h, product, None)?;
    if exact {
        Ok(d.expect(|x| if f[x] == 1.0 { p1[x] } else { 1.0 - p1[x] }).clamp(0.0, 1.0))
    } else {
        let h2 = h.map(|v| v * v);
        let p2 = smoothed(&h2, product, None)?;
        Ok(d.expect(|x| p2[x] - 2.0 * f[x] * p1[x] + f[x] * f[x]).max(0.0))
    }
}

/// A transcript that passed the density condition, with its sets and quality.
#[derive(Clone, Debug)]
pub struct Selection {
    pub tape: u64,
    pub messages: Vec<u32>,
    pub sets: PlayerSets,
    pub tail: DenseFunction,
    /// `b(pi)` for exact variants, conditional squared error otherwise.
    pub quality: f64,
    pub sampled: usize,
    pub distinct: usize,
    pub dense: usize,
}

/// Draws `(x, x_1, ..., x_N)` with `x ~ D`, `x_i` uniform, and sets
/// `x_{N+1} = x - x_1 - ... - x_N` so that the inputs sum to `x`.
fn draw_inputs(domain: &GroupSpec, players: usize, d: &rand::distributions::WeightedIndex<f64>, rng: &mut impl Rng) -> (usize, Vec<usize>) {
    use rand::distributions::Distribution;
    let x = d.sample(rng);
    let mut inputs: Vec<usize> = (0..players).map(|_| rng.gen_range(0..domain.order())).collect();
    let last = inputs.iter().fold(x, |acc, &xi| domain.sub(acc, xi));
    inputs.push(last);
    (x, inputs)
}

fn first_messages(protocol: &BroadcastProtocol, inputs: &[usize], tape: u64) -> Result<Vec<u32>, String> {
    let mut messages = Vec::with_capacity(inputs.len());
    for (i, &x) in inputs.iter().enumerate() {
        let m = protocol.message(i, x, &messages, tape).map_err(|e| e.to_string())?;
        messages.push(m);
    }
    Ok(messages)
}

/// Samples transcripts, keeps those with `a(pi) >= 2^{-(c+1)N}`, and returns
/// the one with the best conditional quality. Fails if none is dense enough
/// or the best one misses `q - delta` (resp. `eps + delta`).
pub fn sample_and_select_transcript(
    protocol: &BroadcastProtocol,
    f: &DenseFunction,
    d: &InputDistribution,
    cfg: &ReductionConfig,
    variant: Variant,
    tape: u64,
) -> Result<Selection> {
    if cfg.transcript_trials == 0 {
        return Err(ReduceError::new(Stage::Transcript, "transcript_trials must be at least 1"));
    }
    let domain = protocol.domain();
    let n_players = cfg.players;
    let c = protocol.message_bits();
    let fv = f.real_values();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut order: Vec<Vec<u32>> = Vec::new();
    for _ in 0..cfg.transcript_trials {
        let inputs: Vec<usize> = (0..n_players).map(|_| rng.gen_range(0..domain.order())).collect();
        let messages = first_messages(protocol, &inputs, tape).at(Stage::Transcript)?;
        if seen.insert(messages.clone()) {
            order.push(messages);
        }
    }
    let mut best: Option<Selection> = None;
    let mut dense = 0;
    for messages in &order {
        let sets = PlayerSets::extract(protocol, messages, tape).at(Stage::Transcript)?;
        if !sets.dense_enough(c) {
            continue;
        }
        dense += 1;
        let spectra = SetSpectra::new(&sets).at(Stage::Transcript)?;
        let tail = tail_function(protocol, messages, tape);
        check_tail(&tail, variant.is_exact())?;
        let quality = transcript_quality(&tail, &spectra.product, &fv, d, variant.is_exact()).at(Stage::Transcript)?;
        let better = match &best {
            None => true,
            Some(b) if variant.is_exact() => quality > b.quality,
            Some(b) => quality < b.quality,
        };
        if better {
            best = Some(Selection {
                tape,
                messages: messages.clone(),
                sets,
                tail,
                quality,
                sampled: cfg.transcript_trials,
                distinct: order.len(),
                dense: 0,
            });
        }
    }
    let mut sel = best.ok_or_else(|| {
        ReduceError::new(
            Stage::Transcript,
            format!(
                "none of {} sampled transcripts has probability at least 2^-(c+1)N",
                cfg.transcript_trials
            ),
        )
    })?;
    sel.dense = dense;
    let delta = cfg.delta();
    let target = cfg.target(variant);
    if variant.is_exact() && sel.quality + BOUNDARY_TOL < target - delta {
        return Err(ReduceError::new(
            Stage::Transcript,
            format!("best conditional success {:.6} is below q - delta = {:.6}", sel.quality, target - delta),
        ));
    }
    if !variant.is_exact() && sel.quality - BOUNDARY_TOL > target + delta {
        return Err(ReduceError::new(
            Stage::Transcript,
            format!("best conditional error {:.6} exceeds eps + delta = {:.6}", sel.quality, target + delta),
        ));
    }
    Ok(sel)
}

fn check_tail(h: &DenseFunction, exact: bool) -> Result<()> {
    let bad = h.real_values().into_iter().find(|&v| {
        if exact {
            v != 0.0 && v != 1.0
        } else {
            !(0.0..=1.0).contains(&v)
        }
    });
    match bad {
        Some(v) if exact => Err(ReduceError::new(Stage::Transcript, format!("protocol output {v} is not binary"))),
        Some(v) => Err(ReduceError::new(Stage::Transcript, format!("protocol output {v} lies outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Scores randomness tapes by Monte-Carlo distributional quality (common
/// samples across tapes) and returns `(tape, score, tapes tried, exhaustive)`.
fn choose_tape(
    protocol: &BroadcastProtocol,
    f: &[f64],
    d: &InputDistribution,
    cfg: &ReductionConfig,
    exact: bool,
) -> Result<TapeChoice> {
    let bits = protocol.randomness_bits();
    if bits == 0 {
        return Ok(TapeChoice {
            tape: 0,
            score: None,
            tried: 1,
            exhaustive: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let exhaustive = bits <= EXHAUSTIVE_TAPE_BITS;
    let tapes: Vec<u64> = if exhaustive {
        (0..1u64 << bits).collect()
    } else {
        (0..SAMPLED_TAPES).map(|_| protocol.sample_tape(&mut rng)).collect()
    };
    let sampler = d.sampler();
    let samples: Vec<(usize, Vec<usize>)> = (0..cfg.tape_trials.max(1))
        .map(|_| draw_inputs(protocol.domain(), cfg.players, &sampler, &mut rng))
        .collect();
    let scores: Vec<f64> = tapes
        .par_iter()
        .map(|&t| {
            let mut total = 0.0;
            for (x, inputs) in &samples {
                let run = crate::protocol::run_broadcast(protocol, inputs, t).map_err(|e| e.to_string())?;
                total += if exact {
                    (run.output == f[*x]) as u8 as f64
                } else {
                    -(run.output - f[*x]).powi(2)
                };
            }
            Ok(total / samples.len() as f64)
        })
        .collect::<Result<_, String>>()
        .at(Stage::Tape)?;
    let (i, &score) = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("at least one tape");
    Ok(TapeChoice {
        tape: tapes[i],
        score: Some(score),
        tried: tapes.len(),
        exhaustive,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapeChoice {
    pub tape: u64,
    /// Monte-Carlo success (exact) or negated squared error (approximate).
    pub score: Option<f64>,
    pub tried: usize,
    pub exhaustive: bool,
}

// ---------------------------------------------------------------------------
// Heavy coefficients and invariant structure
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavySet {
    /// Players whose set has density at least `2^{-2(c+1)}`.
    pub players: Vec<usize>,
    /// Characters `gamma` with `sum_{i in B} |phi_{A_i}^(gamma)|^2 >= |B|/2`.
    pub characters: Vec<usize>,
    /// The spectral sums of `characters`.
    pub weights: Vec<f64>,
}

fn heavy_from_spectra(sets: &PlayerSets, spectra: &SetSpectra, message_bits: u32) -> HeavySet {
    let players = sets.heavy_players(message_bits);
    let in_b: HashSet<usize> = players.iter().copied().collect();
    let order = sets.domain.order();
    let mut sums = vec![0.0; order];
    // identical sets have identical sizes, so a set is heavy for all its players or none
    for (rep, mult, s) in &spectra.distinct {
        if !in_b.contains(rep) {
            continue;
        }
        for (acc, c) in sums.iter_mut().zip(s.coeffs()) {
            *acc += *mult as f64 * c.norm_sqr();
        }
    }
    let threshold = players.len() as f64 / 2.0 - BOUNDARY_TOL;
    let (characters, weights) = if players.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (0..order).filter(|&g| sums[g] >= threshold).map(|g| (g, sums[g])).unzip()
    };
    HeavySet {
        players,
        characters,
        weights,
    }
}

/// `B` and `S` for a set of players.
pub fn heavy_set(sets: &PlayerSets, message_bits: u32) -> Result<HeavySet> {
    let spectra = SetSpectra::new(sets).at(Stage::HeavySet)?;
    Ok(heavy_from_spectra(sets, &spectra, message_bits))
}

/// The characters spanning the heavy set and the subgroup they annihilate.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantStructure {
    /// Linearly independent (F2) or dissociated (groups) characters.
    pub basis: Vec<usize>,
    /// `V = U^perp` over F2, `H = Gamma'^perp` over groups.
    pub subgroup: SubgroupEnum,
}

impl InvariantStructure {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn complexity(&self) -> usize {
        self.subgroup.quotient_order()
    }
}

pub fn build_invariant_structure(
    heavy: &HeavySet,
    domain: &GroupSpec,
    f2: bool,
    dissociated_limit: usize,
) -> Result<InvariantStructure> {
    if f2 {
        if !domain.is_boolean() {
            return Err(ReduceError::new(Stage::Structure, "F2 variant on a group that is not F2^n"));
        }
        let n = domain.dim();
        let vectors: Vec<BitVec> = heavy
            .characters
            .iter()
            .map(|&g| BitVec::new(g as u64, n))
            .collect::<Result<_, _>>()
            .at(Stage::Structure)?;
        let basis = max_independent_subset(&vectors, &heavy.weights).at(Stage::Structure)?;
        let u = rank_basis_in(n, &basis).at(Stage::Structure)?;
        let v = orthogonal_complement(&u);
        Ok(InvariantStructure {
            basis: basis.iter().map(|b| b.bits() as usize).collect(),
            subgroup: v.to_subgroup(domain).at(Stage::Structure)?,
        })
    } else {
        let basis = extract_dissociated(domain, &heavy.characters, &heavy.weights, dissociated_limit).at(Stage::Structure)?;
        let subgroup = crate::fourier::annihilator(domain, &basis).at(Stage::Structure)?;
        Ok(InvariantStructure { basis, subgroup })
    }
}

// ---------------------------------------------------------------------------
// Junta construction
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct JuntaBuild {
    pub sketch: Sketch,
    /// `w(x) = E[h(x - y_1 - ... - y_N + v)]`.
    pub w: Vec<f64>,
    /// Largest deviation of `w` from its coset representative's value.
    pub coset_spread: f64,
}

fn build_junta_from(
    tail: &DenseFunction,
    product: &[Complex64],
    structure: &InvariantStructure,
    f: &[f64],
    d: &InputDistribution,
    exact: bool,
    f2: bool,
) -> Result<JuntaBuild> {
    let h_spec = subgroup_spectrum(&structure.subgroup).at(Stage::Junta)?;
    let w = smoothed(tail, product, Some(&h_spec)).at(Stage::Junta)?;
    let cosets = structure.subgroup.cosets();
    let spread = w
        .iter()
        .enumerate()
        .map(|(x, v)| (v - w[cosets.reps[cosets.label[x] as usize]]).abs())
        .fold(0.0, f64::max);
    if spread > BOUNDARY_TOL {
        return Err(ReduceError::new(
            Stage::Junta,
            format!("w varies by {spread:e} inside a coset"),
        ));
    }
    if let Some(v) = w.iter().find(|v| !(-BOUNDARY_TOL..=1.0 + BOUNDARY_TOL).contains(*v)) {
        return Err(ReduceError::new(Stage::Junta, format!("w takes value {v} outside [0, 1]")));
    }
    let r = cosets.reps.len();
    let values: Vec<f64> = if exact {
        let mut ones = vec![0.0; r];
        let mut zeros = vec![0.0; r];
        for (x, &p) in d.probs().iter().enumerate() {
            let c = cosets.label[x] as usize;
            if f[x] == 1.0 {
                ones[c] += p;
            } else {
                zeros[c] += p;
            }
        }
        (0..r)
            .map(|c| {
                let wc = w[cosets.reps[c]];
                if ones[c] > zeros[c] || (ones[c] == zeros[c] && wc >= 0.5) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        cosets.reps.iter().map(|&rep| w[rep].clamp(0.0, 1.0)).collect()
    };
    let domain = tail.domain();
    let sketch = if f2 {
        let n = domain.dim();
        let rows: Vec<BitVec> = structure
            .basis
            .iter()
            .map(|&g| BitVec::new(g as u64, n).expect("basis vector in F2^n"))
            .collect();
        let mut junta = LinearJuntaF2::new(n, &rows, vec![0.0; 1 << rows.len()]).at(Stage::Junta)?;
        let mut post = vec![f64::NAN; 1 << rows.len()];
        for x in 0..domain.order() {
            post[junta.sketch_word(x as u64)] = values[cosets.label[x] as usize];
        }
        if post.iter().any(|v| v.is_nan()) {
            return Err(ReduceError::new(Stage::Junta, "sketch basis is not independent"));
        }
        junta = LinearJuntaF2::new(n, &rows, post).at(Stage::Junta)?;
        Sketch::F2(junta)
    } else {
        Sketch::Invariant(HInvariantSketch::new(structure.subgroup.clone(), values).at(Stage::Junta)?)
    };
    Ok(JuntaBuild {
        sketch,
        w,
        coset_spread: spread,
    })
}

/// Builds the coset-constant sketch for a selected transcript.
pub fn build_junta(
    selection: &Selection,
    structure: &InvariantStructure,
    f: &DenseFunction,
    d: &InputDistribution,
    variant: Variant,
) -> Result<JuntaBuild> {
    let spectra = SetSpectra::new(&selection.sets).at(Stage::Junta)?;
    build_junta_from(
        &selection.tail,
        &spectra.product,
        structure,
        &f.real_values(),
        d,
        variant.is_exact(),
        variant.is_f2(),
    )
}

// ---------------------------------------------------------------------------
// Approximate-variant helpers
// ---------------------------------------------------------------------------

/// `e^{i v}` for values in `[0, 1]`.
pub fn approx_encode(values: &[f64]) -> Result<Vec<Complex64>, String> {
    values
        .iter()
        .map(|&v| {
            if (0.0..=1.0).contains(&v) {
                Ok(Complex64::from_polar(1.0, v))
            } else {
                Err(format!("value {v} lies outside [0, 1]"))
            }
        })
        .collect()
}

/// `(1 - z^2/2, 1 - z^2/3)`, which bracket `cos z` for `z` in `[-1, 1]`.
pub fn conversion_bounds(z: f64) -> (f64, f64) {
    let lower = 1.0 - z * z / 2.0;
    let upper = 1.0 - z * z / 3.0;
    debug_assert!(!(-1.0..=1.0).contains(&z) || (lower <= z.cos() && z.cos() <= upper));
    (lower, upper)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs >= rhs,
        }
    }

    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub messages: Vec<u32>,
    pub set_sizes: Vec<usize>,
    pub densities: Vec<f64>,
    pub log2_probability: f64,
    /// `b(pi)` or the conditional squared error.
    pub quality: f64,
    pub sampled: usize,
    pub distinct: usize,
    pub dense: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub variant: Variant,
    pub moduli: Vec<u32>,
    pub order: usize,
    pub players: usize,
    pub message_bits: u32,
    pub delta: f64,
    pub target: f64,
    pub tolerance: f64,
    pub warnings: Vec<String>,
    pub tape: TapeChoice,
    pub transcript: TranscriptSummary,
    pub heavy: HeavySet,
    pub basis: Vec<Vec<u32>>,
    pub k: usize,
    pub subgroup_order: usize,
    pub complexity: usize,
    pub mixing_gap: f64,
    pub mixing_bound: f64,
    /// `Pr_{x~D}[g(x) = f(x)]` for exact variants.
    pub success: Option<f64>,
    /// Success of Bernoulli rounding of `w`, which the argmax junta dominates.
    pub rounded_success: Option<f64>,
    /// `E_{x~D}|g(x) - f(x)|^2` for approximate variants.
    pub error: Option<f64>,
    /// `3 (1 - E_{x~D} cos(f(x) - g(x)))`.
    pub error_bound: Option<f64>,
    pub checks: Vec<Check>,
    pub elapsed_ms: u128,
}

impl ReductionReport {
    pub fn all_checks_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub sketch: Sketch,
    pub report: ReductionReport,
}

/// Runs the whole reduction. The protocol must have `cfg.players + 1` players.
pub fn reduce(
    protocol: &BroadcastProtocol,
    f: &DenseFunction,
    d: &InputDistribution,
    cfg: &ReductionConfig,
    variant: Variant,
) -> Result<Reduction> {
    let start = Instant::now();
    let domain = protocol.domain().clone();
    let warnings = cfg.validate(&domain, variant).at(Stage::Config)?;
    if protocol.players() != cfg.players + 1 {
        return Err(ReduceError::new(
            Stage::Config,
            format!("protocol has {} players, expected N + 1 = {}", protocol.players(), cfg.players + 1),
        ));
    }
    if domain.order() > MAX_DOMAIN {
        return Err(ReduceError::new(
            Stage::Config,
            format!("domain of order {} exceeds the enumeration limit {MAX_DOMAIN}", domain.order()),
        ));
    }
    if variant.is_f2() && !domain.is_boolean() {
        return Err(ReduceError::new(Stage::Config, "F2 variants need a domain of the form F2^n"));
    }
    if f.domain() != &domain || d.len() != domain.order() {
        return Err(ReduceError::new(Stage::Config, "function, distribution and protocol domains differ"));
    }
    let fv = f.real_values();
    let exact = variant.is_exact();
    if let Some(v) = fv.iter().find(|&&v| if exact { v != 0.0 && v != 1.0 } else { !(0.0..=1.0).contains(&v) }) {
        return Err(ReduceError::new(Stage::Config, format!("function value {v} is not allowed for {variant:?}")));
    }
    let c = protocol.message_bits();
    let n_players = cfg.players;
    let delta = cfg.delta();
    let target = cfg.target(variant);
    let order = domain.order();

    let tape = choose_tape(protocol, &fv, d, cfg, exact)?;
    let sel = sample_and_select_transcript(protocol, f, d, cfg, variant, tape.tape)?;

    let spectra = SetSpectra::new(&sel.sets).at(Stage::HeavySet)?;
    let heavy = heavy_from_spectra(&sel.sets, &spectra, c);
    let mut checks = vec![
        Check::ge("log2 a(pi) >= -(c+1)N", sel.sets.log2_probability(), -((c as f64 + 1.0) * n_players as f64)),
        Check::ge("2|B| >= N", 2.0 * heavy.players.len() as f64, n_players as f64),
    ];
    checks[0].holds = sel.sets.dense_enough(c);
    if exact {
        checks.push(Check::ge("b(pi) >= q - delta", sel.quality + BOUNDARY_TOL, target - delta));
    } else {
        checks.push(Check::le("conditional error <= eps + delta", sel.quality - BOUNDARY_TOL, target + delta));
    }

    let structure = build_invariant_structure(&heavy, &domain, variant.is_f2(), cfg.dissociated_limit)?;
    let k = structure.k();
    let complexity = structure.complexity();
    if variant.is_f2() {
        checks.push(Check::le("k <= 32(c+1)", k as f64, 32.0 * (c as f64 + 1.0)));
    } else {
        let m = domain.exponent() as f64;
        checks.push(Check::le("|G/H| <= m^k", complexity as f64, m.powi(k as i32)));
    }

    let junta = build_junta_from(&sel.tail, &spectra.product, &structure, &fv, d, exact, variant.is_f2())?;
    let g: Vec<f64> = (0..order).map(|x| junta.sketch.eval_index(x)).collect();

    let hp = if exact {
        sel.tail.map(|v| Complex64::new(1.0 - 2.0 * v.re, 0.0))
    } else {
        sel.tail.map(|v| Complex64::from_polar(1.0, -v.re))
    };
    let negated: Vec<NormalizedIndicator> = (0..sel.sets.len()).map(|i| sel.sets.indicator(i).negated()).collect();
    let gap = mixing_gap(&negated, &structure.subgroup, &hp).at(Stage::Verify)?;
    let bound = mixing_bound(order, n_players);
    checks.push(Check::le("mixing gap <= |G| 2^(-N/8)", gap, bound));
    let tolerance = bound.max(10.0 * delta);

    let (mut success, mut rounded, mut error, mut error_bound) = (None, None, None, None);
    if exact {
        let s = d.expect(|x| (g[x] == fv[x]) as u8 as f64).min(1.0);
        let r = d.expect(|x| if fv[x] == 1.0 { junta.w[x] } else { 1.0 - junta.w[x] }).min(1.0);
        checks.push(Check::ge("success >= rounded success", s + BOUNDARY_TOL, r));
        checks.push(Check::ge("success >= b(pi) - mixing gap", s + BOUNDARY_TOL, sel.quality - gap));
        checks.push(Check::ge("success >= q - tol", s, target - tolerance));
        success = Some(s);
        rounded = Some(r);
    } else {
        let e = d.expect(|x| (g[x] - fv[x]).powi(2));
        let cos_g = d.expect(|x| (fv[x] - g[x]).cos());
        let chain = 3.0 * (1.0 - cos_g);
        // Re E[e^{i f(x)} h'(x - y_1 - ... - y_N (+ v))] with and without v
        let h_spec = subgroup_spectrum(&structure.subgroup).at(Stage::Verify)?;
        let re_parts = |extra: Option<&Spectrum>| -> Result<f64> {
            let hh = transform(&hp).at(Stage::Verify)?;
            let mut coeffs: Vec<Complex64> = hh.coeffs().iter().zip(&spectra.product).map(|(a, b)| a * b).collect();
            if let Some(s) = extra {
                for (c, v) in coeffs.iter_mut().zip(s.coeffs()) {
                    *c *= v;
                }
            }
            let sm = inverse_transform(&Spectrum::new(&domain, coeffs).at(Stage::Verify)?).at(Stage::Verify)?;
            Ok(d.expect(|x| (Complex64::from_polar(1.0, fv[x]) * sm.value(x)).re))
        };
        let before = re_parts(None)?;
        let after = re_parts(Some(&h_spec))?;
        checks.push(Check::ge("Re correlation before >= 1 - err/2", before + BOUNDARY_TOL, 1.0 - sel.quality / 2.0));
        checks.push(Check::ge("Re correlation with v >= before - mixing gap", after + BOUNDARY_TOL, before - gap));
        checks.push(Check::ge("E cos(f - g) >= Re correlation with v", cos_g + BOUNDARY_TOL, after));
        checks.push(Check::le("error <= 3(1 - E cos(f - g))", e, chain + BOUNDARY_TOL));
        checks.push(Check::le("error <= 2 eps + tol", e, 2.0 * target + tolerance));
        error = Some(e);
        error_bound = Some(chain);
    }

    let report = ReductionReport {
        variant,
        moduli: domain.moduli().to_vec(),
        order,
        players: n_players,
        message_bits: c,
        delta,
        target,
        tolerance,
        warnings,
        tape,
        transcript: TranscriptSummary {
            messages: sel.messages.clone(),
            set_sizes: sel.sets.counts().to_vec(),
            densities: sel.sets.densities(),
            log2_probability: sel.sets.log2_probability(),
            quality: sel.quality,
            sampled: sel.sampled,
            distinct: sel.distinct,
            dense: sel.dense,
        },
        heavy,
        basis: structure.basis.iter().map(|&g| domain.coords_of(g)).collect(),
        k,
        subgroup_order: structure.subgroup.len(),
        complexity,
        mixing_gap: gap,
        mixing_bound: bound,
        success,
        rounded_success: rounded,
        error,
        error_bound,
        checks,
        elapsed_ms: start.elapsed().as_millis(),
    };
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(ReduceError::new(Stage::Verify, format!("violated: {}", failed.join("; "))));
    }
    Ok(Reduction {
        sketch: junta.sketch,
        report,
    })
}

/// [`reduce`] on the protocol in which `N + 1` players pass the machine state.
pub fn reduce_fsm(
    fsm: &StreamFsm,
    f: &DenseFunction,
    d: &InputDistribution,
    cfg: &ReductionConfig,
    variant: Variant,
) -> Result<Reduction> {
    let protocol = fsm_to_players(fsm, cfg.players + 1).at(Stage::Config)?;
    reduce(&protocol, f, d, cfg, variant)
}

// ---------------------------------------------------------------------------
// Minimax boosting
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub distribution_success: f64,
    pub correct_inputs: usize,
    pub weight_sum: f64,
}

#[derive(Clone, Debug)]
pub struct BoostResult {
    pub sketch: RandomizedSketch,
    pub rounds: Vec<BoostRound>,
    pub per_x: Vec<f64>,
    pub min_success: f64,
    pub converged: bool,
}

/// Multiplicative weights over inputs: each round reduces under the current
/// weights, then halves the weight of every input the new junta gets right.
/// The result is the uniform mixture of the collected juntas, or the single
/// junta that was correct everywhere.
pub fn minimax_boost(
    protocol: &BroadcastProtocol,
    f: &DenseFunction,
    cfg: &ReductionConfig,
    variant: Variant,
    rounds: usize,
) -> Result<BoostResult> {
    if !variant.is_exact() {
        return Err(ReduceError::new(Stage::Config, "boosting applies to the exact variants"));
    }
    if rounds == 0 {
        return Err(ReduceError::new(Stage::Config, "at least one round is needed"));
    }
    let order = protocol.domain().order();
    if order > MAX_DOMAIN {
        return Err(ReduceError::new(Stage::Config, "input space too large to enumerate"));
    }
    let fv = f.real_values();
    let eta = 0.5;
    let mut weights = vec![1.0 / order as f64; order];
    let mut juntas = Vec::new();
    let mut log = Vec::new();
    let mut perfect = None;
    for t in 0..rounds {
        let d = InputDistribution::from_weights(&weights).at(Stage::Config)?;
        let round_cfg = ReductionConfig {
            seed: cfg.seed.wrapping_add(t as u64),
            ..cfg.clone()
        };
        let red = reduce(protocol, f, &d, &round_cfg, variant)?;
        let correct: Vec<bool> = (0..order).map(|x| red.sketch.eval_index(x) == fv[x]).collect();
        for (w, &ok) in weights.iter_mut().zip(&correct) {
            if ok {
                *w *= 1.0 - eta;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let weight_sum: f64 = weights.iter().sum();
        let correct_inputs = correct.iter().filter(|&&b| b).count();
        log.push(BoostRound {
            distribution_success: red.report.success.unwrap_or(0.0),
            correct_inputs,
            weight_sum,
        });
        if correct_inputs == order {
            perfect = Some(red.sketch.clone());
        }
        juntas.push(red.sketch);
        if perfect.is_some() {
            break;
        }
    }
    let converged = perfect.is_some();
    let sketch = match perfect {
        Some(s) => RandomizedSketch::deterministic(s),
        None => RandomizedSketch::uniform_mixture(juntas, cfg.seed),
    };
    let report = crate::sketch::success_probability(&sketch, f, EvalMode::Exact, None).at(Stage::Verify)?;
    Ok(BoostResult {
        sketch,
        rounds: log,
        min_success: report.min,
        per_x: report.per_x,
        converged,
    })
}
