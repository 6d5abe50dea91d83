//! Nisan's generator for space-bounded machines and the derandomized,
//! order-independent execution of a linear sketch over a stream.
//!
//! The generator works over the field with `2^b` elements. Its seed is one
//! base block `x` and `d` affine hashes `h_j(v) = a_j v + c_j`; the output is
//! `G_d(x)` with `G_0(x) = x` and `G_j(x) = G_{j-1}(x) || G_{j-1}(h_j(x))`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sketch::ceil_log2;
use crate::stream::Update;

/// Block width limit; field elements are held in a `u64`.
pub const MAX_BLOCK_BITS: u32 = 64;

/// Block width limit for dense machine tables.
pub const MAX_FSM_BLOCK_BITS: u32 = 16;

/// Seed spaces up to this many bits are enumerated exactly.
pub const EXACT_SEED_BITS: u32 = 24;

#[derive(Debug, Error)]
pub enum PrgError {
    #[error("block width {0} must lie in 1..={MAX_BLOCK_BITS}")]
    BlockBits(u32),
    #[error("block count {0} must be a power of two")]
    BlockCount(u64),
    #[error("block index {index} out of range for {count} blocks")]
    Index { index: u64, count: u64 },
    #[error("seed has {found} bits, expected {expected}")]
    SeedLength { expected: usize, found: usize },
    #[error("coordinate {coord} out of range for dimension {n}")]
    Coordinate { coord: usize, n: usize },
    #[error("generator has {available} blocks, the sketch needs {needed}")]
    TooFewBlocks { available: u64, needed: u64 },
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("invalid machine: {0}")]
    Fsm(String),
    #[error("modulus must be at least 2, got {0}")]
    Modulus(u32),
}

pub type Result<T, E = PrgError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// GF(2^b)
// ---------------------------------------------------------------------------

fn clmul(a: u64, b: u64) -> u128 {
    let mut acc = 0u128;
    let mut a = a as u128;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    acc
}

fn degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

fn poly_mod(mut a: u128, m: u128) -> u128 {
    let dm = degree(m);
    while a != 0 && degree(a) >= dm {
        a ^= m << (degree(a) - dm);
    }
    a
}

fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_mod(a, b);
        a = b;
        b = r;
    }
    a
}

fn mulmod(a: u64, b: u64, m: u128) -> u64 {
    poly_mod(clmul(a, b), m) as u64
}

/// `x^(2^e) mod m`.
fn frobenius(e: u32, m: u128) -> u64 {
    let mut v = poly_mod(2, m) as u64;
    for _ in 0..e {
        v = mulmod(v, v, m);
    }
    v
}

fn prime_factors(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut q = 2;
    while q * q <= n {
        if n.is_multiple_of(q) {
            out.push(q);
            while n.is_multiple_of(q) {
                n /= q;
            }
        }
        q += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Rabin's irreducibility test for a polynomial of degree `b` over GF(2).
fn is_irreducible(m: u128, b: u32) -> bool {
    let x = poly_mod(2, m);
    if frobenius(b, m) as u128 != x {
        return false;
    }
    prime_factors(b).into_iter().all(|q| {
        let t = frobenius(b / q, m) as u128 ^ x;
        degree(poly_gcd(m, t)) == 0
    })
}

/// The irreducible polynomial of degree `b` with the smallest low part.
pub fn irreducible_poly(b: u32) -> Result<u128> {
    if !(1..=MAX_BLOCK_BITS).contains(&b) {
        return Err(PrgError::BlockBits(b));
    }
    let top = 1u128 << b;
    (1u128..top)
        .step_by(2)
        .map(|low| top | low)
        .find(|&m| is_irreducible(m, b))
        .ok_or(PrgError::BlockBits(b))
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Generator with `2^depth` blocks of `block_bits` bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NisanGenerator {
    block_bits: u32,
    depth: u32,
    modulus: u128,
    base: u64,
    /// `(a_j, c_j)` for levels `1..=depth`.
    hashes: Vec<(u64, u64)>,
}

fn block_mask(b: u32) -> u64 {
    if b == 64 {
        u64::MAX
    } else {
        (1u64 << b) - 1
    }
}

impl NisanGenerator {
    fn check(block_bits: u32, block_count: u64) -> Result<u32> {
        if !(1..=MAX_BLOCK_BITS).contains(&block_bits) {
            return Err(PrgError::BlockBits(block_bits));
        }
        if !block_count.is_power_of_two() {
            return Err(PrgError::BlockCount(block_count));
        }
        Ok(block_count.trailing_zeros())
    }

    /// `b (2 log2 k + 1)`.
    pub fn seed_bits(block_bits: u32, block_count: u64) -> Result<usize> {
        let d = Self::check(block_bits, block_count)?;
        Ok(block_bits as usize * (2 * d as usize + 1))
    }

    /// Builds the generator from seed words in the order
    /// `x, a_1, c_1, ..., a_d, c_d`; each word is masked to `b` bits.
    pub fn from_words(block_bits: u32, block_count: u64, words: &[u64]) -> Result<Self> {
        let depth = Self::check(block_bits, block_count)?;
        let expected = 2 * depth as usize + 1;
        if words.len() != expected {
            return Err(PrgError::SeedLength {
                expected: expected * block_bits as usize,
                found: words.len() * block_bits as usize,
            });
        }
        let mask = block_mask(block_bits);
        Ok(Self {
            block_bits,
            depth,
            modulus: irreducible_poly(block_bits)?,
            base: words[0] & mask,
            hashes: words[1..].chunks(2).map(|p| (p[0] & mask, p[1] & mask)).collect(),
        })
    }

    /// Seed given as bytes, read least-significant bit first. Extra trailing
    /// bits must be zero.
    pub fn from_seed_bytes(block_bits: u32, block_count: u64, bytes: &[u8]) -> Result<Self> {
        let bits = Self::seed_bits(block_bits, block_count)?;
        let bit = |i: usize| bytes.get(i / 8).is_some_and(|b| (b >> (i % 8)) & 1 == 1);
        let available = bytes.len() * 8;
        if available < bits || (bits..available).any(bit) {
            return Err(PrgError::SeedLength {
                expected: bits,
                found: available,
            });
        }
        let words: Vec<u64> = (0..bits / block_bits as usize)
            .map(|w| {
                (0..block_bits as usize).fold(0u64, |acc, j| acc | (bit(w * block_bits as usize + j) as u64) << j)
            })
            .collect();
        Self::from_words(block_bits, block_count, &words)
    }

    pub fn random(block_bits: u32, block_count: u64, rng: &mut impl Rng) -> Result<Self> {
        let depth = Self::check(block_bits, block_count)?;
        let words: Vec<u64> = (0..2 * depth + 1).map(|_| rng.gen()).collect();
        Self::from_words(block_bits, block_count, &words)
    }

    /// Reuses this generator's field to rebuild from new seed words.
    fn reseed(&mut self, words: &[u64]) {
        let mask = block_mask(self.block_bits);
        self.base = words[0] & mask;
        for (h, p) in self.hashes.iter_mut().zip(words[1..].chunks(2)) {
            *h = (p[0] & mask, p[1] & mask);
        }
    }

    pub fn block_bits(&self) -> u32 {
        self.block_bits
    }

    pub fn block_count(&self) -> u64 {
        1 << self.depth
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn modulus(&self) -> u128 {
        self.modulus
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn hashes(&self) -> &[(u64, u64)] {
        &self.hashes
    }

    /// `h_level(v)` for `level` in `1..=depth`.
    pub fn hash(&self, level: u32, v: u64) -> u64 {
        let (a, c) = self.hashes[level as usize - 1];
        mulmod(a, v, self.modulus) ^ c
    }

    /// Block `index`: walking from the top level down, apply `h_j` when bit
    /// `j - 1` of the index is set.
    pub fn block(&self, index: u64) -> Result<u64> {
        if index >= self.block_count() {
            return Err(PrgError::Index {
                index,
                count: self.block_count(),
            });
        }
        let mut v = self.base;
        for level in (1..=self.depth).rev() {
            if (index >> (level - 1)) & 1 == 1 {
                v = self.hash(level, v);
            }
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Machines reading blocks
// ---------------------------------------------------------------------------

/// A deterministic machine that reads one `b`-bit block per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockFsm {
    states: usize,
    block_bits: u32,
    initial: usize,
    /// `transitions[s << b | block]`.
    transitions: Vec<u32>,
}

impl BlockFsm {
    pub fn new(states: usize, block_bits: u32, initial: usize, transitions: Vec<u32>) -> Result<Self> {
        if !(1..=MAX_FSM_BLOCK_BITS).contains(&block_bits) {
            return Err(PrgError::BlockBits(block_bits));
        }
        if states == 0 || initial >= states {
            return Err(PrgError::Fsm("initial state out of range".into()));
        }
        if transitions.len() != states << block_bits {
            return Err(PrgError::Fsm(format!(
                "expected {} transitions, found {}",
                states << block_bits,
                transitions.len()
            )));
        }
        if transitions.iter().any(|&t| t as usize >= states) {
            return Err(PrgError::Fsm("transition to an unknown state".into()));
        }
        Ok(Self {
            states,
            block_bits,
            initial,
            transitions,
        })
    }

    pub fn from_fn(states: usize, block_bits: u32, initial: usize, step: impl Fn(usize, u64) -> usize) -> Result<Self> {
        if !(1..=MAX_FSM_BLOCK_BITS).contains(&block_bits) {
            return Err(PrgError::BlockBits(block_bits));
        }
        let transitions = (0..states)
            .flat_map(|s| (0..1u64 << block_bits).map(move |blk| (s, blk)))
            .map(|(s, blk)| step(s, blk) as u32)
            .collect();
        Self::new(states, block_bits, initial, transitions)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn block_bits(&self) -> u32 {
        self.block_bits
    }

    pub fn step(&self, state: usize, block: u64) -> usize {
        self.transitions[state << self.block_bits | block as usize] as usize
    }

    pub fn run(&self, blocks: impl IntoIterator<Item = u64>) -> usize {
        blocks.into_iter().fold(self.initial, |s, b| self.step(s, b))
    }

    /// Final-state distribution after `steps` uniformly random blocks.
    pub fn uniform_distribution(&self, steps: u64) -> Vec<f64> {
        let mut dist = vec![0.0; self.states];
        dist[self.initial] = 1.0;
        let weight = 1.0 / (1u64 << self.block_bits) as f64;
        for _ in 0..steps {
            let mut next = vec![0.0; self.states];
            for (s, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for blk in 0..1u64 << self.block_bits {
                    next[self.step(s, blk)] += p * weight;
                }
            }
            dist = next;
        }
        dist
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    /// L1 distance between the two final-state distributions.
    pub distance: f64,
    pub exact: bool,
    pub seeds: u64,
    /// Expected L1 distance of an empirical distribution from the truth at
    /// this sample size, `sum_s sqrt(2 p_s (1 - p_s) / (pi m))`; zero when exact.
    pub noise_floor: f64,
    pub uniform: Vec<f64>,
    pub generated: Vec<f64>,
}

/// L1 distance between the machine's final state on truly random blocks and
/// on generator output, over `block_count` steps. Exact when the seed has at
/// most [`EXACT_SEED_BITS`] bits, otherwise estimated from `samples` seeds.
pub fn fsm_distance(fsm: &BlockFsm, block_count: u64, samples: u64, rng: &mut impl Rng) -> Result<DistanceReport> {
    let b = fsm.block_bits;
    let seed_bits = NisanGenerator::seed_bits(b, block_count)?;
    if fsm.states > 1 << 10 || block_count * b as u64 > 1 << 14 {
        return Err(PrgError::Budget(format!(
            "{} states and {} random bits exceed the exact-evaluation limits",
            fsm.states,
            block_count * b as u64
        )));
    }
    let uniform = fsm.uniform_distribution(block_count);
    let depth = block_count.trailing_zeros();
    let words = 2 * depth as usize + 1;
    let mut generator = NisanGenerator::from_words(b, block_count, &vec![0; words])?;
    let mut counts = vec![0u64; fsm.states];
    let exact = seed_bits as u32 <= EXACT_SEED_BITS;
    let total = if exact { 1u64 << seed_bits } else { samples };
    if total == 0 {
        return Err(PrgError::Budget("at least one seed sample is needed".into()));
    }
    let mask = block_mask(b);
    let mut seed_words = vec![0u64; words];
    for s in 0..total {
        for (i, w) in seed_words.iter_mut().enumerate() {
            *w = if exact { (s >> (i as u32 * b)) & mask } else { rng.gen::<u64>() & mask };
        }
        generator.reseed(&seed_words);
        let end = fsm.run((0..block_count).map(|i| generator.block(i).expect("index in range")));
        counts[end] += 1;
    }
    let generated: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let distance = uniform.iter().zip(&generated).map(|(u, g)| (u - g).abs()).sum();
    let noise_floor = if exact {
        0.0
    } else {
        generated
            .iter()
            .map(|&p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * total as f64)).sqrt())
            .sum()
    };
    Ok(DistanceReport {
        distance,
        exact,
        seeds: total,
        noise_floor,
        uniform,
        generated,
    })
}

// ---------------------------------------------------------------------------
// Derandomized sketching
// ---------------------------------------------------------------------------

/// An `s x n` sketch matrix over `Z_p` whose column for coordinate `i` is
/// regenerated from generator blocks on demand.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchTemplate {
    pub n: usize,
    pub s: usize,
    pub p: u32,
    pub generator: NisanGenerator,
}

impl SketchTemplate {
    /// Picks the smallest power-of-two block count covering all `n` rows.
    pub fn random(n: usize, s: usize, p: u32, block_bits: u32, rng: &mut impl Rng) -> Result<Self> {
        if p < 2 {
            return Err(PrgError::Modulus(p));
        }
        let needed = n as u64 * blocks_per_row(s, p, block_bits);
        let count = needed.max(1).next_power_of_two();
        Ok(Self {
            n,
            s,
            p,
            generator: NisanGenerator::random(block_bits, count, rng)?,
        })
    }

    pub fn new(n: usize, s: usize, p: u32, generator: NisanGenerator) -> Result<Self> {
        if p < 2 {
            return Err(PrgError::Modulus(p));
        }
        let needed = n as u64 * blocks_per_row(s, p, generator.block_bits());
        if needed > generator.block_count() {
            return Err(PrgError::TooFewBlocks {
                available: generator.block_count(),
                needed,
            });
        }
        Ok(Self { n, s, p, generator })
    }

    pub fn blocks_per_row(&self) -> u64 {
        blocks_per_row(self.s, self.p, self.generator.block_bits())
    }

    /// Entries of row `i`: consecutive `ceil(log2 p)`-bit chunks of blocks
    /// `i * bpr, ..., (i + 1) * bpr - 1`, each reduced mod `p`.
    pub fn row(&self, i: usize) -> Result<Vec<u32>> {
        if i >= self.n {
            return Err(PrgError::Coordinate { coord: i, n: self.n });
        }
        let width = ceil_log2(self.p as u128);
        let b = self.generator.block_bits();
        let bpr = self.blocks_per_row();
        let start = i as u64 * bpr;
        let mut out = Vec::with_capacity(self.s);
        let mut buffer: u128 = 0;
        let mut held = 0u32;
        let mut next = start;
        for _ in 0..self.s {
            while held < width {
                buffer |= (self.generator.block(next)? as u128) << held;
                held += b;
                next += 1;
            }
            let chunk = (buffer & ((1u128 << width) - 1)) as u64;
            buffer >>= width;
            held -= width;
            out.push((chunk % self.p as u64) as u32);
        }
        Ok(out)
    }
}

fn blocks_per_row(s: usize, p: u32, block_bits: u32) -> u64 {
    let bits = s as u64 * ceil_log2(p as u128) as u64;
    bits.div_ceil(block_bits as u64).max(1)
}

fn add_row(state: &mut [u32], row: &[u32], delta: i64, p: u32) {
    let d = delta.rem_euclid(p as i64) as u64;
    for (v, &r) in state.iter_mut().zip(row) {
        *v = ((*v as u64 + d * r as u64) % p as u64) as u32;
    }
}

/// Processes updates in arrival order, regenerating each needed row.
pub fn derandomized_apply(template: &SketchTemplate, updates: &[Update]) -> Result<Vec<u32>> {
    let mut state = vec![0u32; template.s];
    for u in updates {
        let row = template.row(u.coord)?;
        add_row(&mut state, &row, u.delta, template.p);
    }
    Ok(state)
}

/// Processes updates grouped by ascending coordinate, generating each row
/// once.
pub fn derandomized_apply_sorted(template: &SketchTemplate, updates: &[Update]) -> Result<Vec<u32>> {
    let mut sorted = updates.to_vec();
    sorted.sort_by_key(|u| u.coord);
    let mut state = vec![0u32; template.s];
    let mut current: Option<(usize, Vec<u32>)> = None;
    for u in &sorted {
        if current.as_ref().map(|c| c.0) != Some(u.coord) {
            current = Some((u.coord, template.row(u.coord)?));
        }
        let (_, row) = current.as_ref().expect("row just generated");
        add_row(&mut state, row, u.delta, template.p);
    }
    Ok(state)
}
