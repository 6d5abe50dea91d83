//! Deterministic and randomized linear sketches, their streaming state, and
//! exact or Monte-Carlo quality measurement.

use num_rational::Ratio;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    orthogonal_complement, rank_basis_in, AlgebraError, BitVec, CosetPartition, GroupSpec, GroupVec,
    SubgroupEnum,
};
use crate::fourier::DenseFunction;
use crate::stream::Update;

/// Largest post-processing table (entries) a sketch may carry.
pub const MAX_TABLE: usize = 1 << 20;

/// Work cap (support size times input count) for exact evaluation.
pub const EXACT_BUDGET: usize = 1 << 28;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate {coord} out of range for dimension {n}")]
    CoordinateOutOfRange { coord: usize, n: usize },
    #[error("post-processing table has {found} entries, expected {expected}")]
    TableSize { expected: usize, found: usize },
    #[error("post-processing table of {0} entries exceeds the cap of {MAX_TABLE}")]
    TableTooLarge(u128),
    #[error("value {0} lies outside [0, 1]")]
    OutOfUnitInterval(f64),
    #[error("exact evaluation needs {needed} steps, over the budget of {EXACT_BUDGET}")]
    ExactBudget { needed: u128 },
    #[error("sketch and function live on different groups")]
    DomainMismatch,
    #[error("state does not belong to this sketch")]
    StateMismatch,
    #[error("invalid sketch: {0}")]
    Invalid(String),
    #[error("unsupported sketch file: {0}")]
    Format(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SketchError> = std::result::Result<T, E>;

fn check_unit(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(&v) => Err(SketchError::OutOfUnitInterval(v)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Input distributions
// ---------------------------------------------------------------------------

/// A probability distribution over the elements of a finite group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    probs: Vec<f64>,
}

impl InputDistribution {
    pub fn uniform(order: usize) -> Self {
        Self {
            probs: vec![1.0 / order as f64; order],
        }
    }

    pub fn point(order: usize, x: usize) -> Self {
        let mut probs = vec![0.0; order];
        probs[x] = 1.0;
        Self { probs }
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SketchError::Invalid("distribution weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(SketchError::Invalid("distribution weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, p)| p * f(x))
            .sum()
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("normalized weights")
    }
}

// ---------------------------------------------------------------------------
// Deterministic sketches
// ---------------------------------------------------------------------------

/// `g(x) = post(<r_1, x>, ..., <r_k, x>)` over `F2^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearJuntaF2Repr", into = "LinearJuntaF2Repr")]
pub struct LinearJuntaF2 {
    n: usize,
    rows: Vec<u64>,
    post: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LinearJuntaF2Repr {
    n: usize,
    rows: Vec<u64>,
    post: Vec<f64>,
}

impl TryFrom<LinearJuntaF2Repr> for LinearJuntaF2 {
    type Error = SketchError;

    fn try_from(r: LinearJuntaF2Repr) -> Result<Self> {
        let rows = r
            .rows
            .into_iter()
            .map(|w| BitVec::new(w, r.n))
            .collect::<Result<Vec<_>, _>>()?;
        LinearJuntaF2::new(r.n, &rows, r.post)
    }
}

impl From<LinearJuntaF2> for LinearJuntaF2Repr {
    fn from(j: LinearJuntaF2) -> Self {
        Self {
            n: j.n,
            rows: j.rows,
            post: j.post,
        }
    }
}

impl LinearJuntaF2 {
    pub fn new(n: usize, rows: &[BitVec], post: Vec<f64>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.dim() != n) {
            return Err(SketchError::DimensionMismatch {
                expected: n,
                found: r.dim(),
            });
        }
        if rows.len() > 20 {
            return Err(SketchError::TableTooLarge(1u128 << rows.len()));
        }
        let expected = 1usize << rows.len();
        if post.len() != expected {
            return Err(SketchError::TableSize {
                expected,
                found: post.len(),
            });
        }
        Ok(Self {
            n,
            rows: rows.iter().map(BitVec::bits).collect(),
            post,
        })
    }

    /// The cost-0 sketch with a fixed output.
    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            n,
            rows: Vec::new(),
            post: vec![value],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of linear functions `k`.
    pub fn cost(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> Vec<BitVec> {
        self.rows.iter().map(|&w| BitVec::new(w, self.n).expect("validated row")).collect()
    }

    pub fn post(&self) -> &[f64] {
        &self.post
    }

    /// `(l_1(x), ..., l_k(x))` packed with `l_1` in bit 0.
    pub fn sketch_word(&self, x: u64) -> usize {
        self.rows
            .iter()
            .enumerate()
            .fold(0, |z, (j, &r)| z | ((((r & x).count_ones() & 1) as usize) << j))
    }

    pub fn eval(&self, x: &BitVec) -> Result<f64> {
        if x.dim() != self.n {
            return Err(SketchError::DimensionMismatch {
                expected: self.n,
                found: x.dim(),
            });
        }
        Ok(self.post[self.sketch_word(x.bits())])
    }

    /// The same function as an `H`-invariant sketch with `H = ker(lin)`.
    pub fn to_invariant(&self) -> Result<HInvariantSketch> {
        let spec = GroupSpec::boolean(self.n)?;
        let kernel = orthogonal_complement(&rank_basis_in(self.n, &self.rows())?);
        let h = kernel.to_subgroup(&spec)?;
        HInvariantSketch::from_fn(h, |rep| self.post[self.sketch_word(rep as u64)])
    }
}

/// `g(x) = post(l_1(x), ..., l_k(x))` with `l_j` linear over `Z_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZpJuntaRepr", into = "ZpJuntaRepr")]
pub struct ZpJunta {
    n: usize,
    p: u32,
    rows: Vec<Vec<u32>>,
    post: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ZpJuntaRepr {
    n: usize,
    p: u32,
    rows: Vec<Vec<u32>>,
    post: Vec<f64>,
}

impl TryFrom<ZpJuntaRepr> for ZpJunta {
    type Error = SketchError;

    fn try_from(r: ZpJuntaRepr) -> Result<Self> {
        ZpJunta::new(r.n, r.p, r.rows, r.post)
    }
}

impl From<ZpJunta> for ZpJuntaRepr {
    fn from(j: ZpJunta) -> Self {
        Self {
            n: j.n,
            p: j.p,
            rows: j.rows,
            post: j.post,
        }
    }
}

impl ZpJunta {
    pub fn new(n: usize, p: u32, rows: Vec<Vec<u32>>, post: Vec<f64>) -> Result<Self> {
        if p < 2 {
            return Err(AlgebraError::BadModulus(p).into());
        }
        for r in &rows {
            if r.len() != n {
                return Err(SketchError::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
            if let Some(&v) = r.iter().find(|&&v| v >= p) {
                return Err(AlgebraError::CoordinateOutOfRange { value: v, modulus: p }.into());
            }
        }
        let expected = (p as u128).pow(rows.len() as u32);
        if expected > MAX_TABLE as u128 {
            return Err(SketchError::TableTooLarge(expected));
        }
        if post.len() as u128 != expected {
            return Err(SketchError::TableSize {
                expected: expected as usize,
                found: post.len(),
            });
        }
        Ok(Self { n, p, rows, post })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> u32 {
        self.p
    }

    pub fn cost(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn post(&self) -> &[f64] {
        &self.post
    }

    pub fn sketch_values(&self, x: &[u32]) -> Vec<u32> {
        let p = self.p as u64;
        self.rows
            .iter()
            .map(|r| (r.iter().zip(x).map(|(&a, &b)| a as u64 * b as u64 % p).sum::<u64>() % p) as u32)
            .collect()
    }

    fn table_index(&self, z: &[u32]) -> usize {
        z.iter().rev().fold(0, |acc, &v| acc * self.p as usize + v as usize)
    }

    pub fn eval_coords(&self, x: &[u32]) -> Result<f64> {
        if x.len() != self.n {
            return Err(SketchError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(self.post[self.table_index(&self.sketch_values(x))])
    }

    pub fn eval(&self, x: &GroupVec) -> Result<f64> {
        if x.spec().moduli().iter().any(|&m| m != self.p) {
            return Err(SketchError::DomainMismatch);
        }
        self.eval_coords(&x.coords())
    }
}

/// A function constant on the cosets of a subgroup `H`, with one output per
/// coset. Its linear complexity is `|G/H|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InvariantRepr", into = "InvariantRepr")]
pub struct HInvariantSketch {
    subgroup: SubgroupEnum,
    cosets: CosetPartition,
    post: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InvariantRepr {
    moduli: GroupSpec,
    subgroup: Vec<usize>,
    /// Outputs in the order of the cosets' smallest elements.
    post: Vec<f64>,
}

impl TryFrom<InvariantRepr> for HInvariantSketch {
    type Error = SketchError;

    fn try_from(r: InvariantRepr) -> Result<Self> {
        let h = SubgroupEnum::from_elements(&r.moduli, r.subgroup)?;
        HInvariantSketch::new(h, r.post)
    }
}

impl From<HInvariantSketch> for InvariantRepr {
    fn from(s: HInvariantSketch) -> Self {
        Self {
            moduli: s.subgroup.spec().clone(),
            subgroup: s.subgroup.elements().to_vec(),
            post: s.post,
        }
    }
}

impl HInvariantSketch {
    /// `post[c]` is the output on the coset labelled `c` (cosets are labelled
    /// in increasing order of their smallest element).
    pub fn new(subgroup: SubgroupEnum, post: Vec<f64>) -> Result<Self> {
        let r = subgroup.quotient_order();
        if post.len() != r {
            return Err(SketchError::TableSize {
                expected: r,
                found: post.len(),
            });
        }
        let cosets = subgroup.cosets();
        Ok(Self { subgroup, cosets, post })
    }

    /// Builds the post table by evaluating `value` on each coset representative.
    pub fn from_fn(subgroup: SubgroupEnum, value: impl Fn(usize) -> f64) -> Result<Self> {
        let cosets = subgroup.cosets();
        let post = cosets.reps.iter().map(|&rep| value(rep)).collect();
        Ok(Self { subgroup, cosets, post })
    }

    pub fn domain(&self) -> &GroupSpec {
        self.subgroup.spec()
    }

    pub fn subgroup(&self) -> &SubgroupEnum {
        &self.subgroup
    }

    pub fn cosets(&self) -> &CosetPartition {
        &self.cosets
    }

    pub fn post(&self) -> &[f64] {
        &self.post
    }

    /// Linear complexity `r = |G/H|`.
    pub fn complexity(&self) -> usize {
        self.post.len()
    }

    pub fn coset_of(&self, x: usize) -> usize {
        self.cosets.label[x] as usize
    }

    pub fn eval(&self, x: &GroupVec) -> Result<f64> {
        if x.spec() != self.domain() {
            return Err(SketchError::DomainMismatch);
        }
        Ok(self.post[self.coset_of(x.index())])
    }

    /// Re-expresses the sketch over `Z_p^n` as a junta on the given
    /// characters, whose common kernel must be exactly `H`.
    pub fn to_zp_junta(&self, characters: &[usize]) -> Result<ZpJunta> {
        let spec = self.domain();
        let p = spec.moduli()[0];
        if spec.moduli().iter().any(|&m| m != p) {
            return Err(SketchError::Invalid("group is not of the form Z_p^n".into()));
        }
        let rows: Vec<Vec<u32>> = characters.iter().map(|&c| spec.coords_of(c)).collect();
        let mut post = vec![0.0; (p as usize).pow(rows.len() as u32)];
        let probe = ZpJunta::new(spec.dim(), p, rows.clone(), post.clone())?;
        let mut seen: Vec<Option<usize>> = vec![None; post.len()];
        for x in 0..spec.order() {
            let z = probe.table_index(&probe.sketch_values(&spec.coords_of(x)));
            let coset = self.coset_of(x);
            match seen[z] {
                Some(c) if c != coset => {
                    return Err(SketchError::Invalid("characters do not determine the cosets of H".into()))
                }
                _ => {
                    seen[z] = Some(coset);
                    post[z] = self.post[coset];
                }
            }
        }
        let kernel = (0..spec.order()).filter(|&x| probe.sketch_values(&spec.coords_of(x)).iter().all(|&v| v == 0));
        if kernel.count() != self.subgroup.len() {
            return Err(SketchError::Invalid("character kernel differs from H".into()));
        }
        ZpJunta::new(spec.dim(), p, rows, post)
    }
}

/// Any deterministic sketch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sketch {
    F2(LinearJuntaF2),
    Zp(ZpJunta),
    Invariant(HInvariantSketch),
}

/// Online values `(l_1(x), ..., l_k(x))` of a sketch (for `H`-invariant
/// sketches, the coset label of `x`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchState {
    pub values: Vec<u32>,
    pub updates: u64,
}

impl Sketch {
    /// The input group. Fails for `F2^n` sketches too wide to enumerate.
    pub fn domain(&self) -> Result<GroupSpec> {
        Ok(match self {
            Sketch::F2(j) => GroupSpec::boolean(j.n)?,
            Sketch::Zp(j) => GroupSpec::cyclic_power(j.p, j.n)?,
            Sketch::Invariant(s) => s.domain().clone(),
        })
    }

    /// Number of coordinates of the input.
    pub fn input_dim(&self) -> usize {
        match self {
            Sketch::F2(j) => j.n,
            Sketch::Zp(j) => j.n,
            Sketch::Invariant(s) => s.domain().dim(),
        }
    }

    /// Number of linear functions, where that notion applies.
    pub fn cost(&self) -> Option<usize> {
        match self {
            Sketch::F2(j) => Some(j.cost()),
            Sketch::Zp(j) => Some(j.cost()),
            Sketch::Invariant(_) => None,
        }
    }

    /// Linear complexity: number of distinct sketch values.
    pub fn complexity(&self) -> u128 {
        match self {
            Sketch::F2(j) => 1u128 << j.cost(),
            Sketch::Zp(j) => (j.p as u128).pow(j.cost() as u32),
            Sketch::Invariant(s) => s.complexity() as u128,
        }
    }

    pub fn post(&self) -> &[f64] {
        match self {
            Sketch::F2(j) => &j.post,
            Sketch::Zp(j) => &j.post,
            Sketch::Invariant(s) => &s.post,
        }
    }

    fn post_mut(&mut self) -> &mut Vec<f64> {
        match self {
            Sketch::F2(j) => &mut j.post,
            Sketch::Zp(j) => &mut j.post,
            Sketch::Invariant(s) => &mut s.post,
        }
    }

    /// Position in the post table used for input `x` (a group index).
    pub fn bucket(&self, x: usize) -> usize {
        match self {
            Sketch::F2(j) => j.sketch_word(x as u64),
            Sketch::Zp(j) => {
                let coords = GroupSpec::cyclic_power(j.p, j.n)
                    .map(|g| g.coords_of(x))
                    .expect("enumerable domain");
                j.table_index(&j.sketch_values(&coords))
            }
            Sketch::Invariant(s) => s.coset_of(x),
        }
    }

    /// Evaluates on a group index of [`Sketch::domain`].
    pub fn eval_index(&self, x: usize) -> f64 {
        self.post()[self.bucket(x)]
    }

    pub fn eval_bits(&self, x: &BitVec) -> Result<f64> {
        match self {
            Sketch::F2(j) => j.eval(x),
            _ => {
                let spec = self.domain()?;
                if !spec.is_boolean() || spec.dim() != x.dim() {
                    return Err(SketchError::DomainMismatch);
                }
                Ok(self.eval_index(x.bits() as usize))
            }
        }
    }

    pub fn eval(&self, x: &GroupVec) -> Result<f64> {
        match self {
            Sketch::F2(j) => {
                if !x.spec().is_boolean() || x.spec().dim() != j.n {
                    return Err(SketchError::DomainMismatch);
                }
                Ok(j.post[j.sketch_word(x.index() as u64)])
            }
            Sketch::Zp(j) => j.eval(x),
            Sketch::Invariant(s) => s.eval(x),
        }
    }

    /// True when every output lies in `{0, 1}`.
    pub fn is_binary(&self) -> bool {
        self.post().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Replaces each `[0,1]` table entry `W` by a Bernoulli(`W`) draw.
    pub fn round_randomly(&self, rng: &mut impl Rng) -> Result<Sketch> {
        check_unit(self.post())?;
        let mut out = self.clone();
        for v in out.post_mut().iter_mut() {
            *v = if rng.gen::<f64>() < *v { 1.0 } else { 0.0 };
        }
        Ok(out)
    }

    /// The state reached from `0` (equivalently, from an empty stream).
    pub fn empty_state(&self) -> SketchState {
        let k = match self {
            Sketch::F2(j) => j.cost(),
            Sketch::Zp(j) => j.cost(),
            Sketch::Invariant(_) => 1,
        };
        SketchState {
            values: vec![0; k],
            updates: 0,
        }
    }

    /// The state of input `x` (a group index).
    pub fn state_of(&self, x: usize) -> SketchState {
        let values = match self {
            Sketch::F2(j) => {
                let z = j.sketch_word(x as u64);
                (0..j.cost()).map(|b| ((z >> b) & 1) as u32).collect()
            }
            Sketch::Zp(j) => {
                let g = GroupSpec::cyclic_power(j.p, j.n).expect("enumerable domain");
                j.sketch_values(&g.coords_of(x))
            }
            Sketch::Invariant(s) => vec![s.coset_of(x) as u32],
        };
        SketchState { values, updates: 0 }
    }

    /// Applies one stream update to `state`.
    pub fn apply_update(&self, state: &mut SketchState, update: Update) -> Result<()> {
        let n = self.input_dim();
        if update.coord >= n {
            return Err(SketchError::CoordinateOutOfRange { coord: update.coord, n });
        }
        match self {
            Sketch::F2(j) => {
                if state.values.len() != j.cost() {
                    return Err(SketchError::StateMismatch);
                }
                if update.delta.rem_euclid(2) == 1 {
                    for (v, &r) in state.values.iter_mut().zip(&j.rows) {
                        *v ^= ((r >> update.coord) & 1) as u32;
                    }
                }
            }
            Sketch::Zp(j) => {
                if state.values.len() != j.cost() {
                    return Err(SketchError::StateMismatch);
                }
                let p = j.p as i64;
                let d = update.delta.rem_euclid(p);
                for (v, r) in state.values.iter_mut().zip(&j.rows) {
                    *v = ((*v as i64 + d * r[update.coord] as i64) % p) as u32;
                }
            }
            Sketch::Invariant(s) => {
                if state.values.len() != 1 || state.values[0] as usize >= s.complexity() {
                    return Err(SketchError::StateMismatch);
                }
                let rep = s.cosets.reps[state.values[0] as usize];
                let moved = s.domain().add_unit(rep, update.coord, update.delta);
                state.values[0] = s.cosets.label[moved];
            }
        }
        state.updates += 1;
        Ok(())
    }

    /// Sketch value of `x + y` from the states of `x` and `y`.
    pub fn combine_states(&self, a: &SketchState, b: &SketchState) -> Result<SketchState> {
        if a.values.len() != b.values.len() {
            return Err(SketchError::StateMismatch);
        }
        let values = match self {
            Sketch::F2(_) => a.values.iter().zip(&b.values).map(|(x, y)| x ^ y).collect(),
            Sketch::Zp(j) => a.values.iter().zip(&b.values).map(|(x, y)| (x + y) % j.p).collect(),
            Sketch::Invariant(s) => {
                let ra = s.cosets.reps[a.values[0] as usize];
                let rb = s.cosets.reps[b.values[0] as usize];
                vec![s.cosets.label[s.domain().add(ra, rb)]]
            }
        };
        Ok(SketchState {
            values,
            updates: a.updates + b.updates,
        })
    }

    /// Output of the post-processing on a state.
    pub fn eval_state(&self, state: &SketchState) -> Result<f64> {
        let index = match self {
            Sketch::F2(j) => {
                if state.values.len() != j.cost() {
                    return Err(SketchError::StateMismatch);
                }
                state.values.iter().enumerate().fold(0, |z, (b, &v)| z | ((v as usize & 1) << b))
            }
            Sketch::Zp(j) => {
                if state.values.len() != j.cost() {
                    return Err(SketchError::StateMismatch);
                }
                j.table_index(&state.values)
            }
            Sketch::Invariant(s) => {
                if state.values.len() != 1 || state.values[0] as usize >= s.complexity() {
                    return Err(SketchError::StateMismatch);
                }
                state.values[0] as usize
            }
        };
        Ok(self.post()[index])
    }

    /// Bits needed to transmit one state.
    pub fn state_bits(&self) -> u32 {
        match self {
            Sketch::F2(j) => j.cost() as u32,
            Sketch::Zp(j) => j.cost() as u32 * ceil_log2(j.p as u128),
            Sketch::Invariant(s) => ceil_log2(s.complexity() as u128),
        }
    }
}

pub(crate) fn ceil_log2(v: u128) -> u32 {
    if v <= 1 {
        0
    } else {
        128 - (v - 1).leading_zeros()
    }
}

/// Runs a whole stream from the zero state.
pub fn apply_stream(sketch: &Sketch, updates: &[Update]) -> Result<SketchState> {
    let mut state = sketch.empty_state();
    for &u in updates {
        sketch.apply_update(&mut state, u)?;
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Randomized sketches
// ---------------------------------------------------------------------------

/// How a randomized sketch draws its deterministic sketches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "kebab-case")]
pub enum Sampler {
    /// Finite support with integer multiplicities.
    Support { entries: Vec<(u64, Sketch)> },
    /// Each post entry `W(z)` independently rounded to 1 with probability `W(z)`.
    Rounding { base: Sketch },
}

/// A seeded distribution over deterministic sketches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizedSketch {
    pub sampler: Sampler,
    pub seed: u64,
}

/// Evaluation mode for quality measurements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Exact,
    MonteCarlo { samples: usize },
}

/// Exact correct/incorrect counts per input for a finite-support sampler.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCounts {
    pub correct: Vec<u64>,
    pub incorrect: Vec<u64>,
    pub total: u64,
}

impl ExactCounts {
    pub fn ratio(&self, x: usize) -> Ratio<u64> {
        Ratio::new(self.correct[x], self.total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    /// `Pr[g(x) = f(x)]` for every input.
    pub per_x: Vec<f64>,
    pub min: f64,
    /// `E_{x ~ D} Pr[g(x) = f(x)]` when a distribution was supplied.
    pub weighted: Option<f64>,
    pub exact: Option<ExactCounts>,
    /// Per-input standard error of Monte-Carlo estimates.
    pub std_error: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `E|g(x) - f(x)|^2` for every input.
    pub per_x: Vec<f64>,
    pub max: f64,
    pub weighted: Option<f64>,
    pub std_error: Option<Vec<f64>>,
}

impl RandomizedSketch {
    pub fn deterministic(sketch: Sketch) -> Self {
        Self {
            sampler: Sampler::Support {
                entries: vec![(1, sketch)],
            },
            seed: 0,
        }
    }

    /// Uniform mixture of the given sketches.
    pub fn uniform_mixture(sketches: Vec<Sketch>, seed: u64) -> Self {
        Self {
            sampler: Sampler::Support {
                entries: sketches.into_iter().map(|s| (1, s)).collect(),
            },
            seed,
        }
    }

    pub fn rounding(base: Sketch, seed: u64) -> Result<Self> {
        check_unit(base.post())?;
        Ok(Self {
            sampler: Sampler::Rounding { base },
            seed,
        })
    }

    fn first(&self) -> &Sketch {
        match &self.sampler {
            Sampler::Support { entries } => &entries[0].1,
            Sampler::Rounding { base } => base,
        }
    }

    pub fn domain(&self) -> Result<GroupSpec> {
        self.first().domain()
    }

    /// Draw number `index` of the seeded sampling stream.
    pub fn sample(&self, index: u64) -> Sketch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        self.sample_with(&mut rng)
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> Sketch {
        match &self.sampler {
            Sampler::Support { entries } => {
                let w = WeightedIndex::new(entries.iter().map(|(m, _)| *m)).expect("positive multiplicities");
                entries[w.sample(rng)].1.clone()
            }
            Sampler::Rounding { base } => base.round_randomly(rng).expect("validated table"),
        }
    }

    fn validate(&self, f: &DenseFunction) -> Result<GroupSpec> {
        let domain = self.domain()?;
        if let Sampler::Support { entries } = &self.sampler {
            if entries.is_empty() || entries.iter().any(|(m, _)| *m == 0) {
                return Err(SketchError::Invalid("support must be non-empty with positive multiplicities".into()));
            }
            for (_, s) in entries {
                if s.domain()? != domain {
                    return Err(SketchError::DomainMismatch);
                }
            }
        }
        if f.domain() != &domain {
            return Err(SketchError::DomainMismatch);
        }
        Ok(domain)
    }

    fn exact_budget(&self, order: usize) -> Result<()> {
        let support = match &self.sampler {
            Sampler::Support { entries } => entries.len(),
            Sampler::Rounding { .. } => 1,
        };
        let needed = support as u128 * order as u128;
        if needed > EXACT_BUDGET as u128 {
            return Err(SketchError::ExactBudget { needed });
        }
        Ok(())
    }
}

fn weighted(per_x: &[f64], d: Option<&InputDistribution>) -> Result<Option<f64>> {
    match d {
        None => Ok(None),
        Some(d) if d.len() != per_x.len() => Err(SketchError::DomainMismatch),
        Some(d) => Ok(Some(d.expect(|x| per_x[x]))),
    }
}

/// `Pr[g(x) = f(x)]` for every `x`, exactly or by Monte Carlo.
pub fn success_probability(
    rsk: &RandomizedSketch,
    f: &DenseFunction,
    mode: EvalMode,
    d: Option<&InputDistribution>,
) -> Result<SuccessReport> {
    let domain = rsk.validate(f)?;
    let order = domain.order();
    let target: Vec<f64> = f.real_values();
    let (per_x, exact, std_error) = match mode {
        EvalMode::Exact => {
            rsk.exact_budget(order)?;
            match &rsk.sampler {
                Sampler::Support { entries } => {
                    let total: u64 = entries.iter().map(|(m, _)| m).sum();
                    let mut correct = vec![0u64; order];
                    for (m, s) in entries {
                        for (x, c) in correct.iter_mut().enumerate() {
                            if s.eval_index(x) == target[x] {
                                *c += m;
                            }
                        }
                    }
                    let incorrect: Vec<u64> = correct.iter().map(|c| total - c).collect();
                    let per_x = correct.iter().map(|&c| c as f64 / total as f64).collect();
                    (per_x, Some(ExactCounts { correct, incorrect, total }), None)
                }
                Sampler::Rounding { base } => {
                    let per_x = (0..order)
                        .map(|x| {
                            let w = base.eval_index(x);
                            if target[x] == 1.0 {
                                w
                            } else if target[x] == 0.0 {
                                1.0 - w
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    (per_x, None, None)
                }
            }
        }
        EvalMode::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(SketchError::Invalid("Monte-Carlo mode needs at least one sample".into()));
            }
            let mut hits = vec![0u64; order];
            for i in 0..samples {
                let s = rsk.sample(i as u64);
                for (x, h) in hits.iter_mut().enumerate() {
                    if s.eval_index(x) == target[x] {
                        *h += 1;
                    }
                }
            }
            let m = samples as f64;
            let per_x: Vec<f64> = hits.iter().map(|&h| h as f64 / m).collect();
            let se = per_x.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
            (per_x, None, Some(se))
        }
    };
    let min = per_x.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SuccessReport {
        weighted: weighted(&per_x, d)?,
        per_x,
        min,
        exact,
        std_error,
    })
}

/// `E|g(x) - f(x)|^2` for every `x`, exactly or by Monte Carlo.
pub fn approx_error(
    rsk: &RandomizedSketch,
    f: &DenseFunction,
    mode: EvalMode,
    d: Option<&InputDistribution>,
) -> Result<ErrorReport> {
    let domain = rsk.validate(f)?;
    let order = domain.order();
    let target = f.real_values();
    check_unit(&target)?;
    match &rsk.sampler {
        Sampler::Support { entries } => {
            for (_, s) in entries {
                check_unit(s.post())?;
            }
        }
        Sampler::Rounding { base } => check_unit(base.post())?,
    }
    let (per_x, std_error) = match mode {
        EvalMode::Exact => {
            rsk.exact_budget(order)?;
            let per_x = match &rsk.sampler {
                Sampler::Support { entries } => {
                    let total: u64 = entries.iter().map(|(m, _)| m).sum();
                    (0..order)
                        .map(|x| {
                            entries
                                .iter()
                                .map(|(m, s)| *m as f64 * (s.eval_index(x) - target[x]).powi(2))
                                .sum::<f64>()
                                / total as f64
                        })
                        .collect()
                }
                Sampler::Rounding { base } => (0..order)
                    .map(|x| {
                        let w = base.eval_index(x);
                        w * (1.0 - target[x]).powi(2) + (1.0 - w) * target[x].powi(2)
                    })
                    .collect(),
            };
            (per_x, None)
        }
        EvalMode::MonteCarlo { samples } => {
            if samples == 0 {
                return Err(SketchError::Invalid("Monte-Carlo mode needs at least one sample".into()));
            }
            let mut sum = vec![0.0; order];
            let mut sum_sq = vec![0.0; order];
            for i in 0..samples {
                let s = rsk.sample(i as u64);
                for x in 0..order {
                    let e = (s.eval_index(x) - target[x]).powi(2);
                    sum[x] += e;
                    sum_sq[x] += e * e;
                }
            }
            let m = samples as f64;
            let per_x: Vec<f64> = sum.iter().map(|s| s / m).collect();
            let se = per_x
                .iter()
                .zip(&sum_sq)
                .map(|(mean, sq)| ((sq / m - mean * mean).max(0.0) / m).sqrt())
                .collect();
            (per_x, Some(se))
        }
    };
    let max = per_x.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport {
        weighted: weighted(&per_x, d)?,
        per_x,
        max,
        std_error,
    })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub const SKETCH_FORMAT: &str = "linsketch-sketch";
pub const SKETCH_FORMAT_VERSION: u32 = 1;

/// The contents of a sketch file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SketchBody {
    Deterministic { sketch: Sketch },
    Randomized { sketch: RandomizedSketch },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SketchFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: SketchBody,
}

/// Serializes a sketch as a versioned JSON document.
pub fn save_sketch(body: &SketchBody) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SketchFile {
        format: SKETCH_FORMAT.to_string(),
        version: SKETCH_FORMAT_VERSION,
        body: body.clone(),
    })?)
}

pub fn load_sketch(text: &str) -> Result<SketchBody> {
    let file: SketchFile = serde_json::from_str(text)?;
    if file.format != SKETCH_FORMAT {
        return Err(SketchError::Format(format!("unknown format {:?}", file.format)));
    }
    if file.version != SKETCH_FORMAT_VERSION {
        return Err(SketchError::Format(format!("unsupported version {}", file.version)));
    }
    Ok(file.body)
}
