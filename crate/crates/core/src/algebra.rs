//! Exact linear algebra over F2 and arithmetic in finite abelian groups
//! `Z_{m_1} x ... x Z_{m_n}`.
//!
//! Group elements are addressed by a mixed-radix index with coordinate 0 as
//! the least significant digit. For `F2^n` this index coincides with the
//! packed bit pattern of a [`BitVec`], so the two views can be used
//! interchangeably by the Fourier and sketching code.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest dimension a packed [`BitVec`] can hold.
pub const MAX_BITS: usize = 64;

/// Root-of-unity tables are cached for exponents up to this size.
const ROOT_TABLE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} exceeds the supported maximum of {MAX_BITS}")]
    DimensionTooLarge(usize),
    #[error("bit pattern {bits:#x} has bits set beyond dimension {n}")]
    StrayBits { bits: u64, n: usize },
    #[error("modulus {0} must be at least 2")]
    BadModulus(u32),
    #[error("group order overflows the addressable index space")]
    GroupTooLarge,
    #[error("coordinate value {value} out of range for modulus {modulus}")]
    CoordinateOutOfRange { value: u32, modulus: u32 },
    #[error("elements belong to different groups")]
    GroupMismatch,
    #[error("length mismatch: {vectors} vectors but {weights} weights")]
    LengthMismatch { vectors: usize, weights: usize },
    #[error("element list is not a subgroup: {0}")]
    NotSubgroup(&'static str),
    #[error("cannot parse bit vector from {0:?}")]
    Parse(String),
}

pub type Result<T, E = AlgebraError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// BitVec
// ---------------------------------------------------------------------------

/// An element of `F2^n`, `n <= 64`, packed into one machine word.
///
/// Bit `i` of the word is coordinate `x_i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct BitVec {
    bits: u64,
    n: u8,
}

fn mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl BitVec {
    pub fn new(bits: u64, n: usize) -> Result<Self> {
        if n > MAX_BITS {
            return Err(AlgebraError::DimensionTooLarge(n));
        }
        if bits & !mask(n) != 0 {
            return Err(AlgebraError::StrayBits { bits, n });
        }
        Ok(Self { bits, n: n as u8 })
    }

    /// The zero vector. Panics if `n > 64`.
    pub fn zero(n: usize) -> Self {
        Self::new(0, n).expect("dimension within range")
    }

    /// Unit vector `e_i`. Panics if `i >= n` or `n > 64`.
    pub fn unit(n: usize, i: usize) -> Self {
        assert!(i < n, "unit index {i} out of range for dimension {n}");
        Self::new(1 << i, n).expect("dimension within range")
    }

    /// The all-ones vector.
    pub fn ones(n: usize) -> Self {
        Self::new(mask(n), n).expect("dimension within range")
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.dim());
        (self.bits >> i) & 1 == 1
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.dim(), "coordinate {i} out of range");
        self.bits ^= 1 << i;
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn parity(&self) -> bool {
        self.bits.count_ones() & 1 == 1
    }

    /// Inner product over F2.
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.n, other.n, "dimension mismatch");
        (self.bits & other.bits).count_ones() & 1 == 1
    }

    pub fn checked_add(&self, other: &BitVec) -> Result<BitVec> {
        if self.n != other.n {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(BitVec {
            bits: self.bits ^ other.bits,
            n: self.n,
        })
    }

    /// Lexicographic comparison on the coordinate sequence `(x_0, x_1, ...)`.
    pub fn lex_cmp(&self, other: &BitVec) -> Ordering {
        lex_key(self.bits, self.dim()).cmp(&lex_key(other.bits, other.dim()))
    }
}

/// Key that orders packed words lexicographically by coordinate sequence.
pub(crate) fn lex_key(bits: u64, n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        bits.reverse_bits() >> (64 - n)
    }
}

impl std::ops::Add for BitVec {
    type Output = BitVec;

    fn add(self, rhs: BitVec) -> BitVec {
        self.checked_add(&rhs).expect("bit vectors of equal dimension")
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Parses a string of `0`/`1` characters, first character = coordinate 0.
impl FromStr for BitVec {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let chars: Vec<char> = s.chars().collect();
        if chars.len() > MAX_BITS {
            return Err(AlgebraError::DimensionTooLarge(chars.len()));
        }
        for (i, c) in chars.iter().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << i,
                _ => return Err(AlgebraError::Parse(s.to_string())),
            }
        }
        BitVec::new(bits, chars.len())
    }
}

// ---------------------------------------------------------------------------
// GroupSpec / GroupVec / characters
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct GroupInner {
    moduli: Vec<u32>,
    strides: Vec<usize>,
    order: usize,
    exponent: u64,
    /// `exponent / m_j` for each coordinate.
    phase_scale: Vec<u64>,
    roots: Option<Vec<Complex64>>,
    boolean: bool,
}

/// The group `Z_{m_1} x ... x Z_{m_n}` with its exponent `m = lcm(m_i)`.
///
/// Cheap to clone; the descriptor is shared.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct GroupSpec {
    inner: Arc<GroupInner>,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl GroupSpec {
    pub fn new(moduli: Vec<u32>) -> Result<Self> {
        let mut strides = Vec::with_capacity(moduli.len());
        let mut order: usize = 1;
        let mut exponent: u64 = 1;
        for &m in &moduli {
            if m < 2 {
                return Err(AlgebraError::BadModulus(m));
            }
            strides.push(order);
            order = order
                .checked_mul(m as usize)
                .ok_or(AlgebraError::GroupTooLarge)?;
            let g = gcd(exponent, m as u64);
            exponent = (exponent / g)
                .checked_mul(m as u64)
                .ok_or(AlgebraError::GroupTooLarge)?;
        }
        let phase_scale = moduli.iter().map(|&m| exponent / m as u64).collect();
        let roots = (exponent <= ROOT_TABLE_LIMIT).then(|| {
            (0..exponent)
                .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / exponent as f64))
                .collect()
        });
        let boolean = moduli.iter().all(|&m| m == 2);
        Ok(Self {
            inner: Arc::new(GroupInner {
                moduli,
                strides,
                order,
                exponent,
                phase_scale,
                roots,
                boolean,
            }),
        })
    }

    /// `F2^n` viewed as `Z_2^n`.
    pub fn boolean(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    /// `Z_p^n`.
    pub fn cyclic_power(p: u32, n: usize) -> Result<Self> {
        Self::new(vec![p; n])
    }

    pub fn moduli(&self) -> &[u32] {
        &self.inner.moduli
    }

    pub fn dim(&self) -> usize {
        self.inner.moduli.len()
    }

    /// `|G|`.
    pub fn order(&self) -> usize {
        self.inner.order
    }

    /// The exponent `m`, i.e. the lcm of the moduli.
    pub fn exponent(&self) -> u64 {
        self.inner.exponent
    }

    /// True for `Z_2^n`, where indices are packed bit patterns.
    pub fn is_boolean(&self) -> bool {
        self.inner.boolean
    }

    pub fn stride(&self, j: usize) -> usize {
        self.inner.strides[j]
    }

    pub fn coord(&self, index: usize, j: usize) -> u32 {
        ((index / self.inner.strides[j]) % self.inner.moduli[j] as usize) as u32
    }

    pub fn coords_of(&self, index: usize) -> Vec<u32> {
        let mut rest = index;
        self.inner
            .moduli
            .iter()
            .map(|&m| {
                let c = (rest % m as usize) as u32;
                rest /= m as usize;
                c
            })
            .collect()
    }

    pub fn index_of(&self, coords: &[u32]) -> Result<usize> {
        if coords.len() != self.dim() {
            return Err(AlgebraError::DimensionMismatch {
                expected: self.dim(),
                found: coords.len(),
            });
        }
        let mut index = 0;
        for (j, (&c, &m)) in coords.iter().zip(&self.inner.moduli).enumerate() {
            if c >= m {
                return Err(AlgebraError::CoordinateOutOfRange { value: c, modulus: m });
            }
            index += c as usize * self.inner.strides[j];
        }
        Ok(index)
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        if self.inner.boolean {
            return a ^ b;
        }
        let (mut ra, mut rb, mut out) = (a, b, 0);
        for (j, &m) in self.inner.moduli.iter().enumerate() {
            let m = m as usize;
            let s = (ra % m + rb % m) % m;
            out += s * self.inner.strides[j];
            ra /= m;
            rb /= m;
        }
        out
    }

    pub fn neg(&self, a: usize) -> usize {
        if self.inner.boolean {
            return a;
        }
        let (mut ra, mut out) = (a, 0);
        for (j, &m) in self.inner.moduli.iter().enumerate() {
            let m = m as usize;
            let c = ra % m;
            out += ((m - c) % m) * self.inner.strides[j];
            ra /= m;
        }
        out
    }

    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add(a, self.neg(b))
    }

    /// Index of `a + delta * e_j`, with `delta` reduced modulo `m_j`.
    pub fn add_unit(&self, a: usize, j: usize, delta: i64) -> usize {
        let m = self.inner.moduli[j] as i64;
        let c = self.coord(a, j) as i64;
        let next = (c + delta).rem_euclid(m);
        a - c as usize * self.inner.strides[j] + next as usize * self.inner.strides[j]
    }

    /// Phase `k` such that `gamma(x) = exp(2 pi i k / m)`, computed exactly.
    pub fn phase(&self, gamma: usize, x: usize) -> u64 {
        if self.inner.boolean {
            return ((gamma & x).count_ones() & 1) as u64;
        }
        let m = self.inner.exponent;
        let (mut rg, mut rx) = (gamma, x);
        let mut acc: u64 = 0;
        for (j, &mj) in self.inner.moduli.iter().enumerate() {
            let mj = mj as usize;
            let g = (rg % mj) as u64;
            let c = (rx % mj) as u64;
            acc = (acc + (g * c % mj as u64) * self.inner.phase_scale[j]) % m;
            rg /= mj;
            rx /= mj;
        }
        acc
    }

    /// `exp(2 pi i k / m)`.
    pub fn root(&self, k: u64) -> Complex64 {
        let m = self.inner.exponent;
        match &self.inner.roots {
            Some(table) => table[(k % m) as usize],
            None => Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k % m) as f64 / m as f64),
        }
    }

    /// Character value `gamma(x)` by index.
    pub fn char_value(&self, gamma: usize, x: usize) -> Complex64 {
        self.root(self.phase(gamma, x))
    }

    pub fn element(&self, index: usize) -> GroupVec {
        assert!(index < self.order(), "index {index} out of range");
        GroupVec {
            spec: self.clone(),
            index,
        }
    }

    pub fn element_from_coords(&self, coords: &[u32]) -> Result<GroupVec> {
        Ok(GroupVec {
            spec: self.clone(),
            index: self.index_of(coords)?,
        })
    }

    pub fn zero(&self) -> GroupVec {
        self.element(0)
    }
}

impl PartialEq for GroupSpec {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.moduli == other.inner.moduli
    }
}

impl Eq for GroupSpec {}

impl TryFrom<Vec<u32>> for GroupSpec {
    type Error = AlgebraError;

    fn try_from(moduli: Vec<u32>) -> Result<Self> {
        GroupSpec::new(moduli)
    }
}

impl From<GroupSpec> for Vec<u32> {
    fn from(spec: GroupSpec) -> Vec<u32> {
        spec.moduli().to_vec()
    }
}

/// An element of a [`GroupSpec`], stored by mixed-radix index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupVec {
    spec: GroupSpec,
    index: usize,
}

impl GroupVec {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn coords(&self) -> Vec<u32> {
        self.spec.coords_of(self.index)
    }

    pub fn is_zero(&self) -> bool {
        self.index == 0
    }

    pub fn checked_add(&self, other: &GroupVec) -> Result<GroupVec> {
        if self.spec != other.spec {
            return Err(AlgebraError::GroupMismatch);
        }
        Ok(self.spec.element(self.spec.add(self.index, other.index)))
    }

    pub fn neg(&self) -> GroupVec {
        self.spec.element(self.spec.neg(self.index))
    }

    /// `k * self`.
    pub fn scale(&self, k: u64) -> GroupVec {
        let coords: Vec<u32> = self
            .coords()
            .iter()
            .zip(self.spec.moduli())
            .map(|(&c, &m)| ((c as u64 * (k % m as u64)) % m as u64) as u32)
            .collect();
        self.spec.element_from_coords(&coords).expect("reduced coordinates")
    }
}

impl std::ops::Add for &GroupVec {
    type Output = GroupVec;

    fn add(self, rhs: &GroupVec) -> GroupVec {
        self.checked_add(rhs).expect("elements of the same group")
    }
}

/// A character `x -> prod_j exp(2 pi i gamma_j x_j / m_j)`, identified by `gamma`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharacterIndex(pub GroupVec);

impl CharacterIndex {
    pub fn spec(&self) -> &GroupSpec {
        self.0.spec()
    }

    pub fn index(&self) -> usize {
        self.0.index()
    }
}

/// Evaluates the character `gamma` at `x`.
pub fn char_eval(gamma: &CharacterIndex, x: &GroupVec) -> Result<Complex64> {
    if gamma.spec() != x.spec() {
        return Err(AlgebraError::GroupMismatch);
    }
    Ok(x.spec().char_value(gamma.index(), x.index()))
}

// ---------------------------------------------------------------------------
// Subspaces of F2^n
// ---------------------------------------------------------------------------

/// A subspace of `F2^n` held as a reduced row-echelon basis.
///
/// Each basis row owns a pivot (its highest set bit) that is clear in every
/// other row. Rows are sorted by descending pivot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceF2 {
    n: usize,
    basis: Vec<u64>,
}

fn pivot(row: u64) -> u32 {
    63 - row.leading_zeros()
}

impl SubspaceF2 {
    pub fn zero(n: usize) -> Result<Self> {
        if n > MAX_BITS {
            return Err(AlgebraError::DimensionTooLarge(n));
        }
        Ok(Self { n, basis: Vec::new() })
    }

    pub fn full(n: usize) -> Result<Self> {
        let mut s = Self::zero(n)?;
        s.basis = (0..n).rev().map(|i| 1u64 << i).collect();
        Ok(s)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> Vec<BitVec> {
        self.basis
            .iter()
            .map(|&b| BitVec { bits: b, n: self.n as u8 })
            .collect()
    }

    pub fn basis_words(&self) -> &[u64] {
        &self.basis
    }

    /// Normal form of `x`: every pivot bit cleared by elimination.
    pub fn reduce_word(&self, mut x: u64) -> u64 {
        for &row in &self.basis {
            if (x >> pivot(row)) & 1 == 1 {
                x ^= row;
            }
        }
        x
    }

    pub fn contains(&self, x: &BitVec) -> bool {
        x.dim() == self.n && self.reduce_word(x.bits) == 0
    }

    /// Inserts `row`, keeping the basis fully reduced. Returns whether the
    /// dimension grew.
    fn insert_word(&mut self, row: u64) -> bool {
        let r = self.reduce_word(row);
        if r == 0 {
            return false;
        }
        let p = pivot(r);
        for b in self.basis.iter_mut() {
            if (*b >> p) & 1 == 1 {
                *b ^= r;
            }
        }
        let pos = self
            .basis
            .iter()
            .position(|&b| pivot(b) < p)
            .unwrap_or(self.basis.len());
        self.basis.insert(pos, r);
        true
    }

    /// All `2^dim` elements as packed words, in Gray-code-free binary order of
    /// basis coefficients.
    pub fn element_words(&self) -> Vec<u64> {
        assert!(self.dim() <= 30, "subspace too large to enumerate");
        let mut out = Vec::with_capacity(1 << self.dim());
        for mask in 0u64..(1 << self.dim()) {
            let mut v = 0;
            for (j, &row) in self.basis.iter().enumerate() {
                if (mask >> j) & 1 == 1 {
                    v ^= row;
                }
            }
            out.push(v);
        }
        out
    }

    /// The subspace as an enumerated subgroup of `Z_2^n`.
    pub fn to_subgroup(&self, spec: &GroupSpec) -> Result<SubgroupEnum> {
        if !spec.is_boolean() || spec.dim() != self.n {
            return Err(AlgebraError::GroupMismatch);
        }
        let mut elements: Vec<usize> = self.element_words().into_iter().map(|w| w as usize).collect();
        elements.sort_unstable();
        Ok(SubgroupEnum {
            spec: spec.clone(),
            elements,
        })
    }
}

/// Row-reduces `rows` into a basis of their span.
pub fn rank_basis(rows: &[BitVec]) -> Result<SubspaceF2> {
    let n = rows.first().map_or(0, BitVec::dim);
    rank_basis_in(n, rows)
}

/// As [`rank_basis`], with an explicit ambient dimension (needed for the
/// empty list).
pub fn rank_basis_in(n: usize, rows: &[BitVec]) -> Result<SubspaceF2> {
    let mut space = SubspaceF2::zero(n)?;
    for row in rows {
        if row.dim() != n {
            return Err(AlgebraError::DimensionMismatch {
                expected: n,
                found: row.dim(),
            });
        }
        space.insert_word(row.bits);
    }
    Ok(space)
}

/// `V = {v : <u, v> = 0 for all u in U}`.
pub fn orthogonal_complement(u: &SubspaceF2) -> SubspaceF2 {
    let n = u.n;
    let pivot_mask: u64 = u.basis.iter().fold(0, |acc, &r| acc | (1 << pivot(r)));
    let mut v = SubspaceF2 { n, basis: Vec::new() };
    for free in (0..n).filter(|&i| (pivot_mask >> i) & 1 == 0) {
        let mut word = 1u64 << free;
        for &row in &u.basis {
            if (row >> free) & 1 == 1 {
                word |= 1 << pivot(row);
            }
        }
        v.insert_word(word);
    }
    v
}

/// Canonical representative of the coset `x + V`.
pub fn coset_rep(v: &SubspaceF2, x: &BitVec) -> Result<BitVec> {
    if x.dim() != v.n {
        return Err(AlgebraError::DimensionMismatch {
            expected: v.n,
            found: x.dim(),
        });
    }
    Ok(BitVec {
        bits: v.reduce_word(x.bits),
        n: x.n,
    })
}

/// Orders candidate positions by descending weight, ties broken by the
/// lexicographic order of `keys`.
pub(crate) fn greedy_order(weights: &[f64], keys: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .total_cmp(&weights[a])
            .then_with(|| keys[a].cmp(&keys[b]))
    });
    order
}

/// Greedy maximal linearly independent subset, heaviest first.
pub fn max_independent_subset(vectors: &[BitVec], weights: &[f64]) -> Result<Vec<BitVec>> {
    if vectors.len() != weights.len() {
        return Err(AlgebraError::LengthMismatch {
            vectors: vectors.len(),
            weights: weights.len(),
        });
    }
    let n = vectors.first().map_or(0, BitVec::dim);
    let keys: Vec<u64> = vectors.iter().map(|v| lex_key(v.bits, v.dim())).collect();
    let mut span = SubspaceF2::zero(n)?;
    let mut out = Vec::new();
    for i in greedy_order(weights, &keys) {
        let v = vectors[i];
        if v.dim() != n {
            return Err(AlgebraError::DimensionMismatch {
                expected: n,
                found: v.dim(),
            });
        }
        if span.insert_word(v.bits) {
            out.push(v);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Subgroups by enumeration
// ---------------------------------------------------------------------------

/// A subgroup `H <= G` held as its sorted element indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgroupEnum {
    spec: GroupSpec,
    elements: Vec<usize>,
}

/// Coset partition of `G` by a subgroup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CosetPartition {
    /// `label[x]` is the coset number of element `x`.
    pub label: Vec<u32>,
    /// Smallest element index of each coset, in label order.
    pub reps: Vec<usize>,
}

impl SubgroupEnum {
    /// Validates closure and builds the subgroup.
    pub fn from_elements(spec: &GroupSpec, mut elements: Vec<usize>) -> Result<Self> {
        elements.sort_unstable();
        elements.dedup();
        if elements.first() != Some(&0) {
            return Err(AlgebraError::NotSubgroup("identity missing"));
        }
        if elements.iter().any(|&e| e >= spec.order()) {
            return Err(AlgebraError::NotSubgroup("element outside the group"));
        }
        let mut member = vec![false; spec.order()];
        for &e in &elements {
            member[e] = true;
        }
        for &a in &elements {
            if !member[spec.neg(a)] {
                return Err(AlgebraError::NotSubgroup("not closed under negation"));
            }
            for &b in &elements {
                if !member[spec.add(a, b)] {
                    return Err(AlgebraError::NotSubgroup("not closed under addition"));
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            elements,
        })
    }

    pub(crate) fn from_sorted_unchecked(spec: &GroupSpec, elements: Vec<usize>) -> Self {
        Self {
            spec: spec.clone(),
            elements,
        }
    }

    pub fn trivial(spec: &GroupSpec) -> Self {
        Self::from_sorted_unchecked(spec, vec![0])
    }

    pub fn whole(spec: &GroupSpec) -> Self {
        Self::from_sorted_unchecked(spec, (0..spec.order()).collect())
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.elements.binary_search(&x).is_ok()
    }

    /// `|G/H|`.
    pub fn quotient_order(&self) -> usize {
        self.spec.order() / self.elements.len()
    }

    pub fn cosets(&self) -> CosetPartition {
        let order = self.spec.order();
        let mut label = vec![u32::MAX; order];
        let mut reps = Vec::with_capacity(self.quotient_order());
        for x in 0..order {
            if label[x] != u32::MAX {
                continue;
            }
            let id = reps.len() as u32;
            reps.push(x);
            for &h in &self.elements {
                label[self.spec.add(x, h)] = id;
            }
        }
        CosetPartition { label, reps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    /// Independent rank oracle: plain elimination on a dense 0/1 matrix.
    fn naive_rank(rows: &[BitVec], n: usize) -> usize {
        let mut m: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| (0..n).map(|i| r.get(i) as u8).collect())
            .collect();
        let mut rank = 0;
        for col in 0..n {
            let Some(p) = (rank..m.len()).find(|&r| m[r][col] == 1) else {
                continue;
            };
            m.swap(rank, p);
            for r in 0..m.len() {
                if r != rank && m[r][col] == 1 {
                    for c in 0..n {
                        m[r][c] ^= m[rank][c];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn random_vecs(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<BitVec> {
        (0..count)
            .map(|_| BitVec::new(rng.gen::<u64>() & mask(n), n).unwrap())
            .collect()
    }

    #[test]
    fn rank_of_dependent_triple() {
        let s = rank_basis(&[bv("110"), bv("011"), bv("101")]).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(rank_basis(&[]).unwrap().dim(), 0);
    }

    #[test]
    fn rank_rejects_mixed_dimensions() {
        assert!(matches!(
            rank_basis(&[bv("110"), bv("01")]),
            Err(AlgebraError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_matches_naive_elimination() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for count in [1, 5, 11, 200] {
            let rows = random_vecs(&mut rng, count, 12);
            assert_eq!(rank_basis(&rows).unwrap().dim(), naive_rank(&rows, 12));
        }
        // low-rank inputs: combinations of three generators
        let gens = random_vecs(&mut rng, 3, 12);
        let rows: Vec<BitVec> = (0..200)
            .map(|_| {
                let mut v = BitVec::zero(12);
                for g in &gens {
                    if rng.gen::<bool>() {
                        v = v + *g;
                    }
                }
                v
            })
            .collect();
        assert_eq!(rank_basis(&rows).unwrap().dim(), naive_rank(&rows, 12));
    }

    #[test]
    fn rank_basis_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = rank_basis(&random_vecs(&mut rng, 6, 10)).unwrap();
        assert_eq!(rank_basis(&s.basis()).unwrap(), s);
    }

    #[test]
    fn complement_of_all_ones_is_even_weight() {
        let n = 7;
        let u = rank_basis(&[BitVec::ones(n)]).unwrap();
        let v = orthogonal_complement(&u);
        assert_eq!(v.dim(), n - 1);
        for x in 0..(1u64 << n) {
            let x = BitVec::new(x, n).unwrap();
            assert_eq!(v.contains(&x), !x.parity());
        }
        let full = orthogonal_complement(&SubspaceF2::zero(n).unwrap());
        assert_eq!(full.dim(), n);
    }

    #[test]
    fn complement_exhaustive_orthogonality_and_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10;
        for count in 0..8 {
            let u = rank_basis_in(n, &random_vecs(&mut rng, count, n)).unwrap();
            let v = orthogonal_complement(&u);
            assert_eq!(u.dim() + v.dim(), n);
            for a in u.element_words() {
                for b in v.element_words() {
                    assert_eq!((a & b).count_ones() % 2, 0);
                }
            }
            assert_eq!(orthogonal_complement(&v), u);
        }
    }

    #[test]
    fn coset_rep_even_parity_depends_only_on_parity() {
        let n = 6;
        let v = orthogonal_complement(&rank_basis(&[BitVec::ones(n)]).unwrap());
        let zero_rep = coset_rep(&v, &BitVec::zero(n)).unwrap();
        let mut odd_rep = None;
        for x in 0..(1u64 << n) {
            let x = BitVec::new(x, n).unwrap();
            let r = coset_rep(&v, &x).unwrap();
            if x.parity() {
                assert_eq!(*odd_rep.get_or_insert(r), r);
            } else {
                assert_eq!(r, zero_rep);
            }
        }
    }

    #[test]
    fn coset_rep_matches_brute_force_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 8;
        for count in 0..6 {
            let v = rank_basis_in(n, &random_vecs(&mut rng, count, n)).unwrap();
            let elems = v.element_words();
            let mut classes = std::collections::HashSet::new();
            for x in 0..(1u64 << n) {
                let rx = coset_rep(&v, &BitVec::new(x, n).unwrap()).unwrap();
                classes.insert(rx.bits());
                for y in 0..(1u64 << n) {
                    let ry = coset_rep(&v, &BitVec::new(y, n).unwrap()).unwrap();
                    let same_coset = elems.contains(&(x ^ y));
                    assert_eq!(rx == ry, same_coset);
                }
            }
            assert_eq!(classes.len(), 1 << (n - v.dim()));
        }
    }

    #[test]
    fn max_independent_subset_greedy() {
        let e1 = BitVec::unit(3, 0);
        let e2 = BitVec::unit(3, 1);
        let out = max_independent_subset(&[e1, e2, e1 + e2], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(out, vec![e1, e2]);
        let out = max_independent_subset(&[BitVec::zero(3)], &[1.0]).unwrap();
        assert!(out.is_empty());
        assert!(max_independent_subset(&[e1], &[]).is_err());
    }

    #[test]
    fn max_independent_subset_ties_are_lexicographic() {
        let a = bv("100");
        let b = bv("010");
        let c = bv("110");
        // all weights equal: lex order on (x0, x1, x2) is 010 < 100 < 110
        let out = max_independent_subset(&[c, a, b], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(out, vec![b, a]);
    }

    #[test]
    fn max_independent_subset_spans_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vecs = random_vecs(&mut rng, 50, 10);
        let weights: Vec<f64> = (0..50).map(|_| rng.gen()).collect();
        let out = max_independent_subset(&vecs, &weights).unwrap();
        assert_eq!(naive_rank(&out, 10), out.len());
        assert_eq!(out.len(), naive_rank(&vecs, 10));
        let span = rank_basis(&out).unwrap();
        assert!(vecs.iter().all(|v| span.contains(v)));
    }

    #[test]
    fn char_eval_basics() {
        let z4 = GroupSpec::new(vec![4]).unwrap();
        let gamma = CharacterIndex(z4.element(2));
        let v = char_eval(&gamma, &z4.element(1)).unwrap();
        assert!((v - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!((char_eval(&gamma, &z4.zero()).unwrap() - 1.0).norm() < 1e-12);
        let other = GroupSpec::new(vec![5]).unwrap();
        assert!(char_eval(&gamma, &other.element(1)).is_err());
    }

    #[test]
    fn char_eval_is_multiplicative_and_has_order_dividing_exponent() {
        let g = GroupSpec::new(vec![6, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let gamma = CharacterIndex(g.element(rng.gen_range(0..g.order())));
            let x = g.element(rng.gen_range(0..g.order()));
            let y = g.element(rng.gen_range(0..g.order()));
            let lhs = char_eval(&gamma, &(&x + &y)).unwrap();
            let rhs = char_eval(&gamma, &x).unwrap() * char_eval(&gamma, &y).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
            assert!((lhs.norm() - 1.0).abs() < 1e-12);
            assert!((lhs.powu(g.exponent() as u32) - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn group_arithmetic() {
        let g = GroupSpec::new(vec![3, 5]).unwrap();
        assert_eq!(g.order(), 15);
        assert_eq!(g.exponent(), 15);
        let x = g.element_from_coords(&[2, 4]).unwrap();
        assert_eq!(x.checked_add(&x.neg()).unwrap(), g.zero());
        // p copies of +1 vanish
        let mut idx = 0;
        for _ in 0..3 {
            idx = g.add_unit(idx, 0, 1);
        }
        assert_eq!(idx, 0);
        assert_eq!(g.add_unit(0, 1, -1), g.index_of(&[0, 4]).unwrap());
        assert!(GroupSpec::new(vec![1]).is_err());
        assert_eq!(GroupSpec::new(vec![4, 6]).unwrap().exponent(), 12);
        assert!(x.scale(15).is_zero());
    }

    #[test]
    fn bitvec_self_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for v in random_vecs(&mut rng, 100, 20) {
            assert!((v + v).is_zero());
        }
        assert!(BitVec::new(0b100, 2).is_err());
    }

    #[test]
    fn subgroup_validation_and_cosets() {
        let z4 = GroupSpec::new(vec![4]).unwrap();
        let h = SubgroupEnum::from_elements(&z4, vec![0, 2]).unwrap();
        assert_eq!(h.quotient_order(), 2);
        let parts = h.cosets();
        assert_eq!(parts.label, vec![0, 1, 0, 1]);
        assert_eq!(parts.reps, vec![0, 1]);
        assert!(SubgroupEnum::from_elements(&z4, vec![0, 1]).is_err());
        assert!(SubgroupEnum::from_elements(&z4, vec![2]).is_err());
    }
}
