//! Fourier analysis on `F2^n` and on finite abelian groups.
//!
//! Conventions: `f^(gamma) = E_x f(x) conj(gamma(x))` and
//! `f(x) = sum_gamma f^(gamma) gamma(x)`. Convolution is
//! `(f * g)(x) = E_y f(y) g(x - y)`, so `(f * g)^ = f^ g^`.
//! Characters are indexed by group elements with the same mixed-radix
//! index as the group itself.

use std::collections::HashSet;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use thiserror::Error;

use crate::algebra::{AlgebraError, GroupSpec, SubgroupEnum};

/// Largest `|G|` the transforms accept by default.
pub const DEFAULT_SIZE_LIMIT: usize = 1 << 20;

/// Default cap on the size of an extracted dissociated set.
pub const DEFAULT_DISSOCIATED_LIMIT: usize = 16;

/// Constant in `sum |phi_A^(gamma)|^2 <= C log2(1/alpha)` over `F2^n`.
pub const CHANG_CONSTANT_F2: f64 = 8.0;

/// Sizes above this switch the dissociativity test to meet-in-the-middle.
const EXHAUSTIVE_DISSOCIATED_MAX: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("group of order {order} exceeds the transform limit {limit}")]
    SizeLimit { order: usize, limit: usize },
    #[error("functions live on different groups")]
    DomainMismatch,
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("indicator of an empty set")]
    EmptySet,
    #[error("dissociated set would exceed the enumeration limit of {limit}")]
    EnumerationLimit { limit: usize },
    #[error("function is not unit-modulus valued (|value| = {0} at some point)")]
    NotUnitModulus(f64),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

pub type Result<T, E = FourierError> = std::result::Result<T, E>;

// ---------------------------------------------------------------------------
// Dense functions and spectra
// ---------------------------------------------------------------------------

/// A complex-valued function on a group, one value per element index.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseFunction {
    domain: GroupSpec,
    values: Vec<Complex64>,
}

impl DenseFunction {
    pub fn new(domain: &GroupSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != domain.order() {
            return Err(FourierError::LengthMismatch {
                expected: domain.order(),
                found: values.len(),
            });
        }
        Ok(Self {
            domain: domain.clone(),
            values,
        })
    }

    pub fn from_real(domain: &GroupSpec, values: &[f64]) -> Result<Self> {
        Self::new(domain, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(domain: &GroupSpec, f: impl Fn(usize) -> f64) -> Self {
        let values = (0..domain.order()).map(|x| Complex64::new(f(x), 0.0)).collect();
        Self {
            domain: domain.clone(),
            values,
        }
    }

    pub fn from_complex_fn(domain: &GroupSpec, f: impl Fn(usize) -> Complex64) -> Self {
        Self {
            domain: domain.clone(),
            values: (0..domain.order()).map(f).collect(),
        }
    }

    pub fn constant(domain: &GroupSpec, value: f64) -> Self {
        Self::from_fn(domain, |_| value)
    }

    pub fn domain(&self) -> &GroupSpec {
        &self.domain
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, x: usize) -> Complex64 {
        self.values[x]
    }

    /// Real part of the value at `x`.
    pub fn re(&self, x: usize) -> f64 {
        self.values[x].re
    }

    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> DenseFunction {
        DenseFunction {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &DenseFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Fourier coefficients indexed by character.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    domain: GroupSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(domain: &GroupSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != domain.order() {
            return Err(FourierError::LengthMismatch {
                expected: domain.order(),
                found: coeffs.len(),
            });
        }
        Ok(Self {
            domain: domain.clone(),
            coeffs,
        })
    }

    pub fn domain(&self) -> &GroupSpec {
        &self.domain
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, gamma: usize) -> Complex64 {
        self.coeffs[gamma]
    }

    /// Pointwise product `self * other`.
    pub fn product(&self, other: &Spectrum) -> Result<Spectrum> {
        if self.domain != other.domain {
            return Err(FourierError::DomainMismatch);
        }
        Ok(Spectrum {
            domain: self.domain.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).collect(),
        })
    }

    /// `sum_gamma |f^(gamma)|^2`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(Complex64::norm_sqr).sum()
    }
}

fn check_size(domain: &GroupSpec, limit: usize) -> Result<()> {
    if domain.order() > limit {
        return Err(FourierError::SizeLimit {
            order: domain.order(),
            limit,
        });
    }
    Ok(())
}

/// In-place unnormalized Walsh-Hadamard butterfly.
fn walsh_hadamard(data: &mut [Complex64]) {
    let len = data.len();
    let mut half = 1;
    while half < len {
        for block in (0..len).step_by(2 * half) {
            for i in block..block + half {
                let (a, b) = (data[i], data[i + half]);
                data[i] = a + b;
                data[i + half] = a - b;
            }
        }
        half *= 2;
    }
}

/// Unnormalized per-axis DFTs over a mixed-radix layout.
fn mixed_radix_dft(domain: &GroupSpec, data: &mut [Complex64], direction: FftDirection) {
    let order = data.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut lanes = vec![Complex64::default(); order];
    for (j, &m) in domain.moduli().iter().enumerate() {
        let m = m as usize;
        let stride = domain.stride(j);
        let block = stride * m;
        let fft = planner.plan_fft(m, direction);
        // gather each lane contiguously, transform all lanes in one call
        let mut lane = 0;
        for base in (0..order).step_by(block) {
            for inner in 0..stride {
                for t in 0..m {
                    lanes[lane * m + t] = data[base + inner + t * stride];
                }
                lane += 1;
            }
        }
        fft.process(&mut lanes);
        let mut lane = 0;
        for base in (0..order).step_by(block) {
            for inner in 0..stride {
                for t in 0..m {
                    data[base + inner + t * stride] = lanes[lane * m + t];
                }
                lane += 1;
            }
        }
    }
}

/// Forward transform with the default size limit.
pub fn transform(f: &DenseFunction) -> Result<Spectrum> {
    transform_with_limit(f, DEFAULT_SIZE_LIMIT)
}

pub fn transform_with_limit(f: &DenseFunction, limit: usize) -> Result<Spectrum> {
    check_size(&f.domain, limit)?;
    let mut data = f.values.clone();
    if f.domain.is_boolean() {
        walsh_hadamard(&mut data);
    } else {
        mixed_radix_dft(&f.domain, &mut data, FftDirection::Forward);
    }
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|v| *v *= scale);
    Ok(Spectrum {
        domain: f.domain.clone(),
        coeffs: data,
    })
}

pub fn inverse_transform(s: &Spectrum) -> Result<DenseFunction> {
    inverse_transform_with_limit(s, DEFAULT_SIZE_LIMIT)
}

pub fn inverse_transform_with_limit(s: &Spectrum, limit: usize) -> Result<DenseFunction> {
    check_size(&s.domain, limit)?;
    let mut data = s.coeffs.clone();
    if s.domain.is_boolean() {
        walsh_hadamard(&mut data);
    } else {
        mixed_radix_dft(&s.domain, &mut data, FftDirection::Inverse);
    }
    Ok(DenseFunction {
        domain: s.domain.clone(),
        values: data,
    })
}

/// `(f * g)(x) = E_y f(y) g(x - y)`, computed through the spectral product.
pub fn convolve(f: &DenseFunction, g: &DenseFunction) -> Result<DenseFunction> {
    if f.domain != g.domain {
        return Err(FourierError::DomainMismatch);
    }
    inverse_transform(&transform(f)?.product(&transform(g)?)?)
}

// ---------------------------------------------------------------------------
// Normalized indicators
// ---------------------------------------------------------------------------

/// `phi_A = (|G| / |A|) 1_A` for a non-empty `A <= G`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedIndicator {
    domain: GroupSpec,
    members: Vec<bool>,
    count: usize,
}

impl NormalizedIndicator {
    pub fn from_bitmap(domain: &GroupSpec, members: Vec<bool>) -> Result<Self> {
        if members.len() != domain.order() {
            return Err(FourierError::LengthMismatch {
                expected: domain.order(),
                found: members.len(),
            });
        }
        let count = members.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(FourierError::EmptySet);
        }
        Ok(Self {
            domain: domain.clone(),
            members,
            count,
        })
    }

    pub fn domain(&self) -> &GroupSpec {
        &self.domain
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members[x]
    }

    /// `|A|`.
    pub fn count(&self) -> usize {
        self.count
    }

    /// `alpha = |A| / |G|`.
    pub fn density(&self) -> f64 {
        self.count as f64 / self.domain.order() as f64
    }

    pub fn function(&self) -> DenseFunction {
        let height = 1.0 / self.density();
        DenseFunction::from_fn(&self.domain, |x| if self.members[x] { height } else { 0.0 })
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        transform(&self.function())
    }

    /// The indicator of `-A`.
    pub fn negated(&self) -> NormalizedIndicator {
        let mut members = vec![false; self.members.len()];
        for (x, &m) in self.members.iter().enumerate() {
            if m {
                members[self.domain.neg(x)] = true;
            }
        }
        NormalizedIndicator {
            domain: self.domain.clone(),
            members,
            count: self.count,
        }
    }
}

/// Builds `phi_A` from a list of element indices.
pub fn normalized_indicator(domain: &GroupSpec, elements: &[usize]) -> Result<NormalizedIndicator> {
    let mut members = vec![false; domain.order()];
    for &e in elements {
        if e >= domain.order() {
            return Err(FourierError::LengthMismatch {
                expected: domain.order(),
                found: e + 1,
            });
        }
        members[e] = true;
    }
    NormalizedIndicator::from_bitmap(domain, members)
}

/// Spectrum of `phi_H` for a subgroup: the indicator of `H^perp`.
pub fn subgroup_spectrum(h: &SubgroupEnum) -> Result<Spectrum> {
    let members = {
        let mut m = vec![false; h.spec().order()];
        for &e in h.elements() {
            m[e] = true;
        }
        m
    };
    NormalizedIndicator::from_bitmap(h.spec(), members)?.spectrum()
}

// ---------------------------------------------------------------------------
// Chang's lemma quantities
// ---------------------------------------------------------------------------

/// `constant * log2(1/alpha)`.
pub fn chang_bound(density: f64, constant: f64) -> f64 {
    constant * (1.0 / density).log2()
}

/// Outcome of a Chang-lemma check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChangCheck {
    pub sum: f64,
    pub bound: f64,
    pub holds: bool,
}

/// `sum_{gamma in gammas} |phi_A^(gamma)|^2`.
pub fn chang_sum(a: &NormalizedIndicator, gammas: &[usize]) -> Result<f64> {
    let spectrum = a.spectrum()?;
    Ok(gammas.iter().map(|&g| spectrum.coeff(g).norm_sqr()).sum())
}

/// Evaluates the Chang sum and compares it against `constant * log2(1/alpha)`.
pub fn chang_check(a: &NormalizedIndicator, gammas: &[usize], constant: f64) -> Result<ChangCheck> {
    let sum = chang_sum(a, gammas)?;
    let bound = chang_bound(a.density(), constant);
    Ok(ChangCheck {
        sum,
        bound,
        holds: sum <= bound + 1e-9,
    })
}

// ---------------------------------------------------------------------------
// Dissociated sets and annihilators
// ---------------------------------------------------------------------------

/// All `{-1,0,1}` combinations of `gammas`, split by whether the coefficient
/// vector is zero.
fn signed_sums(domain: &GroupSpec, gammas: &[usize]) -> (HashSet<usize>, HashSet<usize>) {
    let mut all: Vec<(usize, bool)> = vec![(0, false)];
    for &g in gammas {
        let neg = domain.neg(g);
        let mut next = Vec::with_capacity(all.len() * 3);
        for &(s, nontrivial) in &all {
            next.push((s, nontrivial));
            next.push((domain.add(s, g), true));
            next.push((domain.add(s, neg), true));
        }
        all = next;
    }
    let every: HashSet<usize> = all.iter().map(|&(s, _)| s).collect();
    let nontrivial: HashSet<usize> = all.iter().filter(|(_, n)| *n).map(|&(s, _)| s).collect();
    (every, nontrivial)
}

fn has_relation(domain: &GroupSpec, gammas: &[usize], idx: usize, sum: usize, nontrivial: bool) -> bool {
    if idx == gammas.len() {
        return nontrivial && sum == 0;
    }
    let g = gammas[idx];
    has_relation(domain, gammas, idx + 1, sum, nontrivial)
        || has_relation(domain, gammas, idx + 1, domain.add(sum, g), true)
        || has_relation(domain, gammas, idx + 1, domain.sub(sum, g), true)
}

/// Exhaustive `{-1,0,1}` test: true when no nontrivial combination of
/// `gammas` vanishes. Uses meet-in-the-middle above 12 elements.
pub fn is_dissociated(domain: &GroupSpec, gammas: &[usize]) -> bool {
    if gammas.len() <= EXHAUSTIVE_DISSOCIATED_MAX {
        return !has_relation(domain, gammas, 0, 0, false);
    }
    let (left, right) = gammas.split_at(gammas.len() / 2);
    let (left_all, left_nontrivial) = signed_sums(domain, left);
    let (right_all, right_nontrivial) = signed_sums(domain, right);
    let hit = left_nontrivial.iter().any(|&s| right_all.contains(&domain.neg(s)))
        || right_nontrivial.iter().any(|&s| left_all.contains(&domain.neg(s)));
    !hit
}

/// Lexicographic key on the coordinate sequence of a group element.
fn coord_key(domain: &GroupSpec, x: usize) -> Vec<u32> {
    domain.coords_of(x)
}

/// Greedy maximal dissociated subset of `gammas`, heaviest first; ties are
/// broken lexicographically on coordinates.
///
/// A candidate is accepted when it is not a `{-1,0,1}` combination of the
/// elements already chosen, tracked as a bitmap of reachable sums. Over
/// `F2^n` this coincides with greedy linear independence.
pub fn extract_dissociated(
    domain: &GroupSpec,
    gammas: &[usize],
    weights: &[f64],
    limit: usize,
) -> Result<Vec<usize>> {
    if gammas.len() != weights.len() {
        return Err(FourierError::LengthMismatch {
            expected: gammas.len(),
            found: weights.len(),
        });
    }
    check_size(domain, DEFAULT_SIZE_LIMIT)?;
    let mut order: Vec<usize> = (0..gammas.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .total_cmp(&weights[a])
            .then_with(|| coord_key(domain, gammas[a]).cmp(&coord_key(domain, gammas[b])))
    });
    let mut reachable = vec![false; domain.order()];
    reachable[0] = true;
    let mut chosen = Vec::new();
    for i in order {
        let g = gammas[i];
        if reachable[g] {
            continue;
        }
        if chosen.len() == limit {
            return Err(FourierError::EnumerationLimit { limit });
        }
        let neg = domain.neg(g);
        let current: Vec<usize> = (0..domain.order()).filter(|&s| reachable[s]).collect();
        for s in current {
            reachable[domain.add(s, g)] = true;
            reachable[domain.add(s, neg)] = true;
        }
        chosen.push(g);
    }
    debug_assert!(is_dissociated(domain, &chosen));
    Ok(chosen)
}

/// `Gamma^perp = {x : gamma(x) = 1 for all gamma in Gamma}`, by enumeration.
pub fn annihilator(domain: &GroupSpec, gammas: &[usize]) -> Result<SubgroupEnum> {
    check_size(domain, DEFAULT_SIZE_LIMIT)?;
    let elements: Vec<usize> = (0..domain.order())
        .filter(|&x| gammas.iter().all(|&g| domain.phase(g, x) == 0))
        .collect();
    Ok(SubgroupEnum::from_sorted_unchecked(domain, elements))
}

// ---------------------------------------------------------------------------
// Mixing gap
// ---------------------------------------------------------------------------

/// `|G| 2^{-count/8}`, the bound on the mixing gap for `count` sets.
pub fn mixing_bound(order: usize, count: usize) -> f64 {
    order as f64 * 2f64.powf(-(count as f64) / 8.0)
}

/// `max_x |E[hp(x + y_1 + ... + y_N)] - E[hp(x + y_1 + ... + y_N + v)]|`
/// with `y_i` uniform on `A_i` and `v` uniform on `H`, evaluated exactly
/// through spectral products.
pub fn mixing_gap(sets: &[NormalizedIndicator], h: &SubgroupEnum, hp: &DenseFunction) -> Result<f64> {
    let domain = hp.domain();
    if h.spec() != domain || sets.iter().any(|a| a.domain() != domain) {
        return Err(FourierError::DomainMismatch);
    }
    let worst = hp.values().iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    if worst > 1e-9 {
        return Err(FourierError::NotUnitModulus(1.0 + worst));
    }
    let hp_hat = transform(hp)?;
    let h_hat = subgroup_spectrum(h)?;
    let mut coeffs: Vec<Complex64> = hp_hat.coeffs().to_vec();
    for a in sets {
        let s = a.spectrum()?;
        // E_{y in A} gamma(y) = conj(phi_A^(gamma))
        for (c, phi) in coeffs.iter_mut().zip(s.coeffs()) {
            *c *= phi.conj();
        }
    }
    for (c, v) in coeffs.iter_mut().zip(h_hat.coeffs()) {
        *c *= Complex64::new(1.0, 0.0) - v;
    }
    let diff = inverse_transform(&Spectrum::new(domain, coeffs)?)?;
    Ok(diff.values().iter().map(|v| v.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_transform(f: &DenseFunction) -> Vec<Complex64> {
        let g = f.domain();
        let n = g.order() as f64;
        (0..g.order())
            .map(|gamma| {
                (0..g.order())
                    .map(|x| f.value(x) * g.char_value(gamma, x).conj())
                    .sum::<Complex64>()
                    / n
            })
            .collect()
    }

    fn random_fn(rng: &mut ChaCha8Rng, g: &GroupSpec) -> DenseFunction {
        let values: Vec<f64> = (0..g.order()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseFunction::from_real(g, &values).unwrap()
    }

    #[test]
    fn point_mass_and_constant() {
        for g in [GroupSpec::boolean(5).unwrap(), GroupSpec::new(vec![3, 4]).unwrap()] {
            let order = g.order() as f64;
            let delta = DenseFunction::from_fn(&g, |x| if x == 0 { order } else { 0.0 });
            let s = transform(&delta).unwrap();
            assert!(s.coeffs().iter().all(|c| (c - 1.0).norm() < 1e-12));
            let one = transform(&DenseFunction::constant(&g, 1.0)).unwrap();
            for (gamma, c) in one.coeffs().iter().enumerate() {
                let expect = if gamma == 0 { 1.0 } else { 0.0 };
                assert!((c - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn fast_transform_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in [
            GroupSpec::boolean(10).unwrap(),
            GroupSpec::new(vec![6, 4, 4]).unwrap(),
            GroupSpec::new(vec![5, 2, 7]).unwrap(),
        ] {
            let f = random_fn(&mut rng, &g);
            let fast = transform(&f).unwrap();
            let slow = naive_transform(&f);
            for (a, b) in fast.coeffs().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9);
            }
            let back = inverse_transform(&fast).unwrap();
            assert!(back.max_abs_diff(&f) < 1e-9);
        }
    }

    #[test]
    fn size_limit_enforced() {
        let g = GroupSpec::boolean(6).unwrap();
        let f = DenseFunction::constant(&g, 1.0);
        assert!(matches!(
            transform_with_limit(&f, 32),
            Err(FourierError::SizeLimit { order: 64, limit: 32 })
        ));
    }

    #[test]
    fn indicator_extremes() {
        let g = GroupSpec::boolean(4).unwrap();
        let all: Vec<usize> = (0..16).collect();
        let phi = normalized_indicator(&g, &all).unwrap();
        assert!(phi.function().values().iter().all(|v| (v - 1.0).norm() < 1e-12));
        let s = phi.spectrum().unwrap();
        assert!((s.coeff(0) - 1.0).norm() < 1e-12);
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-12));
        let point = normalized_indicator(&g, &[0]).unwrap();
        assert!((point.function().value(0).re - 16.0).abs() < 1e-12);
        assert!(point.spectrum().unwrap().coeffs().iter().all(|c| (c - 1.0).norm() < 1e-12));
        assert!(matches!(normalized_indicator(&g, &[]), Err(FourierError::EmptySet)));
    }

    #[test]
    fn indicator_spectral_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = GroupSpec::boolean(8).unwrap();
        for _ in 0..100 {
            let mut members: Vec<bool> = (0..256).map(|_| rng.gen_bool(0.3)).collect();
            members[rng.gen_range(0..256)] = true;
            let phi = NormalizedIndicator::from_bitmap(&g, members).unwrap();
            let s = phi.spectrum().unwrap();
            assert!((s.coeff(0) - 1.0).norm() < 1e-12);
            assert!(s.coeffs().iter().all(|c| c.norm() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn convolution_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GroupSpec::new(vec![12]).unwrap();
        let f = random_fn(&mut rng, &g);
        let whole = normalized_indicator(&g, &(0..12).collect::<Vec<_>>()).unwrap();
        let avg = convolve(&whole.function(), &f).unwrap();
        assert!(avg.values().iter().all(|v| (v - f.mean()).norm() < 1e-9));
        let point = normalized_indicator(&g, &[0]).unwrap();
        assert!(convolve(&point.function(), &f).unwrap().max_abs_diff(&f) < 1e-9);
    }

    #[test]
    fn convolution_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GroupSpec::new(vec![12]).unwrap();
        let f = random_fn(&mut rng, &g);
        let h = random_fn(&mut rng, &g);
        let fast = convolve(&f, &h).unwrap();
        for x in 0..12 {
            let naive: Complex64 = (0..12).map(|y| f.value(y) * h.value(g.sub(x, y))).sum::<Complex64>() / 12.0;
            assert!((fast.value(x) - naive).norm() < 1e-9);
        }
        let other = GroupSpec::new(vec![6, 2]).unwrap();
        assert!(convolve(&f, &DenseFunction::constant(&other, 1.0)).is_err());
    }

    #[test]
    fn chang_sum_examples() {
        let g = GroupSpec::boolean(5).unwrap();
        let all = normalized_indicator(&g, &(0..32).collect::<Vec<_>>()).unwrap();
        let check = chang_check(&all, &[1, 2, 4], CHANG_CONSTANT_F2).unwrap();
        assert!(check.sum.abs() < 1e-12 && check.bound == 0.0 && check.holds);
        let half: Vec<usize> = (0..32).filter(|x| x & 1 == 0).collect();
        let half = normalized_indicator(&g, &half).unwrap();
        let check = chang_check(&half, &[1], CHANG_CONSTANT_F2).unwrap();
        assert!((check.sum - 1.0).abs() < 1e-12);
        assert!((check.bound - 8.0).abs() < 1e-12);
    }

    #[test]
    fn dissociated_examples() {
        let f2 = GroupSpec::boolean(3).unwrap();
        let out = extract_dissociated(&f2, &[0b001, 0b010, 0b011], &[1.0, 1.0, 1.0], 16).unwrap();
        assert_eq!(out.len(), 2);
        let z5 = GroupSpec::new(vec![5]).unwrap();
        assert!(is_dissociated(&z5, &[1, 2]));
        assert!(!is_dissociated(&z5, &[1, 2, 3]));
        assert!(is_dissociated(&z5, &[3]));
        assert!(!is_dissociated(&z5, &[0]));
        let z4 = GroupSpec::new(vec![4]).unwrap();
        assert!(is_dissociated(&z4, &[2]));
    }

    #[test]
    fn dissociated_limit_errors() {
        let g = GroupSpec::boolean(6).unwrap();
        let units = [1, 2, 4, 8, 16, 32];
        assert!(matches!(
            extract_dissociated(&g, &units, &[1.0; 6], 4),
            Err(FourierError::EnumerationLimit { limit: 4 })
        ));
    }

    #[test]
    fn meet_in_the_middle_agrees_with_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GroupSpec::new(vec![7, 7, 7, 7, 7]).unwrap();
        for _ in 0..20 {
            let gammas: Vec<usize> = (0..13).map(|_| rng.gen_range(1..g.order())).collect();
            let mitm = is_dissociated(&g, &gammas);
            let exhaustive = !has_relation(&g, &gammas, 0, 0, false);
            assert_eq!(mitm, exhaustive);
        }
    }

    #[test]
    fn annihilator_examples() {
        let z4 = GroupSpec::new(vec![4]).unwrap();
        assert_eq!(annihilator(&z4, &[]).unwrap().elements(), &[0, 1, 2, 3]);
        assert_eq!(annihilator(&z4, &[2]).unwrap().elements(), &[0, 2]);
    }

    #[test]
    fn mixing_gap_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = GroupSpec::boolean(4).unwrap();
        let whole = normalized_indicator(&g, &(0..16).collect::<Vec<_>>()).unwrap();
        let signs: Vec<f64> = (0..16).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let hp = DenseFunction::from_real(&g, &signs).unwrap();
        let trivial = SubgroupEnum::trivial(&g);
        let h = SubgroupEnum::from_elements(&g, vec![0, 3]).unwrap();
        assert!(mixing_gap(&vec![whole; 5], &h, &hp).unwrap() < 1e-12);
        assert!(mixing_gap(&[], &trivial, &hp).unwrap() < 1e-12);
        let constant = DenseFunction::constant(&g, 1.0);
        let a = normalized_indicator(&g, &[1, 2, 5]).unwrap();
        assert!(mixing_gap(&[a.clone()], &h, &constant).unwrap() < 1e-12);
        assert!(matches!(
            mixing_gap(&[a], &h, &DenseFunction::constant(&g, 0.5)),
            Err(FourierError::NotUnitModulus(_))
        ));
    }
}
