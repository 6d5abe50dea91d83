use num_complex::Complex64;
use num_rational::BigRational;
use proptest::prelude::*;

use linsketch::algebra::{char_eval, orthogonal_complement, rank_basis_in, BitVec, CharacterIndex, GroupSpec};
use linsketch::compiler::{reduce, PlayerSets, ReductionConfig, Variant};
use linsketch::fourier::{inverse_transform, normalized_indicator, transform, DenseFunction};
use linsketch::prg::NisanGenerator;
use linsketch::protocol::{additive_lift, run_broadcast};
use linsketch::sketch::{apply_stream, load_sketch, save_sketch, InputDistribution, LinearJuntaF2, Sketch, SketchBody, ZpJunta};
use linsketch::stream::{StreamFile, Update};
use linsketch::zoo::{self, ZooParams};

fn moduli() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(2u32..7, 1..4)
}

fn group_and_elems(count: usize) -> impl Strategy<Value = (GroupSpec, Vec<usize>)> {
    moduli().prop_flat_map(move |m| {
        let g = GroupSpec::new(m).unwrap();
        let order = g.order();
        (Just(g), prop::collection::vec(0..order, count))
    })
}

fn rows(n: usize, k: usize) -> impl Strategy<Value = Vec<BitVec>> {
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    prop::collection::vec(any::<u64>(), k).prop_map(move |ws| ws.into_iter().map(|w| BitVec::new(w & mask, n).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bitvec_addition_is_self_inverse(n in 1usize..=64, a in any::<u64>(), b in any::<u64>()) {
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let x = BitVec::new(a & mask, n).unwrap();
        let y = BitVec::new(b & mask, n).unwrap();
        let s = x.checked_add(&y).unwrap();
        prop_assert_eq!(s.dim(), n);
        prop_assert_eq!(s.checked_add(&y).unwrap(), x);
        prop_assert!(x.checked_add(&x).unwrap().is_zero());
    }

    #[test]
    fn group_laws((g, e) in group_and_elems(3)) {
        let (a, b, c) = (e[0], e[1], e[2]);
        prop_assert_eq!(g.add(a, b), g.add(b, a));
        prop_assert_eq!(g.add(g.add(a, b), c), g.add(a, g.add(b, c)));
        prop_assert_eq!(g.add(a, 0), a);
        prop_assert_eq!(g.add(a, g.neg(a)), 0);
        let m = g.exponent();
        prop_assert!(g.element(a).scale(m).is_zero());
        prop_assert_eq!(g.order(), g.moduli().iter().map(|&m| m as usize).product::<usize>());
    }

    #[test]
    fn characters_are_homomorphisms((g, e) in group_and_elems(3)) {
        let gamma = CharacterIndex(g.element(e[0]));
        let (x, y) = (g.element(e[1]), g.element(e[2]));
        let xy = x.checked_add(&y).unwrap();
        let lhs = char_eval(&gamma, &xy).unwrap();
        let rhs = char_eval(&gamma, &x).unwrap() * char_eval(&gamma, &y).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-12);
        prop_assert!((char_eval(&gamma, &x).unwrap().norm() - 1.0).abs() < 1e-12);
        prop_assert!((char_eval(&gamma, &g.zero()).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn subspace_and_complement(n in 1usize..=12, k in 0usize..8, seed in any::<u64>()) {
        let mask = (1u64 << n) - 1;
        let gens: Vec<BitVec> = (0..k as u64)
            .map(|i| BitVec::new(seed.rotate_left(7 * i as u32).wrapping_mul(0x9e37_79b9_7f4a_7c15 + i) & mask, n).unwrap())
            .collect();
        let u = rank_basis_in(n, &gens).unwrap();
        for v in &gens {
            prop_assert!(u.contains(v));
        }
        // reduced echelon: every pivot appears in exactly one row
        let words = u.basis_words();
        for (i, &w) in words.iter().enumerate() {
            prop_assert!(w != 0);
            let pivot = 63 - w.leading_zeros();
            for (j, &o) in words.iter().enumerate() {
                if i != j {
                    prop_assert_eq!((o >> pivot) & 1, 0);
                }
            }
        }
        let v = orthogonal_complement(&u);
        prop_assert_eq!(u.dim() + v.dim(), n);
        for a in u.basis() {
            for b in v.basis() {
                prop_assert!(!a.dot(&b));
            }
        }
    }

    #[test]
    fn parseval_and_inversion(m in moduli(), seed in any::<u64>()) {
        let g = GroupSpec::new(m).unwrap();
        let values: Vec<f64> = (0..g.order()).map(|x| ((seed ^ x as u64).wrapping_mul(0x2545_f491_4f6c_dd1d) >> 40) as f64 / (1u64 << 24) as f64 - 0.5).collect();
        let f = DenseFunction::from_real(&g, &values).unwrap();
        let s = transform(&f).unwrap();
        let mean_sq = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
        prop_assert!((s.energy() - mean_sq).abs() < 1e-9);
        prop_assert!(inverse_transform(&s).unwrap().max_abs_diff(&f) < 1e-9);
    }

    #[test]
    fn normalized_indicator_spectrum((g, e) in group_and_elems(6)) {
        let a = normalized_indicator(&g, &e).unwrap();
        let s = a.spectrum().unwrap();
        prop_assert!((s.coeff(0) - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        for c in s.coeffs() {
            prop_assert!(c.norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn f2_state_is_lin_x(n in 1usize..=64, k in 1usize..6, seed in any::<u64>(), coords in prop::collection::vec(0usize..64, 0..80)) {
        let rs: Vec<BitVec> = {
            let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
            (0..k as u64).map(|i| BitVec::new(seed.wrapping_mul(i * 2 + 1).rotate_left(i as u32 * 11) & mask, n).unwrap()).collect()
        };
        let sketch = Sketch::F2(LinearJuntaF2::new(n, &rs, vec![0.0; 1 << k]).unwrap());
        let updates: Vec<Update> = coords.iter().map(|&c| Update::flip(c % n)).collect();
        let x = updates.iter().fold(0u64, |acc, u| acc ^ 1 << u.coord);
        let state = apply_stream(&sketch, &updates).unwrap();
        let expect: Vec<u32> = rs.iter().map(|r| (r.bits() & x).count_ones() % 2).collect();
        prop_assert_eq!(&state.values, &expect);
        let mut rev = updates.clone();
        rev.reverse();
        prop_assert_eq!(apply_stream(&sketch, &rev).unwrap().values, expect);
    }

    #[test]
    fn stream_application_composes(p in prop::sample::select(vec![2u32, 3, 5, 7]), n in 1usize..6, split in 0usize..40,
                                    ups in prop::collection::vec((0usize..6, -30i64..30), 0..40), seed in any::<u64>()) {
        let rows: Vec<Vec<u32>> = (0..2u64).map(|i| (0..n as u64).map(|j| ((seed >> (i * 16 + j * 3)) % p as u64) as u32).collect()).collect();
        let sketch = Sketch::Zp(ZpJunta::new(n, p, rows, vec![0.0; (p * p) as usize]).unwrap());
        let updates: Vec<Update> = ups.iter().map(|&(c, d)| Update::new(c % n, d)).collect();
        let cut = split.min(updates.len());
        let whole = apply_stream(&sketch, &updates).unwrap();
        let mut state = apply_stream(&sketch, &updates[..cut]).unwrap();
        for &u in &updates[cut..] {
            sketch.apply_update(&mut state, u).unwrap();
        }
        prop_assert_eq!(&state.values, &whole.values);
        let first = apply_stream(&sketch, &updates[..cut]).unwrap();
        let second = apply_stream(&sketch, &updates[cut..]).unwrap();
        prop_assert_eq!(sketch.combine_states(&first, &second).unwrap().values, whole.values.clone());
        // adding p to any delta changes nothing
        let shifted: Vec<Update> = updates.iter().map(|u| Update::new(u.coord, u.delta + p as i64)).collect();
        prop_assert_eq!(apply_stream(&sketch, &shifted).unwrap().values, whole.values);
    }

    #[test]
    fn invariant_form_matches_junta(n in 1usize..=8, k in 1usize..4, rs in rows(8, 3), table in prop::collection::vec(0u8..2, 8)) {
        let rs: Vec<BitVec> = rs.into_iter().take(k).map(|r| BitVec::new(r.bits() & ((1u64 << n) - 1), n).unwrap()).collect();
        let post: Vec<f64> = table[..1 << k].iter().map(|&v| v as f64).collect();
        let j = LinearJuntaF2::new(n, &rs, post).unwrap();
        let inv = j.to_invariant().unwrap();
        let rank = rank_basis_in(n, &rs).unwrap().dim();
        prop_assert_eq!(inv.complexity(), 1 << rank);
        let g = GroupSpec::boolean(n).unwrap();
        for x in 0..1usize << n {
            let bits = BitVec::new(x as u64, n).unwrap();
            prop_assert_eq!(j.eval(&bits).unwrap(), inv.eval(&g.element(x)).unwrap());
        }
        for &v in inv.subgroup().elements() {
            for x in 0..1usize << n {
                prop_assert_eq!(inv.coset_of(x ^ v), inv.coset_of(x));
            }
        }
    }

    #[test]
    fn sketch_files_round_trip(n in 1usize..=16, rs in rows(16, 2), table in prop::collection::vec(0.0f64..1.0, 4)) {
        let rs: Vec<BitVec> = rs.into_iter().map(|r| BitVec::new(r.bits() & ((1u64 << n) - 1), n).unwrap()).collect();
        let body = SketchBody::Deterministic { sketch: Sketch::F2(LinearJuntaF2::new(n, &rs, table).unwrap()) };
        let text = save_sketch(&body).unwrap();
        prop_assert_eq!(load_sketch(&text).unwrap(), body);
    }

    #[test]
    fn stream_files_round_trip(n in 1usize..50, p in 2u32..20, ups in prop::collection::vec((0usize..50, -100i64..100), 0..30)) {
        let file = StreamFile { n, p, updates: ups.into_iter().map(|(c, d)| Update::new(c % n, d)).collect() };
        prop_assert_eq!(StreamFile::parse(&file.to_text()).unwrap(), file);
    }

    #[test]
    fn additive_lift_depends_on_sum((g, e) in group_and_elems(4)) {
        let f = DenseFunction::from_fn(&g, |x| (x % 3) as f64);
        let lift = additive_lift(&f, 4).unwrap();
        let s = e.iter().fold(0, |acc, &x| g.add(acc, x));
        prop_assert_eq!(lift.eval(&e).unwrap(), f.re(s));
    }

    #[test]
    fn running_sum_protocol_computes_f(inputs in prop::collection::vec(0usize..81, 5)) {
        let params = ZooParams { n: Some(4), p: Some(3), ..Default::default() };
        let p = zoo::protocol("running-sum-mod-p", &params, 5).unwrap();
        let f = zoo::function("mod-p-sum-zero", &params).unwrap();
        let g = f.domain().clone();
        let run = run_broadcast(&p, &inputs, 0).unwrap();
        prop_assert!(run.messages.iter().all(|&m| m < 1 << p.message_bits()));
        let s = inputs.iter().fold(0, |acc, &x| g.add(acc, x));
        prop_assert_eq!(run.output, f.re(s));
    }

    #[test]
    fn transcript_probability_is_product_of_densities(msgs in prop::collection::vec(0u32..2, 5), mask in 1u64..16) {
        let p = linsketch::protocol::parity_chain(4, mask, 6).unwrap();
        let sets = PlayerSets::extract(&p, &msgs, 0).unwrap();
        let product = sets
            .counts()
            .iter()
            .fold(BigRational::from_integer(1.into()), |acc, &c| acc * BigRational::new(c.into(), 16.into()));
        prop_assert_eq!(sets.probability(), product);
    }

    #[test]
    fn nisan_blocks_are_deterministic(b in 2u32..=16, depth in 0u32..6, seed in any::<u64>(), idx in any::<u64>()) {
        use rand::SeedableRng;
        let count = 1u64 << depth;
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g1 = NisanGenerator::random(b, count, &mut r1).unwrap();
        let g2 = NisanGenerator::random(b, count, &mut r2).unwrap();
        let i = idx % count;
        prop_assert_eq!(g1.block(i).unwrap(), g2.block(i).unwrap());
        prop_assert!(g1.block(i).unwrap() < 1 << b);
        prop_assert_eq!(NisanGenerator::seed_bits(b, count).unwrap(), (b * (2 * depth + 1)) as usize);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reports_are_reproducible(seed in any::<u64>(), n in 2usize..5) {
        let params = ZooParams { n: Some(n), ..Default::default() };
        let p = zoo::protocol("parity-chain", &params, 33).unwrap();
        let f = zoo::function("parity", &params).unwrap();
        let cfg = ReductionConfig { seed, ..ReductionConfig::new(32) };
        let d = InputDistribution::uniform(1 << n);
        let mut a = reduce(&p, &f, &d, &cfg, Variant::ExactF2).unwrap();
        let mut b = reduce(&p, &f, &d, &cfg, Variant::ExactF2).unwrap();
        a.report.elapsed_ms = 0;
        b.report.elapsed_ms = 0;
        prop_assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
        prop_assert_eq!(a.sketch, b.sketch);
    }
}
