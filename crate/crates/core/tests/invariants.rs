mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spinbath::bench::{self, generate_positions, BathSpec, ExperimentConfig};
use spinbath::cce::{
    cce_coherence, cce_coherence_pairs, cluster_coherence, exact_coherence, uniform_grid, BathState, CceOptions, PreparedConditional,
    PulseSequence,
};
use spinbath::effective::{ConditionalFactory, ConditionalOptions, SwOrder};
use spinbath::geom;
use spinbath::metrics::{clock_mismatch, delta_parameter, SiteClassPartition};
use spinbath::spinops::{eigh, hermitian_residual, propagator, unitarity_residual};
use spinbath::C64;

use common::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn propagators_are_unitary_and_compose(seed in any::<u64>(), d in 2usize..12, t1 in 0.0..5.0f64, t2 in 0.0..5.0f64) {
        let h = random_hermitian(d, seed);
        let u1 = propagator(&h, t1).unwrap();
        let u2 = propagator(&h, t2).unwrap();
        let u12 = propagator(&h, t1 + t2).unwrap();
        prop_assert!(unitarity_residual(&u1) < 1e-12);
        let err = (&(&u1 * &u2) - &u12).norm_max();
        prop_assert!(err < 1e-11, "group property violated by {err:e}");
    }

    #[test]
    fn cluster_hamiltonians_are_hermitian(seed in 0u64..1000, n in 2usize..6, second in any::<bool>()) {
        let sw = if second { SwOrder::Second } else { SwOrder::First };
        let s = setup(&giant_small(n, seed), &[0, 3], sw, 3);
        for ch in &s.conditionals {
            let prepared = PreparedConditional::new(ch, &BathState::MaximallyMixed).unwrap();
            for c in &s.clusters {
                let h = prepared.cluster_hamiltonian(c).unwrap();
                prop_assert!(hermitian_residual(&h) < 1e-12);
            }
        }
    }

    #[test]
    fn coherence_is_bounded_and_starts_at_one(seed in 0u64..1000, n in 2usize..6, k in 0u32..3) {
        let s = setup(&giant_small(n, seed), &[1, 4], SwOrder::Second, n);
        let times = uniform_grid(0.3, 31);
        let pulses = PulseSequence::cpmg(k);
        let state = BathState::MaximallyMixed;
        let (a, b) = (&s.conditionals[0], &s.conditionals[1]);
        let pairs = cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &CceOptions::new(2)).unwrap();
        let full = cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &CceOptions::new(n)).unwrap();
        let exact = exact_coherence(a, b, &pulses, &times, &state).unwrap();
        for tr in [&pairs, &full, &exact] {
            prop_assert_eq!(tr.values[0], C64::new(1.0, 0.0));
        }
        // A truncated product is not bounded: a nearly vanishing single-spin
        // factor in a denominator can push it above one.
        for tr in [&full, &exact] {
            prop_assert!(tr.max_abs() <= 1.0 + 1e-9, "|L| = {}", tr.max_abs());
        }
    }

    #[test]
    fn full_order_expansion_telescopes_to_exact(seed in 0u64..1000, n in 2usize..6) {
        let s = setup(&giant_small(n, seed), &[0, 5], SwOrder::Second, n);
        let times = uniform_grid(0.3, 41);
        let pulses = PulseSequence::hahn_echo();
        let state = BathState::MaximallyMixed;
        let (a, b) = (&s.conditionals[0], &s.conditionals[1]);
        let cce = cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &CceOptions::new(n)).unwrap();
        let exact = exact_coherence(a, b, &pulses, &times, &state).unwrap();
        prop_assert!(cce.max_deviation(&exact) < 1e-8, "deviation {:e}", cce.max_deviation(&exact));
    }

    #[test]
    fn cluster_order_does_not_matter(seed in 0u64..1000, shuffle in any::<u64>()) {
        let s = setup(&giant_small(5, seed), &[0, 2], SwOrder::Second, 2);
        let times = uniform_grid(0.3, 21);
        let pulses = PulseSequence::hahn_echo();
        let state = BathState::MaximallyMixed;
        let opts = CceOptions::new(2);
        let (a, b) = (&s.conditionals[0], &s.conditionals[1]);
        let reference = cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &opts).unwrap();
        let mut shuffled = s.clusters.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let again = cce_coherence(a, b, &shuffled, &pulses, &times, &state, &opts).unwrap();
        prop_assert_eq!(reference.values, again.values);
    }

    #[test]
    fn commuting_hamiltonians_keep_full_coherence(seed in any::<u64>(), d in 2usize..10, c0 in -2.0..2.0f64, c1 in -2.0..2.0f64, c2 in -1.0..1.0f64) {
        let ha = random_hermitian(d, seed);
        // Any polynomial of Hα commutes with it.
        let hb = eigh(&ha).unwrap().apply_fn(|x| C64::new(c0 + c1 * x + c2 * x * x, 0.0));
        let times = uniform_grid(10.0, 50);
        let l = cluster_coherence(&ha, &hb, &PulseSequence::hahn_echo(), &times, None).unwrap();
        for v in l {
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_is_symmetric_and_consistent(a in 0usize..64, b in 0usize..64) {
        let cfg = bench::scenario("qudit6").unwrap();
        let model = cfg.build_system_model().unwrap();
        let basis = spinbath::effective::diagonalize_system(&model).unwrap();
        let part = SiteClassPartition::of(&basis);
        let ab = delta_parameter(&basis, &part, a, b).unwrap();
        let ba = delta_parameter(&basis, &part, b, a).unwrap();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!(ab >= 0.0);
        // Δ bounds the z part of the total moment change.
        prop_assert!(clock_mismatch(&basis, a, b).unwrap() <= ab + 1e-12);
    }

    #[test]
    fn couplings_scale_with_their_perturbative_order(seed in 0u64..1000, lambda in 0.1..3.0f64) {
        let cfg = giant_small(3, seed);
        let model = cfg.build_model(0).unwrap();
        let scaled = model.with_scaled_system_bath(lambda);
        let f0 = ConditionalFactory::new(&model).unwrap();
        let f1 = ConditionalFactory::new(&scaled).unwrap();
        let opts = ConditionalOptions::new(SwOrder::Second, f0.basis.default_gap_floor());
        let h0 = f0.build(2, &opts).unwrap();
        let h1 = f1.build(2, &opts).unwrap();
        for j in 0..3 {
            for a in 0..3 {
                let want = lambda * h0.first_order_fields[j][a];
                prop_assert!((h1.first_order_fields[j][a] - want).abs() <= 1e-10 * (1.0 + want.abs()));
            }
            let t0 = h0.second_order.as_ref().unwrap();
            let t1 = h1.second_order.as_ref().unwrap();
            for l in 0..3 {
                let (x0, x1) = (t0.ordered(j, l), t1.ordered(j, l));
                for nu in 0..3 {
                    for rho in 0..3 {
                        let want = x0[nu][rho] * lambda * lambda;
                        prop_assert!((x1[nu][rho] - want).norm() <= 1e-10 * (1.0 + want.norm()));
                    }
                }
            }
        }
    }

    #[test]
    fn config_survives_json_round_trip(
        name in prop::sample::select(bench::SCENARIOS.to_vec()),
        seed in any::<u64>(),
        points in 2usize..500,
        t_max in 0.01..500.0f64,
    ) {
        let mut cfg = bench::scenario(name).unwrap();
        cfg.grid.points = points;
        cfg.grid.t_max_us = t_max;
        cfg.bath.generate.as_mut().unwrap().seed = seed;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(cfg, back);
    }

    #[test]
    fn bath_generation_is_deterministic(seed in any::<u64>(), n in 1usize..60) {
        let spec = BathSpec::new(n, 12.0, 3.0, seed).with_exclusion(vec![[0.0; 3]]);
        let a = generate_positions(&spec).unwrap();
        let b = generate_positions(&spec).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn parallel_and_serial_runs_agree_bitwise() {
    let s = setup(&giant_small(8, 3), &[0, 6], SwOrder::Second, 2);
    let times = uniform_grid(0.3, 41);
    let pulses = PulseSequence::hahn_echo();
    let state = BathState::MaximallyMixed;
    let opts = CceOptions::new(2);
    let (a, b) = (&s.conditionals[0], &s.conditionals[1]);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &opts).unwrap())
    };
    assert_eq!(run(1).values, run(4).values);
}

#[test]
fn truncated_expansion_may_exceed_one_where_exact_does_not() {
    // Four protons packed next to the giant spin.
    let s = setup(&giant_small(4, 2122), &[1, 5], SwOrder::Second, 4);
    let times = uniform_grid(0.3, 31);
    let pulses = PulseSequence::hahn_echo();
    let state = BathState::MaximallyMixed;
    let (a, b) = (&s.conditionals[0], &s.conditionals[1]);
    let pairs = cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &CceOptions::new(2)).unwrap();
    let full = cce_coherence(a, b, &s.clusters, &pulses, &times, &state, &CceOptions::new(4)).unwrap();
    let exact = exact_coherence(a, b, &pulses, &times, &state).unwrap();
    assert!(pairs.max_abs() > 1.5, "{}", pairs.max_abs());
    assert!(full.max_abs() <= 1.0 + 1e-9 && exact.max_abs() <= 1.0 + 1e-9);
    assert!(full.max_deviation(&exact) < 1e-8);
}

#[test]
fn shared_expansion_matches_pair_by_pair_runs() {
    let s = setup(&giant_small(6, 9), &[0, 2, 5], SwOrder::Second, 2);
    let times = uniform_grid(0.3, 41);
    let pulses = PulseSequence::hahn_echo();
    let state = BathState::MaximallyMixed;
    let opts = CceOptions::new(2);
    let refs: Vec<_> = s.conditionals.iter().collect();
    let pairs = [(0, 1), (0, 2), (2, 1)];
    let shared = cce_coherence_pairs(&refs, &pairs, &s.clusters, &pulses, &times, &state, &opts).unwrap();
    for (&(a, b), tr) in pairs.iter().zip(&shared) {
        let single = cce_coherence(refs[a], refs[b], &s.clusters, &pulses, &times, &state, &opts).unwrap();
        assert_eq!(single.values, tr.values);
        assert_eq!(single.pair, tr.pair);
    }
}

#[test]
fn single_spin_baths_fill_the_ball_uniformly() {
    let radius = 20.0;
    let mut u: Vec<f64> = (0..10_000)
        .map(|seed| {
            let p = generate_positions(&BathSpec::new(1, radius, 3.0, seed)).unwrap();
            (geom::norm(&p[0]) / radius).powi(3)
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &f)| ((i + 1) as f64 / n - f).max(f - i as f64 / n))
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS statistic {ks}");
}

#[test]
fn dense_thousand_spin_bath_keeps_minimum_distance() {
    let spec = BathSpec::new(1000, 20.0, 3.0, 11).with_exclusion(spinbath::bench::scenarios::bipyramid());
    let pts = generate_positions(&spec).unwrap();
    let mut min = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            min = min.min(geom::distance(p, q));
        }
        for q in &spec.exclusion {
            min = min.min(geom::distance(p, q));
        }
    }
    assert!(min >= 3.0, "closest pair {min}");
}
