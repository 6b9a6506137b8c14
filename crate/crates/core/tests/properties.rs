use metastab::classical::{self, RateRule, SpinModel};
use metastab::functionals::{entropy_production, fisher_information};
use metastab::infotheory::{mutual_information, partial_trace, Bipartition};
use metastab::linalg::{hermiticity_defect, trace};
use metastab::lindblad::{build_full_lindbladian, build_local_lindbladian};
use metastab::pauli_ham::{diagonalize, single_qubit_jump_set, HamiltonianSpec};
use metastab::random::{component_rng, random_density};
use metastab::spectral::FilterParams;
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn generator_preserves_trace_and_hermiticity(seed in 0u64..1000, beta in 0.3f64..2.5) {
        let h = HamiltonianSpec::random_2local(2, seed).unwrap();
        let s = diagonalize(&h).unwrap();
        let jumps: Vec<_> = single_qubit_jump_set(2, &[0, 1]).iter().map(|p| p.to_matrix()).collect();
        let l = build_full_lindbladian(&s, &jumps, FilterParams::new(beta, None).unwrap(), 1.0).unwrap();
        let sig = random_density(4, &mut component_rng(seed, 1));
        let out = l.apply(sig.matrix());
        prop_assert!(trace(&out).norm() < 1e-12);
        prop_assert!(hermiticity_defect(&out) < 1e-12);
    }

    #[test]
    fn entropy_production_equals_fisher(seed in 0u64..1000, beta in 0.3f64..2.0, q in 0usize..2, p in 0usize..3) {
        let h = HamiltonianSpec::random_2local(2, seed).unwrap();
        let s = diagonalize(&h).unwrap();
        let jump = &single_qubit_jump_set(2, &[q])[p];
        let l = build_local_lindbladian(&s, &jump.to_matrix(), FilterParams::new(beta, None).unwrap()).unwrap();
        let sig = random_density(4, &mut component_rng(seed, 2));
        let ep = entropy_production(&l, &sig).unwrap();
        let fi = fisher_information(&l, &sig, 64).unwrap();
        prop_assert!(ep >= -1e-10);
        prop_assert!((fi - ep).abs() <= 1e-8f64.max(1e-4 * ep));
    }

    #[test]
    fn mutual_information_nonnegative_and_bounded(seed in 0u64..1000, k in 1usize..3) {
        let h = HamiltonianSpec::ising_chain(3, 1.0).unwrap();
        let sig = random_density(8, &mut component_rng(seed, 3));
        let region: Vec<usize> = (0..k).collect();
        let bip = Bipartition::new(&h, &region).unwrap();
        let mi = mutual_information(&sig, &bip).unwrap();
        let small = k.min(3 - k) as f64;
        prop_assert!(mi >= -1e-12);
        prop_assert!(mi <= 2.0 * small * std::f64::consts::LN_2 + 1e-10);
    }

    #[test]
    fn partial_trace_keeps_trace(seed in 0u64..1000, keep in prop::sample::subsequence(vec![0usize, 1, 2], 1..3)) {
        let sig = random_density(8, &mut component_rng(seed, 4));
        let red = partial_trace(sig.matrix(), &keep, 3).unwrap();
        prop_assert!((trace(&red).re - 1.0).abs() < 1e-12);
        prop_assert_eq!(red.nrows(), 1 << keep.len());
    }

    #[test]
    fn classical_ep_matches_fisher(seed in 0u64..1000, j in -1.5f64..1.5, h0 in -1.0f64..1.0, beta in 0.2f64..3.0) {
        let model = SpinModel::new(3, vec![(0, 1, j), (1, 2, 1.0)], vec![h0, 0.0, -0.3]).unwrap();
        for rule in [RateRule::HeatBath, RateRule::Metropolis] {
            let chain = classical::glauber_generator(&model, beta, rule).unwrap();
            prop_assert!(chain.detailed_balance_residual() < 1e-14);
            let mut rng = component_rng(seed, 5);
            let nu: Vec<f64> = random_density(8, &mut rng).matrix().diagonal().iter().map(|z| z.re + 1e-3).collect();
            let z: f64 = nu.iter().sum();
            let nu: Vec<f64> = nu.iter().map(|v| v / z).collect();
            let ep = classical::classical_ep(&chain, &nu).unwrap();
            let fi = classical::classical_fisher(&chain, &nu, 64).unwrap();
            prop_assert!(ep >= 0.0);
            prop_assert!((ep - fi).abs() <= 1e-8 * ep.max(1.0));
        }
    }

    #[test]
    fn local_resampling_preserves_mass(seed in 0u64..1000, t in 0.01f64..50.0, site in 0usize..3) {
        let model = SpinModel::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)], vec![0.1, 0.0, 0.0]).unwrap();
        let chain = classical::glauber_generator(&model, 1.0, RateRule::HeatBath).unwrap();
        let nu: Vec<f64> = random_density(8, &mut component_rng(seed, 6)).matrix().diagonal().iter().map(|z| z.re).collect();
        let out = chain.evolve_sites(&nu, &[site], t).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(out.iter().all(|&v| v >= -1e-14));
        let stay = chain.evolve_sites(&chain.pi, &[site], t).unwrap();
        prop_assert!(stay.iter().zip(&chain.pi).all(|(a, b)| (a - b).abs() < 1e-13));
    }
}
