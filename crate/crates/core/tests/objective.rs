use chance_opd::experiments::{generate_instance, ExperimentSpec};
use chance_opd::{objective_of, Decision, Instance64};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Reordering requests together with their decisions leaves the objective unchanged.
    #[test]
    fn objective_is_permutation_covariant(
        seed in any::<u64>(),
        n in 1usize..40,
        choices in prop::collection::vec(0u32..6, 40),
        perm_seed in any::<u64>(),
    ) {
        let inst: Instance64 = generate_instance(&ExperimentSpec::experiment_i(), n, seed).unwrap();
        let decisions: Vec<Decision> = choices[..n].iter().map(|&c| Decision(c)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = chance_opd::stats::splitmix64(s);
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let mut shuffled = inst.clone();
        shuffled.requests = order.iter().map(|&t| inst.requests[t].clone()).collect();
        let shuffled_decisions: Vec<Decision> = order.iter().map(|&t| decisions[t]).collect();
        let a = objective_of(&inst, &decisions).unwrap();
        let b = objective_of(&shuffled, &shuffled_decisions).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let direct: f64 = decisions.iter().zip(&inst.requests)
            .filter_map(|(d, r)| d.scheme_index().map(|l| r.revenue[l]))
            .sum();
        prop_assert!((a - direct).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
