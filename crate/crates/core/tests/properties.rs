mod common;

use common::*;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 256,
        ..ProptestConfig::default()
    }
}

fn system_with_qmt() -> impl Strategy<Value = (qpreduce::QPSystem, qpreduce::RatMatrix)> {
    system().prop_flat_map(|s| {
        let n = s.n();
        (Just(s), invertible(n))
    })
}

fn system_with_two_qmts(
) -> impl Strategy<Value = (qpreduce::QPSystem, qpreduce::RatMatrix, qpreduce::RatMatrix)> {
    system().prop_flat_map(|s| {
        let n = s.n();
        (Just(s), invertible(n), invertible(n))
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn qmt_round_trip((sys, c) in system_with_qmt()) {
        check_qmt_round_trip(&sys, &c)?;
    }

    #[test]
    fn qmt_composition((sys, c1, c2) in system_with_two_qmts()) {
        check_qmt_composition(&sys, &c1, &c2)?;
    }

    #[test]
    fn rank_invariant_under_invertible_qmt(
        (b, c) in (1usize..=6, 1usize..=4).prop_flat_map(|(m, n)| (rat_matrix(m, n), invertible(n)))
    ) {
        check_rank_invariance(&b, &c)?;
    }

    #[test]
    fn rank_matches_minor_oracle(m in (1usize..=4, 1usize..=5).prop_flat_map(|(r, c)| int_matrix(r, c, 2))) {
        check_rank_oracle(&m)?;
    }

    #[test]
    fn solve_right_matches_minor_oracle(
        (m, rhs) in (1usize..=4, 1usize..=4, 1usize..=2)
            .prop_flat_map(|(r, c, k)| (int_matrix(r, c, 2), int_matrix(r, k, 2)))
    ) {
        check_solve_oracle(&m, &rhs)?;
    }

    #[test]
    fn successful_reductions_decouple(sys in normalized_system()) {
        check_decoupling(&sys)?;
    }

    #[test]
    fn constructed_reducible_systems_decouple(sys in reducible_system()) {
        check_reducible(&sys)?;
    }

    #[test]
    fn parser_round_trip(sys in normalized_system()) {
        check_parser_round_trip(&sys)?;
    }
}
