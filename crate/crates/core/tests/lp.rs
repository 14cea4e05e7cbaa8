mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splitnet::lp::{
    constrained_pre_steady_solve, initial_pre_steady_state, lexicographic, pre_steady_solve, pss, simplex,
    simplex_exact, LinearProgram, LpOutcome, Relation,
};
use splitnet::steady_state::{check_rules, solve, CheckMode, SteadyState};
use splitnet::{Rational, SplitterNetwork};

fn terminals(net: &SplitterNetwork, st: &SteadyState) -> Vec<Rational> {
    let (a, b) = st.terminal_values(net);
    a.into_iter().chain(b).collect()
}

#[test]
fn pss_on_fair_a() {
    // Fluid everywhere except the small output arc.
    let net = load(FAIR_A);
    let fluid = vec![true, true, false, true];
    let none = vec![None; 4];
    let lp = pss(&net, &fluid, &none, &none);
    let LpOutcome::Optimal { value, .. } = simplex(&lp) else { panic!() };
    assert_eq!(value, r(6, 5));
    let LpOutcome::Optimal { value, .. } = simplex_exact(&lp) else { panic!() };
    assert_eq!(value, r(6, 5));
}

#[test]
fn lexicographic_breaks_ties_with_secondary() {
    // max x + y with x + y ≤ 1, then max x.
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![r(1, 1), r(1, 1)];
    lp.add(vec![(0, r(1, 1)), (1, r(1, 1))], Relation::Le, r(1, 1));
    let LpOutcome::Optimal { x, .. } = lexicographic(&lp, &[r(1, 1), r(0, 1)]) else { panic!() };
    assert_eq!(x, vec![r(1, 1), r(0, 1)]);
}

#[test]
fn fair_b_terminals() {
    let net = load(FAIR_B);
    let (st, iters) = pre_steady_solve(&net).unwrap();
    assert_eq!(terminals(&net, &st), vec![r(7, 10), r(1, 2), r(2, 5), r(4, 5)]);
    assert_eq!(check_rules(&net, &st, CheckMode::R8S), vec![]);
    assert!(iters <= net.num_arcs() + 1);
}

#[test]
fn zero_capacity_inputs() {
    let mut net = load(FAIR_A);
    net.set_cap(0, Rational::zero());
    net.set_cap(1, Rational::zero());
    let (st, iters) = pre_steady_solve(&net).unwrap();
    assert_eq!(st, SteadyState::zero(&net));
    assert_eq!(iters, 1);
}

#[test]
fn sixty_seven_agrees_with_residual_solver() {
    let net = load(SIXTY_SEVEN);
    let (st, _) = pre_steady_solve(&net).unwrap();
    let (rs, _) = solve(&net).unwrap();
    assert_eq!(terminals(&net, &st), terminals(&net, &rs));
    assert_eq!(st.terminal_values(&net).1[0], r(6, 7));
    assert_eq!(check_rules(&net, &st, CheckMode::R8S), vec![]);
}

#[test]
fn restart_from_steady_state_is_identity() {
    let net = load(SIXTY_SEVEN);
    let (st, _) = pre_steady_solve(&net).unwrap();
    let (again, iters) = constrained_pre_steady_solve(&net, &st).unwrap();
    assert_eq!(iters, 1);
    assert_eq!(terminals(&net, &again), terminals(&net, &st));
    assert_eq!(again.fluid, st.fluid);
}

#[test]
fn random_networks_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rand::Rng::gen_range(&mut rng, 1..=12);
        let k = rand::Rng::gen_range(&mut rng, 1..=n.min(4));
        let net = random_network(&mut rng, n, k, 0.2, random_cap);
        let (a, iters) = pre_steady_solve(&net).unwrap();
        let (b, _) = solve(&net).unwrap();
        assert_eq!(check_rules(&net, &a, CheckMode::R8S), vec![], "{}", net.serialize());
        assert_eq!(terminals(&net, &a), terminals(&net, &b), "{}", net.serialize());
        assert!(iters <= net.num_arcs() + 1);
        let (c, _) = constrained_pre_steady_solve(&net, &initial_pre_steady_state(&net)).unwrap();
        assert_eq!(a, c);
    }
}
