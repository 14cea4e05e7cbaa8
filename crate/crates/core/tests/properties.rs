mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitnet::circulation::{
    solve_ceq, stationary_circulation, stationary_distribution, verify_certificate, verify_circulation, CeqOutcome,
    CoupledPartition, Digraph,
};
use splitnet::lp::{simplex, LinearProgram, LpOutcome, Relation};
use splitnet::rational::{binary_expansion, bit};
use splitnet::steady_state::{check_rules, join, meet, reverse_state, solve, uniform_solve, CheckMode, SteadyState};
use splitnet::{NodeKind, Rational, SplitterNetwork};

fn rational() -> impl Strategy<Value = Rational> {
    (-1000i64..1000, 1i64..1000).prop_map(|(n, d)| Rational::new(n, d))
}

fn unit_rational() -> impl Strategy<Value = Rational> {
    (1i64..400).prop_flat_map(|d| (0..d, Just(d))).prop_map(|(n, d)| Rational::new(n, d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn field_laws(a in rational(), b in rational(), c in rational()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert_eq!(&a * &b, &b * &a);
        prop_assert_eq!((&a + &b) + &c, &a + (&b + &c));
        prop_assert_eq!((&a * &b) * &c, &a * (&b * &c));
        prop_assert_eq!(&a * (&b + &c), &a * &b + &a * &c);
        prop_assert_eq!(&(&a - &b) + &b, a.clone());
        if !b.is_zero() {
            prop_assert_eq!(&(&a / &b) * &b, a.clone());
        }
    }

    #[test]
    fn text_round_trip(a in rational()) {
        let s = a.to_string();
        prop_assert_eq!(s.parse::<Rational>().unwrap(), a.clone());
        prop_assert_eq!(s.contains('/'), !a.is_integer());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn binary_expansion_reconstructs(r in unit_rational()) {
        let (prefix, period) = binary_expansion(&r).unwrap();
        let two_pow = |k: usize| Rational::one().shl(k as u32);
        let mut v = Rational::zero();
        for (i, &b) in prefix.iter().enumerate() {
            v += Rational::from_integer(b as i64) / two_pow(i + 1);
        }
        // 0.(y)^ω = y / (2^L - 1) as an integer word y of length L.
        let l = period.len();
        let mut y = Rational::zero();
        for &b in &period {
            y = y * Rational::from_integer(2) + Rational::from_integer(b as i64);
        }
        v += y / (two_pow(l) - Rational::one()) / two_pow(prefix.len());
        prop_assert_eq!(v, r.clone());

        let bits: Vec<u8> = prefix.iter().chain(period.iter().cycle().take(3 * l)).copied().collect();
        for (k, &b) in bits.iter().enumerate() {
            prop_assert_eq!(bit(&r, k as u32 + 1).unwrap(), b);
        }
    }
}

fn random_net(seed: u64, max_splitters: usize) -> SplitterNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_splitters);
    let k = rng.gen_range(1..=n.min(4));
    common::random_network(&mut rng, n, k, 0.2, common::random_cap)
}

fn sorted_caps(net: &SplitterNetwork) -> Vec<(bool, Rational)> {
    let mut v: Vec<(bool, Rational)> = net
        .nodes()
        .iter()
        .filter(|n| n.kind != NodeKind::Splitter)
        .map(|n| (n.kind == NodeKind::Input, n.cap.clone()))
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn normalized_networks_validate(seed in any::<u64>()) {
        let net = random_net(seed, 12);
        prop_assert!(net.validate().is_empty());
        prop_assert_eq!(net.normalize().unwrap(), net.clone());
    }

    #[test]
    fn reversal_keeps_sizes_and_capacities(seed in any::<u64>()) {
        let net = random_net(seed, 12);
        let rev = net.reverse();
        prop_assert_eq!(rev.num_arcs(), net.num_arcs());
        prop_assert_eq!(rev.num_nodes(), net.num_nodes());
        let flip: Vec<(bool, Rational)> = {
            let mut v: Vec<_> = sorted_caps(&net).into_iter().map(|(i, c)| (!i, c)).collect();
            v.sort();
            v
        };
        prop_assert_eq!(sorted_caps(&rev), flip);
        prop_assert_eq!(rev.reverse(), net.clone());
    }

    #[test]
    fn text_format_round_trips(seed in any::<u64>()) {
        let net = random_net(seed, 12);
        prop_assert_eq!(SplitterNetwork::parse(&net.serialize()).unwrap(), net);
    }

    #[test]
    fn parser_rejects_bad_capacities(n in 2i64..50, d in 1i64..50, neg in any::<bool>()) {
        let cap = if neg { format!("-{n}/{d}") } else { format!("{}/{d}", d + n) };
        let text = format!("input i cap={cap}\noutput o\narc a i -> o\n");
        prop_assert!(SplitterNetwork::parse(&text).is_err());
        let text = format!("input i cap={n}/x{d}\noutput o\narc a i -> o\n");
        prop_assert!(SplitterNetwork::parse(&text).is_err());
    }
}

/// A strongly connected digraph: a Hamiltonian cycle plus random arcs.
fn strong_digraph(seed: u64) -> Digraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let mut arcs: Vec<(usize, usize)> = (0..n).map(|v| (v, (v + 1) % n)).collect();
    for _ in 0..rng.gen_range(0..2 * n) {
        arcs.push((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    Digraph::new(n, arcs)
}

/// Random graph with a random coupling of arcs sharing a tail; arc 0 is
/// always alone in its class.
fn coupled_digraph(seed: u64) -> (Digraph, CoupledPartition) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=7);
    let m = rng.gen_range(1..=3 * n);
    let arcs: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
    let g = Digraph::new(n, arcs);
    let mut classes: Vec<Vec<usize>> = vec![vec![0]];
    for v in 0..n {
        let mut outs: Vec<usize> = (1..m).filter(|&e| g.arcs[e].0 == v).collect();
        while !outs.is_empty() {
            let take = rng.gen_range(1..=outs.len().min(3));
            classes.push(outs.drain(..take).collect());
        }
    }
    let p = CoupledPartition::new(&g, classes).unwrap();
    (g, p)
}

/// Whether a class-constant circulation with `x[ts] = 1` exists, by LP.
fn ceq_feasible(g: &Digraph, ts: usize, p: &CoupledPartition) -> bool {
    let m = g.arcs.len();
    let mut lp = LinearProgram::new(m);
    for v in 0..g.n {
        let mut row = vec![];
        for (e, &(a, b)) in g.arcs.iter().enumerate() {
            let c = (a == v) as i64 - (b == v) as i64;
            if c != 0 {
                row.push((e, Rational::from_integer(c)));
            }
        }
        if !row.is_empty() {
            lp.add(row, Relation::Eq, Rational::zero());
        }
    }
    for c in p.classes() {
        for &e in &c[1..] {
            lp.add(vec![(c[0], Rational::one()), (e, -Rational::one())], Relation::Eq, Rational::zero());
        }
    }
    lp.add(vec![(ts, Rational::one())], Relation::Eq, Rational::one());
    matches!(simplex(&lp), LpOutcome::Optimal { .. })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn stationary_distribution_is_stationary(seed in any::<u64>()) {
        let g = strong_digraph(seed);
        let pi = stationary_distribution(&g).unwrap();
        let mut outdeg = vec![0i64; g.n];
        for &(u, _) in &g.arcs {
            outdeg[u] += 1;
        }
        let mut next = vec![Rational::zero(); g.n];
        for &(u, v) in &g.arcs {
            next[v] += &pi[u] / Rational::from_integer(outdeg[u]);
        }
        prop_assert_eq!(&next, &pi);
        prop_assert_eq!(pi.iter().sum::<Rational>(), Rational::one());
        // π(u)/d⁺(u) on every arc is a circulation constant on out-incidences.
        let part = CoupledPartition::out_incidences(&g);
        let x: Vec<Rational> = g.arcs.iter().map(|&(u, _)| &pi[u] / Rational::from_integer(outdeg[u])).collect();
        prop_assert_eq!(verify_circulation(&g, &part, &x), Ok(()));
        let y = stationary_circulation(&g, &part).unwrap();
        prop_assert_eq!(verify_circulation(&g, &part, &y), Ok(()));
    }

    #[test]
    fn ceq_outcomes_verify(seed in any::<u64>()) {
        let (g, p) = coupled_digraph(seed);
        let feasible = ceq_feasible(&g, 0, &p);
        match solve_ceq(&g, 0, &p).unwrap() {
            CeqOutcome::Circulation(x) => {
                prop_assert_eq!(verify_circulation(&g, &p, &x), Ok(()));
                prop_assert!(x[0].is_positive());
                prop_assert!(feasible);
            }
            CeqOutcome::Certificate(c) => {
                prop_assert_eq!(verify_certificate(&g, 0, &p, &c), Ok(()));
                prop_assert!(!feasible);
            }
        }
    }
}

fn terminals(net: &SplitterNetwork, st: &SteadyState) -> Vec<Rational> {
    net.input_arcs().into_iter().chain(net.output_arcs()).map(|e| st.t[e].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_output_is_a_strong_steady_state(seed in any::<u64>()) {
        let net = random_net(seed, 20);
        let (st, trace) = solve(&net).unwrap();
        prop_assert_eq!(check_rules(&net, &st, CheckMode::R8S), vec![]);
        prop_assert!(trace.steps.len() <= 2 * net.num_arcs());
        let mut prev = (SteadyState::zero(&net).psi(&net), 0usize);
        let mut before = (i64::MIN, 0usize);
        for s in &trace.steps {
            let cur = (s.psi, s.saturated);
            prop_assert!(cur > before);
            before = prev;
            prev = cur;
        }
    }

    #[test]
    fn raising_an_input_never_lowers_an_output(seed in any::<u64>(), pick in any::<prop::sample::Index>(), num in 0i64..=12) {
        let net = random_net(seed, 14);
        let (st, _) = solve(&net).unwrap();
        let inputs: Vec<usize> = net.inputs().into_iter().filter(|&v| !net.is_dummy_node(v)).collect();
        let i = *pick.get(&inputs);
        let mut raised = net.clone();
        let old = net.node(i).cap.clone();
        let new = &old + (Rational::one() - &old) * Rational::new(num, 12);
        raised.set_cap(i, new);
        let (st2, _) = solve(&raised).unwrap();
        for e in net.output_arcs() {
            prop_assert!(st2.t[e] >= st.t[e]);
        }
    }

    #[test]
    fn reversed_state_is_a_steady_state(seed in any::<u64>()) {
        let net = random_net(seed, 16);
        let (st, _) = solve(&net).unwrap();
        let rev_net = net.reverse();
        let rev = reverse_state(&st);
        prop_assert_eq!(check_rules(&rev_net, &rev, CheckMode::R8), vec![]);
        prop_assert_eq!(terminals(&rev_net, &rev).len(), terminals(&net, &st).len());
        for e in net.input_arcs().into_iter().chain(net.output_arcs()) {
            prop_assert_eq!(&rev.t[e], &st.t[e]);
        }
    }

    #[test]
    fn uniform_runs_agree_with_the_solver(seed in any::<u64>(), run in 0u64..1000) {
        let net = random_net(seed, 16);
        let mut unit = net.clone();
        for v in net.inputs().into_iter().chain(net.outputs()) {
            if !net.is_dummy_node(v) {
                unit.set_cap(v, Rational::one());
            }
        }
        let (a, _) = solve(&unit).unwrap();
        let (b, _) = uniform_solve(&unit, run).unwrap();
        prop_assert_eq!(terminals(&unit, &a), terminals(&unit, &b));
    }

    #[test]
    fn meet_and_join_form_a_lattice(seed in any::<u64>(), r1 in 0u64..100, r2 in 0u64..100, i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
        let net = random_net(seed, 10);
        let mut unit = net.clone();
        for v in net.inputs().into_iter().chain(net.outputs()) {
            if !net.is_dummy_node(v) {
                unit.set_cap(v, Rational::one());
            }
        }
        let states = |run: u64| {
            let mut v = vec![SteadyState::zero(&unit)];
            v.extend(uniform_solve(&unit, run).unwrap().1.steps.into_iter().map(|s| s.state));
            v
        };
        let (a, b) = (states(r1), states(r2));
        let (s1, s2) = (i.get(&a), j.get(&b));
        let (m, jn) = (meet(s1, s2), join(s1, s2));
        prop_assert_eq!(check_rules(&unit, &m, CheckMode::Uniform), vec![]);
        prop_assert_eq!(check_rules(&unit, &jn, CheckMode::Uniform), vec![]);
        prop_assert_eq!(&m, &meet(s2, s1));
        prop_assert_eq!(&jn, &join(s2, s1));
        prop_assert_eq!(&meet(s1, s1), s1);
        prop_assert_eq!(&join(s1, s1), s1);
        prop_assert_eq!(&meet(s1, &jn), s1);
        prop_assert_eq!(&join(s1, &m), s1);
    }
}
