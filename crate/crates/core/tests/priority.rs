mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitnet::priority::*;
use splitnet::steady_state::{check_rules, solve, CheckMode, Rule, SolveError, SteadyState};
use splitnet::{Rational, SplitterNetwork};

fn outputs(net: &SplitterNetwork, st: &SteadyState, names: &[&str]) -> Vec<Rational> {
    names.iter().map(|n| st.t[net.in_arcs(net.node_id(n).unwrap())[0]].clone()).collect()
}

fn variable_profile(choice: Option<bool>) -> (Vec<Rational>, Rational) {
    let (net, g) = gen_variable_gadget().unwrap();
    let net = net.normalize().unwrap();
    let mut prio = PriorityAssignment::fair(&net);
    prio.set_out(g.chooser, choice.map(|right| if right { g.right } else { g.left }));
    let st = priority_solve(&net, &prio).unwrap();
    assert_eq!(check_priority_rules(&net, &prio, &st), vec![]);
    (outputs(&net, &st, &["t1", "t2", "t3", "t4"]), st.total_output(&net))
}

#[test]
fn variable_gadget_profiles() {
    let (right, total) = variable_profile(Some(true));
    assert_eq!(right, vec![r(1, 2), r(1, 2), r(7, 8), r(7, 8)]);
    assert_eq!(total, r(11, 4));
    let (left, total) = variable_profile(Some(false));
    assert_eq!(left, vec![r(7, 8), r(7, 8), r(1, 2), r(1, 2)]);
    assert_eq!(total, r(11, 4));
    // The saturated arcs of the left-choice state: x? sends everything to
    // the left and the right half stays fluid.
    let (net, g) = gen_variable_gadget().unwrap();
    let net = net.normalize().unwrap();
    let mut prio = PriorityAssignment::fair(&net);
    prio.set_out(g.chooser, Some(g.left));
    let st = priority_solve(&net, &prio).unwrap();
    for (arc, t, fluid) in [("a->c", r(1, 4), false), ("c->d", r(1, 2), false), ("e->d", r(1, 2), false), ("f->e", r(3, 4), false),
        ("s2->f", r(7, 8), false), ("f->g", r(1, 1), true), ("d->b", r(1, 1), true), ("x->j", r(0, 1), true)] {
        let e = net.arc_id(arc).unwrap();
        assert_eq!((st.t[e].clone(), st.fluid[e]), (t, fluid), "{arc}");
    }
    let (fair, total) = variable_profile(None);
    assert_eq!(fair, vec![r(5, 8); 4]);
    assert_eq!(total, r(10, 4));
}

fn clause_input(f: [Rational; 3]) -> Rational {
    let net = gen_clause_gadget(f.clone()).unwrap().normalize().unwrap();
    let prio = PriorityAssignment::fair(&net);
    let st = priority_solve(&net, &prio).unwrap();
    assert_eq!(check_priority_rules(&net, &prio, &st), vec![]);
    for (j, fj) in f.iter().enumerate() {
        let e = net.out_arcs(net.node_id(&format!("l{}", j + 1)).unwrap())[0];
        assert!(st.fluid[e], "literal arc {j} saturated");
        assert_eq!(&st.t[e], fj);
    }
    st.t[net.out_arcs(net.node_id("s").unwrap())[0]].clone()
}

#[test]
fn clause_gadget_threshold() {
    assert_eq!(clause_input([r(1, 2), r(7, 8), r(7, 8)]), r(23, 32));
    assert!(clause_input([r(7, 8), r(7, 8), r(7, 8)]) < r(23, 32));
    assert_eq!(clause_input([r(0, 1), r(0, 1), r(0, 1)]), r(23, 32));
}

#[test]
fn clause_gadget_threshold_grid() {
    let grid = [r(1, 2), r(5, 8), r(3, 4), r(7, 8), r(1, 1)];
    for a in &grid {
        for b in &grid {
            for c in [r(1, 2), r(5, 8), r(7, 8)] {
                let sum = a + b + &c;
                let got = clause_input([a.clone(), b.clone(), c]);
                assert_eq!(got == r(23, 32), sum <= r(9, 4), "sum {sum} gives {got}");
            }
        }
    }
}

#[test]
fn p7_violation_is_reported() {
    let mut net = SplitterNetwork::new();
    net.add_input("i", r(1, 1)).unwrap();
    net.add_splitter("s").unwrap();
    net.add_output("a", r(3, 4)).unwrap();
    net.add_output("b", r(1, 1)).unwrap();
    let ei = net.connect("i", "s").unwrap();
    let ea = net.connect("s", "a").unwrap();
    let eb = net.connect("s", "b").unwrap();
    let net = net.normalize().unwrap();
    let mut prio = PriorityAssignment::fair(&net);
    prio.set_out(net.node_id("s").unwrap(), Some(ea));
    let mut st = SteadyState::zero(&net);
    st.t[ei] = r(1, 1);
    st.t[ea] = r(3, 4);
    st.t[eb] = r(1, 4);
    let v = check_priority_rules(&net, &prio, &st);
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].rule, Rule::P7);
    // The solver pins the sibling at 0 until the preferred arc saturates at
    // its output capacity, then hands it the rest.
    let solved = priority_solve(&net, &prio).unwrap();
    assert_eq!(check_priority_rules(&net, &prio, &solved), vec![]);
    assert_eq!((solved.t[ea].clone(), solved.t[eb].clone()), (r(3, 4), r(1, 4)));
    assert!(!solved.fluid[ea]);
}

#[test]
fn without_preferences_the_checkers_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for text in [FAIR_A, FAIR_B, FAIR_C, SIXTY_SEVEN, NON_UNIQUE] {
        let net = load(text);
        let (st, _) = solve(&net).unwrap();
        let prio = PriorityAssignment::fair(&net);
        assert_eq!(check_priority_rules(&net, &prio, &st), vec![]);
        for _ in 0..20 {
            let mut bad = st.clone();
            let e = rng.gen_range(0..net.num_arcs());
            if rng.gen_bool(0.5) {
                bad.fluid[e] = !bad.fluid[e];
            } else {
                bad.t[e] = random_cap(&mut rng);
            }
            assert_eq!(check_priority_rules(&net, &prio, &bad), check_rules(&net, &bad, CheckMode::R8));
        }
    }
}

#[test]
fn without_preferences_the_solvers_agree() {
    for text in [FAIR_A, FAIR_B, FAIR_C, SIXTY_SEVEN] {
        let net = load(text);
        let (st, _) = solve(&net).unwrap();
        let ps = priority_solve(&net, &PriorityAssignment::fair(&net)).unwrap();
        assert_eq!(ps.terminal_values(&net), st.terminal_values(&net));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..25 {
        let n = rng.gen_range(2..12);
        let k = rng.gen_range(1..=n.min(4));
        let net = random_network(&mut rng, n, k, 0.2, random_cap);
        let (st, _) = solve(&net).unwrap();
        let ps = priority_solve(&net, &PriorityAssignment::fair(&net)).unwrap();
        assert_eq!(ps.terminal_values(&net), st.terminal_values(&net));
    }
}

#[test]
fn random_preferences_give_steady_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let n = rng.gen_range(2..14);
        let k = rng.gen_range(1..=n.min(4));
        let net = random_network(&mut rng, n, k, 0.2, random_cap);
        let mut prio = PriorityAssignment::fair(&net);
        for s in net.splitters() {
            if rng.gen_bool(0.5) {
                prio.set_out(s, Some(net.out_arcs(s)[rng.gen_range(0..2)]));
            }
            if rng.gen_bool(0.5) {
                prio.set_in(s, Some(net.in_arcs(s)[rng.gen_range(0..2)]));
            }
        }
        let st = priority_solve(&net, &prio).unwrap_or_else(|e| panic!("{e}\n{}", net.serialize()));
        assert_eq!(check_priority_rules(&net, &prio, &st), vec![], "{}", net.serialize());
    }
}

fn balanced_outputs(k: u32, total: i64) -> Vec<Rational> {
    let (net, prio) = gen_saturating_balancer(k).unwrap();
    let mut net = net.normalize().unwrap();
    let n = 1i64 << k;
    for i in net.inputs() {
        if !net.is_dummy_node(i) {
            net.set_cap(i, r(total, n));
        }
    }
    let st = priority_solve(&net, &prio).unwrap();
    assert_eq!(check_priority_rules(&net, &prio, &st), vec![]);
    (0..n).map(|j| st.t[net.in_arcs(net.node_id(&format!("o{j}")).unwrap())[0]].clone()).collect()
}

#[test]
fn saturating_balancer_structure() {
    for k in 2..=5u32 {
        let (net, prio) = gen_saturating_balancer(k).unwrap();
        assert!(net.normalize().unwrap().validate().is_empty());
        assert_eq!(prio, PriorityAssignment::from_network(&net));
        let n = 1usize << k;
        let fair = net.splitters().into_iter().filter(|&s| prio.is_fair(s)).count();
        assert_eq!(fair, (k as usize + 1) << (k - 2));
        assert_eq!(net.splitters().len() - fair, n * (n - 1) / 2 + n);
        let text = net.serialize();
        assert_eq!(SplitterNetwork::parse(&text).unwrap().serialize(), text);
    }
    let (net, _) = gen_saturating_balancer(4).unwrap();
    let fair = net.splitters().into_iter().filter(|&s| net.node(s).in_prio.is_none() && net.node(s).out_prio.is_none()).count();
    assert_eq!(fair, 20);
    for (u, v) in [("i0", "x1y1"), ("x15y15", "a16"), ("x15y3", "b3"), ("x15y12", "a12"), ("a16", "s0_0"), ("a9", "s0_3"),
        ("s2_0", "b8"), ("s2_3", "b1"), ("b1", "c1"), ("a9", "c1"), ("c8", "o15")] {
        assert!(net.arc_id(&format!("{u}->{v}")).is_ok(), "{u}->{v}");
    }
    assert!(gen_saturating_balancer(1).is_err());
}

#[test]
fn saturating_balancer_balances_both_regimes() {
    assert_eq!(balanced_outputs(4, 6), vec![r(6, 16); 16]);
    assert_eq!(balanced_outputs(4, 12), vec![r(12, 16); 16]);
    for total in 1..=8 {
        assert_eq!(balanced_outputs(3, total), vec![r(total, 8); 8], "total {total}");
    }
}

/// Augmenting paths by depth-first search, for comparison with the
/// breadth-first solver.
fn dfs_max_flow(net: &SplitterNetwork) -> i64 {
    let m = net.num_arcs();
    let mut x = vec![false; m];
    let mut value = 0;
    loop {
        let mut seen = vec![false; net.num_nodes()];
        let mut path = Vec::new();
        fn go(net: &SplitterNetwork, x: &[bool], seen: &mut [bool], v: usize, path: &mut Vec<usize>) -> bool {
            if net.outputs().contains(&v) {
                return true;
            }
            seen[v] = true;
            for &e in net.out_arcs(v) {
                let h = net.arc(e).head;
                if !x[e] && net.arc_cap(e).is_positive() && !seen[h] {
                    path.push(e);
                    if go(net, x, seen, h, path) {
                        return true;
                    }
                    path.pop();
                }
            }
            for &e in net.in_arcs(v) {
                let t = net.arc(e).tail;
                if x[e] && !seen[t] {
                    path.push(e);
                    if go(net, x, seen, t, path) {
                        return true;
                    }
                    path.pop();
                }
            }
            false
        }
        let found = net.inputs().into_iter().any(|i| !seen[i] && go(net, &x, &mut seen, i, &mut path));
        if !found {
            return value;
        }
        for e in path {
            x[e] = !x[e];
        }
        value += 1;
    }
}

fn random_prios(rng: &mut ChaCha8Rng, net: &SplitterNetwork) -> PriorityAssignment {
    let mut prio = PriorityAssignment::fair(net);
    for s in net.splitters() {
        if rng.gen_bool(0.5) {
            prio.set_out(s, Some(net.out_arcs(s)[rng.gen_range(0..2)]));
        }
        if rng.gen_bool(0.5) {
            prio.set_in(s, Some(net.in_arcs(s)[rng.gen_range(0..2)]));
        }
    }
    prio
}

#[test]
fn chosen_priorities_reach_the_maximum_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for round in 0..200 {
        let n = rng.gen_range(2..=30);
        let k = rng.gen_range(1..=n.min(6));
        let net = random_network(&mut rng, n, k, 0.3, |_| r(1, 1));
        let flow = r(dfs_max_flow(&net), 1);
        let (prio, st, total) = optimize_priorities(&net, &PriorityAssignment::fair(&net), PriorityMode::All).unwrap();
        assert_eq!(total, flow, "round {round}");
        assert_eq!(check_priority_rules(&net, &prio, &st), vec![], "round {round}\n{}", net.serialize());
        if round % 4 == 0 {
            let given = random_prios(&mut rng, &net);
            for mode in [PriorityMode::OutOnly, PriorityMode::InOnly] {
                let (p, st, total) = optimize_priorities(&net, &given, mode).unwrap();
                assert_eq!(total, flow, "round {round} {mode:?}");
                assert_eq!(check_priority_rules(&net, &p, &st), vec![], "round {round} {mode:?}");
                for s in net.splitters() {
                    match mode {
                        PriorityMode::OutOnly => assert_eq!(p.in_of(s), given.in_of(s)),
                        _ => assert_eq!(p.out_of(s), given.out_of(s)),
                    }
                }
            }
        }
    }
}

#[test]
fn maximum_flow_examples() {
    let net = load(FAIR_C);
    let caps_one = net.inputs().into_iter().chain(net.outputs()).all(|v| net.is_dummy_node(v) || net.node(v).cap.is_one());
    assert!(caps_one);
    let (_, st, total) = optimize_priorities(&net, &PriorityAssignment::fair(&net), PriorityMode::All).unwrap();
    assert_eq!(total, r(1, 1));
    assert_eq!(solve(&net).unwrap().0.total_output(&net), r(1, 2));
    assert!(st.fluid.iter().zip(&st.t).all(|(f, t)| *f || t.is_zero()));

    // Three disjoint routes through a ladder of splitters.
    let mut text = String::new();
    for j in 0..3 {
        text += &format!("input i{j}\noutput o{j}\nsplitter p{j}\nsplitter q{j}\narc a{j} i{j} -> p{j}\narc b{j} q{j} -> o{j}\n");
    }
    text += "arc c0 p0 -> q1\narc c1 p1 -> q2\narc c2 p2 -> q0\narc d0 p0 -> q0\narc d1 p1 -> q1\narc d2 p2 -> q2\n";
    let net = load(&text);
    assert_eq!(optimize_priorities(&net, &PriorityAssignment::fair(&net), PriorityMode::All).unwrap().2, r(3, 1));

    let net = load("input i\noutput o\nsplitter s\nsplitter t\narc a i -> s\narc b s -> s\narc c t -> o\narc d t -> t\n");
    let (prio, st, total) = optimize_priorities(&net, &PriorityAssignment::fair(&net), PriorityMode::All).unwrap();
    assert_eq!(total, r(0, 1));
    assert!(net.splitters().into_iter().all(|s| prio.is_fair(s)));
    assert_eq!(check_priority_rules(&net, &prio, &st), vec![]);

    let net = load(FAIR_B);
    let err = optimize_priorities(&net, &PriorityAssignment::fair(&net), PriorityMode::All).unwrap_err();
    assert!(matches!(err, SolveError::Unsupported(_)), "{err}");
}

#[test]
fn dimacs_parsing() {
    let cnf = Cnf::parse_dimacs("c example\np cnf 3 2\n1 -2 3 0\n-1 2\n3 0\n").unwrap();
    assert_eq!(cnf, Cnf { num_vars: 3, clauses: vec![[1, -2, 3], [-1, 2, 3]] });
    assert!(Cnf::parse_dimacs("p cnf 3 1\n1 2 0\n").is_err());
    assert!(Cnf::parse_dimacs("p cnf 2 1\n1 2 3 0\n").is_err());
    assert!(Cnf::parse_dimacs("1 2 3 0\n").is_err());
    assert!(Cnf::parse_dimacs("p cnf 3 2\n1 2 3 0\n").is_err());
    assert!(Cnf::parse_dimacs("p cnf 3 3\n1 2 3 0\n1 2 -3 0\n1 -2 -3 0\n").is_err());
}

fn throughput(red: &SatReduction, values: &[Option<bool>]) -> Rational {
    let net = red.net.normalize().unwrap();
    let prio = red.priorities(values);
    let st = priority_solve(&net, &prio).unwrap();
    assert_eq!(check_priority_rules(&net, &prio, &st), vec![]);
    st.total_output(&net)
}

#[test]
fn sat_reduction_single_clause() {
    let cnf = Cnf::parse_dimacs("p cnf 3 1\n1 -2 3 0\n").unwrap();
    let red = gen_sat_reduction(&cnf).unwrap();
    assert_eq!(red.target, r(11 * 3, 4) + r(23, 32));
    assert_eq!(red.free_splitters().len(), 3);
    assert_eq!(red.net.splitters().len(), 3 * 12 + 15);
    let choices = [Some(false), Some(true), None];
    let mut best = r(0, 1);
    for a in choices {
        for b in choices {
            for c in choices {
                let values = [a, b, c];
                let got = throughput(&red, &values);
                assert!(got <= red.target, "{values:?} gives {got}");
                if let [Some(x), Some(y), Some(z)] = values {
                    assert_eq!(got == red.target, cnf.satisfied_by(&[x, y, z]), "{values:?} gives {got}");
                }
                best = best.max(got);
            }
        }
    }
    assert_eq!(best, red.target);
}

#[test]
fn sat_reduction_unsatisfiable_core() {
    // Every assignment of x1, x2 falsifies one of the four clauses; x3 and
    // x4 only pad them to three literals.
    let cnf = Cnf::parse_dimacs("p cnf 4 4\n1 2 3 0\n1 -2 3 0\n-1 2 4 0\n-1 -2 4 0\n").unwrap();
    let red = gen_sat_reduction(&cnf).unwrap();
    for bits in 0..16u32 {
        let values: Vec<bool> = (0..4).map(|j| bits >> j & 1 == 1).collect();
        let got = throughput(&red, &values.iter().map(|&b| Some(b)).collect::<Vec<_>>());
        assert_eq!(got == red.target, cnf.satisfied_by(&values), "{values:?} gives {got}");
    }
    assert!(gen_sat_reduction(&Cnf { num_vars: 1, clauses: vec![[1, 1, 1]] }).is_err());
}
