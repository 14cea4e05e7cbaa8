//! Balancer families and capacity gadgets, their property verifiers,
//! splitter counts and the coin-tossing lower bounds.

use std::collections::HashSet;
use std::fmt;

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{ArcId, NetworkError, NodeId, SplitterNetwork};
use crate::rational::{binary_expansion, rotate_period_to_one, Rational};
use crate::steady_state::{solve, SolveError, SteadyState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BalancerError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

fn arg(msg: impl Into<String>) -> BalancerError {
    BalancerError::Argument(msg.into())
}

/// Adds arcs named `tail->head`.
pub(crate) fn link(net: &mut SplitterNetwork, tail: NodeId, head: NodeId) -> ArcId {
    let (t, h) = (net.node(tail).name.clone(), net.node(head).name.clone());
    net.connect(&t, &h).expect("generated names exist")
}

pub(crate) fn terminals(net: &mut SplitterNetwork, n: usize) -> (Vec<NodeId>, Vec<NodeId>) {
    let ins = (0..n).map(|j| net.add_input(&format!("i{j}"), Rational::one()).expect("fresh name")).collect();
    let outs = (0..n).map(|j| net.add_output(&format!("o{j}"), Rational::one()).expect("fresh name")).collect();
    (ins, outs)
}

/// Levels of `width` splitters named `{prefix}s{l}_{j}`; between levels `l`
/// and `l+1`, splitter `j` feeds `j` and `j ⊕ 2^bits[l]`.
pub(crate) fn butterfly(net: &mut SplitterNetwork, prefix: &str, width: usize, bits: &[u32]) -> Vec<Vec<NodeId>> {
    let levels: Vec<Vec<NodeId>> = (0..=bits.len())
        .map(|l| (0..width).map(|j| net.add_splitter(&format!("{prefix}s{l}_{j}")).expect("fresh name")).collect())
        .collect();
    for (l, &b) in bits.iter().enumerate() {
        for j in 0..width {
            link(net, levels[l][j], levels[l + 1][j]);
            link(net, levels[l][j], levels[l + 1][j ^ (1 << b)]);
        }
    }
    levels
}

fn benes_bits(k: u32) -> Vec<u32> {
    let k = k as i64;
    (0..(2 * k - 2).max(0)).map(|l| (k - 2 - l).max(l - k + 1) as u32).collect()
}

fn check_order(k: u32, min: u32, max: u32) -> Result<(), BalancerError> {
    if k < min || k > max {
        return Err(arg(format!("order {k} outside {min}..={max}")));
    }
    Ok(())
}

/// The simple balancer of order `k`: `2^k` inputs and outputs, `k` levels
/// of `2^(k-1)` splitters.
pub fn gen_simple(k: u32) -> Result<SplitterNetwork, BalancerError> {
    check_order(k, 1, 20)?;
    let mut net = SplitterNetwork::new();
    let (ins, outs) = terminals(&mut net, 1 << k);
    let bits: Vec<u32> = (0..k - 1).collect();
    let lv = butterfly(&mut net, "", 1 << (k - 1), &bits);
    attach(&mut net, &ins, &outs, &lv[0], &lv[lv.len() - 1]);
    Ok(net)
}

fn attach(net: &mut SplitterNetwork, ins: &[NodeId], outs: &[NodeId], first: &[NodeId], last: &[NodeId]) {
    for (j, &i) in ins.iter().enumerate() {
        link(net, i, first[j / 2]);
    }
    for (j, &o) in outs.iter().enumerate() {
        link(net, last[j / 2], o);
    }
}

/// The Beneš network of order `k`: `2k-1` levels of `2^(k-1)` splitters
/// whose swapped bit runs from `k-2` down to 0 and back up.
pub fn gen_benes(k: u32) -> Result<SplitterNetwork, BalancerError> {
    check_order(k, 1, 20)?;
    let mut net = SplitterNetwork::new();
    let (ins, outs) = terminals(&mut net, 1 << k);
    let lv = butterfly(&mut net, "", 1 << (k - 1), &benes_bits(k));
    attach(&mut net, &ins, &outs, &lv[0], &lv[lv.len() - 1]);
    Ok(net)
}

/// The Beneš network of order `k+1` inside a half-universal network;
/// returns its first and last levels.
fn half_universal_core(net: &mut SplitterNetwork, prefix: &str, k: u32) -> (Vec<NodeId>, Vec<NodeId>) {
    let lv = butterfly(net, prefix, 1 << k, &benes_bits(k + 1));
    (lv[0].clone(), lv[lv.len() - 1].clone())
}

/// The half-universal network of order `k`: a Beneš network of order
/// `k+1` fed by `2^k` inputs and `2^k` loopback arcs.
pub fn gen_half_universal(k: u32) -> Result<SplitterNetwork, BalancerError> {
    check_order(k, 0, 19)?;
    let mut net = SplitterNetwork::new();
    let (ins, outs) = terminals(&mut net, 1 << k);
    let (first, last) = half_universal_core(&mut net, "", k);
    wire_half(&mut net, &first, &last, &ins, &outs);
    Ok(net)
}

fn wire_half(net: &mut SplitterNetwork, first: &[NodeId], last: &[NodeId], ins: &[NodeId], outs: &[NodeId]) {
    for (j, &i) in ins.iter().enumerate() {
        link(net, i, first[j]);
    }
    for (j, &o) in outs.iter().enumerate() {
        link(net, last[j], o);
    }
    for j in 0..first.len() {
        link(net, last[j], first[j]);
    }
}

/// The universal network of order `k`: two half-universal networks of
/// order `k` sharing `2^k` entry splitters `u{j}` and `2^k` exit splitters
/// `x{j}`.
pub fn gen_universal(k: u32) -> Result<SplitterNetwork, BalancerError> {
    check_order(k, 0, 18)?;
    let n = 1usize << k;
    let mut net = SplitterNetwork::new();
    let (ins, outs) = terminals(&mut net, n);
    let u: Vec<NodeId> = (0..n).map(|j| net.add_splitter(&format!("u{j}")).expect("fresh name")).collect();
    let x: Vec<NodeId> = (0..n).map(|j| net.add_splitter(&format!("x{j}")).expect("fresh name")).collect();
    for j in 0..n {
        link(&mut net, ins[j], u[j]);
    }
    for prefix in ["a.", "b."] {
        let (first, last) = half_universal_core(&mut net, prefix, k);
        wire_half(&mut net, &first, &last, &u, &x);
    }
    for j in 0..n {
        link(&mut net, x[j], outs[j]);
    }
    Ok(net)
}

/// Splitter counts `(S(k), B(k), U(k))` of the simple balancer, the Beneš
/// network and the universal network of order `k`.
pub fn counts(k: u32) -> (u128, u128, u128) {
    assert!((1..=120).contains(&k), "order {k} outside 1..=120");
    let k = k as u128;
    let p = 1u128 << (k - 1);
    (k * p, (2 * k - 1) * p, (k + 1) * 4 * 2 * p)
}

// ---------------------------------------------------------------------------
// Labeled arborescences

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub depth: u32,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    /// Index into the weights of the arborescence, for leaves.
    pub label: Option<usize>,
}

/// A binary out-arborescence of depth at most `k` whose leaves carry labels
/// `0..weights.len()`, with `bit_{k-d}(weights[i])` leaves of label `i` at
/// depth `d`. Node 0 is the root; nodes are numbered level by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledArborescence {
    pub k: u32,
    pub weights: Vec<u64>,
    pub nodes: Vec<TreeNode>,
}

impl LabeledArborescence {
    pub fn leaf_count(&self, label: usize, depth: u32) -> usize {
        self.nodes.iter().filter(|n| n.depth == depth && n.label == Some(label)).count()
    }

    pub fn inner_count(&self, depth: u32) -> usize {
        self.nodes.iter().filter(|n| n.depth == depth && n.children.is_some()).count()
    }

    /// Leaves with `label`, by increasing depth.
    pub fn leaves(&self, label: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.nodes.len()).filter(|&x| self.nodes[x].label == Some(label)).collect();
        v.sort_by_key(|&x| self.nodes[x].depth);
        v
    }
}

/// Builds the arborescence for weights summing to at most `2^k`; a shortfall
/// becomes one extra label. At each depth the leaves take the leftmost free
/// positions in ascending label order.
pub fn gen_arborescence(weights: &[u64], k: u32) -> Result<LabeledArborescence, BalancerError> {
    if k > 62 {
        return Err(arg(format!("depth {k} above 62")));
    }
    let full = 1u64 << k;
    let sum = weights.iter().try_fold(0u64, |a, &w| a.checked_add(w)).filter(|&s| s <= full);
    let Some(sum) = sum else {
        return Err(arg(format!("weights exceed 2^{k}")));
    };
    let mut weights = weights.to_vec();
    if sum < full {
        weights.push(full - sum);
    }
    let mut nodes = vec![TreeNode { depth: 0, parent: None, children: None, label: None }];
    let mut level = vec![0usize];
    for d in 0..=k {
        let mut next = 0;
        for (i, &w) in weights.iter().enumerate() {
            if (w >> (k - d)) & 1 == 1 {
                nodes[level[next]].label = Some(i);
                next += 1;
            }
        }
        let inner = &level[next..];
        if d == k {
            debug_assert!(inner.is_empty());
            break;
        }
        let mut below = Vec::with_capacity(2 * inner.len());
        for &x in inner {
            let a = nodes.len();
            for _ in 0..2 {
                nodes.push(TreeNode { depth: d + 1, parent: Some(x), children: None, label: None });
            }
            nodes[x].children = Some([a, a + 1]);
            below.extend([a, a + 1]);
        }
        level = below;
    }
    Ok(LabeledArborescence { k, weights, nodes })
}

// ---------------------------------------------------------------------------
// Capacity gadgets

fn reduced(p: u64, q: u64) -> Result<(u64, u64), BalancerError> {
    if p == 0 || p >= q {
        return Err(arg(format!("need 0 < p < q, got {p}/{q}")));
    }
    let g = p.gcd(&q);
    Ok((p / g, q / g))
}

/// A network with one input `i` and one output `o` whose maximum
/// throughput is `p/q`, of size `O(log q)`. Below 1/2 the ratio is doubled
/// and the gadget wrapped by splitters `a{m}`, `b{m}` that send the output
/// back to the entry. The arc entering the mixing splitter `m` from the
/// entry is named `bottleneck`.
pub fn gen_capacity(p: u64, q: u64) -> Result<SplitterNetwork, BalancerError> {
    let (mut p, q) = reduced(p, q)?;
    if q > 1 << 40 {
        return Err(arg(format!("denominator {q} above 2^40")));
    }
    let mut net = SplitterNetwork::new();
    let i = net.add_input("i", Rational::one())?;
    let o = net.add_output("o", Rational::one())?;
    let (mut src, mut dst) = (i, o);
    let mut wraps = Vec::new();
    let mut m = 0;
    while 2 * p < q {
        let a = net.add_splitter(&format!("a{m}"))?;
        let b = net.add_splitter(&format!("b{m}"))?;
        wraps.push((src, dst, a, b));
        (src, dst) = (a, b);
        p *= 2;
        m += 1;
    }
    let (p, q) = reduced(p, q)?;
    for &(s, d, a, b) in &wraps {
        link(&mut net, s, a);
        link(&mut net, b, d);
        link(&mut net, b, a);
    }
    let k = 64 - (q - 1).leading_zeros();
    let tree = gen_arborescence(&[p, q - p, (1u64 << k) - q], k)?;
    let mix = net.add_splitter("m")?;
    let ids: Vec<NodeId> = (0..tree.nodes.len())
        .map(|x| net.add_splitter(&if x == 0 { "r".to_string() } else { format!("r{x}") }))
        .collect::<Result<_, _>>()?;
    net.add_arc("bottleneck", src, mix)?;
    link(&mut net, mix, ids[0]);
    for (x, n) in tree.nodes.iter().enumerate() {
        if let Some(c) = n.children {
            link(&mut net, ids[x], ids[c[0]]);
            link(&mut net, ids[x], ids[c[1]]);
        }
    }
    let exits = [dst, mix, ids[0]];
    for (label, &exit) in exits.iter().enumerate() {
        let path = tree.leaves(label);
        for w in path.windows(2) {
            link(&mut net, ids[w[0]], ids[w[1]]);
        }
        if let Some(&end) = path.last() {
            link(&mut net, ids[end], exit);
        }
    }
    Ok(net)
}

/// The capacity gadget built from the binary expansion `0.x(y)^ω` of `p/q`,
/// with the period rotated to start with a 1 (dyadic values use the
/// expansion ending in `(1)^ω`). Splitters `u{j}` follow the bits, `v{j}`
/// collect the 0 bits back to `u1`, `w{j}` collect the 1 bits to the
/// output. Splitters with one entering and one leaving arc are contracted.
pub fn gen_capacity_binary(p: u64, q: u64) -> Result<SplitterNetwork, BalancerError> {
    let (p, q) = reduced(p, q)?;
    if q > 1 << 40 {
        return Err(arg(format!("denominator {q} above 2^40")));
    }
    let (mut x, mut y) = binary_expansion(&Rational::new(p as i64, q as i64)).map_err(|e| arg(e.to_string()))?;
    if y == [0] {
        let last = x.len() - 1;
        x[last] = 0;
        y = vec![1];
    } else {
        (x, y) = rotate_period_to_one(&x, &y);
    }
    let bits: Vec<u8> = x.iter().chain(&y).copied().collect();
    let l = bits.len();

    // Abstract graph: 0 = i, 1 = o, then u, v, w for j = 1..=l.
    let u = |j: usize| 2 + 3 * (j - 1);
    let v = |j: usize| 3 + 3 * (j - 1);
    let w = |j: usize| 4 + 3 * (j - 1);
    let mut names = vec!["i".to_string(), "o".to_string()];
    for j in 1..=l {
        names.extend([format!("u{j}"), format!("v{j}"), format!("w{j}")]);
    }
    let mut arcs: Vec<(usize, usize)> = vec![(0, v(l)), (v(1), u(1)), (w(l), 1), (u(l), u(x.len() + 1))];
    for j in 1..l {
        arcs.extend([(u(j), u(j + 1)), (v(j + 1), v(j)), (w(j), w(j + 1))]);
    }
    for j in 1..=l {
        arcs.push(if bits[j - 1] == 0 { (u(j), v(j)) } else { (u(j), w(j)) });
    }
    let (arcs, alive) = simplify(names.len(), arcs);

    let mut net = SplitterNetwork::new();
    let mut id = vec![usize::MAX; names.len()];
    id[0] = net.add_input("i", Rational::one())?;
    id[1] = net.add_output("o", Rational::one())?;
    for n in 2..names.len() {
        if alive[n] {
            id[n] = net.add_splitter(&names[n])?;
        }
    }
    for (t, h) in arcs {
        link(&mut net, id[t], id[h]);
    }
    Ok(net)
}

/// Drops splitters without entering arcs, then contracts splitters with a
/// single entering and a single leaving arc. Nodes 0 and 1 are terminals.
fn simplify(n: usize, mut arcs: Vec<(usize, usize)>) -> (Vec<(usize, usize)>, Vec<bool>) {
    let mut alive = vec![true; n];
    loop {
        let mut din = vec![0; n];
        let mut dout = vec![0; n];
        for &(t, h) in &arcs {
            dout[t] += 1;
            din[h] += 1;
        }
        let dead = (2..n).find(|&x| alive[x] && din[x] == 0);
        if let Some(x) = dead {
            alive[x] = false;
            arcs.retain(|&(t, _)| t != x);
            continue;
        }
        let pass = (2..n).find(|&x| alive[x] && din[x] == 1 && dout[x] == 1 && !arcs.contains(&(x, x)));
        let Some(x) = pass else { break };
        let a = arcs.iter().position(|&(_, h)| h == x).expect("one entering arc");
        let b = arcs.iter().position(|&(t, _)| t == x).expect("one leaving arc");
        let (t, h) = (arcs[a].0, arcs[b].1);
        arcs[a] = (t, h);
        arcs.remove(b);
        alive[x] = false;
    }
    (arcs, alive)
}

// ---------------------------------------------------------------------------
// Verification

/// Capacity vectors of dimension `dim`: all ones, all zeros, unit vectors,
/// every 0/1 vector when `dim ≤ 8`, then `random` vectors with entries in
/// `{0, 1/16, ..., 1}` drawn from `seed`. Repeats are removed.
pub fn capacity_suite(dim: usize, random: usize, seed: u64) -> Vec<Vec<Rational>> {
    let mut out: Vec<Vec<Rational>> = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |v: Vec<Rational>| {
        if seen.insert(v.clone()) {
            out.push(v);
        }
    };
    push(vec![Rational::one(); dim]);
    push(vec![Rational::zero(); dim]);
    for j in 0..dim {
        push((0..dim).map(|x| if x == j { Rational::one() } else { Rational::zero() }).collect());
    }
    if dim <= 8 {
        for mask in 0u32..1 << dim {
            push((0..dim).map(|x| Rational::from_integer(((mask >> x) & 1) as i64)).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        push((0..dim).map(|_| Rational::new(rng.gen_range(0..=16), 16)).collect());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub input_caps: Vec<Rational>,
    pub output_caps: Vec<Rational>,
    pub state: SteadyState,
    pub reason: String,
}

/// Outcome of checking a property over a capacity suite. A pass is
/// evidence over the listed vectors; a counterexample refutes the property
/// (steady-state throughputs at terminals are unique).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub property: &'static str,
    pub cases: usize,
    pub counterexample: Option<Counterexample>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

fn join_caps(v: &[Rational]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.counterexample {
            None => write!(f, "{}: pass (evidence from {} capacity vectors)", self.property, self.cases),
            Some(c) => write!(
                f,
                "{}: FAIL (counterexample) at inputs ({}) outputs ({}): {}",
                self.property,
                join_caps(&c.input_caps),
                join_caps(&c.output_caps),
                c.reason
            ),
        }
    }
}

fn real_terminals(net: &SplitterNetwork) -> (Vec<NodeId>, Vec<NodeId>) {
    let ins = net.inputs().into_iter().filter(|&v| !net.is_dummy_node(v)).collect();
    let outs = net.outputs().into_iter().filter(|&v| !net.is_dummy_node(v)).collect();
    (ins, outs)
}

/// Sets the capacities of the non-dummy terminals, normalizes and solves.
/// Returns the normalized network, the state and the throughputs of the
/// non-dummy input and output arcs.
pub fn solve_with_caps(
    net: &SplitterNetwork,
    input_caps: &[Rational],
    output_caps: &[Rational],
) -> Result<(SplitterNetwork, SteadyState, Vec<Rational>, Vec<Rational>), BalancerError> {
    let (ins, outs) = real_terminals(net);
    if ins.len() != input_caps.len() || outs.len() != output_caps.len() {
        return Err(arg(format!(
            "network has {} inputs and {} outputs, got {} and {} capacities",
            ins.len(),
            outs.len(),
            input_caps.len(),
            output_caps.len()
        )));
    }
    let mut g = net.clone();
    for (&v, c) in ins.iter().zip(input_caps).chain(outs.iter().zip(output_caps)) {
        g.set_cap(v, c.clone());
    }
    let g = g.normalize()?;
    let (st, _) = solve(&g)?;
    let tin = ins.iter().map(|&v| st.t[g.out_arcs(v)[0]].clone()).collect();
    let tout = outs.iter().map(|&v| st.t[g.in_arcs(v)[0]].clone()).collect();
    Ok((g, st, tin, tout))
}

fn run_suite(
    property: &'static str,
    net: &SplitterNetwork,
    suite: &[Vec<Rational>],
    split: impl Fn(&[Rational]) -> (Vec<Rational>, Vec<Rational>),
    judge: impl Fn(&[Rational], &[Rational], &[Rational], &[Rational]) -> Option<String>,
) -> Result<VerifyReport, BalancerError> {
    for caps in suite {
        let (ci, co) = split(caps);
        let (_, st, ti, to) = solve_with_caps(net, &ci, &co)?;
        if let Some(reason) = judge(&ci, &co, &ti, &to) {
            let counterexample = Some(Counterexample { input_caps: ci, output_caps: co, state: st, reason });
            return Ok(VerifyReport { property, cases: suite.len(), counterexample });
        }
    }
    Ok(VerifyReport { property, cases: suite.len(), counterexample: None })
}

fn min(a: &Rational, b: &Rational) -> Rational {
    if a <= b { a.clone() } else { b.clone() }
}

fn sum(v: &[Rational]) -> Rational {
    v.iter().sum()
}

/// Balancing: with every output capacity 1, the output throughputs are
/// equal. Each suite vector gives the input capacities.
pub fn verify_balancer(net: &SplitterNetwork, suite: &[Vec<Rational>]) -> Result<VerifyReport, BalancerError> {
    let n_out = real_terminals(net).1.len();
    run_suite(
        "balancer",
        net,
        suite,
        |c| (c.to_vec(), vec![Rational::one(); n_out]),
        |_, _, _, to| {
            let j = to.iter().position(|x| *x != to[0])?;
            Some(format!("output 0 carries {} but output {j} carries {}", to[0], to[j]))
        },
    )
}

/// Throughput-unlimited: the total throughput is `min{c(I), c(O)}`. Each
/// suite vector lists the input capacities then the output capacities.
pub fn verify_throughput_unlimited(net: &SplitterNetwork, suite: &[Vec<Rational>]) -> Result<VerifyReport, BalancerError> {
    let n_in = real_terminals(net).0.len();
    run_suite(
        "throughput-unlimited",
        net,
        suite,
        |c| (c[..n_in].to_vec(), c[n_in..].to_vec()),
        |ci, co, ti, _| {
            let (total, bound) = (sum(ti), min(&sum(ci), &sum(co)));
            (total != bound).then(|| format!("total throughput {total}, bound {bound}"))
        },
    )
}

/// Universal balancing, with `α` and `β` read off as the largest input and
/// output throughputs. Suite vectors are laid out as for
/// [`verify_throughput_unlimited`].
pub fn verify_universal(net: &SplitterNetwork, suite: &[Vec<Rational>]) -> Result<VerifyReport, BalancerError> {
    let n_in = real_terminals(net).0.len();
    run_suite(
        "universal",
        net,
        suite,
        |c| (c[..n_in].to_vec(), c[n_in..].to_vec()),
        |ci, co, ti, to| {
            let zero = Rational::zero();
            let alpha = ti.iter().max().unwrap_or(&zero);
            let beta = to.iter().max().unwrap_or(&zero);
            if let Some(j) = (0..ti.len()).find(|&j| ti[j] != min(&ci[j], alpha)) {
                return Some(format!("input {j} carries {}, expected min({}, {alpha})", ti[j], ci[j]));
            }
            if let Some(j) = (0..to.len()).find(|&j| to[j] != min(&co[j], beta)) {
                return Some(format!("output {j} carries {}, expected min({}, {beta})", to[j], co[j]));
            }
            let (total, bound) = (sum(ti), min(&sum(ci), &sum(co)));
            (total != bound).then(|| format!("total throughput {total}, bound {bound}"))
        },
    )
}

// ---------------------------------------------------------------------------
// Lower bounds

/// `Σ_{k≥1} k/2^k · bit_k(r)` for `r` in `[0, 1]`, summed in closed form
/// over the eventually periodic expansion. This is the minimum expected
/// number of fair coin tosses spent on an outcome of probability `r`.
pub fn toss_factor(r: &Rational) -> Result<Rational, BalancerError> {
    if !r.in_unit_interval() {
        return Err(arg(format!("{r} outside [0,1]")));
    }
    if r.is_one() {
        return Ok(Rational::zero());
    }
    let (x, y) = binary_expansion(r).map_err(|e| arg(e.to_string()))?;
    let half_pow = |n: usize| Rational::one() / Rational::one().shl(n as u32);
    let mut total = Rational::zero();
    for (j, &b) in x.iter().enumerate() {
        if b == 1 {
            total += Rational::from_integer(j as i64 + 1) * half_pow(j + 1);
        }
    }
    // Position a+i+mL contributes (a+i+mL)/2^(a+i+mL) for every m ≥ 0.
    let (a, len) = (x.len(), y.len());
    let rho = half_pow(len);
    let one_minus = Rational::one() - &rho;
    let geo = one_minus.recip();
    let dgeo = &rho / (&one_minus * &one_minus);
    for (i, &b) in y.iter().enumerate() {
        if b == 1 {
            let pos = a + i + 1;
            let base = Rational::from_integer(pos as i64) * &geo + Rational::from_integer(len as i64) * &dgeo;
            total += base * half_pow(pos);
        }
    }
    Ok(total)
}

/// Lower bound on the number of splitters of an `(n_in, n_out)`-balancer:
/// `½·|I|·|O|·f(1/|O|)` for balancers without saturated arcs at unit
/// input capacities (`weak`), `¼·|I|·|O|·f(1/|O|)` in general, where `f` is
/// [`toss_factor`].
pub fn lower_bound(n_in: u64, n_out: u64, weak: bool) -> Result<Rational, BalancerError> {
    if n_in == 0 || n_out == 0 {
        return Err(arg("need at least one input and one output"));
    }
    let f = toss_factor(&Rational::new(1, n_out as i64))?;
    let scale = Rational::new(1, if weak { 2 } else { 4 });
    Ok(scale * Rational::from_integer(n_in as i64) * Rational::from_integer(n_out as i64) * f)
}
