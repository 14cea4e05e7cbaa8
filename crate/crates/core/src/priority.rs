//! Priority splitters: the rules with preferred arcs, a solver for them,
//! priority choices read off maximum flows, the saturating balancer and the
//! gadgets of the reduction from 3SAT.

use std::collections::VecDeque;

use thiserror::Error;

use crate::balancers::{butterfly, link, terminals};
use crate::lp::{lexicographic, pss_with, LpOutcome, Relation};
use crate::network::{ArcId, NetworkError, NodeId, SplitterNetwork};
use crate::rational::Rational;
use crate::steady_state::{check_rules, require_valid, reverse_state, CheckMode, Rule, RuleViolation, SolveError, SteadyState};

/// Preferred outgoing and incoming arc of each splitter, indexed by node
/// id. Nodes past the end of either vector have no preference.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PriorityAssignment {
    pub out_prio: Vec<Option<ArcId>>,
    pub in_prio: Vec<Option<ArcId>>,
}

impl PriorityAssignment {
    /// No preference anywhere.
    pub fn fair(net: &SplitterNetwork) -> Self {
        let n = net.num_nodes();
        PriorityAssignment { out_prio: vec![None; n], in_prio: vec![None; n] }
    }

    /// The `inprio`/`outprio` attributes stored in the network.
    pub fn from_network(net: &SplitterNetwork) -> Self {
        PriorityAssignment {
            out_prio: net.nodes().iter().map(|n| n.out_prio).collect(),
            in_prio: net.nodes().iter().map(|n| n.in_prio).collect(),
        }
    }

    pub fn out_of(&self, s: NodeId) -> Option<ArcId> {
        self.out_prio.get(s).copied().flatten()
    }

    pub fn in_of(&self, s: NodeId) -> Option<ArcId> {
        self.in_prio.get(s).copied().flatten()
    }

    pub fn set_out(&mut self, s: NodeId, e: Option<ArcId>) {
        if self.out_prio.len() <= s {
            self.out_prio.resize(s + 1, None);
        }
        self.out_prio[s] = e;
    }

    pub fn set_in(&mut self, s: NodeId, e: Option<ArcId>) {
        if self.in_prio.len() <= s {
            self.in_prio.resize(s + 1, None);
        }
        self.in_prio[s] = e;
    }

    pub fn is_fair(&self, s: NodeId) -> bool {
        self.out_of(s).is_none() && self.in_of(s).is_none()
    }

    /// Writes the assignment into the network's node attributes.
    pub fn store(&self, net: &mut SplitterNetwork) {
        for v in 0..net.num_nodes() {
            net.set_out_prio(v, self.out_of(v));
            net.set_in_prio(v, self.in_of(v));
        }
    }

    /// The assignment for the reversed network.
    pub fn reversed(&self) -> Self {
        PriorityAssignment { out_prio: self.in_prio.clone(), in_prio: self.out_prio.clone() }
    }

    /// Checks `p⁺(s) ∈ δ⁺(s)` and `p⁻(s) ∈ δ⁻(s)`.
    pub fn validate(&self, net: &SplitterNetwork) -> Result<(), String> {
        let n = net.num_nodes();
        for (v, p) in self.out_prio.iter().enumerate() {
            if let Some(e) = *p {
                if v >= n || e >= net.num_arcs() || net.arc(e).tail != v {
                    return Err(format!("out-priority of node {v} is not a leaving arc"));
                }
            }
        }
        for (v, p) in self.in_prio.iter().enumerate() {
            if let Some(e) = *p {
                if v >= n || e >= net.num_arcs() || net.arc(e).head != v {
                    return Err(format!("in-priority of node {v} is not an entering arc"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PriorityError {
    #[error("{0}")]
    Argument(String),
    #[error("cnf line {line}: {msg}")]
    Cnf { line: usize, msg: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Lists the violated rules of a steady-state under priorities. Splitters
/// without preferences are judged by the plain sibling rules, so with no
/// preference anywhere this is `check_rules(.., CheckMode::R8)`.
pub fn check_priority_rules(net: &SplitterNetwork, prio: &PriorityAssignment, state: &SteadyState) -> Vec<RuleViolation> {
    check_with(net, prio, state, CheckMode::R8)
}

fn check_with(net: &SplitterNetwork, prio: &PriorityAssignment, state: &SteadyState, mode: CheckMode) -> Vec<RuleViolation> {
    let base = check_rules(net, state, mode);
    if state.t.len() != net.num_arcs() || state.fluid.len() != net.num_arcs() {
        return base;
    }
    let mut out: Vec<RuleViolation> =
        base.iter().filter(|v| matches!(v.rule, Rule::R1 | Rule::R2 | Rule::R3 | Rule::R4 | Rule::R5)).cloned().collect();
    let (t, f) = (&state.t, &state.fluid);
    let an = |e: ArcId| format!("arc `{}`", net.arc(e).name);
    let mut push = |rule, e: ArcId, detail: String| out.push(RuleViolation { rule, subject: an(e), detail });
    for s in net.splitters() {
        let ins = net.in_arcs(s);
        if ins.len() != 2 {
            continue;
        }
        let p = prio.in_of(s);
        for (a, b) in [(ins[0], ins[1]), (ins[1], ins[0])] {
            if f[a] {
                continue;
            }
            match p {
                None if t[a] < t[b] => {
                    push(Rule::R6, a, format!("saturated incoming arc at {} below sibling at {}", t[a], t[b]))
                }
                Some(x) if x == a => {
                    if !t[a].is_one() && !t[b].is_zero() {
                        push(Rule::P6, a, format!("preferred saturated arc at {} while sibling carries {}", t[a], t[b]));
                    } else if t[a] < t[b] {
                        push(Rule::P6, a, format!("preferred saturated arc at {} below sibling at {}", t[a], t[b]));
                    }
                }
                _ => {}
            }
        }
    }
    for s in net.splitters() {
        let outs = net.out_arcs(s);
        if outs.len() != 2 {
            continue;
        }
        let p = prio.out_of(s);
        for (a, b) in [(outs[0], outs[1]), (outs[1], outs[0])] {
            if !f[a] {
                continue;
            }
            match p {
                None if t[a] < t[b] => {
                    push(Rule::R7, a, format!("fluid outgoing arc at {} below sibling at {}", t[a], t[b]))
                }
                Some(x) if x == a => {
                    if !t[a].is_one() && !t[b].is_zero() {
                        push(Rule::P7, a, format!("preferred fluid arc at {} while sibling carries {}", t[a], t[b]));
                    } else if t[a] < t[b] {
                        push(Rule::P7, a, format!("preferred fluid arc at {} below sibling at {}", t[a], t[b]));
                    }
                }
                _ => {}
            }
        }
    }
    out.extend(base.into_iter().filter(|v| matches!(v.rule, Rule::R8 | Rule::R8S | Rule::R9)));
    out
}

/// How a preference is enforced. `Block` pins the sibling at 0 and
/// `Full` pins the preferred arc at 1. A preference moves from `Block` to
/// `Full` when its arc reaches 1. Fluid arcs only gain throughput, so an
/// out-preference stays there; saturated arcs get pulled back, so an
/// in-preference moves on to `Final` (the sibling at 0 for good) once the
/// sibling carries nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Block,
    Full,
    Final,
}

struct Modes {
    out: Vec<Mode>,
    inn: Vec<Mode>,
}

fn priority_pss(
    net: &SplitterNetwork,
    prio: &PriorityAssignment,
    fluid: &[bool],
    lower: &[Option<Rational>],
    modes: &Modes,
) -> crate::lp::LinearProgram {
    let upper = vec![None; net.num_arcs()];
    let mut lp = pss_with(net, fluid, lower, &upper, false);
    let one = Rational::one;
    let le = |lp: &mut crate::lp::LinearProgram, small: ArcId, big: ArcId| {
        lp.add(vec![(small, one()), (big, -one())], Relation::Le, Rational::zero())
    };
    let pin = |lp: &mut crate::lp::LinearProgram, e: ArcId, v: Rational| lp.add(vec![(e, one())], Relation::Eq, v);
    for s in net.splitters() {
        let ins = net.in_arcs(s);
        if ins.len() == 2 {
            let p = prio.in_of(s);
            for (a, b) in [(ins[0], ins[1]), (ins[1], ins[0])] {
                if fluid[a] {
                    continue;
                }
                if p != Some(b) {
                    le(&mut lp, b, a);
                }
                if p == Some(a) {
                    if modes.inn[s] == Mode::Full {
                        pin(&mut lp, a, one());
                    } else {
                        pin(&mut lp, b, Rational::zero());
                    }
                }
            }
        }
        let outs = net.out_arcs(s);
        if outs.len() == 2 {
            let p = prio.out_of(s);
            for (a, b) in [(outs[0], outs[1]), (outs[1], outs[0])] {
                if !fluid[a] {
                    continue;
                }
                if p != Some(b) {
                    le(&mut lp, b, a);
                }
                if p == Some(a) {
                    if modes.out[s] == Mode::Full {
                        pin(&mut lp, a, one());
                    } else {
                        pin(&mut lp, b, Rational::zero());
                    }
                }
            }
        }
    }
    lp
}

/// Advances the mode of every preference whose arc is on the side the
/// rules constrain. Returns whether anything changed.
fn release(net: &SplitterNetwork, prio: &PriorityAssignment, st: &SteadyState, modes: &mut Modes) -> bool {
    let step = |mode: &mut Mode, e: ArcId, w: Option<ArcId>| {
        let next = match *mode {
            Mode::Block if st.t[e].is_one() => Mode::Full,
            Mode::Full if w.is_some_and(|w| st.t[w].is_zero()) => Mode::Final,
            m => m,
        };
        std::mem::replace(mode, next) != next
    };
    let mut changed = false;
    for s in net.splitters() {
        if let Some(e) = prio.out_of(s).filter(|&e| st.fluid[e]) {
            changed |= step(&mut modes.out[s], e, None);
        }
        if let Some(e) = prio.in_of(s).filter(|&e| !st.fluid[e]) {
            changed |= step(&mut modes.inn[s], e, net.in_partner(e));
        }
    }
    changed
}

/// At the first splitter holding excess, an arc whose saturation keeps a
/// pre-steady-state under the priorities. The order of the candidates is
/// that of the fair algorithm; `None` when no splitter holds excess.
fn removable(net: &SplitterNetwork, prio: &PriorityAssignment, st: &SteadyState) -> Result<Option<ArcId>, SolveError> {
    let (t, f) = (&st.t, &st.fluid);
    let Some(s) = net.splitters().into_iter().find(|&s| {
        let tin: Rational = net.in_arcs(s).iter().map(|&e| &t[e]).sum();
        let tout: Rational = net.out_arcs(s).iter().map(|&e| &t[e]).sum();
        tin > tout
    }) else {
        return Ok(None);
    };
    let sorted = |arcs: &[ArcId]| {
        let mut v = arcs.to_vec();
        v.sort_by(|&a, &b| t[a].cmp(&t[b]).then(a.cmp(&b)));
        v
    };
    let ins = sorted(net.in_arcs(s));
    let outs = sorted(net.out_arcs(s));
    let mut cands: Vec<ArcId> = Vec::new();
    cands.extend(outs.iter().filter(|&&e| f[e] && net.in_partner(e).is_some_and(|p| !f[p] && t[p] == t[e])));
    cands.extend(outs.iter().filter(|&&e| f[e] && net.is_output_arc(e) && t[e] == net.arc_cap(e)));
    if outs.iter().all(|&e| !f[e] || t[e].is_one()) {
        let (e1, e2) = (ins[0], ins[1]);
        if f[e2] {
            cands.push(e2);
        }
        if f[e1] && t[e1] == t[e2] {
            cands.push(e1);
        }
    }
    cands.extend(outs.iter().filter(|&&e| f[e]));
    cands.extend(ins.iter().rev().filter(|&&e| f[e]));
    for e in cands {
        let mut next = st.clone();
        next.fluid[e] = false;
        if check_with(net, prio, &next, CheckMode::Pre).is_empty() {
            return Ok(Some(e));
        }
    }
    Err(SolveError::Internal(format!("no arc out of or into `{}` can be saturated", net.node(s).name)))
}

/// The LP loop from fluid set `fluid`, keeping `t ≥ lower` on arcs while
/// they stay fluid.
fn run(
    net: &SplitterNetwork,
    prio: &PriorityAssignment,
    lower: Vec<Option<Rational>>,
    mut fluid: Vec<bool>,
) -> Result<SteadyState, SolveError> {
    require_valid(net)?;
    prio.validate(net).map_err(SolveError::InvalidNetwork)?;
    let m = net.num_arcs();
    let n = net.num_nodes();
    let mut modes = Modes { out: vec![Mode::Block; n], inn: vec![Mode::Block; n] };
    for _ in 0..m + 3 * n + 2 {
        let lp = priority_pss(net, prio, &fluid, &lower, &modes);
        let secondary: Vec<Rational> = (0..m).map(|e| if fluid[e] { Rational::one() } else { -Rational::one() }).collect();
        let LpOutcome::Optimal { x, .. } = lexicographic(&lp, &secondary) else {
            return Err(SolveError::Internal("priority system has no optimum".into()));
        };
        let st = SteadyState { t: x, fluid: fluid.clone() };
        if release(net, prio, &st, &mut modes) {
            continue;
        }
        match removable(net, prio, &st)? {
            None => return Ok(st),
            Some(e) => {
                fluid[e] = false;
                release(net, prio, &SteadyState { t: st.t, fluid: fluid.clone() }, &mut modes);
            }
        }
    }
    Err(SolveError::Internal("iteration bound exceeded".into()))
}

/// A steady-state under the priorities, by the LP-based pre-steady-state
/// algorithm. Each preference is enforced as "sibling at 0" until the
/// preferred arc reaches 1, then as "preferred arc at 1".
pub fn priority_solve(net: &SplitterNetwork, prio: &PriorityAssignment) -> Result<SteadyState, SolveError> {
    let m = net.num_arcs();
    let start = crate::lp::initial_pre_steady_state(net);
    run(net, prio, start.t.into_iter().map(Some).collect(), vec![true; m])
}

/// Which preferences `optimize_priorities` may choose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorityMode {
    /// Both sides are chosen.
    All,
    /// Out-priorities are chosen; in-priorities come from the argument.
    OutOnly,
    /// In-priorities are chosen; out-priorities come from the argument.
    InOnly,
}

fn require_unit(net: &SplitterNetwork) -> Result<(), SolveError> {
    for v in net.inputs().into_iter().chain(net.outputs()) {
        if !net.is_dummy_node(v) && !net.node(v).cap.is_one() {
            return Err(SolveError::Unsupported(format!(
                "terminal `{}` has capacity {}; choosing priorities is only supported with unit capacities",
                net.node(v).name,
                net.node(v).cap
            )));
        }
    }
    Ok(())
}

/// Residual arcs leaving `u` as `(arc, next node)`, by increasing arc id.
fn residual_from(net: &SplitterNetwork, x: &[bool], u: NodeId) -> Vec<(ArcId, NodeId)> {
    let mut v: Vec<(ArcId, NodeId)> = net
        .out_arcs(u)
        .iter()
        .filter(|&&e| !x[e] && net.arc_cap(e).is_positive())
        .map(|&e| (e, net.arc(e).head))
        .chain(net.in_arcs(u).iter().filter(|&&e| x[e]).map(|&e| (e, net.arc(e).tail)))
        .collect();
    v.sort();
    v
}

/// BFS over the residual graph from the inputs with supply left, that is
/// from a source joined to each input by an arc of its capacity. Returns
/// the predecessor arc of each reached node (those inputs map to `None`)
/// and the first output reached, if `stop_at_output`.
fn residual_bfs(net: &SplitterNetwork, x: &[bool], stop_at_output: bool) -> (Vec<Option<Option<ArcId>>>, Option<NodeId>) {
    let mut pred: Vec<Option<Option<ArcId>>> = vec![None; net.num_nodes()];
    let mut queue = VecDeque::new();
    for i in net.inputs() {
        if net.out_arcs(i).iter().any(|&e| !x[e] && net.arc_cap(e).is_positive()) {
            pred[i] = Some(None);
            queue.push_back(i);
        }
    }
    while let Some(u) = queue.pop_front() {
        for (e, w) in residual_from(net, x, u) {
            if pred[w].is_some() {
                continue;
            }
            pred[w] = Some(Some(e));
            if stop_at_output && net.outputs().contains(&w) {
                return (pred, Some(w));
            }
            queue.push_back(w);
        }
    }
    (pred, None)
}

/// An integral maximum flow from the inputs to the outputs with capacity 1
/// on every arc of positive capacity: shortest augmenting paths, scanning
/// residual arcs by increasing id.
pub fn unit_max_flow(net: &SplitterNetwork) -> Vec<bool> {
    let mut x = vec![false; net.num_arcs()];
    loop {
        let (pred, Some(mut v)) = residual_bfs(net, &x, true) else {
            return x;
        };
        while let Some(Some(e)) = pred[v] {
            x[e] = !x[e];
            let a = net.arc(e);
            v = if a.head == v { a.tail } else { a.head };
        }
    }
}

/// The side of a splitter carrying the flow when its two arcs differ.
fn preferred(x: &[bool], arcs: &[ArcId]) -> Option<ArcId> {
    match arcs {
        [a, b] if x[*a] != x[*b] => Some(if x[*a] { *a } else { *b }),
        _ => None,
    }
}

/// Chooses priorities maximizing the global throughput when every
/// terminal has capacity 1. The throughput is the value of a maximum flow;
/// `given` supplies the side that `mode` keeps fixed.
pub fn optimize_priorities(
    net: &SplitterNetwork,
    given: &PriorityAssignment,
    mode: PriorityMode,
) -> Result<(PriorityAssignment, SteadyState, Rational), SolveError> {
    require_valid(net)?;
    require_unit(net)?;
    match mode {
        PriorityMode::All => {
            let x = unit_max_flow(net);
            let (pred, _) = residual_bfs(net, &x, false);
            let mut prio = PriorityAssignment::fair(net);
            for s in net.splitters() {
                prio.set_out(s, preferred(&x, net.out_arcs(s)));
                prio.set_in(s, preferred(&x, net.in_arcs(s)));
            }
            let t: Vec<Rational> = x.iter().map(|&b| if b { Rational::one() } else { Rational::zero() }).collect();
            let fluid = (0..x.len()).map(|e| x[e] || pred[net.arc(e).tail].is_none()).collect();
            let st = SteadyState { t, fluid };
            let total = st.total_output(net);
            Ok((prio, st, total))
        }
        PriorityMode::OutOnly => {
            let x = unit_max_flow(net);
            let mut prio = PriorityAssignment::fair(net);
            for s in net.splitters() {
                prio.set_out(s, preferred(&x, net.out_arcs(s)));
                prio.set_in(s, given.in_of(s));
            }
            let lower = x.iter().map(|&b| Some(if b { Rational::one() } else { Rational::zero() })).collect();
            let st = run(net, &prio, lower, vec![true; x.len()])?;
            let total = st.total_output(net);
            Ok((prio, st, total))
        }
        PriorityMode::InOnly => {
            let (prio, st, total) = optimize_priorities(&net.reverse(), &given.reversed(), PriorityMode::OutOnly)?;
            Ok((prio.reversed(), reverse_state(&st), total))
        }
    }
}

/// The saturating `(2^k, 2^k)`-balancer: a half-grid of priority splitters
/// pushing the flow to the top rows, a simple balancer of order `k-1` from
/// the top rows to the bottom rows, and a column of fair splitters behind
/// the bottleneck arcs.
pub fn gen_saturating_balancer(k: u32) -> Result<(SplitterNetwork, PriorityAssignment), PriorityError> {
    if !(2..=8).contains(&k) {
        return Err(PriorityError::Argument(format!("order {k} outside 2..=8")));
    }
    let n = 1usize << k;
    let h = n / 2;
    let mut net = SplitterNetwork::new();
    let (ins, outs) = terminals(&mut net, n);
    let mut grid = vec![Vec::new(); n];
    for (x, col) in grid.iter_mut().enumerate().skip(1) {
        *col = (0..=x).map(|y| if y == 0 { 0 } else { net.add_splitter(&format!("x{x}y{y}")).expect("fresh name") }).collect();
    }
    let a: Vec<NodeId> = (0..=n).map(|y| if y > h { net.add_splitter(&format!("a{y}")).expect("fresh name") } else { 0 }).collect();
    let b: Vec<NodeId> = (0..=h).map(|y| if y > 0 { net.add_splitter(&format!("b{y}")).expect("fresh name") } else { 0 }).collect();
    let bits: Vec<u32> = (0..k - 2).collect();
    let lv = butterfly(&mut net, "", h / 2, &bits);
    let c: Vec<NodeId> = (0..=h).map(|m| if m > 0 { net.add_splitter(&format!("c{m}")).expect("fresh name") } else { 0 }).collect();
    let mut prio = PriorityAssignment::fair(&net);

    let mut below = vec![vec![None; n]; n];
    link(&mut net, ins[0], grid[1][1]);
    for x in 1..n {
        below[x][1] = Some(link(&mut net, ins[x], grid[x][1]));
    }
    let mut row_end = vec![None; h + 1];
    for x in 1..n {
        for y in 1..=x {
            let s = grid[x][y];
            let pushed = if y < x {
                let e = link(&mut net, s, grid[x][y + 1]);
                below[x][y + 1] = Some(e);
                e
            } else {
                link(&mut net, s, if x < n - 1 { grid[x + 1][x + 1] } else { a[n] })
            };
            prio.set_out(s, Some(pushed));
            let right = link(&mut net, s, if x < n - 1 { grid[x + 1][y] } else if y <= h { b[y] } else { a[y] });
            if x == n - 1 && y <= h {
                row_end[y] = Some(right);
            }
        }
    }
    for x in 1..n {
        for y in 1..=x {
            prio.set_in(grid[x][y], below[x][y]);
        }
    }
    for y in h + 1..=n {
        let e = link(&mut net, a[y], lv[0][(n - y) / 2]);
        prio.set_out(a[y], Some(e));
        link(&mut net, a[y], c[y - h]);
    }
    for (j, &s) in lv[lv.len() - 1].iter().enumerate() {
        link(&mut net, s, b[h - 2 * j]);
        link(&mut net, s, b[h - 2 * j - 1]);
    }
    for y in 1..=h {
        prio.set_in(b[y], row_end[y]);
        link(&mut net, b[y], c[y]);
    }
    for m in 1..=h {
        link(&mut net, c[m], outs[2 * m - 2]);
        link(&mut net, c[m], outs[2 * m - 1]);
    }
    prio.store(&mut net);
    Ok((net, prio))
}

/// A 3-CNF formula; literal `v` is variable `v`, `-v` its negation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cnf {
    pub num_vars: usize,
    pub clauses: Vec<[i64; 3]>,
}

impl Cnf {
    /// Reads DIMACS: `c` comment lines, a `p cnf V C` header, then
    /// clauses of three literals each terminated by 0.
    pub fn parse_dimacs(text: &str) -> Result<Cnf, PriorityError> {
        let err = |line, msg: String| PriorityError::Cnf { line, msg };
        let mut header = None;
        let mut clauses = Vec::new();
        let mut cur: Vec<i64> = Vec::new();
        let mut last = 0;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('c') {
                continue;
            }
            if l.starts_with('%') {
                break;
            }
            if l.starts_with('p') {
                let f: Vec<&str> = l.split_whitespace().collect();
                if header.is_some() || f.len() != 4 || f[1] != "cnf" {
                    return Err(err(line, "expected one header `p cnf VARS CLAUSES`".into()));
                }
                let v: usize = f[2].parse().map_err(|_| err(line, format!("bad variable count `{}`", f[2])))?;
                let c: usize = f[3].parse().map_err(|_| err(line, format!("bad clause count `{}`", f[3])))?;
                header = Some((v, c));
                continue;
            }
            let Some((nv, _)) = header else {
                return Err(err(line, "clause before the `p cnf` header".into()));
            };
            for tok in l.split_whitespace() {
                let lit: i64 = tok.parse().map_err(|_| err(line, format!("bad literal `{tok}`")))?;
                if lit == 0 {
                    let Ok(cl) = <[i64; 3]>::try_from(cur.as_slice()) else {
                        return Err(err(line, format!("clause has {} literals, expected 3", cur.len())));
                    };
                    clauses.push(cl);
                    cur.clear();
                } else if lit.unsigned_abs() as usize > nv {
                    return Err(err(line, format!("literal {lit} exceeds variable count {nv}")));
                } else {
                    cur.push(lit);
                }
            }
            last = line;
        }
        let Some((num_vars, nc)) = header else {
            return Err(err(0, "missing `p cnf` header".into()));
        };
        if !cur.is_empty() {
            return Err(err(last, "last clause is not terminated by 0".into()));
        }
        if clauses.len() != nc {
            return Err(err(last, format!("header announces {nc} clauses, found {}", clauses.len())));
        }
        let cnf = Cnf { num_vars, clauses };
        cnf.check_occurrences().map_err(|m| err(0, m))?;
        Ok(cnf)
    }

    /// Each variable may occur at most twice positively and twice
    /// negatively.
    pub fn check_occurrences(&self) -> Result<(), String> {
        let mut pos = vec![0; self.num_vars + 1];
        let mut neg = vec![0; self.num_vars + 1];
        for cl in &self.clauses {
            for &l in cl {
                let v = l.unsigned_abs() as usize;
                if v == 0 || v > self.num_vars {
                    return Err(format!("literal {l} out of range"));
                }
                let c = if l > 0 { &mut pos[v] } else { &mut neg[v] };
                *c += 1;
                if *c > 2 {
                    return Err(format!("variable {v} occurs more than twice {}", if l > 0 { "positively" } else { "negatively" }));
                }
            }
        }
        Ok(())
    }

    pub fn satisfied_by(&self, values: &[bool]) -> bool {
        self.clauses.iter().all(|cl| cl.iter().any(|&l| values[l.unsigned_abs() as usize - 1] == (l > 0)))
    }
}

/// Handles of one variable gadget: the splitter `x?` with its arcs toward
/// the left (`a`) and the right (`j`), and the splitters whose leaving arcs
/// carry the literal `x` (`b`) and `x̄` (`k`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableGadget {
    pub chooser: NodeId,
    pub left: ArcId,
    pub right: ArcId,
    pub pos: NodeId,
    pub neg: NodeId,
}

fn add_variable_gadget(net: &mut SplitterNetwork, p: &str) -> Result<VariableGadget, NetworkError> {
    for s in ["s1", "s2", "s3"] {
        net.add_input(&format!("{p}{s}"), Rational::one())?;
    }
    for s in ["x", "a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"] {
        net.add_splitter(&format!("{p}{s}"))?;
    }
    let mut arc = |u: &str, v: &str| net.connect(&format!("{p}{u}"), &format!("{p}{v}"));
    arc("s1", "x")?;
    let left = arc("x", "a")?;
    let right = arc("x", "j")?;
    for (u, v) in [
        ("a", "b"), ("a", "c"), ("c", "d"), ("d", "b"), ("e", "c"), ("e", "d"), ("f", "e"), ("f", "g"),
        ("g", "h"), ("g", "i"), ("h", "i"), ("j", "h"), ("j", "k"), ("i", "k"), ("s2", "f"), ("s3", "f"),
    ] {
        arc(u, v)?;
    }
    let id = |s: &str| net.node_id(&format!("{p}{s}"));
    Ok(VariableGadget { chooser: id("x")?, left, right, pos: id("b")?, neg: id("k")? })
}

/// Splitters receiving the three literal arcs of a clause gadget.
fn add_clause_gadget(net: &mut SplitterNetwork, p: &str) -> Result<[NodeId; 3], NetworkError> {
    net.add_input(&format!("{p}s"), Rational::one())?;
    for o in ["t1", "t2", "t3", "t4", "t5"] {
        net.add_output(&format!("{p}{o}"), Rational::one())?;
    }
    for s in ["p", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "m", "n", "o", "q"] {
        net.add_splitter(&format!("{p}{s}"))?;
    }
    for (u, v) in [
        ("p", "t1"), ("b", "t2"), ("c", "t3"), ("b", "p"), ("e", "p"), ("c", "f"), ("f", "t4"), ("f", "b"),
        ("d", "e"), ("g", "d"), ("h", "e"), ("i", "f"), ("g", "h"), ("i", "t5"), ("k", "h"), ("j", "g"),
        ("j", "k"), ("n", "j"), ("n", "m"), ("d", "m"), ("m", "q"), ("o", "n"), ("o", "k"), ("q", "o"), ("s", "q"),
    ] {
        net.connect(&format!("{p}{u}"), &format!("{p}{v}"))?;
    }
    let id = |s: &str| net.node_id(&format!("{p}{s}"));
    Ok([id("c")?, id("i")?, id("i")?])
}

/// The variable gadget alone, its leaving arcs ending in outputs `t1`,
/// `t2` (literal `x`) and `t3`, `t4` (literal `x̄`) of capacity 1.
pub fn gen_variable_gadget() -> Result<(SplitterNetwork, VariableGadget), PriorityError> {
    let mut net = SplitterNetwork::new();
    let g = add_variable_gadget(&mut net, "")?;
    for (o, s) in [("t1", "b"), ("t2", "b"), ("t3", "k"), ("t4", "k")] {
        net.add_output(o, Rational::one())?;
        net.connect(s, o)?;
    }
    Ok((net, g))
}

/// The clause gadget alone, its literal arcs fed by inputs `l1`, `l2`,
/// `l3` of capacities `f`. The clause input is `s`.
pub fn gen_clause_gadget(f: [Rational; 3]) -> Result<SplitterNetwork, PriorityError> {
    let mut net = SplitterNetwork::new();
    let entries = add_clause_gadget(&mut net, "")?;
    for (j, (cap, &head)) in f.into_iter().zip(&entries).enumerate() {
        if !cap.in_unit_interval() {
            return Err(PriorityError::Argument(format!("literal throughput {cap} outside [0,1]")));
        }
        let i = net.add_input(&format!("l{}", j + 1), cap)?;
        link(&mut net, i, head);
    }
    Ok(net)
}

/// The network of the reduction from 3SAT, with the splitters whose
/// out-priority is free and the throughput reached exactly when the
/// formula is satisfiable.
#[derive(Debug, Clone)]
pub struct SatReduction {
    pub net: SplitterNetwork,
    pub variables: Vec<VariableGadget>,
    pub target: Rational,
}

impl SatReduction {
    pub fn free_splitters(&self) -> Vec<NodeId> {
        self.variables.iter().map(|g| g.chooser).collect()
    }

    /// Out-priority toward the right for true, the left for false, none
    /// for `None`.
    pub fn priorities(&self, values: &[Option<bool>]) -> PriorityAssignment {
        let mut prio = PriorityAssignment::fair(&self.net);
        for (g, v) in self.variables.iter().zip(values) {
            prio.set_out(g.chooser, v.map(|b| if b { g.right } else { g.left }));
        }
        prio
    }
}

pub fn gen_sat_reduction(cnf: &Cnf) -> Result<SatReduction, PriorityError> {
    cnf.check_occurrences().map_err(PriorityError::Argument)?;
    let mut net = SplitterNetwork::new();
    let mut variables = Vec::with_capacity(cnf.num_vars);
    for v in 1..=cnf.num_vars {
        variables.push(add_variable_gadget(&mut net, &format!("x{v}."))?);
    }
    let mut used = vec![[0usize; 2]; cnf.num_vars];
    for (j, cl) in cnf.clauses.iter().enumerate() {
        let entries = add_clause_gadget(&mut net, &format!("c{}.", j + 1))?;
        for (&lit, &head) in cl.iter().zip(&entries) {
            let v = lit.unsigned_abs() as usize - 1;
            let g = &variables[v];
            let side = usize::from(lit < 0);
            used[v][side] += 1;
            link(&mut net, if lit > 0 { g.pos } else { g.neg }, head);
        }
    }
    for (v, g) in variables.iter().enumerate() {
        for (side, tail, first) in [(0, g.pos, 1), (1, g.neg, 3)] {
            for r in used[v][side]..2 {
                let o = net.add_output(&format!("x{}.t{}", v + 1, first + r), Rational::one())?;
                link(&mut net, tail, o);
            }
        }
    }
    let target = Rational::new(11, 4) * Rational::from_integer(cnf.num_vars as i64)
        + Rational::new(23, 32) * Rational::from_integer(cnf.clauses.len() as i64);
    Ok(SatReduction { net, variables, target })
}
