//! The blocking-flow-like solver: repeatedly build the residual graph of a
//! sub-steady-state, then either push along a stationary circulation or
//! saturate an arc, until the vertex standing for all terminals is a sink.

use std::collections::{HashMap, VecDeque};

use crate::circulation::{lowest_sink_scc, stationary_circulation_on, CoupledPartition, Digraph};
use crate::network::{ArcId, SplitterNetwork};
use crate::rational::Rational;

use super::{require_valid, SolveError, SteadyState};

/// Per-arc facts about the network that the solver consults repeatedly.
pub(crate) struct Topo {
    pub cap: Vec<Rational>,
    pub in_partner: Vec<Option<ArcId>>,
    pub out_partner: Vec<Option<ArcId>>,
    pub input_arc: Vec<bool>,
    pub output_arc: Vec<bool>,
    pub tail_v: Vec<usize>,
    pub head_v: Vec<usize>,
    /// Residual vertex count: `z` plus one per splitter.
    pub nv: usize,
    pub splitter_in: Vec<Vec<ArcId>>,
}

impl Topo {
    pub fn new(net: &SplitterNetwork) -> Self {
        let m = net.num_arcs();
        let mut vertex = vec![0usize; net.num_nodes()];
        let splitters = net.splitters();
        for (k, &s) in splitters.iter().enumerate() {
            vertex[s] = k + 1;
        }
        Topo {
            cap: (0..m).map(|e| net.arc_cap(e)).collect(),
            in_partner: (0..m).map(|e| net.in_partner(e)).collect(),
            out_partner: (0..m).map(|e| net.out_partner(e)).collect(),
            input_arc: (0..m).map(|e| net.is_input_arc(e)).collect(),
            output_arc: (0..m).map(|e| net.is_output_arc(e)).collect(),
            tail_v: (0..m).map(|e| vertex[net.arc(e).tail]).collect(),
            head_v: (0..m).map(|e| vertex[net.arc(e).head]).collect(),
            nv: splitters.len() + 1,
            splitter_in: splitters.iter().map(|&s| net.in_arcs(s).to_vec()).collect(),
        }
    }

    /// A fluid arc is upper-tight when its saturated sibling at the head
    /// carries the same throughput, or when it reaches its output's capacity.
    pub fn upper_tight(&self, st: &SteadyState, e: ArcId) -> bool {
        if !st.fluid[e] {
            return false;
        }
        if self.output_arc[e] {
            return st.t[e] == self.cap[e];
        }
        matches!(self.in_partner[e], Some(p) if !st.fluid[p] && st.t[p] == st.t[e])
    }

    /// A saturated arc is lower-tight when its fluid sibling at the head
    /// carries the same throughput.
    pub fn lower_tight(&self, st: &SteadyState, e: ArcId) -> bool {
        !st.fluid[e] && matches!(self.in_partner[e], Some(p) if st.fluid[p] && st.t[p] == st.t[e])
    }

    /// The arc itself plus its coupled sibling, if any.
    pub fn coupled(&self, st: &SteadyState, e: ArcId) -> Vec<ArcId> {
        let partner = if st.fluid[e] { self.out_partner[e] } else { self.in_partner[e] };
        match partner {
            Some(p) if st.fluid[p] == st.fluid[e] => vec![e, p],
            _ => vec![e],
        }
    }

    pub fn loose(&self, st: &SteadyState, e: ArcId) -> bool {
        if st.fluid[e] {
            !self.coupled(st, e).into_iter().any(|f| self.upper_tight(st, f))
        } else {
            !self.coupled(st, e).into_iter().any(|f| self.lower_tight(st, f))
        }
    }

    /// Whether the arc has an image in the residual graph. Saturated arcs
    /// into outputs are left out: their throughput is pinned to the
    /// output's capacity.
    pub fn in_residual(&self, st: &SteadyState, e: ArcId) -> bool {
        if st.fluid[e] {
            st.t[e] < self.cap[e]
        } else {
            st.t[e].is_positive() && !self.output_arc[e]
        }
    }

    pub fn residual_ends(&self, st: &SteadyState, e: ArcId) -> (usize, usize) {
        if st.fluid[e] {
            (self.tail_v[e], self.head_v[e])
        } else {
            (self.head_v[e], self.tail_v[e])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    Standard,
    /// The fluid input arcs form a single class.
    Uniform,
}

/// Residual graph on `z` (vertex 0, all terminals) and the splitters
/// (vertices `1..`, in node order), with coupled arcs grouped in classes.
#[derive(Debug, Clone)]
pub struct ResidualGraph {
    pub graph: Digraph,
    pub partition: CoupledPartition,
    /// Network arc behind each residual arc; increasing in residual index.
    pub rho: Vec<ArcId>,
}

impl ResidualGraph {
    pub fn arc_of(&self, e: ArcId) -> Option<usize> {
        self.rho.binary_search(&e).ok()
    }
}

pub fn build_residual(net: &SplitterNetwork, state: &SteadyState, mode: ResidualMode) -> ResidualGraph {
    build(&Topo::new(net), state, mode)
}

pub(crate) fn build(topo: &Topo, st: &SteadyState, mode: ResidualMode) -> ResidualGraph {
    let m = st.t.len();
    let mut arcs = Vec::new();
    let mut rho = Vec::new();
    let mut index = vec![usize::MAX; m];
    for e in 0..m {
        if topo.in_residual(st, e) {
            index[e] = arcs.len();
            arcs.push(topo.residual_ends(st, e));
            rho.push(e);
        }
    }
    let graph = Digraph::new(topo.nv, arcs);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut keyed: HashMap<(u8, usize), usize> = HashMap::new();
    for (h, &e) in rho.iter().enumerate() {
        let key = if mode == ResidualMode::Uniform && st.fluid[e] && topo.input_arc[e] {
            Some((2, 0))
        } else {
            let c = topo.coupled(st, e);
            if c.len() == 2 && index[c[1]] != usize::MAX {
                Some((st.fluid[e] as u8, e.min(c[1])))
            } else {
                None
            }
        };
        match key {
            Some(k) => {
                let slot = *keyed.entry(k).or_insert_with(|| {
                    classes.push(Vec::new());
                    classes.len() - 1
                });
                classes[slot].push(h);
            }
            None => classes.push(vec![h]),
        }
    }
    let partition = CoupledPartition::new(&graph, classes).expect("coupled arcs share a residual tail");
    ResidualGraph { graph, partition, rho }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturationReason {
    /// A fluid arc reached its output's capacity.
    OutputTight,
    /// A residual arc was not loose.
    NonLoose,
    /// The arc's head was a sink of the residual graph.
    Sink,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Saturate { arc: ArcId, reason: SaturationReason },
    /// Push along a circulation through `z`; `flow` lists `(arc, x)`.
    Augment { lambda: Rational, flow: Vec<(ArcId, Rational)> },
    /// Push along a circulation avoiding `z`.
    Move { lambda: Rational, flow: Vec<(ArcId, Rational)> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub op: Op,
    pub psi: i64,
    pub saturated: usize,
    /// The state after the operation.
    pub state: SteadyState,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolverTrace {
    pub steps: Vec<TraceStep>,
    /// Number of residual graphs built after the loose-arc cleanup.
    pub rounds: usize,
}

impl SolverTrace {
    fn record(&mut self, net: &SplitterNetwork, op: Op, st: &SteadyState) {
        self.steps.push(TraceStep { op, psi: st.psi(net), saturated: st.num_saturated(), state: st.clone() });
    }
}

/// Saturates one arc freeing a non-loose residual arc, if any: the
/// upper-tight arc coupled to a non-loose fluid arc, or the fluid sibling
/// of the lower-tight arc coupled to a non-loose saturated arc. The lowest
/// non-loose residual arc decides.
pub fn saturate_nonloose(net: &SplitterNetwork, state: &SteadyState) -> Option<(ArcId, SteadyState)> {
    let topo = Topo::new(net);
    nonloose_target(&topo, state).map(|e| {
        let mut st = state.clone();
        st.fluid[e] = false;
        (e, st)
    })
}

fn nonloose_target(topo: &Topo, st: &SteadyState) -> Option<ArcId> {
    for e in 0..st.t.len() {
        if !topo.in_residual(st, e) || topo.loose(st, e) {
            continue;
        }
        let group = topo.coupled(st, e);
        return if st.fluid[e] {
            group.into_iter().find(|&f| topo.upper_tight(st, f))
        } else {
            group.into_iter().find(|&f| topo.lower_tight(st, f)).and_then(|f| topo.in_partner[f])
        };
    }
    None
}

fn output_tight_target(topo: &Topo, st: &SteadyState) -> Option<ArcId> {
    (0..st.t.len()).find(|&e| st.fluid[e] && topo.output_arc[e] && st.t[e] == topo.cap[e])
}

/// Largest `λ` keeping the state a sub-steady-state when fluid arcs gain
/// and saturated arcs lose `λ·x`. `x` is indexed by network arc.
pub fn max_step(net: &SplitterNetwork, state: &SteadyState, x: &[Rational]) -> Option<Rational> {
    step_bound(&Topo::new(net), state, x)
}

pub(crate) fn step_bound(topo: &Topo, st: &SteadyState, x: &[Rational]) -> Option<Rational> {
    let mut best: Option<Rational> = None;
    let mut consider = |v: Rational| {
        if best.as_ref().is_none_or(|b| v < *b) {
            best = Some(v);
        }
    };
    for e in 0..st.t.len() {
        if !x[e].is_positive() {
            continue;
        }
        if st.fluid[e] {
            consider((&topo.cap[e] - &st.t[e]) / &x[e]);
        } else {
            consider(&st.t[e] / &x[e]);
        }
    }
    for ins in &topo.splitter_in {
        if ins.len() != 2 {
            continue;
        }
        for (s, f) in [(ins[0], ins[1]), (ins[1], ins[0])] {
            if !st.fluid[s] && st.fluid[f] {
                let rate = &x[f] + &x[s];
                if rate.is_positive() {
                    consider((&st.t[s] - &st.t[f]) / rate);
                }
            }
        }
    }
    best
}

/// Pushes the residual circulation `x` (indexed by residual arc) as far as
/// the sub-steady-state rules allow. Returns the new state and `λ`.
pub fn augment(
    net: &SplitterNetwork,
    state: &SteadyState,
    residual: &ResidualGraph,
    x: &[Rational],
) -> Result<(SteadyState, Rational), SolveError> {
    apply_circulation(&Topo::new(net), state, residual, x)
}

pub(crate) fn apply_circulation(
    topo: &Topo,
    st: &SteadyState,
    residual: &ResidualGraph,
    x: &[Rational],
) -> Result<(SteadyState, Rational), SolveError> {
    let mut xa = vec![Rational::zero(); st.t.len()];
    for (h, &e) in residual.rho.iter().enumerate() {
        xa[e] = x[h].clone();
    }
    if xa.iter().all(|v| v.is_zero()) {
        return Err(SolveError::Internal("zero circulation".into()));
    }
    let lambda = step_bound(topo, st, &xa).ok_or_else(|| SolveError::Internal("unbounded step".into()))?;
    if !lambda.is_positive() {
        return Err(SolveError::Internal("circulation uses a non-loose arc".into()));
    }
    let mut next = st.clone();
    for e in 0..st.t.len() {
        if xa[e].is_zero() {
            continue;
        }
        let d = &lambda * &xa[e];
        if st.fluid[e] {
            next.t[e] += d;
        } else {
            next.t[e] -= d;
        }
    }
    Ok((next, lambda))
}

fn flow_list(residual: &ResidualGraph, x: &[Rational]) -> Vec<(ArcId, Rational)> {
    residual
        .rho
        .iter()
        .zip(x)
        .filter(|(_, v)| v.is_positive())
        .map(|(&e, v)| (e, v.clone()))
        .collect()
}

/// Vertices weakly connected to `z` through residual arcs.
fn main_component(g: &Digraph) -> Vec<bool> {
    let mut adj = vec![Vec::new(); g.n];
    for &(u, v) in &g.arcs {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; g.n];
    seen[0] = true;
    let mut q = VecDeque::from([0]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                q.push_back(v);
            }
        }
    }
    seen
}

/// Whether the component `comp` has no arc leaving it and at least one arc
/// inside it.
pub(crate) fn is_cyclic_sink(g: &Digraph, comp: &[usize], alive: &[bool]) -> bool {
    let mut inside = vec![false; g.n];
    for &v in comp {
        inside[v] = true;
    }
    let mut has_arc = false;
    for (h, &(u, v)) in g.arcs.iter().enumerate() {
        if !alive[h] || !inside[u] {
            continue;
        }
        if !inside[v] {
            return false;
        }
        has_arc = true;
    }
    has_arc
}

/// Fluid incoming arc of maximum throughput at a residual sink, lowest id
/// on ties.
pub(crate) fn sink_target(topo: &Topo, st: &SteadyState, v: usize) -> Option<ArcId> {
    let ins = &topo.splitter_in[v - 1];
    let max = ins.iter().map(|&e| &st.t[e]).max()?;
    ins.iter().copied().filter(|&e| st.t[e] == *max && st.fluid[e]).min()
}

/// Runs the solver from `(t ≡ 0, F = E)`.
pub fn solve(net: &SplitterNetwork) -> Result<(SteadyState, SolverTrace), SolveError> {
    solve_from(net, SteadyState::zero(net))
}

/// Runs the solver from a given sub-steady-state.
pub fn solve_from(net: &SplitterNetwork, start: SteadyState) -> Result<(SteadyState, SolverTrace), SolveError> {
    require_valid(net)?;
    let topo = Topo::new(net);
    let mut st = start;
    let mut trace = SolverTrace::default();
    let limit = 8 * net.num_arcs() + 16;
    loop {
        loop {
            let (arc, reason) = if let Some(e) = output_tight_target(&topo, &st) {
                (e, SaturationReason::OutputTight)
            } else if let Some(e) = nonloose_target(&topo, &st) {
                (e, SaturationReason::NonLoose)
            } else {
                break;
            };
            st.fluid[arc] = false;
            trace.record(net, Op::Saturate { arc, reason }, &st);
        }
        trace.rounds += 1;
        if trace.rounds > limit {
            return Err(SolveError::Internal("round limit exceeded".into()));
        }
        let res = build(&topo, &st, ResidualMode::Standard);
        let g = &res.graph;
        let main = main_component(g);
        let in_main: Vec<bool> = g.arcs.iter().map(|&(u, _)| main[u]).collect();
        let candidates: Vec<usize> = (0..g.arcs.len()).filter(|&h| g.arcs[h].0 == 0).collect();
        let restrict = |keep: Option<usize>| -> Vec<bool> {
            (0..g.arcs.len()).map(|h| in_main[h] && (g.arcs[h].0 != 0 || Some(h) == keep)).collect()
        };

        let mut chosen: Option<(Vec<usize>, Vec<bool>)> = None;
        for &a in &candidates {
            let alive = restrict(Some(a));
            let comps = g.sccs(&alive);
            let zc = comps.into_iter().find(|c| c.contains(&0)).expect("z has a component");
            if is_cyclic_sink(g, &zc, &alive) {
                chosen = Some((zc, alive));
                break;
            }
        }
        let (comp, alive) = match chosen {
            Some(c) => c,
            None => {
                let alive = restrict(candidates.first().copied());
                let comp = lowest_sink_scc(g, &main, &alive);
                (comp, alive)
            }
        };
        if comp.len() == 1 && !is_cyclic_sink(g, &comp, &alive) {
            let v = comp[0];
            if v == 0 {
                return Ok((st, trace));
            }
            let arc = sink_target(&topo, &st, v)
                .ok_or_else(|| SolveError::Internal(format!("sink vertex {v} without a fluid incoming arc")))?;
            st.fluid[arc] = false;
            trace.record(net, Op::Saturate { arc, reason: SaturationReason::Sink }, &st);
            continue;
        }
        let mut sub = alive.clone();
        let mut inside = vec![false; g.n];
        for &v in &comp {
            inside[v] = true;
        }
        for (h, &(u, _)) in g.arcs.iter().enumerate() {
            if !inside[u] {
                sub[h] = false;
            }
        }
        let x = stationary_circulation_on(g, &comp, &sub).map_err(|e| SolveError::Internal(e.to_string()))?;
        let (next, lambda) = apply_circulation(&topo, &st, &res, &x)?;
        let flow = flow_list(&res, &x);
        st = next;
        let op = if inside[0] { Op::Augment { lambda, flow } } else { Op::Move { lambda, flow } };
        trace.record(net, op, &st);
    }
}
