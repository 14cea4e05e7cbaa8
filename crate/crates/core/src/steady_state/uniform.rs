//! Uniform sub-steady-states on networks whose terminals all have
//! capacity 1: the elementary operations, a randomized driver over them,
//! and the lattice operations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circulation::stationary_circulation_on;
use crate::network::{ArcId, SplitterNetwork};
use crate::rational::Rational;

use super::residual::{apply_circulation, build, is_cyclic_sink, ResidualGraph, ResidualMode, Topo};
use super::{require_valid, Op, SaturationReason, SolveError, SolverTrace, SteadyState, TraceStep};

/// An elementary operation. Moves and augmentations are named by the
/// network arcs of their support, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UniformOp {
    Saturate(ArcId),
    Augment(Vec<ArcId>),
    Move(Vec<ArcId>),
}

struct Circulation {
    support: Vec<ArcId>,
    through_z: bool,
    x: Vec<Rational>,
}

/// Stationary circulations on the cyclic sink components of the residual
/// graph whose arcs are all loose and admit a positive step.
fn circulations(topo: &Topo, st: &SteadyState, res: &ResidualGraph) -> Vec<Circulation> {
    let g = &res.graph;
    let all = vec![true; g.arcs.len()];
    let mut out = Vec::new();
    for comp in g.sccs(&all) {
        if !is_cyclic_sink(g, &comp, &all) {
            continue;
        }
        let mut inside = vec![false; g.n];
        for &v in &comp {
            inside[v] = true;
        }
        let sub: Vec<bool> = g.arcs.iter().map(|&(u, _)| inside[u]).collect();
        let arcs: Vec<ArcId> = (0..g.arcs.len()).filter(|&h| sub[h]).map(|h| res.rho[h]).collect();
        if arcs.iter().any(|&e| !topo.loose(st, e)) {
            continue;
        }
        let Ok(x) = stationary_circulation_on(g, &comp, &sub) else {
            continue;
        };
        if apply_circulation(topo, st, res, &x).is_err() {
            continue;
        }
        out.push(Circulation { support: arcs, through_z: inside[0], x });
    }
    out
}

/// Splitter vertices of the residual graph without leaving arcs whose
/// fluid outgoing arcs all carry 1.
fn sink_saturations(net: &SplitterNetwork, topo: &Topo, st: &SteadyState, res: &ResidualGraph) -> Vec<ArcId> {
    let g = &res.graph;
    let mut has_out = vec![false; g.n];
    for &(u, _) in &g.arcs {
        has_out[u] = true;
    }
    let mut out = Vec::new();
    for (k, s) in net.splitters().into_iter().enumerate() {
        let v = k + 1;
        if has_out[v] || net.out_arcs(s).iter().any(|&e| st.fluid[e] && !st.t[e].is_one()) {
            continue;
        }
        let ins = &topo.splitter_in[k];
        let Some(max) = ins.iter().filter(|&&e| st.fluid[e]).map(|&e| &st.t[e]).max() else {
            continue;
        };
        let ok = ins.iter().all(|&e| st.fluid[e] || st.t[e] <= *max);
        if ok {
            out.extend(ins.iter().copied().filter(|&e| st.fluid[e] && st.t[e] == *max));
        }
    }
    out
}

fn enumerate(net: &SplitterNetwork, topo: &Topo, st: &SteadyState) -> (Vec<UniformOp>, Vec<Circulation>) {
    let res = build(topo, st, ResidualMode::Uniform);
    let mut ops: Vec<UniformOp> =
        (0..st.t.len()).filter(|&e| topo.upper_tight(st, e)).map(UniformOp::Saturate).collect();
    ops.extend(sink_saturations(net, topo, st, &res).into_iter().map(UniformOp::Saturate));
    let circs = circulations(topo, st, &res);
    for c in &circs {
        let s = c.support.clone();
        ops.push(if c.through_z { UniformOp::Augment(s) } else { UniformOp::Move(s) });
    }
    ops.sort();
    ops.dedup();
    (ops, circs)
}

/// The elementary operations applicable to a uniform sub-steady-state,
/// sorted and without repeats.
pub fn uniform_ops(net: &SplitterNetwork, state: &SteadyState) -> Vec<UniformOp> {
    enumerate(net, &Topo::new(net), state).0
}

/// Applies one operation, which must be among `uniform_ops(net, state)`.
pub fn apply_uniform_op(net: &SplitterNetwork, state: &SteadyState, op: &UniformOp) -> Result<SteadyState, SolveError> {
    apply(net, &Topo::new(net), state, op).map(|(st, _)| st)
}

fn apply(net: &SplitterNetwork, topo: &Topo, st: &SteadyState, op: &UniformOp) -> Result<(SteadyState, Op), SolveError> {
    let (ops, circs) = enumerate(net, topo, st);
    if !ops.contains(op) {
        return Err(SolveError::Internal(format!("operation {op:?} is not applicable")));
    }
    match op {
        UniformOp::Saturate(e) => {
            let reason = if topo.output_arc[*e] && st.t[*e] == topo.cap[*e] {
                SaturationReason::OutputTight
            } else if topo.upper_tight(st, *e) {
                SaturationReason::NonLoose
            } else {
                SaturationReason::Sink
            };
            let mut next = st.clone();
            next.fluid[*e] = false;
            Ok((next, Op::Saturate { arc: *e, reason }))
        }
        UniformOp::Augment(support) | UniformOp::Move(support) => {
            let c = circs.iter().find(|c| c.support == *support).expect("listed operation has a circulation");
            let res = build(topo, st, ResidualMode::Uniform);
            let (next, lambda) = apply_circulation(topo, st, &res, &c.x)?;
            let flow = res.rho.iter().zip(&c.x).filter(|(_, v)| v.is_positive()).map(|(&e, v)| (e, v.clone())).collect();
            let op = if c.through_z { Op::Augment { lambda, flow } } else { Op::Move { lambda, flow } };
            Ok((next, op))
        }
    }
}

/// Runs elementary operations from `(t ≡ 0, F = E)` until none applies,
/// picking among the applicable ones with a generator seeded by `seed`.
pub fn uniform_solve(net: &SplitterNetwork, seed: u64) -> Result<(SteadyState, SolverTrace), SolveError> {
    require_valid(net)?;
    for v in net.inputs().into_iter().chain(net.outputs()) {
        if !net.is_dummy_node(v) && !net.node(v).cap.is_one() {
            return Err(SolveError::Unsupported(format!(
                "terminal `{}` has capacity {}, expected 1",
                net.node(v).name,
                net.node(v).cap
            )));
        }
    }
    let topo = Topo::new(net);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = SteadyState::zero(net);
    let mut trace = SolverTrace::default();
    let limit = 64 * net.num_arcs() + 64;
    loop {
        let ops = uniform_ops(net, &st);
        if ops.is_empty() {
            return Ok((st, trace));
        }
        if trace.steps.len() >= limit {
            return Err(SolveError::Internal("operation limit exceeded".into()));
        }
        let pick = &ops[rng.gen_range(0..ops.len())];
        let (next, op) = apply(net, &topo, &st, pick)?;
        if matches!(op, Op::Augment { .. } | Op::Move { .. }) {
            trace.rounds += 1;
        }
        st = next;
        trace.steps.push(TraceStep { op, psi: st.psi(net), saturated: st.num_saturated(), state: st.clone() });
    }
}

/// Meet of two uniform sub-steady-states: fluid on `F₁ ∪ F₂`, minimum on
/// common fluid arcs, maximum on common saturated arcs, and elsewhere the
/// value of the state in which the arc is fluid.
pub fn meet(a: &SteadyState, b: &SteadyState) -> SteadyState {
    combine(a, b, true)
}

/// Join of two uniform sub-steady-states: fluid on `F₁ ∩ F₂`, maximum on
/// common fluid arcs, minimum on common saturated arcs, and elsewhere the
/// value of the state in which the arc is saturated.
pub fn join(a: &SteadyState, b: &SteadyState) -> SteadyState {
    combine(a, b, false)
}

fn combine(a: &SteadyState, b: &SteadyState, is_meet: bool) -> SteadyState {
    let m = a.t.len();
    let mut t = Vec::with_capacity(m);
    let mut fluid = Vec::with_capacity(m);
    for e in 0..m {
        let (ta, tb) = (&a.t[e], &b.t[e]);
        let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        let v = match (a.fluid[e], b.fluid[e]) {
            (true, true) => if is_meet { lo } else { hi },
            (false, false) => if is_meet { hi } else { lo },
            (true, false) => if is_meet { ta } else { tb },
            (false, true) => if is_meet { tb } else { ta },
        };
        t.push(v.clone());
        fluid.push(if is_meet { a.fluid[e] || b.fluid[e] } else { a.fluid[e] && b.fluid[e] });
    }
    SteadyState { t, fluid }
}
