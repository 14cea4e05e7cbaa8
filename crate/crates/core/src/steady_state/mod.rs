//! Steady-states `(t, F)`: the rule checker, the text format, reversal,
//! the residual-graph solver and the uniform variant with its lattice
//! operations.

mod residual;
mod uniform;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::network::{tokens, ArcId, NodeKind, SplitterNetwork};
use crate::rational::Rational;

pub use residual::{
    augment, build_residual, max_step, saturate_nonloose, solve, solve_from, Op, ResidualGraph, ResidualMode,
    SaturationReason, SolverTrace, TraceStep,
};
pub use uniform::{apply_uniform_op, join, meet, uniform_ops, uniform_solve, UniformOp};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SteadyState {
    pub t: Vec<Rational>,
    pub fluid: Vec<bool>,
}

impl SteadyState {
    /// All throughputs 0, every arc fluid.
    pub fn zero(net: &SplitterNetwork) -> Self {
        let m = net.num_arcs();
        SteadyState { t: vec![Rational::zero(); m], fluid: vec![true; m] }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `|{e ∉ F : t(e) = 0}| − |{e ∈ F : t(e) < c(e)}|`.
    pub fn psi(&self, net: &SplitterNetwork) -> i64 {
        let mut p = 0;
        for e in 0..self.t.len() {
            if !self.fluid[e] && self.t[e].is_zero() {
                p += 1;
            }
            if self.fluid[e] && self.t[e] < net.arc_cap(e) {
                p -= 1;
            }
        }
        p
    }

    pub fn num_saturated(&self) -> usize {
        self.fluid.iter().filter(|f| !**f).count()
    }

    /// Throughputs on the input arcs followed by the output arcs.
    pub fn terminal_values(&self, net: &SplitterNetwork) -> (Vec<Rational>, Vec<Rational>) {
        (
            net.input_arcs().into_iter().map(|e| self.t[e].clone()).collect(),
            net.output_arcs().into_iter().map(|e| self.t[e].clone()).collect(),
        )
    }

    pub fn total_output(&self, net: &SplitterNetwork) -> Rational {
        net.output_arcs().into_iter().map(|e| &self.t[e]).sum()
    }

    pub fn total_input(&self, net: &SplitterNetwork) -> Rational {
        net.input_arcs().into_iter().map(|e| &self.t[e]).sum()
    }

    /// One line per arc, `arc NAME t=p/q state=fluid|saturated`, in arc
    /// order.
    pub fn to_text(&self, net: &SplitterNetwork) -> String {
        let mut s = String::new();
        for (e, a) in net.arcs().iter().enumerate() {
            let st = if self.fluid[e] { "fluid" } else { "saturated" };
            s.push_str(&format!("arc {} t={} state={}\n", a.name, self.t[e], st));
        }
        s
    }

    pub fn parse(net: &SplitterNetwork, text: &str) -> Result<Self, StateParseError> {
        let m = net.num_arcs();
        let mut t = vec![None; m];
        let mut fluid = vec![true; m];
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let toks = tokens(raw.split('#').next().unwrap_or(""));
            if toks.is_empty() {
                continue;
            }
            let err = |msg: String| StateParseError { line, msg };
            if toks[0].1 != "arc" || toks.len() != 4 {
                return Err(err("expected `arc NAME t=R state=fluid|saturated`".into()));
            }
            let e = net.arc_id(toks[1].1).map_err(|e| err(e.to_string()))?;
            if t[e].is_some() {
                return Err(err(format!("arc `{}` listed twice", toks[1].1)));
            }
            let tv = toks[2].1.strip_prefix("t=").ok_or_else(|| err("expected t=R".into()))?;
            let tv: Rational = tv.parse().map_err(|e| err(format!("{e}")))?;
            fluid[e] = match toks[3].1 {
                "state=fluid" => true,
                "state=saturated" => false,
                other => return Err(err(format!("bad state `{other}`"))),
            };
            t[e] = Some(tv);
        }
        let t = t
            .into_iter()
            .enumerate()
            .map(|(e, v)| v.ok_or_else(|| StateParseError { line: 0, msg: format!("arc `{}` missing", net.arc(e).name) }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SteadyState { t, fluid })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct StateParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R8S,
    R9,
    P6,
    P7,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which family of states the checker accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Steady-state with the plain maximization rule.
    R8,
    /// Steady-state with the strong maximization rule.
    R8S,
    /// Sub-steady-state: fluid input arcs may run below capacity.
    Sub,
    /// Pre-steady-state: splitters may hold excess (out ≤ in).
    Pre,
    /// Uniform sub-steady-state: `Sub` plus a common rate on fluid inputs.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleViolation {
    pub rule: Rule,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at {}: {}", self.rule, self.subject, self.detail)
    }
}

/// Lists every violated rule; empty iff `state` belongs to the family of
/// `mode`. Violations come in rule order.
pub fn check_rules(net: &SplitterNetwork, state: &SteadyState, mode: CheckMode) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    let m = net.num_arcs();
    let mut push = |rule, subject: String, detail: String| out.push(RuleViolation { rule, subject, detail });
    let an = |e: ArcId| format!("arc `{}`", net.arc(e).name);
    if state.t.len() != m || state.fluid.len() != m {
        push(Rule::R2, "state".into(), format!("state has {} entries for {} arcs", state.t.len(), m));
        return out;
    }
    let t = &state.t;
    let f = &state.fluid;
    for e in 0..m {
        if !t[e].in_unit_interval() {
            push(Rule::R1, an(e), format!("t = {} outside [0,1]", t[e]));
        }
    }
    for i in net.inputs() {
        for &e in net.out_arcs(i) {
            let c = &net.node(i).cap;
            if t[e] > *c {
                push(Rule::R3, an(e), format!("t = {} exceeds input capacity {}", t[e], c));
            } else if f[e] && t[e] != *c && !matches!(mode, CheckMode::Sub | CheckMode::Uniform) {
                push(Rule::R3, an(e), format!("fluid input arc at {} below capacity {}", t[e], c));
            }
        }
    }
    for o in net.outputs() {
        for &e in net.in_arcs(o) {
            let c = &net.node(o).cap;
            if t[e] > *c {
                push(Rule::R4, an(e), format!("t = {} exceeds output capacity {}", t[e], c));
            } else if !f[e] && t[e] != *c {
                push(Rule::R4, an(e), format!("saturated output arc at {} below capacity {}", t[e], c));
            }
        }
    }
    let sn = |s| format!("splitter `{}`", net.node(s).name);
    for s in net.splitters() {
        let ins = net.in_arcs(s);
        let outs = net.out_arcs(s);
        let tin: Rational = ins.iter().map(|&e| &t[e]).sum();
        let tout: Rational = outs.iter().map(|&e| &t[e]).sum();
        if mode == CheckMode::Pre {
            if tout > tin {
                push(Rule::R5, sn(s), format!("outflow {tout} exceeds inflow {tin}"));
            }
        } else if tin != tout {
            push(Rule::R5, sn(s), format!("inflow {tin} differs from outflow {tout}"));
        }
    }
    for s in net.splitters() {
        let ins = net.in_arcs(s);
        if ins.len() == 2 {
            for (a, b) in [(ins[0], ins[1]), (ins[1], ins[0])] {
                if !f[a] && t[a] < t[b] {
                    push(Rule::R6, an(a), format!("saturated incoming arc at {} below sibling at {}", t[a], t[b]));
                }
            }
        }
    }
    for s in net.splitters() {
        let outs = net.out_arcs(s);
        if outs.len() == 2 {
            for (a, b) in [(outs[0], outs[1]), (outs[1], outs[0])] {
                if f[a] && t[a] < t[b] {
                    push(Rule::R7, an(a), format!("fluid outgoing arc at {} below sibling at {}", t[a], t[b]));
                }
            }
        }
    }
    let strong = mode != CheckMode::R8;
    for v in 0..net.num_nodes() {
        for &uv in net.in_arcs(v) {
            if f[uv] {
                continue;
            }
            for &vw in net.out_arcs(v) {
                if !f[vw] || t[vw].is_one() {
                    continue;
                }
                if strong {
                    push(Rule::R8S, an(vw), format!("fluid at {} after saturated `{}`", t[vw], net.arc(uv).name));
                } else if !t[uv].is_one() {
                    push(Rule::R8, an(vw), format!("fluid at {} after saturated `{}` at {}", t[vw], net.arc(uv).name, t[uv]));
                }
            }
        }
    }
    if mode == CheckMode::Uniform {
        if let Err(detail) = uniform_rate(net, state) {
            push(Rule::R9, "inputs".into(), detail);
        }
    }
    out
}

/// Checks that some `γ` has `t(e) = min{c(i), γ}` on every fluid input arc.
fn uniform_rate(net: &SplitterNetwork, state: &SteadyState) -> Result<(), String> {
    let mut gamma: Option<Rational> = None;
    let arcs: Vec<ArcId> = net.input_arcs().into_iter().filter(|&e| state.fluid[e]).collect();
    // Any arc strictly below its capacity pins γ.
    for &e in &arcs {
        let c = &net.node(net.arc(e).tail).cap;
        if state.t[e] < *c {
            match &gamma {
                Some(g) if *g != state.t[e] => return Err(format!("fluid inputs at distinct rates {} and {}", g, state.t[e])),
                _ => gamma = Some(state.t[e].clone()),
            }
        }
    }
    if let Some(g) = gamma {
        for &e in &arcs {
            let c = &net.node(net.arc(e).tail).cap;
            if state.t[e] == *c && *c > g {
                return Err(format!("input arc `{}` at capacity {} above common rate {}", net.arc(e).name, c, g));
            }
        }
    }
    Ok(())
}

/// Grows `F` until the strong maximization rule holds, keeping `t`.
pub fn to_strong_maximization(net: &SplitterNetwork, state: &SteadyState) -> SteadyState {
    let mut st = state.clone();
    loop {
        let mut changed = false;
        for v in 0..net.num_nodes() {
            if net.kind(v) != NodeKind::Splitter {
                continue;
            }
            let bad = net.out_arcs(v).iter().any(|&vw| st.fluid[vw] && !st.t[vw].is_one());
            if !bad {
                continue;
            }
            for &uv in net.in_arcs(v) {
                if !st.fluid[uv] {
                    st.fluid[uv] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return st;
        }
    }
}

/// The state on the reversed network: same throughputs, fluid and
/// saturated arcs exchanged.
pub fn reverse_state(state: &SteadyState) -> SteadyState {
    SteadyState { t: state.t.clone(), fluid: state.fluid.iter().map(|f| !f).collect() }
}

/// Arcs whose fluid flag differs between two states.
pub fn fluid_difference(a: &SteadyState, b: &SteadyState) -> HashSet<ArcId> {
    (0..a.fluid.len()).filter(|&e| a.fluid[e] != b.fluid[e]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("unsupported capacities: {0}")]
    Unsupported(String),
    #[error("internal solver error: {0}")]
    Internal(String),
}

pub(crate) fn require_valid(net: &SplitterNetwork) -> Result<(), SolveError> {
    let v = net.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(SolveError::InvalidNetwork(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")))
    }
}
