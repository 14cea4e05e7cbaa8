//! Circulations that are constant on classes of coupled arcs, built from
//! stationary distributions of random walks, with infeasibility
//! certificates when no such circulation can use a given arc.

use std::collections::VecDeque;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::linalg::solve_square;
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CirculationError {
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("vertex {0} has no outgoing arc")]
    NoOutgoingArc(usize),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("arc {0} out of range")]
    ArcOutOfRange(usize),
    #[error("distinguished arc {0} is coupled to other arcs")]
    CoupledDistinguishedArc(usize),
    #[error("internal check failed: {0}")]
    Internal(String),
}

/// A directed multigraph on vertices `0..n`; arcs are `(tail, head)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    pub n: usize,
    pub arcs: Vec<(usize, usize)>,
}

impl Digraph {
    pub fn new(n: usize, arcs: Vec<(usize, usize)>) -> Self {
        assert!(arcs.iter().all(|&(u, v)| u < n && v < n), "arc endpoint out of range");
        Digraph { n, arcs }
    }

    fn out_lists(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for (e, &(u, _)) in self.arcs.iter().enumerate() {
            if alive[e] {
                out[u].push(e);
            }
        }
        out
    }

    fn in_lists(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.n];
        for (e, &(_, v)) in self.arcs.iter().enumerate() {
            if alive[e] {
                inc[v].push(e);
            }
        }
        inc
    }

    /// Strongly connected components of the subgraph made of the arcs
    /// flagged in `alive`, each sorted, listed by lowest vertex.
    pub fn sccs(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(self.n, self.arcs.len());
        for _ in 0..self.n {
            g.add_node(());
        }
        for (e, &(u, v)) in self.arcs.iter().enumerate() {
            if alive[e] {
                g.add_edge(NodeIndex::new(u), NodeIndex::new(v), ());
            }
        }
        let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut c: Vec<usize> = c.into_iter().map(|v| v.index()).collect();
                c.sort_unstable();
                c
            })
            .collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

/// A partition of the arcs in which every class leaves a single vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledPartition {
    class_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl CoupledPartition {
    pub fn new(g: &Digraph, classes: Vec<Vec<usize>>) -> Result<Self, CirculationError> {
        let m = g.arcs.len();
        let mut class_of = vec![usize::MAX; m];
        for (k, c) in classes.iter().enumerate() {
            if c.is_empty() {
                return Err(CirculationError::InvalidPartition(format!("class {k} is empty")));
            }
            let tail = g.arcs.get(c[0]).ok_or(CirculationError::ArcOutOfRange(c[0]))?.0;
            for &e in c {
                let &(u, _) = g.arcs.get(e).ok_or(CirculationError::ArcOutOfRange(e))?;
                if class_of[e] != usize::MAX {
                    return Err(CirculationError::InvalidPartition(format!("arc {e} in two classes")));
                }
                if u != tail {
                    return Err(CirculationError::InvalidPartition(format!("class {k} leaves several vertices")));
                }
                class_of[e] = k;
            }
        }
        if let Some(e) = class_of.iter().position(|&k| k == usize::MAX) {
            return Err(CirculationError::InvalidPartition(format!("arc {e} in no class")));
        }
        Ok(CoupledPartition { class_of, classes })
    }

    /// Every arc in a class of its own.
    pub fn singletons(g: &Digraph) -> Self {
        let m = g.arcs.len();
        CoupledPartition { class_of: (0..m).collect(), classes: (0..m).map(|e| vec![e]).collect() }
    }

    /// One class per vertex holding all of its outgoing arcs.
    pub fn out_incidences(g: &Digraph) -> Self {
        let alive = vec![true; g.arcs.len()];
        let classes: Vec<Vec<usize>> = g.out_lists(&alive).into_iter().filter(|c| !c.is_empty()).collect();
        CoupledPartition::new(g, classes).expect("out-incidences form a partition")
    }

    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, e: usize) -> &[usize] {
        &self.classes[self.class_of[e]]
    }

    pub fn is_single(&self, e: usize) -> bool {
        self.class_of(e).len() == 1
    }
}

/// Ordered vertex sets `S_0, …, S_k` witnessing that no circulation uses
/// the distinguished arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub parts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CeqOutcome {
    Circulation(Vec<Rational>),
    Certificate(Certificate),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CirculationOrSink {
    /// Positive exactly on the arcs of one sink strongly connected component.
    Circulation(Vec<Rational>),
    Sink(usize),
}

/// Stationary distribution of the uniform random walk on a strongly
/// connected graph.
pub fn stationary_distribution(g: &Digraph) -> Result<Vec<Rational>, CirculationError> {
    let alive = vec![true; g.arcs.len()];
    let verts: Vec<usize> = (0..g.n).collect();
    stationary_on(g, &verts, &alive)
}

/// Stationary distribution restricted to `verts` and the arcs flagged in
/// `alive` (all of which must join two vertices of `verts`). Entries
/// outside `verts` are zero.
fn stationary_on(g: &Digraph, verts: &[usize], alive: &[bool]) -> Result<Vec<Rational>, CirculationError> {
    if verts.is_empty() {
        return Err(CirculationError::EmptyGraph);
    }
    let k = verts.len();
    let mut local = vec![usize::MAX; g.n];
    for (i, &v) in verts.iter().enumerate() {
        local[v] = i;
    }
    let out = g.out_lists(alive);
    let inc = g.in_lists(alive);
    for &v in verts {
        if out[v].is_empty() {
            return Err(CirculationError::NoOutgoingArc(v));
        }
    }
    let comps = g.sccs(alive);
    if !comps.iter().any(|c| c.len() == k && c.iter().all(|&v| local[v] != usize::MAX)) {
        return Err(CirculationError::NotStronglyConnected);
    }
    // Balance equations for all vertices but the last, then Σπ = 1.
    let mut rows = Vec::with_capacity(k);
    for &v in &verts[..k - 1] {
        let mut row = vec![(local[v], -Rational::one())];
        for &e in &inc[v] {
            let u = g.arcs[e].0;
            row.push((local[u], Rational::new(1, out[u].len() as i64)));
        }
        rows.push(row);
    }
    rows.push((0..k).map(|i| (i, Rational::one())).collect());
    let mut rhs = vec![Rational::zero(); k];
    rhs[k - 1] = Rational::one();
    let pi = solve_square(&rows, &rhs, k).ok_or_else(|| CirculationError::Internal("singular balance system".into()))?;
    let mut full = vec![Rational::zero(); g.n];
    for (i, &v) in verts.iter().enumerate() {
        full[v] = pi[i].clone();
    }
    Ok(full)
}

/// Circulation `x_e = π_u / d⁺(u)` on a strongly connected graph; it is
/// constant on every class of any partition refining the out-incidences.
pub fn stationary_circulation(g: &Digraph, partition: &CoupledPartition) -> Result<Vec<Rational>, CirculationError> {
    let alive = vec![true; g.arcs.len()];
    let verts: Vec<usize> = (0..g.n).collect();
    let x = stationary_circulation_on(g, &verts, &alive)?;
    verify_circulation(g, partition, &x).map_err(CirculationError::Internal)?;
    Ok(x)
}

pub(crate) fn stationary_circulation_on(
    g: &Digraph,
    verts: &[usize],
    alive: &[bool],
) -> Result<Vec<Rational>, CirculationError> {
    let pi = stationary_on(g, verts, alive)?;
    let out = g.out_lists(alive);
    let mut x = vec![Rational::zero(); g.arcs.len()];
    for &v in verts {
        let d = Rational::from_integer(out[v].len() as i64);
        let share = &pi[v] / &d;
        for &e in &out[v] {
            x[e] = share.clone();
        }
    }
    Ok(x)
}

/// The sink strongly connected component containing the lowest vertex id
/// among all sink components of the subgraph of `alive` arcs restricted to
/// `verts`.
pub(crate) fn lowest_sink_scc(g: &Digraph, verts: &[bool], alive: &[bool]) -> Vec<usize> {
    let comps = g.sccs(alive);
    let mut comp_of = vec![usize::MAX; g.n];
    for (k, c) in comps.iter().enumerate() {
        for &v in c {
            comp_of[v] = k;
        }
    }
    let mut leaves = vec![false; comps.len()];
    for (e, &(u, v)) in g.arcs.iter().enumerate() {
        if alive[e] && comp_of[u] != comp_of[v] {
            leaves[comp_of[u]] = true;
        }
    }
    comps
        .into_iter()
        .enumerate()
        .filter(|(k, c)| !leaves[*k] && verts[c[0]])
        .map(|(_, c)| c)
        .next()
        .expect("a finite graph has a sink component")
}

/// Either a nonzero circulation supported on a sink strongly connected
/// component, or a vertex without outgoing arcs.
pub fn circulation_or_sink(g: &Digraph, partition: &CoupledPartition) -> Result<CirculationOrSink, CirculationError> {
    if g.n == 0 {
        return Err(CirculationError::EmptyGraph);
    }
    let alive = vec![true; g.arcs.len()];
    let all = vec![true; g.n];
    let comp = lowest_sink_scc(g, &all, &alive);
    let out = g.out_lists(&alive);
    if comp.len() == 1 && out[comp[0]].is_empty() {
        return Ok(CirculationOrSink::Sink(comp[0]));
    }
    let x = stationary_circulation_on(g, &comp, &alive)?;
    verify_circulation(g, partition, &x).map_err(CirculationError::Internal)?;
    Ok(CirculationOrSink::Circulation(x))
}

fn reaching(g: &Digraph, target: usize, vert_alive: &[bool], alive: &[bool]) -> Vec<bool> {
    let inc = g.in_lists(alive);
    let mut seen = vec![false; g.n];
    let mut q = VecDeque::from([target]);
    seen[target] = true;
    while let Some(v) = q.pop_front() {
        for &e in &inc[v] {
            let u = g.arcs[e].0;
            if vert_alive[u] && !seen[u] {
                seen[u] = true;
                q.push_back(u);
            }
        }
    }
    seen
}

fn reachable_from(g: &Digraph, source: usize, alive: &[bool]) -> Vec<bool> {
    let out = g.out_lists(alive);
    let mut seen = vec![false; g.n];
    let mut q = VecDeque::from([source]);
    seen[source] = true;
    while let Some(u) = q.pop_front() {
        for &e in &out[u] {
            let v = g.arcs[e].1;
            if !seen[v] {
                seen[v] = true;
                q.push_back(v);
            }
        }
    }
    seen
}

/// Finds a circulation constant on the classes of `partition` and positive
/// on the arc `ts` (from `t` to `s`), or a certificate that none exists.
/// `ts` must not be coupled to another arc.
pub fn solve_ceq(g: &Digraph, ts: usize, partition: &CoupledPartition) -> Result<CeqOutcome, CirculationError> {
    let &(t, s) = g.arcs.get(ts).ok_or(CirculationError::ArcOutOfRange(ts))?;
    if !partition.is_single(ts) {
        return Err(CirculationError::CoupledDistinguishedArc(ts));
    }
    let mut alive = vec![true; g.arcs.len()];
    let mut vert_alive = vec![true; g.n];
    let mut groups: Vec<Vec<usize>> = Vec::new();

    loop {
        let reach = reaching(g, t, &vert_alive, &alive);
        let group: Vec<usize> = (0..g.n).filter(|&v| vert_alive[v] && !reach[v]).collect();
        if group.is_empty() {
            break;
        }
        let s_lost = group.contains(&s);
        for &v in &group {
            vert_alive[v] = false;
        }
        for (e, &(u, v)) in g.arcs.iter().enumerate() {
            if alive[e] && (!vert_alive[u] || !vert_alive[v]) {
                for &f in partition.class_of(e) {
                    alive[f] = false;
                }
            }
        }
        groups.push(group);
        if s_lost {
            groups.reverse();
            let cert = Certificate { parts: groups };
            verify_certificate(g, ts, partition, &cert).map_err(CirculationError::Internal)?;
            return Ok(CeqOutcome::Certificate(cert));
        }
    }

    let from_s = reachable_from(g, s, &alive);
    for (e, &(u, v)) in g.arcs.iter().enumerate() {
        if !(from_s[u] && from_s[v]) {
            alive[e] = false;
        }
    }
    // Maximal in-arborescence towards t, discovered breadth-first.
    let inc = g.in_lists(&alive);
    let mut in_tree = vec![false; g.n];
    let mut keep = vec![false; g.arcs.len()];
    in_tree[t] = true;
    let mut q = VecDeque::from([t]);
    while let Some(v) = q.pop_front() {
        for &e in &inc[v] {
            let u = g.arcs[e].0;
            if !in_tree[u] {
                in_tree[u] = true;
                for &f in partition.class_of(e) {
                    keep[f] = true;
                }
                q.push_back(u);
            }
        }
    }
    keep[ts] = true;
    let from_t = reachable_from(g, t, &keep);
    let verts: Vec<usize> = (0..g.n).filter(|&v| from_t[v]).collect();
    for (e, &(u, _)) in g.arcs.iter().enumerate() {
        if !from_t[u] {
            keep[e] = false;
        }
    }
    let x = stationary_circulation_on(g, &verts, &keep)?;
    verify_circulation(g, partition, &x).map_err(CirculationError::Internal)?;
    if !x[ts].is_positive() {
        return Err(CirculationError::Internal("distinguished arc carries no flow".into()));
    }
    Ok(CeqOutcome::Circulation(x))
}

/// Checks nonnegativity, conservation at every vertex and constancy on
/// every class.
pub fn verify_circulation(g: &Digraph, partition: &CoupledPartition, x: &[Rational]) -> Result<(), String> {
    if x.len() != g.arcs.len() {
        return Err(format!("{} values for {} arcs", x.len(), g.arcs.len()));
    }
    if let Some(e) = x.iter().position(|v| v.is_negative()) {
        return Err(format!("negative value on arc {e}"));
    }
    let mut bal = vec![Rational::zero(); g.n];
    for (e, &(u, v)) in g.arcs.iter().enumerate() {
        bal[u] += &x[e];
        bal[v] -= &x[e];
    }
    if let Some(v) = bal.iter().position(|b| !b.is_zero()) {
        return Err(format!("conservation fails at vertex {v}"));
    }
    for c in partition.classes() {
        if c.iter().any(|&e| x[e] != x[c[0]]) {
            return Err(format!("class {c:?} is not constant"));
        }
    }
    Ok(())
}

/// Checks the partition condition for an infeasibility certificate: `s` in
/// `S_0`, `t` outside every part, and every arc leaving `S_i` is coupled to
/// an arc from `S_i` into some `S_j` with `j > i`.
pub fn verify_certificate(g: &Digraph, ts: usize, partition: &CoupledPartition, cert: &Certificate) -> Result<(), String> {
    let (t, s) = g.arcs[ts];
    let mut part = vec![usize::MAX; g.n];
    for (i, p) in cert.parts.iter().enumerate() {
        for &v in p {
            if v >= g.n {
                return Err(format!("vertex {v} out of range"));
            }
            if part[v] != usize::MAX {
                return Err(format!("vertex {v} in two parts"));
            }
            part[v] = i;
        }
    }
    if cert.parts.is_empty() || part[s] != 0 {
        return Err("s is not in the first part".into());
    }
    if part[t] != usize::MAX {
        return Err("t belongs to a part".into());
    }
    for (e, &(u, v)) in g.arcs.iter().enumerate() {
        let i = part[u];
        if i == usize::MAX || part[v] == i {
            continue;
        }
        let ok = partition.class_of(e).iter().any(|&f| {
            let (fu, fv) = g.arcs[f];
            part[fu] == i && part[fv] != usize::MAX && part[fv] > i
        });
        if !ok {
            return Err(format!("arc {e} leaves part {i} without a coupled arc into a later part"));
        }
    }
    Ok(())
}
