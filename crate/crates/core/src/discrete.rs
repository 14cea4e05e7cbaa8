//! Discrete conveyor belts: slot-level belt and node updates, periodic
//! activity schedules, cycle detection and comparison with the continuous
//! steady-state.

use std::collections::HashMap;

use num_integer::Integer;
use thiserror::Error;

use crate::network::{tokens, ArcId, NodeId, NodeKind, SplitterNetwork};
use crate::rational::Rational;
use crate::steady_state::{self, SolveError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiscreteError {
    #[error("splitter `{0}` must have two incoming and two outgoing arcs (normalize the network first)")]
    Degree(String),
    #[error("line {line}: {msg}")]
    Scenario { line: usize, msg: String },
    #[error("{0}")]
    State(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Occupied slots of every belt plus the two preference bits of every
/// splitter. Slot `i` of arc `e` is `belts[e][i - 1]`; slot 1 is the head.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DiscreteState {
    belts: Vec<Vec<bool>>,
    prefs: Vec<Option<(ArcId, ArcId)>>,
}

impl DiscreteState {
    /// Empty belts; every splitter prefers its lowest-id incoming and
    /// outgoing arcs.
    pub fn empty(net: &SplitterNetwork) -> Result<Self, DiscreteError> {
        let belts = net.arcs().iter().map(|a| vec![false; a.len as usize]).collect();
        let mut prefs = vec![None; net.num_nodes()];
        for s in net.splitters() {
            let (ins, outs) = (net.in_arcs(s), net.out_arcs(s));
            if ins.len() != 2 || outs.len() != 2 {
                return Err(DiscreteError::Degree(net.node(s).name.clone()));
            }
            prefs[s] = Some((*ins.iter().min().unwrap(), *outs.iter().min().unwrap()));
        }
        Ok(DiscreteState { belts, prefs })
    }

    /// Every slot of every belt holds an item.
    pub fn packed(net: &SplitterNetwork) -> Result<Self, DiscreteError> {
        let mut st = Self::empty(net)?;
        for b in &mut st.belts {
            b.fill(true);
        }
        Ok(st)
    }

    pub fn len(&self, e: ArcId) -> usize {
        self.belts[e].len()
    }

    pub fn occupied(&self, e: ArcId) -> Vec<usize> {
        (1..=self.belts[e].len()).filter(|&i| self.belts[e][i - 1]).collect()
    }

    pub fn is_occupied(&self, e: ArcId, slot: usize) -> bool {
        slot >= 1 && self.belts[e].get(slot - 1).copied().unwrap_or(false)
    }

    pub fn set_occupied(&mut self, e: ArcId, slots: &[usize]) -> Result<(), DiscreteError> {
        let l = self.belts[e].len();
        if let Some(&bad) = slots.iter().find(|&&i| i == 0 || i > l) {
            return Err(DiscreteError::State(format!("slot {bad} outside 1..{l} on arc {e}")));
        }
        self.belts[e].fill(false);
        for &i in slots {
            self.belts[e][i - 1] = true;
        }
        Ok(())
    }

    pub fn prefs(&self, s: NodeId) -> Option<(ArcId, ArcId)> {
        self.prefs[s]
    }

    pub fn set_prefs(&mut self, net: &SplitterNetwork, s: NodeId, inp: ArcId, out: ArcId) -> Result<(), DiscreteError> {
        if self.prefs[s].is_none() || net.arc(inp).head != s || net.arc(out).tail != s {
            return Err(DiscreteError::State(format!("preferences ({inp}, {out}) not incident to `{}`", net.node(s).name)));
        }
        self.prefs[s] = Some((inp, out));
        Ok(())
    }

    /// Total number of items on all belts.
    pub fn items(&self) -> usize {
        self.belts.iter().map(|b| b.iter().filter(|&&x| x).count()).sum()
    }

    fn head(&self, e: ArcId) -> bool {
        self.belts[e][0]
    }

    fn tail_full(&self, e: ArcId) -> bool {
        *self.belts[e].last().unwrap()
    }
}

/// Items move one slot forward, except those already packed against the head.
pub fn belt_update(state: &DiscreteState) -> DiscreteState {
    let mut next = state.clone();
    for b in &mut next.belts {
        let packed = b.iter().take_while(|&&x| x).count();
        for i in packed..b.len() {
            b[i] = b.get(i + 1).copied().unwrap_or(false);
        }
    }
    next
}

/// Which arcs lose their head item and which gain a tail item in one node
/// update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Moves {
    pub consumed: Vec<bool>,
    pub produced: Vec<bool>,
}

/// Splitter behaviour for `p_s = (e1, e3)`: `(consume e1, consume e2,
/// produce e3, produce e4, next prefs swap in, swap out)`.
fn splitter_row(h1: bool, h2: bool, f3: bool, f4: bool) -> (bool, bool, bool, bool, bool, bool) {
    match (h1, h2, f3, f4) {
        (false, false, _, _) | (_, _, true, true) => (false, false, false, false, false, false),
        (true, true, false, false) => (true, true, true, true, false, false),
        (true, _, false, _) => (true, false, true, false, true, true),
        (false, true, false, _) => (false, true, true, false, false, true),
        (true, _, true, false) => (true, false, false, true, true, false),
        (false, true, true, false) => (false, true, false, true, false, false),
    }
}

fn other(pair: &[ArcId], e: ArcId) -> ArcId {
    if pair[0] == e {
        pair[1]
    } else {
        pair[0]
    }
}

/// Computes the consumption and production of every node together with the
/// next splitter preferences. `active` is indexed by node id; splitters
/// ignore it.
pub fn node_moves(net: &SplitterNetwork, state: &DiscreteState, active: &[bool]) -> (Moves, Vec<Option<(ArcId, ArcId)>>) {
    let m = net.num_arcs();
    let mut mv = Moves { consumed: vec![false; m], produced: vec![false; m] };
    let mut prefs = state.prefs.clone();
    for (v, node) in net.nodes().iter().enumerate() {
        match node.kind {
            NodeKind::Input => {
                let e = net.out_arcs(v)[0];
                mv.produced[e] = active[v] && !state.tail_full(e);
            }
            NodeKind::Output => {
                let e = net.in_arcs(v)[0];
                mv.consumed[e] = active[v] && state.head(e);
            }
            NodeKind::Splitter => {
                let (e1, e3) = state.prefs[v].expect("splitter preferences");
                let e2 = other(net.in_arcs(v), e1);
                let e4 = other(net.out_arcs(v), e3);
                let (c1, c2, p3, p4, si, so) =
                    splitter_row(state.head(e1), state.head(e2), state.tail_full(e3), state.tail_full(e4));
                mv.consumed[e1] |= c1;
                mv.consumed[e2] |= c2;
                mv.produced[e3] |= p3;
                mv.produced[e4] |= p4;
                prefs[v] = Some((if si { e2 } else { e1 }, if so { e4 } else { e3 }));
            }
        }
    }
    (mv, prefs)
}

fn apply(state: &DiscreteState, mv: &Moves, prefs: Vec<Option<(ArcId, ArcId)>>) -> DiscreteState {
    let mut next = state.clone();
    for (e, b) in next.belts.iter_mut().enumerate() {
        if mv.produced[e] {
            *b.last_mut().unwrap() = true;
        }
        if mv.consumed[e] {
            b[0] = false;
        }
    }
    next.prefs = prefs;
    next
}

pub fn node_update(net: &SplitterNetwork, state: &DiscreteState, active: &[bool]) -> DiscreteState {
    let (mv, prefs) = node_moves(net, state, active);
    apply(state, &mv, prefs)
}

/// One time step: a belt update followed by a node update.
pub fn step(net: &SplitterNetwork, state: &DiscreteState, active: &[bool]) -> (DiscreteState, Moves) {
    let moved = belt_update(state);
    let (mv, prefs) = node_moves(net, &moved, active);
    let next = apply(&moved, &mv, prefs);
    (next, mv)
}

/// A repeating activity word for every terminal. Splitters and terminals
/// without a word are never active.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActivitySchedule {
    words: HashMap<NodeId, Vec<bool>>,
}

impl ActivitySchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every terminal active at every step.
    pub fn always(net: &SplitterNetwork) -> Self {
        let mut s = Self::new();
        for v in net.inputs().into_iter().chain(net.outputs()) {
            s.set(v, vec![true]);
        }
        s
    }

    /// Balanced words of density `cap` for every terminal.
    pub fn from_capacities(net: &SplitterNetwork) -> Self {
        let mut s = Self::new();
        for v in net.inputs().into_iter().chain(net.outputs()) {
            s.set(v, balanced_word(&net.node(v).cap));
        }
        s
    }

    /// Panics on an empty word.
    pub fn set(&mut self, v: NodeId, word: Vec<bool>) {
        assert!(!word.is_empty(), "activity words have period at least 1");
        self.words.insert(v, word);
    }

    pub fn word(&self, v: NodeId) -> Option<&[bool]> {
        self.words.get(&v).map(|w| w.as_slice())
    }

    /// Least common multiple of all word lengths.
    pub fn period(&self) -> usize {
        self.words.values().fold(1, |l, w| l.lcm(&w.len()))
    }

    pub fn active_at(&self, num_nodes: usize, t: usize) -> Vec<bool> {
        let mut a = vec![false; num_nodes];
        for (&v, w) in &self.words {
            a[v] = w[t % w.len()];
        }
        a
    }
}

/// The word of length `q` whose `j`-th letter is
/// `floor((j+1)p/q) - floor(jp/q)`, for `r = p/q` in lowest terms.
pub fn balanced_word(r: &Rational) -> Vec<bool> {
    let (p, q) = (r.numer(), r.denom());
    let q_usize: usize = q.to_string().parse().expect("small denominator");
    (0..q_usize)
        .map(|j| {
            let j = num_bigint::BigInt::from(j);
            ((&j + 1u32) * &p).div_floor(&q) != (&j * &p).div_floor(&q)
        })
        .collect()
}

pub fn parse_word(s: &str) -> Option<Vec<bool>> {
    if s.is_empty() {
        return None;
    }
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationReport {
    /// Steps before the first state that recurs.
    pub transient: usize,
    /// `None` when no state recurred within the step budget.
    pub period: Option<usize>,
    /// Items leaving each arc at its head per step, over one period.
    pub arc_avg: Vec<Rational>,
    pub input_avg: Vec<(NodeId, Rational)>,
    pub output_avg: Vec<(NodeId, Rational)>,
    pub steps: usize,
}

impl SimulationReport {
    pub fn timed_out(&self) -> bool {
        self.period.is_none()
    }
}

/// Runs belt and node updates from `initial` until the pair (state, schedule
/// phase) repeats, then measures one period.
pub fn simulate(
    net: &SplitterNetwork,
    schedule: &ActivitySchedule,
    initial: &DiscreteState,
    max_steps: usize,
) -> SimulationReport {
    let n = net.num_nodes();
    let m = net.num_arcs();
    let phase_len = schedule.period();
    let mut seen: HashMap<(DiscreteState, usize), usize> = HashMap::new();
    let mut state = initial.clone();
    let mut t = 0;
    let found = loop {
        match seen.entry((state.clone(), t % phase_len)) {
            std::collections::hash_map::Entry::Occupied(o) => break Some(*o.get()),
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(t);
            }
        }
        if t == max_steps {
            break None;
        }
        state = step(net, &state, &schedule.active_at(n, t)).0;
        t += 1;
    };
    let Some(start) = found else {
        return SimulationReport {
            transient: 0,
            period: None,
            arc_avg: vec![Rational::zero(); m],
            input_avg: vec![],
            output_avg: vec![],
            steps: t,
        };
    };
    let period = t - start;
    let mut count = vec![0i64; m];
    for k in 0..period {
        let (next, mv) = step(net, &state, &schedule.active_at(n, t + k));
        for (c, &x) in count.iter_mut().zip(&mv.consumed) {
            *c += x as i64;
        }
        state = next;
    }
    let arc_avg: Vec<Rational> = count.iter().map(|&c| Rational::new(c, period as i64)).collect();
    let input_avg = net.inputs().into_iter().map(|v| (v, arc_avg[net.out_arcs(v)[0]].clone())).collect();
    let output_avg = net.outputs().into_iter().map(|v| (v, arc_avg[net.in_arcs(v)[0]].clone())).collect();
    SimulationReport { transient: start, period: Some(period), arc_avg, input_avg, output_avg, steps: t }
}

/// Initial configuration and belt lengths for one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub label: String,
    pub lengths: Vec<u32>,
    pub fills: Vec<(ArcId, Vec<usize>)>,
    pub prefs: Vec<(NodeId, ArcId, ArcId)>,
}

impl Trial {
    /// Lengths from the network, empty belts, default preferences.
    pub fn base(net: &SplitterNetwork) -> Self {
        Trial { label: "base".into(), lengths: net.arcs().iter().map(|a| a.len).collect(), fills: vec![], prefs: vec![] }
    }

    /// The network with this trial's lengths and its initial state.
    pub fn instantiate(&self, net: &SplitterNetwork) -> Result<(SplitterNetwork, DiscreteState), DiscreteError> {
        let mut net = net.clone();
        for (e, &l) in self.lengths.iter().enumerate() {
            net.set_len(e, l);
        }
        let mut st = DiscreteState::empty(&net)?;
        for (e, slots) in &self.fills {
            st.set_occupied(*e, slots)?;
        }
        for &(s, i, o) in &self.prefs {
            st.set_prefs(&net, s, i, o)?;
        }
        Ok((net, st))
    }
}

/// Parsed scenario file: activity words, a step budget and a list of trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub schedule: ActivitySchedule,
    pub max_steps: Option<usize>,
    pub trials: Vec<Trial>,
}

impl Scenario {
    /// Parses a scenario against a normalized network. Terminals without an
    /// `active` line get the balanced word of their capacity.
    pub fn parse(net: &SplitterNetwork, text: &str) -> Result<Scenario, DiscreteError> {
        let mut schedule = ActivitySchedule::from_capacities(net);
        let mut max_steps = None;
        let mut trials = vec![Trial::base(net)];
        let mut explicit = false;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let err = |msg: String| DiscreteError::Scenario { line, msg };
            let toks: Vec<&str> = tokens(raw.split('#').next().unwrap_or("")).into_iter().map(|(_, t)| t).collect();
            let Some(&kw) = toks.first() else { continue };
            let node = |name: &str| net.node_id(name).map_err(|e| err(e.to_string()));
            let arc = |name: &str| net.arc_id(name).map_err(|e| err(e.to_string()));
            let kv = |tok: &str, key: &str| {
                tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')).map(str::to_string).ok_or_else(|| err(format!("expected {key}=..., found `{tok}`")))
            };
            let want = |k: usize| if toks.len() == k { Ok(()) } else { Err(err(format!("`{kw}` takes {} arguments", k - 1))) };
            match kw {
                "active" => {
                    want(3)?;
                    let v = node(toks[1])?;
                    if net.kind(v) == NodeKind::Splitter {
                        return Err(err(format!("`{}` is not a terminal", toks[1])));
                    }
                    let w = kv(toks[2], "pattern")?;
                    schedule.set(v, parse_word(&w).ok_or_else(|| err(format!("bad pattern `{w}`")))?);
                }
                "steps" => {
                    want(2)?;
                    max_steps = Some(toks[1].parse().map_err(|_| err(format!("bad step count `{}`", toks[1])))?);
                }
                "trial" => {
                    if toks.len() < 2 || toks.len() > 3 {
                        return Err(err("`trial` takes a label and an optional len=K".into()));
                    }
                    let mut t = Trial::base(net);
                    t.label = toks[1].to_string();
                    if let Some(tok) = toks.get(2) {
                        let l: u32 = kv(tok, "len")?.parse().ok().filter(|&l| l >= 1).ok_or_else(|| err(format!("bad length in `{tok}`")))?;
                        t.lengths.fill(l);
                    }
                    if explicit {
                        trials.push(t);
                    } else {
                        trials = vec![t];
                        explicit = true;
                    }
                }
                "length" => {
                    want(3)?;
                    let e = arc(toks[1])?;
                    let l = toks[2].parse().ok().filter(|&l: &u32| l >= 1).ok_or_else(|| err(format!("bad length `{}`", toks[2])))?;
                    trials.last_mut().unwrap().lengths[e] = l;
                }
                "fill" => {
                    if toks.len() > 3 || toks.len() < 2 {
                        return Err(err("`fill` takes an arc and a slot list".into()));
                    }
                    let e = arc(toks[1])?;
                    let slots = match toks.get(2) {
                        None | Some(&"-") => vec![],
                        Some(s) => s
                            .split(',')
                            .map(|x| x.parse::<usize>().map_err(|_| err(format!("bad slot `{x}`"))))
                            .collect::<Result<_, _>>()?,
                    };
                    trials.last_mut().unwrap().fills.push((e, slots));
                }
                "prefs" => {
                    want(4)?;
                    let s = node(toks[1])?;
                    let i = arc(&kv(toks[2], "in")?)?;
                    let o = arc(&kv(toks[3], "out")?)?;
                    trials.last_mut().unwrap().prefs.push((s, i, o));
                }
                other => return Err(err(format!("unknown keyword `{other}`"))),
            }
        }
        for t in &trials {
            t.instantiate(net).map_err(|e| DiscreteError::Scenario { line: 0, msg: format!("trial `{}`: {e}", t.label) })?;
        }
        Ok(Scenario { schedule, max_steps, trials })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonRow {
    pub arc: ArcId,
    pub discrete: Rational,
    pub continuous: Rational,
}

impl ComparisonRow {
    pub fn diff(&self) -> Rational {
        &self.discrete - &self.continuous
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialComparison {
    pub label: String,
    pub report: SimulationReport,
    pub rows: Vec<ComparisonRow>,
}

impl TrialComparison {
    pub fn discrepancies(&self) -> usize {
        self.rows.iter().filter(|r| r.discrete != r.continuous).count()
    }
}

/// Simulates every trial with capacity-derived schedules and pairs each arc
/// average with the continuous steady-state throughput.
pub fn compare(net: &SplitterNetwork, trials: &[Trial], max_steps: usize) -> Result<Vec<TrialComparison>, DiscreteError> {
    let (cont, _) = steady_state::solve(net)?;
    let schedule = ActivitySchedule::from_capacities(net);
    trials
        .iter()
        .map(|trial| {
            let (tnet, init) = trial.instantiate(net)?;
            let report = simulate(&tnet, &schedule, &init, max_steps);
            let rows = (0..net.num_arcs())
                .map(|e| ComparisonRow { arc: e, discrete: report.arc_avg[e].clone(), continuous: cont.t[e].clone() })
                .collect();
            Ok(TrialComparison { label: trial.label.clone(), report, rows })
        })
        .collect()
}

/// Trials with the given lengths and with uniform lengths 1 to 4, each from
/// empty belts and from packed belts.
pub fn default_trials(net: &SplitterNetwork) -> Vec<Trial> {
    let mut out = Vec::new();
    let base = Trial::base(net);
    let mut lengths = vec![("given".to_string(), base.lengths.clone())];
    for l in 1..=4 {
        lengths.push((format!("len{l}"), vec![l; net.num_arcs()]));
    }
    for (name, ls) in lengths {
        out.push(Trial { label: format!("{name}/empty"), lengths: ls.clone(), fills: vec![], prefs: vec![] });
        let fills = ls.iter().enumerate().map(|(e, &l)| (e, (1..=l as usize).collect())).collect();
        out.push(Trial { label: format!("{name}/packed"), lengths: ls, fills, prefs: vec![] });
    }
    out
}

/// TSV with a header line and one row per arc for every trial.
pub fn comparison_tsv(net: &SplitterNetwork, results: &[TrialComparison]) -> String {
    let mut s = String::from("trial\tarc\tdiscrete_avg\tcontinuous_t\tdiff\n");
    for r in results {
        for row in &r.rows {
            let disc = if r.report.timed_out() { "timeout".to_string() } else { row.discrete.to_string() };
            let diff = if r.report.timed_out() { "-".to_string() } else { row.diff().to_string() };
            s.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.label, net.arc(row.arc).name, disc, row.continuous, diff));
        }
    }
    s
}
