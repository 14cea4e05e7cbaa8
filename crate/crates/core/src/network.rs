//! Splitter networks: the graph model, validation, normalization, reversal
//! and the line-based text format.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::rational::Rational;

pub type NodeId = usize;
pub type ArcId = usize;

/// Prefix reserved for terminals and arcs created by [`SplitterNetwork::normalize`].
pub const DUMMY_PREFIX: &str = "~";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Input,
    Output,
    Splitter,
}

impl NodeKind {
    fn keyword(self) -> &'static str {
        match self {
            NodeKind::Input => "input",
            NodeKind::Output => "output",
            NodeKind::Splitter => "splitter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    /// Capacity of a terminal; always 1 for splitters.
    pub cap: Rational,
    pub in_prio: Option<ArcId>,
    pub out_prio: Option<ArcId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub name: String,
    pub tail: NodeId,
    pub head: NodeId,
    /// Belt length, only used by the discrete simulator.
    pub len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: {msg}")]
    Semantic { line: usize, msg: String },
    #[error("duplicate {what} name `{name}`")]
    Duplicate { what: &'static str, name: String },
    #[error("cannot normalize splitter `{0}`: {1}")]
    Normalize(String, String),
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
}

/// A broken invariant of a splitter network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.rule, self.subject, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitterNetwork {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<ArcId>>,
    in_arcs: Vec<Vec<ArcId>>,
    node_index: HashMap<String, NodeId>,
    arc_index: HashMap<String, ArcId>,
}

impl SplitterNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: &str, kind: NodeKind, cap: Rational) -> Result<NodeId, NetworkError> {
        if self.node_index.contains_key(name) {
            return Err(NetworkError::Duplicate { what: "node", name: name.to_string() });
        }
        let id = self.nodes.len();
        self.nodes.push(Node { name: name.to_string(), kind, cap, in_prio: None, out_prio: None });
        self.out_arcs.push(Vec::new());
        self.in_arcs.push(Vec::new());
        self.node_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_input(&mut self, name: &str, cap: Rational) -> Result<NodeId, NetworkError> {
        self.add_node(name, NodeKind::Input, cap)
    }

    pub fn add_output(&mut self, name: &str, cap: Rational) -> Result<NodeId, NetworkError> {
        self.add_node(name, NodeKind::Output, cap)
    }

    pub fn add_splitter(&mut self, name: &str) -> Result<NodeId, NetworkError> {
        self.add_node(name, NodeKind::Splitter, Rational::one())
    }

    pub fn add_arc(&mut self, name: &str, tail: NodeId, head: NodeId) -> Result<ArcId, NetworkError> {
        self.add_arc_len(name, tail, head, 1)
    }

    pub fn add_arc_len(&mut self, name: &str, tail: NodeId, head: NodeId, len: u32) -> Result<ArcId, NetworkError> {
        if self.arc_index.contains_key(name) {
            return Err(NetworkError::Duplicate { what: "arc", name: name.to_string() });
        }
        assert!(tail < self.nodes.len() && head < self.nodes.len(), "arc endpoint out of range");
        let id = self.arcs.len();
        self.arcs.push(Arc { name: name.to_string(), tail, head, len });
        self.out_arcs[tail].push(id);
        self.in_arcs[head].push(id);
        self.arc_index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds an arc between named nodes, naming it `tail->head` (with a
    /// `/2`, `/3`, ... suffix when that name is taken).
    pub fn connect(&mut self, tail: &str, head: &str) -> Result<ArcId, NetworkError> {
        let t = self.node_id(tail)?;
        let h = self.node_id(head)?;
        let base = format!("{tail}->{head}");
        let mut name = base.clone();
        let mut k = 2;
        while self.arc_index.contains_key(&name) {
            name = format!("{base}/{k}");
            k += 1;
        }
        self.add_arc(&name, t, h)
    }

    pub fn set_in_prio(&mut self, s: NodeId, arc: Option<ArcId>) {
        self.nodes[s].in_prio = arc;
    }

    pub fn set_out_prio(&mut self, s: NodeId, arc: Option<ArcId>) {
        self.nodes[s].out_prio = arc;
    }

    pub fn set_cap(&mut self, v: NodeId, cap: Rational) {
        self.nodes[v].cap = cap;
    }

    pub fn set_len(&mut self, e: ArcId, len: u32) {
        self.arcs[e].len = len;
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v]
    }

    pub fn arc(&self, e: ArcId) -> &Arc {
        &self.arcs[e]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn out_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.out_arcs[v]
    }

    pub fn in_arcs(&self, v: NodeId) -> &[ArcId] {
        &self.in_arcs[v]
    }

    pub fn node_id(&self, name: &str) -> Result<NodeId, NetworkError> {
        self.node_index
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::Unknown { what: "node", name: name.to_string() })
    }

    pub fn arc_id(&self, name: &str) -> Result<ArcId, NetworkError> {
        self.arc_index
            .get(name)
            .copied()
            .ok_or_else(|| NetworkError::Unknown { what: "arc", name: name.to_string() })
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        self.nodes[v].kind
    }

    pub fn is_splitter(&self, v: NodeId) -> bool {
        self.nodes[v].kind == NodeKind::Splitter
    }

    fn ids_of(&self, kind: NodeKind) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&v| self.nodes[v].kind == kind).collect()
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Input)
    }

    pub fn outputs(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Output)
    }

    pub fn splitters(&self) -> Vec<NodeId> {
        self.ids_of(NodeKind::Splitter)
    }

    /// Arcs leaving an input, in arc-id order.
    pub fn input_arcs(&self) -> Vec<ArcId> {
        (0..self.arcs.len()).filter(|&e| self.is_input_arc(e)).collect()
    }

    /// Arcs entering an output, in arc-id order.
    pub fn output_arcs(&self) -> Vec<ArcId> {
        (0..self.arcs.len()).filter(|&e| self.is_output_arc(e)).collect()
    }

    pub fn is_input_arc(&self, e: ArcId) -> bool {
        self.nodes[self.arcs[e].tail].kind == NodeKind::Input
    }

    pub fn is_output_arc(&self, e: ArcId) -> bool {
        self.nodes[self.arcs[e].head].kind == NodeKind::Output
    }

    /// Capacity extended to arcs: the terminal's capacity on terminal arcs,
    /// 1 between splitters.
    pub fn arc_cap(&self, e: ArcId) -> Rational {
        let a = &self.arcs[e];
        let mut c = Rational::one();
        if self.is_input_arc(e) {
            c = self.nodes[a.tail].cap.clone();
        }
        if self.is_output_arc(e) && self.nodes[a.head].cap < c {
            c = self.nodes[a.head].cap.clone();
        }
        c
    }

    /// The other arc entering the same splitter, if any.
    pub fn in_partner(&self, e: ArcId) -> Option<ArcId> {
        let h = self.arcs[e].head;
        if !self.is_splitter(h) {
            return None;
        }
        self.in_arcs[h].iter().copied().find(|&f| f != e)
    }

    /// The other arc leaving the same splitter, if any.
    pub fn out_partner(&self, e: ArcId) -> Option<ArcId> {
        let t = self.arcs[e].tail;
        if !self.is_splitter(t) {
            return None;
        }
        self.out_arcs[t].iter().copied().find(|&f| f != e)
    }

    pub fn is_dummy_node(&self, v: NodeId) -> bool {
        self.nodes[v].name.starts_with(DUMMY_PREFIX)
    }

    pub fn is_dummy_arc(&self, e: ArcId) -> bool {
        self.arcs[e].name.starts_with(DUMMY_PREFIX)
    }

    pub fn total_input_cap(&self) -> Rational {
        self.inputs().iter().map(|&v| &self.nodes[v].cap).sum()
    }

    pub fn total_output_cap(&self) -> Rational {
        self.outputs().iter().map(|&v| &self.nodes[v].cap).sum()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (v, node) in self.nodes.iter().enumerate() {
            let (din, dout) = (self.in_arcs[v].len(), self.out_arcs[v].len());
            let want = match node.kind {
                NodeKind::Input => (0, 1),
                NodeKind::Output => (1, 0),
                NodeKind::Splitter => (2, 2),
            };
            if (din, dout) != want {
                out.push(Violation {
                    rule: "degree",
                    subject: format!("{} `{}`", node.kind.keyword(), node.name),
                    detail: format!("in-degree {din}, out-degree {dout}; expected {}, {}", want.0, want.1),
                });
            }
            if node.kind != NodeKind::Splitter && !node.cap.in_unit_interval() {
                out.push(Violation {
                    rule: "capacity-range",
                    subject: format!("{} `{}`", node.kind.keyword(), node.name),
                    detail: format!("capacity {} outside [0,1]", node.cap),
                });
            }
            if let Some(e) = node.in_prio {
                if node.kind != NodeKind::Splitter || self.arcs[e].head != v {
                    out.push(Violation {
                        rule: "priority",
                        subject: format!("node `{}`", node.name),
                        detail: format!("inprio arc `{}` does not enter it", self.arcs[e].name),
                    });
                }
            }
            if let Some(e) = node.out_prio {
                if node.kind != NodeKind::Splitter || self.arcs[e].tail != v {
                    out.push(Violation {
                        rule: "priority",
                        subject: format!("node `{}`", node.name),
                        detail: format!("outprio arc `{}` does not leave it", self.arcs[e].name),
                    });
                }
            }
        }
        for a in &self.arcs {
            if a.len == 0 {
                out.push(Violation { rule: "length", subject: format!("arc `{}`", a.name), detail: "length 0".into() });
            }
        }
        out
    }

    /// Gives every splitter side of degree 1 a capacity-0 dummy terminal.
    /// Existing node and arc ids are unchanged; dummies are appended.
    pub fn normalize(&self) -> Result<SplitterNetwork, NetworkError> {
        let mut net = self.clone();
        for s in self.splitters() {
            let name = self.nodes[s].name.clone();
            let (din, dout) = (self.in_arcs[s].len(), self.out_arcs[s].len());
            for (side, d) in [("in", din), ("out", dout)] {
                if d == 0 || d > 2 {
                    return Err(NetworkError::Normalize(name.clone(), format!("{side}-degree {d}")));
                }
            }
            if din == 1 {
                let i = net.add_input(&format!("{DUMMY_PREFIX}in:{name}"), Rational::zero())?;
                net.add_arc(&format!("{DUMMY_PREFIX}in:{name}"), i, s)?;
            }
            if dout == 1 {
                let o = net.add_output(&format!("{DUMMY_PREFIX}out:{name}"), Rational::zero())?;
                net.add_arc(&format!("{DUMMY_PREFIX}out:{name}"), s, o)?;
            }
        }
        Ok(net)
    }

    /// Reverses every arc and swaps inputs with outputs. Ids, names,
    /// capacities and lengths are kept; in- and out-priorities trade places.
    pub fn reverse(&self) -> SplitterNetwork {
        let mut net = SplitterNetwork::new();
        for n in &self.nodes {
            let kind = match n.kind {
                NodeKind::Input => NodeKind::Output,
                NodeKind::Output => NodeKind::Input,
                NodeKind::Splitter => NodeKind::Splitter,
            };
            net.add_node(&n.name, kind, n.cap.clone()).expect("names are unique");
        }
        for a in &self.arcs {
            net.add_arc_len(&a.name, a.head, a.tail, a.len).expect("names are unique");
        }
        for (v, n) in self.nodes.iter().enumerate() {
            net.nodes[v].in_prio = n.out_prio;
            net.nodes[v].out_prio = n.in_prio;
        }
        net
    }

    /// Text form; dummy terminals and their arcs are left out when
    /// `elide_dummies` is set.
    pub fn serialize_with(&self, elide_dummies: bool) -> String {
        let mut s = String::new();
        for (v, n) in self.nodes.iter().enumerate() {
            if elide_dummies && self.is_dummy_node(v) {
                continue;
            }
            s.push_str(n.kind.keyword());
            s.push(' ');
            s.push_str(&n.name);
            if n.kind != NodeKind::Splitter && !n.cap.is_one() {
                s.push_str(&format!(" cap={}", n.cap));
            }
            if let Some(e) = n.in_prio {
                s.push_str(&format!(" inprio={}", self.arcs[e].name));
            }
            if let Some(e) = n.out_prio {
                s.push_str(&format!(" outprio={}", self.arcs[e].name));
            }
            s.push('\n');
        }
        for (e, a) in self.arcs.iter().enumerate() {
            if elide_dummies && self.is_dummy_arc(e) {
                continue;
            }
            s.push_str(&format!("arc {} {} -> {}", a.name, self.nodes[a.tail].name, self.nodes[a.head].name));
            if a.len != 1 {
                s.push_str(&format!(" len={}", a.len));
            }
            s.push('\n');
        }
        s
    }

    pub fn serialize(&self) -> String {
        self.serialize_with(false)
    }

    /// Parses the text format. Nodes and arcs may be declared in any order;
    /// references are resolved after the whole text is read.
    pub fn parse(text: &str) -> Result<SplitterNetwork, NetworkError> {
        struct PendingArc {
            line: usize,
            name: String,
            tail: String,
            head: String,
            len: u32,
        }
        struct PendingPrio {
            line: usize,
            node: NodeId,
            arc: String,
            incoming: bool,
        }
        let mut net = SplitterNetwork::new();
        let mut arcs = Vec::new();
        let mut prios = Vec::new();
        let mut node_lines = HashMap::new();

        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let content = raw.split('#').next().unwrap_or("");
            let toks = tokens(content);
            let Some(&(col0, kw)) = toks.first() else { continue };
            let syntax = |col: usize, msg: String| NetworkError::Syntax { line, col, msg };
            match kw {
                "input" | "output" | "splitter" => {
                    let kind = match kw {
                        "input" => NodeKind::Input,
                        "output" => NodeKind::Output,
                        _ => NodeKind::Splitter,
                    };
                    let &(ncol, name) = toks.get(1).ok_or_else(|| syntax(col0, format!("`{kw}` needs a name")))?;
                    check_name(name).map_err(|m| syntax(ncol, m))?;
                    let mut cap = Rational::one();
                    let mut in_prio = None;
                    let mut out_prio = None;
                    for &(col, tok) in &toks[2..] {
                        let (key, val) = tok.split_once('=').ok_or_else(|| syntax(col, format!("expected key=value, found `{tok}`")))?;
                        match (kind, key) {
                            (NodeKind::Input | NodeKind::Output, "cap") => {
                                cap = val.parse().map_err(|e| syntax(col + 4, format!("{e}")))?;
                                if !cap.in_unit_interval() {
                                    return Err(syntax(col + 4, format!("capacity {cap} outside [0,1]")));
                                }
                            }
                            (NodeKind::Splitter, "inprio") => in_prio = Some(val.to_string()),
                            (NodeKind::Splitter, "outprio") => out_prio = Some(val.to_string()),
                            _ => return Err(syntax(col, format!("unknown attribute `{key}` for {kw}"))),
                        }
                    }
                    let id = net.add_node(name, kind, cap).map_err(|e| NetworkError::Semantic { line, msg: e.to_string() })?;
                    node_lines.insert(id, line);
                    for (arc, incoming) in [(in_prio, true), (out_prio, false)] {
                        if let Some(arc) = arc {
                            prios.push(PendingPrio { line, node: id, arc, incoming });
                        }
                    }
                }
                "arc" => {
                    let get = |i: usize, what: &str| {
                        toks.get(i).copied().ok_or_else(|| syntax(raw.len() + 1, format!("arc line missing {what}")))
                    };
                    let (ncol, name) = get(1, "a name")?;
                    check_name(name).map_err(|m| syntax(ncol, m))?;
                    let (_, tail) = get(2, "a tail")?;
                    let (acol, arrow) = get(3, "`->`")?;
                    if arrow != "->" {
                        return Err(syntax(acol, format!("expected `->`, found `{arrow}`")));
                    }
                    let (_, head) = get(4, "a head")?;
                    let mut len = 1;
                    for &(col, tok) in &toks[5..] {
                        match tok.split_once('=') {
                            Some(("len", v)) => {
                                len = v.parse::<u32>().ok().filter(|&l| l >= 1).ok_or_else(|| syntax(col + 4, format!("bad length `{v}`")))?;
                            }
                            _ => return Err(syntax(col, format!("unknown attribute `{tok}` for arc"))),
                        }
                    }
                    arcs.push(PendingArc { line, name: name.into(), tail: tail.into(), head: head.into(), len });
                }
                other => return Err(syntax(col0, format!("unknown keyword `{other}`"))),
            }
        }

        for a in arcs {
            let sem = |msg: String| NetworkError::Semantic { line: a.line, msg };
            let t = net.node_id(&a.tail).map_err(|e| sem(e.to_string()))?;
            let h = net.node_id(&a.head).map_err(|e| sem(e.to_string()))?;
            net.add_arc_len(&a.name, t, h, a.len).map_err(|e| sem(e.to_string()))?;
        }
        for p in prios {
            let e = net.arc_id(&p.arc).map_err(|e| NetworkError::Semantic { line: p.line, msg: e.to_string() })?;
            let a = &net.arcs[e];
            let ok = if p.incoming { a.head == p.node } else { a.tail == p.node };
            if !ok {
                let dir = if p.incoming { "enter" } else { "leave" };
                return Err(NetworkError::Semantic {
                    line: p.line,
                    msg: format!("priority arc `{}` does not {dir} `{}`", a.name, net.nodes[p.node].name),
                });
            }
            if p.incoming {
                net.nodes[p.node].in_prio = Some(e);
            } else {
                net.nodes[p.node].out_prio = Some(e);
            }
        }
        Ok(net)
    }
}

impl fmt::Display for SplitterNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl std::str::FromStr for SplitterNetwork {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitterNetwork::parse(s)
    }
}

/// Whitespace-separated tokens with their 1-based columns.
pub(crate) fn tokens(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        if ch.is_whitespace() {
            if let Some(b) = start.take() {
                out.push((b + 1, &s[b..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(b) = start {
        out.push((b + 1, &s[b..]));
    }
    out
}

fn check_name(name: &str) -> Result<(), String> {
    if name.contains('=') || name == "->" {
        Err(format!("invalid name `{name}`"))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> SplitterNetwork {
        SplitterNetwork::parse(
            "input i1 cap=3/5\ninput i2 cap=3/5\noutput o1 cap=2/5\noutput o2\nsplitter s\n\
             arc a i1 -> s\narc b i2 -> s\narc c s -> o1\narc d s -> o2\n",
        )
        .unwrap()
    }

    #[test]
    fn parse_basic() {
        let net = SplitterNetwork::parse("input i cap=3/5").unwrap();
        assert_eq!(net.node(0).kind, NodeKind::Input);
        assert_eq!(net.node(0).cap, Rational::new(3, 5));
        let net = single();
        assert_eq!((net.inputs().len(), net.outputs().len(), net.splitters().len()), (2, 2, 1));
        assert!(net.validate().is_empty());
        assert_eq!(net.arc_cap(2), Rational::new(2, 5));
        assert_eq!(net.arc_cap(3), Rational::one());
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = SplitterNetwork::parse("input i cap=3/5\narc a i -> x\n").unwrap_err();
        assert!(matches!(err, NetworkError::Semantic { line: 2, .. }));
        let err = SplitterNetwork::parse("input i\ninput i\n").unwrap_err();
        assert!(matches!(err, NetworkError::Semantic { line: 2, .. }));
        let err = SplitterNetwork::parse("input i cap=0.5\n").unwrap_err();
        assert!(matches!(err, NetworkError::Syntax { line: 1, col: 13, .. }));
        let err = SplitterNetwork::parse("input i cap=3/2\n").unwrap_err();
        assert!(matches!(err, NetworkError::Syntax { line: 1, .. }));
        let err = SplitterNetwork::parse("input i\n  bogus x\n").unwrap_err();
        assert!(matches!(err, NetworkError::Syntax { line: 2, col: 3, .. }));
    }

    #[test]
    fn round_trip() {
        let net = single();
        assert_eq!(SplitterNetwork::parse(&net.serialize()).unwrap(), net);
    }

    #[test]
    fn validate_flags_problems() {
        let mut net = single();
        let o = net.add_output("o3", Rational::one()).unwrap();
        net.add_arc("e", 4, o).unwrap();
        let v = net.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "degree");
        assert!(v[0].subject.contains("`s`"));
        net = single();
        net.set_cap(0, Rational::new(3, 2));
        assert_eq!(net.validate()[0].rule, "capacity-range");
    }

    #[test]
    fn normalize_chain() {
        let mut net = SplitterNetwork::new();
        let i = net.add_input("i", Rational::one()).unwrap();
        let a = net.add_splitter("a").unwrap();
        let b = net.add_splitter("b").unwrap();
        let c = net.add_splitter("c").unwrap();
        let o = net.add_output("o", Rational::one()).unwrap();
        net.add_arc("0", i, a).unwrap();
        net.add_arc("1", a, b).unwrap();
        net.add_arc("2", b, c).unwrap();
        net.add_arc("3", c, o).unwrap();
        let n = net.normalize().unwrap();
        assert_eq!(n.num_arcs() - net.num_arcs(), 6);
        assert!(n.validate().is_empty());
        for e in 0..net.num_arcs() {
            assert_eq!(n.arc(e), net.arc(e));
        }
        assert_eq!(n.normalize().unwrap(), n);
    }

    #[test]
    fn reverse_is_involution() {
        let net = single();
        let r = net.reverse();
        assert_eq!(r.inputs().len(), 2);
        assert_eq!(r.node(r.node_id("o1").unwrap()).kind, NodeKind::Input);
        assert!(r.validate().is_empty());
        assert_eq!(r.reverse(), net);
    }
}
