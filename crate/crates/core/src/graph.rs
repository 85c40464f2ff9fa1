//! Operator graphs and hardware descriptions.
//!
//! A [`Graph`] is always validated: the only ways to obtain one are
//! [`Graph::new`], [`parse_graph`] and the bundled constructors, all of which
//! run [`validate`] first. Costs are abstract model parameters (time-units and
//! flop counts), never wall-clock measurements.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Operator category. Decides whether a node is heavy for width analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorKind {
    Conv,
    MatMul,
    Embedding,
    ElementwiseMath,
    Reshape,
    Concat,
    Split,
    Control,
    Other,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 9] = [
        OperatorKind::Conv,
        OperatorKind::MatMul,
        OperatorKind::Embedding,
        OperatorKind::ElementwiseMath,
        OperatorKind::Reshape,
        OperatorKind::Concat,
        OperatorKind::Split,
        OperatorKind::Control,
        OperatorKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Conv => "Conv",
            OperatorKind::MatMul => "MatMul",
            OperatorKind::Embedding => "Embedding",
            OperatorKind::ElementwiseMath => "ElementwiseMath",
            OperatorKind::Reshape => "Reshape",
            OperatorKind::Concat => "Concat",
            OperatorKind::Split => "Split",
            OperatorKind::Control => "Control",
            OperatorKind::Other => "Other",
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One operator and its cost parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub kind: OperatorKind,
    /// Non-parallelizable framework work, in time-units.
    pub serial_prep: f64,
    /// Data preparation divisible across intra-op threads, in time-units.
    pub parallel_prep: f64,
    /// FMA-bound kernel work.
    pub flops: f64,
    /// Data volume moved when the operator's data crosses sockets.
    pub bytes: f64,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: OperatorKind) -> Self {
        Node {
            id: id.into(),
            kind,
            serial_prep: 0.0,
            parallel_prep: 0.0,
            flops: 0.0,
            bytes: 0.0,
        }
    }

    pub fn with_costs(mut self, serial_prep: f64, parallel_prep: f64, flops: f64, bytes: f64) -> Self {
        self.serial_prep = serial_prep;
        self.parallel_prep = parallel_prep;
        self.flops = flops;
        self.bytes = bytes;
        self
    }

    /// True when the node carries no work at all (pure control flow).
    pub fn is_free(&self) -> bool {
        self.serial_prep == 0.0 && self.parallel_prep == 0.0 && self.flops == 0.0
    }

    fn cost_fields(&self) -> [(&'static str, f64); 4] {
        [
            ("serial_prep", self.serial_prep),
            ("parallel_prep", self.parallel_prep),
            ("flops", self.flops),
            ("bytes", self.bytes),
        ]
    }
}

/// The on-disk form of a graph. Not yet validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub name: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<(String, String)>,
}

/// A single violated graph invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphIssue {
    #[error("node `{node}`: field `{field}` must be finite and non-negative")]
    BadCost { node: String, field: &'static str },
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("edge `{from}` -> `{to}` references unknown node `{missing}`")]
    DanglingEdge { from: String, to: String, missing: String },
    #[error("duplicate edge `{from}` -> `{to}`")]
    DuplicateEdge { from: String, to: String },
    #[error("cycle through node(s) {}", fmt_ids(.nodes))]
    Cycle { nodes: Vec<String> },
}

fn fmt_ids(ids: &[String]) -> String {
    ids.iter().map(|s| format!("`{s}`")).collect::<Vec<_>>().join(", ")
}

/// Every invariant violation found in one graph.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid graph `{name}`: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors {
    pub name: String,
    pub issues: Vec<GraphIssue>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationErrors),
}

/// Checks every graph invariant and reports all violations.
pub fn validate(doc: &GraphDoc) -> Result<(), ValidationErrors> {
    let mut issues = Vec::new();

    let mut seen = HashSet::new();
    for node in &doc.nodes {
        if !seen.insert(node.id.as_str()) {
            issues.push(GraphIssue::DuplicateId(node.id.clone()));
        }
        for (field, value) in node.cost_fields() {
            if !value.is_finite() || value < 0.0 {
                issues.push(GraphIssue::BadCost {
                    node: node.id.clone(),
                    field,
                });
            }
        }
    }

    let mut edge_set = HashSet::new();
    let mut usable = Vec::new();
    for (from, to) in &doc.edges {
        let mut ok = true;
        for end in [from, to] {
            if !seen.contains(end.as_str()) {
                issues.push(GraphIssue::DanglingEdge {
                    from: from.clone(),
                    to: to.clone(),
                    missing: end.clone(),
                });
                ok = false;
                break;
            }
        }
        if !edge_set.insert((from.as_str(), to.as_str())) {
            issues.push(GraphIssue::DuplicateEdge {
                from: from.clone(),
                to: to.clone(),
            });
            ok = false;
        }
        if ok && from == to {
            // A self-edge is the shortest possible cycle.
            issues.push(GraphIssue::Cycle {
                nodes: vec![from.clone()],
            });
            ok = false;
        }
        if ok {
            usable.push((from.as_str(), to.as_str()));
        }
    }

    if let Some(cycle) = find_cycle(&seen, &usable) {
        issues.push(GraphIssue::Cycle { nodes: cycle });
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors {
            name: doc.name.clone(),
            issues,
        })
    }
}

/// Kahn's algorithm over the well-formed edges; whatever is left over sits on
/// or behind a cycle. Returns the leftover nodes that lie on a cycle, sorted.
fn find_cycle(ids: &HashSet<&str>, edges: &[(&str, &str)]) -> Option<Vec<String>> {
    let mut indegree: HashMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succs: HashMap<&str, Vec<&str>> = HashMap::new();
    for &(from, to) in edges {
        *indegree.get_mut(to).expect("edge endpoints checked") += 1;
        succs.entry(from).or_default().push(to);
    }
    let mut queue: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut removed = HashSet::new();
    while let Some(id) = queue.pop() {
        removed.insert(id);
        for &next in succs.get(id).into_iter().flatten() {
            let d = indegree.get_mut(next).expect("edge endpoints checked");
            *d -= 1;
            if *d == 0 {
                queue.push(next);
            }
        }
    }
    if removed.len() == ids.len() {
        return None;
    }
    // Among the leftovers, keep only those that can reach themselves.
    let left: HashSet<&str> = ids.iter().copied().filter(|id| !removed.contains(id)).collect();
    let mut on_cycle: Vec<String> = left
        .iter()
        .filter(|&&start| {
            let mut stack: Vec<&str> = succs.get(start).cloned().unwrap_or_default();
            let mut visited = HashSet::new();
            while let Some(n) = stack.pop() {
                if n == start {
                    return true;
                }
                if left.contains(n) && visited.insert(n) {
                    stack.extend(succs.get(n).into_iter().flatten().copied());
                }
            }
            false
        })
        .map(|s| s.to_string())
        .collect();
    on_cycle.sort();
    Some(on_cycle)
}

/// A validated, immutable operator DAG.
#[derive(Debug, Clone)]
pub struct Graph {
    doc: GraphDoc,
    index: HashMap<String, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl Graph {
    pub fn new(doc: GraphDoc) -> Result<Self, ValidationErrors> {
        validate(&doc)?;
        let index: HashMap<String, usize> =
            doc.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let mut preds = vec![Vec::new(); doc.nodes.len()];
        let mut succs = vec![Vec::new(); doc.nodes.len()];
        for (from, to) in &doc.edges {
            let (u, v) = (index[from], index[to]);
            succs[u].push(v);
            preds[v].push(u);
        }
        for list in preds.iter_mut().chain(succs.iter_mut()) {
            list.sort_by(|a, b| doc.nodes[*a].id.cmp(&doc.nodes[*b].id));
        }
        Ok(Graph {
            doc,
            index,
            preds,
            succs,
        })
    }

    pub fn from_parts(
        name: impl Into<String>,
        nodes: Vec<Node>,
        edges: Vec<(String, String)>,
    ) -> Result<Self, ValidationErrors> {
        Graph::new(GraphDoc {
            name: name.into(),
            nodes,
            edges,
        })
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.doc.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.doc.nodes[idx]
    }

    pub fn len(&self) -> usize {
        self.doc.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc.nodes.is_empty()
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.doc.edges
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Predecessor indices, sorted by node id.
    pub fn preds(&self, idx: usize) -> &[usize] {
        &self.preds[idx]
    }

    /// Successor indices, sorted by node id.
    pub fn succs(&self, idx: usize) -> &[usize] {
        &self.succs[idx]
    }

    pub fn doc(&self) -> &GraphDoc {
        &self.doc
    }

    /// Node indices in dependency order, ties broken by lexicographic id.
    pub fn topo_indices(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<(&str, usize)> = indegree
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == 0)
            .map(|(i, _)| (self.doc.nodes[i].id.as_str(), i))
            .collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some((_, idx)) = ready.pop_first() {
            order.push(idx);
            for &next in &self.succs[idx] {
                indegree[next] -= 1;
                if indegree[next] == 0 {
                    ready.insert((self.doc.nodes[next].id.as_str(), next));
                }
            }
        }
        debug_assert_eq!(order.len(), self.len(), "validated graphs are acyclic");
        order
    }

    /// Pretty JSON in the graph file format. Byte-stable for equal graphs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("graph documents always serialize")
    }
}

/// Parses and validates a graph file.
pub fn parse_graph(text: &str) -> Result<Graph, ParseError> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    Ok(Graph::new(doc)?)
}

pub fn topological_order(g: &Graph) -> Vec<String> {
    g.topo_indices().into_iter().map(|i| g.node(i).id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HardwareError {
    #[error("hardware field `{0}` must be at least 1")]
    ZeroCount(&'static str),
    #[error("hardware field `{0}` must be finite and positive")]
    NonPositive(&'static str),
    #[error("hardware field `dispatch_overhead` must be finite and non-negative")]
    BadOverhead,
}

#[derive(Debug, Error)]
pub enum HardwareParseError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] HardwareError),
}

/// Machine description used by the tuner and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub sockets: u32,
    pub cores_per_socket: u32,
    /// Hardware threads per physical core.
    pub smt_ways: u32,
    /// Flops per time-unit per physical core.
    pub fma_rate: f64,
    /// Inter-socket bytes per time-unit.
    pub upi_bandwidth: f64,
    /// Time-units per participating worker thread per operator dispatch.
    pub dispatch_overhead: f64,
}

impl HardwareSpec {
    pub fn validate(&self) -> Result<(), HardwareError> {
        if self.sockets == 0 {
            return Err(HardwareError::ZeroCount("sockets"));
        }
        if self.cores_per_socket == 0 {
            return Err(HardwareError::ZeroCount("cores_per_socket"));
        }
        if self.smt_ways == 0 {
            return Err(HardwareError::ZeroCount("smt_ways"));
        }
        if !(self.fma_rate.is_finite() && self.fma_rate > 0.0) {
            return Err(HardwareError::NonPositive("fma_rate"));
        }
        if !(self.upi_bandwidth.is_finite() && self.upi_bandwidth > 0.0) {
            return Err(HardwareError::NonPositive("upi_bandwidth"));
        }
        if !(self.dispatch_overhead.is_finite() && self.dispatch_overhead >= 0.0) {
            return Err(HardwareError::BadOverhead);
        }
        Ok(())
    }

    pub fn physical_cores(&self) -> u32 {
        self.sockets * self.cores_per_socket
    }

    pub fn logical_cores(&self) -> u32 {
        self.physical_cores() * self.smt_ways
    }

    /// The same machine cut down to one socket.
    pub fn single_socket(&self) -> HardwareSpec {
        HardwareSpec { sockets: 1, ..*self }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hardware specs always serialize")
    }
}

pub fn parse_hardware(text: &str) -> Result<HardwareSpec, HardwareParseError> {
    let hw: HardwareSpec = serde_json::from_str(text)?;
    hw.validate()?;
    Ok(hw)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("thread config fields must be positive (got pools={pools}, intra={intra}, kernel={kernel})")]
pub struct ThreadConfigError {
    pub pools: u32,
    pub intra: u32,
    pub kernel: u32,
}

/// Inter-op pools, and intra-op and kernel threads per pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ThreadConfig {
    pub pools: u32,
    pub intra_threads: u32,
    pub kernel_threads: u32,
}

impl ThreadConfig {
    pub fn new(pools: u32, intra_threads: u32, kernel_threads: u32) -> Result<Self, ThreadConfigError> {
        if pools == 0 || intra_threads == 0 || kernel_threads == 0 {
            return Err(ThreadConfigError {
                pools,
                intra: intra_threads,
                kernel: kernel_threads,
            });
        }
        Ok(ThreadConfig {
            pools,
            intra_threads,
            kernel_threads,
        })
    }

    /// `pools` pools with `threads` intra-op and `threads` kernel threads each.
    pub fn uniform(pools: u32, threads: u32) -> Result<Self, ThreadConfigError> {
        ThreadConfig::new(pools, threads, threads)
    }

    /// Worker slots one pool occupies: an intra-op thread and a kernel thread
    /// pair up on one slot.
    pub fn threads_per_pool(&self) -> u32 {
        self.intra_threads.max(self.kernel_threads)
    }
}

impl fmt::Display for ThreadConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pools={} intra={} kernel={}",
            self.pools, self.intra_threads, self.kernel_threads
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm(id: &str) -> Node {
        Node::new(id, OperatorKind::MatMul).with_costs(1.0, 1.0, 1.0, 1.0)
    }

    fn edge(a: &str, b: &str) -> (String, String) {
        (a.to_string(), b.to_string())
    }

    #[test]
    fn parses_minimal_graph() {
        let text = r#"{"name":"ab","nodes":[
            {"id":"a","kind":"MatMul","serial_prep":1,"parallel_prep":1,"flops":1,"bytes":1},
            {"id":"b","kind":"MatMul","serial_prep":1,"parallel_prep":1,"flops":1,"bytes":1}],
            "edges":[["a","b"]]}"#;
        let g = parse_graph(text).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.succs(0), &[1]);
    }

    #[test]
    fn self_edge_is_a_cycle_naming_the_node() {
        let text = r#"{"name":"loop","nodes":[
            {"id":"a","kind":"Conv","serial_prep":0,"parallel_prep":0,"flops":1,"bytes":0}],
            "edges":[["a","a"]]}"#;
        let err = parse_graph(text).unwrap_err();
        let ParseError::Invalid(errs) = err else { panic!("expected semantic error") };
        assert_eq!(errs.issues, vec![GraphIssue::Cycle { nodes: vec!["a".into()] }]);
        assert!(errs.to_string().contains("`a`"));
    }

    #[test]
    fn syntax_errors_and_unknown_fields() {
        assert!(matches!(parse_graph("{not json"), Err(ParseError::Syntax(_))));
        let extra = r#"{"name":"x","nodes":[],"edges":[],"extra":1}"#;
        assert!(matches!(parse_graph(extra), Err(ParseError::Syntax(_))));
        let bad_kind = r#"{"name":"x","nodes":[{"id":"a","kind":"Pool","serial_prep":0,"parallel_prep":0,"flops":0,"bytes":0}],"edges":[]}"#;
        assert!(matches!(parse_graph(bad_kind), Err(ParseError::Syntax(_))));
    }

    #[test]
    fn empty_graph_is_valid() {
        let doc = GraphDoc {
            name: "empty".into(),
            nodes: vec![],
            edges: vec![],
        };
        assert!(validate(&doc).is_ok());
        assert!(topological_order(&Graph::new(doc).unwrap()).is_empty());
    }

    #[test]
    fn two_cycle_is_reported() {
        let doc = GraphDoc {
            name: "c".into(),
            nodes: vec![mm("a"), mm("b"), mm("c")],
            edges: vec![edge("a", "b"), edge("b", "a"), edge("b", "c")],
        };
        let errs = validate(&doc).unwrap_err();
        assert_eq!(errs.issues, vec![GraphIssue::Cycle { nodes: vec!["a".into(), "b".into()] }]);
    }

    #[test]
    fn dangling_duplicate_and_cost_errors_all_reported() {
        let mut neg = mm("n");
        neg.flops = -1.0;
        let mut nan = mm("m");
        nan.bytes = f64::NAN;
        let doc = GraphDoc {
            name: "bad".into(),
            nodes: vec![mm("a"), mm("a"), neg, nan],
            edges: vec![edge("a", "z"), edge("a", "n"), edge("a", "n")],
        };
        let errs = validate(&doc).unwrap_err();
        assert!(errs.issues.contains(&GraphIssue::DuplicateId("a".into())));
        assert!(errs.issues.contains(&GraphIssue::DanglingEdge {
            from: "a".into(),
            to: "z".into(),
            missing: "z".into()
        }));
        assert!(errs.issues.contains(&GraphIssue::DuplicateEdge { from: "a".into(), to: "n".into() }));
        assert!(errs.issues.contains(&GraphIssue::BadCost { node: "n".into(), field: "flops" }));
        assert!(errs.issues.contains(&GraphIssue::BadCost { node: "m".into(), field: "bytes" }));
        assert_eq!(errs.issues.len(), 5);
    }

    #[test]
    fn control_nodes_may_be_free() {
        let g = Graph::from_parts("c", vec![Node::new("s", OperatorKind::Control)], vec![]).unwrap();
        assert!(g.node(0).is_free());
    }

    #[test]
    fn topological_examples() {
        let chain = Graph::from_parts(
            "chain",
            vec![mm("c"), mm("b"), mm("a")],
            vec![edge("a", "b"), edge("b", "c")],
        )
        .unwrap();
        assert_eq!(topological_order(&chain), ["a", "b", "c"]);

        let diamond = Graph::from_parts(
            "diamond",
            vec![mm("d"), mm("c"), mm("b"), mm("a")],
            vec![edge("a", "c"), edge("a", "b"), edge("b", "d"), edge("c", "d")],
        )
        .unwrap();
        assert_eq!(topological_order(&diamond), ["a", "b", "c", "d"]);

        let free = Graph::from_parts("free", vec![mm("x"), mm("m")], vec![]).unwrap();
        assert_eq!(topological_order(&free), ["m", "x"]);
    }

    #[test]
    fn hardware_validation() {
        let hw = HardwareSpec {
            sockets: 2,
            cores_per_socket: 24,
            smt_ways: 2,
            fma_rate: 1.0,
            upi_bandwidth: 100.0,
            dispatch_overhead: 0.0,
        };
        assert_eq!(hw.physical_cores(), 48);
        assert_eq!(hw.logical_cores(), 96);
        assert!(hw.validate().is_ok());
        assert_eq!(
            HardwareSpec { smt_ways: 0, ..hw }.validate(),
            Err(HardwareError::ZeroCount("smt_ways"))
        );
        assert_eq!(
            HardwareSpec { fma_rate: 0.0, ..hw }.validate(),
            Err(HardwareError::NonPositive("fma_rate"))
        );
        assert_eq!(
            HardwareSpec { dispatch_overhead: -1.0, ..hw }.validate(),
            Err(HardwareError::BadOverhead)
        );
        let text = hw.to_json();
        assert_eq!(parse_hardware(&text).unwrap(), hw);
        assert!(parse_hardware(r#"{"sockets":1}"#).is_err());
    }

    #[test]
    fn thread_config_rejects_zero() {
        assert!(ThreadConfig::new(0, 1, 1).is_err());
        assert!(ThreadConfig::uniform(2, 0).is_err());
        let cfg = ThreadConfig::new(2, 3, 5).unwrap();
        assert_eq!(cfg.threads_per_pool(), 5);
    }
}
