//! Example graphs and hardware specs shipped with the crate.
//!
//! All costs are synthetic (time-unit = 1 ms, flops calibrated against a
//! 32 GFLOP/s core); only the graph shapes follow real models.

use crate::graph::{parse_graph, parse_hardware, Graph, HardwareSpec, Node, OperatorKind};

pub const GRAPHS: &[(&str, &str)] = &[
    ("chain-5", include_str!("../graphs/chain-5.json")),
    ("fig2-toy", include_str!("../graphs/fig2-toy.json")),
    ("inception-module4", include_str!("../graphs/inception-module4.json")),
    ("ncf-like", include_str!("../graphs/ncf-like.json")),
    ("widedeep-like", include_str!("../graphs/widedeep-like.json")),
    ("transformer-like", include_str!("../graphs/transformer-like.json")),
    ("dense-like", include_str!("../graphs/dense-like.json")),
    ("squeeze-like", include_str!("../graphs/squeeze-like.json")),
    ("resnet-like", include_str!("../graphs/resnet-like.json")),
    ("inceptionv3-like", include_str!("../graphs/inceptionv3-like.json")),
];

pub const HARDWARE: &[(&str, &str)] = &[
    ("two-socket-24", include_str!("../hw/two-socket-24.json")),
    ("one-socket-24", include_str!("../hw/one-socket-24.json")),
    ("four-core", include_str!("../hw/four-core.json")),
    ("single-core", include_str!("../hw/single-core.json")),
];

pub fn graph_names() -> impl Iterator<Item = &'static str> {
    GRAPHS.iter().map(|(name, _)| *name)
}

pub fn graph(name: &str) -> Option<Graph> {
    GRAPHS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_graph(text).expect("bundled graphs are valid"))
}

pub fn hardware(name: &str) -> Option<HardwareSpec> {
    HARDWARE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_hardware(text).expect("bundled hardware specs are valid"))
}

pub fn all_graphs() -> Vec<Graph> {
    graph_names().map(|n| graph(n).expect("listed")).collect()
}

/// A chain of `k` identical operators `n0 -> n1 -> ...`.
pub fn chain(k: usize, kind: OperatorKind, serial_prep: f64, parallel_prep: f64, flops: f64) -> Graph {
    let nodes = (0..k)
        .map(|i| Node::new(format!("n{i}"), kind).with_costs(serial_prep, parallel_prep, flops, 0.0))
        .collect();
    let edges = (1..k).map(|i| (format!("n{}", i - 1), format!("n{i}"))).collect();
    Graph::from_parts(format!("chain-{k}"), nodes, edges).expect("chains are acyclic")
}
