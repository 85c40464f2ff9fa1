//! Heavy-operator classification and graph-width metrics.
//!
//! Light nodes are transparent: a heavy node's level is one more than the
//! deepest heavy node reachable backwards from it, with paths allowed to run
//! through any number of light nodes.

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Node, OperatorKind};

/// Compute-intensive and embedding operators are heavy; everything else is
/// ignored by the width metrics.
pub fn classify_heavy(n: &Node) -> bool {
    matches!(
        n.kind,
        OperatorKind::Conv | OperatorKind::MatMul | OperatorKind::Embedding
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthReport {
    pub heavy_count: u32,
    pub heavy_depth: u32,
    pub max_width: u32,
    pub avg_width: u32,
}

/// Heavy level of every node: `Some(level)` (1-based) for heavy nodes, `None`
/// for light ones.
pub fn heavy_levels(g: &Graph) -> Vec<Option<u32>> {
    // carry[i] = deepest heavy level at or above node i.
    let mut carry = vec![0u32; g.len()];
    let mut levels = vec![None; g.len()];
    for idx in g.topo_indices() {
        let above = g.preds(idx).iter().map(|&p| carry[p]).max().unwrap_or(0);
        if classify_heavy(g.node(idx)) {
            levels[idx] = Some(above + 1);
            carry[idx] = above + 1;
        } else {
            carry[idx] = above;
        }
    }
    levels
}

pub fn heavy_depth(g: &Graph) -> u32 {
    heavy_levels(g).into_iter().flatten().max().unwrap_or(0)
}

pub fn max_width(g: &Graph) -> u32 {
    level_histogram(&heavy_levels(g)).into_iter().max().unwrap_or(0)
}

pub fn avg_width(g: &Graph) -> u32 {
    width_report(g).avg_width
}

fn level_histogram(levels: &[Option<u32>]) -> Vec<u32> {
    let depth = levels.iter().flatten().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u32; depth];
    for level in levels.iter().flatten() {
        counts[*level as usize - 1] += 1;
    }
    counts
}

pub fn width_report(g: &Graph) -> WidthReport {
    let levels = heavy_levels(g);
    let counts = level_histogram(&levels);
    let heavy_count: u32 = counts.iter().sum();
    let heavy_depth = counts.len() as u32;
    WidthReport {
        heavy_count,
        heavy_depth,
        max_width: counts.iter().copied().max().unwrap_or(0),
        avg_width: heavy_count.checked_div(heavy_depth).unwrap_or(0),
    }
}

impl WidthReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("width reports always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn node(id: &str, kind: OperatorKind) -> Node {
        Node::new(id, kind).with_costs(0.0, 0.0, 1.0, 0.0)
    }

    fn chain(k: usize, kind: OperatorKind) -> Graph {
        let nodes = (0..k).map(|i| node(&format!("n{i}"), kind)).collect();
        let edges = (1..k).map(|i| (format!("n{}", i - 1), format!("n{i}"))).collect();
        Graph::from_parts("chain", nodes, edges).unwrap()
    }

    #[test]
    fn classification() {
        assert!(classify_heavy(&node("c", OperatorKind::Conv)));
        assert!(classify_heavy(&node("e", OperatorKind::Embedding)));
        assert!(classify_heavy(&node("m", OperatorKind::MatMul)));
        for kind in [
            OperatorKind::ElementwiseMath,
            OperatorKind::Reshape,
            OperatorKind::Concat,
            OperatorKind::Split,
            OperatorKind::Control,
            OperatorKind::Other,
        ] {
            assert!(!classify_heavy(&node("x", kind)), "{kind}");
        }
    }

    #[test]
    fn chains() {
        let g = chain(5, OperatorKind::Conv);
        assert_eq!(heavy_depth(&g), 5);
        assert_eq!(max_width(&g), 1);
        assert_eq!(avg_width(&g), 1);
        let light = chain(4, OperatorKind::ElementwiseMath);
        assert_eq!(width_report(&light), WidthReport { heavy_count: 0, heavy_depth: 0, max_width: 0, avg_width: 0 });
    }

    #[test]
    fn light_nodes_do_not_break_reachability() {
        // a -> relu -> b: b still sits one level below a.
        let g = Graph::from_parts(
            "x",
            vec![
                node("a", OperatorKind::Conv),
                node("relu", OperatorKind::ElementwiseMath),
                node("b", OperatorKind::Conv),
            ],
            vec![("a".into(), "relu".into()), ("relu".into(), "b".into())],
        )
        .unwrap();
        assert_eq!(heavy_levels(&g), vec![Some(1), None, Some(2)]);
    }

    #[test]
    fn empty_graph() {
        let g = Graph::from_parts("e", vec![], vec![]).unwrap();
        assert_eq!(width_report(&g), WidthReport { heavy_count: 0, heavy_depth: 0, max_width: 0, avg_width: 0 });
    }
}
