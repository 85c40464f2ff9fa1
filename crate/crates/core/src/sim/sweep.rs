//! Exhaustive configuration search and the two-socket scaling study.

use serde::Serialize;

use crate::graph::{Graph, HardwareSpec, Node, OperatorKind, ThreadConfig};

use super::{simulate, ticks_to_units, Placement, SchedulePolicy, SimError, Ticks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub config: ThreadConfig,
    pub makespan: Ticks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepResult {
    /// Sorted by makespan, then pools, then threads.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn argmin(&self) -> &SweepRow {
        &self.rows[0]
    }

    pub fn makespan_of(&self, cfg: &ThreadConfig) -> Option<Ticks> {
        self.rows.iter().find(|r| r.config == *cfg).map(|r| r.makespan)
    }
}

/// Simulates every non-oversubscribed `pools x threads` split of the physical
/// cores (intra-op = kernel threads) with `pools <= max_pools`.
pub fn sweep(g: &Graph, hw: &HardwareSpec, max_pools: u32) -> Result<SweepResult, SimError> {
    hw.validate()?;
    let physical = hw.physical_cores();
    let mut rows = Vec::new();
    for pools in 1..=max_pools.max(1).min(physical) {
        for threads in 1..=physical / pools {
            let config = ThreadConfig {
                pools,
                intra_threads: threads,
                kernel_threads: threads,
            };
            let makespan = simulate(g, &config, hw, SchedulePolicy::ASYNC)?.makespan;
            rows.push(SweepRow { config, makespan });
        }
    }
    rows.sort_by_key(|r| (r.makespan, r.config.pools, r.config.intra_threads));
    Ok(SweepResult { rows })
}

/// Cost parameters of a square `n x n x n` MatMul operator.
///
/// Framework overhead grows linearly in `n` (serial) and with the matrix area
/// (parallel prep); the kernel does `2 n^3` flops. Cross-socket traffic is the
/// operand footprint, re-fetched once per cache-capacity worth of working set
/// once the three matrices no longer fit in `cache_bytes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatmulCostModel {
    pub serial_per_dim: f64,
    pub prep_per_element: f64,
    pub element_bytes: f64,
    pub cache_bytes: f64,
}

impl Default for MatmulCostModel {
    fn default() -> Self {
        MatmulCostModel {
            serial_per_dim: 0.01,
            prep_per_element: 1e-4,
            element_bytes: 4.0,
            cache_bytes: 64.0 * 1024.0 * 1024.0,
        }
    }
}

impl MatmulCostModel {
    pub fn node(&self, n: u32) -> Node {
        let dim = n as f64;
        let area = dim * dim;
        let working_set = 3.0 * self.element_bytes * area;
        let refetch = (working_set / self.cache_bytes).max(1.0);
        Node::new(format!("matmul-{n}"), OperatorKind::MatMul).with_costs(
            self.serial_per_dim * dim,
            self.prep_per_element * area,
            2.0 * dim * area,
            self.element_bytes * area * refetch,
        )
    }
}

/// Speedup of one operator on all sockets of `hw` (one data-parallel pool over
/// every physical core) over the same operator on one socket of it.
pub fn socket_speedup(node: &Node, hw: &HardwareSpec) -> Result<f64, SimError> {
    let g = Graph::from_parts(node.id.clone(), vec![node.clone()], vec![])
        .expect("a single node without edges is a valid graph");
    let one = hw.single_socket();
    let base = ThreadConfig::uniform(1, one.physical_cores()).expect("at least one core");
    let wide = ThreadConfig::uniform(1, hw.physical_cores()).expect("at least one core");
    let data = SchedulePolicy {
        mode: super::Mode::Asynchronous,
        placement: Placement::DataParallel,
    };
    let t1 = simulate(&g, &base, &one, data)?.makespan;
    let t2 = simulate(&g, &wide, hw, data)?.makespan;
    if t2 == 0 {
        return Ok(1.0);
    }
    Ok(ticks_to_units(t1) / ticks_to_units(t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{op_time, to_ticks, OpShape};

    fn hw(sockets: u32, cores: u32) -> HardwareSpec {
        HardwareSpec {
            sockets,
            cores_per_socket: cores,
            smt_ways: 2,
            fma_rate: 1.0,
            upi_bandwidth: 1.0,
            dispatch_overhead: 0.0,
        }
    }

    #[test]
    fn sweep_covers_every_split() {
        let g = Graph::from_parts(
            "one",
            vec![Node::new("m", OperatorKind::MatMul).with_costs(0.0, 0.0, 8.0, 0.0)],
            vec![],
        )
        .unwrap();
        let r = sweep(&g, &hw(1, 4), 4).unwrap();
        // (1,1..4), (2,1..2), (3,1), (4,1)
        assert_eq!(r.rows.len(), 8);
        assert_eq!(r.argmin().config, ThreadConfig::uniform(1, 4).unwrap());
        assert_eq!(r.argmin().makespan, to_ticks(op_time(g.node(0), &OpShape::dedicated(4, 4, true), &hw(1, 4))));
        // Ties go to fewer pools: (1,1) and (2,1), (3,1), (4,1) all take 8 units.
        let tail: Vec<u32> = r.rows.iter().filter(|row| row.makespan == to_ticks(8.0)).map(|row| row.config.pools).collect();
        assert_eq!(tail, vec![1, 2, 3, 4]);
    }

    #[test]
    fn one_socket_speedup_is_one() {
        let node = MatmulCostModel::default().node(512);
        let s = socket_speedup(&node, &hw(1, 24)).unwrap();
        assert_eq!(s, 1.0);
    }
}
