use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::Serialize;

use crate::graph::{Graph, HardwareSpec, ThreadConfig};

use super::layout::{self, Layout};
use super::{fmt_ticks, op_parts, op_time, to_ticks, Mode, OpShape, Placement, SchedulePolicy, SimError, Ticks};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub node_id: String,
    pub pool_id: u32,
    pub socket_id: u32,
    pub start: Ticks,
    pub end: Ticks,
}

/// Time one logical core spent computing, waiting on a barrier or transfer,
/// and with nothing to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoreTime {
    pub core_id: u32,
    pub socket_id: u32,
    pub busy: Ticks,
    pub sync: Ticks,
    pub idle: Ticks,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub config: ThreadConfig,
    pub policy: SchedulePolicy,
    pub makespan: Ticks,
    pub per_core: Vec<CoreTime>,
    pub trace: Vec<TraceEvent>,
}

impl SimResult {
    /// Busy ticks summed per socket.
    pub fn socket_busy(&self) -> Vec<Ticks> {
        let sockets = self.per_core.iter().map(|c| c.socket_id + 1).max().unwrap_or(0) as usize;
        let mut out = vec![0; sockets];
        for c in &self.per_core {
            out[c.socket_id as usize] += c.busy;
        }
        out
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("node_id,pool_id,socket_id,start,end\n");
        for e in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.node_id,
                e.pool_id,
                e.socket_id,
                fmt_ticks(e.start),
                fmt_ticks(e.end)
            ));
        }
        out
    }

    pub fn cores_csv(&self) -> String {
        let mut out = String::from("core_id,busy,sync,idle\n");
        for c in &self.per_core {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.core_id,
                fmt_ticks(c.busy),
                fmt_ticks(c.sync),
                fmt_ticks(c.idle)
            ));
        }
        out
    }
}

/// Event-driven run of `g`; see the module docs for the cost model.
///
/// Ready operators queue FIFO by the time they became ready, ties broken by
/// node id, and go to the lowest-numbered idle pool. Synchronous mode is the
/// same loop with a single pool.
pub fn simulate(g: &Graph, cfg: &ThreadConfig, hw: &HardwareSpec, policy: SchedulePolicy) -> Result<SimResult, SimError> {
    let effective = match policy.mode {
        Mode::Synchronous => ThreadConfig { pools: 1, ..*cfg },
        Mode::Asynchronous => *cfg,
    };
    let layout = layout::build(&effective, hw, policy.placement)?;
    Ok(run(g, &effective, hw, policy, &layout))
}

/// Asynchronous run with pools spread over sockets. With one socket both
/// placements behave exactly like [`simulate`] on a single socket.
pub fn simulate_multisocket(
    g: &Graph,
    cfg: &ThreadConfig,
    hw: &HardwareSpec,
    placement: Placement,
) -> Result<SimResult, SimError> {
    simulate(
        g,
        cfg,
        hw,
        SchedulePolicy {
            mode: Mode::Asynchronous,
            placement,
        },
    )
}

fn run(g: &Graph, cfg: &ThreadConfig, hw: &HardwareSpec, policy: SchedulePolicy, layout: &Layout) -> SimResult {
    let logical = hw.logical_cores() as usize;
    let physical = hw.physical_cores();
    let shape = layout.shape;
    let mut busy = vec![0 as Ticks; logical];
    let mut sync = vec![0 as Ticks; logical];
    let mut hosted = vec![false; logical];
    for pool in &layout.pools {
        for (k, slot) in pool.slots.iter().enumerate() {
            let k = k as u32;
            if slot.kernel_core == slot.intra_core || k < shape.kernel {
                hosted[slot.kernel_core as usize] = true;
            }
            if k < shape.intra {
                hosted[slot.intra_core as usize] = true;
            }
        }
    }

    let mut waiting: Vec<usize> = (0..g.len()).map(|i| g.preds(i).len()).collect();
    let mut ready: BTreeSet<(Ticks, &str, usize)> = (0..g.len())
        .filter(|&i| waiting[i] == 0)
        .map(|i| (0, g.node(i).id.as_str(), i))
        .collect();
    let mut finish: Vec<Ticks> = vec![0; g.len()];
    let mut placed_on: Vec<u32> = vec![0; g.len()];
    let mut pool_busy = vec![false; layout.pools.len()];
    let mut completions: BinaryHeap<Reverse<(Ticks, usize, usize)>> = BinaryHeap::new();
    let mut trace = Vec::with_capacity(g.len());
    let mut now: Ticks = 0;

    loop {
        while let Some(pool_id) = pool_busy.iter().position(|b| !b) {
            let Some((_, _, idx)) = ready.pop_first() else { break };
            let node = g.node(idx);
            let pool = &layout.pools[pool_id];

            let mut data_at = now;
            if policy.placement == Placement::ModelParallel {
                for &p in g.preds(idx) {
                    if placed_on[p] != pool.socket {
                        let arrival = finish[p] + to_ticks(g.node(p).bytes / hw.upi_bandwidth);
                        data_at = data_at.max(arrival);
                    }
                }
            }
            let start = data_at;
            let parts = op_parts(node, &shape, hw);
            let transfer = if policy.placement == Placement::DataParallel && pool.spans_sockets && !node.is_free() {
                node.bytes / hw.upi_bandwidth
            } else {
                0.0
            };
            let duration = to_ticks(parts.total + transfer);
            let end = start + duration;

            let occupied = end - now;
            for (k, slot) in pool.slots.iter().enumerate() {
                let k = k as u32;
                let head = if k == 0 { parts.serial } else { 0.0 };
                let prep = if k < shape.intra { parts.prep } else { 0.0 };
                let compute = if k < shape.kernel { parts.compute } else { 0.0 };
                if slot.kernel_core == slot.intra_core {
                    let b = to_ticks(head + prep + compute).min(duration);
                    busy[slot.kernel_core as usize] += b;
                    sync[slot.kernel_core as usize] += occupied - b;
                } else {
                    if k < shape.kernel {
                        let b = to_ticks(compute).min(duration);
                        busy[slot.kernel_core as usize] += b;
                        sync[slot.kernel_core as usize] += occupied - b;
                    }
                    if k < shape.intra {
                        let b = to_ticks(head + prep).min(duration);
                        busy[slot.intra_core as usize] += b;
                        sync[slot.intra_core as usize] += occupied - b;
                    }
                }
            }

            trace.push(TraceEvent {
                node_id: node.id.clone(),
                pool_id: pool_id as u32,
                socket_id: pool.socket,
                start,
                end,
            });
            placed_on[idx] = pool.socket;
            if end == now {
                finish[idx] = now;
                release(g, idx, now, &mut waiting, &mut ready);
            } else {
                pool_busy[pool_id] = true;
                completions.push(Reverse((end, pool_id, idx)));
            }
        }

        let Some(&Reverse((t, _, _))) = completions.peek() else { break };
        now = t;
        while let Some(&Reverse((t2, pool_id, idx))) = completions.peek() {
            if t2 != t {
                break;
            }
            completions.pop();
            pool_busy[pool_id] = false;
            finish[idx] = t;
            release(g, idx, t, &mut waiting, &mut ready);
        }
    }
    debug_assert!(ready.is_empty() && waiting.iter().all(|w| *w == 0));

    let makespan = now;
    trace.sort_by_key(|e| (e.start, e.pool_id, e.end));
    let per_core = (0..logical)
        .map(|l| {
            let (b, s) = if hosted[l] { (busy[l], sync[l]) } else { (0, 0) };
            CoreTime {
                core_id: l as u32,
                socket_id: (l as u32 % physical) / hw.cores_per_socket,
                busy: b,
                sync: s,
                idle: makespan - b - s,
            }
        })
        .collect();

    SimResult {
        config: *cfg,
        policy,
        makespan,
        per_core,
        trace,
    }
}

fn release<'g>(g: &'g Graph, idx: usize, at: Ticks, waiting: &mut [usize], ready: &mut BTreeSet<(Ticks, &'g str, usize)>) {
    for &next in g.succs(idx) {
        waiting[next] -= 1;
        if waiting[next] == 0 {
            ready.insert((at, g.node(next).id.as_str(), next));
        }
    }
}

/// Longest path with every node at the cheapest duration any pool shape on
/// `hw` could give it (all thread counts, prep hidden on SMT siblings).
pub fn critical_path_bound(g: &Graph, hw: &HardwareSpec) -> Ticks {
    let physical = hw.physical_cores();
    let logical = hw.logical_cores();
    let cheapest: Vec<Ticks> = g
        .nodes()
        .iter()
        .map(|n| {
            if n.is_free() {
                return 0;
            }
            let mut best = Ticks::MAX;
            for intra in 1..=logical {
                for kernel in 1..=physical {
                    best = best.min(to_ticks(op_time(n, &OpShape::dedicated(intra, kernel, true), hw)));
                }
            }
            best
        })
        .collect();
    let mut longest = vec![0 as Ticks; g.len()];
    for idx in g.topo_indices() {
        let before = g.preds(idx).iter().map(|&p| longest[p]).max().unwrap_or(0);
        longest[idx] = before + cheapest[idx];
    }
    longest.into_iter().max().unwrap_or(0)
}

/// Every node back to back on one pool shaped by `cfg` (single-socket
/// placement), i.e. the makespan with no inter-op parallelism at all.
pub fn serial_sum(g: &Graph, cfg: &ThreadConfig, hw: &HardwareSpec, policy: SchedulePolicy) -> Result<Ticks, SimError> {
    let effective = match policy.mode {
        Mode::Synchronous => ThreadConfig { pools: 1, ..*cfg },
        Mode::Asynchronous => *cfg,
    };
    let layout = layout::build(&effective, hw, Placement::SingleSocket)?;
    Ok(g.nodes().iter().map(|n| to_ticks(op_time(n, &layout.shape, hw))).sum())
}
