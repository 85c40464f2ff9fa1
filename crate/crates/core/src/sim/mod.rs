//! Discrete-event simulation of operator scheduling on inter-op pools.
//!
//! Time is kept in integer ticks ([`TICKS_PER_UNIT`] per time-unit) so that
//! per-core accounting sums exactly. Each operator's duration comes from
//! [`op_time`]:
//!
//! ```text
//! serial_prep + flops / (fma_rate * fma_units) + prep + dispatch_overhead * (intra + kernel - 1)
//! prep = parallel_prep / intra                               (threads time-share a core)
//! prep = max(0, parallel_prep / intra - flops / (...))       (prep on the SMT sibling, hidden under compute)
//! ```
//!
//! Nodes without any work cost nothing, dispatch included.

mod engine;
mod layout;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{HardwareError, HardwareSpec, Node};

pub use engine::{critical_path_bound, serial_sum, simulate, simulate_multisocket, CoreTime, SimResult, TraceEvent};
pub use sweep::{socket_speedup, sweep, MatmulCostModel, SweepResult, SweepRow};

pub type Ticks = u64;

pub const TICKS_PER_UNIT: u64 = 1_000_000;

pub fn to_ticks(units: f64) -> Ticks {
    debug_assert!(units >= 0.0 && units.is_finite(), "durations are finite and non-negative");
    (units * TICKS_PER_UNIT as f64).round() as Ticks
}

pub fn ticks_to_units(t: Ticks) -> f64 {
    t as f64 / TICKS_PER_UNIT as f64
}

/// Exact decimal rendering of a tick count in time-units.
pub fn fmt_ticks(t: Ticks) -> String {
    format!("{}.{:06}", t / TICKS_PER_UNIT, t % TICKS_PER_UNIT)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One operator at a time on a single pool.
    Synchronous,
    /// Independent operators run concurrently on separate pools.
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Sockets are ignored; the physical cores form one flat domain.
    SingleSocket,
    /// Pools span the whole machine; an operator whose pool spans sockets
    /// pays `bytes / upi_bandwidth` inside its own duration.
    DataParallel,
    /// Pools are pinned round-robin to sockets; a cross-socket edge delays the
    /// consumer by the producer's `bytes / upi_bandwidth`.
    ModelParallel,
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "single_socket" => Ok(Placement::SingleSocket),
            "data" | "data_parallel" => Ok(Placement::DataParallel),
            "model" | "model_parallel" => Ok(Placement::ModelParallel),
            other => Err(format!("unknown placement `{other}` (expected single, data or model)")),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::SingleSocket => "single_socket",
            Placement::DataParallel => "data_parallel",
            Placement::ModelParallel => "model_parallel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub mode: Mode,
    pub placement: Placement,
}

impl SchedulePolicy {
    pub const SYNC: SchedulePolicy = SchedulePolicy {
        mode: Mode::Synchronous,
        placement: Placement::SingleSocket,
    };
    pub const ASYNC: SchedulePolicy = SchedulePolicy {
        mode: Mode::Asynchronous,
        placement: Placement::SingleSocket,
    };
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("over-threading: {software} software threads on {hardware} hardware threads{}", .socket.map(|s| format!(" of socket {s}")).unwrap_or_default())]
    Oversubscribed {
        software: u32,
        hardware: u32,
        socket: Option<u32>,
    },
    #[error(transparent)]
    Hardware(#[from] HardwareError),
}

/// The resources one pool brings to an operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpShape {
    pub intra: u32,
    pub kernel: u32,
    /// Physical FMA units available to the kernel threads. SMT siblings share
    /// one unit, so this never exceeds the physical cores under the threads.
    pub fma_units: f64,
    /// Intra-op threads run on the SMT siblings of the kernel threads.
    pub colocated: bool,
}

impl OpShape {
    /// Every kernel thread on its own physical core.
    pub fn dedicated(intra: u32, kernel: u32, colocated: bool) -> Self {
        OpShape {
            intra,
            kernel,
            fma_units: kernel as f64,
            colocated,
        }
    }

    /// Threads squeezed onto `physical_cores` cores (fractional when cores
    /// are shared with other pools).
    pub fn on_cores(intra: u32, kernel: u32, physical_cores: f64, colocated: bool) -> Self {
        OpShape {
            intra,
            kernel,
            fma_units: (kernel as f64).min(physical_cores),
            colocated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct OpParts {
    pub serial: f64,
    pub prep: f64,
    pub compute: f64,
    pub total: f64,
}

pub(crate) fn op_parts(n: &Node, shape: &OpShape, hw: &HardwareSpec) -> OpParts {
    if n.is_free() {
        return OpParts {
            serial: 0.0,
            prep: 0.0,
            compute: 0.0,
            total: 0.0,
        };
    }
    debug_assert!(shape.intra >= 1 && shape.kernel >= 1 && shape.fma_units > 0.0);
    let compute = n.flops / (hw.fma_rate * shape.fma_units);
    let prep = n.parallel_prep / shape.intra as f64;
    let exposed_prep = if shape.colocated { (prep - compute).max(0.0) } else { prep };
    let dispatch = hw.dispatch_overhead * (shape.intra + shape.kernel - 1) as f64;
    OpParts {
        serial: n.serial_prep,
        prep,
        compute,
        total: n.serial_prep + compute + exposed_prep + dispatch,
    }
}

/// Duration of one operator, in time-units.
pub fn op_time(n: &Node, shape: &OpShape, hw: &HardwareSpec) -> f64 {
    op_parts(n, shape, hw).total
}
