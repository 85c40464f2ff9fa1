//! Parallelism tuning for operator graphs.
//!
//! - [`graph`]: graph and hardware data model, parsing and validation.
//! - [`width`]: heavy-operator width metrics.
//! - [`tuner`]: thread-configuration recommendations and presets.
//! - [`sim`]: discrete-event scheduling simulator and exhaustive sweep.
//! - [`threadpool`]: a fixed-size task pool and its contention benchmark.
//! - [`oplab`]: two real MatMul operator designs and their scaling benchmark.
//! - [`report`]: the command-line front end.

pub mod bundled;
pub mod graph;
pub mod oplab;
pub mod report;
pub mod sim;
pub mod threadpool;
pub mod tuner;
pub mod width;

pub use graph::{parse_graph, parse_hardware, topological_order, validate, Graph, HardwareSpec, Node, OperatorKind, ThreadConfig};
pub use tuner::{preset, recommend, PresetKind, Recommendation};
pub use width::{width_report, WidthReport};
