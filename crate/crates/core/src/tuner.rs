//! Thread-configuration recommendations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{HardwareSpec, ThreadConfig};
use crate::width::WidthReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Guideline,
    PresetTensorflow,
    PresetIntel,
    PresetDefault,
}

/// Third-party configuration presets used for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetKind {
    /// Pools = sockets, threads = all physical cores.
    Tensorflow,
    /// Pools = sockets, threads = physical cores per socket.
    Intel,
    /// Everything set to the logical core count.
    Default,
}

impl PresetKind {
    pub const ALL: [PresetKind; 3] = [PresetKind::Tensorflow, PresetKind::Intel, PresetKind::Default];

    pub fn basis(self) -> Basis {
        match self {
            PresetKind::Tensorflow => Basis::PresetTensorflow,
            PresetKind::Intel => Basis::PresetIntel,
            PresetKind::Default => Basis::PresetDefault,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PresetKind::Tensorflow => "tensorflow",
            PresetKind::Intel => "intel",
            PresetKind::Default => "default",
        }
    }
}

impl FromStr for PresetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tf" | "tensorflow" => Ok(PresetKind::Tensorflow),
            "intel" => Ok(PresetKind::Intel),
            "default" => Ok(PresetKind::Default),
            other => Err(format!("unknown preset `{other}` (expected tf, intel or default)")),
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub config: ThreadConfig,
    pub basis: Basis,
    pub rationale: String,
}

impl Recommendation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recommendations always serialize")
    }
}

/// Pools follow the average width; the physical cores are split evenly among
/// them (floored, never oversubscribed) and each pool gets the same number of
/// intra-op and kernel threads so the two can share a core.
pub fn recommend(w: &WidthReport, hw: &HardwareSpec) -> Recommendation {
    let physical = hw.physical_cores();
    // More pools than physical cores would leave some pool without a core.
    let pools = w.avg_width.clamp(1, physical);
    let threads = (physical / pools).max(1);
    let rationale = format!(
        "average width {} (={} heavy ops / depth {}, max width {}) -> {} inter-op pool(s); \
         {} physical cores / {} pool(s) -> {} intra-op and {} kernel threads per pool",
        w.avg_width, w.heavy_count, w.heavy_depth, w.max_width, pools, physical, pools, threads, threads
    );
    Recommendation {
        config: ThreadConfig {
            pools,
            intra_threads: threads,
            kernel_threads: threads,
        },
        basis: Basis::Guideline,
        rationale,
    }
}

pub fn preset(kind: PresetKind, hw: &HardwareSpec) -> Recommendation {
    let (pools, threads, rationale) = match kind {
        PresetKind::Tensorflow => (
            hw.sockets,
            hw.physical_cores(),
            "inter-op pools = sockets; intra-op and kernel threads = physical cores",
        ),
        PresetKind::Intel => (
            hw.sockets,
            hw.cores_per_socket,
            "inter-op pools = sockets; intra-op and kernel threads = physical cores per socket",
        ),
        PresetKind::Default => (
            hw.logical_cores(),
            hw.logical_cores(),
            "pools, intra-op and kernel threads all = logical cores",
        ),
    };
    Recommendation {
        config: ThreadConfig {
            pools,
            intra_threads: threads,
            kernel_threads: threads,
        },
        basis: kind.basis(),
        rationale: rationale.to_string(),
    }
}
