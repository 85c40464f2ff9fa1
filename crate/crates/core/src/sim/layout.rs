//! Mapping of pools and their threads onto logical cores.
//!
//! Logical core `sibling * P + physical` is SMT sibling `sibling` of physical
//! core `physical` (P = physical cores). Each pool occupies
//! `max(intra, kernel)` worker slots. When every slot of a domain fits on its
//! own physical core and the machine has SMT, the intra-op thread of a slot
//! sits on sibling 1 of the kernel thread's core (colocated). Otherwise slots
//! spill onto the siblings, the intra-op and kernel threads of a slot share
//! one logical core, and FMA units are split between the pools of a domain.

use crate::graph::{HardwareSpec, ThreadConfig};

use super::{OpShape, Placement, SimError};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Slot {
    pub kernel_core: u32,
    pub intra_core: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct PoolLayout {
    pub socket: u32,
    pub spans_sockets: bool,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub pools: Vec<PoolLayout>,
    pub shape: OpShape,
}

struct Domain {
    first_core: u32,
    cores: u32,
    pools: Vec<usize>,
}

pub(crate) fn build(cfg: &ThreadConfig, hw: &HardwareSpec, placement: Placement) -> Result<Layout, SimError> {
    hw.validate()?;
    let physical = hw.physical_cores();
    let per_pool = cfg.threads_per_pool();
    let pools = cfg.pools as usize;

    let domains: Vec<Domain> = match placement {
        Placement::ModelParallel if hw.sockets > 1 => (0..hw.sockets)
            .map(|s| Domain {
                first_core: s * hw.cores_per_socket,
                cores: hw.cores_per_socket,
                pools: (0..pools).filter(|p| *p as u32 % hw.sockets == s).collect(),
            })
            .collect(),
        _ => vec![Domain {
            first_core: 0,
            cores: physical,
            pools: (0..pools).collect(),
        }],
    };

    let single_domain = domains.len() == 1;
    let (busiest, domain_cores) = domains
        .iter()
        .map(|d| (d.pools.len() as u32, d.cores))
        .max()
        .expect("at least one domain");
    for (s, d) in domains.iter().enumerate() {
        let software = d.pools.len() as u32 * per_pool;
        let hardware = d.cores * hw.smt_ways;
        if software > hardware {
            return Err(SimError::Oversubscribed {
                software,
                hardware,
                socket: (!single_domain).then_some(s as u32),
            });
        }
    }

    let fits = busiest * per_pool <= domain_cores;
    let colocated = fits && hw.smt_ways >= 2;
    let shape = if fits {
        OpShape::dedicated(cfg.intra_threads, cfg.kernel_threads, colocated)
    } else {
        OpShape::on_cores(
            cfg.intra_threads,
            cfg.kernel_threads,
            domain_cores as f64 / busiest as f64,
            false,
        )
    };

    let socket_of = |logical: u32| (logical % physical) / hw.cores_per_socket;
    let mut layouts: Vec<Option<PoolLayout>> = vec![None; pools];
    for d in &domains {
        for (j, &pool) in d.pools.iter().enumerate() {
            let slots: Vec<Slot> = (0..per_pool)
                .map(|k| {
                    let q = j as u32 * per_pool + k;
                    let kernel_core = (q / d.cores) * physical + d.first_core + q % d.cores;
                    let intra_core = if colocated { kernel_core + physical } else { kernel_core };
                    Slot {
                        kernel_core,
                        intra_core,
                    }
                })
                .collect();
            let socket = socket_of(slots[0].kernel_core);
            let spans_sockets = slots.iter().any(|s| socket_of(s.kernel_core) != socket);
            layouts[pool] = Some(PoolLayout {
                socket,
                spans_sockets,
                slots,
            });
        }
    }

    Ok(Layout {
        pools: layouts.into_iter().map(|l| l.expect("every pool placed")).collect(),
        shape,
    })
}
