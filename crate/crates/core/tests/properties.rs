use proptest::prelude::*;

use partune::graph::{parse_graph, topological_order, Graph, HardwareSpec, Node, OperatorKind, ThreadConfig};
use partune::oplab::{
    all_close, amdahl_speedup, fit_amdahl, matmul_design1, matmul_design2, naive_matmul, Matrix, OpConfig,
};
use partune::sim::{critical_path_bound, serial_sum, simulate, sweep, Placement, SchedulePolicy, Mode};
use partune::threadpool::Pool;
use partune::width::{classify_heavy, heavy_levels, max_width, width_report};

#[derive(Debug, Clone)]
struct Spec {
    kinds: Vec<OperatorKind>,
    costs: Vec<(f64, f64, f64, f64)>,
    edges: Vec<(usize, usize)>,
}

fn spec(max_nodes: usize) -> impl Strategy<Value = Spec> {
    (1..=max_nodes).prop_flat_map(|n| {
        let kinds = prop::collection::vec(prop::sample::select(OperatorKind::ALL.to_vec()), n);
        let costs = prop::collection::vec((0.0..2.0f64, 0.0..4.0f64, 0.0..100.0f64, 0.0..1e4f64), n);
        let edges = prop::collection::vec((0..n, 0..n), 0..n * 2);
        (kinds, costs, edges).prop_map(|(kinds, costs, edges)| Spec {
            kinds,
            costs,
            // Only forward edges, deduplicated, so the graph is a DAG.
            edges: {
                let mut e: Vec<(usize, usize)> = edges.into_iter().filter(|(a, b)| a < b).collect();
                e.sort_unstable();
                e.dedup();
                e
            },
        })
    })
}

fn build(s: &Spec, uniform_heavy: bool) -> Graph {
    let nodes: Vec<Node> = s
        .kinds
        .iter()
        .zip(&s.costs)
        .enumerate()
        .map(|(i, (&kind, &(a, b, c, d)))| {
            let node = Node::new(format!("v{i:02}"), kind);
            match (uniform_heavy, classify_heavy(&node)) {
                (true, true) => node.with_costs(1.0, 2.0, 40.0, 500.0),
                (true, false) => node,
                (false, _) => node.with_costs(a, b, c, d),
            }
        })
        .collect();
    let edges = s.edges.iter().map(|&(a, b)| (format!("v{a:02}"), format!("v{b:02}"))).collect();
    Graph::from_parts("prop", nodes, edges).unwrap()
}

fn hardware() -> impl Strategy<Value = HardwareSpec> {
    (1..=2u32, 1..=4u32, 1..=2u32, 1.0..10.0f64, 10.0..1e4f64, prop_oneof![Just(0.0), 0.0..0.05f64]).prop_map(
        |(sockets, cores_per_socket, smt_ways, fma_rate, upi_bandwidth, dispatch_overhead)| HardwareSpec {
            sockets,
            cores_per_socket,
            smt_ways,
            fma_rate,
            upi_bandwidth,
            dispatch_overhead,
        },
    )
}

fn config_for(hw: &HardwareSpec, pick: (u32, u32, u32)) -> ThreadConfig {
    let logical = hw.logical_cores();
    let pools = 1 + pick.0 % logical;
    let room = logical / pools;
    ThreadConfig::new(pools, 1 + pick.1 % room, 1 + pick.2 % room).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(s in spec(20)) {
        let g = build(&s, false);
        let back = parse_graph(&g.to_json()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn topological_order_respects_edges(s in spec(25)) {
        let g = build(&s, false);
        let order = topological_order(&g);
        prop_assert_eq!(order.len(), g.len());
        let pos = |id: &str| order.iter().position(|o| o == id).unwrap();
        for (a, b) in g.edges() {
            prop_assert!(pos(a) < pos(b));
        }
    }

    #[test]
    fn width_invariants(s in spec(25)) {
        let g = build(&s, false);
        let w = width_report(&g);
        let heavy = g.nodes().iter().filter(|n| classify_heavy(n)).count() as u32;
        prop_assert_eq!(w.heavy_count, heavy);
        prop_assert!(w.heavy_depth <= w.heavy_count);
        prop_assert_eq!(w.heavy_depth == 0, heavy == 0);
        // avg_width is the floored quotient.
        if w.heavy_depth > 0 {
            prop_assert_eq!(w.avg_width * w.heavy_depth + w.heavy_count % w.heavy_depth, w.heavy_count);
            prop_assert!(w.max_width * w.heavy_depth >= w.heavy_count);
        }
        let levels = heavy_levels(&g);
        let placed = levels.iter().flatten().count() as u32;
        prop_assert_eq!(placed, heavy);
        // A heavy successor always sits on a strictly deeper level.
        for (a, b) in g.edges() {
            let (ia, ib) = (g.index_of(a).unwrap(), g.index_of(b).unwrap());
            if let (Some(la), Some(lb)) = (levels[ia], levels[ib]) {
                prop_assert!(la < lb);
            }
        }
    }

    #[test]
    fn simulation_is_bounded_balanced_and_deterministic(
        s in spec(20),
        hw in hardware(),
        pick in (0..64u32, 0..64u32, 0..64u32),
        placement in prop::sample::select(vec![Placement::SingleSocket, Placement::DataParallel, Placement::ModelParallel]),
    ) {
        let g = build(&s, false);
        let cfg = config_for(&hw, pick);
        let policy = SchedulePolicy { mode: Mode::Asynchronous, placement };
        let r = match simulate(&g, &cfg, &hw, policy) {
            Ok(r) => r,
            // Model placement packs pools per socket and can run out of room.
            Err(_) => return Ok(()),
        };
        for c in &r.per_core {
            prop_assert_eq!(c.busy + c.sync + c.idle, r.makespan);
        }
        let bound = critical_path_bound(&g, &hw);
        prop_assert!(bound <= r.makespan);
        if placement == Placement::SingleSocket {
            prop_assert!(r.makespan <= serial_sum(&g, &cfg, &hw, policy).unwrap());
        }
        prop_assert_eq!(simulate(&g, &cfg, &hw, policy).unwrap(), r.clone());
        prop_assert_eq!(r.trace.len(), g.len());
        for (a, b) in g.edges() {
            let end = r.trace.iter().find(|e| &e.node_id == a).unwrap().end;
            let start = r.trace.iter().find(|e| &e.node_id == b).unwrap().start;
            prop_assert!(end <= start);
        }
    }

    #[test]
    fn sync_is_one_async_pool(s in spec(20), hw in hardware(), pick in (0..64u32, 0..64u32, 0..64u32)) {
        let g = build(&s, false);
        let cfg = config_for(&hw, pick);
        let sync = simulate(&g, &cfg, &hw, SchedulePolicy::SYNC).unwrap();
        let one = simulate(&g, &ThreadConfig { pools: 1, ..cfg }, &hw, SchedulePolicy::ASYNC).unwrap();
        prop_assert_eq!(sync.makespan, one.makespan);
        prop_assert_eq!(sync.trace, one.trace);
        prop_assert_eq!(sync.per_core, one.per_core);
    }

    #[test]
    fn best_pool_count_never_exceeds_max_width(s in spec(20), hw in hardware()) {
        let g = build(&s, true);
        prop_assume!(g.nodes().iter().any(classify_heavy));
        let best = sweep(&g, &hw, hw.physical_cores()).unwrap();
        prop_assert!(best.argmin().config.pools <= max_width(&g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn designs_match_the_oracle(
        m in 1..=256usize,
        k in 1..=256usize,
        n in 1..=256usize,
        threads in 1..=4usize,
        pool_size in 1..=4usize,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::random(m, k, &mut rng);
        let w = Matrix::random(k, n, &mut rng);
        let want = naive_matmul(&x, &w).unwrap();
        let d1 = matmul_design1(&x, &w, OpConfig::with_threads(threads)).unwrap();
        let pool = Pool::new(pool_size).unwrap();
        let d2 = matmul_design2(&x, &w, &pool, OpConfig::default()).unwrap();
        prop_assert!(all_close(&d1, &want, 1e-5));
        prop_assert!(all_close(&d2, &want, 1e-5));
        prop_assert_eq!(d1, d2);
    }

    #[test]
    fn amdahl_round_trip(s in 0.0..=1.0f64, t in 2..=256u32) {
        let back = fit_amdahl(amdahl_speedup(s, t), t).unwrap();
        prop_assert!((back - s).abs() <= 1e-12);
    }

    #[test]
    fn pool_runs_every_task_once(size in 1..=8usize, tasks in 0..2000usize) {
        use std::sync::atomic::{AtomicUsize, Ordering};
        use std::sync::Arc;
        let pool = Pool::new(size).unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        for _ in 0..tasks {
            let hits = Arc::clone(&hits);
            pool.submit(move || { hits.fetch_add(1, Ordering::Relaxed); }).unwrap();
        }
        pool.join();
        prop_assert_eq!(hits.load(Ordering::SeqCst), tasks);
    }
}
