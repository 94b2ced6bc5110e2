use std::collections::VecDeque;

use gal_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook A* with a linearly scanned open list.
fn reference_astar(
    inst: &ProblemInstance,
    g_ratio: f32,
    costs: Option<(&[f32], GuidancePlacement)>,
) -> (Vec<Node>, Vec<Node>) {
    let map = &inst.map;
    let n = map.len();
    let cost = |i: usize| costs.map_or(0.0, |(c, _)| c[i]);
    let placement = costs.map_or(GuidancePlacement::Heuristic, |(_, p)| p);
    let score = |i: usize, g: f32| {
        let h = heuristic(map.node(i), inst.goal) as f32;
        let h = match placement {
            GuidancePlacement::Heuristic => h + cost(i),
            GuidancePlacement::CostToCome => h,
        };
        g_ratio * g + (1.0 - g_ratio) * h
    };
    let mut g = vec![f32::INFINITY; n];
    let mut parent = vec![None; n];
    let mut open = vec![false; n];
    let mut closed = vec![false; n];
    let s = map.index(inst.start);
    g[s] = 0.0;
    open[s] = true;
    let mut expanded = Vec::new();
    loop {
        let Some(u) = (0..n)
            .filter(|&i| open[i])
            .min_by(|&a, &b| score(a, g[a]).total_cmp(&score(b, g[b])).then(a.cmp(&b)))
        else {
            return (expanded, Vec::new());
        };
        open[u] = false;
        closed[u] = true;
        expanded.push(map.node(u));
        if map.node(u) == inst.goal {
            let mut path = vec![map.node(u)];
            let mut cur = u;
            while let Some(p) = parent[cur] {
                path.push(map.node(p));
                cur = p;
            }
            path.reverse();
            return (expanded, path);
        }
        for w in map.neighbors(map.node(u)).unwrap() {
            let w = map.index(w);
            if closed[w] {
                continue;
            }
            let entry = match placement {
                GuidancePlacement::CostToCome => cost(w),
                GuidancePlacement::Heuristic => 0.0,
            };
            let g_new = g[u] + 1.0 + entry;
            if g_new < g[w] {
                g[w] = g_new;
                parent[w] = Some(u);
                open[w] = true;
            }
        }
    }
}

fn bfs_length(map: &GridMap, start: Node, goal: Node) -> Option<usize> {
    let mut dist = vec![None; map.len()];
    let mut queue = VecDeque::from([start]);
    dist[map.index(start)] = Some(0);
    while let Some(u) = queue.pop_front() {
        let d = dist[map.index(u)].unwrap();
        for w in map.neighbors(u).unwrap() {
            if dist[map.index(w)].is_none() {
                dist[map.index(w)] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist[map.index(goal)]
}

fn corpus(size: usize, per_kind: usize, seed: u64) -> Vec<ProblemInstance> {
    build_mixed_set(&MixedSetConfig::new(
        MapKind::ALL.to_vec(),
        size,
        per_kind,
        seed,
    ))
    .unwrap()
    .entries
    .into_iter()
    .map(|e| e.instance)
    .collect()
}

#[test]
fn planner_matches_reference_astar() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (k, inst) in corpus(16, 10, 21).iter().enumerate() {
        let g_ratio = [0.0, 0.2, 0.5, 0.9, 1.0][k % 5];
        let (expanded, path) = reference_astar(inst, g_ratio, None);
        let trace = plan(inst, &SearchPolicy::weighted(g_ratio).unwrap(), None).unwrap();
        assert_eq!(trace.expanded, expanded, "instance {k}");
        assert_eq!(trace.path_nodes, path, "instance {k}");

        let values: Vec<f32> = (0..inst.map.len()).map(|_| rng.gen()).collect();
        let guidance = GuidanceMap::new(16, 16, values.clone()).unwrap();
        for placement in [GuidancePlacement::Heuristic, GuidancePlacement::CostToCome] {
            let (expanded, path) = reference_astar(inst, g_ratio, Some((&values, placement)));
            let policy = SearchPolicy::weighted(g_ratio)
                .unwrap()
                .with_guidance(true)
                .with_placement(placement);
            let trace = plan(inst, &policy, Some(&guidance)).unwrap();
            assert_eq!(trace.expanded, expanded, "instance {k} {placement}");
            assert_eq!(trace.path_nodes, path, "instance {k} {placement}");
        }
    }
}

#[test]
fn oracle_agrees_with_breadth_first_search() {
    for inst in corpus(32, 10, 22) {
        let oracle = dijkstra_oracle(&inst.map, inst.start, inst.goal)
            .unwrap()
            .unwrap();
        assert_eq!(
            Some(oracle.length),
            bfs_length(&inst.map, inst.start, inst.goal)
        );
        assert_eq!(oracle.path.len(), oracle.length + 1);
        for pair in oracle.path.windows(2) {
            assert!(inst.map.neighbors(pair[0]).unwrap().contains(&pair[1]));
        }
    }
}

#[test]
fn wide_beam_is_plain_weighted_search() {
    for (k, inst) in corpus(16, 5, 23).iter().enumerate() {
        let g_ratio = [0.2, 0.5, 0.8][k % 3];
        let free = inst.map.free_count();
        let beam = plan(inst, &SearchPolicy::beam(g_ratio, free).unwrap(), None).unwrap();
        let weighted = plan(inst, &SearchPolicy::weighted(g_ratio).unwrap(), None).unwrap();
        assert_eq!(beam, weighted);
    }
}

#[test]
fn planning_is_deterministic() {
    let policy = SearchPolicy::beam(0.3, 4).unwrap();
    for inst in corpus(16, 3, 24) {
        assert_eq!(
            plan(&inst, &policy, None).unwrap(),
            plan(&inst, &policy, None).unwrap()
        );
    }
}

fn node() -> impl Strategy<Value = Node> {
    (0usize..64, 0usize..64).prop_map(|(r, c)| Node::new(r, c))
}

proptest! {
    #[test]
    fn heuristic_is_a_metric(a in node(), b in node(), c in node()) {
        prop_assert_eq!(heuristic(a, b), heuristic(b, a));
        prop_assert_eq!(heuristic(a, a), 0);
        prop_assert!(heuristic(a, c) <= heuristic(a, b) + heuristic(b, c));
    }

    #[test]
    fn heuristic_never_overestimates(kind in 0usize..4, seed in 0u64..500) {
        let map = generate_map(MapKind::ALL[kind], 16, seed).unwrap();
        let inst = sample_instance(&map, seed).unwrap();
        prop_assert!(heuristic(inst.start, inst.goal) <= inst.optimal_length);
    }

    #[test]
    fn vanilla_paths_are_optimal(kind in 0usize..4, seed in 0u64..500) {
        let map = generate_map(MapKind::ALL[kind], 16, seed).unwrap();
        let inst = sample_instance(&map, seed).unwrap();
        let trace = plan(&inst, &SearchPolicy::vanilla(), None).unwrap();
        prop_assert!(trace.success);
        prop_assert_eq!(trace.path_length, inst.optimal_length);
    }
}

#[test]
fn straight_corridor_on_an_empty_map() {
    let map = GridMap::empty(4, 4).unwrap();
    let inst = ProblemInstance::solve(map, Node::new(0, 0), Node::new(0, 3)).unwrap();
    let (expanded, path) = reference_astar(&inst, 0.5, None);
    let trace = plan(&inst, &SearchPolicy::vanilla(), None).unwrap();
    assert!(trace.success);
    assert_eq!(trace.path_length, 3);
    assert_eq!(trace.explorations, expanded.len());
    assert_eq!(trace.explorations, 4);
    assert_eq!(trace.path_nodes, path);
}
