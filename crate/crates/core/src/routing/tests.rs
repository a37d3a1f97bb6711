use super::*;
use crate::addresses::crypto::MacKey;
use crate::addresses::{add_ppp_layer, distribute_subtree_keys, generate_mac_keys, issue_address, AddressKeys};
use crate::adversary::{attach_attacker, inject_failures};
use crate::embedding::{assign_coordinates, delta_td, EmbeddingConfig};
use crate::graph::{generate_synthetic, SyntheticModel};
use crate::trees::{construct_trees, Strategy, TreeConfig, TreeSet};

fn setup(g: &Graph, gamma: usize, root: NodeId, strategy: Strategy, seed: u64) -> (TreeSet, Embedding) {
    let cfg = TreeConfig {
        gamma,
        accept_prob: 0.5,
        strategy,
        rng_seed: seed,
    };
    let ts = construct_trees(g, &cfg, &vec![root; gamma]).unwrap();
    let emb = assign_coordinates(&ts, &EmbeddingConfig::default(), seed).unwrap();
    (ts, emb)
}

fn ring(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cfg(metric: Metric) -> RoutingConfig {
    RoutingConfig {
        metric,
        ..Default::default()
    }
}

#[test]
fn source_is_destination() {
    let g = ring(5);
    let (_, emb) = setup(&g, 1, 0, Strategy::Bfs, 1);
    let x = emb.coordinate(0, 3).unwrap();
    let out = route(
        &g,
        &emb,
        3,
        Target::Coordinate(x),
        0,
        &cfg(Metric::Td),
        &LiveMask::all_live(5),
        &mut rng(0),
    )
    .unwrap();
    assert!(out.success);
    assert_eq!(out.hops, 0);
    assert_eq!(out.path, vec![3]);
    assert_eq!(out.route_length, Some(0));
}

#[test]
fn path_graph_follows_the_tree() {
    let g = crate::trees::tests::path(9);
    let (_, emb) = setup(&g, 1, 0, Strategy::DivRand, 2);
    let live = LiveMask::all_live(9);
    for s in 0..9 {
        for d in 0..9 {
            let x = emb.coordinate(0, d).unwrap();
            let out = route(
                &g,
                &emb,
                s,
                Target::Coordinate(x),
                0,
                &cfg(Metric::Td),
                &live,
                &mut rng(3),
            )
            .unwrap();
            let td = delta_td(emb.coordinate(0, s).unwrap().elements(), x.elements()) as usize;
            assert!(out.success);
            assert_eq!(out.hops, td);
            assert_eq!(out.path.len(), td + 1);
        }
    }
}

#[test]
fn ring_with_a_failure_matches_the_oracle() {
    let g = ring(6);
    let (_, emb) = setup(&g, 1, 0, Strategy::Bfs, 4);
    let mut checked = 0;
    let mut rescued = 0;
    for failed in 0..6 {
        let mut flags = vec![true; 6];
        flags[failed] = false;
        let live = LiveMask::from_flags(flags);
        for s in (0..6).filter(|&s| s != failed) {
            for d in (0..6).filter(|&d| d != failed) {
                for metric in [Metric::Td, Metric::Cpl] {
                    let x = emb.coordinate(0, d).unwrap();
                    let out = route(&g, &emb, s, Target::Coordinate(x), 0, &cfg(metric), &live, &mut rng(5)).unwrap();
                    let exists = greedy_path_exists(&g, &emb, 0, s, x, metric, &live).unwrap();
                    assert_eq!(out.success, exists, "failed {failed}, {s} -> {d}, {metric}");
                    let greedy =
                        greedy_route(&g, &emb, s, Target::Coordinate(x), 0, &cfg(metric), &live, &mut rng(5)).unwrap();
                    assert!(!greedy.success || out.success);
                    rescued += usize::from(out.success && !greedy.success);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 6 * 5 * 5 * 2);
    assert!(rescued > 0, "some pair should need backtracking around the gap");
}

#[test]
fn random_instances_match_the_oracle() {
    for seed in 0..60 {
        let g = generate_synthetic(SyntheticModel::ErdosRenyi { p: 0.12 }, 40, seed).unwrap();
        let g = g.giant_component();
        let n = g.node_count();
        let (_, emb) = setup(&g, 1, 0, Strategy::DivDep, seed);
        let live = inject_failures(&g, (seed % 5) as f64 * 0.1, seed).unwrap();
        let mut r = rng(seed);
        for _ in 0..10 {
            let s = r.gen_range(0..n);
            let d = r.gen_range(0..n);
            if !live.is_live(s) {
                continue;
            }
            for metric in [Metric::Td, Metric::Cpl] {
                let x = emb.coordinate(0, d).unwrap();
                let out = route(&g, &emb, s, Target::Coordinate(x), 0, &cfg(metric), &live, &mut r).unwrap();
                let exists = greedy_path_exists(&g, &emb, 0, s, x, metric, &live).unwrap();
                assert_eq!(out.success, exists);
                assert!(out.hops <= 4 * g.edge_count());
                assert!(out.hops + 1 >= out.path.len());
                if out.success {
                    assert_eq!(*out.path.last().unwrap(), d);
                }
            }
        }
    }
}

#[test]
fn greedy_alone_gets_stuck_where_backtracking_does_not() {
    let mut found = false;
    'search: for seed in 0..200 {
        let g = generate_synthetic(SyntheticModel::ErdosRenyi { p: 0.1 }, 40, seed)
            .unwrap()
            .giant_component();
        let n = g.node_count();
        let (_, emb) = setup(&g, 1, 0, Strategy::DivRand, seed);
        let live = inject_failures(&g, 0.3, seed).unwrap();
        for s in (0..n).filter(|&v| live.is_live(v)) {
            for d in (0..n).filter(|&v| live.is_live(v)) {
                let x = emb.coordinate(0, d).unwrap();
                let c = cfg(Metric::Td);
                let gr = greedy_route(&g, &emb, s, Target::Coordinate(x), 0, &c, &live, &mut rng(1)).unwrap();
                let r = route(&g, &emb, s, Target::Coordinate(x), 0, &c, &live, &mut rng(1)).unwrap();
                if r.success && !gr.success {
                    assert_eq!(gr.failure_reason, Some(FailureReason::NoProgress));
                    found = true;
                    break 'search;
                }
            }
        }
    }
    assert!(found);
}

#[test]
fn intact_trees_need_no_backtracking() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, 150, 7).unwrap();
    let (_, emb) = setup(&g, 2, 0, Strategy::DivDep, 7);
    let live = LiveMask::all_live(150);
    let mut r = rng(8);
    for _ in 0..200 {
        let s = r.gen_range(0..150);
        let d = r.gen_range(0..150);
        let tree = r.gen_range(0..2);
        for metric in [Metric::Td, Metric::Cpl] {
            let x = emb.coordinate(tree, d).unwrap();
            let seed = r.gen();
            let a = route(
                &g,
                &emb,
                s,
                Target::Coordinate(x),
                tree,
                &cfg(metric),
                &live,
                &mut rng(seed),
            )
            .unwrap();
            let b = greedy_route(
                &g,
                &emb,
                s,
                Target::Coordinate(x),
                tree,
                &cfg(metric),
                &live,
                &mut rng(seed),
            )
            .unwrap();
            assert!(a.success);
            assert_eq!(a, b);
            assert_eq!(Some(a.hops), a.route_length);
        }
    }
}

#[test]
fn return_addresses_take_the_same_paths() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, 120, 9).unwrap();
    let (ts, emb) = setup(&g, 1, 0, Strategy::DivRand, 9);
    let live = inject_failures(&g, 0.2, 2).unwrap();
    let key = MacKey([3; 32]);
    let mut r = rng(10);
    let mut compared = 0;
    while compared < 150 {
        let s = r.gen_range(0..120);
        let d = r.gen_range(0..120);
        if !live.is_live(s) || !live.is_live(d) {
            continue;
        }
        let x = emb.coordinate(0, d).unwrap();
        let addr = issue_address(&ts, &emb, 0, d, &key, &mut r).unwrap();
        for metric in [Metric::Td, Metric::Cpl] {
            let seed = r.gen();
            let plain = route(
                &g,
                &emb,
                s,
                Target::Coordinate(x),
                0,
                &cfg(metric),
                &live,
                &mut rng(seed),
            )
            .unwrap();
            let hidden = route(
                &g,
                &emb,
                s,
                Target::Rp {
                    address: &addr,
                    issuer: d,
                },
                0,
                &cfg(metric),
                &live,
                &mut rng(seed),
            )
            .unwrap();
            assert_eq!(plain, hidden);
        }
        compared += 1;
    }
}

#[test]
fn encrypted_addresses_reach_the_issuer() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, 100, 11).unwrap();
    let (ts, emb) = setup(&g, 1, 0, Strategy::DivDep, 11);
    let keys = distribute_subtree_keys(&ts, 0, 4);
    let macs = generate_mac_keys(100, 4);
    let live = LiveMask::all_live(100);
    let mut r = rng(12);
    for d in 0..100 {
        let addr = issue_address(&ts, &emb, 0, d, &macs[d], &mut r).unwrap();
        let level = emb.coordinate(0, d).unwrap().len();
        let ak = AddressKeys {
            mac_key: macs[d],
            subtree: keys[d].clone().unwrap(),
        };
        let enc = add_ppp_layer(&addr, &ak, level, &XorPadCipher, emb.config()).unwrap();
        let target = Target::Ppp {
            address: &enc,
            issuer: d,
            keys: &keys,
        };
        let s = r.gen_range(0..100);
        let out = route(&g, &emb, s, target, 0, &cfg(Metric::Cpl), &live, &mut r).unwrap();
        assert!(out.success, "{s} -> {d}");
        assert!(matches!(
            route(&g, &emb, s, target, 0, &cfg(Metric::Td), &live, &mut r),
            Err(RoutingError::Unsupported(_))
        ));
    }
}

#[test]
fn attacker_hub_swallows_everything() {
    // Star of leaves around the attacker, which is also the root.
    let leaves = Graph::from_edges(6, []).unwrap();
    let (g, a) = attach_attacker(&leaves, 6, 0).unwrap();
    let (_, emb) = setup(&g, 1, a, Strategy::Bfs, 1);
    let live = LiveMask::with_attacker(7, a);
    for s in 0..6 {
        for d in (0..6).filter(|&d| d != s) {
            let x = emb.coordinate(0, d).unwrap();
            for metric in [Metric::Td, Metric::Cpl] {
                let out = route(&g, &emb, s, Target::Coordinate(x), 0, &cfg(metric), &live, &mut rng(0)).unwrap();
                assert!(!out.success);
                assert_eq!(out.failure_reason, Some(FailureReason::DroppedByAdversary));
                assert_eq!(out.hops, 1);
                assert!(!greedy_path_exists(&g, &emb, 0, s, x, metric, &live).unwrap());
            }
        }
    }
}

#[test]
fn hop_cap_guard() {
    let g = crate::trees::tests::path(6);
    let (_, emb) = setup(&g, 1, 0, Strategy::Bfs, 1);
    let x = emb.coordinate(0, 5).unwrap();
    let c = RoutingConfig {
        max_hops: Some(2),
        ..Default::default()
    };
    let out = route(
        &g,
        &emb,
        0,
        Target::Coordinate(x),
        0,
        &c,
        &LiveMask::all_live(6),
        &mut rng(0),
    )
    .unwrap();
    assert_eq!(out.failure_reason, Some(FailureReason::HopCap));
    assert_eq!(out.hops, 2);
}

#[test]
fn dead_source_is_rejected() {
    let g = ring(4);
    let (_, emb) = setup(&g, 1, 0, Strategy::Bfs, 1);
    let live = LiveMask::from_flags(vec![true, false, true, true]);
    let x = emb.coordinate(0, 0).unwrap();
    assert_eq!(
        route(
            &g,
            &emb,
            1,
            Target::Coordinate(x),
            0,
            &cfg(Metric::Td),
            &live,
            &mut rng(0)
        ),
        Err(RoutingError::Source(1))
    );
}

fn targets<'a>(emb: &'a Embedding, d: NodeId) -> Vec<Target<'a>> {
    (0..emb.gamma())
        .map(|i| Target::Coordinate(emb.coordinate(i, d).unwrap()))
        .collect()
}

#[test]
fn multi_with_one_tree_is_plain_routing() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, 100, 13).unwrap();
    let (_, emb) = setup(&g, 1, 0, Strategy::DivDep, 13);
    let live = inject_failures(&g, 0.2, 13).unwrap();
    let mut r = rng(14);
    for _ in 0..100 {
        let s = r.gen_range(0..100);
        let d = r.gen_range(0..100);
        if !live.is_live(s) {
            continue;
        }
        let seed: u64 = r.gen();
        let m = route_multi(&g, &emb, s, &targets(&emb, d), &cfg(Metric::Cpl), &live, &mut rng(seed)).unwrap();
        let base: u64 = rng(seed).gen();
        let mut tree_rng = ChaCha8Rng::seed_from_u64(base);
        tree_rng.set_stream(0);
        let single = route(
            &g,
            &emb,
            s,
            targets(&emb, d)[0],
            0,
            &cfg(Metric::Cpl),
            &live,
            &mut tree_rng,
        )
        .unwrap();
        assert_eq!(m.attempts, vec![single.clone()]);
        assert_eq!(m.success, single.success);
        assert_eq!(m.hops, single.hops);
    }
}

#[test]
fn more_trees_never_hurt() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, 200, 15).unwrap();
    let (_, emb) = setup(&g, 4, 0, Strategy::DivDep, 15);
    let live = inject_failures(&g, 0.3, 15).unwrap();
    let mut r = rng(16);
    let mut wins = [0usize; 4];
    for _ in 0..150 {
        let s = r.gen_range(0..200);
        let d = r.gen_range(0..200);
        if !live.is_live(s) || !live.is_live(d) {
            continue;
        }
        let seed: u64 = r.gen();
        let mut prev = false;
        for tau in 1..=4 {
            let c = RoutingConfig {
                tau,
                ..cfg(Metric::Cpl)
            };
            let m = route_multi(&g, &emb, s, &targets(&emb, d), &c, &live, &mut rng(seed)).unwrap();
            assert!(m.success || !prev, "tau {tau} lost a route");
            assert_eq!(m.hops, m.attempts.iter().map(|a| a.hops).sum::<usize>());
            prev = m.success;
            wins[tau - 1] += usize::from(m.success);
        }
    }
    assert!(wins.windows(2).all(|w| w[0] <= w[1]));
    assert!(wins[3] > wins[0]);
}

#[test]
fn closest_neighbor_choice_ranks_trees() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, 80, 17).unwrap();
    let (_, emb) = setup(&g, 3, 0, Strategy::DivRand, 17);
    let live = LiveMask::all_live(80);
    let c = RoutingConfig {
        tau: 2,
        embedding_choice: EmbeddingChoice::MinNeighborDistance,
        ..cfg(Metric::Td)
    };
    for d in 0..80 {
        let s = (d * 7 + 3) % 80;
        let m = route_multi(&g, &emb, s, &targets(&emb, d), &c, &live, &mut rng(d as u64)).unwrap();
        assert!(m.success);
        let score = |i: usize| {
            g.neighbors(s)
                .iter()
                .map(|&v| {
                    delta_td(
                        emb.coordinate(i, v).unwrap().elements(),
                        emb.coordinate(i, d).unwrap().elements(),
                    )
                })
                .min()
                .unwrap()
        };
        let left_out = (0..3).find(|i| !m.trees.contains(i)).unwrap();
        assert!(m.trees.iter().all(|&i| score(i) <= score(left_out)));
    }
}

#[test]
fn config_checks() {
    assert!(RoutingConfig {
        tau: 3,
        ..Default::default()
    }
    .validate(2)
    .is_err());
    assert!(RoutingConfig {
        tau: 0,
        ..Default::default()
    }
    .validate(2)
    .is_err());
    assert_eq!(
        RoutingConfig {
            addressing: Addressing::Ppp,
            ..Default::default()
        }
        .validate(1),
        Err(RoutingError::Unsupported(
            "encrypted addresses only support the CPL metric"
        ))
    );
    assert_eq!("ppp".parse::<Addressing>(), Ok(Addressing::Ppp));
    assert_eq!(
        "min".parse::<EmbeddingChoice>(),
        Ok(EmbeddingChoice::MinNeighborDistance)
    );
}

#[test]
fn oracle_refuses_large_graphs() {
    let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 2 }, ORACLE_MAX_NODES + 1, 1).unwrap();
    let (_, emb) = setup(&g, 1, 0, Strategy::Bfs, 1);
    let x = emb.coordinate(0, 1).unwrap();
    assert!(matches!(
        greedy_path_exists(&g, &emb, 0, 0, x, Metric::Td, &LiveMask::all_live(g.node_count())),
        Err(RoutingError::TooLarge { .. })
    ));
}
