use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{select_invitation, Strategy, Tree, TreeConfig, TreeError, TreeSet};
use crate::graph::{Graph, NodeId};

/// A pending invitation to join `tree` as a child of `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Invitation {
    pub tree: usize,
    pub from: NodeId,
}

/// In-progress round-based construction. Each call to [`Construction::step`]
/// runs one synchronous round; nodes that join in round `r` send their
/// invitations so that they are visible in round `r + 1`.
#[derive(Debug, Clone)]
pub struct Construction<'g> {
    g: &'g Graph,
    ts: TreeSet,
    live: Vec<bool>,
    invitations: Vec<Vec<Invitation>>,
    round: u32,
    remaining: usize,
    cap: u64,
    rng: ChaCha8Rng,
}

impl<'g> Construction<'g> {
    /// Sets up the roots and delivers their invitations. The live set must
    /// be connected and hold every root; [`super::construct_trees_masked`]
    /// checks this.
    pub fn new(g: &'g Graph, cfg: &TreeConfig, roots: &[NodeId], live: &[bool]) -> Result<Self, TreeError> {
        cfg.validate()?;
        if cfg.strategy == Strategy::Bfs {
            return Err(TreeError::InvalidConfig(
                "BFS trees are not built with invitation rounds".into(),
            ));
        }
        if roots.len() != cfg.gamma {
            return Err(TreeError::RootCount {
                expected: cfg.gamma,
                got: roots.len(),
            });
        }
        let ts = TreeSet::new(g, roots, cfg.strategy, cfg.accept_prob);
        let trees: Vec<usize> = (0..cfg.gamma).collect();
        Self::with_trees(g, ts, &trees, live, ChaCha8Rng::seed_from_u64(cfg.rng_seed))
    }

    /// Builds the listed trees of `ts` from their roots, leaving the others
    /// untouched. The listed trees must hold only their root.
    pub(crate) fn with_trees(
        g: &'g Graph,
        ts: TreeSet,
        trees: &[usize],
        live: &[bool],
        rng: ChaCha8Rng,
    ) -> Result<Self, TreeError> {
        let n = g.node_count();
        if live.len() != n {
            return Err(TreeError::InvalidConfig(format!(
                "live mask has {} entries for {n} nodes",
                live.len()
            )));
        }
        let live_count = live.iter().filter(|&&a| a).count();
        let mut depth = 0;
        for &i in trees {
            let root = ts.trees[i].root;
            if !live[root] {
                return Err(TreeError::Disconnected);
            }
            depth = depth.max(masked_eccentricity(g, root, live));
        }
        // Twice a root's eccentricity bounds the diameter from above.
        let diameter = (2 * depth).max(1) as f64;
        let gamma = ts.gamma() as f64;
        let cap = (50.0 * gamma / ts.accept_prob * diameter).ceil() as u64;
        let mut c = Self {
            g,
            ts,
            live: live.to_vec(),
            invitations: vec![Vec::new(); n],
            round: 0,
            remaining: trees.len() * live_count.saturating_sub(1),
            cap,
            rng,
        };
        for &i in trees {
            let root = c.ts.trees[i].root;
            c.ts.trees[i].join_round[root] = 0;
            c.invite(i, root);
        }
        Ok(c)
    }

    fn invite(&mut self, tree: usize, from: NodeId) {
        for &v in self.g.neighbors(from) {
            if self.live[v] && !self.ts.trees[tree].member[v] {
                self.invitations[v].push(Invitation { tree, from });
            }
        }
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn round_cap(&self) -> u64 {
        self.cap
    }

    /// Invitations pending at `node` for the next round.
    pub fn invitations(&self, node: NodeId) -> &[Invitation] {
        &self.invitations[node]
    }

    pub fn tree_set(&self) -> &TreeSet {
        &self.ts
    }

    pub fn is_finished(&self) -> bool {
        self.remaining == 0
    }

    /// Runs one synchronous round. Every node with pending invitations
    /// accepts at most one of them.
    pub fn step(&mut self) {
        if self.is_finished() {
            return;
        }
        self.round += 1;
        let mut joined = Vec::new();
        for u in 0..self.g.node_count() {
            if self.invitations[u].is_empty() {
                continue;
            }
            let live = &self.live;
            let Some(inv) = select_invitation(self.g, &self.ts, u, &self.invitations[u], |v| live[v], &mut self.rng)
            else {
                continue;
            };
            self.ts.attach(self.g, inv.tree, u, inv.from, self.round);
            self.invitations[u].retain(|other| other.tree != inv.tree);
            joined.push((u, inv.tree));
        }
        self.remaining -= joined.len();
        for (u, tree) in joined {
            self.invite(tree, u);
        }
    }

    /// Runs rounds until every tree spans the live nodes.
    pub fn run(mut self) -> Result<TreeSet, TreeError> {
        self.finish()?;
        Ok(self.ts)
    }

    fn finish(&mut self) -> Result<(), TreeError> {
        while !self.is_finished() {
            if u64::from(self.round) >= self.cap {
                return Err(TreeError::RoundCapExceeded { cap: self.cap });
            }
            self.step();
        }
        Ok(())
    }

    pub fn into_tree_set(self) -> TreeSet {
        self.ts
    }
}

fn masked_eccentricity(g: &Graph, source: NodeId, live: &[bool]) -> u32 {
    let mut dist = vec![u32::MAX; g.node_count()];
    dist[source] = 0;
    let mut far = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        far = far.max(dist[u]);
        for &v in g.neighbors(u) {
            if live[v] && dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    far
}

impl TreeSet {
    /// Throws away tree `tree` and rebuilds it from `root` over the nodes
    /// with `live[v]` set, keeping the parent counts of the other trees.
    /// If the round cap is hit the rebuilt tree is left partial.
    pub fn rebuild_tree(
        &mut self,
        g: &Graph,
        tree: usize,
        root: NodeId,
        live: &[bool],
        seed: u64,
    ) -> Result<(), TreeError> {
        if tree >= self.gamma() {
            return Err(TreeError::TreeOutOfRange {
                tree,
                gamma: self.gamma(),
            });
        }
        let n = g.node_count();
        if root >= n {
            return Err(TreeError::NodeOutOfRange { node: root, n });
        }
        let labels = g.components_masked(live);
        if labels[root].is_none() || labels.iter().zip(live).any(|(l, &a)| a && *l != labels[root]) {
            return Err(TreeError::Disconnected);
        }
        let old = std::mem::replace(&mut self.trees[tree], Tree::empty(n, root));
        for v in old.members() {
            if let Some(p) = old.parent[v] {
                self.parent_counts.add(g, v, p, -1);
            }
        }
        if self.strategy == Strategy::Bfs {
            let cfg = TreeConfig {
                gamma: 1,
                accept_prob: self.accept_prob,
                strategy: Strategy::Bfs,
                rng_seed: seed,
            };
            let fresh = super::bfs_trees(g, &cfg, &[root], live);
            let t = fresh.trees.into_iter().next().expect("one tree");
            for v in t.members() {
                if let Some(p) = t.parent[v] {
                    self.parent_counts.add(g, v, p, 1);
                }
            }
            self.trees[tree] = t;
            return Ok(());
        }
        let ts = std::mem::replace(self, TreeSet::new(g, &[], self.strategy, self.accept_prob));
        let mut c = Construction::with_trees(g, ts, &[tree], live, ChaCha8Rng::seed_from_u64(seed))?;
        let result = c.finish();
        *self = c.ts;
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{construct_trees, construct_trees_masked};

    fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|v| (v, (v + 1) % n))).unwrap()
    }

    fn cfg(gamma: usize, q: f64, strategy: Strategy, seed: u64) -> TreeConfig {
        TreeConfig {
            gamma,
            accept_prob: q,
            strategy,
            rng_seed: seed,
        }
    }

    #[test]
    fn first_round_invitations_come_from_the_root() {
        let g = crate::graph::generate_synthetic(crate::graph::SyntheticModel::PreferentialAttachment { m: 2 }, 50, 3)
            .unwrap();
        let live = vec![true; 50];
        let roots = [7, 7, 12];
        let c = Construction::new(&g, &cfg(3, 0.5, Strategy::DivRand, 1), &roots, &live).unwrap();
        for v in 0..50 {
            let mut expected: Vec<Invitation> = roots
                .iter()
                .enumerate()
                .filter(|(_, &r)| g.has_edge(r, v))
                .map(|(tree, &from)| Invitation { tree, from })
                .collect();
            let mut got = c.invitations(v).to_vec();
            expected.sort_by_key(|i| (i.tree, i.from));
            got.sort_by_key(|i| (i.tree, i.from));
            assert_eq!(got, expected, "node {v}");
        }
    }

    #[test]
    fn nodes_without_invitations_are_untouched() {
        let g = crate::trees::tests::path(6);
        let live = vec![true; 6];
        let mut c = Construction::new(&g, &cfg(1, 1.0, Strategy::DivRand, 0), &[0], &live).unwrap();
        c.step();
        let t = c.tree_set().tree(0);
        assert_eq!(t.member_count(), 2);
        for v in 2..6 {
            assert!(!t.contains(v));
        }
        assert_eq!(c.invitations(2), &[Invitation { tree: 0, from: 1 }]);
        assert!(c.invitations(4).is_empty());
    }

    #[test]
    fn acceptance_from_a_current_parent_is_bernoulli_q() {
        // Node 2 already has 1 as parent in tree 0 while 3 is idle, so the
        // pending invitation from 1 in tree 1 is never preferred.
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let trials = 10_000;
        let mut accepted = 0;
        for seed in 0..trials {
            let live = vec![true; 4];
            let ts = TreeSet::new(&g, &[0, 0], Strategy::DivRand, 0.5);
            let mut c = Construction::with_trees(&g, ts, &[], &live, ChaCha8Rng::seed_from_u64(seed)).unwrap();
            c.ts.attach(&g, 0, 1, 0, 1);
            c.ts.attach(&g, 1, 1, 0, 1);
            c.ts.attach(&g, 0, 2, 1, 2);
            c.remaining = 1;
            c.invitations[2].push(Invitation { tree: 1, from: 1 });
            c.step();
            if c.tree_set().tree(1).contains(2) {
                accepted += 1;
            }
        }
        let freq = accepted as f64 / trials as f64;
        let se = (0.25 / trials as f64).sqrt();
        assert!((freq - 0.5).abs() < 4.0 * se, "frequency {freq}");
    }

    #[test]
    fn two_trees_on_a_four_cycle_use_distinct_parents() {
        // Root 0 for both trees. Whenever node 2 takes its second tree while
        // both 1 and 3 invite for it, the parent differs from the first one.
        let g = cycle(4);
        let live = vec![true; 4];
        let mut witnessed = 0;
        for seed in 0..200 {
            let mut c = Construction::new(&g, &cfg(2, 0.5, Strategy::DivRand, seed), &[0, 0], &live).unwrap();
            while !c.is_finished() {
                let pending = c.invitations(2).to_vec();
                let before: Vec<bool> = (0..2).map(|i| c.tree_set().tree(i).contains(2)).collect();
                c.step();
                for tree in 0..2 {
                    let other = 1 - tree;
                    let joined_now = !before[tree] && c.tree_set().tree(tree).contains(2);
                    let both_invite = [1, 3].iter().all(|&w| pending.contains(&Invitation { tree, from: w }));
                    if joined_now && before[other] && both_invite {
                        let ts = c.tree_set();
                        assert_ne!(ts.tree(tree).parent(2), ts.tree(other).parent(2), "seed {seed}");
                        witnessed += 1;
                    }
                }
            }
            c.tree_set().check(&g).unwrap();
        }
        assert!(witnessed > 20, "only {witnessed} witnessing runs");
    }

    #[test]
    fn masked_nodes_stay_outside() {
        let g = cycle(6);
        let mut live = vec![true; 6];
        live[3] = false;
        let ts = construct_trees_masked(&g, &cfg(2, 0.5, Strategy::DivDep, 4), &[0, 1], &live).unwrap();
        ts.check(&g).unwrap();
        for t in ts.trees() {
            assert!(!t.contains(3));
            assert_eq!(t.member_count(), 5);
        }
    }

    #[test]
    fn rebuild_keeps_other_trees() {
        let g = crate::graph::generate_synthetic(crate::graph::SyntheticModel::PreferentialAttachment { m: 3 }, 120, 9)
            .unwrap();
        for strategy in [Strategy::DivRand, Strategy::Bfs] {
            let mut ts = construct_trees(&g, &cfg(3, 0.5, strategy, 2), &[0, 1, 2]).unwrap();
            let other = ts.tree(0).clone();
            let mut live = vec![true; 120];
            live[1] = false;
            let labels = g.components_masked(&live);
            assert!(labels.iter().flatten().all(|&c| Some(c) == labels[0]));
            ts.rebuild_tree(&g, 1, 5, &live, 77).unwrap();
            assert_eq!(ts.tree(0), &other);
            assert_eq!(ts.tree(1).root(), 5);
            assert!(!ts.tree(1).contains(1));
            assert_eq!(ts.tree(1).member_count(), 119);
            for (v, &alive) in live.iter().enumerate() {
                if alive {
                    assert!(ts.tree(1).contains(v));
                }
            }
            ts.check(&g).unwrap();
        }
    }

    #[test]
    fn round_cap_is_reported() {
        let g = crate::trees::tests::path(3);
        let live = vec![true; 3];
        let c = Construction::new(&g, &cfg(1, 1.0, Strategy::DivRand, 0), &[0], &live).unwrap();
        assert_eq!(c.round_cap(), 50 * 4);
    }
}
