use rand::seq::SliceRandom;
use rand::Rng;

use super::{select_invitation, Invitation, Strategy, TreeError, TreeSet};
use crate::graph::{Graph, NodeId};

/// Outcome of a node departure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Departure {
    /// Nodes whose position changed, summed over trees: every descendant of
    /// the departed node gets a new coordinate.
    pub reassigned: usize,
    /// Nodes that picked a new parent, summed over trees.
    pub reparented: usize,
    /// Nodes dropped from a tree because the departure cut them off.
    pub detached: usize,
}

/// Replays of the join protocol give up after this many rounds without an
/// acceptance past the last neighbor's invitation.
const JOIN_REPLAY_LIMIT: u32 = 100_000;

impl TreeSet {
    /// Adds `node`, currently outside every tree, as a leaf of each tree.
    /// The invitation protocol is replayed locally: a neighbor that joined
    /// a tree in round `r` counts as inviting from round `r + 1` on.
    pub fn handle_join<R: Rng>(&mut self, g: &Graph, node: NodeId, rng: &mut R) -> Result<(), TreeError> {
        let n = g.node_count();
        if node >= n {
            return Err(TreeError::NodeOutOfRange { node, n });
        }
        if self.trees.iter().any(|t| t.contains(node)) {
            return Err(TreeError::Join {
                node,
                reason: "already in a tree",
            });
        }
        let mut offers: Vec<(u32, Invitation)> = Vec::new();
        for (tree, t) in self.trees.iter().enumerate() {
            let before = offers.len();
            for &w in g.neighbors(node) {
                if let Some(r) = t.join_round(w) {
                    offers.push((r + 1, Invitation { tree, from: w }));
                }
            }
            if offers.len() == before {
                return Err(TreeError::Join {
                    node,
                    reason: "no neighbor in some tree",
                });
            }
        }
        let start = offers.iter().map(|&(r, _)| r).min().unwrap_or(1);
        let last = offers.iter().map(|&(r, _)| r).max().unwrap_or(1);
        let present = |v: NodeId| self.trees.iter().any(|t| t.contains(v));
        let present: Vec<bool> = g.neighbors(node).iter().map(|&v| present(v)).collect();
        let mut joined = vec![false; self.gamma()];
        let mut round = start;
        while joined.iter().any(|&j| !j) {
            if round > last.saturating_add(JOIN_REPLAY_LIMIT) {
                return Err(TreeError::Join {
                    node,
                    reason: "replay did not converge",
                });
            }
            let pending: Vec<Invitation> = offers
                .iter()
                .filter(|(r, inv)| *r <= round && !joined[inv.tree])
                .map(|&(_, inv)| inv)
                .collect();
            let ok = |v: NodeId| g.neighbor_index(node, v).is_some_and(|i| present[i]);
            if let Some(inv) = select_invitation(g, self, node, &pending, ok, rng) {
                self.attach(g, inv.tree, node, inv.from, round);
                joined[inv.tree] = true;
            }
            round += 1;
        }
        Ok(())
    }

    /// Removes `node` from every tree. In each tree the cut-off subtrees
    /// re-attach through their remaining neighbors: orphaned children pick
    /// a new parent first, and deeper descendants only move when no
    /// orphaned subtree root can reach the tree.
    pub fn handle_departure<R: Rng>(&mut self, g: &Graph, node: NodeId, rng: &mut R) -> Result<Departure, TreeError> {
        let n = g.node_count();
        if node >= n {
            return Err(TreeError::NodeOutOfRange { node, n });
        }
        if self.trees.iter().any(|t| !t.contains(node)) {
            return Err(TreeError::NotMember { node });
        }
        let rooted: Vec<usize> = (0..self.gamma()).filter(|&i| self.trees[i].root == node).collect();
        if !rooted.is_empty() {
            return Err(TreeError::RootDeparture { node, trees: rooted });
        }
        let mut out = Departure::default();
        for tree in 0..self.gamma() {
            self.repair_after_departure(g, tree, node, &mut out, rng);
        }
        self.parent_counts.clear(node);
        Ok(out)
    }

    fn repair_after_departure<R: Rng>(
        &mut self,
        g: &Graph,
        tree: usize,
        node: NodeId,
        out: &mut Departure,
        rng: &mut R,
    ) {
        let cut = self.trees[tree].descendants(node);
        out.reassigned += cut.len();
        let mut orphaned = vec![false; g.node_count()];
        for &v in &cut {
            orphaned[v] = true;
        }
        let t = &mut self.trees[tree];
        t.detach_from_parent(node);
        t.forget(node);
        let mut heads: Vec<NodeId> = std::mem::take(&mut t.children[node]);
        for &c in &heads {
            t.parent[c] = None;
            self.parent_counts.add(g, c, node, -1);
        }
        heads.sort_unstable();

        loop {
            let mut progress = false;
            let mut i = 0;
            while i < heads.len() {
                let c = heads[i];
                if self.reattach(g, tree, c, &mut orphaned, rng) {
                    out.reparented += 1;
                    heads.remove(i);
                    progress = true;
                } else {
                    i += 1;
                }
            }
            if heads.is_empty() {
                return;
            }
            if progress {
                continue;
            }
            // No subtree root reaches the tree: move the shallowest cut-off
            // node that does.
            let t = &self.trees[tree];
            let candidate = cut
                .iter()
                .copied()
                .filter(|&v| orphaned[v] && !heads.contains(&v))
                .filter(|&v| g.neighbors(v).iter().any(|&w| w != node && t.member[w] && !orphaned[w]))
                .min_by_key(|&v| (t.level[v], v));
            let Some(v) = candidate else { break };
            let old = self.trees[tree]
                .detach_from_parent(v)
                .expect("cut-off non-head has a parent");
            self.parent_counts.add(g, v, old, -1);
            let attached = self.reattach(g, tree, v, &mut orphaned, rng);
            debug_assert!(attached);
            out.reparented += 1;
        }

        // Whatever is still cut off lost its connection to the root.
        for &v in &cut {
            if !orphaned[v] {
                continue;
            }
            let t = &mut self.trees[tree];
            if let Some(p) = t.detach_from_parent(v) {
                self.parent_counts.add(g, v, p, -1);
            }
            let t = &mut self.trees[tree];
            t.children[v].clear();
            t.forget(v);
            out.detached += 1;
        }
    }

    /// Tries to give the detached subtree root `c` a parent among its
    /// neighbors that are attached to the tree.
    fn reattach<R: Rng>(&mut self, g: &Graph, tree: usize, c: NodeId, orphaned: &mut [bool], rng: &mut R) -> bool {
        let t = &self.trees[tree];
        let candidates: Vec<NodeId> = g
            .neighbors(c)
            .iter()
            .copied()
            .filter(|&w| t.member[w] && !orphaned[w])
            .collect();
        if candidates.is_empty() {
            return false;
        }
        let pc = |w: NodeId| self.parent_counts.get(g, c, w);
        let best = candidates.iter().map(|&w| pc(w)).min().expect("non-empty");
        let mut pool: Vec<NodeId> = candidates.into_iter().filter(|&w| pc(w) == best).collect();
        if self.strategy != Strategy::DivRand {
            let low = pool.iter().map(|&w| t.level[w]).min().expect("non-empty");
            pool.retain(|&w| t.level[w] == low);
        }
        let parent = *pool.choose(rng).expect("non-empty");
        let t = &mut self.trees[tree];
        t.parent[c] = Some(parent);
        t.children[parent].push(c);
        t.level[c] = t.level[parent] + 1;
        t.join_round[c] = t.join_round[c].max(t.join_round[parent] + 1);
        t.relevel_subtree(c);
        self.parent_counts.add(g, c, parent, 1);
        let mut stack = vec![c];
        while let Some(u) = stack.pop() {
            orphaned[u] = false;
            stack.extend(&self.trees[tree].children[u]);
        }
        true
    }
}
