//! Parallel spanning trees built with the round-based invitation protocol,
//! plus local stabilization on joins and departures.

mod construct;
mod stabilize;

use std::fmt;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Graph, NodeId};

pub use construct::{Construction, Invitation};
pub use stabilize::Departure;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("tree configuration: {0}")]
    InvalidConfig(String),
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("tree index {tree} out of range ({gamma} trees)")]
    TreeOutOfRange { tree: usize, gamma: usize },
    #[error("expected {expected} roots, got {got}")]
    RootCount { expected: usize, got: usize },
    #[error("live subgraph is disconnected or a root is not live")]
    Disconnected,
    #[error("construction did not finish within {cap} rounds")]
    RoundCapExceeded { cap: u64 },
    #[error("node {node} cannot join: {reason}")]
    Join { node: NodeId, reason: &'static str },
    #[error("node {node} is not part of every tree")]
    NotMember { node: NodeId },
    #[error("node {node} is the root of trees {trees:?}; those trees need a full rebuild")]
    RootDeparture { node: NodeId, trees: Vec<usize> },
}

/// Tie-breaking rule among acceptable invitations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Uniform among the acceptable invitations.
    DivRand,
    /// Uniform among acceptable inviters at the lowest level.
    DivDep,
    /// Independent breadth-first search per tree; ignores parent counts.
    Bfs,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DivRand => "DIV-RAND",
            Strategy::DivDep => "DIV-DEP",
            Strategy::Bfs => "BFS",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('_', "-").as_str() {
            "DIV-RAND" | "DIVRAND" => Ok(Strategy::DivRand),
            "DIV-DEP" | "DIVDEP" => Ok(Strategy::DivDep),
            "BFS" => Ok(Strategy::Bfs),
            _ => Err(format!("unknown strategy {s:?} (expected DIV-RAND, DIV-DEP or BFS)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    /// Number of parallel trees.
    pub gamma: usize,
    /// Probability of accepting a non-preferred invitation in a round.
    pub accept_prob: f64,
    pub strategy: Strategy,
    pub rng_seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            gamma: 1,
            accept_prob: 0.5,
            strategy: Strategy::DivRand,
            rng_seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.gamma == 0 {
            return Err(TreeError::InvalidConfig("gamma must be at least 1".into()));
        }
        if !(self.accept_prob > 0.0 && self.accept_prob <= 1.0) {
            return Err(TreeError::InvalidConfig(format!(
                "acceptance probability {} not in (0, 1]",
                self.accept_prob
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootPolicy {
    Random,
    /// Highest degree, lowest id on ties.
    #[default]
    MaxDegree,
    Fixed(NodeId),
}

/// Stand-in for a distributed root election.
pub fn elect_root(g: &Graph, policy: RootPolicy, seed: u64) -> Result<NodeId, TreeError> {
    elect_root_among(g, policy, seed, |_| true)
}

/// Like [`elect_root`], restricted to nodes accepted by `eligible`.
pub fn elect_root_among(
    g: &Graph,
    policy: RootPolicy,
    seed: u64,
    eligible: impl Fn(NodeId) -> bool,
) -> Result<NodeId, TreeError> {
    let n = g.node_count();
    if n == 0 {
        return Err(TreeError::InvalidConfig("empty graph".into()));
    }
    match policy {
        RootPolicy::Fixed(v) if v >= n => Err(TreeError::NodeOutOfRange { node: v, n }),
        RootPolicy::Fixed(v) => Ok(v),
        RootPolicy::MaxDegree => (0..n)
            .filter(|&v| eligible(v))
            .max_by_key(|&v| (g.degree(v), std::cmp::Reverse(v)))
            .ok_or_else(|| TreeError::InvalidConfig("no eligible root".into())),
        RootPolicy::Random => {
            let pool: Vec<NodeId> = (0..n).filter(|&v| eligible(v)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            pool.choose(&mut rng)
                .copied()
                .ok_or_else(|| TreeError::InvalidConfig("no eligible root".into()))
        }
    }
}

/// One rooted spanning tree over the node ids of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    root: NodeId,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    level: Vec<u32>,
    join_round: Vec<u32>,
    member: Vec<bool>,
}

impl Tree {
    fn empty(n: usize, root: NodeId) -> Self {
        let mut t = Self {
            root,
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            level: vec![0; n],
            join_round: vec![0; n],
            member: vec![false; n],
        };
        t.member[root] = true;
        t
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.member[v]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    /// Depth of `v`; `None` when `v` is not in the tree.
    pub fn level(&self, v: NodeId) -> Option<u32> {
        self.member[v].then(|| self.level[v])
    }

    pub fn join_round(&self, v: NodeId) -> Option<u32> {
        self.member[v].then(|| self.join_round[v])
    }

    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.member.len()).filter(|&v| self.member[v])
    }

    pub fn member_count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// All strict descendants of `v`, in preorder.
    pub fn descendants(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.children[v].iter().rev().copied().collect();
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        out
    }

    pub fn subtree_size(&self, v: NodeId) -> usize {
        let mut count = 0;
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            count += 1;
            stack.extend(&self.children[u]);
        }
        count
    }

    /// Ancestors of `v` from its parent up to the root.
    pub fn ancestors(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.parent[v];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p];
        }
        out
    }

    fn attach(&mut self, child: NodeId, parent: NodeId, round: u32) {
        self.member[child] = true;
        self.parent[child] = Some(parent);
        self.level[child] = self.level[parent] + 1;
        self.join_round[child] = round;
        self.children[parent].push(child);
    }

    /// Drops `v` from the tree, resetting its record. Links to and from
    /// `v` must be cleared by the caller.
    fn forget(&mut self, v: NodeId) {
        self.member[v] = false;
        self.level[v] = 0;
        self.join_round[v] = 0;
    }

    fn detach_from_parent(&mut self, v: NodeId) -> Option<NodeId> {
        let p = self.parent[v].take()?;
        if let Some(pos) = self.children[p].iter().position(|&c| c == v) {
            self.children[p].remove(pos);
        }
        Some(p)
    }

    /// Recomputes levels below `v` from its current level.
    fn relevel_subtree(&mut self, v: NodeId) {
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for i in 0..self.children[u].len() {
                let c = self.children[u][i];
                self.level[c] = self.level[u] + 1;
                self.join_round[c] = self.join_round[c].max(self.join_round[u] + 1);
                stack.push(c);
            }
        }
    }

    /// Checks the structural invariants against `g`; returns a description
    /// of the first violation.
    pub fn check(&self, g: &Graph) -> Result<(), String> {
        if !self.member[self.root] || self.parent[self.root].is_some() || self.level[self.root] != 0 {
            return Err(format!("root {} malformed", self.root));
        }
        for v in self.members() {
            if v == self.root {
                continue;
            }
            let p = self.parent[v].ok_or_else(|| format!("member {v} has no parent"))?;
            if !self.member[p] {
                return Err(format!("parent {p} of {v} is not a member"));
            }
            if !g.has_edge(v, p) {
                return Err(format!("tree edge ({v},{p}) is not a graph edge"));
            }
            if self.level[v] != self.level[p] + 1 {
                return Err(format!("level of {v} is not parent level + 1"));
            }
            if !self.children[p].contains(&v) {
                return Err(format!("{v} missing from children of {p}"));
            }
            if self.ancestors(v).len() as u32 != self.level[v] {
                return Err(format!("parent chain of {v} does not match its level"));
            }
        }
        for v in 0..self.member.len() {
            if !self.member[v] && (self.parent[v].is_some() || !self.children[v].is_empty()) {
                return Err(format!("non-member {v} has tree links"));
            }
        }
        Ok(())
    }
}

/// Per node, how many trees each neighbor is its parent in. Rows are
/// aligned with the sorted adjacency lists of the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentCounts {
    counts: Vec<Vec<u32>>,
}

impl ParentCounts {
    fn new(g: &Graph) -> Self {
        Self {
            counts: (0..g.node_count()).map(|u| vec![0; g.degree(u)]).collect(),
        }
    }

    /// Number of trees in which `neighbor` is the parent of `node`.
    pub fn get(&self, g: &Graph, node: NodeId, neighbor: NodeId) -> u32 {
        g.neighbor_index(node, neighbor).map_or(0, |i| self.counts[node][i])
    }

    pub fn row(&self, node: NodeId) -> &[u32] {
        &self.counts[node]
    }

    fn add(&mut self, g: &Graph, node: NodeId, neighbor: NodeId, delta: i32) {
        let i = g
            .neighbor_index(node, neighbor)
            .expect("parent must be a graph neighbor");
        let c = &mut self.counts[node][i];
        *c = c.checked_add_signed(delta).expect("parent count underflow");
    }

    fn clear(&mut self, node: NodeId) {
        self.counts[node].iter_mut().for_each(|c| *c = 0);
    }
}

/// The γ parallel trees plus the per-node parent counts that drive parent
/// diversity.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSet {
    trees: Vec<Tree>,
    parent_counts: ParentCounts,
    strategy: Strategy,
    accept_prob: f64,
}

impl TreeSet {
    fn new(g: &Graph, roots: &[NodeId], strategy: Strategy, accept_prob: f64) -> Self {
        Self {
            trees: roots.iter().map(|&r| Tree::empty(g.node_count(), r)).collect(),
            parent_counts: ParentCounts::new(g),
            strategy,
            accept_prob,
        }
    }

    pub fn gamma(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, i: usize) -> &Tree {
        &self.trees[i]
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn accept_prob(&self) -> f64 {
        self.accept_prob
    }

    pub fn parent_counts(&self) -> &ParentCounts {
        &self.parent_counts
    }

    pub fn node_count(&self) -> usize {
        self.trees.first().map_or(0, Tree::node_count)
    }

    pub fn is_root(&self, v: NodeId) -> bool {
        self.trees.iter().any(|t| t.root == v)
    }

    /// Number of nodes whose parent chain passes through `node` in `tree`.
    pub fn descendants_count(&self, node: NodeId, tree: usize) -> Result<usize, TreeError> {
        let t = self.trees.get(tree).ok_or(TreeError::TreeOutOfRange {
            tree,
            gamma: self.gamma(),
        })?;
        if node >= t.node_count() {
            return Err(TreeError::NodeOutOfRange {
                node,
                n: t.node_count(),
            });
        }
        if !t.contains(node) {
            return Err(TreeError::NotMember { node });
        }
        Ok(t.subtree_size(node) - 1)
    }

    fn attach(&mut self, g: &Graph, tree: usize, child: NodeId, parent: NodeId, round: u32) {
        self.trees[tree].attach(child, parent, round);
        self.parent_counts.add(g, child, parent, 1);
    }

    /// Validates every tree and the parent-count bookkeeping.
    pub fn check(&self, g: &Graph) -> Result<(), String> {
        for (i, t) in self.trees.iter().enumerate() {
            t.check(g).map_err(|e| format!("tree {i}: {e}"))?;
        }
        for u in 0..g.node_count() {
            for (k, &w) in g.neighbors(u).iter().enumerate() {
                let expected = self
                    .trees
                    .iter()
                    .filter(|t| t.member[u] && t.parent[u] == Some(w))
                    .count() as u32;
                if self.parent_counts.counts[u][k] != expected {
                    return Err(format!("parent count of ({u},{w}) is stale"));
                }
            }
        }
        Ok(())
    }

    /// Diagnostic text dump: `tree node parent level` per member, `-` for
    /// the root's parent.
    pub fn dump(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "tree\tnode\tparent\tlevel")?;
        for (i, t) in self.trees.iter().enumerate() {
            for v in t.members() {
                match t.parent[v] {
                    Some(p) => writeln!(out, "{i}\t{v}\t{p}\t{}", t.level[v])?,
                    None => writeln!(out, "{i}\t{v}\t-\t{}", t.level[v])?,
                }
            }
        }
        Ok(())
    }
}

/// Builds `cfg.gamma` trees over the whole graph.
pub fn construct_trees(g: &Graph, cfg: &TreeConfig, roots: &[NodeId]) -> Result<TreeSet, TreeError> {
    let live = vec![true; g.node_count()];
    construct_trees_masked(g, cfg, roots, &live)
}

/// Builds the trees over the nodes with `live[v]` set; other nodes stay
/// outside every tree (they can join later).
pub fn construct_trees_masked(
    g: &Graph,
    cfg: &TreeConfig,
    roots: &[NodeId],
    live: &[bool],
) -> Result<TreeSet, TreeError> {
    cfg.validate()?;
    if roots.len() != cfg.gamma {
        return Err(TreeError::RootCount {
            expected: cfg.gamma,
            got: roots.len(),
        });
    }
    let n = g.node_count();
    if let Some(&r) = roots.iter().find(|&&r| r >= n) {
        return Err(TreeError::NodeOutOfRange { node: r, n });
    }
    let labels = g.components_masked(live);
    let root_label = labels[roots[0]];
    if root_label.is_none()
        || roots.iter().any(|&r| labels[r] != root_label)
        || labels.iter().zip(live).any(|(l, &a)| a && *l != root_label)
    {
        return Err(TreeError::Disconnected);
    }
    match cfg.strategy {
        Strategy::Bfs => Ok(bfs_trees(g, cfg, roots, live)),
        Strategy::DivRand | Strategy::DivDep => Construction::new(g, cfg, roots, live)?.run(),
    }
}

fn bfs_trees(g: &Graph, cfg: &TreeConfig, roots: &[NodeId], live: &[bool]) -> TreeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut ts = TreeSet::new(g, roots, Strategy::Bfs, cfg.accept_prob);
    let mut order = Vec::new();
    for (i, &root) in roots.iter().enumerate() {
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            order.clear();
            order.extend(g.neighbors(u).iter().copied().filter(|&v| live[v]));
            order.shuffle(&mut rng);
            for &v in &order {
                if !ts.trees[i].member[v] {
                    let round = ts.trees[i].level[u] + 1;
                    ts.attach(g, i, v, u, round);
                    queue.push_back(v);
                }
            }
        }
    }
    ts
}

/// Picks one invitation following the diversity rule: anything from a
/// neighbor with globally minimal parent count is taken at once, otherwise
/// with probability `accept_prob` the best available one is taken.
pub(crate) fn select_invitation<R: Rng>(
    g: &Graph,
    ts: &TreeSet,
    node: NodeId,
    invitations: &[Invitation],
    neighbor_ok: impl Fn(NodeId) -> bool,
    rng: &mut R,
) -> Option<Invitation> {
    if invitations.is_empty() {
        return None;
    }
    let row = ts.parent_counts.row(node);
    let pc = |w: NodeId| row[g.neighbor_index(node, w).expect("inviter is a neighbor")];
    let global_min = g
        .neighbors(node)
        .iter()
        .zip(row)
        .filter(|(&v, _)| neighbor_ok(v))
        .map(|(_, &c)| c)
        .min()
        .unwrap_or(0);
    let preferred: Vec<Invitation> = invitations
        .iter()
        .copied()
        .filter(|inv| pc(inv.from) <= global_min)
        .collect();
    let pool = if !preferred.is_empty() {
        preferred
    } else {
        let r: f64 = rng.gen();
        if r > ts.accept_prob {
            return None;
        }
        let best = invitations.iter().map(|inv| pc(inv.from)).min()?;
        invitations.iter().copied().filter(|inv| pc(inv.from) == best).collect()
    };
    Some(tie_break(ts, &pool, rng))
}

fn tie_break<R: Rng>(ts: &TreeSet, pool: &[Invitation], rng: &mut R) -> Invitation {
    match ts.strategy {
        Strategy::DivRand => *pool.choose(rng).expect("non-empty pool"),
        Strategy::DivDep | Strategy::Bfs => {
            let level = |inv: &Invitation| ts.trees[inv.tree].level[inv.from];
            let low = pool.iter().map(level).min().expect("non-empty pool");
            let lowest: Vec<Invitation> = pool.iter().copied().filter(|inv| level(inv) == low).collect();
            *lowest.choose(rng).expect("non-empty pool")
        }
    }
}
