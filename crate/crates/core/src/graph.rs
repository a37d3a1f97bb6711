//! Undirected social graph: loading, synthetic generation and basic queries.
//!
//! Node ids are always dense (`0..n`). Adjacency lists are kept sorted, which
//! makes edge lookups a binary search and keeps iteration order
//! deterministic for seeded simulations.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("could not generate a connected graph after {attempts} attempts")]
    Generation { attempts: usize },
    #[error("cannot read {}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Simple undirected graph with sorted, deduplicated adjacency lists.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<NodeId>>,
    edges: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.node_count())
            .field("edges", &self.edges)
            .finish()
    }
}

impl Graph {
    /// Builds a graph on `n` nodes. Self-loops are dropped and duplicate or
    /// reversed edges collapse into one undirected edge.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut edges = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            edges += list.len();
        }
        Ok(Self { adj, edges: edges / 2 })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adj[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.adj.len() && self.adj[u].binary_search(&v).is_ok()
    }

    /// Position of `v` in the sorted neighbor list of `u`.
    pub fn neighbor_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        self.adj[u].binary_search(&v).ok()
    }

    /// Every undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn average_degree(&self) -> f64 {
        if self.adj.is_empty() {
            0.0
        } else {
            2.0 * self.edges as f64 / self.adj.len() as f64
        }
    }

    /// Returns a copy with one extra node `n` attached to every node in
    /// `targets`.
    pub fn with_extra_node(&self, targets: &[NodeId]) -> Result<(Self, NodeId), GraphError> {
        let n = self.node_count();
        let edges = self.edges().chain(targets.iter().map(|&t| (n, t))).collect::<Vec<_>>();
        Ok((Self::from_edges(n + 1, edges)?, n))
    }

    /// Component label per node, labels assigned in order of the smallest
    /// member id. Only nodes with `alive[v]` take part; others get `None`.
    pub fn components_masked(&self, alive: &[bool]) -> Vec<Option<usize>> {
        let mut label = vec![None; self.node_count()];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.node_count() {
            if !alive[start] || label[start].is_some() {
                continue;
            }
            label[start] = Some(next);
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adj[u] {
                    if alive[v] && label[v].is_none() {
                        label[v] = Some(next);
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn components(&self) -> Vec<usize> {
        let alive = vec![true; self.node_count()];
        self.components_masked(&alive)
            .into_iter()
            .map(|c| c.expect("every node is alive"))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() > 0 && self.components().iter().all(|&c| c == 0)
    }

    /// Induced subgraph on the nodes where `keep` is set. Returns the
    /// subgraph and, for each new id, the original id.
    pub fn induced_subgraph(&self, keep: &[bool]) -> (Self, Vec<NodeId>) {
        let old_ids: Vec<NodeId> = (0..self.node_count()).filter(|&v| keep[v]).collect();
        let mut new_id = vec![usize::MAX; self.node_count()];
        for (new, &old) in old_ids.iter().enumerate() {
            new_id[old] = new;
        }
        let adj = old_ids
            .iter()
            .map(|&old| {
                self.adj[old]
                    .iter()
                    .filter(|&&v| keep[v])
                    .map(|&v| new_id[v])
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let edges = adj.iter().map(Vec::len).sum::<usize>() / 2;
        (Self { adj, edges }, old_ids)
    }

    /// Largest connected component (lowest label wins ties), ids remapped.
    pub fn giant_component_with_ids(&self) -> (Self, Vec<NodeId>) {
        let labels = self.components();
        let count = labels.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; count];
        for &c in &labels {
            sizes[c] += 1;
        }
        let best = (0..count).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)));
        let keep: Vec<bool> = labels.iter().map(|&c| Some(c) == best).collect();
        self.induced_subgraph(&keep)
    }

    pub fn giant_component(&self) -> Self {
        self.giant_component_with_ids().0
    }

    /// Breadth-first hop distances from `source`; `None` marks unreachable
    /// nodes.
    pub fn shortest_path_lengths(&self, source: NodeId) -> Result<Vec<Option<u32>>, GraphError> {
        if source >= self.node_count() {
            return Err(GraphError::NodeOutOfRange {
                node: source,
                n: self.node_count(),
            });
        }
        let mut dist = vec![None; self.node_count()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0) + 1;
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    fn eccentricity(&self, source: NodeId) -> (u32, NodeId) {
        let dist = self.shortest_path_lengths(source).expect("source is in range");
        dist.iter()
            .enumerate()
            .filter_map(|(v, d)| d.map(|d| (d, v)))
            .max_by_key(|&(d, v)| (d, std::cmp::Reverse(v)))
            .unwrap_or((0, source))
    }

    /// Double-sweep lower bound on the diameter of the component holding
    /// the highest-degree node.
    pub fn diameter_estimate(&self) -> u32 {
        if self.node_count() < 2 {
            return 0;
        }
        let start = (0..self.node_count())
            .max_by_key(|&v| (self.degree(v), std::cmp::Reverse(v)))
            .unwrap_or(0);
        let (_, far) = self.eccentricity(start);
        let (d, _) = self.eccentricity(far);
        d
    }

    pub fn stats(&self) -> GraphStats {
        let giant = self.giant_component();
        GraphStats {
            node_count: self.node_count(),
            edge_count: self.edge_count(),
            giant_component_size: giant.node_count(),
            diameter_estimate: giant.diameter_estimate(),
            average_degree: self.average_degree(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub giant_component_size: usize,
    pub diameter_estimate: u32,
    pub average_degree: f64,
}

impl GraphStats {
    pub const CSV_HEADER: &'static str = "n,m,giant,diameter,mean_degree";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.node_count, self.edge_count, self.giant_component_size, self.diameter_estimate, self.average_degree
        )
    }
}

/// Parses an edge list: one `u v` pair per line, extra columns ignored,
/// lines starting with `#` or `%` skipped. Original ids are remapped to
/// `0..n` in increasing numeric order.
pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next_id = || -> Result<u64, GraphError> {
            let field = fields.next().ok_or_else(|| GraphError::Parse {
                line: idx + 1,
                reason: "expected two node ids".into(),
            })?;
            field.parse::<u64>().map_err(|e| GraphError::Parse {
                line: idx + 1,
                reason: format!("bad node id {field:?}: {e}"),
            })
        };
        let u = next_id()?;
        let v = next_id()?;
        raw.push((u, v));
    }
    if raw.is_empty() {
        return Err(GraphError::InvalidInput("edge list contains no edges".into()));
    }
    let ids: BTreeSet<u64> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    let index: HashMap<u64, NodeId> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    Graph::from_edges(ids.len(), raw.iter().map(|(u, v)| (index[u], index[v])))
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edge_list(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticModel {
    /// G(n, p) with edge probability `p`.
    ErdosRenyi { p: f64 },
    /// Barabási–Albert growth, each new node attaching `m` edges.
    PreferentialAttachment { m: usize },
}

const GENERATION_ATTEMPTS: usize = 32;

/// Generates a connected synthetic graph; deterministic for a given seed.
pub fn generate_synthetic(model: SyntheticModel, n: usize, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidInput(format!("need at least 2 nodes, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        SyntheticModel::ErdosRenyi { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(GraphError::InvalidInput(format!("edge probability {p} not in (0, 1]")));
            }
            for _ in 0..GENERATION_ATTEMPTS {
                let g = erdos_renyi(n, p, &mut rng)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(GraphError::Generation {
                attempts: GENERATION_ATTEMPTS,
            })
        }
        SyntheticModel::PreferentialAttachment { m } => {
            if m == 0 {
                return Err(GraphError::InvalidInput("attachment degree must be >= 1".into()));
            }
            preferential_attachment(n, m, &mut rng)
        }
    }
}

fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Result<Graph, GraphError> {
    let mut edges = Vec::new();
    if p >= 1.0 {
        for u in 0..n {
            edges.extend((u + 1..n).map(|v| (u, v)));
        }
        return Graph::from_edges(n, edges);
    }
    // Geometric skipping over the upper triangle.
    let log_q = (1.0 - p).ln();
    let (mut u, mut v) = (1usize, -1i64);
    while u < n {
        let r: f64 = rng.gen();
        v += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while u < n && v >= u as i64 {
            v -= u as i64;
            u += 1;
        }
        if u < n {
            edges.push((u, v as usize));
        }
    }
    Graph::from_edges(n, edges)
}

fn preferential_attachment(n: usize, m: usize, rng: &mut impl Rng) -> Result<Graph, GraphError> {
    let mut edges = Vec::with_capacity(n * m);
    // Every edge endpoint, so a uniform pick is degree-proportional.
    let mut endpoints: Vec<NodeId> = Vec::with_capacity(2 * n * m);
    let mut chosen = Vec::with_capacity(m);
    for t in 1..n {
        chosen.clear();
        let want = m.min(t);
        while chosen.len() < want {
            let target = if endpoints.is_empty() {
                rng.gen_range(0..t)
            } else {
                *endpoints.choose(rng).expect("non-empty")
            };
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &target in &chosen {
            edges.push((t, target));
            endpoints.push(t);
            endpoints.push(target);
        }
    }
    Graph::from_edges(n, edges)
}
