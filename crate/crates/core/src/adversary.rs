//! Node failures and the single-attacker strategies.

use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::embedding::{Coordinate, Embedding};
use crate::graph::{Graph, GraphError, NodeId};
use crate::trees::TreeSet;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("failure fraction {0} outside [0, 0.5]")]
    Fraction(f64),
    #[error("attacker wants {x} edges but only {n} honest nodes exist")]
    TooManyEdges { x: usize, n: usize },
    #[error("an attacker needs at least one edge")]
    NoEdges,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AdversaryMode {
    #[default]
    None,
    RandomFailures(f64),
    AttRand,
    AttRoot,
}

impl AdversaryMode {
    pub fn is_attack(self) -> bool {
        matches!(self, Self::AttRand | Self::AttRoot)
    }
}

impl fmt::Display for AdversaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::RandomFailures(p) => write!(f, "random-failures({p})"),
            Self::AttRand => f.write_str("att-rand"),
            Self::AttRoot => f.write_str("att-root"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryConfig {
    pub mode: AdversaryMode,
    /// Edges of the attacker node (`x`).
    pub attacker_edges: usize,
    pub seed: u64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            mode: AdversaryMode::None,
            attacker_edges: 16,
            seed: 0,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        match self.mode {
            AdversaryMode::RandomFailures(p) if !(0.0..=0.5).contains(&p) => Err(AdversaryError::Fraction(p)),
            m if m.is_attack() && self.attacker_edges == 0 => Err(AdversaryError::NoEdges),
            _ => Ok(()),
        }
    }
}

/// Which nodes are up, and which one (if any) silently drops messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveMask {
    live: Vec<bool>,
    attacker: Option<NodeId>,
}

impl LiveMask {
    pub fn all_live(n: usize) -> Self {
        Self {
            live: vec![true; n],
            attacker: None,
        }
    }

    pub fn from_flags(live: Vec<bool>) -> Self {
        Self { live, attacker: None }
    }

    /// Every node live; `attacker` accepts messages and drops them.
    pub fn with_attacker(n: usize, attacker: NodeId) -> Self {
        Self {
            live: vec![true; n],
            attacker: Some(attacker),
        }
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn is_live(&self, v: NodeId) -> bool {
        self.live[v]
    }

    /// Live and willing to forward.
    pub fn is_honest(&self, v: NodeId) -> bool {
        self.live[v] && self.attacker != Some(v)
    }

    pub fn attacker(&self) -> Option<NodeId> {
        self.attacker
    }

    pub fn flags(&self) -> &[bool] {
        &self.live
    }

    pub fn failed_count(&self) -> usize {
        self.live.iter().filter(|&&l| !l).count()
    }

    /// Liveness restricted to honest nodes.
    pub fn honest_flags(&self) -> Vec<bool> {
        (0..self.live.len()).map(|v| self.is_honest(v)).collect()
    }
}

/// A uniformly random order of the nodes. The first `k` entries are the
/// failed set for `k` failures, so larger fractions fail supersets.
pub fn failure_order(n: usize, seed: u64) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Fails exactly `floor(fraction * n)` uniformly chosen nodes.
pub fn inject_failures(g: &Graph, fraction: f64, seed: u64) -> Result<LiveMask, AdversaryError> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(AdversaryError::Fraction(fraction));
    }
    let n = g.node_count();
    let k = (fraction * n as f64).floor() as usize;
    let mut live = vec![true; n];
    for v in failure_order(n, seed).into_iter().take(k) {
        live[v] = false;
    }
    Ok(LiveMask::from_flags(live))
}

/// Adds one attacker node linked to `x` distinct random nodes of `g`.
pub fn attach_attacker(g: &Graph, x: usize, seed: u64) -> Result<(Graph, NodeId), AdversaryError> {
    let n = g.node_count();
    if x == 0 {
        return Err(AdversaryError::NoEdges);
    }
    if x > n {
        return Err(AdversaryError::TooManyEdges { x, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = index::sample(&mut rng, n, x).into_vec();
    Ok(g.with_extra_node(&targets)?)
}

/// Root list that puts the attacker at the top of every tree.
pub fn att_root_roots(attacker: NodeId, gamma: usize) -> Vec<NodeId> {
    vec![attacker; gamma]
}

/// Gives every child of `attacker` a fabricated prefix in place of the
/// attacker's coordinate, drawn independently per child and tree. The
/// whole subtree below the child moves along. Returns the number of
/// children that were re-prefixed.
pub fn apply_att_rand(ts: &TreeSet, emb: &mut Embedding, attacker: NodeId, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = emb.config().mask();
    let mut count = 0;
    for tree in 0..ts.gamma() {
        let Some(len) = emb.coordinate(tree, attacker).map(Coordinate::len) else {
            continue;
        };
        for &c in ts.tree(tree).children(attacker) {
            let prefix = Coordinate::new((0..len).map(|_| rng.gen::<u128>() & mask).collect());
            emb.rebase_subtree(ts, tree, c, &prefix);
            count += 1;
        }
    }
    count
}
