//! Greedy routing with backtracking over one or several embeddings.

mod oracle;

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::addresses::{
    diversity_decrypted, diversity_rp, ppp_partial_decrypt, PppAddress, ReturnAddress, SubtreeKeys, XorPadCipher,
};
use crate::adversary::LiveMask;
use crate::embedding::{distance, Coordinate, Distance, Element, Embedding, Metric};
use crate::graph::{Graph, NodeId};

pub use oracle::{greedy_path_exists, ORACLE_MAX_NODES};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("routing configuration: {0}")]
    InvalidConfig(String),
    #[error("source {0} is not live or not embedded")]
    Source(NodeId),
    #[error("need {needed} targets, got {got}")]
    TargetCount { needed: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("instance with {n} nodes is too large for the exhaustive oracle (limit {limit})")]
    TooLarge { n: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Addressing {
    #[default]
    Coordinate,
    Rp,
    Ppp,
}

impl fmt::Display for Addressing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Coordinate => "coordinate",
            Self::Rp => "rp-address",
            Self::Ppp => "ppp-address",
        })
    }
}

impl std::str::FromStr for Addressing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coordinate" | "coord" => Ok(Self::Coordinate),
            "rp" | "rp-address" => Ok(Self::Rp),
            "ppp" | "ppp-address" => Ok(Self::Ppp),
            other => Err(format!("unknown addressing {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingChoice {
    /// `tau` trees drawn uniformly.
    #[default]
    RandomTau,
    /// The `tau` trees in which the source's best neighbor is closest.
    MinNeighborDistance,
}

impl fmt::Display for EmbeddingChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RandomTau => "random-tau",
            Self::MinNeighborDistance => "min-neighbor-distance",
        })
    }
}

impl std::str::FromStr for EmbeddingChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random-tau" | "random" => Ok(Self::RandomTau),
            "min-neighbor-distance" | "min" => Ok(Self::MinNeighborDistance),
            other => Err(format!("unknown embedding choice {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingConfig {
    pub tau: usize,
    pub metric: Metric,
    pub addressing: Addressing,
    pub backtracking: bool,
    pub embedding_choice: EmbeddingChoice,
    /// Hop cap per tree; `None` means `4 * max(n, |E|)`.
    pub max_hops: Option<usize>,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            tau: 1,
            metric: Metric::Td,
            addressing: Addressing::Coordinate,
            backtracking: true,
            embedding_choice: EmbeddingChoice::RandomTau,
            max_hops: None,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self, gamma: usize) -> Result<(), RoutingError> {
        if self.tau == 0 || self.tau > gamma {
            return Err(RoutingError::InvalidConfig(format!(
                "tau = {} must lie in 1..={gamma}",
                self.tau
            )));
        }
        if self.addressing == Addressing::Ppp && self.metric != Metric::Cpl {
            return Err(RoutingError::Unsupported(
                "encrypted addresses only support the CPL metric",
            ));
        }
        Ok(())
    }

    fn hop_cap(&self, g: &Graph) -> usize {
        self.max_hops.unwrap_or_else(|| 4 * g.node_count().max(g.edge_count()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// Back at the source with nothing left to try.
    NoProgress,
    /// As `NoProgress`, but the adversary swallowed at least one attempt.
    DroppedByAdversary,
    HopCap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteOutcome {
    pub success: bool,
    /// Messages sent, backtracking and dropped messages included.
    pub hops: usize,
    /// Every node that held the message, in order.
    pub path: Vec<NodeId>,
    /// Hops on the discovered route from source to destination.
    pub route_length: Option<usize>,
    pub failure_reason: Option<FailureReason>,
}

impl RouteOutcome {
    fn success(hops: usize, path: Vec<NodeId>, route_length: usize) -> Self {
        Self {
            success: true,
            hops,
            path,
            route_length: Some(route_length),
            failure_reason: None,
        }
    }

    fn failure(hops: usize, path: Vec<NodeId>, reason: FailureReason) -> Self {
        Self {
            success: false,
            hops,
            path,
            route_length: None,
            failure_reason: Some(reason),
        }
    }
}

/// What the message is addressed to in one tree.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// The destination's plain coordinate.
    Coordinate(&'a Coordinate),
    /// A return address; `issuer` recognizes it on arrival.
    Rp { address: &'a ReturnAddress, issuer: NodeId },
    /// A possibly outdated coordinate of a known node, recognized by the
    /// node itself.
    Entry { coord: &'a Coordinate, node: NodeId },
    /// An encrypted return address. `keys` holds each node's subtree keys
    /// in the address's tree.
    Ppp {
        address: &'a PppAddress,
        issuer: NodeId,
        keys: &'a [Option<SubtreeKeys>],
    },
}

impl Target<'_> {
    pub fn addressing(&self) -> Addressing {
        match self {
            Self::Coordinate(_) | Self::Entry { .. } => Addressing::Coordinate,
            Self::Rp { .. } => Addressing::Rp,
            Self::Ppp { .. } => Addressing::Ppp,
        }
    }
}

/// Distance evaluation as performed by the node holding the message.
struct Evaluator<'a> {
    target: Target<'a>,
    emb: &'a Embedding,
    tree: usize,
    metric: Metric,
    /// `f(y')` of the last evaluating node, for encrypted addresses.
    decrypted: Option<(NodeId, Vec<Element>)>,
}

impl<'a> Evaluator<'a> {
    fn new(target: Target<'a>, emb: &'a Embedding, tree: usize, metric: Metric) -> Result<Self, RoutingError> {
        if matches!(target, Target::Ppp { .. }) && metric != Metric::Cpl {
            return Err(RoutingError::Unsupported(
                "encrypted addresses only support the CPL metric",
            ));
        }
        Ok(Self {
            target,
            emb,
            tree,
            metric,
            decrypted: None,
        })
    }

    fn reached(&self, u: NodeId) -> bool {
        match self.target {
            Target::Coordinate(x) => self.emb.coordinate(self.tree, u) == Some(x),
            Target::Entry { node, .. } | Target::Rp { issuer: node, .. } | Target::Ppp { issuer: node, .. } => {
                u == node
            }
        }
    }

    /// Distance of `v` to the target as computed by `at`; `None` if `v`
    /// is not embedded in this tree.
    fn distance(&mut self, at: NodeId, v: NodeId) -> Option<Distance> {
        let c = self.emb.coordinate(self.tree, v)?.elements();
        let cfg = self.emb.config();
        Some(match self.target {
            Target::Coordinate(x) | Target::Entry { coord: x, .. } => distance(self.metric, c, x.elements(), cfg),
            Target::Rp { address, .. } => diversity_rp(address, c, self.metric, cfg),
            Target::Ppp { address, keys, .. } => {
                if self.decrypted.as_ref().map(|(w, _)| *w) != Some(at) {
                    let level = self.emb.coordinate(self.tree, at).map_or(0, Coordinate::len);
                    let f = match &keys[at] {
                        Some(k) => ppp_partial_decrypt(address, k, level, &XorPadCipher, cfg),
                        None => address.digests.first().copied().into_iter().collect(),
                    };
                    self.decrypted = Some((at, f));
                }
                let f = &self.decrypted.as_ref().expect("just set").1;
                diversity_decrypted(f, address.routing_seed, c, cfg)
            }
        })
    }
}

#[derive(Default)]
struct HopState {
    pred: Option<NodeId>,
    sent: HashSet<NodeId>,
}

/// Routes from `src` towards `target` in `tree`.
///
/// Each holder picks a uniformly random closest neighbor it has not yet
/// tried and forwards only on strict improvement. Without improvement it
/// hands the message back to its predecessor; at the source this ends the
/// attempt. The attacker in `live` takes messages and drops them, which
/// the sender notices and treats like a dead end.
#[allow(clippy::too_many_arguments)]
pub fn route<R: Rng>(
    g: &Graph,
    emb: &Embedding,
    src: NodeId,
    target: Target<'_>,
    tree: usize,
    cfg: &RoutingConfig,
    live: &LiveMask,
    rng: &mut R,
) -> Result<RouteOutcome, RoutingError> {
    if !live.is_honest(src) || emb.coordinate(tree, src).is_none() {
        return Err(RoutingError::Source(src));
    }
    let mut eval = Evaluator::new(target, emb, tree, cfg.metric)?;
    let cap = cfg.hop_cap(g);
    let mut states: HashMap<NodeId, HopState> = HashMap::new();
    let mut path = vec![src];
    let mut hops = 0;
    let mut dropped = false;
    let mut u = src;
    let mut from: Option<NodeId> = None;
    let mut closest = Vec::new();
    loop {
        if eval.reached(u) {
            let mut len = usize::from(from.is_some());
            let mut w = from;
            while let Some(p) = w.and_then(|w| states.get(&w)).and_then(|s| s.pred) {
                len += 1;
                w = Some(p);
            }
            return Ok(RouteOutcome::success(hops, path, len));
        }
        if hops >= cap {
            return Ok(RouteOutcome::failure(hops, path, FailureReason::HopCap));
        }
        let own = eval.distance(u, u).expect("holder is embedded");
        let state = states.entry(u).or_default();
        if let Some(w) = from {
            if !state.sent.contains(&w) {
                state.pred = Some(w);
            }
        }
        closest.clear();
        let mut best: Option<Distance> = None;
        for &v in g.neighbors(u) {
            if !live.is_live(v) || state.sent.contains(&v) {
                continue;
            }
            let Some(d) = eval.distance(u, v) else { continue };
            match best {
                Some(b) if d > b => {}
                Some(b) if d == b => closest.push(v),
                _ => {
                    best = Some(d);
                    closest.clear();
                    closest.push(v);
                }
            }
        }
        let improves = best.is_some_and(|b| b < own);
        if improves {
            let next = *closest.choose(rng).expect("non-empty");
            state.sent.insert(next);
            hops += 1;
            if live.attacker() == Some(next) {
                dropped = true;
                if !cfg.backtracking {
                    return Ok(RouteOutcome::failure(hops, path, FailureReason::DroppedByAdversary));
                }
                from = None;
                continue;
            }
            from = Some(u);
            u = next;
            path.push(u);
            continue;
        }
        let reason = if dropped {
            FailureReason::DroppedByAdversary
        } else {
            FailureReason::NoProgress
        };
        match state.pred {
            Some(p) if cfg.backtracking => {
                hops += 1;
                from = Some(u);
                u = p;
                path.push(u);
            }
            _ => return Ok(RouteOutcome::failure(hops, path, reason)),
        }
    }
}

/// [`route`] without backtracking: stops at the first local minimum.
#[allow(clippy::too_many_arguments)]
pub fn greedy_route<R: Rng>(
    g: &Graph,
    emb: &Embedding,
    src: NodeId,
    target: Target<'_>,
    tree: usize,
    cfg: &RoutingConfig,
    live: &LiveMask,
    rng: &mut R,
) -> Result<RouteOutcome, RoutingError> {
    let cfg = RoutingConfig {
        backtracking: false,
        ..*cfg
    };
    route(g, emb, src, target, tree, &cfg, live, rng)
}

/// Outcome of routing in several trees at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiOutcome {
    pub success: bool,
    /// Messages summed over all attempts.
    pub hops: usize,
    /// Shortest discovered route over the successful attempts.
    pub best_route_length: Option<usize>,
    /// The trees used, in order of the attempts.
    pub trees: Vec<usize>,
    pub attempts: Vec<RouteOutcome>,
}

impl MultiOutcome {
    /// Messages spent by the attempt that found the shortest route.
    pub fn best_hops(&self) -> Option<usize> {
        self.attempts
            .iter()
            .filter(|a| a.success)
            .min_by_key(|a| (a.route_length, a.hops))
            .map(|a| a.hops)
    }
}

/// Picks `cfg.tau` trees and routes in each independently. `targets` holds
/// one target per tree, indexed by tree. Every tree gets its own random
/// stream seeded from one draw of `rng`, so a tree's attempt does not
/// depend on which other trees were picked.
#[allow(clippy::too_many_arguments)]
pub fn route_multi<R: Rng>(
    g: &Graph,
    emb: &Embedding,
    src: NodeId,
    targets: &[Target<'_>],
    cfg: &RoutingConfig,
    live: &LiveMask,
    rng: &mut R,
) -> Result<MultiOutcome, RoutingError> {
    if targets.len() < cfg.tau {
        return Err(RoutingError::TargetCount {
            needed: cfg.tau,
            got: targets.len(),
        });
    }
    cfg.validate(targets.len())?;
    let base: u64 = rng.gen();
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.shuffle(rng);
    let trees: Vec<usize> = match cfg.embedding_choice {
        EmbeddingChoice::RandomTau => order[..cfg.tau].to_vec(),
        EmbeddingChoice::MinNeighborDistance => {
            let mut scored = Vec::with_capacity(targets.len());
            for (i, &t) in targets.iter().enumerate() {
                let mut eval = Evaluator::new(t, emb, i, cfg.metric)?;
                let best = g
                    .neighbors(src)
                    .iter()
                    .filter(|&&v| live.is_live(v))
                    .filter_map(|&v| eval.distance(src, v))
                    .min();
                scored.push((best.is_none(), best, i));
            }
            scored.sort();
            scored[..cfg.tau].iter().map(|&(_, _, i)| i).collect()
        }
    };
    let mut out = MultiOutcome {
        success: false,
        hops: 0,
        best_route_length: None,
        trees: trees.clone(),
        attempts: Vec::with_capacity(trees.len()),
    };
    for i in trees {
        let mut tree_rng = ChaCha8Rng::seed_from_u64(base);
        tree_rng.set_stream(i as u64);
        let a = route(g, emb, src, targets[i], i, cfg, live, &mut tree_rng)?;
        out.success |= a.success;
        out.hops += a.hops;
        if let Some(len) = a.route_length {
            out.best_route_length = Some(out.best_route_length.map_or(len, |b| b.min(len)));
        }
        out.attempts.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
