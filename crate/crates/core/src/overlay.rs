//! Kademlia-style overlay whose links are routes over the embeddings.

use std::collections::HashSet;
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::LiveMask;
use crate::embedding::{Coordinate, Embedding};
use crate::graph::{Graph, NodeId};
use crate::routing::{route_multi, RoutingConfig, RoutingError, Target};

pub const ID_BITS: usize = 160;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("overlay configuration: {0}")]
    InvalidConfig(String),
    #[error("origin {0} is not a live overlay member")]
    Origin(NodeId),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// 160-bit overlay identifier, big-endian.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct KadId(pub [u8; 20]);

impl KadId {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let mut b = [0u8; 20];
        rng.fill(&mut b);
        Self(b)
    }

    /// XOR distance, itself an id so it orders like a number.
    pub fn xor(&self, other: &KadId) -> KadId {
        let mut b = [0u8; 20];
        for (i, x) in b.iter_mut().enumerate() {
            *x = self.0[i] ^ other.0[i];
        }
        KadId(b)
    }

    /// Leading bits shared with `other`; 160 for equal ids.
    pub fn cpl(&self, other: &KadId) -> usize {
        for (i, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            let x = a ^ b;
            if x != 0 {
                return i * 8 + x.leading_zeros() as usize;
            }
        }
        ID_BITS
    }

    fn bit(&self, i: usize) -> bool {
        self.0[i / 8] >> (7 - i % 8) & 1 == 1
    }

    fn set_bit(&mut self, i: usize, on: bool) {
        let m = 1u8 << (7 - i % 8);
        if on {
            self.0[i / 8] |= m;
        } else {
            self.0[i / 8] &= !m;
        }
    }

    /// Smallest and largest id that shares exactly `j` leading bits with
    /// `self`.
    fn bucket_bounds(&self, j: usize) -> (KadId, KadId) {
        let mut lo = *self;
        lo.set_bit(j, !self.bit(j));
        let mut hi = lo;
        for i in j + 1..ID_BITS {
            lo.set_bit(i, false);
            hi.set_bit(i, true);
        }
        (lo, hi)
    }
}

impl fmt::Debug for KadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DhtConfig {
    /// `k`, the bucket size.
    pub bucket_size: usize,
    /// Parallel walks per lookup.
    pub alpha: usize,
    /// Number of closest nodes that store an item.
    pub replication: usize,
}

impl Default for DhtConfig {
    fn default() -> Self {
        Self {
            bucket_size: 8,
            alpha: 1,
            replication: 1,
        }
    }
}

impl DhtConfig {
    pub fn validate(&self) -> Result<(), OverlayError> {
        if self.bucket_size == 0 || self.alpha == 0 || self.replication == 0 {
            return Err(OverlayError::InvalidConfig(format!(
                "{self:?}: all fields must be at least 1"
            )));
        }
        Ok(())
    }
}

/// A routing-table entry: the peer and the coordinates it last announced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableEntry {
    pub node: NodeId,
    pub id: KadId,
    /// One coordinate per tree, as of the last successful contact.
    pub coords: Vec<Coordinate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhtNode {
    pub id: KadId,
    /// Bucket `j` holds peers sharing exactly `j` leading id bits.
    pub buckets: Vec<Vec<TableEntry>>,
}

impl DhtNode {
    pub fn entries(&self) -> impl Iterator<Item = &TableEntry> {
        self.buckets.iter().flatten()
    }

    pub fn filled_buckets(&self) -> usize {
        self.buckets.iter().filter(|b| !b.is_empty()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Overlay {
    cfg: DhtConfig,
    /// `None` for nodes outside the overlay.
    nodes: Vec<Option<DhtNode>>,
}

fn snapshot(emb: &Embedding, v: NodeId) -> Option<Vec<Coordinate>> {
    (0..emb.gamma()).map(|i| emb.coordinate(i, v).cloned()).collect()
}

/// Assigns random ids to every live node embedded in all trees and fills
/// each bucket with up to `k` peers drawn at random from all that fit.
pub fn build_overlay(emb: &Embedding, live: &LiveMask, cfg: &DhtConfig, seed: u64) -> Result<Overlay, OverlayError> {
    cfg.validate()?;
    let n = live.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<KadId> = (0..n).map(|_| KadId::random(&mut rng)).collect();
    let members: Vec<Option<Vec<Coordinate>>> = (0..n).map(|v| snapshot(emb, v).filter(|_| live.is_live(v))).collect();
    let mut sorted: Vec<(KadId, NodeId)> = (0..n).filter(|&v| members[v].is_some()).map(|v| (ids[v], v)).collect();
    sorted.sort();
    let mut nodes = vec![None; n];
    for v in 0..n {
        if members[v].is_none() {
            continue;
        }
        let mut buckets = vec![Vec::new(); ID_BITS];
        for (j, bucket) in buckets.iter_mut().enumerate() {
            let (lo, hi) = ids[v].bucket_bounds(j);
            let start = sorted.partition_point(|(id, _)| *id < lo);
            let end = sorted.partition_point(|(id, _)| *id <= hi);
            let len = end - start;
            if len == 0 {
                continue;
            }
            let mut picked = index::sample(&mut rng, len, len.min(cfg.bucket_size)).into_vec();
            picked.sort_unstable();
            *bucket = picked
                .into_iter()
                .map(|i| {
                    let (id, w) = sorted[start + i];
                    TableEntry {
                        node: w,
                        id,
                        coords: members[w].clone().expect("member"),
                    }
                })
                .collect();
        }
        nodes[v] = Some(DhtNode { id: ids[v], buckets });
    }
    Ok(Overlay { cfg: *cfg, nodes })
}

/// One attempted overlay hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayHop {
    pub from: NodeId,
    pub to: NodeId,
    /// Underlay messages spent on the hop, backtracking included.
    pub underlay_hops: usize,
    /// Shortest route found over the embeddings, if delivered.
    pub route_length: Option<usize>,
    pub delivered: bool,
    /// A hand-back to the predecessor rather than a forward.
    pub backtrack: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupOutcome {
    pub success: bool,
    /// The live member whose id is closest to the key.
    pub closest: Option<NodeId>,
    /// Total underlay messages over all walks.
    pub underlay_hops: usize,
    /// Overlay path of the walk that found the closest node.
    pub path: Vec<NodeId>,
    /// Underlay messages spent on the hops along `path`.
    pub path_hops: usize,
    /// Underlay length of `path`: the shortest route of each of its hops.
    pub path_length: usize,
    /// Every overlay hop in the order it was attempted.
    pub trace: Vec<OverlayHop>,
}

struct Walk<'o> {
    /// Nodes holding the lookup, the active one last, each with the cost
    /// of the hop that reached it.
    stack: Vec<(NodeId, usize)>,
    /// Per stack level: entries still to try, the closest last.
    pending: Vec<Vec<&'o TableEntry>>,
}

impl Overlay {
    pub fn config(&self) -> &DhtConfig {
        &self.cfg
    }

    pub fn node(&self, v: NodeId) -> Option<&DhtNode> {
        self.nodes.get(v).and_then(Option::as_ref)
    }

    pub fn id(&self, v: NodeId) -> Option<KadId> {
        self.node(v).map(|d| d.id)
    }

    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some())
            .map(|(v, _)| v)
    }

    /// Exhaustive search for the live member closest to `key`.
    pub fn closest_live(&self, key: &KadId, live: &LiveMask) -> Option<NodeId> {
        self.members()
            .filter(|&v| live.is_live(v))
            .min_by_key(|&v| self.nodes[v].as_ref().expect("member").id.xor(key))
    }

    /// The `replication` live members closest to `key`.
    pub fn replicas(&self, key: &KadId, live: &LiveMask) -> Vec<NodeId> {
        let mut all: Vec<(KadId, NodeId)> = self
            .members()
            .filter(|&v| live.is_live(v))
            .map(|v| (self.nodes[v].as_ref().expect("member").id.xor(key), v))
            .collect();
        all.sort();
        all.into_iter().take(self.cfg.replication).map(|(_, v)| v).collect()
    }

    /// Table entries of `holder` closer to `key` than itself, closest first.
    fn closer_entries(&self, holder: NodeId, key: &KadId) -> Vec<&TableEntry> {
        let me = self.nodes[holder].as_ref().expect("member");
        let own = me.id.xor(key);
        let mut out: Vec<&TableEntry> = me.entries().filter(|e| e.id.xor(key) < own).collect();
        out.sort_by_key(|e| e.id.xor(key));
        out
    }

    /// Recursive lookup for `key` from `origin` with `alpha` walks sharing
    /// one set of visited nodes. Each overlay hop routes over the
    /// embeddings to the coordinates stored in the table entry; a node
    /// whose closer entries are all unreachable hands the lookup back.
    #[allow(clippy::too_many_arguments)]
    pub fn lookup<R: Rng>(
        &self,
        g: &Graph,
        emb: &Embedding,
        key: &KadId,
        origin: NodeId,
        routing: &RoutingConfig,
        live: &LiveMask,
        rng: &mut R,
    ) -> Result<LookupOutcome, OverlayError> {
        if self.node(origin).is_none() || !live.is_honest(origin) {
            return Err(OverlayError::Origin(origin));
        }
        let closest = self.closest_live(key, live);
        let mut out = LookupOutcome {
            success: false,
            closest,
            underlay_hops: 0,
            path: vec![origin],
            path_hops: 0,
            path_length: 0,
            trace: Vec::new(),
        };
        if closest == Some(origin) {
            out.success = true;
            return Ok(out);
        }
        let first = self.closer_entries(origin, key);
        let alpha = self.cfg.alpha.min(first.len());
        let mut visited: HashSet<NodeId> = HashSet::from([origin]);
        // Walk `w` starts with the `w`-th closest entry and falls back to
        // the entries behind the first `alpha`.
        let mut walks: Vec<Walk<'_>> = (0..alpha)
            .map(|w| Walk {
                stack: vec![(origin, 0)],
                pending: vec![first[alpha..].iter().rev().copied().chain([first[w]]).collect()],
            })
            .collect();
        while !walks.is_empty() {
            for walk in &mut walks {
                let &(holder, _) = walk.stack.last().expect("finished walks are dropped");
                let next = loop {
                    match walk.pending.last_mut().and_then(Vec::pop) {
                        Some(e) if visited.contains(&e.node) => continue,
                        other => break other,
                    }
                };
                let Some(entry) = next else {
                    // Hand the lookup back to the predecessor.
                    let (_, cost) = walk.stack.pop().expect("non-empty");
                    walk.pending.pop();
                    if let Some(&(pred, _)) = walk.stack.last() {
                        out.underlay_hops += cost;
                        out.trace.push(OverlayHop {
                            from: holder,
                            to: pred,
                            underlay_hops: cost,
                            route_length: Some(cost),
                            delivered: true,
                            backtrack: true,
                        });
                    }
                    continue;
                };
                let targets: Vec<Target<'_>> = entry
                    .coords
                    .iter()
                    .map(|c| Target::Entry {
                        coord: c,
                        node: entry.node,
                    })
                    .collect();
                let m = route_multi(g, emb, holder, &targets, routing, live, rng)?;
                out.underlay_hops += m.hops;
                out.trace.push(OverlayHop {
                    from: holder,
                    to: entry.node,
                    underlay_hops: m.hops,
                    route_length: m.best_route_length,
                    delivered: m.success,
                    backtrack: false,
                });
                if !m.success {
                    continue;
                }
                visited.insert(entry.node);
                walk.stack.push((entry.node, m.best_route_length.unwrap_or(m.hops)));
                if Some(entry.node) == closest {
                    out.success = true;
                    out.path = walk.stack.iter().map(|&(v, _)| v).collect();
                    (out.path_hops, out.path_length) = path_cost(&out.trace, &out.path);
                    return Ok(out);
                }
                let mut more = self.closer_entries(entry.node, key);
                more.reverse();
                walk.pending.push(more);
            }
            walks.retain(|w| !w.stack.is_empty());
        }
        Ok(out)
    }

    /// Drops `departed` from the overlay. Entries pointing to it stay until
    /// a contact fails.
    pub fn remove_node(&mut self, departed: NodeId) {
        if let Some(slot) = self.nodes.get_mut(departed) {
            *slot = None;
        }
    }

    /// Applies what the holders learned during a lookup: unreachable
    /// entries are evicted, reachable ones take the peer's current
    /// coordinates. Returns `(evicted, refreshed)`.
    pub fn apply_feedback(&mut self, outcome: &LookupOutcome, emb: &Embedding) -> (usize, usize) {
        let mut evicted = 0;
        let mut refreshed = 0;
        for hop in outcome.trace.iter().filter(|h| !h.backtrack) {
            let Some(me) = self.nodes[hop.from].as_mut() else {
                continue;
            };
            for bucket in &mut me.buckets {
                if hop.delivered {
                    for e in bucket.iter_mut().filter(|e| e.node == hop.to) {
                        if let Some(c) = snapshot(emb, hop.to) {
                            if c != e.coords {
                                e.coords = c;
                                refreshed += 1;
                            }
                        }
                    }
                } else {
                    let before = bucket.len();
                    bucket.retain(|e| e.node != hop.to);
                    evicted += before - bucket.len();
                }
            }
        }
        (evicted, refreshed)
    }

    /// Refills empty buckets of live members from the live members that
    /// fit, as a discovery lookup would. Returns the number of entries
    /// added.
    pub fn refill_empty_buckets(&mut self, emb: &Embedding, live: &LiveMask, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sorted: Vec<(KadId, NodeId)> = self
            .members()
            .filter(|&v| live.is_live(v))
            .map(|v| (self.nodes[v].as_ref().expect("member").id, v))
            .collect();
        sorted.sort();
        let k = self.cfg.bucket_size;
        let mut added = 0;
        for v in 0..self.nodes.len() {
            if !live.is_live(v) {
                continue;
            }
            let Some(me) = self.nodes[v].as_mut() else { continue };
            for (j, bucket) in me.buckets.iter_mut().enumerate() {
                if !bucket.is_empty() {
                    continue;
                }
                let (lo, hi) = me.id.bucket_bounds(j);
                let start = sorted.partition_point(|(id, _)| *id < lo);
                let end = sorted.partition_point(|(id, _)| *id <= hi);
                let len = end - start;
                if len == 0 {
                    continue;
                }
                for i in index::sample(&mut rng, len, len.min(k)) {
                    let (id, w) = sorted[start + i];
                    if let Some(coords) = snapshot(emb, w) {
                        bucket.push(TableEntry { node: w, id, coords });
                        added += 1;
                    }
                }
            }
        }
        added
    }
}

/// Messages and route length of the delivered hops along `path`.
fn path_cost(trace: &[OverlayHop], path: &[NodeId]) -> (usize, usize) {
    path.windows(2)
        .filter_map(|w| {
            trace
                .iter()
                .rev()
                .find(|h| h.from == w[0] && h.to == w[1] && h.delivered && !h.backtrack)
        })
        .fold((0, 0), |(m, l), h| {
            (m + h.underlay_hops, l + h.route_length.unwrap_or(0))
        })
}

/// Reactive repair after `departed` left: it disappears from the overlay,
/// and buckets that are already empty get refilled. Stale entries are
/// evicted or refreshed later through [`Overlay::apply_feedback`].
pub fn overlay_stabilize(state: &mut Overlay, departed: NodeId, emb: &Embedding, live: &LiveMask, seed: u64) -> usize {
    state.remove_node(departed);
    state.refill_empty_buckets(emb, live, seed)
}

/// [`Overlay::lookup`] as a free function.
#[allow(clippy::too_many_arguments)]
pub fn dht_lookup<R: Rng>(
    state: &Overlay,
    g: &Graph,
    emb: &Embedding,
    key: &KadId,
    origin: NodeId,
    routing: &RoutingConfig,
    live: &LiveMask,
    rng: &mut R,
) -> Result<LookupOutcome, OverlayError> {
    state.lookup(g, emb, key, origin, routing, live, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{assign_coordinates, EmbeddingConfig};
    use crate::graph::{generate_synthetic, SyntheticModel};
    use crate::trees::{construct_trees, Strategy, TreeConfig, TreeSet};

    fn world(n: usize, gamma: usize, seed: u64) -> (Graph, TreeSet, Embedding) {
        let g = generate_synthetic(SyntheticModel::PreferentialAttachment { m: 3 }, n, seed).unwrap();
        let cfg = TreeConfig {
            gamma,
            accept_prob: 0.5,
            strategy: Strategy::DivDep,
            rng_seed: seed,
        };
        let ts = construct_trees(&g, &cfg, &vec![0; gamma]).unwrap();
        let emb = assign_coordinates(&ts, &EmbeddingConfig::default(), seed).unwrap();
        (g, ts, emb)
    }

    #[test]
    fn id_arithmetic() {
        let a = KadId([0; 20]);
        let mut b = a;
        b.0[0] = 0b0010_0000;
        assert_eq!(a.cpl(&b), 2);
        assert_eq!(a.cpl(&a), ID_BITS);
        assert_eq!(a.xor(&b), b);
        let (lo, hi) = a.bucket_bounds(2);
        assert_eq!(lo, b);
        assert_eq!(hi.0[0], 0b0011_1111);
        assert!(hi.0[1..].iter().all(|&x| x == 0xff));
    }

    #[test]
    fn two_nodes_know_each_other() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let ts = construct_trees(&g, &TreeConfig::default(), &[0]).unwrap();
        let emb = assign_coordinates(&ts, &EmbeddingConfig::default(), 1).unwrap();
        let o = build_overlay(&emb, &LiveMask::all_live(2), &DhtConfig::default(), 3).unwrap();
        assert_eq!(
            o.node(0).unwrap().entries().map(|e| e.node).collect::<Vec<_>>(),
            vec![1]
        );
        assert_eq!(
            o.node(1).unwrap().entries().map(|e| e.node).collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn buckets_respect_their_prefix() {
        let (_, _, emb) = world(300, 2, 1);
        let cfg = DhtConfig {
            bucket_size: 4,
            ..Default::default()
        };
        let o = build_overlay(&emb, &LiveMask::all_live(300), &cfg, 2).unwrap();
        for v in o.members() {
            let me = o.node(v).unwrap();
            for (j, b) in me.buckets.iter().enumerate() {
                assert!(b.len() <= 4);
                for e in b {
                    assert_eq!(me.id.cpl(&e.id), j);
                    assert_eq!(o.id(e.node), Some(e.id));
                }
            }
        }
    }

    #[test]
    fn filled_buckets_grow_like_log_n() {
        let mean = |n: usize| {
            let (_, _, emb) = world(n, 1, 5);
            let o = build_overlay(&emb, &LiveMask::all_live(n), &DhtConfig::default(), 5).unwrap();
            o.members().map(|v| o.node(v).unwrap().filled_buckets()).sum::<usize>() as f64 / n as f64
        };
        let (a, b) = (mean(128), mean(1024));
        assert!((a - 7.0).abs() < 1.5, "{a}");
        assert!((b - 10.0).abs() < 1.5, "{b}");
        assert!((b - a - 3.0).abs() < 0.6, "{a} {b}");
    }

    #[test]
    fn lookup_for_own_id_is_free() {
        let (g, _, emb) = world(100, 1, 3);
        let live = LiveMask::all_live(100);
        let o = build_overlay(&emb, &live, &DhtConfig::default(), 3).unwrap();
        let key = o.id(17).unwrap();
        let out = o
            .lookup(
                &g,
                &emb,
                &key,
                17,
                &RoutingConfig::default(),
                &live,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
        assert!(out.success);
        assert_eq!(out.underlay_hops, 0);
        assert_eq!(out.path, vec![17]);
    }

    #[test]
    fn lookups_find_the_closest_node_with_decreasing_distance() {
        let (g, _, emb) = world(250, 2, 4);
        let live = LiveMask::all_live(250);
        for alpha in [1, 3] {
            let cfg = DhtConfig {
                alpha,
                ..Default::default()
            };
            let o = build_overlay(&emb, &live, &cfg, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(alpha as u64);
            for _ in 0..100 {
                let key = KadId::random(&mut rng);
                let origin = rng.gen_range(0..250);
                let out = o
                    .lookup(&g, &emb, &key, origin, &RoutingConfig::default(), &live, &mut rng)
                    .unwrap();
                assert!(out.success);
                assert_eq!(out.path.last().copied(), out.closest);
                assert_eq!(out.closest, o.closest_live(&key, &live));
                for w in out.path.windows(2) {
                    assert!(o.id(w[1]).unwrap().xor(&key) < o.id(w[0]).unwrap().xor(&key));
                }
                let traced: usize = out.trace.iter().map(|h| h.underlay_hops).sum();
                assert_eq!(traced, out.underlay_hops);
                assert!(out.path_hops <= out.underlay_hops);
                assert!(out.path_length <= out.path_hops);
                assert!(out.path_length >= out.path.len() - 1);
            }
        }
    }

    #[test]
    fn departed_entries_are_evicted_on_contact() {
        let (g, _, emb) = world(120, 1, 6);
        let all = LiveMask::all_live(120);
        let mut o = build_overlay(&emb, &all, &DhtConfig::default(), 6).unwrap();
        // Find a node that some table lists, and let it leave.
        let gone = o.node(0).unwrap().entries().next().unwrap().node;
        let mut flags = vec![true; 120];
        flags[gone] = false;
        let live = LiveMask::from_flags(flags);
        overlay_stabilize(&mut o, gone, &emb, &live, 1);
        assert!(o.node(0).unwrap().entries().any(|e| e.node == gone));
        // Looking up the departed node's id makes node 0 contact it.
        let key = o.node(0).unwrap().entries().find(|e| e.node == gone).unwrap().id;
        let out = o
            .lookup(
                &g,
                &emb,
                &key,
                0,
                &RoutingConfig::default(),
                &live,
                &mut ChaCha8Rng::seed_from_u64(1),
            )
            .unwrap();
        assert!(out.trace.iter().any(|h| h.from == 0 && h.to == gone && !h.delivered));
        let (evicted, _) = o.apply_feedback(&out, &emb);
        assert!(evicted >= 1);
        assert!(o.node(0).unwrap().entries().all(|e| e.node != gone));
    }

    #[test]
    fn moved_peers_are_refreshed_on_contact() {
        let (_, ts, emb) = world(80, 1, 7);
        let live = LiveMask::all_live(80);
        let mut o = build_overlay(&emb, &live, &DhtConfig::default(), 7).unwrap();
        let peer = o.node(5).unwrap().entries().next().unwrap().node;
        // Re-embed with another seed: everybody but the root moves.
        let moved = assign_coordinates(&ts, &EmbeddingConfig::default(), 99).unwrap();
        assert_ne!(moved.coordinate(0, peer), emb.coordinate(0, peer));
        let out = LookupOutcome {
            success: true,
            closest: Some(peer),
            underlay_hops: 1,
            path: vec![5, peer],
            path_hops: 1,
            path_length: 1,
            trace: vec![OverlayHop {
                from: 5,
                to: peer,
                underlay_hops: 1,
                route_length: Some(1),
                delivered: true,
                backtrack: false,
            }],
        };
        let (_, refreshed) = o.apply_feedback(&out, &moved);
        assert_eq!(refreshed, 1);
        let e = o.node(5).unwrap().entries().find(|e| e.node == peer).unwrap();
        assert_eq!(Some(&e.coords[0]), moved.coordinate(0, peer));
    }

    #[test]
    fn lookups_survive_churn() {
        let (g, mut ts, mut emb) = world(300, 2, 8);
        let mut o = build_overlay(&emb, &LiveMask::all_live(300), &DhtConfig::default(), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut flags = vec![true; 300];
        let mut departed = Vec::new();
        while departed.len() < 30 {
            let v = rng.gen_range(0..300);
            if !flags[v] || ts.is_root(v) {
                continue;
            }
            ts.handle_departure(&g, v, &mut rng).unwrap();
            flags[v] = false;
            departed.push(v);
        }
        emb.refresh(&ts, 9).unwrap();
        let intact: Vec<bool> = (0..300)
            .map(|v| flags[v] && (0..2).all(|i| emb.coordinate(i, v).is_some()))
            .collect();
        let live = LiveMask::from_flags(intact.clone());
        for &v in &departed {
            overlay_stabilize(&mut o, v, &emb, &live, v as u64);
        }
        let origins: Vec<NodeId> = (0..300).filter(|&v| intact[v]).collect();
        let mut round = |o: &mut Overlay, feedback: bool| {
            let mut ok = 0;
            for _ in 0..100 {
                let key = KadId::random(&mut rng);
                let origin = origins[rng.gen_range(0..origins.len())];
                let out = o
                    .lookup(&g, &emb, &key, origin, &RoutingConfig::default(), &live, &mut rng)
                    .unwrap();
                ok += usize::from(out.success);
                if feedback {
                    o.apply_feedback(&out, &emb);
                }
            }
            ok
        };
        for seed in 0..2 {
            round(&mut o, true);
            o.refill_empty_buckets(&emb, &live, seed);
        }
        let ok = round(&mut o, false);
        assert!(ok >= 95, "{ok} of 100 lookups succeeded");
    }
}
