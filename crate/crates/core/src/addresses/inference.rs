use std::collections::BTreeSet;

use super::{cascade_cpl, diversity_rp, AddressError, ReturnAddress};
use crate::embedding::{Coordinate, EmbeddingConfig, Metric};
use crate::graph::NodeId;

/// Which of the three situations an observer of a set of addresses is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceCase {
    /// The closest neighbors differ between trees.
    ClosestNeighborsDiffer,
    /// The closest neighbor is not a prefix of the destination in some tree.
    PrefixMismatch,
    /// One neighbor is consistent with every address.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReceiverCandidate {
    Neighbor(NodeId),
    /// Some node below the given neighbor in every tree.
    DescendantOf(NodeId),
    /// A node that is not adjacent to the observer.
    NonNeighbor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverAnalysis {
    pub case: InferenceCase,
    pub candidates: BTreeSet<ReceiverCandidate>,
}

/// What an observer can conclude about the receiver of `addrs` (one
/// address per tree, index = tree) from the coordinates of its neighbors.
/// `neighbors` lists each neighbor with its coordinate in every tree.
pub fn candidate_receiver_set(
    addrs: &[ReturnAddress],
    neighbors: &[(NodeId, Vec<Coordinate>)],
    metric: Metric,
    cfg: &EmbeddingConfig,
) -> Result<ReceiverAnalysis, AddressError> {
    if let Some((_, coords)) = neighbors.iter().find(|(_, c)| c.len() != addrs.len()) {
        return Err(AddressError::AddressCount {
            expected: coords.len(),
            got: addrs.len(),
        });
    }
    let non_neighbor = |case| ReceiverAnalysis {
        case,
        candidates: BTreeSet::from([ReceiverCandidate::NonNeighbor]),
    };
    // Neighbors that are closest to the destination in every tree.
    let mut common: Option<BTreeSet<NodeId>> = None;
    for (i, addr) in addrs.iter().enumerate() {
        let best = neighbors
            .iter()
            .map(|(_, c)| diversity_rp(addr, c[i].elements(), metric, cfg))
            .min();
        let Some(best) = best else {
            return Ok(non_neighbor(InferenceCase::ClosestNeighborsDiffer));
        };
        let closest: BTreeSet<NodeId> = neighbors
            .iter()
            .filter(|(_, c)| diversity_rp(addr, c[i].elements(), metric, cfg) == best)
            .map(|&(v, _)| v)
            .collect();
        common = Some(match common {
            None => closest,
            Some(prev) => prev.intersection(&closest).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Ok(non_neighbor(InferenceCase::ClosestNeighborsDiffer));
    }
    let consistent: Vec<NodeId> = common
        .into_iter()
        .filter(|v| {
            let coords = &neighbors.iter().find(|(w, _)| w == v).expect("listed neighbor").1;
            addrs
                .iter()
                .zip(coords)
                .all(|(addr, c)| cascade_cpl(&addr.digests, c.elements(), addr.routing_seed, cfg) == c.len())
        })
        .collect();
    if consistent.is_empty() {
        return Ok(non_neighbor(InferenceCase::PrefixMismatch));
    }
    let candidates = consistent
        .into_iter()
        .flat_map(|v| [ReceiverCandidate::Neighbor(v), ReceiverCandidate::DescendantOf(v)])
        .collect();
    Ok(ReceiverAnalysis {
        case: InferenceCase::Consistent,
        candidates,
    })
}
