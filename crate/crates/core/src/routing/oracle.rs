use crate::adversary::LiveMask;
use crate::embedding::{distance, Coordinate, Embedding, Metric};
use crate::graph::{Graph, NodeId};

use super::RoutingError;

/// Largest instance the exhaustive check accepts.
pub const ORACLE_MAX_NODES: usize = 200;

/// Whether some path of honest live nodes leads from `src` to the node
/// holding `dst` in `tree` with strictly decreasing distance at every step.
pub fn greedy_path_exists(
    g: &Graph,
    emb: &Embedding,
    tree: usize,
    src: NodeId,
    dst: &Coordinate,
    metric: Metric,
    live: &LiveMask,
) -> Result<bool, RoutingError> {
    let n = g.node_count();
    if n > ORACLE_MAX_NODES {
        return Err(RoutingError::TooLarge {
            n,
            limit: ORACLE_MAX_NODES,
        });
    }
    let cfg = emb.config();
    let dist: Vec<_> = (0..n)
        .map(|v| {
            emb.coordinate(tree, v)
                .filter(|_| live.is_honest(v))
                .map(|c| distance(metric, c.elements(), dst.elements(), cfg))
        })
        .collect();
    if dist[src].is_none() {
        return Ok(false);
    }
    // Strict decrease makes the reachable graph acyclic, so a plain
    // depth-first search with a visited set decides reachability.
    let mut seen = vec![false; n];
    let mut stack = vec![src];
    seen[src] = true;
    while let Some(u) = stack.pop() {
        let du = dist[u].expect("only usable nodes are pushed");
        if du.is_zero() && emb.coordinate(tree, u) == Some(dst) {
            return Ok(true);
        }
        for &v in g.neighbors(u) {
            if let Some(dv) = dist[v] {
                if dv < du && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    Ok(false)
}
