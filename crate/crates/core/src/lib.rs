//! Simulation of privacy-preserving greedy routing in friend-to-friend
//! overlays: parallel spanning trees, prefix embeddings, anonymous return
//! addresses, backtracking routing and a Kademlia-style overlay.

pub mod addresses;
pub mod adversary;
pub mod embedding;
pub mod experiments;
pub mod graph;
pub mod overlay;
pub mod routing;
pub mod trees;

pub use addresses::{AddressError, PppAddress, ReturnAddress};
pub use adversary::{AdversaryConfig, AdversaryError, AdversaryMode, LiveMask};
pub use embedding::{assign_coordinates, Coordinate, Distance, Embedding, EmbeddingConfig, Metric};
pub use experiments::{
    run_scenario, write_csv, write_csv_to, ExperimentError, GraphSource, MetricName, MetricRow, Scenario,
};
pub use graph::{Graph, GraphError, GraphStats, NodeId, SyntheticModel};
pub use overlay::{build_overlay, dht_lookup, overlay_stabilize, DhtConfig, DhtNode, KadId, LookupOutcome, Overlay};
pub use routing::{Addressing, EmbeddingChoice, RouteOutcome, RoutingConfig, RoutingError, Target};
pub use trees::{RootPolicy, Strategy, TreeConfig, TreeError, TreeSet};
