//! Scenario orchestration: repeated runs, metric aggregation and CSV output.

mod output;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::addresses::crypto::derive_key;
use crate::addresses::{
    add_ppp_layer, distribute_subtree_keys, generate_mac_keys, issue_address, AddressError, AddressKeys, PppAddress,
    ReturnAddress, SubtreeKeys, XorPadCipher,
};
use crate::adversary::{
    apply_att_rand, att_root_roots, attach_attacker, inject_failures, AdversaryConfig, AdversaryError, AdversaryMode,
    LiveMask,
};
use crate::embedding::{assign_coordinates, Embedding, EmbeddingConfig, EmbeddingError};
use crate::graph::{generate_synthetic, load_edge_list, Graph, GraphError, NodeId, SyntheticModel};
use crate::overlay::{build_overlay, DhtConfig, KadId, OverlayError};
use crate::routing::{route_multi, Addressing, RoutingConfig, RoutingError, Target};
use crate::trees::{construct_trees, elect_root_among, RootPolicy, TreeConfig, TreeError, TreeSet};

pub use output::{read_csv, write_csv, write_csv_to, CSV_HEADER};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Address(#[from] AddressError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Where the social graph comes from. File graphs are reduced to their
/// giant component.
#[derive(Debug, Clone)]
pub enum GraphSource {
    EdgeList(PathBuf),
    Synthetic { model: SyntheticModel, n: usize },
    Fixed(Arc<Graph>),
}

impl GraphSource {
    pub fn load(&self, seed: u64) -> Result<Graph, GraphError> {
        match self {
            Self::EdgeList(p) => Ok(load_edge_list(p)?.giant_component()),
            Self::Synthetic { model, n } => Ok(generate_synthetic(*model, *n, seed)?.giant_component()),
            Self::Fixed(g) => Ok(g.as_ref().clone()),
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EdgeList(p) => write!(f, "{}", p.display()),
            Self::Synthetic {
                model: SyntheticModel::PreferentialAttachment { m },
                n,
            } => write!(f, "pa:{n}:{m}"),
            Self::Synthetic {
                model: SyntheticModel::ErdosRenyi { p },
                n,
            } => write!(f, "er:{n}:{p}"),
            Self::Fixed(g) => write!(f, "fixed:{}", g.node_count()),
        }
    }
}

/// The four reported quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricName {
    RoutingLength,
    SuccessRatio,
    StabilizationCost,
    DhtUnderlayHops,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [
        Self::RoutingLength,
        Self::SuccessRatio,
        Self::StabilizationCost,
        Self::DhtUnderlayHops,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RoutingLength => "routing_length",
            Self::SuccessRatio => "success_ratio",
            Self::StabilizationCost => "stabilization_cost",
            Self::DhtUnderlayHops => "dht_underlay_hops",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scenario: String,
    pub metric: MetricName,
    pub mean: f64,
    /// Half-width of the 95% confidence interval over per-run means.
    pub ci95: f64,
    pub runs: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub graph: GraphSource,
    pub tree: TreeConfig,
    pub root_policy: RootPolicy,
    pub embedding: EmbeddingConfig,
    pub routing: RoutingConfig,
    pub dht: Option<DhtConfig>,
    pub adversary: AdversaryConfig,
    pub pairs_per_run: usize,
    /// Departures sampled per run for the stabilization cost; 0 skips it.
    pub stabilization_samples: usize,
    /// Lookups per run when `dht` is set.
    pub lookups_per_run: usize,
    pub runs: usize,
    pub master_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            label: "default".into(),
            graph: GraphSource::Synthetic {
                model: SyntheticModel::PreferentialAttachment { m: 3 },
                n: 5000,
            },
            tree: TreeConfig::default(),
            root_policy: RootPolicy::default(),
            embedding: EmbeddingConfig::default(),
            routing: RoutingConfig::default(),
            dht: None,
            adversary: AdversaryConfig::default(),
            pairs_per_run: 10_000,
            stabilization_samples: 0,
            lookups_per_run: 1000,
            runs: 20,
            master_seed: 1,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Validation(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.pairs_per_run == 0 {
            return bad("pairs_per_run must be at least 1".into());
        }
        if self.routing.tau > self.tree.gamma {
            return bad(format!(
                "tau = {} exceeds gamma = {}",
                self.routing.tau, self.tree.gamma
            ));
        }
        self.tree.validate()?;
        self.embedding.validate()?;
        self.routing.validate(self.tree.gamma)?;
        self.adversary.validate()?;
        if let Some(d) = &self.dht {
            d.validate()?;
        }
        if self.adversary.mode == AdversaryMode::AttRoot && matches!(self.root_policy, RootPolicy::Fixed(_)) {
            return bad("a fixed root cannot be combined with the root attack".into());
        }
        Ok(())
    }
}

/// Seed for one named purpose within a run.
pub fn derive_seed(master: u64, purpose: &[u8], parts: &[u64]) -> u64 {
    let k = derive_key(purpose, &[&[master][..], parts].concat());
    u64::from_le_bytes(k[..8].try_into().expect("8 bytes"))
}

/// Per-run means; `None` where a metric is not defined for the run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub routing_length: Option<f64>,
    pub success_ratio: Option<f64>,
    pub stabilization_cost: Option<f64>,
    pub dht_underlay_hops: Option<f64>,
}

impl RunMetrics {
    fn get(&self, m: MetricName) -> Option<f64> {
        match m {
            MetricName::RoutingLength => self.routing_length,
            MetricName::SuccessRatio => self.success_ratio,
            MetricName::StabilizationCost => self.stabilization_cost,
            MetricName::DhtUnderlayHops => self.dht_underlay_hops,
        }
    }
}

/// Everything one run builds before measuring.
pub struct World {
    pub graph: Graph,
    pub trees: TreeSet,
    pub embedding: Embedding,
    pub live: LiveMask,
    pub attacker: Option<NodeId>,
}

/// Builds graph additions, trees, embedding and liveness for one run.
pub fn build_world(s: &Scenario, base: &Graph, run_seed: u64) -> Result<World, ExperimentError> {
    let adv = &s.adversary;
    let (graph, attacker) = if adv.mode.is_attack() {
        let (g, a) = attach_attacker(
            base,
            adv.attacker_edges,
            derive_seed(run_seed, b"attacker", &[adv.seed]),
        )?;
        (g, Some(a))
    } else {
        (base.clone(), None)
    };
    let gamma = s.tree.gamma;
    let roots = match (adv.mode, attacker) {
        (AdversaryMode::AttRoot, Some(a)) => att_root_roots(a, gamma),
        _ => (0..gamma)
            .map(|i| {
                let seed = derive_seed(run_seed, b"root", &[i as u64]);
                elect_root_among(&graph, s.root_policy, seed, |v| Some(v) != attacker)
            })
            .collect::<Result<_, _>>()?,
    };
    let tree_cfg = TreeConfig {
        rng_seed: derive_seed(run_seed, b"trees", &[s.tree.rng_seed]),
        ..s.tree
    };
    let trees = construct_trees(&graph, &tree_cfg, &roots)?;
    let mut embedding = assign_coordinates(&trees, &s.embedding, derive_seed(run_seed, b"coords", &[]))?;
    let n = graph.node_count();
    let live = match (adv.mode, attacker) {
        (AdversaryMode::RandomFailures(f), _) => {
            inject_failures(&graph, f, derive_seed(run_seed, b"failures", &[adv.seed]))?
        }
        (AdversaryMode::AttRand, Some(a)) => {
            apply_att_rand(
                &trees,
                &mut embedding,
                a,
                derive_seed(run_seed, b"att-rand", &[adv.seed]),
            );
            LiveMask::with_attacker(n, a)
        }
        (_, Some(a)) => LiveMask::with_attacker(n, a),
        _ => LiveMask::all_live(n),
    };
    Ok(World {
        graph,
        trees,
        embedding,
        live,
        attacker,
    })
}

/// Uniform source-destination pairs among honest live nodes of one
/// component, drawn with replacement.
pub struct PairSampler {
    eligible: Vec<NodeId>,
    component: Vec<Option<usize>>,
}

impl PairSampler {
    pub fn new(g: &Graph, live: &LiveMask) -> Self {
        let honest = live.honest_flags();
        let component = g.components_masked(&honest);
        let eligible = (0..g.node_count()).filter(|&v| honest[v]).collect();
        Self { eligible, component }
    }

    /// A pair of distinct nodes in the same component; `None` if no such
    /// pair turned up in many tries.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<(NodeId, NodeId)> {
        if self.eligible.len() < 2 {
            return None;
        }
        for _ in 0..10_000 {
            let s = self.eligible[rng.gen_range(0..self.eligible.len())];
            let d = self.eligible[rng.gen_range(0..self.eligible.len())];
            if s != d && self.component[s] == self.component[d] {
                return Some((s, d));
            }
        }
        None
    }
}

/// Keys a run needs for encrypted addresses.
struct PppKeys {
    mac: Vec<crate::addresses::MacKey>,
    subtree: Vec<Vec<Option<SubtreeKeys>>>,
}

enum Issued {
    None,
    Rp(Vec<ReturnAddress>),
    Ppp(Vec<PppAddress>),
}

/// Result of routing one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairResult {
    pub success: bool,
    pub hops: usize,
    pub route_length: Option<usize>,
}

/// Routes from `src` to `dst` as configured, issuing addresses as needed.
fn route_pair<R: Rng>(
    w: &World,
    cfg: &RoutingConfig,
    ppp: Option<&PppKeys>,
    src: NodeId,
    dst: NodeId,
    rng: &mut R,
) -> Result<PairResult, ExperimentError> {
    let emb = &w.embedding;
    let gamma = emb.gamma();
    let mac = |v: NodeId| crate::addresses::MacKey(derive_key(b"mac", &[v as u64]));
    // Drawn in every mode so that the routing decisions below see the
    // same random stream whatever the addressing.
    let mut addr_rng = ChaCha8Rng::seed_from_u64(rng.gen());
    let issued = match cfg.addressing {
        Addressing::Coordinate => Issued::None,
        Addressing::Rp => Issued::Rp(
            (0..gamma)
                .map(|i| issue_address(&w.trees, emb, i, dst, &mac(dst), &mut addr_rng))
                .collect::<Result<_, _>>()?,
        ),
        Addressing::Ppp => {
            let keys = ppp.expect("keys prepared for encrypted addressing");
            let mut out = Vec::with_capacity(gamma);
            for i in 0..gamma {
                let addr = issue_address(&w.trees, emb, i, dst, &keys.mac[dst], &mut addr_rng)?;
                let level = emb.coordinate(i, dst).map_or(0, |c| c.len());
                let ak = AddressKeys {
                    mac_key: keys.mac[dst],
                    subtree: keys.subtree[i][dst].clone().expect("member"),
                };
                out.push(add_ppp_layer(&addr, &ak, level, &XorPadCipher, emb.config())?);
            }
            Issued::Ppp(out)
        }
    };
    let targets: Vec<Target<'_>> = match &issued {
        Issued::None => (0..gamma)
            .map(|i| Target::Coordinate(emb.coordinate(i, dst).expect("destination embedded")))
            .collect(),
        Issued::Rp(a) => a.iter().map(|address| Target::Rp { address, issuer: dst }).collect(),
        Issued::Ppp(a) => a
            .iter()
            .enumerate()
            .map(|(i, address)| Target::Ppp {
                address,
                issuer: dst,
                keys: &ppp.expect("keys").subtree[i],
            })
            .collect(),
    };
    let m = route_multi(&w.graph, emb, src, &targets, cfg, &w.live, rng)?;
    Ok(PairResult {
        success: m.success,
        hops: m.hops,
        route_length: m.best_route_length,
    })
}

/// Routes `pairs` sampled pairs in parallel; pair `k` uses its own seed.
pub fn route_pairs(
    w: &World,
    cfg: &RoutingConfig,
    pairs: usize,
    seed: u64,
) -> Result<Vec<(NodeId, NodeId, PairResult)>, ExperimentError> {
    let sampler = PairSampler::new(&w.graph, &w.live);
    let ppp = (cfg.addressing == Addressing::Ppp).then(|| PppKeys {
        mac: generate_mac_keys(w.graph.node_count(), seed),
        subtree: (0..w.trees.gamma())
            .map(|i| distribute_subtree_keys(&w.trees, i, seed))
            .collect(),
    });
    let results: Vec<Option<(NodeId, NodeId, PairResult)>> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b"pair", &[k as u64]));
            let Some((s, d)) = sampler.sample(&mut rng) else {
                return Ok(None);
            };
            Ok(Some((s, d, route_pair(w, cfg, ppp.as_ref(), s, d, &mut rng)?)))
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// Mean number of coordinates reassigned when a uniformly chosen node that
/// roots no tree departs, estimated from `samples` departures. Each
/// departure runs on a fresh copy of `ts`.
pub fn stabilization_metric(g: &Graph, ts: &TreeSet, samples: usize, seed: u64) -> Result<f64, ExperimentError> {
    if samples == 0 {
        return Err(ExperimentError::Validation("need at least one sample".into()));
    }
    let candidates: Vec<NodeId> = (0..ts.node_count())
        .filter(|&v| !ts.is_root(v) && ts.trees().iter().all(|t| t.contains(v)))
        .collect();
    if candidates.is_empty() {
        return Err(ExperimentError::Validation("no node besides the roots".into()));
    }
    let total: usize = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b"departure", &[k as u64]));
            let v = candidates[rng.gen_range(0..candidates.len())];
            let mut copy = ts.clone();
            copy.handle_departure(g, v, &mut rng).map(|d| d.reassigned)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(total as f64 / samples as f64)
}

/// Exact mean of the reassignment count over all nodes that root no tree.
pub fn stabilization_exact(ts: &TreeSet) -> f64 {
    let candidates: Vec<NodeId> = (0..ts.node_count())
        .filter(|&v| !ts.is_root(v) && ts.trees().iter().all(|t| t.contains(v)))
        .collect();
    let total: usize = candidates
        .iter()
        .map(|&v| ts.trees().iter().map(|t| t.subtree_size(v) - 1).sum::<usize>())
        .sum();
    total as f64 / candidates.len().max(1) as f64
}

/// Performs one run of `s` on `base`.
pub fn run_once(s: &Scenario, base: &Graph, run: usize) -> Result<RunMetrics, ExperimentError> {
    let run_seed = derive_seed(s.master_seed, b"run", &[run as u64]);
    let w = build_world(s, base, run_seed)?;
    let mut m = RunMetrics::default();
    let results = route_pairs(&w, &s.routing, s.pairs_per_run, derive_seed(run_seed, b"pairs", &[]))?;
    if !results.is_empty() {
        let ok: Vec<usize> = results.iter().filter_map(|(_, _, r)| r.route_length).collect();
        m.success_ratio = Some(ok.len() as f64 / results.len() as f64);
        if !ok.is_empty() {
            m.routing_length = Some(ok.iter().sum::<usize>() as f64 / ok.len() as f64);
        }
    }
    if s.stabilization_samples > 0 {
        m.stabilization_cost = Some(stabilization_metric(
            &w.graph,
            &w.trees,
            s.stabilization_samples,
            derive_seed(run_seed, b"stabilization", &[]),
        )?);
    }
    if let Some(dht) = &s.dht {
        m.dht_underlay_hops = dht_metric(&w, dht, &s.routing, s.lookups_per_run, run_seed)?;
    }
    debug!("{} run {run}: {m:?}", s.label);
    Ok(m)
}

/// Mean underlay length of the overlay path over successful lookups.
fn dht_metric(
    w: &World,
    dht: &DhtConfig,
    routing: &RoutingConfig,
    lookups: usize,
    run_seed: u64,
) -> Result<Option<f64>, ExperimentError> {
    let overlay = build_overlay(&w.embedding, &w.live, dht, derive_seed(run_seed, b"overlay", &[]))?;
    let origins: Vec<NodeId> = overlay.members().filter(|&v| w.live.is_honest(v)).collect();
    if origins.is_empty() {
        return Ok(None);
    }
    let seed = derive_seed(run_seed, b"lookups", &[]);
    let lengths: Vec<Option<usize>> = (0..lookups)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b"lookup", &[k as u64]));
            let key = KadId::random(&mut rng);
            let origin = origins[rng.gen_range(0..origins.len())];
            let out = overlay.lookup(&w.graph, &w.embedding, &key, origin, routing, &w.live, &mut rng)?;
            Ok(out.success.then_some(out.path_length))
        })
        .collect::<Result<_, ExperimentError>>()?;
    let ok: Vec<usize> = lengths.into_iter().flatten().collect();
    Ok((!ok.is_empty()).then(|| ok.iter().sum::<usize>() as f64 / ok.len() as f64))
}

/// Mean and 95% half-width of `values` from the Student t quantile.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, t * (var / k as f64).sqrt())
}

/// Aggregates per-run metrics into one row per metric that any run
/// produced.
pub fn aggregate(label: &str, runs: &[RunMetrics]) -> Vec<MetricRow> {
    MetricName::ALL
        .into_iter()
        .filter_map(|metric| {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.get(metric)).collect();
            if values.is_empty() {
                return None;
            }
            let (mean, ci95) = mean_ci95(&values);
            Some(MetricRow {
                scenario: label.to_string(),
                metric,
                mean,
                ci95,
                runs: values.len(),
            })
        })
        .collect()
}

/// Runs every repetition of `s` in parallel and aggregates the results.
pub fn run_scenario(s: &Scenario) -> Result<Vec<MetricRow>, ExperimentError> {
    s.validate()?;
    let base = s.graph.load(derive_seed(s.master_seed, b"graph", &[]))?;
    info!(
        "{}: {} nodes, {} edges, {} runs",
        s.label,
        base.node_count(),
        base.edge_count(),
        s.runs
    );
    run_scenario_on(s, &base)
}

/// [`run_scenario`] on an already loaded graph.
pub fn run_scenario_on(s: &Scenario, base: &Graph) -> Result<Vec<MetricRow>, ExperimentError> {
    s.validate()?;
    let runs: Vec<RunMetrics> = (0..s.runs)
        .into_par_iter()
        .map(|r| run_once(s, base, r))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(&s.label, &runs))
}

/// One scenario per `(gamma, strategy)` combination, routing in all trees
/// as in the figures; rows come out in sweep order.
pub fn sweep(
    base: &Scenario,
    gammas: &[usize],
    strategies: &[crate::trees::Strategy],
) -> Result<Vec<MetricRow>, ExperimentError> {
    let graph = base.graph.load(derive_seed(base.master_seed, b"graph", &[]))?;
    let mut rows = Vec::new();
    for &gamma in gammas {
        for &strategy in strategies {
            let s = Scenario {
                label: format!("{}/gamma={gamma}/{strategy}", base.label),
                tree: TreeConfig {
                    gamma,
                    strategy,
                    ..base.tree
                },
                routing: RoutingConfig {
                    tau: gamma,
                    ..base.routing
                },
                ..base.clone()
            };
            info!("sweep: {}", s.label);
            rows.extend(run_scenario_on(&s, &graph)?);
        }
    }
    Ok(rows)
}
