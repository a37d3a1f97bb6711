//! Scenario settings from flags and an optional TOML file. Flags win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use f2fsim_core::{
    Addressing, AdversaryConfig, AdversaryMode, DhtConfig, GraphSource, Metric, RoutingConfig, Scenario, Strategy,
    SyntheticModel, TreeConfig,
};
use serde::Deserialize;

/// Every field is optional so that flags and file can be layered.
#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Edge-list path, or `pa:N:M` / `er:N:P` for a synthetic graph.
    #[arg(long)]
    pub graph: Option<String>,
    /// Number of spanning trees.
    #[arg(long)]
    pub gamma: Option<usize>,
    /// Acceptance probability for non-preferred invitations.
    #[arg(long)]
    pub q: Option<f64>,
    /// BFS, DIV-RAND or DIV-DEP.
    #[arg(long)]
    pub strategy: Option<String>,
    /// TD or CPL.
    #[arg(long)]
    pub metric: Option<String>,
    /// Trees used per request; defaults to gamma.
    #[arg(long)]
    pub tau: Option<usize>,
    /// coordinate, rp or ppp.
    #[arg(long)]
    pub addressing: Option<String>,
    /// Disable backtracking.
    #[arg(long)]
    #[serde(default)]
    pub greedy: bool,
    /// none, failures, att-rand or att-root.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub attacker_edges: Option<usize>,
    /// Fraction of failed nodes; implies `--mode failures`.
    #[arg(long)]
    pub failure_fraction: Option<f64>,
    /// Source-destination pairs per run.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Departures sampled per run for the stabilization cost; 0 skips it.
    #[arg(long)]
    pub departures: Option<usize>,
    /// Lookups per run on a DHT overlay; unset means no overlay.
    #[arg(long)]
    pub lookups: Option<usize>,
    /// Bucket size of the overlay.
    #[arg(long)]
    pub bucket_size: Option<usize>,
    /// Parallel lookup walks.
    #[arg(long)]
    pub alpha: Option<usize>,
    #[arg(long)]
    pub label: Option<String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `self` override those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(base.$f),)* greedy: self.greedy || base.greedy } };
        }
        pick!(
            graph,
            gamma,
            q,
            strategy,
            metric,
            tau,
            addressing,
            mode,
            attacker_edges,
            failure_fraction,
            pairs,
            runs,
            seed,
            departures,
            lookups,
            bucket_size,
            alpha,
            label
        )
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let d = Scenario::default();
        let gamma = self.gamma.unwrap_or(d.tree.gamma);
        let tree = TreeConfig {
            gamma,
            accept_prob: self.q.unwrap_or(d.tree.accept_prob),
            strategy: parse_opt(&self.strategy)?.unwrap_or(d.tree.strategy),
            ..d.tree
        };
        let routing = RoutingConfig {
            tau: self.tau.unwrap_or(gamma),
            metric: parse_opt::<Metric>(&self.metric)?.unwrap_or(d.routing.metric),
            addressing: parse_opt::<Addressing>(&self.addressing)?.unwrap_or(d.routing.addressing),
            backtracking: !self.greedy,
            ..d.routing
        };
        let mode = match (self.mode.as_deref(), self.failure_fraction) {
            (None | Some("failures"), Some(f)) => AdversaryMode::RandomFailures(f),
            (Some("failures"), None) => bail!("--mode failures needs --failure-fraction"),
            (None | Some("none"), None) => AdversaryMode::None,
            (Some("att-rand"), None) => AdversaryMode::AttRand,
            (Some("att-root"), None) => AdversaryMode::AttRoot,
            (Some(m @ ("none" | "att-rand" | "att-root")), Some(_)) => {
                bail!("--failure-fraction cannot be combined with --mode {m}")
            }
            (Some(m), _) => bail!("unknown mode {m:?} (expected none, failures, att-rand or att-root)"),
        };
        let dht = match (self.lookups, self.bucket_size, self.alpha) {
            (None, None, None) => None,
            (_, k, a) => {
                let def = DhtConfig::default();
                Some(DhtConfig {
                    bucket_size: k.unwrap_or(def.bucket_size),
                    alpha: a.unwrap_or(def.alpha),
                    ..def
                })
            }
        };
        let graph = match &self.graph {
            Some(g) => parse_graph(g)?,
            None => d.graph.clone(),
        };
        Ok(Scenario {
            label: self.label.clone().unwrap_or_else(|| graph.to_string()),
            graph,
            tree,
            routing,
            dht,
            adversary: AdversaryConfig {
                mode,
                attacker_edges: self.attacker_edges.unwrap_or(d.adversary.attacker_edges),
                ..d.adversary
            },
            pairs_per_run: self.pairs.unwrap_or(d.pairs_per_run),
            stabilization_samples: self.departures.unwrap_or(d.stabilization_samples),
            lookups_per_run: self.lookups.unwrap_or(d.lookups_per_run),
            runs: self.runs.unwrap_or(d.runs),
            master_seed: self.seed.unwrap_or(d.master_seed),
            ..d
        })
    }
}

fn parse_opt<T: FromStr<Err = String>>(v: &Option<String>) -> Result<Option<T>> {
    v.as_deref().map(T::from_str).transpose().map_err(anyhow::Error::msg)
}

/// `pa:N:M`, `er:N:P`, or a path to an edge list.
pub fn parse_graph(spec: &str) -> Result<GraphSource> {
    let parts: Vec<&str> = spec.split(':').collect();
    let n = |s: &str| {
        s.parse::<usize>()
            .with_context(|| format!("bad node count in {spec:?}"))
    };
    match parts.as_slice() {
        ["pa", count, m] => Ok(GraphSource::Synthetic {
            model: SyntheticModel::PreferentialAttachment {
                m: m.parse()
                    .with_context(|| format!("bad attachment degree in {spec:?}"))?,
            },
            n: n(count)?,
        }),
        ["er", count, p] => Ok(GraphSource::Synthetic {
            model: SyntheticModel::ErdosRenyi {
                p: p.parse().with_context(|| format!("bad edge probability in {spec:?}"))?,
            },
            n: n(count)?,
        }),
        ["pa" | "er", ..] => bail!("synthetic graphs are written pa:N:M or er:N:P, got {spec:?}"),
        _ => Ok(GraphSource::EdgeList(PathBuf::from(spec))),
    }
}

/// Comma-separated list parsed element-wise.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| anyhow::anyhow!("{x:?}: {e}")))
        .collect()
}

pub fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    parse_list(s)
}
