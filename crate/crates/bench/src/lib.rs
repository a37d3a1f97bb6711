//! Shared fixtures for the benchmarks.

use f2fsim_core::graph::generate_synthetic;
use f2fsim_core::trees::{construct_trees, elect_root};
use f2fsim_core::{
    assign_coordinates, Embedding, EmbeddingConfig, Graph, RootPolicy, Strategy, SyntheticModel, TreeConfig, TreeSet,
};

pub fn graph(n: usize) -> Graph {
    generate_synthetic(SyntheticModel::PreferentialAttachment { m: 3 }, n, 1).expect("valid model")
}

pub fn tree_config(gamma: usize, strategy: Strategy) -> TreeConfig {
    TreeConfig {
        gamma,
        accept_prob: 0.5,
        strategy,
        rng_seed: 1,
    }
}

pub fn embed(g: &Graph, gamma: usize, strategy: Strategy) -> (TreeSet, Embedding) {
    let root = elect_root(g, RootPolicy::MaxDegree, 0).expect("nonempty graph");
    let ts = construct_trees(g, &tree_config(gamma, strategy), &vec![root; gamma]).expect("connected graph");
    let emb = assign_coordinates(&ts, &EmbeddingConfig::default(), 1).expect("default config");
    (ts, emb)
}
