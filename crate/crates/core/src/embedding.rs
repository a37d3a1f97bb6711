//! Prefix coordinates over each tree and the two distances on them.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::NodeId;
use crate::trees::TreeSet;

/// One coordinate element; only the low `bits_per_element` bits are used.
pub type Element = u128;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmbeddingError {
    #[error("embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("tree {tree} reaches level {level}, but coordinates are capped at length {max_length}")]
    TooDeep { tree: usize, level: u32, max_length: usize },
    #[error("node {node} has {children} children in tree {tree}, more than {bits}-bit elements can tell apart")]
    TooManyChildren {
        tree: usize,
        node: NodeId,
        children: usize,
        bits: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    /// Bits per coordinate element (b).
    pub bits_per_element: u32,
    /// Length every return address is padded to; coordinates must stay
    /// strictly shorter.
    pub max_length: usize,
    /// The constant in the common-prefix distance.
    pub cpl_constant: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            bits_per_element: 128,
            max_length: 128,
            cpl_constant: 128,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if !(1..=128).contains(&self.bits_per_element) {
            return Err(EmbeddingError::InvalidConfig(format!(
                "bits per element must be in 1..=128, got {}",
                self.bits_per_element
            )));
        }
        if self.max_length == 0 || self.cpl_constant == 0 {
            return Err(EmbeddingError::InvalidConfig("lengths must be positive".into()));
        }
        Ok(())
    }

    /// Mask selecting the low `bits_per_element` bits.
    pub fn mask(&self) -> Element {
        if self.bits_per_element >= 128 {
            Element::MAX
        } else {
            (1 << self.bits_per_element) - 1
        }
    }

    /// Bytes needed for one element.
    pub fn element_bytes(&self) -> usize {
        self.bits_per_element.div_ceil(8) as usize
    }
}

/// A node position in one tree: the root has the empty coordinate and a
/// child extends its parent's coordinate by one element.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coordinate(Vec<Element>);

impl Coordinate {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn new(elements: Vec<Element>) -> Self {
        Self(elements)
    }

    pub fn elements(&self) -> &[Element] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, element: Element) -> Self {
        let mut v = Vec::with_capacity(self.0.len() + 1);
        v.extend_from_slice(&self.0);
        v.push(element);
        Self(v)
    }

    pub fn is_prefix_of(&self, other: &Coordinate) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl From<Vec<Element>> for Coordinate {
    fn from(v: Vec<Element>) -> Self {
        Self(v)
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a:x}")?;
        }
        f.write_str(")")
    }
}

/// Length of the longest common prefix.
pub fn cpl<T: PartialEq>(x1: &[T], x2: &[T]) -> usize {
    x1.iter().zip(x2).take_while(|(a, b)| a == b).count()
}

/// Tree distance: the hop count between two coordinates in their tree.
pub fn delta_td(x1: &[Element], x2: &[Element]) -> u64 {
    (x1.len() + x2.len() - 2 * cpl(x1, x2)) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Tree distance.
    Td,
    /// Common-prefix distance.
    Cpl,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Td => "TD",
            Metric::Cpl => "CPL",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TD" => Ok(Metric::Td),
            "CPL" => Ok(Metric::Cpl),
            _ => Err(format!("unknown metric {s:?} (expected TD or CPL)")),
        }
    }
}

/// Exact, totally ordered form of both distances.
///
/// Tree distance is `(d, 0)`. The common-prefix distance
/// `L - cpl - 1/(|x1| + |x2| + 1)` is `(L - cpl, |x1| + |x2|)` compared
/// lexicographically, and `(0, 0)` for equal inputs; the fractional part
/// lies in `(0, 1/2]` for distinct inputs, so the orders agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Distance {
    major: u64,
    minor: u64,
}

impl Distance {
    pub const ZERO: Distance = Distance { major: 0, minor: 0 };

    pub fn td(d: u64) -> Self {
        Self { major: d, minor: 0 }
    }

    /// Common-prefix distance from its parts. `equal` marks identical
    /// inputs.
    pub fn cpl(constant: usize, common: usize, total_len: usize, equal: bool) -> Self {
        if equal {
            return Self::ZERO;
        }
        Self {
            major: constant.saturating_sub(common) as u64,
            minor: total_len as u64,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// The numeric value of the distance under `metric`.
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Td => self.major as f64,
            Metric::Cpl if self.is_zero() => 0.0,
            Metric::Cpl => self.major as f64 - 1.0 / (self.minor as f64 + 1.0),
        }
    }
}

/// Common-prefix distance with constant `cfg.cpl_constant`.
pub fn delta_cpl(x1: &[Element], x2: &[Element], cfg: &EmbeddingConfig) -> Distance {
    let c = cpl(x1, x2);
    let equal = c == x1.len() && c == x2.len();
    Distance::cpl(cfg.cpl_constant, c, x1.len() + x2.len(), equal)
}

pub fn distance(metric: Metric, x1: &[Element], x2: &[Element], cfg: &EmbeddingConfig) -> Distance {
    match metric {
        Metric::Td => Distance::td(delta_td(x1, x2)),
        Metric::Cpl => delta_cpl(x1, x2, cfg),
    }
}

/// Coordinates of every tree member, per tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    cfg: EmbeddingConfig,
    coords: Vec<Vec<Option<Coordinate>>>,
    redraws: usize,
    epoch: u64,
}

/// Assigns coordinates over every tree of `ts`. Sibling collisions are
/// redrawn; the number of redraws is kept for inspection.
pub fn assign_coordinates(ts: &TreeSet, cfg: &EmbeddingConfig, seed: u64) -> Result<Embedding, EmbeddingError> {
    cfg.validate()?;
    let mut emb = Embedding {
        cfg: *cfg,
        coords: vec![vec![None; ts.node_count()]; ts.gamma()],
        redraws: 0,
        epoch: 0,
    };
    emb.refresh(ts, seed)?;
    Ok(emb)
}

fn tree_rng(seed: u64, tree: usize, epoch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(tree as u64);
    rng
}

impl Embedding {
    pub fn config(&self) -> &EmbeddingConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> usize {
        self.coords.len()
    }

    pub fn coordinate(&self, tree: usize, node: NodeId) -> Option<&Coordinate> {
        self.coords[tree][node].as_ref()
    }

    /// Number of sibling collisions that were redrawn so far.
    pub fn redraws(&self) -> usize {
        self.redraws
    }

    /// Brings the coordinates in line with `ts` after a stabilization
    /// event. Nodes whose parent coordinate and sibling-unique element are
    /// unchanged keep their coordinate; all others get fresh elements.
    /// Returns the number of (tree, node) coordinates that changed.
    pub fn refresh(&mut self, ts: &TreeSet, seed: u64) -> Result<usize, EmbeddingError> {
        let mask = self.cfg.mask();
        let mut changed = 0;
        let epoch = self.epoch;
        self.epoch += 1;
        for (i, tree) in ts.trees().iter().enumerate() {
            let mut rng = tree_rng(seed, i, epoch);
            let coords = &mut self.coords[i];
            let mut stale = vec![true; coords.len()];
            let root = tree.root();
            if coords[root].as_ref().is_some_and(|c| c.is_empty()) {
                stale[root] = false;
            } else {
                coords[root] = Some(Coordinate::root());
                changed += 1;
                stale[root] = false;
            }
            let mut stack = vec![root];
            while let Some(p) = stack.pop() {
                let children = tree.children(p);
                if children.len() as u128 > mask.saturating_add(1) && self.cfg.bits_per_element < 128 {
                    return Err(EmbeddingError::TooManyChildren {
                        tree: i,
                        node: p,
                        children: children.len(),
                        bits: self.cfg.bits_per_element,
                    });
                }
                let parent = coords[p].clone().expect("parent assigned first");
                if !children.is_empty() && parent.len() + 1 >= self.cfg.max_length {
                    return Err(EmbeddingError::TooDeep {
                        tree: i,
                        level: parent.len() as u32 + 1,
                        max_length: self.cfg.max_length,
                    });
                }
                let mut used = HashSet::with_capacity(children.len());
                let mut fresh = Vec::new();
                for &c in children {
                    let keep = coords[c].as_ref().is_some_and(|x| {
                        x.len() == parent.len() + 1 && parent.is_prefix_of(x) && used.insert(*x.0.last().unwrap())
                    });
                    if keep {
                        stale[c] = false;
                    } else {
                        fresh.push(c);
                    }
                }
                for c in fresh {
                    let mut a = rng.gen::<Element>() & mask;
                    while !used.insert(a) {
                        self.redraws += 1;
                        a = rng.gen::<Element>() & mask;
                    }
                    coords[c] = Some(parent.child(a));
                    stale[c] = false;
                    changed += 1;
                }
                stack.extend(children);
            }
            for (v, slot) in coords.iter_mut().enumerate() {
                if stale[v] && slot.take().is_some() {
                    changed += 1;
                }
            }
        }
        Ok(changed)
    }

    /// Replaces the first `prefix.len()` elements of the coordinates of
    /// `node` and all its descendants in `tree` by `prefix`.
    pub fn rebase_subtree(&mut self, ts: &TreeSet, tree: usize, node: NodeId, prefix: &Coordinate) {
        let t = ts.tree(tree);
        for v in std::iter::once(node).chain(t.descendants(node)) {
            if let Some(x) = self.coords[tree][v].as_mut() {
                let k = prefix.len().min(x.len());
                x.0[..k].copy_from_slice(&prefix.elements()[..k]);
            }
        }
    }

    /// Diagnostic dump: `tree node coordinate` for every member.
    pub fn dump(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "tree\tnode\tcoordinate")?;
        for (i, coords) in self.coords.iter().enumerate() {
            for (v, c) in coords.iter().enumerate() {
                if let Some(c) = c {
                    writeln!(out, "{i}\t{v}\t{c}")?;
                }
            }
        }
        Ok(())
    }
}
