use super::crypto::{self, derive_key, MacKey, SymKey, SymmetricCipher};
use super::{cascade_cpl, AddressError, Authenticated, ReturnAddress};
use crate::embedding::{Distance, Element, EmbeddingConfig, Metric};
use crate::trees::TreeSet;

/// Subtree keys of one node in one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtreeKeys {
    /// `k_1 .. k_{l-1}`: the keys generated by the ancestors at levels
    /// `1 .. l-1`.
    pub received: Vec<SymKey>,
    /// `k_l`, generated by the node itself and handed to its descendants.
    /// The root has none.
    pub own: Option<SymKey>,
}

impl SubtreeKeys {
    /// `k_j` as seen by this node, counting its own key as `k_l`.
    pub fn key(&self, j: usize) -> Option<&SymKey> {
        match j {
            0 => None,
            j if j <= self.received.len() => Some(&self.received[j - 1]),
            j if j == self.received.len() + 1 => self.own.as_ref(),
            _ => None,
        }
    }
}

/// Everything a node needs to issue and authenticate addresses in one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressKeys {
    pub mac_key: MacKey,
    pub subtree: SubtreeKeys,
}

/// Per-node MAC keys.
pub fn generate_mac_keys(n: usize, seed: u64) -> Vec<MacKey> {
    (0..n).map(|v| MacKey(derive_key(b"mac", &[seed, v as u64]))).collect()
}

/// Every non-root member of `tree` generates a key and hands it down its
/// subtree, so a node at level `l` ends up with the keys of its ancestors
/// at levels `1 .. l-1` plus its own.
pub fn distribute_subtree_keys(ts: &TreeSet, tree: usize, seed: u64) -> Vec<Option<SubtreeKeys>> {
    let t = ts.tree(tree);
    let own = |v: usize| SymKey(derive_key(b"subtree", &[seed, tree as u64, v as u64]));
    let mut out: Vec<Option<SubtreeKeys>> = vec![None; t.node_count()];
    out[t.root()] = Some(SubtreeKeys {
        received: Vec::new(),
        own: None,
    });
    let mut stack = vec![t.root()];
    while let Some(p) = stack.pop() {
        let parent = out[p].clone().expect("parent handled first");
        let mut handed = parent.received;
        handed.extend(parent.own);
        for &c in t.children(p) {
            out[c] = Some(SubtreeKeys {
                received: handed.clone(),
                own: Some(own(c)),
            });
            stack.push(c);
        }
    }
    out
}

/// Return address with its inner elements encrypted under subtree keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PppAddress {
    /// `y'`.
    pub digests: Vec<Element>,
    pub routing_seed: Element,
    pub mac: Element,
    pub tree: usize,
}

impl Authenticated for PppAddress {
    fn digests(&self) -> &[Element] {
        &self.digests
    }

    fn mac_tag(&self) -> Element {
        self.mac
    }
}

/// Encrypts element `j` for `2 <= j <= level` with `k_{j-1}` and
/// re-authenticates. Element 1 and the padding stay in the clear.
pub fn add_ppp_layer<C: SymmetricCipher>(
    addr: &ReturnAddress,
    keys: &AddressKeys,
    level: usize,
    cipher: &C,
    cfg: &EmbeddingConfig,
) -> Result<PppAddress, AddressError> {
    let needed = level.saturating_sub(1);
    if keys.subtree.received.len() < needed {
        return Err(AddressError::MissingKeys {
            level,
            needed,
            held: keys.subtree.received.len(),
        });
    }
    let mut digests = addr.digests.clone();
    for j in 2..=level.min(digests.len()) {
        let k = &keys.subtree.received[j - 2];
        digests[j - 1] = cipher.encrypt(k, addr.routing_seed, j, digests[j - 1], cfg);
    }
    let mac = crypto::mac(&keys.mac_key, &digests, cfg);
    Ok(PppAddress {
        digests,
        routing_seed: addr.routing_seed,
        mac,
        tree: addr.tree,
    })
}

/// `f(y')`: element 1 as is, elements `2 ..= l_u + 1` decrypted with the
/// evaluator's `k_1 .. k_{l_u}`. Stops early at a key the evaluator lacks.
pub fn ppp_partial_decrypt<C: SymmetricCipher>(
    addr: &PppAddress,
    keys: &SubtreeKeys,
    evaluator_level: usize,
    cipher: &C,
    cfg: &EmbeddingConfig,
) -> Vec<Element> {
    let upto = (evaluator_level + 1).min(addr.digests.len());
    let mut out = Vec::with_capacity(upto);
    if let Some(&first) = addr.digests.first() {
        out.push(first);
    }
    for j in 2..=upto {
        let Some(k) = keys.key(j - 1) else { break };
        out.push(cipher.decrypt(k, addr.routing_seed, j, addr.digests[j - 1], cfg));
    }
    out
}

/// Common-prefix diversity of `c` against an already decrypted `f(y')`.
pub fn diversity_decrypted(
    decrypted: &[Element],
    routing_seed: Element,
    c: &[Element],
    cfg: &EmbeddingConfig,
) -> Distance {
    let common = cascade_cpl(decrypted, c, routing_seed, cfg);
    let equal = common == decrypted.len() && common == c.len();
    Distance::cpl(cfg.cpl_constant, common, decrypted.len() + c.len(), equal)
}

/// Diversity of candidate `c` as seen by an evaluator at `evaluator_level`
/// holding `keys`. Only the common-prefix metric can be evaluated.
pub fn diversity_ppp<C: SymmetricCipher>(
    addr: &PppAddress,
    c: &[Element],
    keys: &SubtreeKeys,
    evaluator_level: usize,
    metric: Metric,
    cipher: &C,
    cfg: &EmbeddingConfig,
) -> Result<Distance, AddressError> {
    if metric != Metric::Cpl {
        return Err(AddressError::Unsupported(
            "encrypted addresses only support the CPL metric",
        ));
    }
    let f = ppp_partial_decrypt(addr, keys, evaluator_level, cipher, cfg);
    Ok(diversity_decrypted(&f, addr.routing_seed, c, cfg))
}
