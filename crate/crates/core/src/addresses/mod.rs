//! Anonymous return addresses: padded coordinates run through a keyed hash
//! cascade, authenticated with a MAC, optionally with an extra layer of
//! subtree encryption.

pub mod crypto;
mod inference;
mod ppp;

use rand::Rng;
use thiserror::Error;

use crate::embedding::{Coordinate, Distance, Element, Embedding, EmbeddingConfig, Metric};
use crate::graph::NodeId;
use crate::trees::TreeSet;

pub use crypto::{MacKey, SymKey, SymmetricCipher, XorPadCipher};
pub use inference::{candidate_receiver_set, InferenceCase, ReceiverAnalysis, ReceiverCandidate};
pub use ppp::{
    add_ppp_layer, distribute_subtree_keys, diversity_decrypted, diversity_ppp, generate_mac_keys, ppp_partial_decrypt,
    AddressKeys, PppAddress, SubtreeKeys,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AddressError {
    #[error("coordinate of length {len} does not fit into addresses of length {max_length}")]
    CoordinateTooLong { len: usize, max_length: usize },
    #[error("issuer at level {level} needs {needed} subtree keys but holds {held}")]
    MissingKeys { level: usize, needed: usize, held: usize },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("address record has {got} bytes, expected {expected}")]
    RecordLength { expected: usize, got: usize },
    #[error("need one address per tree: {expected} trees, {got} addresses")]
    AddressCount { expected: usize, got: usize },
}

/// Route-preserving return address for one tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReturnAddress {
    /// The cascade `y = (d_1, ..., d_L)`.
    pub digests: Vec<Element>,
    /// `k~`, needed by everybody to cascade candidate coordinates.
    pub routing_seed: Element,
    pub mac: Element,
    pub tree: usize,
}

/// The two secret seeds an issuer draws per address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressSeeds {
    /// Seed of the routing seed `k~`.
    pub s: u128,
    /// Seed of the padding.
    pub s_pad: u128,
}

impl AddressSeeds {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            s: rng.gen(),
            s_pad: rng.gen(),
        }
    }
}

/// A generated address with the issuer-side details that tests inspect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub address: ReturnAddress,
    /// The padded coordinate `x'`.
    pub padded: Vec<Element>,
    /// The padding seed that was finally used.
    pub s_pad: u128,
    /// How often the padding had to be redrawn.
    pub padding_redraws: usize,
}

/// Pads `x` to length `cfg.max_length` with stream elements of `s_pad`,
/// redrawing the seed while the first padding element equals the next
/// element of one of the issuer's children.
pub fn pad_coordinate(
    x: &[Element],
    children_next: &[Element],
    s_pad: u128,
    cfg: &EmbeddingConfig,
) -> Result<(Vec<Element>, u128, usize), AddressError> {
    let l = x.len();
    if l >= cfg.max_length {
        return Err(AddressError::CoordinateTooLong {
            len: l,
            max_length: cfg.max_length,
        });
    }
    let mut seed = s_pad;
    let mut redraws = 0;
    while children_next.contains(&crypto::prng(seed, (l + 1) as u64, cfg)) {
        seed = crypto::reseed(seed);
        redraws += 1;
    }
    let mut padded = Vec::with_capacity(cfg.max_length);
    padded.extend_from_slice(x);
    for j in l + 1..=cfg.max_length {
        padded.push(crypto::prng(seed, j as u64, cfg));
    }
    Ok((padded, seed, redraws))
}

/// `d_1 = h(k ^ a_1)`, `d_j = h(d_{j-1} ^ a_j)`.
pub fn hash_cascade(elements: &[Element], routing_seed: Element, cfg: &EmbeddingConfig) -> Vec<Element> {
    let mut prev = routing_seed;
    elements
        .iter()
        .map(|&a| {
            prev = crypto::hash(prev ^ a, cfg);
            prev
        })
        .collect()
}

/// Common prefix length of `y` and the cascade of `c`, computing the
/// cascade only up to the first mismatch.
pub fn cascade_cpl(y: &[Element], c: &[Element], routing_seed: Element, cfg: &EmbeddingConfig) -> usize {
    let mut prev = routing_seed;
    for (i, (&d, &a)) in y.iter().zip(c).enumerate() {
        prev = crypto::hash(prev ^ a, cfg);
        if prev != d {
            return i;
        }
    }
    y.len().min(c.len())
}

/// Generates a return address for coordinate `x`. `children_next` holds
/// the next coordinate element of each of the issuer's children.
pub fn generate_rp(
    x: &Coordinate,
    mac_key: &MacKey,
    children_next: &[Element],
    seeds: AddressSeeds,
    tree: usize,
    cfg: &EmbeddingConfig,
) -> Result<Generated, AddressError> {
    let (padded, s_pad, padding_redraws) = pad_coordinate(x.elements(), children_next, seeds.s_pad, cfg)?;
    let routing_seed = crypto::prng(seeds.s, 0, cfg);
    let digests = hash_cascade(&padded, routing_seed, cfg);
    let mac = crypto::mac(mac_key, &digests, cfg);
    Ok(Generated {
        address: ReturnAddress {
            digests,
            routing_seed,
            mac,
            tree,
        },
        padded,
        s_pad,
        padding_redraws,
    })
}

/// The next coordinate elements of `node`'s children in `tree`.
pub fn children_elements(ts: &TreeSet, emb: &Embedding, tree: usize, node: NodeId) -> Vec<Element> {
    let depth = emb.coordinate(tree, node).map_or(0, Coordinate::len);
    ts.tree(tree)
        .children(node)
        .iter()
        .filter_map(|&c| emb.coordinate(tree, c))
        .filter_map(|c| c.elements().get(depth).copied())
        .collect()
}

/// Draws fresh seeds and issues `node`'s address in `tree`.
pub fn issue_address<R: Rng>(
    ts: &TreeSet,
    emb: &Embedding,
    tree: usize,
    node: NodeId,
    mac_key: &MacKey,
    rng: &mut R,
) -> Result<ReturnAddress, AddressError> {
    let coord = emb
        .coordinate(tree, node)
        .ok_or(AddressError::Unsupported("issuer is not part of the tree"))?;
    let children = children_elements(ts, emb, tree, node);
    let seeds = AddressSeeds::random(rng);
    Ok(generate_rp(coord, mac_key, &children, seeds, tree, emb.config())?.address)
}

/// Diversity of candidate coordinate `c` with respect to `addr`: the
/// chosen distance between the digest vector and the cascade of `c`.
pub fn diversity_rp(addr: &ReturnAddress, c: &[Element], metric: Metric, cfg: &EmbeddingConfig) -> Distance {
    let common = cascade_cpl(&addr.digests, c, addr.routing_seed, cfg);
    let total = addr.digests.len() + c.len();
    match metric {
        Metric::Td => Distance::td((total - 2 * common) as u64),
        Metric::Cpl => {
            let equal = common == addr.digests.len() && common == c.len();
            Distance::cpl(cfg.cpl_constant, common, total, equal)
        }
    }
}

/// Anything carrying a digest vector and a MAC over it.
pub trait Authenticated {
    fn digests(&self) -> &[Element];
    fn mac_tag(&self) -> Element;
}

impl Authenticated for ReturnAddress {
    fn digests(&self) -> &[Element] {
        &self.digests
    }

    fn mac_tag(&self) -> Element {
        self.mac
    }
}

pub fn verify_mac(addr: &impl Authenticated, key: &MacKey, cfg: &EmbeddingConfig) -> bool {
    crypto::mac(key, addr.digests(), cfg) == addr.mac_tag()
}

impl ReturnAddress {
    /// Size of the binary record for `cfg`.
    pub fn record_len(cfg: &EmbeddingConfig) -> usize {
        (cfg.max_length + 2) * cfg.element_bytes()
    }

    /// Fixed-width record: the `L` digests, then the routing seed, then the
    /// MAC, each in `ceil(b/8)` little-endian bytes.
    pub fn to_bytes(&self, cfg: &EmbeddingConfig) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::record_len(cfg));
        for &e in self.digests.iter().chain([&self.routing_seed, &self.mac]) {
            out.extend_from_slice(crypto::element_bytes(e, cfg).as_ref());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], cfg: &EmbeddingConfig, tree: usize) -> Result<Self, AddressError> {
        let expected = Self::record_len(cfg);
        if bytes.len() != expected {
            return Err(AddressError::RecordLength {
                expected,
                got: bytes.len(),
            });
        }
        let k = cfg.element_bytes();
        let mut elems: Vec<Element> = bytes
            .chunks_exact(k)
            .map(|chunk| {
                let mut buf = [0u8; 16];
                buf[..k].copy_from_slice(chunk);
                Element::from_le_bytes(buf) & cfg.mask()
            })
            .collect();
        let mac = elems.pop().expect("record has a mac");
        let routing_seed = elems.pop().expect("record has a seed");
        Ok(Self {
            digests: elems,
            routing_seed,
            mac,
            tree,
        })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::embedding::cpl;

    fn cfg(bits: u32, max_length: usize) -> EmbeddingConfig {
        EmbeddingConfig {
            bits_per_element: bits,
            max_length,
            cpl_constant: max_length,
        }
    }

    fn key() -> MacKey {
        MacKey(crypto::derive_key(b"test-mac", &[0]))
    }

    #[test]
    fn cascade_preserves_prefixes() {
        let c = cfg(128, 16);
        let a = [1u128, 2, 3, 4, 5];
        let b = [1u128, 2, 3, 9, 5];
        let ya = hash_cascade(&a, 42, &c);
        let yb = hash_cascade(&b, 42, &c);
        assert_eq!(ya[..3], yb[..3]);
        assert!(ya[3..].iter().zip(&yb[3..]).all(|(x, y)| x != y));
        assert_eq!(cascade_cpl(&ya, &b, 42, &c), 3);
        assert_eq!(cascade_cpl(&ya, &a[..2], 42, &c), 2);
    }

    #[test]
    fn routing_seed_changes_every_digest() {
        let c = cfg(128, 16);
        let x = [7u128, 8, 9];
        let base = hash_cascade(&x, crypto::prng(0, 0, &c), &c);
        let mut collisions = 0;
        for s in 1..1000u128 {
            let y = hash_cascade(&x, crypto::prng(s, 0, &c), &c);
            collisions += y.iter().zip(&base).filter(|(a, b)| a == b).count();
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn pinned_cascade_vector() {
        let c = cfg(128, 4);
        let y = hash_cascade(&[1, 2, 3, 4], 5, &c);
        assert_eq!(
            y,
            vec![
                0x0fa02419d867e121db89b6b66cf888f5,
                0xf81af3acc9b0cae401e7cf00443709a7,
                0x0d9c914a4dbfd376e9faff020977b618,
                0xacfba48625deaecd49998e056b671c30,
            ]
        );
    }

    #[test]
    fn default_addresses_have_128_digests() {
        let c = EmbeddingConfig::default();
        let x = Coordinate::new(vec![3, 4]);
        let g = generate_rp(&x, &key(), &[], AddressSeeds { s: 1, s_pad: 2 }, 0, &c).unwrap();
        assert_eq!(g.address.digests.len(), 128);
        assert_eq!(&g.padded[..2], x.elements());
        // The issuer's own padded coordinate cascades to the whole address.
        assert_eq!(
            cascade_cpl(&g.address.digests, &g.padded, g.address.routing_seed, &c),
            128
        );
        assert!(verify_mac(&g.address, &key(), &c));
    }

    #[test]
    fn padding_avoids_children_elements() {
        let c = cfg(2, 8);
        let x = Coordinate::new(vec![1]);
        let mut redrawn = 0;
        for s_pad in 0..64u128 {
            // Three of the four possible elements are taken by children.
            let children = [0u128, 1, 2];
            let g = generate_rp(&x, &key(), &children, AddressSeeds { s: 3, s_pad }, 0, &c).unwrap();
            assert!(!children.contains(&g.padded[1]));
            if g.padding_redraws > 0 {
                redrawn += 1;
                assert_ne!(g.s_pad, s_pad);
            }
        }
        assert!(redrawn > 0);
    }

    #[test]
    fn too_long_coordinates_are_rejected() {
        let c = cfg(8, 3);
        let x = Coordinate::new(vec![1, 2, 3]);
        assert_eq!(
            generate_rp(&x, &key(), &[], AddressSeeds { s: 0, s_pad: 0 }, 0, &c).unwrap_err(),
            AddressError::CoordinateTooLong { len: 3, max_length: 3 }
        );
    }

    #[test]
    fn own_coordinate_diversity_is_the_padding_length() {
        let c = EmbeddingConfig::default();
        let x = Coordinate::new(vec![10, 20, 30]);
        let g = generate_rp(&x, &key(), &[], AddressSeeds { s: 5, s_pad: 6 }, 0, &c).unwrap();
        let d = diversity_rp(&g.address, x.elements(), Metric::Td, &c);
        assert_eq!(d, Distance::td(128 - 3));
    }

    #[test]
    fn equal_prefix_candidates_keep_their_order() {
        let c = EmbeddingConfig::default();
        let x = Coordinate::new(vec![1, 2, 3]);
        let g = generate_rp(&x, &key(), &[], AddressSeeds { s: 5, s_pad: 6 }, 0, &c).unwrap();
        let cands: Vec<Vec<Element>> = vec![vec![1, 9], vec![1, 9, 9], vec![1, 8, 8, 8], vec![1]];
        for a in &cands {
            for b in &cands {
                let plain = crate::embedding::delta_cpl(x.elements(), a, &c).cmp(&crate::embedding::delta_cpl(
                    x.elements(),
                    b,
                    &c,
                ));
                let rp =
                    diversity_rp(&g.address, a, Metric::Cpl, &c).cmp(&diversity_rp(&g.address, b, Metric::Cpl, &c));
                assert_eq!(plain, rp, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn mac_rejects_tampering_and_wrong_keys() {
        let c = EmbeddingConfig::default();
        let x = Coordinate::new(vec![1, 2]);
        let g = generate_rp(&x, &key(), &[], AddressSeeds { s: 5, s_pad: 6 }, 0, &c).unwrap();
        for i in [0, 1, 64, 127] {
            for bit in [0, 77, 127] {
                let mut bad = g.address.clone();
                bad.digests[i] ^= 1 << bit;
                assert!(!verify_mac(&bad, &key(), &c));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let wrong = MacKey(rng.gen());
            assert!(!verify_mac(&g.address, &wrong, &c));
        }
    }

    #[test]
    fn binary_record_round_trips() {
        let c = cfg(12, 5);
        let x = Coordinate::new(vec![0xabc, 0x123]);
        let g = generate_rp(&x, &key(), &[], AddressSeeds { s: 1, s_pad: 2 }, 3, &c).unwrap();
        let bytes = g.address.to_bytes(&c);
        assert_eq!(bytes.len(), 7 * 2);
        assert_eq!(ReturnAddress::from_bytes(&bytes, &c, 3).unwrap(), g.address);
        assert!(matches!(
            ReturnAddress::from_bytes(&bytes[1..], &c, 3),
            Err(AddressError::RecordLength { expected: 14, got: 13 })
        ));
    }

    #[test]
    fn golden_record() {
        let c = cfg(16, 3);
        let addr = ReturnAddress {
            digests: vec![0x0102, 0xa0b0, 0xffff],
            routing_seed: 0x1234,
            mac: 0x00ee,
            tree: 0,
        };
        assert_eq!(
            addr.to_bytes(&c),
            vec![0x02, 0x01, 0xb0, 0xa0, 0xff, 0xff, 0x34, 0x12, 0xee, 0x00]
        );
    }

    #[test]
    fn prefix_faithfulness_on_a_small_tree() {
        let c = cfg(128, 8);
        let x = Coordinate::new(vec![1, 2]);
        let children = [5u128, 6];
        let g = generate_rp(&x, &key(), &children, AddressSeeds { s: 9, s_pad: 10 }, 0, &c).unwrap();
        let coords: Vec<Vec<Element>> = vec![
            vec![],
            vec![1],
            vec![1, 2],
            vec![1, 2, 5],
            vec![1, 2, 6, 7],
            vec![1, 3],
            vec![4, 2],
        ];
        for cand in &coords {
            assert_eq!(
                cascade_cpl(&g.address.digests, cand, g.address.routing_seed, &c),
                cpl(x.elements(), cand),
                "{cand:?}"
            );
        }
    }
}
