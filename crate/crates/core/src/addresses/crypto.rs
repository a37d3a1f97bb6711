//! Hash, PRNG, MAC and cipher primitives over `b`-bit elements. All of
//! them are SHA-256 truncated to the low `b` bits.

use sha2::{Digest, Sha256};

use crate::embedding::{Element, EmbeddingConfig};

const TAG_HASH: u8 = 0x01;
const TAG_PRNG: u8 = 0x02;
const TAG_RESEED: u8 = 0x03;
const TAG_PAD: u8 = 0x04;
const TAG_KEY: u8 = 0x05;

/// Secret key of a node for authenticating its return addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacKey(pub [u8; 32]);

/// Symmetric key shared inside one subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymKey(pub [u8; 32]);

fn truncate(digest: &[u8], cfg: &EmbeddingConfig) -> Element {
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    Element::from_le_bytes(bytes) & cfg.mask()
}

pub(crate) fn element_bytes(a: Element, cfg: &EmbeddingConfig) -> impl AsRef<[u8]> {
    let bytes = a.to_le_bytes();
    let mut out = [0u8; 16];
    let k = cfg.element_bytes();
    out[..k].copy_from_slice(&bytes[..k]);
    ElementBytes { buf: out, len: k }
}

struct ElementBytes {
    buf: [u8; 16],
    len: usize,
}

impl AsRef<[u8]> for ElementBytes {
    fn as_ref(&self) -> &[u8] {
        &self.buf[..self.len]
    }
}

/// The cascade hash `h` on one element.
pub fn hash(x: Element, cfg: &EmbeddingConfig) -> Element {
    let mut h = Sha256::new();
    h.update([TAG_HASH]);
    h.update(element_bytes(x, cfg));
    truncate(&h.finalize(), cfg)
}

/// Counter-mode generator: output number `counter` of the stream keyed by
/// `seed`.
pub fn prng(seed: u128, counter: u64, cfg: &EmbeddingConfig) -> Element {
    let mut h = Sha256::new();
    h.update([TAG_PRNG]);
    h.update(seed.to_le_bytes());
    h.update(counter.to_le_bytes());
    truncate(&h.finalize(), cfg)
}

/// A new seed derived from an old one, used when padding has to be redrawn.
pub fn reseed(seed: u128) -> u128 {
    let mut h = Sha256::new();
    h.update([TAG_RESEED]);
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u128::from_le_bytes(d[..16].try_into().expect("16 bytes"))
}

/// MAC over a digest vector: `h(key || d_1 || ... || d_L)`.
pub fn mac(key: &MacKey, digests: &[Element], cfg: &EmbeddingConfig) -> Element {
    let mut h = Sha256::new();
    h.update(key.0);
    for &d in digests {
        h.update(element_bytes(d, cfg));
    }
    truncate(&h.finalize(), cfg)
}

/// Derives a 32-byte key from a label and numeric context.
pub fn derive_key(label: &[u8], parts: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update([TAG_KEY]);
    h.update((label.len() as u64).to_le_bytes());
    h.update(label);
    for p in parts {
        h.update(p.to_le_bytes());
    }
    h.finalize().into()
}

/// Length-preserving symmetric encryption on hash-domain elements.
/// `nonce` is the routing seed of the address and `position` the element
/// index, so equal plaintexts in different addresses encrypt differently.
pub trait SymmetricCipher {
    fn encrypt(&self, key: &SymKey, nonce: Element, position: usize, x: Element, cfg: &EmbeddingConfig) -> Element;
    fn decrypt(&self, key: &SymKey, nonce: Element, position: usize, x: Element, cfg: &EmbeddingConfig) -> Element;
}

/// XOR with a keyed SHA-256 pad. Stands in for a real cipher; it is a
/// permutation of the `b`-bit domain for every key, nonce and position.
#[derive(Debug, Clone, Copy, Default)]
pub struct XorPadCipher;

impl XorPadCipher {
    fn pad(key: &SymKey, nonce: Element, position: usize, cfg: &EmbeddingConfig) -> Element {
        let mut h = Sha256::new();
        h.update([TAG_PAD]);
        h.update(key.0);
        h.update(nonce.to_le_bytes());
        h.update((position as u64).to_le_bytes());
        truncate(&h.finalize(), cfg)
    }
}

impl SymmetricCipher for XorPadCipher {
    fn encrypt(&self, key: &SymKey, nonce: Element, position: usize, x: Element, cfg: &EmbeddingConfig) -> Element {
        x ^ Self::pad(key, nonce, position, cfg)
    }

    fn decrypt(&self, key: &SymKey, nonce: Element, position: usize, x: Element, cfg: &EmbeddingConfig) -> Element {
        x ^ Self::pad(key, nonce, position, cfg)
    }
}
