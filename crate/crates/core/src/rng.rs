//! Counter-based random stream derivation.
//!
//! A [`RngStream`] is a root seed plus a path of `(tag, index)` pairs. The
//! generator for a stream is seeded from a SHA-256 digest of that path, so a
//! stream's values depend only on where it sits in the derivation tree and
//! never on the order in which sibling streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"metasim/rng-stream/v1";

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    root_seed: u64,
    path: Vec<(String, u64)>,
}

impl RngStream {
    pub fn new(root_seed: u64) -> Self {
        RngStream {
            root_seed,
            path: Vec::new(),
        }
    }

    /// Child stream at `(tag, index)` below this one.
    pub fn derive(&self, tag: &str, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push((tag.to_string(), index));
        RngStream {
            root_seed: self.root_seed,
            path,
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[(String, u64)] {
        &self.path
    }

    fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update(self.root_seed.to_le_bytes());
        for (tag, index) in &self.path {
            h.update((tag.len() as u64).to_le_bytes());
            h.update(tag.as_bytes());
            h.update(index.to_le_bytes());
        }
        let out = h.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&out);
        bytes
    }

    /// 64-bit reproducibility token identifying this derivation point.
    pub fn seed(&self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.digest())
    }
}
