//! Seed derivation.
//!
//! Every random stream is a ChaCha8 generator keyed by SHA-256 over the
//! global seed and a list of labels, so the stream for a given
//! (seed, labels) pair is the same on every platform and independent of
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One component of a derived seed.
pub trait SeedPart {
    fn feed(&self, hasher: &mut Sha256);
}

impl SeedPart for str {
    fn feed(&self, hasher: &mut Sha256) {
        hasher.update([0u8]);
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update(self.as_bytes());
    }
}

impl SeedPart for String {
    fn feed(&self, hasher: &mut Sha256) {
        self.as_str().feed(hasher)
    }
}

impl SeedPart for u64 {
    fn feed(&self, hasher: &mut Sha256) {
        hasher.update([1u8]);
        hasher.update(self.to_le_bytes());
    }
}

impl<T: SeedPart + ?Sized> SeedPart for &T {
    fn feed(&self, hasher: &mut Sha256) {
        (**self).feed(hasher)
    }
}

pub fn derive_seed(seed: u64, parts: &[&dyn SeedPart]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        part.feed(&mut hasher);
    }
    hasher.finalize().into()
}

pub fn seeded_rng(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    let parts: Vec<&dyn SeedPart> = labels.iter().map(|l| l as &dyn SeedPart).collect();
    ChaCha8Rng::from_seed(derive_seed(seed, &parts))
}

pub fn rng_from_parts(seed: u64, parts: &[&dyn SeedPart]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, parts))
}
