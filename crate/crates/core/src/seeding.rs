//! Hierarchical seed derivation.
//!
//! Every random stream in an experiment is addressed by a path of labels
//! below one master seed. A child seed is the first eight bytes of
//! `SHA-256(parent_le_bytes || label)`, so streams are independent of the
//! order in which they are requested.

use sha2::{Digest, Sha256};

pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Folds [`derive_seed`] over a label path.
pub fn derive_path(root: u64, path: &[&str]) -> u64 {
    path.iter().fold(root, |seed, label| derive_seed(seed, label))
}

/// Seed of episode `episode` in environment slot `env_index`.
pub fn episode_seed(base: u64, env_index: usize, episode: u64) -> u64 {
    derive_seed(derive_seed(base, &format!("env{env_index}")), &format!("episode{episode}"))
}
