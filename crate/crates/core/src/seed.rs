use sha2::{Digest, Sha256};

/// Derives a named sub-seed from a master seed. Stable across platforms and
/// releases.
pub fn sub_seed(master: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Named sub-seeds used by a scenario run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSet {
    pub workload: u64,
    pub demands: u64,
    pub noise: u64,
    pub des: u64,
}

impl SeedSet {
    pub fn from_master(master: u64) -> Self {
        SeedSet {
            workload: sub_seed(master, "workload"),
            demands: sub_seed(master, "demands"),
            noise: sub_seed(master, "noise"),
            des: sub_seed(master, "des"),
        }
    }
}
