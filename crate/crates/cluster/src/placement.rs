use std::fmt;
use std::hash::Hasher;
use std::sync::Arc;

use fnv::FnvHasher;

/// 64-bit FNV-1a of `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub type PlacementFn = Arc<dyn Fn(&[u8]) -> usize + Send + Sync>;

/// Maps external vertex ids to shards. Shard `i` is node `i` of the
/// hostfile.
#[derive(Clone)]
pub struct ShardMap {
    shards: usize,
    placement: Option<PlacementFn>,
}

impl fmt::Debug for ShardMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShardMap")
            .field("shards", &self.shards)
            .field("custom", &self.placement.is_some())
            .finish()
    }
}

impl ShardMap {
    pub fn new(shards: usize) -> Self {
        assert!(shards > 0, "at least one shard");
        Self {
            shards,
            placement: None,
        }
    }

    /// Uses `f(ext) % shards` instead of the hash.
    pub fn with_placement(shards: usize, f: PlacementFn) -> Self {
        Self {
            placement: Some(f),
            ..Self::new(shards)
        }
    }

    pub fn shard_count(&self) -> usize {
        self.shards
    }

    pub fn shard_of(&self, ext: &[u8]) -> usize {
        match &self.placement {
            Some(f) => f(ext) % self.shards,
            None => (fnv1a64(ext) % self.shards as u64) as usize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn single_shard_and_determinism() {
        let one = ShardMap::new(1);
        assert_eq!(one.shard_of(b"anything"), 0);
        let m = ShardMap::new(12);
        assert_eq!(m.shard_of(b"v42"), m.shard_of(b"v42"));
    }

    #[test]
    fn custom_placement() {
        let m = ShardMap::with_placement(3, Arc::new(|e: &[u8]| e.len()));
        assert_eq!(m.shard_of(b"abcd"), 1);
    }

    #[test]
    fn spread_over_twelve_shards() {
        let m = ShardMap::new(12);
        let mut counts = [0usize; 12];
        for i in 0..100_000 {
            counts[m.shard_of(format!("v{i}").as_bytes())] += 1;
        }
        for c in counts {
            assert!((6000..=11000).contains(&c), "{counts:?}");
        }
    }
}
