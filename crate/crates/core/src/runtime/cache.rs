use serde::{Deserialize, Serialize};

/// Token-level accounting of a prefix KV cache. No tensors, only lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheState {
    pub cached_prefix: usize,
    pub hits: usize,
    pub recomputed: usize,
    pub rollbacks: usize,
    /// Tokens dropped from the cache by rollbacks.
    pub evicted: usize,
}

/// Serves a query whose context extends the cached prefix.
pub fn cache_step(cache: CacheState, context_len: usize) -> CacheState {
    CacheState {
        cached_prefix: context_len,
        hits: cache.hits + cache.cached_prefix.min(context_len),
        recomputed: cache.recomputed + context_len.saturating_sub(cache.cached_prefix),
        ..cache
    }
}

/// Rolls the cache back to `prefix` tokens. `generated` is the length of the
/// action decoded on top of the cached context just before the rollback.
pub fn cache_rollback(cache: CacheState, prefix: usize, generated: usize) -> CacheState {
    let resident = cache.cached_prefix + generated;
    CacheState {
        cached_prefix: prefix,
        rollbacks: cache.rollbacks + 1,
        evicted: cache.evicted + resident.saturating_sub(prefix),
        ..cache
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_counts_hits_and_recompute() {
        let c = cache_step(CacheState::default(), 100);
        assert_eq!((c.hits, c.recomputed, c.cached_prefix), (0, 100, 100));
        let c = cache_step(c, 150);
        assert_eq!((c.hits, c.recomputed, c.cached_prefix), (100, 150, 150));
    }

    #[test]
    fn rollback_evicts_branch_tail() {
        let c = cache_step(CacheState::default(), 500);
        let c = cache_rollback(c, 120, 7);
        assert_eq!(c.cached_prefix, 120);
        assert_eq!(c.rollbacks, 1);
        assert_eq!(c.evicted, 387);
        let c = cache_step(c, 140);
        assert_eq!(c.hits, 120);
        assert_eq!(c.recomputed, 520);
    }
}
