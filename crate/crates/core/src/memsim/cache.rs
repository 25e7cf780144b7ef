//! Set-associative LRU cache and fully associative LRU TLB models.

use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::MemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub capacity_bytes: u64,
    pub line_bytes: u64,
    pub associativity: usize,
}

impl CacheConfig {
    pub fn new(capacity_bytes: u64, line_bytes: u64, associativity: usize) -> Result<Self, MemError> {
        let cfg = CacheConfig { capacity_bytes, line_bytes, associativity };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MemError> {
        if !self.line_bytes.is_power_of_two() {
            return Err(MemError::Config(format!("line size {} is not a power of two", self.line_bytes)));
        }
        if self.associativity == 0 {
            return Err(MemError::Config("associativity must be at least 1".into()));
        }
        let way_bytes = self.line_bytes * self.associativity as u64;
        if self.capacity_bytes == 0 || !self.capacity_bytes.is_multiple_of(way_bytes) {
            return Err(MemError::Config(format!(
                "capacity {} is not a positive multiple of line x associativity ({way_bytes})",
                self.capacity_bytes
            )));
        }
        Ok(())
    }

    pub fn sets(&self) -> usize {
        (self.capacity_bytes / (self.line_bytes * self.associativity as u64)) as usize
    }

    /// A fully associative cache of the given capacity.
    pub fn fully_associative(capacity_bytes: u64, line_bytes: u64) -> Result<Self, MemError> {
        Self::new(capacity_bytes, line_bytes, (capacity_bytes / line_bytes.max(1)) as usize)
    }
}

impl Default for CacheConfig {
    /// 16 MB, 16-way, 128-byte lines.
    fn default() -> Self {
        CacheConfig { capacity_bytes: 16 << 20, line_bytes: 128, associativity: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlbConfig {
    pub entry_count: usize,
    pub page_bytes: u64,
}

impl TlbConfig {
    pub fn new(entry_count: usize, page_bytes: u64) -> Result<Self, MemError> {
        let cfg = TlbConfig { entry_count, page_bytes };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MemError> {
        if !self.page_bytes.is_power_of_two() {
            return Err(MemError::Config(format!("page size {} is not a power of two", self.page_bytes)));
        }
        if self.entry_count == 0 {
            return Err(MemError::Config("TLB needs at least one entry".into()));
        }
        Ok(())
    }
}

impl Default for TlbConfig {
    fn default() -> Self {
        TlbConfig { entry_count: 256, page_bytes: 16 << 10 }
    }
}

/// Hit/miss and traffic counters. Monotone within a run, merged by addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemStats {
    pub l2_hits: u64,
    pub l2_misses: u64,
    pub tlb_hits: u64,
    pub tlb_misses: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

impl MemStats {
    pub fn line_touches(&self) -> u64 {
        self.l2_hits + self.l2_misses
    }
}

impl AddAssign for MemStats {
    fn add_assign(&mut self, o: Self) {
        self.l2_hits += o.l2_hits;
        self.l2_misses += o.l2_misses;
        self.tlb_hits += o.tlb_hits;
        self.tlb_misses += o.tlb_misses;
        self.bytes_read += o.bytes_read;
        self.bytes_written += o.bytes_written;
    }
}

impl Add for MemStats {
    type Output = MemStats;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for MemStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(MemStats::default(), Add::add)
    }
}

const INVALID: u64 = u64::MAX;

/// Set-associative cache with true LRU replacement per set.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    cfg: CacheConfig,
    sets: usize,
    tags: Vec<u64>,
    stamps: Vec<u64>,
    clock: u64,
}

impl SetAssocCache {
    pub fn new(cfg: CacheConfig) -> Self {
        let sets = cfg.sets();
        let n = sets * cfg.associativity;
        SetAssocCache { cfg, sets, tags: vec![INVALID; n], stamps: vec![0; n], clock: 0 }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn set_of(&self, line: u64) -> usize {
        (line % self.sets as u64) as usize
    }

    /// Look up one line number (address / line size); returns true on hit.
    pub fn access_line(&mut self, line: u64) -> bool {
        self.clock += 1;
        let ways = self.cfg.associativity;
        let base = self.set_of(line) * ways;
        let tags = &mut self.tags[base..base + ways];
        let stamps = &mut self.stamps[base..base + ways];
        if let Some(w) = tags.iter().position(|&t| t == line) {
            stamps[w] = self.clock;
            return true;
        }
        let victim = match tags.iter().position(|&t| t == INVALID) {
            Some(w) => w,
            None => {
                let (w, _) = stamps.iter().enumerate().min_by_key(|(_, &s)| s).expect("non-empty set");
                w
            }
        };
        tags[victim] = line;
        stamps[victim] = self.clock;
        false
    }

    /// Resident lines of a set ordered least- to most-recently used.
    pub fn set_contents(&self, set: usize) -> Vec<u64> {
        let ways = self.cfg.associativity;
        let base = set * ways;
        let mut v: Vec<(u64, u64)> = (base..base + ways)
            .filter(|&i| self.tags[i] != INVALID)
            .map(|i| (self.stamps[i], self.tags[i]))
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, t)| t).collect()
    }

    pub fn clear(&mut self) {
        self.tags.fill(INVALID);
        self.stamps.fill(0);
        self.clock = 0;
    }
}

/// Fully associative LRU TLB over virtual page numbers.
#[derive(Debug, Clone)]
pub struct Tlb {
    cfg: TlbConfig,
    entries: HashMap<u64, u64>,
    clock: u64,
    mru: u64,
}

impl Tlb {
    pub fn new(cfg: TlbConfig) -> Self {
        Tlb { cfg, entries: HashMap::with_capacity(cfg.entry_count + 1), clock: 0, mru: INVALID }
    }

    pub fn config(&self) -> &TlbConfig {
        &self.cfg
    }

    /// Translate one page number; returns true on hit.
    pub fn access_page(&mut self, page: u64) -> bool {
        // Re-touching the most recent page leaves the LRU order unchanged.
        if page == self.mru {
            return true;
        }
        self.clock += 1;
        self.mru = page;
        if let Some(stamp) = self.entries.get_mut(&page) {
            *stamp = self.clock;
            return true;
        }
        if self.entries.len() == self.cfg.entry_count {
            let (&victim, _) = self.entries.iter().min_by_key(|(_, &s)| s).expect("full TLB");
            self.entries.remove(&victim);
        }
        self.entries.insert(page, self.clock);
        false
    }

    /// Resident pages ordered least- to most-recently used.
    pub fn contents(&self) -> Vec<u64> {
        let mut v: Vec<(u64, u64)> = self.entries.iter().map(|(&p, &s)| (s, p)).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, p)| p).collect()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.clock = 0;
        self.mru = INVALID;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// One L2 cache plus one TLB, owned by a single simulated unit.
#[derive(Debug, Clone)]
pub struct CacheHierarchy {
    cache: SetAssocCache,
    tlb: Tlb,
    stats: MemStats,
}

impl CacheHierarchy {
    pub fn new(cache: CacheConfig, tlb: TlbConfig) -> Self {
        CacheHierarchy { cache: SetAssocCache::new(cache), tlb: Tlb::new(tlb), stats: MemStats::default() }
    }

    /// Simulate an access of `len` bytes at `addr`; returns the stats delta.
    pub fn access(&mut self, addr: u64, len: u64, kind: AccessKind) -> MemStats {
        let mut d = MemStats::default();
        if len == 0 {
            return d;
        }
        let last = addr + len - 1;
        let line = self.cache.config().line_bytes;
        for l in addr / line..=last / line {
            if self.cache.access_line(l) {
                d.l2_hits += 1;
            } else {
                d.l2_misses += 1;
            }
        }
        let page = self.tlb.config().page_bytes;
        for p in addr / page..=last / page {
            if self.tlb.access_page(p) {
                d.tlb_hits += 1;
            } else {
                d.tlb_misses += 1;
            }
        }
        match kind {
            AccessKind::Read => d.bytes_read = len,
            AccessKind::Write => d.bytes_written = len,
        }
        self.stats += d;
        d
    }

    pub fn snapshot(&self) -> MemStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = MemStats::default();
    }

    /// Drop all cached lines and translations (stats are kept).
    pub fn flush(&mut self) {
        self.cache.clear();
        self.tlb.clear();
    }

    pub fn cache(&self) -> &SetAssocCache {
        &self.cache
    }

    pub fn tlb(&self) -> &Tlb {
        &self.tlb
    }
}

impl Default for CacheHierarchy {
    fn default() -> Self {
        CacheHierarchy::new(CacheConfig::default(), TlbConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(capacity: u64, line: u64, ways: usize) -> CacheHierarchy {
        CacheHierarchy::new(CacheConfig::new(capacity, line, ways).unwrap(), TlbConfig::default())
    }

    #[test]
    fn cold_read_of_two_lines() {
        let mut h = small(16 << 20, 128, 16);
        let d = h.access(0, 256, AccessKind::Read);
        assert_eq!((d.l2_misses, d.l2_hits), (2, 0));
        let d = h.access(0, 256, AccessKind::Read);
        assert_eq!((d.l2_misses, d.l2_hits), (0, 2));
        assert_eq!(h.snapshot().bytes_read, 512);
    }

    #[test]
    fn snapshot_counts_repeat_hits() {
        let mut h = CacheHierarchy::default();
        for _ in 0..7 {
            h.access(4096, 4, AccessKind::Read);
        }
        assert_eq!(h.snapshot().l2_hits, 6);
        h.reset_stats();
        assert_eq!(h.snapshot(), MemStats::default());
    }

    #[test]
    fn merge_is_fieldwise_sum() {
        let a = MemStats { l2_hits: 1, l2_misses: 2, tlb_hits: 3, tlb_misses: 4, bytes_read: 5, bytes_written: 6 };
        let b = MemStats { l2_hits: 10, l2_misses: 20, tlb_hits: 30, tlb_misses: 40, bytes_read: 50, bytes_written: 60 };
        let c = a + b;
        assert_eq!(c.l2_hits, 11);
        assert_eq!(c.bytes_written, 66);
        assert_eq!([a, b].into_iter().sum::<MemStats>(), c);
    }

    #[test]
    fn two_way_set_thrashes_with_three_lines() {
        // 4 sets of 2 ways; lines 0, 4, 8 all map to set 0.
        let mut c = SetAssocCache::new(CacheConfig::new(8 * 64, 64, 2).unwrap());
        for round in 0..5 {
            for l in [0u64, 4, 8] {
                assert!(!c.access_line(l), "round {round} line {l} should miss");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(CacheConfig::new(1000, 128, 16).is_err());
        assert!(CacheConfig::new(4096, 96, 1).is_err());
        assert!(TlbConfig::new(0, 4096).is_err());
        assert!(TlbConfig::new(4, 3000).is_err());
    }

    #[test]
    fn tlb_lru_eviction() {
        let mut t = Tlb::new(TlbConfig::new(2, 4096).unwrap());
        assert!(!t.access_page(1));
        assert!(!t.access_page(2));
        assert!(t.access_page(1));
        assert!(!t.access_page(3)); // evicts 2
        assert_eq!(t.contents(), vec![1, 3]);
        assert!(!t.access_page(2));
    }
}
