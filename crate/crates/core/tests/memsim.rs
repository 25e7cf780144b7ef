use proptest::prelude::*;
use sme_gemm::memsim::{AccessKind, CacheConfig, CacheHierarchy, MemoryImage, SetAssocCache, Tlb, TlbConfig};

/// Recency lists per set, least recent first.
struct BruteLru {
    sets: Vec<Vec<u64>>,
    ways: usize,
}

impl BruteLru {
    fn new(sets: usize, ways: usize) -> Self {
        BruteLru { sets: vec![Vec::new(); sets], ways }
    }

    fn access(&mut self, line: u64) -> bool {
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(line % n) as usize];
        let hit = if let Some(p) = set.iter().position(|&l| l == line) {
            set.remove(p);
            true
        } else {
            if set.len() == self.ways {
                set.remove(0);
            }
            false
        };
        set.push(line);
        hit
    }
}

proptest! {
    #[test]
    fn cache_matches_brute_force_lru(
        sets_log in 0u32..4,
        ways in 1usize..6,
        lines in prop::collection::vec(0u64..40, 1..400),
    ) {
        let sets = 1usize << sets_log;
        let line_bytes = 64;
        let cfg = CacheConfig::new((sets * ways) as u64 * line_bytes, line_bytes, ways).unwrap();
        let mut cache = SetAssocCache::new(cfg);
        let mut brute = BruteLru::new(sets, ways);
        for &l in &lines {
            prop_assert_eq!(cache.access_line(l), brute.access(l));
        }
        for s in 0..sets {
            prop_assert_eq!(cache.set_contents(s), brute.sets[s].clone());
        }
    }

    #[test]
    fn tlb_matches_brute_force_lru(entries in 1usize..8, pages in prop::collection::vec(0u64..20, 1..300)) {
        let mut tlb = Tlb::new(TlbConfig::new(entries, 4096).unwrap());
        let mut brute = BruteLru::new(1, entries);
        for &p in &pages {
            prop_assert_eq!(tlb.access_page(p), brute.access(p));
        }
        prop_assert_eq!(tlb.contents(), brute.sets[0].clone());
    }

    #[test]
    fn access_counts_every_spanned_line_and_page(addr in 0u64..100_000, len in 1u64..20_000) {
        let mut h = CacheHierarchy::new(CacheConfig::new(1 << 20, 128, 8).unwrap(), TlbConfig::new(64, 4096).unwrap());
        let d = h.access(addr, len, AccessKind::Write);
        let lines = (addr..addr + len).map(|x| x / 128).collect::<std::collections::BTreeSet<_>>().len() as u64;
        let pages = (addr..addr + len).map(|x| x / 4096).collect::<std::collections::BTreeSet<_>>().len() as u64;
        prop_assert_eq!(d.line_touches(), lines);
        prop_assert_eq!(d.l2_misses, lines);
        prop_assert_eq!(d.tlb_misses + d.tlb_hits, pages);
        prop_assert_eq!(d.bytes_written, len);
        prop_assert_eq!(h.snapshot(), d);
    }
}

#[test]
fn working_set_within_capacity_stays_resident() {
    let mut h = CacheHierarchy::new(CacheConfig::new(64 << 10, 128, 4).unwrap(), TlbConfig::new(32, 4096).unwrap());
    for _ in 0..3 {
        h.access(0, 32 << 10, AccessKind::Read);
    }
    let s = h.snapshot();
    assert_eq!(s.l2_misses, 256);
    assert_eq!(s.l2_hits, 512);
    assert_eq!(s.tlb_misses, 8);
}

#[test]
fn memory_regions_are_disjoint_and_bounds_checked() {
    let mut mem = MemoryImage::new(1000);
    let a = mem.alloc_region("a", 100, 128).unwrap();
    let b = mem.alloc_region("b", 100, 128).unwrap();
    assert!(b >= a + 100);
    assert!(mem.alloc_region("a", 1, 1).is_err());
    assert!(mem.alloc_region("c", 2000, 1).is_err());
    assert!(mem.read_vec(990, 20).is_err());
    mem.write_lanes(b, &[1.5f32, -2.0]).unwrap();
    assert_eq!(mem.read_lanes::<f32>(b, 2).unwrap(), vec![1.5, -2.0]);
}
