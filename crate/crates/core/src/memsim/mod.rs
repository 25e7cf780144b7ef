//! Flat byte-addressed memory with named regions, plus the L2/TLB model
//! that turns accesses into hit/miss statistics.
//!
//! The byte store is shared between simulated units: every byte is an
//! `AtomicU8` accessed with relaxed ordering, so concurrent tasks that write
//! disjoint C blocks never tear each other's data. Cache and TLB state is
//! private to each unit ([`CacheHierarchy`]) and merged after a run.

mod cache;
mod profile;

use std::sync::atomic::{AtomicU8, Ordering};

use thiserror::Error;

use crate::dtype::Lane;

pub use cache::{AccessKind, CacheConfig, CacheHierarchy, MemStats, SetAssocCache, Tlb, TlbConfig};
pub use profile::SystemProfile;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemError {
    #[error("memory fault: access of {len} bytes at {addr:#x} exceeds capacity {capacity:#x}")]
    Fault { addr: u64, len: u64, capacity: u64 },
    #[error("cannot allocate region `{name}` of {bytes} bytes: {reason}")]
    Alloc { name: String, bytes: u64, reason: String },
    #[error("invalid memory configuration: {0}")]
    Config(String),
    #[error("unknown region `{0}`")]
    NoRegion(String),
}

/// A named, disjoint address range inside a [`MemoryImage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub base: u64,
    pub len: u64,
}

impl Region {
    pub fn end(&self) -> u64 {
        self.base + self.len
    }
}

pub const DEFAULT_ALIGN: u64 = 128;

pub struct MemoryImage {
    bytes: Box<[AtomicU8]>,
    regions: Vec<Region>,
    top: u64,
}

impl std::fmt::Debug for MemoryImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryImage")
            .field("capacity", &self.bytes.len())
            .field("regions", &self.regions)
            .finish()
    }
}

impl MemoryImage {
    pub fn new(capacity: u64) -> Self {
        let bytes = (0..capacity).map(|_| AtomicU8::new(0)).collect::<Vec<_>>().into_boxed_slice();
        MemoryImage { bytes, regions: Vec::new(), top: 0 }
    }

    pub fn capacity(&self) -> u64 {
        self.bytes.len() as u64
    }

    /// Bump-allocate a named region; `alignment` must be a power of two.
    pub fn alloc_region(&mut self, name: &str, bytes: u64, alignment: u64) -> Result<u64, MemError> {
        let fail = |reason: String| MemError::Alloc { name: name.to_string(), bytes, reason };
        if !alignment.is_power_of_two() {
            return Err(fail(format!("alignment {alignment} is not a power of two")));
        }
        if self.regions.iter().any(|r| r.name == name) {
            return Err(fail("name already in use".into()));
        }
        let base = self.top.div_ceil(alignment) * alignment;
        let end = base.checked_add(bytes).ok_or_else(|| fail("address overflow".into()))?;
        if end > self.capacity() {
            return Err(fail(format!("needs {end} bytes, capacity is {}", self.capacity())));
        }
        self.regions.push(Region { name: name.to_string(), base, len: bytes });
        self.top = end;
        Ok(base)
    }

    pub fn region(&self, name: &str) -> Result<&Region, MemError> {
        self.regions.iter().find(|r| r.name == name).ok_or_else(|| MemError::NoRegion(name.into()))
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn check(&self, addr: u64, len: u64) -> Result<(), MemError> {
        match addr.checked_add(len) {
            Some(end) if end <= self.capacity() => Ok(()),
            _ => Err(MemError::Fault { addr, len, capacity: self.capacity() }),
        }
    }

    pub fn read(&self, addr: u64, out: &mut [u8]) -> Result<(), MemError> {
        self.check(addr, out.len() as u64)?;
        let src = &self.bytes[addr as usize..addr as usize + out.len()];
        for (o, b) in out.iter_mut().zip(src) {
            *o = b.load(Ordering::Relaxed);
        }
        Ok(())
    }

    pub fn write(&self, addr: u64, data: &[u8]) -> Result<(), MemError> {
        self.check(addr, data.len() as u64)?;
        let dst = &self.bytes[addr as usize..addr as usize + data.len()];
        for (b, &v) in dst.iter().zip(data) {
            b.store(v, Ordering::Relaxed);
        }
        Ok(())
    }

    pub fn read_vec(&self, addr: u64, len: u64) -> Result<Vec<u8>, MemError> {
        let mut v = vec![0u8; len as usize];
        self.read(addr, &mut v)?;
        Ok(v)
    }

    pub fn read_lanes<T: Lane>(&self, addr: u64, count: usize) -> Result<Vec<T>, MemError> {
        Ok(crate::dtype::decode_lanes(&self.read_vec(addr, (count * T::BYTES) as u64)?))
    }

    pub fn write_lanes<T: Lane>(&self, addr: u64, values: &[T]) -> Result<(), MemError> {
        self.write(addr, &crate::dtype::encode_lanes(values))
    }

    /// Bounds-checked simulated access: updates `hier` and returns the delta.
    pub fn access(&self, hier: &mut CacheHierarchy, addr: u64, len: u64, kind: AccessKind) -> Result<MemStats, MemError> {
        self.check(addr, len)?;
        Ok(hier.access(addr, len, kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_are_disjoint_and_aligned() {
        let mut m = MemoryImage::new(4096);
        let a = m.alloc_region("a", 100, 128).unwrap();
        let b = m.alloc_region("b", 100, 128).unwrap();
        assert_eq!(a % 128, 0);
        assert_eq!(b % 128, 0);
        assert!(a + 100 <= b);
        assert!(m.alloc_region("c", 8192, 128).is_err());
        assert!(m.alloc_region("a", 1, 1).is_err());
        assert!(m.alloc_region("d", 1, 3).is_err());
        assert_eq!(m.region("b").unwrap().base, b);
    }

    #[test]
    fn out_of_bounds_faults() {
        let m = MemoryImage::new(64);
        let mut buf = [0u8; 8];
        assert!(matches!(m.read(60, &mut buf), Err(MemError::Fault { .. })));
        let mut h = CacheHierarchy::default();
        assert!(m.access(&mut h, 0, 65, AccessKind::Read).is_err());
        assert_eq!(h.snapshot(), MemStats::default());
    }

    #[test]
    fn typed_roundtrip() {
        let m = MemoryImage::new(64);
        m.write_lanes(8, &[1.0f32, 2.0, 3.0]).unwrap();
        assert_eq!(m.read_lanes::<f32>(8, 3).unwrap(), vec![1.0, 2.0, 3.0]);
    }
}
