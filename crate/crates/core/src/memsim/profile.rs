//! Hardware profile file: simulated L2/TLB geometry, working-set threshold
//! and unit count, stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CacheConfig, MemError, TlbConfig};
use crate::tiling::HardwareProfile;

/// Contents of a hardware profile file. Every field is optional in the file;
/// missing ones fall back to the defaults below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemProfile {
    pub svl_bits: usize,
    pub l2_capacity_bytes: u64,
    pub l2_line_bytes: u64,
    pub l2_associativity: usize,
    pub tlb_entries: usize,
    pub page_bytes: u64,
    /// Effective cacheable working set used by the tiling planner. Kept
    /// independent of `l2_capacity_bytes`.
    pub working_set_bytes: u64,
    pub units: usize,
}

impl Default for SystemProfile {
    fn default() -> Self {
        SystemProfile {
            svl_bits: 512,
            l2_capacity_bytes: 16 << 20,
            l2_line_bytes: 128,
            l2_associativity: 16,
            tlb_entries: 256,
            page_bytes: 16 << 10,
            working_set_bytes: 8 << 20,
            units: 2,
        }
    }
}

impl SystemProfile {
    pub fn from_toml(text: &str) -> Result<Self, MemError> {
        let p: SystemProfile = toml::from_str(text).map_err(|e| MemError::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn load(path: &Path) -> Result<Self, MemError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MemError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), MemError> {
        self.cache_config()?;
        self.tlb_config()?;
        if self.svl_bits < 128 || !self.svl_bits.is_power_of_two() {
            return Err(MemError::Config(format!("svl_bits {} must be a power of two >= 128", self.svl_bits)));
        }
        if self.units == 0 || self.working_set_bytes == 0 {
            return Err(MemError::Config("units and working_set_bytes must be positive".into()));
        }
        Ok(())
    }

    pub fn cache_config(&self) -> Result<CacheConfig, MemError> {
        CacheConfig::new(self.l2_capacity_bytes, self.l2_line_bytes, self.l2_associativity)
    }

    pub fn tlb_config(&self) -> Result<TlbConfig, MemError> {
        TlbConfig::new(self.tlb_entries, self.page_bytes)
    }

    /// Planner view of this profile for a given element size.
    pub fn hardware_profile(&self, dtype_size_bytes: usize) -> HardwareProfile {
        HardwareProfile {
            l2_budget_bytes: self.working_set_bytes,
            tlb_entries: self.tlb_entries,
            page_bytes: self.page_bytes,
            dtype_size_bytes,
            svl_bits: self.svl_bits,
        }
    }
}
