use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{InstId, Program};

/// Grid dimensions, PE resources and interconnect latencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub clusters: (u32, u32),
    pub domains_per_cluster: (u32, u32),
    pub pes_per_domain: (u32, u32),
    pub instructions_per_pe: u32,
    pub operand_queue_capacity: usize,
    pub fires_per_pe_per_cycle: u32,
    pub operand_deliveries_per_instruction_per_cycle: u32,
    pub intra_pod_latency: u64,
    pub intra_domain_latency: u64,
    pub intra_cluster_latency: u64,
    pub inter_cluster_latency: u64,
    /// Latency between any PE and the StoreBuffer, each way.
    pub store_buffer_latency: u64,
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            clusters: (2, 2),
            domains_per_cluster: (2, 2),
            pes_per_domain: (2, 4),
            instructions_per_pe: 8,
            operand_queue_capacity: 10_000_000,
            fires_per_pe_per_cycle: 1,
            operand_deliveries_per_instruction_per_cycle: 3,
            intra_pod_latency: 1,
            intra_domain_latency: 2,
            intra_cluster_latency: 3,
            inter_cluster_latency: 4,
            store_buffer_latency: 2,
        }
    }
}

const PES_PER_POD: u32 = 2;

impl Topology {
    pub fn domains(&self) -> u32 {
        self.domains_per_cluster.0 * self.domains_per_cluster.1
    }

    pub fn pes_in_domain(&self) -> u32 {
        self.pes_per_domain.0 * self.pes_per_domain.1
    }

    pub fn total_pes(&self) -> u32 {
        self.clusters.0 * self.clusters.1 * self.domains() * self.pes_in_domain()
    }

    pub fn capacity(&self) -> u64 {
        self.total_pes() as u64 * self.instructions_per_pe as u64
    }

    /// Checks that every count is at least one.
    pub fn check(&self) -> Result<(), PlacementError> {
        let counts = [
            self.clusters.0,
            self.clusters.1,
            self.domains_per_cluster.0,
            self.domains_per_cluster.1,
            self.pes_per_domain.0,
            self.pes_per_domain.1,
            self.instructions_per_pe,
            self.fires_per_pe_per_cycle,
            self.operand_deliveries_per_instruction_per_cycle,
        ];
        if counts.contains(&0) || self.operand_queue_capacity == 0 {
            return Err(PlacementError::BadTopology);
        }
        Ok(())
    }

    /// Hop latency between two PEs. PEs are numbered domain-major, so PE `p`
    /// sits in domain `p / pes_in_domain` and cluster `p / (pes_in_domain * domains)`.
    pub fn latency(&self, a: u32, b: u32) -> u64 {
        let per_domain = self.pes_in_domain();
        let per_cluster = per_domain * self.domains();
        if a / per_cluster != b / per_cluster {
            self.inter_cluster_latency
        } else if a / per_domain != b / per_domain {
            self.intra_cluster_latency
        } else if a / PES_PER_POD != b / PES_PER_POD {
            self.intra_domain_latency
        } else {
            self.intra_pod_latency
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlacementError {
    #[error("{needed} instructions do not fit in {capacity} PE slots")]
    CapacityExceeded { needed: usize, capacity: u64 },
    #[error("topology counts must all be at least 1")]
    BadTopology,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    /// `(pe, slot)` per instruction id.
    pub sites: Vec<(u32, u32)>,
}

impl Placement {
    pub fn pe(&self, inst: InstId) -> u32 {
        self.sites[inst as usize].0
    }
}

/// Round-robin in program order over PEs numbered domain by domain; the
/// instructions of a wave block are consecutive ids and so occupy
/// consecutive PEs.
pub fn place_instructions(p: &Program, t: &Topology) -> Result<Placement, PlacementError> {
    t.check()?;
    if p.len() as u64 > t.capacity() {
        return Err(PlacementError::CapacityExceeded { needed: p.len(), capacity: t.capacity() });
    }
    let pes = t.total_pes();
    let sites = (0..p.len() as u32).map(|i| (i % pes, i / pes)).collect();
    Ok(Placement { sites })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_kernel, parse_program, KernelKind, KernelParams};

    fn movs(n: usize) -> Program {
        let mut src = String::from("const 1 -> 0(0)\nwave 0\n");
        for i in 0..n - 1 {
            src.push_str(&format!("{i}: mov -> {}(0)\n", i + 1));
        }
        src.push_str(&format!("{}: memnop <.,1,.>\n", n - 1));
        parse_program(&src).unwrap()
    }

    fn eight_pes() -> Topology {
        Topology { clusters: (1, 1), domains_per_cluster: (1, 1), pes_per_domain: (2, 4), ..Default::default() }
    }

    #[test]
    fn round_robin_then_wrap() {
        let t = eight_pes();
        let p = place_instructions(&movs(8), &t).unwrap();
        assert_eq!(p.sites, (0..8).map(|i| (i, 0)).collect::<Vec<_>>());
        let p = place_instructions(&movs(9), &t).unwrap();
        assert_eq!(p.sites[8], (0, 1));
    }

    #[test]
    fn capacity_is_enforced() {
        let t = Topology { instructions_per_pe: 1, ..eight_pes() };
        assert_eq!(
            place_instructions(&movs(9), &t),
            Err(PlacementError::CapacityExceeded { needed: 9, capacity: 8 })
        );
    }

    #[test]
    fn default_latencies() {
        let t = Topology::default();
        assert_eq!(t.total_pes(), 128);
        assert_eq!(t.latency(0, 1), 1);
        assert_eq!(t.latency(0, 2), 2);
        assert_eq!(t.latency(0, 8), 3);
        assert_eq!(t.latency(0, 32), 4);
    }

    #[test]
    fn kernel_placement_is_stable() {
        let params = KernelParams { matrices: 2, dim: 2, ..Default::default() };
        let p = build_kernel(KernelKind::Matrix, &params).unwrap();
        let t = Topology::default();
        assert_eq!(place_instructions(&p, &t).unwrap(), place_instructions(&p, &t).unwrap());
    }
}
