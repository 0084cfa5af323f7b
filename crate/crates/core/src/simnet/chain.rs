//! Reduction chains: a master node starts the reduction, the payload is
//! relayed through every other ring member once and returns to the master.

use serde::{Deserialize, Serialize};

use crate::error::NetError;

/// Lane layout of one in-network reduction operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadMode {
    /// Three doubles per operation.
    #[serde(rename = "f64")]
    ThreeF64,
    /// Six 64-bit integers per operation.
    #[serde(rename = "u64")]
    SixU64,
    /// Six words, each carrying two biased 32-bit lanes.
    #[serde(rename = "i32x12")]
    PackedI32x12,
}

impl PayloadMode {
    pub const ALL: [PayloadMode; 3] = [PayloadMode::ThreeF64, PayloadMode::SixU64, PayloadMode::PackedI32x12];

    /// Hardware lanes per operation.
    pub fn lanes(self) -> usize {
        match self {
            PayloadMode::ThreeF64 => 3,
            PayloadMode::SixU64 | PayloadMode::PackedI32x12 => 6,
        }
    }

    /// Scalar values carried per operation.
    pub fn values_per_op(self) -> usize {
        match self {
            PayloadMode::ThreeF64 => 3,
            PayloadMode::SixU64 => 6,
            PayloadMode::PackedI32x12 => 12,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PayloadMode::ThreeF64 => "f64",
            PayloadMode::SixU64 => "u64",
            PayloadMode::PackedI32x12 => "i32x12",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Operations needed to reduce `values` scalars.
    pub fn ops_for(self, values: usize) -> usize {
        values.div_ceil(self.values_per_op())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChainPayload {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

impl ChainPayload {
    pub fn len(&self) -> usize {
        match self {
            ChainPayload::F64(v) => v.len(),
            ChainPayload::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes(&self) -> usize {
        8 * self.len()
    }

    pub fn into_f64(self) -> Option<Vec<f64>> {
        match self {
            ChainPayload::F64(v) => Some(v),
            ChainPayload::U64(_) => None,
        }
    }

    pub fn into_u64(self) -> Option<Vec<u64>> {
        match self {
            ChainPayload::U64(v) => Some(v),
            ChainPayload::F64(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    BitOr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionChain {
    pub master: usize,
    /// Ring members other than the master, in relay order.
    pub relay: Vec<usize>,
    pub mode: PayloadMode,
    pub(crate) in_flight: Option<ChainPayload>,
}

impl ReductionChain {
    /// Master first, then relay order; the order contributions are combined in.
    pub fn members(&self) -> Vec<usize> {
        std::iter::once(self.master).chain(self.relay.iter().copied()).collect()
    }

    pub fn ring_len(&self) -> usize {
        self.relay.len() + 1
    }

    /// Point-to-point hops of one traversal; a single-node chain needs none.
    pub fn hops(&self) -> usize {
        if self.relay.is_empty() {
            0
        } else {
            self.ring_len()
        }
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    /// Packed sums whose 32-bit lanes would overflow, counted exactly.
    pub(crate) fn lane_carries(&self, op: ReduceOp, contributions: &[ChainPayload]) -> u64 {
        if self.mode != PayloadMode::PackedI32x12 || op != ReduceOp::Sum {
            return 0;
        }
        let words: Vec<&Vec<u64>> = contributions
            .iter()
            .filter_map(|c| match c {
                ChainPayload::U64(v) => Some(v),
                ChainPayload::F64(_) => None,
            })
            .collect();
        let n = words.first().map_or(0, |w| w.len());
        let mut carries = 0;
        for i in 0..n {
            let lo: u128 = words.iter().map(|w| (w[i] & 0xFFFF_FFFF) as u128).sum();
            let hi: u128 = words.iter().map(|w| (w[i] >> 32) as u128).sum();
            carries += u64::from(lo >> 32 != 0) + u64::from(hi >> 32 != 0);
        }
        carries
    }

    pub(crate) fn combine(&self, op: ReduceOp, contributions: &[ChainPayload]) -> Result<ChainPayload, NetError> {
        if contributions.len() != self.ring_len() {
            return Err(NetError::Participation {
                expected: self.ring_len(),
                got: contributions.len(),
            });
        }
        let len = contributions[0].len();
        let capacity = self.mode.lanes();
        for c in contributions {
            if c.len() > capacity {
                return Err(NetError::OversizedPayload {
                    mode: self.mode.name(),
                    got: c.len(),
                    capacity,
                });
            }
            if c.len() != len {
                return Err(NetError::PayloadKind("contributions differ in length"));
            }
        }
        match (self.mode, &contributions[0]) {
            (PayloadMode::ThreeF64, ChainPayload::F64(first)) => {
                if op != ReduceOp::Sum {
                    return Err(NetError::PayloadKind("bitwise ops need integer lanes"));
                }
                let mut acc = first.clone();
                for c in &contributions[1..] {
                    let ChainPayload::F64(v) = c else {
                        return Err(NetError::PayloadKind(self.mode.name()));
                    };
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += *x;
                    }
                }
                Ok(ChainPayload::F64(acc))
            }
            (PayloadMode::SixU64 | PayloadMode::PackedI32x12, ChainPayload::U64(first)) => {
                let mut acc = first.clone();
                for c in &contributions[1..] {
                    let ChainPayload::U64(v) = c else {
                        return Err(NetError::PayloadKind(self.mode.name()));
                    };
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a = match op {
                            ReduceOp::Sum => a.wrapping_add(*x),
                            ReduceOp::BitOr => *a | *x,
                        };
                    }
                }
                Ok(ChainPayload::U64(acc))
            }
            _ => Err(NetError::PayloadKind(self.mode.name())),
        }
    }
}

/// Default per-node chain budget in one dimension.
pub const DEFAULT_CHAIN_LIMIT: usize = 24;

/// One chain per master; each relay list is the ring rotated to start after
/// its master.
pub fn configure_chains(
    ring: &[usize],
    masters: &[usize],
    chains_per_node_limit: usize,
    mode: PayloadMode,
) -> Result<Vec<ReductionChain>, NetError> {
    if ring.is_empty() {
        return Err(NetError::ChainConfig("ring has no members".into()));
    }
    let mut sorted = ring.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ring.len() {
        return Err(NetError::ChainConfig("ring members repeat".into()));
    }
    // every chain spans the whole ring, so each member joins every chain
    if masters.len() > chains_per_node_limit {
        return Err(NetError::ChainLimit {
            node: ring[0],
            requested: masters.len(),
            limit: chains_per_node_limit,
        });
    }
    masters
        .iter()
        .map(|&m| {
            let pos = ring
                .iter()
                .position(|&r| r == m)
                .ok_or_else(|| NetError::ChainConfig(format!("master {m} is not a ring member")))?;
            let relay = ring[pos + 1..].iter().chain(&ring[..pos]).copied().collect();
            Ok(ReductionChain {
                master: m,
                relay,
                mode,
                in_flight: None,
            })
        })
        .collect()
}
