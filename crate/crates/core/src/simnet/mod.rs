//! Simulated interconnect: point-to-point messages, collectives and
//! in-network reduction chains, all replayed deterministically.

pub mod chain;
pub mod network;
pub mod quant;
pub mod stats;

pub use chain::{configure_chains, ChainPayload, PayloadMode, ReduceOp, ReductionChain, DEFAULT_CHAIN_LIMIT};
pub use network::{LatencyModel, Network, RankId};
pub use quant::{quantize_pack, sum_words, unpack_dequantize, Fixed64Spec, QuantSpec};
pub use stats::{NetStats, PhaseStats};
