use std::any::Any;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::chain::{ChainPayload, ReduceOp, ReductionChain};
use super::stats::{NetStats, PhaseStats};
use crate::error::NetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankId {
    pub node: usize,
    pub rank: usize,
}

impl RankId {
    pub const fn new(node: usize, rank: usize) -> Self {
        Self { node, rank }
    }
}

impl fmt::Display for RankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}r{}", self.node, self.rank)
    }
}

/// Per-hop constant plus per-byte cost, in simulated microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub hop: f64,
    pub per_byte: f64,
    /// Multiplier on `hop` for messages that stay inside one node.
    pub intra_node_factor: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        // a full six-lane reduction over a five-node chain costs ~1 unit
        Self {
            hop: 0.19,
            per_byte: 2.0e-4,
            intra_node_factor: 0.1,
        }
    }
}

impl LatencyModel {
    pub fn message(&self, intra_node: bool, bytes: usize) -> f64 {
        let hop = if intra_node { self.hop * self.intra_node_factor } else { self.hop };
        hop + bytes as f64 * self.per_byte
    }

    pub fn chain_op(&self, hops: usize, bytes: usize) -> f64 {
        hops as f64 * (self.hop + bytes as f64 * self.per_byte)
    }
}

struct Envelope {
    src: RankId,
    tag: String,
    body: Box<dyn Any + Send>,
}

/// Deterministic in-process interconnect. Delivery is FIFO per
/// `(source, tag)`, so results never depend on host scheduling.
pub struct Network {
    nodes: usize,
    ranks_per_node: usize,
    latency: LatencyModel,
    stats: NetStats,
    phase: String,
    mailboxes: BTreeMap<RankId, VecDeque<Envelope>>,
    chains: Vec<ReductionChain>,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("nodes", &self.nodes)
            .field("ranks_per_node", &self.ranks_per_node)
            .field("phase", &self.phase)
            .field("pending", &self.pending())
            .field("chains", &self.chains.len())
            .finish()
    }
}

impl Network {
    pub fn new(nodes: usize, ranks_per_node: usize, latency: LatencyModel) -> Self {
        Self {
            nodes,
            ranks_per_node: ranks_per_node.max(1),
            latency,
            stats: NetStats::default(),
            phase: "default".into(),
            mailboxes: BTreeMap::new(),
            chains: Vec::new(),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn ranks_per_node(&self) -> usize {
        self.ranks_per_node
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn stats(&self) -> &NetStats {
        &self.stats
    }

    pub fn set_phase(&mut self, phase: impl Into<String>) {
        self.phase = phase.into();
    }

    pub fn phase(&self) -> &str {
        &self.phase
    }

    pub fn node_ranks(&self, node: usize) -> Vec<RankId> {
        (0..self.ranks_per_node).map(|r| RankId::new(node, r)).collect()
    }

    /// Rank 0 of every node.
    pub fn node_leaders(&self) -> Vec<RankId> {
        (0..self.nodes).map(|n| RankId::new(n, 0)).collect()
    }

    fn check_rank(&self, r: RankId) -> Result<(), NetError> {
        if r.node >= self.nodes || r.rank >= self.ranks_per_node {
            return Err(NetError::Deadlock(format!("rank {r} does not exist")));
        }
        Ok(())
    }

    pub fn send<T: Any + Send>(&mut self, src: RankId, dst: RankId, tag: &str, body: T, bytes: usize) -> Result<(), NetError> {
        self.check_rank(src)?;
        self.check_rank(dst)?;
        let delta = PhaseStats {
            messages: 1,
            bytes: bytes as u64,
            sim_time: self.latency.message(src.node == dst.node, bytes),
            ..Default::default()
        };
        self.stats.record(&self.phase, delta, None);
        self.mailboxes.entry(dst).or_default().push_back(Envelope {
            src,
            tag: tag.to_string(),
            body: Box::new(body),
        });
        Ok(())
    }

    pub fn recv<T: Any>(&mut self, dst: RankId, src: RankId, tag: &str) -> Result<T, NetError> {
        let queue = self.mailboxes.entry(dst).or_default();
        let Some(pos) = queue.iter().position(|e| e.src == src && e.tag == tag) else {
            return Err(NetError::Deadlock(format!(
                "{dst} waits for '{tag}' from {src} in phase '{}', which was never sent",
                self.phase
            )));
        };
        let env = queue.remove(pos).expect("position is valid");
        env.body.downcast::<T>().map(|b| *b).map_err(|_| NetError::TypeMismatch {
            src: src.to_string(),
            dst: dst.to_string(),
            phase: self.phase.clone(),
        })
    }

    pub fn pending(&self) -> usize {
        self.mailboxes.values().map(VecDeque::len).sum()
    }

    /// Errors if any message was sent but never received.
    pub fn ensure_drained(&self) -> Result<(), NetError> {
        for (dst, q) in &self.mailboxes {
            if let Some(e) = q.front() {
                return Err(NetError::Deadlock(format!(
                    "{} undelivered message(s) for {dst}, first '{}' from {}",
                    q.len(),
                    e.tag,
                    e.src
                )));
            }
        }
        Ok(())
    }

    fn check_group<T>(&self, op: &str, group: &[RankId], items: &[T]) -> Result<(), NetError> {
        if items.len() != group.len() {
            let missing = group.get(items.len()).map(|r| r.to_string()).unwrap_or_else(|| "?".into());
            return Err(NetError::Deadlock(format!(
                "{op} over {} ranks got {} contributions; {missing} never joined",
                group.len(),
                items.len()
            )));
        }
        for &r in group {
            self.check_rank(r)?;
        }
        Ok(())
    }

    /// Every member ends up with the full vector in group order.
    pub fn allgather<T: Clone + Send + 'static>(
        &mut self,
        group: &[RankId],
        items: Vec<T>,
        bytes_per_item: usize,
    ) -> Result<Vec<T>, NetError> {
        self.check_group("allgather", group, &items)?;
        for (i, &src) in group.iter().enumerate() {
            for &dst in group {
                if dst != src {
                    self.send(src, dst, "allgather", items[i].clone(), bytes_per_item)?;
                }
            }
        }
        let mut views: Vec<Vec<T>> = Vec::with_capacity(group.len());
        for (me, &dst) in group.iter().enumerate() {
            let mut view = Vec::with_capacity(group.len());
            for (i, &src) in group.iter().enumerate() {
                if i == me {
                    view.push(items[i].clone());
                } else {
                    view.push(self.recv::<T>(dst, src, "allgather")?);
                }
            }
            views.push(view);
        }
        self.stats.record(
            &self.phase,
            PhaseStats {
                allgathers: 1,
                ..Default::default()
            },
            None,
        );
        Ok(views.swap_remove(0))
    }

    /// Collect one item per member at `root`, in group order.
    pub fn gather_to<T: Send + 'static>(
        &mut self,
        root: RankId,
        group: &[RankId],
        items: Vec<T>,
        bytes_per_item: usize,
    ) -> Result<Vec<T>, NetError> {
        self.check_group("gather", group, &items)?;
        if !group.contains(&root) {
            return Err(NetError::Deadlock(format!("gather root {root} is not in the group")));
        }
        let mut own = None;
        for (&src, item) in group.iter().zip(items) {
            if src == root {
                own = Some(item);
            } else {
                self.send(src, root, "gather", item, bytes_per_item)?;
            }
        }
        let mut own = own;
        group
            .iter()
            .map(|&src| {
                if src == root {
                    Ok(own.take().expect("root contributes once"))
                } else {
                    self.recv(root, src, "gather")
                }
            })
            .collect()
    }

    /// Deliver `items[i]` from `root` to `group[i]`.
    pub fn scatter_from<T: Send + 'static>(
        &mut self,
        root: RankId,
        group: &[RankId],
        items: Vec<T>,
        bytes_per_item: usize,
    ) -> Result<Vec<T>, NetError> {
        self.check_group("scatter", group, &items)?;
        if !group.contains(&root) {
            return Err(NetError::Deadlock(format!("scatter root {root} is not in the group")));
        }
        let mut own = None;
        for (&dst, item) in group.iter().zip(items) {
            if dst == root {
                own = Some(item);
            } else {
                self.send(root, dst, "scatter", item, bytes_per_item)?;
            }
        }
        let mut own = own;
        group
            .iter()
            .map(|&dst| {
                if dst == root {
                    Ok(own.take().expect("root receives once"))
                } else {
                    self.recv(dst, root, "scatter")
                }
            })
            .collect()
    }

    pub fn register_chains(&mut self, chains: Vec<ReductionChain>) -> Vec<usize> {
        let start = self.chains.len();
        self.chains.extend(chains);
        (start..self.chains.len()).collect()
    }

    pub fn chain(&self, id: usize) -> Result<&ReductionChain, NetError> {
        self.chains.get(id).ok_or(NetError::UnknownChain(id))
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Begin a reduction; contributions are given in `chain.members()` order.
    pub fn start_reduce(&mut self, id: usize, op: ReduceOp, contributions: &[ChainPayload]) -> Result<(), NetError> {
        let chain = self.chains.get(id).ok_or(NetError::UnknownChain(id))?;
        if chain.is_busy() {
            return Err(NetError::ChainBusy(id));
        }
        let result = chain.combine(op, contributions)?;
        let lane_carries = chain.lane_carries(op, contributions);
        let hops = chain.hops();
        let bytes = result.bytes();
        let delta = PhaseStats {
            reductions: 1,
            chain_hops: hops as u64,
            bytes: (bytes * hops) as u64,
            sim_time: self.latency.chain_op(hops, bytes),
            lane_carries,
            ..Default::default()
        };
        self.stats.record(&self.phase, delta, Some(id));
        self.chains[id].in_flight = Some(result);
        Ok(())
    }

    /// Deliver the in-flight result to the master and free the chain.
    pub fn finish_reduce(&mut self, id: usize) -> Result<ChainPayload, NetError> {
        let chain = self.chains.get_mut(id).ok_or(NetError::UnknownChain(id))?;
        chain.in_flight.take().ok_or(NetError::ChainIdle(id))
    }

    pub fn chain_reduce(&mut self, id: usize, op: ReduceOp, contributions: &[ChainPayload]) -> Result<ChainPayload, NetError> {
        self.start_reduce(id, op, contributions)?;
        self.finish_reduce(id)
    }
}
