use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub messages: u64,
    pub bytes: u64,
    pub reductions: u64,
    pub chain_hops: u64,
    pub allgathers: u64,
    /// Packed-lane sums that reached 2^32, audited in 128-bit arithmetic.
    pub lane_carries: u64,
    /// Simulated network time charged to this phase.
    pub sim_time: f64,
}

impl PhaseStats {
    fn add(&mut self, other: &PhaseStats) {
        self.messages += other.messages;
        self.bytes += other.bytes;
        self.reductions += other.reductions;
        self.chain_hops += other.chain_hops;
        self.allgathers += other.allgathers;
        self.lane_carries += other.lane_carries;
        self.sim_time += other.sim_time;
    }
}

/// Counters accumulated by the simulated network; monotone within a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetStats {
    pub totals: PhaseStats,
    /// Reduction operations issued per chain id.
    pub per_chain: BTreeMap<usize, u64>,
    pub phases: BTreeMap<String, PhaseStats>,
}

impl NetStats {
    pub(crate) fn record(&mut self, phase: &str, delta: PhaseStats, chain: Option<usize>) {
        self.totals.add(&delta);
        if let Some(c) = chain {
            *self.per_chain.entry(c).or_default() += delta.reductions;
        }
        self.phases.entry(phase.to_string()).or_default().add(&delta);
    }

    pub fn phase(&self, name: &str) -> PhaseStats {
        self.phases.get(name).cloned().unwrap_or_default()
    }

    /// Sum over all phases whose name starts with `prefix`.
    pub fn phase_prefix(&self, prefix: &str) -> PhaseStats {
        let mut out = PhaseStats::default();
        for (_, p) in self.phases.iter().filter(|(k, _)| k.starts_with(prefix)) {
            out.add(p);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("NetStats serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,messages,bytes,reductions,chain_hops,allgathers,lane_carries,sim_time\n");
        let total = "total".to_string();
        let rows = self.phases.iter().chain(std::iter::once((&total, &self.totals)));
        for (name, p) in rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.9e}",
                name, p.messages, p.bytes, p.reductions, p.chain_hops, p.allgathers, p.lane_carries, p.sim_time
            );
        }
        out
    }

    /// True if every counter of `self` is at least the one in `earlier`.
    pub fn dominates(&self, earlier: &NetStats) -> bool {
        let ge = |a: &PhaseStats, b: &PhaseStats| {
            a.messages >= b.messages
                && a.bytes >= b.bytes
                && a.reductions >= b.reductions
                && a.chain_hops >= b.chain_hops
                && a.allgathers >= b.allgathers
                && a.sim_time >= b.sim_time
        };
        ge(&self.totals, &earlier.totals)
            && earlier.per_chain.iter().all(|(k, v)| self.per_chain.get(k).is_some_and(|x| x >= v))
            && earlier.phases.iter().all(|(k, v)| self.phases.get(k).is_some_and(|x| ge(x, v)))
    }
}
