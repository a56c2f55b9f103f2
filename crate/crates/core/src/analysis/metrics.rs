//! Block efficiency, MBSU and acceptance statistics over decode traces.

use serde::Serialize;

use crate::decode::DecodeTrace;
use crate::error::{Error, Result};

/// Mean of `accepted + 1` over all verification rounds of one trace.
pub fn block_efficiency(trace: &DecodeTrace) -> Result<f64> {
    block_efficiency_pooled(std::slice::from_ref(trace))
}

/// Mean of `accepted + 1` over the rounds of every trace.
pub fn block_efficiency_pooled(traces: &[DecodeTrace]) -> Result<f64> {
    let (rounds, emitted) = traces
        .iter()
        .flat_map(|t| &t.iterations)
        .fold((0usize, 0usize), |(r, e), it| (r + 1, e + it.accepted + 1));
    if rounds == 0 {
        return Err(Error::EmptyTrace);
    }
    Ok(emitted as f64 / rounds as f64)
}

/// `eta / (draft_length * r + 1)` for a relative draft cost `r`.
pub fn walltime_improvement(eta: f64, draft_length: usize, r: f64) -> f64 {
    eta / (draft_length as f64 * r + 1.0)
}

/// Memory-bound speed-up: walltime improvement with `r = draft_size / target_size`.
pub fn mbsu(eta: f64, draft_length: usize, draft_size: f64, target_size: f64) -> f64 {
    walltime_improvement(eta, draft_length, draft_size / target_size)
}

/// Fraction of acceptance tests (one per verified level) in which some
/// candidate was accepted. Zero when no test ran (AR).
pub fn acceptance_rate(traces: &[DecodeTrace]) -> f64 {
    let (acc, levels) = traces
        .iter()
        .flat_map(|t| &t.iterations)
        .fold((0usize, 0usize), |(a, l), it| (a + it.accepted, l + it.verified_levels));
    if levels == 0 {
        0.0
    } else {
        acc as f64 / levels as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub block_efficiency: f64,
    pub mbsu: f64,
    pub acceptance_rate: f64,
    /// Total target node evaluations.
    pub target_calls: usize,
    /// Verification rounds.
    pub rounds: usize,
    pub tokens_emitted: usize,
}

impl MetricsRecord {
    pub fn from_traces(traces: &[DecodeTrace], draft_length: usize, draft_size: f64, target_size: f64) -> Result<Self> {
        let eta = block_efficiency_pooled(traces)?;
        let its = || traces.iter().flat_map(|t| &t.iterations);
        Ok(Self {
            block_efficiency: eta,
            mbsu: mbsu(eta, draft_length, draft_size, target_size),
            acceptance_rate: acceptance_rate(traces),
            target_calls: its().map(|i| i.target_calls).sum(),
            rounds: its().count(),
            tokens_emitted: its().map(|i| i.emitted.len()).sum(),
        })
    }

    pub fn mean_target_calls(&self) -> f64 {
        self.target_calls as f64 / self.rounds as f64
    }
}
