//! Two-candidate acceptance rates for Bernoulli draft/target pairs.
//!
//! The draft puts mass `p` on token 1 and the target mass `q`. For each cell
//! the analytic acceptance (probability that some candidate is accepted) is
//! computed by enumeration, and optionally confirmed by running the actual
//! verifier.

use serde::Serialize;

use crate::analysis::oracle::{kseq_exact_acceptance, multi_round_exact_acceptance, rrs_exact_outcome};
use crate::analysis::stats::sharded_counts;
use crate::error::{Error, Result};
use crate::prob::{gumbel_top_k, normalize, sample_categorical, Distribution};
use crate::verify::{kseq_verify, multi_round_verify, recursive_rejection_sampling, CandidateList};

/// Candidates per round.
pub const FIGURE1_K: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "multi-round")]
    MultiRound,
    #[serde(rename = "k-seq")]
    KSeq,
    #[serde(rename = "rrs")]
    Rrs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MultiRound => "multi-round",
            Method::KSeq => "k-seq",
            Method::Rrs => "rrs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure1Row {
    pub p: f64,
    pub q: f64,
    pub method: Method,
    pub gamma: Option<f64>,
    pub acceptance_analytic: f64,
    pub acceptance_empirical: Option<f64>,
    pub trials: usize,
}

impl Figure1Row {
    /// Binomial standard error of the empirical rate at the analytic value.
    pub fn std_error(&self) -> f64 {
        let a = self.acceptance_analytic;
        (a * (1.0 - a) / self.trials.max(1) as f64).sqrt()
    }
}

fn bernoulli(p: f64) -> Result<Distribution> {
    normalize(&[1.0 - p, p])
}

/// Acceptance rates on the grid `ps × qs` for multi-round i.i.d. drafting,
/// K-SEQ at each `gamma`, and recursive rejection sampling. `trials = 0`
/// skips the empirical column.
pub fn figure1_curves(ps: &[f64], qs: &[f64], gammas: &[f64], trials: usize, seed: u64) -> Result<Vec<Figure1Row>> {
    if let Some(g) = gammas.iter().find(|&&g| !(1.0..=FIGURE1_K as f64).contains(&g)) {
        return Err(Error::GammaOutOfRange { gamma: *g, k: FIGURE1_K });
    }
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &pv in ps {
        for &qv in qs {
            let p = bernoulli(pv)?;
            let q = bernoulli(qv)?;
            let mut slot = 0u64;
            let mut stream_base = || {
                slot += 1;
                (cell << 24) | (slot << 16)
            };
            let mut push = |method, gamma, analytic, empirical: Option<f64>| {
                rows.push(Figure1Row {
                    p: pv,
                    q: qv,
                    method,
                    gamma,
                    acceptance_analytic: analytic,
                    acceptance_empirical: empirical,
                    trials,
                })
            };
            let rate = |counts: Vec<u64>| (trials > 0).then(|| counts[1] as f64 / trials as f64);

            let analytic = multi_round_exact_acceptance(&p, &q, FIGURE1_K);
            let emp = rate(sharded_counts(seed, stream_base(), trials, 2, |rng| {
                let cands: Vec<_> = (0..FIGURE1_K).map(|_| sample_categorical(&p, rng)).collect();
                multi_round_verify(&cands, &p, &q, rng).accepted_index.is_some() as usize
            }));
            push(Method::MultiRound, None, analytic, emp);

            for &gamma in gammas {
                let analytic = kseq_exact_acceptance(&p, &q, gamma, FIGURE1_K);
                let emp = rate(sharded_counts(seed, stream_base(), trials, 2, |rng| {
                    let cands: Vec<_> = (0..FIGURE1_K).map(|_| sample_categorical(&p, rng)).collect();
                    let o = kseq_verify(&cands, &p, &q, gamma, rng).expect("gamma checked above");
                    o.accepted_index.is_some() as usize
                }));
                push(Method::KSeq, Some(gamma), analytic, emp);
            }

            // A point-mass draft cannot supply two distinct candidates.
            let k = FIGURE1_K.min(p.support_size());
            let (_, analytic) = rrs_exact_outcome(&p, &q, k)?;
            let emp = rate(sharded_counts(seed, stream_base(), trials, 2, |rng| {
                let tokens = gumbel_top_k(&p, k, rng).into_iter().map(|(t, _)| t).collect();
                let cands = CandidateList::new(tokens, p.clone()).expect("distinct draft samples");
                recursive_rejection_sampling(&cands, &q, rng).accepted_index.is_some() as usize
            }));
            push(Method::Rrs, None, analytic, emp);
            cell += 1;
        }
    }
    Ok(rows)
}

/// `0.05, 0.15, ..., 0.95`.
pub fn default_grid() -> Vec<f64> {
    (0..10).map(|i| (2 * i + 1) as f64 / 20.0).collect()
}
