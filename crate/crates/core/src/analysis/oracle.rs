//! Exact enumeration oracles.
//!
//! These work on plain probability vectors and share no code with the
//! samplers and verifiers they are used to check.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::prob::{Distribution, Token};

pub const MAX_ENUM_VOCAB: usize = 8;
pub const MAX_ENUM_CANDIDATES: usize = 4;
pub const MAX_ENUM_SEQUENCES: usize = 100_000;

const EMPTY_MASS: f64 = 1e-12;

fn positive_part_normalized(q: &[f64], p: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = q.iter().zip(p).map(|(a, b)| (a - b).max(0.0)).collect();
    let s: f64 = r.iter().sum();
    if s < EMPTY_MASS {
        q.to_vec()
    } else {
        r.into_iter().map(|x| x / s).collect()
    }
}

fn without(p: &[f64], x: Token) -> Vec<f64> {
    let rest: f64 = p.iter().enumerate().filter(|&(i, _)| i != x).map(|(_, v)| v).sum();
    p.iter()
        .enumerate()
        .map(|(i, &v)| if i == x { 0.0 } else { v / rest })
        .collect()
}

/// Exact output law of recursive rejection sampling with `k` candidates
/// drawn without replacement from `p`, plus the probability that some
/// candidate is accepted (one minus the mass that reaches the final residual).
pub fn rrs_exact_outcome(p: &Distribution, q: &Distribution, k: usize) -> Result<(Vec<f64>, f64)> {
    let v = p.vocab_size();
    if q.vocab_size() != v {
        return Err(Error::SupportMismatch(format!("vocab sizes {v} and {}", q.vocab_size())));
    }
    if v > MAX_ENUM_VOCAB || k > MAX_ENUM_CANDIDATES {
        return Err(Error::TooLargeToEnumerate {
            what: format!("V={v}, K={k} (limits V<={MAX_ENUM_VOCAB}, K<={MAX_ENUM_CANDIDATES})"),
        });
    }
    if k == 0 || k > p.support_size() {
        return Err(Error::SupportMismatch(format!(
            "K={k} must be in 1..={} (draft support)",
            p.support_size()
        )));
    }
    let mut law = vec![0.0; v];
    let mut residual_mass = 0.0;
    walk(&p.probs(), &q.probs(), 1.0, k, &mut law, &mut residual_mass);
    Ok((law, 1.0 - residual_mass))
}

fn walk(p: &[f64], q: &[f64], mass: f64, left: usize, law: &mut [f64], residual_mass: &mut f64) {
    let next_q = positive_part_normalized(q, p);
    for x in 0..p.len() {
        if p[x] == 0.0 {
            continue;
        }
        let reach = mass * p[x];
        let theta = (q[x] / p[x]).min(1.0);
        law[x] += reach * theta;
        let reject = reach * (1.0 - theta);
        if reject == 0.0 {
            continue;
        }
        if left == 1 {
            *residual_mass += reject;
            for (l, r) in law.iter_mut().zip(&next_q) {
                *l += reject * r;
            }
        } else {
            walk(&without(p, x), &next_q, reject, left - 1, law, residual_mass);
        }
    }
}

/// Exact output law of recursive rejection sampling.
pub fn rrs_exact_law(p: &Distribution, q: &Distribution, k: usize) -> Result<Vec<f64>> {
    rrs_exact_outcome(p, q, k).map(|(law, _)| law)
}

/// Probability that sequential sampling without replacement from `p` yields
/// exactly `tokens` in order.
pub fn plackett_luce_prob(p: &Distribution, tokens: &[Token]) -> f64 {
    let mut used = 0.0;
    let mut prob = 1.0;
    for &x in tokens {
        let px = p.prob(x);
        prob *= px / (1.0 - used);
        used += px;
    }
    prob
}

/// Acceptance probability of two-stage independent multi-draft
/// verification: `k` i.i.d. drafts from `p`, each tested against the running
/// residual of `q`.
pub fn multi_round_exact_acceptance(p: &Distribution, q: &Distribution, k: usize) -> f64 {
    fn go(p: &[f64], q: &[f64], left: usize) -> f64 {
        if left == 0 {
            return 0.0;
        }
        let next_q = positive_part_normalized(q, p);
        let rest = go(p, &next_q, left - 1);
        (0..p.len())
            .filter(|&x| p[x] > 0.0)
            .map(|x| {
                let theta = (q[x] / p[x]).min(1.0);
                p[x] * (theta + (1.0 - theta) * rest)
            })
            .sum()
    }
    go(&p.probs(), &q.probs(), k)
}

/// Acceptance probability of K-SEQ with `k` i.i.d. drafts, summed over every
/// draft tuple.
pub fn kseq_exact_acceptance(p: &Distribution, q: &Distribution, gamma: f64, k: usize) -> f64 {
    let pp = p.probs();
    let qq = q.probs();
    let v = pp.len();
    let mut total = 0.0;
    let mut idx = vec![0usize; k];
    loop {
        let mut weight = 1.0;
        let mut all_reject = 1.0;
        for &x in &idx {
            weight *= pp[x];
            if pp[x] > 0.0 {
                all_reject *= 1.0 - (qq[x] / (gamma * pp[x])).min(1.0);
            }
        }
        total += weight * (1.0 - all_reject);
        let mut pos = 0;
        loop {
            if pos == k {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < v {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact law of the next `length` tokens generated autoregressively after
/// `prompt`. Every one of the `V^length` sequences is present.
pub fn exact_sequence_distribution<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &[Token],
    length: usize,
) -> Result<BTreeMap<Vec<Token>, f64>> {
    let v = model.vocab_size();
    let count = (v as f64).powi(length as i32);
    if count > MAX_ENUM_SEQUENCES as f64 {
        return Err(Error::TooLargeToEnumerate {
            what: format!("{v}^{length} sequences (limit {MAX_ENUM_SEQUENCES})"),
        });
    }
    let mut out = BTreeMap::new();
    let mut frontier: Vec<(Vec<Token>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..length {
        let mut next = Vec::with_capacity(frontier.len() * v);
        for (seq, prob) in frontier {
            let mut ctx = prompt.to_vec();
            ctx.extend_from_slice(&seq);
            let d = model.next_distribution(&ctx)?;
            for x in 0..v {
                let mut s = seq.clone();
                s.push(x);
                next.push((s, prob * d.prob(x)));
            }
        }
        frontier = next;
    }
    out.extend(frontier);
    Ok(out)
}
