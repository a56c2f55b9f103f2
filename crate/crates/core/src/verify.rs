//! Acceptance and rejection procedures.
//!
//! [`recursive_rejection_sampling`] verifies an ordered list of candidates
//! drawn without replacement from a single draft distribution. Candidate `k`
//! is accepted with probability `min(1, q_k(x) / p_k(x))`, where `p_k` is the
//! draft restricted to tokens not yet proposed and `q_k` is the target with
//! every earlier rejection folded in as a residual `Norm[(q_{k-1} - p_{k-1})^+]`.
//! If every candidate is rejected the emitted token is drawn from the last
//! residual. The emitted token is distributed exactly as `q`.
//!
//! [`verify_tree`] applies that level by level down a draft tree; [`sd_verify`]
//! is the single-chain special case and [`kseq_verify`] / [`verify_comb`]
//! implement K-SEQ over i.i.d. candidates.

use crate::error::{Error, Result};
use crate::prob::{normalize, sample_categorical, Distribution, Token};
use crate::rng::RngStream;
use crate::tree::{DraftTree, TreeKind};

/// Residual mass below which a residual is treated as empty.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// Ordered candidates drawn without replacement from `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    tokens: Vec<Token>,
    source: Distribution,
}

impl CandidateList {
    pub fn new(tokens: Vec<Token>, source: Distribution) -> Result<Self> {
        for (i, &t) in tokens.iter().enumerate() {
            if t >= source.vocab_size() {
                return Err(Error::TokenOutOfRange {
                    token: t,
                    vocab_size: source.vocab_size(),
                });
            }
            if !source.in_support(t) {
                return Err(Error::SupportMismatch(format!(
                    "candidate {t} has zero draft probability"
                )));
            }
            if tokens[..i].contains(&t) {
                return Err(Error::SupportMismatch(format!("candidate {t} repeated")));
            }
        }
        Ok(Self { tokens, source })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn source(&self) -> &Distribution {
        &self.source
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub accepted_index: Option<usize>,
    pub emitted_token: Token,
    pub residual_used: bool,
}

impl VerifyOutcome {
    fn accepted(index: usize, token: Token) -> Self {
        Self {
            accepted_index: Some(index),
            emitted_token: token,
            residual_used: false,
        }
    }

    fn residual(token: Token) -> Self {
        Self {
            accepted_index: None,
            emitted_token: token,
            residual_used: true,
        }
    }
}

/// `Norm[(q - p)^+]`, or `q` itself when the positive part has no mass.
pub fn residual_distribution(q: &Distribution, p: &Distribution) -> Distribution {
    assert_eq!(q.vocab_size(), p.vocab_size(), "residual of mismatched distributions");
    let diff: Vec<f64> = q
        .log_probs()
        .iter()
        .zip(p.log_probs())
        .map(|(lq, lp)| (lq.exp() - lp.exp()).max(0.0))
        .collect();
    if diff.iter().sum::<f64>() < RESIDUAL_EPS {
        return q.clone();
    }
    normalize(&diff).expect("positive residual mass")
}

/// Remove `removed` from the support of `p` and renormalize.
pub fn wor_restrict(p: &Distribution, removed: &[Token]) -> Result<Distribution> {
    if removed.is_empty() {
        return Ok(p.clone());
    }
    let mut lw = p.log_probs().to_vec();
    for &t in removed {
        if t >= lw.len() {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: lw.len(),
            });
        }
        lw[t] = f64::NEG_INFINITY;
    }
    Distribution::from_log_weights(lw).map_err(|_| Error::EmptySupport)
}

/// `min(1, exp(lq - lp))`; exactly one when the two agree.
fn threshold(lq: f64, lp: f64) -> f64 {
    if lq == f64::NEG_INFINITY {
        return 0.0;
    }
    (lq - lp).exp().min(1.0)
}

/// Recursive rejection sampling over a without-replacement candidate list.
pub fn recursive_rejection_sampling(
    cands: &CandidateList,
    q: &Distribution,
    rng: &mut RngStream,
) -> VerifyOutcome {
    let mut target = q.clone();
    let mut draft = cands.source.clone();
    let k = cands.tokens.len();
    for (i, &x) in cands.tokens.iter().enumerate() {
        if rng.unit() < threshold(target.log_prob(x), draft.log_prob(x)) {
            return VerifyOutcome::accepted(i, x);
        }
        target = residual_distribution(&target, &draft);
        if i + 1 < k {
            draft = wor_restrict(&draft, &[x]).expect("later candidates remain in the support");
        }
    }
    VerifyOutcome::residual(sample_categorical(&target, rng))
}

/// Independent multi-draft verification: every candidate is an i.i.d. draw
/// from the same `p`, tested against the running residual of `q`.
pub fn multi_round_verify(cands: &[Token], p: &Distribution, q: &Distribution, rng: &mut RngStream) -> VerifyOutcome {
    let mut target = q.clone();
    for (i, &x) in cands.iter().enumerate() {
        if rng.unit() < threshold(target.log_prob(x), p.log_prob(x)) {
            return VerifyOutcome::accepted(i, x);
        }
        target = residual_distribution(&target, p);
    }
    VerifyOutcome::residual(sample_categorical(&target, rng))
}

/// Target distributions for the root context and every tree node (flat order).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEvals {
    pub root: Distribution,
    pub nodes: Vec<Distribution>,
}

/// Result of one verification round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeVerdict {
    pub accepted_tokens: Vec<Token>,
    pub accepted_flat_node_ids: Vec<usize>,
    /// Token emitted after the accepted drafts (residual or fresh target draw).
    pub terminal_token: Token,
    /// Candidates examined at each level that ran a test.
    pub candidate_counts: Vec<usize>,
    pub residual_used: bool,
}

impl TreeVerdict {
    pub fn emitted(&self) -> Vec<Token> {
        let mut out = self.accepted_tokens.clone();
        out.push(self.terminal_token);
        out
    }
}

/// Walk the tree from the root, running recursive rejection sampling on the
/// children of the most recently accepted node.
pub fn verify_tree(tree: &DraftTree, evals: &TargetEvals, rng: &mut RngStream) -> TreeVerdict {
    let mut verdict = TreeVerdict::default();
    let mut parent = 0usize;
    let mut q_cur = &evals.root;
    for (l, level) in tree.levels().iter().enumerate() {
        let kids: Vec<usize> = level.children_of(parent).collect();
        if kids.is_empty() {
            break;
        }
        let cands = CandidateList::new(
            kids.iter().map(|&i| level.tokens[i]).collect(),
            level.parent_dists[parent].clone(),
        )
        .expect("tree children are distinct draft samples");
        verdict.candidate_counts.push(kids.len());
        let outcome = recursive_rejection_sampling(&cands, q_cur, rng);
        match outcome.accepted_index {
            Some(j) => {
                let node = kids[j];
                verdict.accepted_tokens.push(level.tokens[node]);
                verdict.accepted_flat_node_ids.push(level.flat_node_ids[node]);
                q_cur = &evals.nodes[tree.level_offset(l) + node];
                parent = node;
            }
            None => {
                verdict.terminal_token = outcome.emitted_token;
                verdict.residual_used = true;
                return verdict;
            }
        }
    }
    verdict.terminal_token = sample_categorical(q_cur, rng);
    verdict
}

/// Single-sequence verification.
///
/// `draft_dists[i]` and `target_dists[i]` are the laws at the context ending
/// just before `chain[i]`; `target_dists` has one extra entry for the context
/// after the full chain. Flat ids are reported relative to `first_flat_id`.
pub fn sd_verify(
    chain: &[Token],
    draft_dists: &[Distribution],
    target_dists: &[Distribution],
    first_flat_id: usize,
    rng: &mut RngStream,
) -> TreeVerdict {
    assert_eq!(chain.len(), draft_dists.len());
    assert_eq!(chain.len() + 1, target_dists.len());
    let mut verdict = TreeVerdict::default();
    for (i, &x) in chain.iter().enumerate() {
        let (p, q) = (&draft_dists[i], &target_dists[i]);
        verdict.candidate_counts.push(1);
        if rng.unit() < threshold(q.log_prob(x), p.log_prob(x)) {
            verdict.accepted_tokens.push(x);
            verdict.accepted_flat_node_ids.push(first_flat_id + i);
        } else {
            verdict.terminal_token = sample_categorical(&residual_distribution(q, p), rng);
            verdict.residual_used = true;
            return verdict;
        }
    }
    verdict.terminal_token = sample_categorical(&target_dists[chain.len()], rng);
    verdict
}

/// Unnormalized K-SEQ residual weights
/// `q - min(p, q/gamma) * (1 - (1 - beta)^k) / beta`.
pub fn kseq_residual_weights(p: &Distribution, q: &Distribution, gamma: f64, k: usize) -> Vec<f64> {
    let pp = p.probs();
    let qq = q.probs();
    let overlap: Vec<f64> = pp.iter().zip(&qq).map(|(a, b)| a.min(b / gamma)).collect();
    let beta: f64 = overlap.iter().sum();
    let factor = if beta > 1e-300 {
        (1.0 - (1.0 - beta).powi(k as i32)) / beta
    } else {
        k as f64
    };
    qq.iter().zip(&overlap).map(|(b, m)| b - m * factor).collect()
}

/// Whether the K-SEQ residual weights are non-negative (to `-RESIDUAL_EPS`).
/// The output law equals `q` exactly only in that case; `gamma = k` always
/// qualifies, while `gamma = 1` with `k >= 2` generally does not.
pub fn kseq_residual_is_valid(p: &Distribution, q: &Distribution, gamma: f64, k: usize) -> bool {
    kseq_residual_weights(p, q, gamma, k)
        .iter()
        .all(|&w| w >= -RESIDUAL_EPS)
}

/// K-SEQ over i.i.d. candidates from `p`. Negative residual weights (see
/// [`kseq_residual_is_valid`]) are clipped to zero.
pub fn kseq_verify(
    cands: &[Token],
    p: &Distribution,
    q: &Distribution,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<VerifyOutcome> {
    let k = cands.len();
    if k == 0 || !(gamma >= 1.0 && gamma <= k as f64) {
        return Err(Error::GammaOutOfRange { gamma, k });
    }
    for (i, &x) in cands.iter().enumerate() {
        let theta = (q.prob(x) / (gamma * p.prob(x))).min(1.0);
        if rng.unit() < theta {
            return Ok(VerifyOutcome::accepted(i, x));
        }
    }
    let weights: Vec<f64> = kseq_residual_weights(p, q, gamma, k)
        .into_iter()
        .map(|w| w.max(0.0))
        .collect();
    let residual = if weights.iter().sum::<f64>() < RESIDUAL_EPS {
        q.clone()
    } else {
        normalize(&weights)?
    };
    Ok(VerifyOutcome::residual(sample_categorical(&residual, rng)))
}

/// SpecTr-style verification of a comb: K-SEQ over the first tokens of all
/// chains, then single-candidate rejection down the selected chain.
pub fn verify_comb(
    tree: &DraftTree,
    evals: &TargetEvals,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<TreeVerdict> {
    if tree.kind() != TreeKind::Comb {
        return Err(Error::InvalidConfig("verify_comb needs a comb tree".into()));
    }
    let mut verdict = TreeVerdict::default();
    let Some(first) = tree.levels().first() else {
        verdict.terminal_token = sample_categorical(&evals.root, rng);
        return Ok(verdict);
    };
    verdict.candidate_counts.push(first.len());
    let outcome = kseq_verify(&first.tokens, &first.parent_dists[0], &evals.root, gamma, rng)?;
    let Some(mut node) = outcome.accepted_index else {
        verdict.terminal_token = outcome.emitted_token;
        verdict.residual_used = true;
        return Ok(verdict);
    };
    verdict.accepted_tokens.push(first.tokens[node]);
    verdict.accepted_flat_node_ids.push(first.flat_node_ids[node]);
    let mut q_cur = &evals.nodes[node];
    for (l, level) in tree.levels().iter().enumerate().skip(1) {
        let child = level
            .children_of(node)
            .next()
            .expect("every comb node has one child");
        let x = level.tokens[child];
        let p = &level.parent_dists[node];
        verdict.candidate_counts.push(1);
        if rng.unit() < threshold(q_cur.log_prob(x), p.log_prob(x)) {
            verdict.accepted_tokens.push(x);
            verdict.accepted_flat_node_ids.push(level.flat_node_ids[child]);
            q_cur = &evals.nodes[tree.level_offset(l) + child];
            node = child;
        } else {
            verdict.terminal_token = sample_categorical(&residual_distribution(q_cur, p), rng);
            verdict.residual_used = true;
            return Ok(verdict);
        }
    }
    verdict.terminal_token = sample_categorical(q_cur, rng);
    Ok(verdict)
}
