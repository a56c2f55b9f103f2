//! Log-space finite distributions and the Gumbel machinery built on them.
//!
//! A [`Distribution`] is a normalized vector of log-probabilities over a
//! vocabulary of `V` tokens. Filtered tokens carry `f64::NEG_INFINITY`; that
//! is the only non-finite value a distribution may hold.
//!
//! Perturbing log-probabilities with i.i.d. standard Gumbel noise and taking
//! the top `k` indices yields an ordered sample without replacement whose
//! law is Plackett-Luce. Stochastic beam search additionally bounds child
//! scores by the parent's score with [`truncated_transform`].

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub type Token = usize;

/// Allowed drift of `sum(exp(log_probs))` away from one.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    log_probs: Vec<f64>,
}

impl Distribution {
    /// Validates the invariants: no NaN, no `+inf`, at least one finite
    /// entry, and total mass within [`NORMALIZATION_TOL`] of one.
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self> {
        if log_probs.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::InvalidWeights);
        }
        if !log_probs.iter().any(|x| x.is_finite()) {
            return Err(Error::AllZeroMass);
        }
        let mass: f64 = log_probs.iter().map(|x| x.exp()).sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::SupportMismatch(format!(
                "log-probabilities sum to {mass} in probability space"
            )));
        }
        Ok(Self { log_probs })
    }

    /// Normalizes arbitrary log-weights (entries may be `-inf`).
    pub fn from_log_weights(mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::InvalidWeights);
        }
        let lse = log_sum_exp(&log_weights);
        if lse == f64::NEG_INFINITY {
            return Err(Error::AllZeroMass);
        }
        for x in &mut log_weights {
            if x.is_finite() {
                *x -= lse;
            }
        }
        Ok(Self {
            log_probs: log_weights,
        })
    }

    pub fn uniform(vocab_size: usize) -> Self {
        assert!(vocab_size > 0, "uniform distribution needs a vocabulary");
        let lp = -(vocab_size as f64).ln();
        Self {
            log_probs: vec![lp; vocab_size],
        }
    }

    pub fn point_mass(vocab_size: usize, token: Token) -> Self {
        assert!(token < vocab_size, "token {token} >= vocab {vocab_size}");
        let mut log_probs = vec![f64::NEG_INFINITY; vocab_size];
        log_probs[token] = 0.0;
        Self { log_probs }
    }

    pub fn vocab_size(&self) -> usize {
        self.log_probs.len()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, token: Token) -> f64 {
        self.log_probs[token]
    }

    pub fn prob(&self, token: Token) -> f64 {
        self.log_probs[token].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|x| x.exp()).collect()
    }

    pub fn in_support(&self, token: Token) -> bool {
        self.log_probs[token].is_finite()
    }

    pub fn support(&self) -> impl Iterator<Item = Token> + '_ {
        self.log_probs
            .iter()
            .enumerate()
            .filter(|(_, x)| x.is_finite())
            .map(|(i, _)| i)
    }

    pub fn support_size(&self) -> usize {
        self.support().count()
    }
}

/// `log(sum(exp(xs)))`, returning `-inf` when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = xs
        .iter()
        .filter(|x| x.is_finite())
        .map(|x| (x - max).exp())
        .sum();
    max + s.ln()
}

/// `Norm[f] = f / sum(f)` in log space.
pub fn normalize(weights: &[f64]) -> Result<Distribution> {
    if weights.iter().all(|w| *w <= 0.0) {
        return Err(Error::AllZeroMass);
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0 || w.is_infinite()) {
        return Err(Error::InvalidWeights);
    }
    let log_total = weights.iter().sum::<f64>().ln();
    let log_probs = weights
        .iter()
        .map(|&w| {
            if w > 0.0 {
                w.ln() - log_total
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(Distribution { log_probs })
}

/// Scale log-probabilities by `1/t` and renormalize.
pub fn apply_temperature(d: &Distribution, t: f64) -> Result<Distribution> {
    if t <= 0.0 || !t.is_finite() {
        return Err(Error::NonPositiveTemperature(t));
    }
    if t == 1.0 {
        return Ok(d.clone());
    }
    Distribution::from_log_weights(d.log_probs.iter().map(|x| x / t).collect())
}

/// Keep the smallest descending-probability prefix whose mass reaches `p`.
pub fn apply_nucleus(d: &Distribution, p: f64) -> Result<Distribution> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidNucleus(p));
    }
    if p == 1.0 {
        return Ok(d.clone());
    }
    let mut order: Vec<Token> = d.support().collect();
    order.sort_by(|&a, &b| desc_then_lower_id(d.log_probs[a], a, d.log_probs[b], b));
    let mut kept = vec![f64::NEG_INFINITY; d.vocab_size()];
    let mut cumulative = 0.0;
    for tok in order {
        kept[tok] = d.log_probs[tok];
        cumulative += d.prob(tok);
        // Absorbs rounding in the running sum; exact boundaries count as reached.
        if cumulative >= p - 1e-12 {
            break;
        }
    }
    Distribution::from_log_weights(kept)
}

/// Descending by score, ties broken by lower id.
pub(crate) fn desc_then_lower_id(sa: f64, a: usize, sb: f64, b: usize) -> Ordering {
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.cmp(&b))
}

/// I.i.d. standard Gumbel draws.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelVector {
    pub values: Vec<f64>,
}

pub fn sample_gumbel(rng: &mut RngStream, n: usize) -> GumbelVector {
    let values = (0..n).map(|_| -(-rng.open01().ln()).ln()).collect();
    GumbelVector { values }
}

/// Base log-probabilities plus Gumbel noise; `-inf` wherever the base is.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedScores {
    pub values: Vec<f64>,
}

impl PerturbedScores {
    pub fn new(base: &[f64], noise: &GumbelVector) -> Self {
        assert_eq!(base.len(), noise.values.len());
        let values = base
            .iter()
            .zip(&noise.values)
            .map(|(&b, &g)| if b.is_finite() { b + g } else { f64::NEG_INFINITY })
            .collect();
        Self { values }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Indices of the `k` largest finite scores in decreasing order.
pub(crate) fn argtop_k(scores: &[f64], k: usize) -> Vec<(Token, f64)> {
    let mut finite: Vec<(Token, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .collect();
    finite.sort_by(|a, b| desc_then_lower_id(a.1, a.0, b.1, b.0));
    finite.truncate(k);
    finite
}

/// Sample up to `k` distinct tokens without replacement via Gumbel-Top-k.
///
/// Returns `(token, perturbed score)` pairs in strictly decreasing score
/// order. Tokens outside the support are never returned, so the result is
/// shorter than `k` when the support is smaller.
pub fn gumbel_top_k(d: &Distribution, k: usize, rng: &mut RngStream) -> Vec<(Token, f64)> {
    let noise = sample_gumbel(rng, d.vocab_size());
    let scores = PerturbedScores::new(d.log_probs(), &noise);
    argtop_k(&scores.values, k)
}

/// One categorical draw (Gumbel-max).
pub fn sample_categorical(d: &Distribution, rng: &mut RngStream) -> Token {
    gumbel_top_k(d, 1, rng)[0].0
}

/// Truncated Gumbel transform `T(u, phi)` with upper bound `u`.
///
/// Evaluates `-log(exp(-u) - exp(-max phi) + exp(-phi(x)))` through the
/// rearrangement
/// `v = u - phi(x) + log1p(-exp(phi(x) - max phi))`,
/// `T = u - max(v, 0) - log1p(exp(-|v|))`,
/// returning `u` exactly at the argmax. Non-finite inputs map to `-inf`.
pub fn truncated_transform(u: f64, scores: &PerturbedScores) -> Vec<f64> {
    let z = scores.max();
    let argmax = scores
        .values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == z)
        .map(|(i, _)| i)
        .next();
    scores
        .values
        .iter()
        .enumerate()
        .map(|(i, &phi)| {
            if !phi.is_finite() {
                return f64::NEG_INFINITY;
            }
            if Some(i) == argmax || phi >= z {
                return u;
            }
            let v = u - phi + (-(phi - z).exp()).ln_1p();
            u - v.max(0.0) - (-v.abs()).exp().ln_1p()
        })
        .collect()
}
