//! Exact enumeration of one verification round.
//!
//! The law of the block emitted by one round is computed by summing over
//! every draft tree, every acceptance path and every residual draw. Each
//! block is then completed by exact target sampling to a fixed horizon; the
//! result must equal the target's own autoregressive law. A second check runs
//! the real decoder and compares its block histogram with the enumeration.

use std::collections::BTreeMap;

use rsd_core::analysis::{chi_square_test, exact_sequence_distribution, tv_distance_maps, sharded_trials};
use rsd_core::decode::decode_round;
use rsd_core::lm::{random_model, LanguageModel, NGramModel};
use rsd_core::verify::kseq_residual_is_valid;
use rsd_core::{DecoderKind, RngStream, Token};

type Law = BTreeMap<Vec<Token>, f64>;

fn probs<M: LanguageModel>(m: &M, ctx: &[Token]) -> Vec<f64> {
    m.next_distribution(ctx).unwrap().probs()
}

fn residual(q: &[f64], p: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = q.iter().zip(p).map(|(a, b)| (a - b).max(0.0)).collect();
    let s: f64 = r.iter().sum();
    if s < 1e-12 {
        q.to_vec()
    } else {
        r.iter().map(|x| x / s).collect()
    }
}

fn add(law: &mut Law, key: Vec<Token>, w: f64) {
    if w > 0.0 {
        *law.entry(key).or_insert(0.0) += w;
    }
}

fn prefixed(block: &Law, x: Token) -> impl Iterator<Item = (Vec<Token>, f64)> + '_ {
    block.iter().map(move |(b, &w)| {
        let mut k = vec![x];
        k.extend(b);
        (k, w)
    })
}

/// Ordered `k`-tuples of distinct tokens with their sequential
/// without-replacement probabilities.
fn wor_tuples(p: &[f64], k: usize) -> Vec<(Vec<Token>, f64)> {
    let mut out = Vec::new();
    fn go(p: &[f64], k: usize, cur: &mut Vec<Token>, prob: f64, used: f64, out: &mut Vec<(Vec<Token>, f64)>) {
        if cur.len() == k {
            out.push((cur.clone(), prob));
            return;
        }
        for x in 0..p.len() {
            if p[x] > 0.0 && !cur.contains(&x) {
                cur.push(x);
                go(p, k, cur, prob * p[x] / (1.0 - used), used + p[x], out);
                cur.pop();
            }
        }
    }
    go(p, k, &mut Vec::new(), 1.0, 0.0, &mut out);
    out
}

/// Block law of constant-branching recursive rejection sampling from `ctx`.
fn const_block_law(draft: &NGramModel, target: &NGramModel, ctx: &[Token], branching: &[usize]) -> Law {
    let q = probs(target, ctx);
    let mut law = Law::new();
    let Some((&b, rest)) = branching.split_first() else {
        for (x, &w) in q.iter().enumerate() {
            add(&mut law, vec![x], w);
        }
        return law;
    };
    let p = probs(draft, ctx);
    let support = p.iter().filter(|&&x| x > 0.0).count();
    for (tuple, tw) in wor_tuples(&p, b.min(support)) {
        let mut reach = tw;
        let mut qk = q.clone();
        let mut pk = p.clone();
        for &x in &tuple {
            let theta = (qk[x] / pk[x]).min(1.0);
            let mut c = ctx.to_vec();
            c.push(x);
            for (k, w) in prefixed(&const_block_law(draft, target, &c, rest), x) {
                add(&mut law, k, reach * theta * w);
            }
            reach *= 1.0 - theta;
            qk = residual(&qk, &pk);
            let left: f64 = pk.iter().enumerate().filter(|&(i, _)| i != x).map(|(_, v)| v).sum();
            pk = pk.iter().enumerate().map(|(i, &v)| if i == x { 0.0 } else { v / left }).collect();
        }
        for (y, &w) in qk.iter().enumerate() {
            add(&mut law, vec![y], reach * w);
        }
    }
    law
}

/// Block law of single-chain rejection sampling continued from an accepted
/// token, with `depth` more draft levels.
fn chain_block_law(draft: &NGramModel, target: &NGramModel, ctx: &[Token], depth: usize) -> Law {
    const_block_law(draft, target, ctx, &vec![1; depth])
}

/// Block law of K-SEQ over `k` i.i.d. chains of length `l`.
fn kseq_block_law(draft: &NGramModel, target: &NGramModel, ctx: &[Token], k: usize, l: usize, gamma: f64) -> Law {
    let p = probs(draft, ctx);
    let q = probs(target, ctx);
    let v = p.len();
    let beta: f64 = p.iter().zip(&q).map(|(a, b)| a.min(b / gamma)).sum();
    let factor = (1.0 - (1.0 - beta).powi(k as i32)) / beta;
    let res_w: Vec<f64> = q
        .iter()
        .zip(&p)
        .map(|(b, a)| (b - a.min(b / gamma) * factor).max(0.0))
        .collect();
    let rs: f64 = res_w.iter().sum();
    let res: Vec<f64> = if rs < 1e-12 { q.clone() } else { res_w.iter().map(|x| x / rs).collect() };
    let mut law = Law::new();
    let mut idx = vec![0usize; k];
    loop {
        let weight: f64 = idx.iter().map(|&x| p[x]).product();
        if weight > 0.0 {
            let mut reach = weight;
            for &x in &idx {
                let theta = (q[x] / (gamma * p[x])).min(1.0);
                let mut c = ctx.to_vec();
                c.push(x);
                for (key, w) in prefixed(&chain_block_law(draft, target, &c, l - 1), x) {
                    add(&mut law, key, reach * theta * w);
                }
                reach *= 1.0 - theta;
            }
            for (y, &w) in res.iter().enumerate() {
                add(&mut law, vec![y], reach * w);
            }
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return law;
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

/// Complete every block to `horizon` tokens with exact target sampling.
fn complete(block: &Law, target: &NGramModel, ctx: &[Token], horizon: usize) -> Law {
    let mut out = Law::new();
    for (b, &w) in block {
        if b.len() >= horizon {
            add(&mut out, b[..horizon].to_vec(), w);
            continue;
        }
        let mut c = ctx.to_vec();
        c.extend(b);
        for (tail, tw) in exact_sequence_distribution(target, &c, horizon - b.len()).unwrap() {
            let mut k = b.clone();
            k.extend(tail);
            add(&mut out, k, w * tw);
        }
    }
    out
}

fn pair(v: usize, seed: u64) -> (NGramModel, NGramModel) {
    let mut rng = RngStream::new(seed, 0);
    (
        random_model(v, 2, &mut rng, 1.0).unwrap(),
        random_model(v, 2, &mut rng, 1.0).unwrap(),
    )
}

fn assert_same(a: &Law, b: &Law, tol: f64) {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    for k in keys {
        let x = a.get(k).copied().unwrap_or(0.0);
        let y = b.get(k).copied().unwrap_or(0.0);
        assert!((x - y).abs() <= tol, "{k:?}: {x} vs {y}");
    }
}

#[test]
fn const_tree_round_recovers_target_exactly() {
    for seed in 0..5 {
        let (d, t) = pair(3, seed);
        let ctx = [0, 2];
        let truth = exact_sequence_distribution(&t, &ctx, 3).unwrap();
        for b in [vec![2, 1], vec![3, 2], vec![2, 2, 1], vec![1, 1]] {
            let block = const_block_law(&d, &t, &ctx, &b);
            assert!((block.values().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_same(&complete(&block, &t, &ctx, 3), &truth, 1e-9);
        }
    }
}

#[test]
fn kseq_round_recovers_target_exactly() {
    for seed in 0..5 {
        let (d, t) = pair(3, seed + 10);
        let ctx = [1, 1];
        let truth = exact_sequence_distribution(&t, &ctx, 3).unwrap();
        let (p, q) = (d.next_distribution(&ctx).unwrap(), t.next_distribution(&ctx).unwrap());
        for (k, l, gamma) in [(2, 2, 2.0), (3, 1, 3.0), (3, 2, 2.5), (2, 1, 1.5), (1, 2, 1.0)] {
            if gamma < k as f64 && !kseq_residual_is_valid(&p, &q, gamma, k) {
                continue;
            }
            assert!(kseq_residual_is_valid(&p, &q, gamma, k));
            let block = kseq_block_law(&d, &t, &ctx, k, l, gamma);
            assert_same(&complete(&block, &t, &ctx, 3), &truth, 1e-9);
        }
    }
}

#[test]
fn kseq_below_valid_gamma_is_biased() {
    // Two i.i.d. drafts with gamma = 1: the residual formula goes negative
    // wherever p >= q, and clipping it shifts the output law.
    let (d, t) = pair(3, 10);
    let ctx = [1, 1];
    let (p, q) = (d.next_distribution(&ctx).unwrap(), t.next_distribution(&ctx).unwrap());
    assert!(!kseq_residual_is_valid(&p, &q, 1.0, 2));
    let block = kseq_block_law(&d, &t, &ctx, 2, 1, 1.0);
    let first: f64 = block.iter().filter(|(b, _)| b[0] == 0).map(|(_, w)| w).sum();
    assert!((first - q.prob(0)).abs() > 1e-3);
}

fn block_histogram(d: &NGramModel, t: &NGramModel, kind: &DecoderKind, ctx: &[Token], trials: usize, seed: u64) -> BTreeMap<Vec<Token>, u64> {
    let blocks = sharded_trials(seed, 0, trials, |rng| {
        decode_round(d, t, kind, ctx, rng).unwrap().0.emitted
    });
    let mut h = BTreeMap::new();
    for b in blocks {
        *h.entry(b).or_insert(0u64) += 1;
    }
    h
}

fn check_against(law: &Law, hist: &BTreeMap<Vec<Token>, u64>, trials: usize) {
    assert!(hist.keys().all(|k| law.contains_key(k)), "block outside the exact support");
    let keys: Vec<_> = law.keys().filter(|k| law[*k] * trials as f64 >= 5.0).collect();
    let counts: Vec<u64> = keys.iter().map(|k| hist.get(*k).copied().unwrap_or(0)).collect();
    let expected: Vec<f64> = keys.iter().map(|k| law[*k] * trials as f64).collect();
    // Pool the sparse cells into one.
    let rest_obs = trials as u64 - counts.iter().sum::<u64>();
    let rest_exp = trials as f64 - expected.iter().sum::<f64>();
    let (mut counts, mut expected) = (counts, expected);
    if rest_exp >= 1.0 {
        counts.push(rest_obs);
        expected.push(rest_exp);
    }
    let pv = chi_square_test(&counts, &expected).unwrap();
    assert!(pv > 1e-3, "p-value {pv}");
}

#[test]
fn decoder_rounds_match_enumeration() {
    let (d, t) = pair(3, 3);
    let ctx = [2, 0];
    let trials = 60_000;
    for (i, b) in [vec![2, 1], vec![2, 2]].into_iter().enumerate() {
        let law = const_block_law(&d, &t, &ctx, &b);
        let hist = block_histogram(&d, &t, &DecoderKind::RsdC { branching: b }, &ctx, trials, 100 + i as u64);
        check_against(&law, &hist, trials);
    }
    let law = chain_block_law(&d, &t, &ctx, 2);
    let hist = block_histogram(&d, &t, &DecoderKind::Sd { draft_length: 2 }, &ctx, trials, 200);
    check_against(&law, &hist, trials);

    let law = kseq_block_law(&d, &t, &ctx, 2, 2, 2.0);
    let kind = DecoderKind::SpecTr { num_paths: 2, draft_length: 2, gamma: 2.0 };
    let hist = block_histogram(&d, &t, &kind, &ctx, trials, 300);
    check_against(&law, &hist, trials);
}

#[test]
fn sbs_round_first_token_matches_target() {
    // Beam trees couple siblings, so only the emitted law is checked here.
    let (d, t) = pair(3, 4);
    let ctx = [0, 0];
    let trials = 60_000;
    let kind = DecoderKind::RsdS { beam_width: 3, draft_length: 2 };
    let hist = block_histogram(&d, &t, &kind, &ctx, trials, 400);
    let truth = exact_sequence_distribution(&t, &ctx, 1).unwrap();
    let mut first = BTreeMap::new();
    for (b, c) in &hist {
        *first.entry(vec![b[0]]).or_insert(0.0) += *c as f64 / trials as f64;
    }
    assert!(tv_distance_maps(&first, &truth) < 0.01);
}
