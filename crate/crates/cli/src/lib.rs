//! Verification suites, benchmark sweeps and the two-candidate Bernoulli
//! acceptance table behind the `rsd` binary.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use rsd_core::analysis::{
    chi_square_test, empirical_law, empirical_law_map, exact_sequence_distribution, figure1_curves,
    plackett_luce_prob, rrs_exact_law, sharded_counts, sharded_trials, tv_distance, tv_distance_maps,
    Figure1Row, MetricsRecord,
};
use rsd_core::decode::decode_models;
use rsd_core::lm::{random_model, ModelPair};
use rsd_core::prob::{gumbel_top_k, normalize};
use rsd_core::{DecoderKind, LanguageModel, RngStream, Token, Transforms};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Core(#[from] rsd_core::Error),
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub model: String,
    pub task: String,
    pub mode: String,
    pub decoder: String,
    pub spec: String,
    pub eff: f64,
    pub mbsu: f64,
    pub accept_rate: f64,
    /// Mean target node evaluations per round.
    pub target_calls: f64,
    pub trials: usize,
    pub seed: u64,
    /// Standard error of `eff` over rounds.
    #[serde(skip)]
    pub eff_std_error: f64,
}

pub const BENCH_HEADER: &str = "model,task,mode,decoder,spec,eff,mbsu,accept_rate,target_calls,trials,seed";

/// One row per (model, decoder) in config order.
pub fn run_bench(cfg: &Config) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        let pair = cfg.load_pair(spec)?;
        let (draft, target) = pair.effective(cfg.transforms)?;
        for (di, entry) in cfg.decoders.iter().enumerate() {
            let kind = entry.decoder_kind()?;
            let row_id = (mi * cfg.decoders.len() + di) as u64;
            let traces = (0..cfg.trials)
                .into_par_iter()
                .map(|i| {
                    decode_models(
                        &draft,
                        &target,
                        &kind,
                        cfg.output.length,
                        &cfg.output.prompt,
                        RngStream::new(cfg.seed, (row_id << 32) | i as u64),
                    )
                })
                .collect::<Result<Vec<_>, _>>()?;
            let m = MetricsRecord::from_traces(&traces, kind.draft_length(), spec.draft_size, spec.target_size)?;
            let per_round: Vec<f64> = traces
                .iter()
                .flat_map(|t| &t.iterations)
                .map(|it| it.emitted.len() as f64)
                .collect();
            let n = per_round.len() as f64;
            let var = per_round.iter().map(|x| (x - m.block_efficiency).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            rows.push(BenchRow {
                model: spec.name.clone(),
                task: spec.task.clone(),
                mode: entry.mode.clone(),
                decoder: kind.name().to_string(),
                spec: kind.spec_string(),
                eff: m.block_efficiency,
                mbsu: m.mbsu,
                accept_rate: m.acceptance_rate,
                target_calls: m.mean_target_calls(),
                trials: cfg.trials,
                seed: cfg.seed,
                eff_std_error: (var / n).sqrt(),
            });
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.model),
            csv_field(&r.task),
            csv_field(&r.mode),
            r.decoder,
            r.spec,
            fmt_g(r.eff),
            fmt_g(r.mbsu),
            fmt_g(r.accept_rate),
            fmt_g(r.target_calls),
            r.trials,
            r.seed
        )
        .expect("write to string");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------- recovery

/// TV between the empirical law of the first emitted token over `trials`
/// decodes and the effective target's next-token law after `prompt`.
pub fn first_token_tv(
    pair: &ModelPair,
    transforms: Transforms,
    kind: &DecoderKind,
    prompt: &[Token],
    trials: usize,
    seed: u64,
    stream_base: u64,
) -> Result<f64, CliError> {
    let (draft, target) = pair.effective(transforms)?;
    let truth = target.next_distribution(prompt)?.probs();
    let outputs = sharded_trials(seed, stream_base, trials, |rng| {
        decode_models(&draft, &target, kind, 1, prompt, rng.fork()).map(|t| t.output[0])
    });
    let mut counts = vec![0u64; pair.vocab_size()];
    for x in outputs {
        counts[x?] += 1;
    }
    Ok(tv_distance(&empirical_law(&counts), &truth)?)
}

/// TV between the empirical law of the first `length` output tokens and
/// the effective target's exact autoregressive law.
#[allow(clippy::too_many_arguments)]
pub fn sequence_tv(
    pair: &ModelPair,
    transforms: Transforms,
    kind: &DecoderKind,
    prompt: &[Token],
    length: usize,
    trials: usize,
    seed: u64,
    stream_base: u64,
) -> Result<f64, CliError> {
    let (draft, target) = pair.effective(transforms)?;
    let truth = exact_sequence_distribution(&target, prompt, length)?;
    let outputs = sharded_trials(seed, stream_base, trials, |rng| {
        decode_models(&draft, &target, kind, length, prompt, rng.fork()).map(|t| t.output)
    });
    let mut counts: BTreeMap<Vec<Token>, u64> = BTreeMap::new();
    for seq in outputs {
        *counts.entry(seq?).or_insert(0) += 1;
    }
    Ok(tv_distance_maps(&empirical_law_map(&counts), &truth))
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    /// `true` when larger statistics are better (p-values).
    pub higher_is_better: bool,
    pub pass: bool,
}

impl Check {
    fn at_most(name: String, statistic: f64, threshold: f64) -> Self {
        Self {
            name,
            statistic,
            threshold,
            higher_is_better: false,
            pass: statistic <= threshold,
        }
    }

    fn at_least(name: String, statistic: f64, threshold: f64) -> Self {
        Self {
            name,
            statistic,
            threshold,
            higher_is_better: true,
            pass: statistic >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Largest `|rrs_exact_law - q|` over `instances` random `(p, q, K)` with
/// `V` in `2..=6` and `K` in `1..=4`.
pub fn rrs_exactness_error(instances: usize, seed: u64) -> Result<f64, CliError> {
    let mut rng = RngStream::new(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let v = 2 + (rng.unit() * 5.0) as usize;
        let m = random_model(v, 0, &mut rng, 1.0)?;
        let p = m.next_distribution(&[])?;
        let q = random_model(v, 0, &mut rng, 1.0)?.next_distribution(&[])?;
        let k = (1 + (rng.unit() * 4.0) as usize).min(p.support_size());
        let law = rrs_exact_law(&p, &q, k)?;
        for (a, b) in law.iter().zip(q.probs()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Chi-square p-value of Gumbel-Top-k orderings (`k = V`) against the
/// Plackett-Luce law of `weights`.
pub fn plackett_luce_p_value(weights: &[f64], trials: usize, seed: u64, stream_base: u64) -> Result<f64, CliError> {
    let d = normalize(weights)?;
    let v = d.vocab_size();
    let perms = permutations(v);
    let index: BTreeMap<Vec<Token>, usize> = perms.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let counts = sharded_counts(seed, stream_base, trials, perms.len(), |rng| {
        let order: Vec<Token> = gumbel_top_k(&d, v, rng).into_iter().map(|(t, _)| t).collect();
        index[&order]
    });
    let expected: Vec<f64> = perms
        .iter()
        .map(|p| plackett_luce_prob(&d, p) * trials as f64)
        .collect();
    Ok(chi_square_test(&counts, &expected)?)
}

/// All orderings of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<Token>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

pub fn run_verify(cfg: &Config) -> Result<VerifyReport, CliError> {
    let th = &cfg.thresholds;
    let mut checks = vec![
        Check::at_most(
            "rrs_exact_law".into(),
            rrs_exactness_error(100, cfg.seed)?,
            th.rrs_max_abs_error,
        ),
        Check::at_least(
            "plackett_luce_chi_square".into(),
            plackett_luce_p_value(&[0.4, 0.3, 0.2, 0.1], cfg.trials, cfg.seed, 1 << 40)?,
            th.plackett_luce_min_p_value,
        ),
    ];
    for (mi, spec) in cfg.models.iter().enumerate() {
        let pair = cfg.load_pair(spec)?;
        for (di, entry) in cfg.decoders.iter().enumerate() {
            let kind = entry.decoder_kind()?;
            let base = ((mi * cfg.decoders.len() + di) as u64 + 1) << 44;
            let label = format!("{}/{}/{}", spec.name, kind.name(), kind.spec_string());
            let tv1 = first_token_tv(&pair, cfg.transforms, &kind, &cfg.output.prompt, cfg.trials, cfg.seed, base)?;
            checks.push(Check::at_most(format!("first_token_tv/{label}"), tv1, th.first_token_tv));
            let tvn = sequence_tv(
                &pair,
                cfg.transforms,
                &kind,
                &cfg.output.prompt,
                th.sequence_length,
                cfg.trials,
                cfg.seed,
                base | (1 << 43),
            )?;
            checks.push(Check::at_most(format!("sequence_tv/{label}"), tvn, th.sequence_tv));
        }
    }
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        seed: cfg.seed,
        trials: cfg.trials,
        checks,
        all_pass,
    })
}

// ---------------------------------------------------------------- bernoulli grid

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Figure1Config {
    pub p_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub gammas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for Figure1Config {
    fn default() -> Self {
        let grid = rsd_core::analysis::default_grid();
        Self {
            p_grid: grid.clone(),
            q_grid: grid,
            gammas: vec![1.0, 2.0],
            trials: 100_000,
            seed: 0,
        }
    }
}

impl Figure1Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?;
        let in_range = |g: &[f64]| g.iter().all(|x| (0.0..=1.0).contains(x));
        if !in_range(&cfg.p_grid) || !in_range(&cfg.q_grid) {
            return Err(CliError::BadConfig(format!("{}: grid values must lie in [0, 1]", path.display())));
        }
        Ok(cfg)
    }

    pub fn run(&self) -> Result<Vec<Figure1Row>, CliError> {
        figure1_curves(&self.p_grid, &self.q_grid, &self.gammas, self.trials, self.seed)
            .map_err(|e| CliError::BadConfig(e.to_string()))
    }
}

pub const FIGURE1_HEADER: &str = "p,q,method,gamma,acceptance_analytic,acceptance_empirical";

pub fn figure1_csv(rows: &[Figure1Row]) -> String {
    let mut out = String::from(FIGURE1_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_g(r.p),
            fmt_g(r.q),
            r.method.name(),
            r.gamma.map(fmt_g).unwrap_or_default(),
            fmt_g(r.acceptance_analytic),
            r.acceptance_empirical.map(fmt_g).unwrap_or_default()
        )
        .expect("write to string");
    }
    out
}
