//! Decode loops: draft, evaluate the target on every tree context, verify,
//! prune the cache, append the accepted tokens plus one terminal token.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::{LanguageModel, ModelPair, Transforms};
use crate::prob::{sample_categorical, Token};
use crate::rng::RngStream;
use crate::tree::{build_tree_comb, build_tree_const, build_tree_sbs, filter_cache, ContextCache, DraftTree};
use crate::verify::{sd_verify, verify_comb, verify_tree, TargetEvals, TreeVerdict};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecoderKind {
    Ar,
    Sd { draft_length: usize },
    SpecTr { num_paths: usize, draft_length: usize, gamma: f64 },
    RsdC { branching: Vec<usize> },
    RsdS { beam_width: usize, draft_length: usize },
}

impl DecoderKind {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match self {
            DecoderKind::Ar => Ok(()),
            DecoderKind::Sd { draft_length } if *draft_length == 0 => bad("SD draft length must be at least 1"),
            DecoderKind::Sd { .. } => Ok(()),
            DecoderKind::SpecTr { num_paths, draft_length, gamma } => {
                if *num_paths == 0 || *draft_length == 0 {
                    return bad("SpecTr needs K >= 1 and L >= 1");
                }
                if !(*gamma >= 1.0 && *gamma <= *num_paths as f64) {
                    return Err(Error::GammaOutOfRange { gamma: *gamma, k: *num_paths });
                }
                Ok(())
            }
            DecoderKind::RsdC { branching } => {
                if branching.is_empty() || branching.contains(&0) {
                    bad("RSD-C branching factors must be non-empty and positive")
                } else {
                    Ok(())
                }
            }
            DecoderKind::RsdS { beam_width, draft_length } => {
                if *beam_width == 0 || *draft_length == 0 {
                    bad("RSD-S needs W >= 1 and L >= 1")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Short decoder name as used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            DecoderKind::Ar => "AR",
            DecoderKind::Sd { .. } => "SD",
            DecoderKind::SpecTr { .. } => "SpecTr",
            DecoderKind::RsdC { .. } => "RSD-C",
            DecoderKind::RsdS { .. } => "RSD-S",
        }
    }

    /// Shape string: `L`, `K×L`, `b0-b1-...`, `W×L`.
    pub fn spec_string(&self) -> String {
        match self {
            DecoderKind::Ar => "-".to_string(),
            DecoderKind::Sd { draft_length } => draft_length.to_string(),
            DecoderKind::SpecTr { num_paths, draft_length, .. } => format!("{num_paths}×{draft_length}"),
            DecoderKind::RsdC { branching } => branching
                .iter()
                .map(|b| b.to_string())
                .collect::<Vec<_>>()
                .join("-"),
            DecoderKind::RsdS { beam_width, draft_length } => format!("{beam_width}×{draft_length}"),
        }
    }

    /// Draft depth per round (0 for AR).
    pub fn draft_length(&self) -> usize {
        match self {
            DecoderKind::Ar => 0,
            DecoderKind::Sd { draft_length }
            | DecoderKind::SpecTr { draft_length, .. }
            | DecoderKind::RsdS { draft_length, .. } => *draft_length,
            DecoderKind::RsdC { branching } => branching.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    pub transforms: Transforms,
    pub output_length: usize,
    pub seed: u64,
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.transforms.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Iteration {
    /// Tree nodes evaluated by the target this round (1 for AR).
    pub target_calls: usize,
    pub accepted: usize,
    pub emitted: Vec<Token>,
    /// Levels at which an acceptance test ran.
    pub verified_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodeTrace {
    pub iterations: Vec<Iteration>,
    pub output: Vec<Token>,
    pub seed: u64,
    pub stream: u64,
}

/// Target distributions for the root and every node, each node's context
/// rebuilt from its attention-mask row.
pub fn batch_target_eval<M: LanguageModel + ?Sized>(tree: &DraftTree, target: &M) -> Result<TargetEvals> {
    let root = target.next_distribution(tree.root_context())?;
    let flat_tokens: Vec<Token> = tree.levels().iter().flat_map(|l| l.tokens.iter().copied()).collect();
    let mask = tree.mask();
    let nodes = (0..flat_tokens.len())
        .map(|i| {
            let mut ctx = tree.root_context().to_vec();
            ctx.extend(
                mask.row(i)
                    .iter()
                    .zip(&flat_tokens)
                    .filter(|(&m, _)| m)
                    .map(|(_, &t)| t),
            );
            target.next_distribution(&ctx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetEvals { root, nodes })
}

/// Per-node evaluation by walking parent pointers; the reference for
/// [`batch_target_eval`].
pub fn sequential_target_eval<M: LanguageModel + ?Sized>(tree: &DraftTree, target: &M) -> Result<TargetEvals> {
    let root = target.next_distribution(tree.root_context())?;
    let nodes = (0..tree.num_tree_nodes())
        .map(|i| target.next_distribution(&tree.node_context(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetEvals { root, nodes })
}

/// One verification round from `context`.
pub fn decode_round<D, T>(
    draft: &D,
    target: &T,
    kind: &DecoderKind,
    context: &[Token],
    rng: &mut RngStream,
) -> Result<(Iteration, Vec<usize>)>
where
    D: LanguageModel + ?Sized,
    T: LanguageModel + ?Sized,
{
    let (tree, verdict): (DraftTree, TreeVerdict) = match kind {
        DecoderKind::Ar => {
            let x = sample_categorical(&target.next_distribution(context)?, rng);
            let it = Iteration {
                target_calls: 1,
                accepted: 0,
                emitted: vec![x],
                verified_levels: 0,
            };
            return Ok((it, Vec::new()));
        }
        DecoderKind::Sd { draft_length } => {
            let tree = build_tree_comb(draft, context, 1, *draft_length, rng)?;
            let evals = batch_target_eval(&tree, target)?;
            let chain: Vec<Token> = tree.levels().iter().map(|l| l.tokens[0]).collect();
            let draft_dists: Vec<_> = tree.levels().iter().map(|l| l.parent_dists[0].clone()).collect();
            let mut target_dists = vec![evals.root];
            target_dists.extend(evals.nodes);
            let v = sd_verify(&chain, &draft_dists, &target_dists, context.len(), rng);
            (tree, v)
        }
        DecoderKind::SpecTr { num_paths, draft_length, gamma } => {
            let tree = build_tree_comb(draft, context, *num_paths, *draft_length, rng)?;
            let evals = batch_target_eval(&tree, target)?;
            let v = verify_comb(&tree, &evals, *gamma, rng)?;
            (tree, v)
        }
        DecoderKind::RsdC { branching } => {
            let tree = build_tree_const(draft, context, branching, rng)?;
            let evals = batch_target_eval(&tree, target)?;
            let v = verify_tree(&tree, &evals, rng);
            (tree, v)
        }
        DecoderKind::RsdS { beam_width, draft_length } => {
            let tree = build_tree_sbs(draft, context, *beam_width, *draft_length, rng)?;
            let evals = batch_target_eval(&tree, target)?;
            let v = verify_tree(&tree, &evals, rng);
            (tree, v)
        }
    };
    let it = Iteration {
        target_calls: tree.num_tree_nodes().max(1),
        accepted: verdict.accepted_tokens.len(),
        emitted: verdict.emitted(),
        verified_levels: verdict.candidate_counts.len(),
    };
    Ok((it, verdict.accepted_flat_node_ids))
}

/// Decode with explicit (already transformed) draft and target models.
pub fn decode_models<D, T>(
    draft: &D,
    target: &T,
    kind: &DecoderKind,
    output_length: usize,
    prompt: &[Token],
    mut rng: RngStream,
) -> Result<DecodeTrace>
where
    D: LanguageModel + ?Sized,
    T: LanguageModel + ?Sized,
{
    kind.validate()?;
    if draft.vocab_size() != target.vocab_size() {
        return Err(Error::VocabMismatch {
            draft: draft.vocab_size(),
            target: target.vocab_size(),
        });
    }
    let (seed, stream) = (rng.seed(), rng.stream());
    let mut context = prompt.to_vec();
    let mut iterations = Vec::new();
    let mut produced = 0;
    while produced < output_length {
        let input_len = context.len();
        let (it, accepted_ids) = decode_round(draft, target, kind, &context, &mut rng)?;
        let cache = filter_cache(
            &ContextCache::with_tree(input_len, cache_nodes(kind, &it)),
            input_len,
            &accepted_ids,
        );
        debug_assert_eq!(cache.retained_positions.len(), input_len + it.accepted);
        produced += it.emitted.len();
        context.extend_from_slice(&it.emitted);
        iterations.push(it);
    }
    let mut output = context.split_off(prompt.len());
    output.truncate(output_length);
    Ok(DecodeTrace {
        iterations,
        output,
        seed,
        stream,
    })
}

/// Tree positions appended to the cache this round.
fn cache_nodes(kind: &DecoderKind, it: &Iteration) -> usize {
    match kind {
        DecoderKind::Ar => 0,
        _ => it.target_calls,
    }
}

/// Decode from a model pair, applying `cfg.transforms` to both models.
pub fn decode(pair: &ModelPair, cfg: &DecoderConfig, prompt: &[Token]) -> Result<DecodeTrace> {
    decode_stream(pair, cfg, prompt, 0)
}

/// As [`decode`], on an explicit RNG stream of `cfg.seed`.
pub fn decode_stream(pair: &ModelPair, cfg: &DecoderConfig, prompt: &[Token], stream: u64) -> Result<DecodeTrace> {
    cfg.validate()?;
    let (draft, target) = pair.effective(cfg.transforms)?;
    decode_models(
        &draft,
        &target,
        &cfg.kind,
        cfg.output_length,
        prompt,
        RngStream::new(cfg.seed, stream),
    )
}
