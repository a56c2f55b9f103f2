//! Draft-token trees.
//!
//! A [`DraftTree`] is stored level by level. Level `l` (1-based depth) holds
//! its tokens in verification order together with, for each token, the index
//! of its parent within level `l - 1` (level 1 parents all point at the root,
//! index 0). Nodes are also numbered in flattened order: level 1 first, then
//! level 2, and so on. A node's flat id is its global sequence position, i.e.
//! `root_context.len() + flat index`.
//!
//! Three builders are provided:
//!
//! * [`build_tree_const`]: constant branching factors; each parent's children
//!   are a Gumbel-Top-k sample without replacement, in decreasing perturbed
//!   score.
//! * [`build_tree_sbs`]: stochastic beam search; the whole level is the global
//!   top-`W` of truncated-Gumbel scores across the beam.
//! * [`build_tree_comb`]: `K` independent chains sharing the root, drawn with
//!   replacement.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::prob::{
    desc_then_lower_id, gumbel_top_k, sample_categorical, sample_gumbel, truncated_transform,
    Distribution, PerturbedScores, Token,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeKind {
    /// Constant branching factors (Gumbel-Top-k per parent).
    Const,
    /// Stochastic beam search.
    Beam,
    /// Independent chains drawn with replacement.
    Comb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeLevel {
    pub tokens: Vec<Token>,
    /// Index into the previous level's nodes (0 = root for level 1).
    pub parent_ids: Vec<usize>,
    pub flat_node_ids: Vec<usize>,
    /// Ordering score: perturbed log-prob (const), truncated score psi (beam),
    /// or the token's draft log-prob (comb).
    pub scores: Vec<f64>,
    /// Cumulative draft log-probability of each node's path below the root.
    pub path_log_probs: Vec<f64>,
    /// Draft distribution of every node on the previous level, indexed like
    /// `parent_ids`. Children were drawn from exactly these.
    pub parent_dists: Vec<Distribution>,
}

impl TreeLevel {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Positions (in stored order) of the children of `parent`.
    pub fn children_of(&self, parent: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent_ids
            .iter()
            .enumerate()
            .filter(move |(_, &p)| p == parent)
            .map(|(i, _)| i)
    }
}

/// Square ancestor mask over tree nodes in flat order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AttentionMask {
    size: usize,
    bits: Vec<bool>,
}

impl AttentionMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.size..(i + 1) * self.size]
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.size)
            .map(|i| self.row(i).iter().map(|&b| b as u8).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let size = rows.len();
        let bits = rows.iter().flat_map(|r| r.iter().map(|&b| b != 0)).collect();
        Self { size, bits }
    }
}

/// Extend `prev` by one level of nodes.
///
/// `parent_ids[i]` indexes the previous level, which starts at flat index
/// `tree_prev`. Each new row is a copy of its parent's row with the diagonal
/// set; for the first level (empty `prev`) the parents are the root and the
/// result is the identity.
pub fn build_attention_mask(
    prev: &AttentionMask,
    parent_ids: &[usize],
    tree_prev: usize,
) -> Result<AttentionMask> {
    let cur = prev.size;
    let n = parent_ids.len();
    let size = cur + n;
    let mut bits = vec![false; size * size];
    for i in 0..cur {
        bits[i * size..i * size + cur].copy_from_slice(prev.row(i));
    }
    let prev_len = if cur == 0 { 1 } else { cur - tree_prev.min(cur) };
    for (i, &pid) in parent_ids.iter().enumerate() {
        if pid >= prev_len {
            return Err(Error::IndexOutOfRange {
                index: pid,
                len: prev_len,
            });
        }
        let row = cur + i;
        if cur > 0 {
            let parent = tree_prev + pid;
            bits.copy_within(parent * size..parent * size + cur, row * size);
        }
        bits[row * size + row] = true;
    }
    Ok(AttentionMask { size, bits })
}

/// `(sequence, phi, psi)` tuple carried by stochastic beam search.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamEntry {
    pub sequence: Vec<Token>,
    pub phi: f64,
    pub psi: f64,
}

impl BeamEntry {
    pub fn root(context: &[Token]) -> Self {
        Self {
            sequence: context.to_vec(),
            phi: 0.0,
            psi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftTree {
    kind: TreeKind,
    root_context: Vec<Token>,
    levels: Vec<TreeLevel>,
    mask: AttentionMask,
    position_ids: Vec<usize>,
}

impl DraftTree {
    fn new(kind: TreeKind, root_context: &[Token]) -> Self {
        Self {
            kind,
            root_context: root_context.to_vec(),
            levels: Vec::new(),
            mask: AttentionMask::empty(),
            position_ids: Vec::new(),
        }
    }

    /// Append a level, updating mask, flat ids and position ids.
    fn push_level(
        &mut self,
        tokens: Vec<Token>,
        parent_ids: Vec<usize>,
        scores: Vec<f64>,
        path_log_probs: Vec<f64>,
        parent_dists: Vec<Distribution>,
    ) -> Result<()> {
        let tree_prev = self.num_tree_nodes() - self.levels.last().map_or(0, |l| l.len());
        let tree_curr = self.num_tree_nodes();
        self.mask = build_attention_mask(&self.mask, &parent_ids, tree_prev)?;
        let root_len = self.root_context.len();
        let depth = self.levels.len() + 1;
        let n = tokens.len();
        self.position_ids
            .extend(std::iter::repeat_n(root_len + depth - 1, n));
        let flat_node_ids = (root_len + tree_curr..root_len + tree_curr + n).collect();
        self.levels.push(TreeLevel {
            tokens,
            parent_ids,
            flat_node_ids,
            scores,
            path_log_probs,
            parent_dists,
        });
        Ok(())
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn root_context(&self) -> &[Token] {
        &self.root_context
    }

    pub fn levels(&self) -> &[TreeLevel] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `[1, N_1, ..., N_L]`.
    pub fn num_nodes(&self) -> Vec<usize> {
        std::iter::once(1)
            .chain(self.levels.iter().map(|l| l.len()))
            .collect()
    }

    /// Nodes below the root.
    pub fn num_tree_nodes(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    pub fn mask(&self) -> &AttentionMask {
        &self.mask
    }

    pub fn position_ids(&self) -> &[usize] {
        &self.position_ids
    }

    /// Flat index of the first node of `level` (0-based level index).
    pub fn level_offset(&self, level: usize) -> usize {
        self.levels[..level].iter().map(|l| l.len()).sum()
    }

    /// `(level index, index within level)` for a flat index.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let mut rest = flat;
        for (l, level) in self.levels.iter().enumerate() {
            if rest < level.len() {
                return (l, rest);
            }
            rest -= level.len();
        }
        panic!("flat index {flat} outside tree of {} nodes", self.num_tree_nodes());
    }

    /// Flat index of the parent, or `None` for level-1 nodes.
    pub fn parent_flat(&self, flat: usize) -> Option<usize> {
        let (l, i) = self.locate(flat);
        (l > 0).then(|| self.level_offset(l - 1) + self.levels[l].parent_ids[i])
    }

    /// Root context followed by the tokens on the path to `flat` (inclusive),
    /// found by walking parent pointers.
    pub fn node_context(&self, flat: usize) -> Vec<Token> {
        let mut path = Vec::new();
        let mut cur = Some(flat);
        while let Some(f) = cur {
            let (l, i) = self.locate(f);
            path.push(self.levels[l].tokens[i]);
            cur = self.parent_flat(f);
        }
        path.reverse();
        let mut ctx = self.root_context.clone();
        ctx.extend(path);
        ctx
    }

    /// Beam tuples of one level (0-based level index).
    pub fn beam_entries(&self, level: usize) -> Vec<BeamEntry> {
        let offset = self.level_offset(level);
        let lvl = &self.levels[level];
        (0..lvl.len())
            .map(|i| BeamEntry {
                sequence: self.node_context(offset + i),
                phi: lvl.path_log_probs[i],
                psi: lvl.scores[i],
            })
            .collect()
    }

    pub fn dump(&self) -> TreeDump {
        TreeDump {
            kind: self.kind,
            root_context: self.root_context.clone(),
            num_nodes: self.num_nodes(),
            levels: self
                .levels
                .iter()
                .map(|l| LevelDump {
                    tokens: l.tokens.clone(),
                    parents: l.parent_ids.clone(),
                    flat_node_ids: l.flat_node_ids.clone(),
                })
                .collect(),
            position_ids: self.position_ids.clone(),
            mask: self.mask.to_rows(),
        }
    }
}

/// JSON debug view of a tree.
#[derive(Debug, Clone, Serialize)]
pub struct TreeDump {
    pub kind: TreeKind,
    pub root_context: Vec<Token>,
    pub num_nodes: Vec<usize>,
    pub levels: Vec<LevelDump>,
    pub position_ids: Vec<usize>,
    pub mask: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDump {
    pub tokens: Vec<Token>,
    pub parents: Vec<usize>,
    pub flat_node_ids: Vec<usize>,
}

/// Constant-branching tree: every level-`l` node gets up to `branching[l]`
/// children sampled without replacement.
pub fn build_tree_const<M: LanguageModel + ?Sized>(
    draft: &M,
    root_context: &[Token],
    branching: &[usize],
    rng: &mut RngStream,
) -> Result<DraftTree> {
    if let Some(pos) = branching.iter().position(|&b| b == 0) {
        return Err(Error::InvalidConfig(format!("branching factor {pos} is zero")));
    }
    let mut tree = DraftTree::new(TreeKind::Const, root_context);
    let mut frontier: Vec<(Vec<Token>, f64)> = vec![(root_context.to_vec(), 0.0)];
    for &b in branching {
        let mut tokens = Vec::new();
        let mut parents = Vec::new();
        let mut scores = Vec::new();
        let mut path_lp = Vec::new();
        let mut dists = Vec::with_capacity(frontier.len());
        for (k, (ctx, lp)) in frontier.iter().enumerate() {
            let d = draft.next_distribution(ctx)?;
            for (x, s) in gumbel_top_k(&d, b, rng) {
                tokens.push(x);
                parents.push(k);
                scores.push(s);
                path_lp.push(lp + d.log_prob(x));
            }
            dists.push(d);
        }
        let next: Vec<(Vec<Token>, f64)> = tokens
            .iter()
            .zip(&parents)
            .zip(&path_lp)
            .map(|((&x, &k), &lp)| {
                let mut c = frontier[k].0.clone();
                c.push(x);
                (c, lp)
            })
            .collect();
        tree.push_level(tokens, parents, scores, path_lp, dists)?;
        frontier = next;
    }
    Ok(tree)
}

/// Stochastic-beam-search tree of width `beam_width` and maximum depth `max_depth`.
pub fn build_tree_sbs<M: LanguageModel + ?Sized>(
    draft: &M,
    root_context: &[Token],
    beam_width: usize,
    max_depth: usize,
    rng: &mut RngStream,
) -> Result<DraftTree> {
    if beam_width == 0 {
        return Err(Error::InvalidConfig("beam width must be at least 1".into()));
    }
    let vocab = draft.vocab_size();
    let mut tree = DraftTree::new(TreeKind::Beam, root_context);
    let mut beam = vec![BeamEntry::root(root_context)];
    for _ in 0..max_depth {
        // (psi, parent, token, phi)
        let mut candidates: Vec<(f64, usize, Token, f64)> = Vec::new();
        let mut dists = Vec::with_capacity(beam.len());
        for (k, entry) in beam.iter().enumerate() {
            let d = draft.next_distribution(&entry.sequence)?;
            let phi: Vec<f64> = d.log_probs().iter().map(|lp| entry.phi + lp).collect();
            let perturbed = PerturbedScores::new(&phi, &sample_gumbel(rng, vocab));
            let psi = truncated_transform(entry.psi, &perturbed);
            candidates.extend(
                psi.iter()
                    .enumerate()
                    .filter(|(_, s)| s.is_finite())
                    .map(|(x, &s)| (s, k, x, phi[x])),
            );
            dists.push(d);
        }
        candidates.sort_by(|a, b| {
            desc_then_lower_id(a.0, a.1, b.0, b.1).then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(beam_width);

        let next: Vec<BeamEntry> = candidates
            .iter()
            .map(|&(psi, k, x, phi)| {
                let mut sequence = beam[k].sequence.clone();
                sequence.push(x);
                BeamEntry { sequence, phi, psi }
            })
            .collect();
        tree.push_level(
            candidates.iter().map(|c| c.2).collect(),
            candidates.iter().map(|c| c.1).collect(),
            candidates.iter().map(|c| c.0).collect(),
            candidates.iter().map(|c| c.3).collect(),
            dists,
        )?;
        beam = next;
    }
    Ok(tree)
}

/// `num_paths` independent ancestral chains of length `length`.
pub fn build_tree_comb<M: LanguageModel + ?Sized>(
    draft: &M,
    root_context: &[Token],
    num_paths: usize,
    length: usize,
    rng: &mut RngStream,
) -> Result<DraftTree> {
    if num_paths == 0 {
        return Err(Error::InvalidConfig("comb needs at least one path".into()));
    }
    let mut tree = DraftTree::new(TreeKind::Comb, root_context);
    if length == 0 {
        return Ok(tree);
    }
    let root_dist = draft.next_distribution(root_context)?;
    let mut chains: Vec<(Vec<Token>, f64)> = Vec::with_capacity(num_paths);
    let mut tokens = Vec::with_capacity(num_paths);
    let mut scores = Vec::with_capacity(num_paths);
    for _ in 0..num_paths {
        let x = sample_categorical(&root_dist, rng);
        let mut ctx = root_context.to_vec();
        ctx.push(x);
        tokens.push(x);
        scores.push(root_dist.log_prob(x));
        chains.push((ctx, root_dist.log_prob(x)));
    }
    tree.push_level(
        tokens,
        vec![0; num_paths],
        scores,
        chains.iter().map(|c| c.1).collect(),
        vec![root_dist],
    )?;
    for _ in 1..length {
        let mut tokens = Vec::with_capacity(num_paths);
        let mut scores = Vec::with_capacity(num_paths);
        let mut dists = Vec::with_capacity(num_paths);
        for (ctx, lp) in chains.iter_mut() {
            let d = draft.next_distribution(ctx)?;
            let x = sample_categorical(&d, rng);
            ctx.push(x);
            *lp += d.log_prob(x);
            tokens.push(x);
            scores.push(d.log_prob(x));
            dists.push(d);
        }
        tree.push_level(
            tokens,
            (0..num_paths).collect(),
            scores,
            chains.iter().map(|c| c.1).collect(),
            dists,
        )?;
    }
    Ok(tree)
}

/// Positions whose cached state is still valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextCache {
    pub retained_positions: Vec<usize>,
}

impl ContextCache {
    /// Cache holding `[0, len)`.
    pub fn prefix(len: usize) -> Self {
        Self {
            retained_positions: (0..len).collect(),
        }
    }

    /// Cache after evaluating a tree of `tree_nodes` nodes appended to an input of `input_len`.
    pub fn with_tree(input_len: usize, tree_nodes: usize) -> Self {
        Self::prefix(input_len + tree_nodes)
    }
}

/// Keep the input prefix and the accepted path; drop every other tree position.
pub fn filter_cache(cache: &ContextCache, input_len: usize, accepted_flat_node_ids: &[usize]) -> ContextCache {
    let mut retained: Vec<usize> = cache
        .retained_positions
        .iter()
        .copied()
        .filter(|&p| p < input_len || accepted_flat_node_ids.contains(&p))
        .collect();
    retained.sort_unstable();
    retained.dedup();
    ContextCache {
        retained_positions: retained,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{random_model, NGramModel};

    fn model(v: usize, order: usize, seed: u64) -> NGramModel {
        random_model(v, order, &mut RngStream::new(seed, 0), 1.0).unwrap()
    }

    /// Independent ancestor check via parent pointers.
    fn ancestors_or_self(tree: &DraftTree, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut cur = tree.parent_flat(i);
        while let Some(p) = cur {
            out.push(p);
            cur = tree.parent_flat(p);
        }
        out
    }

    fn assert_mask_ancestry(tree: &DraftTree) {
        let n = tree.num_tree_nodes();
        assert_eq!(tree.mask().size(), n);
        for i in 0..n {
            let anc = ancestors_or_self(tree, i);
            for j in 0..n {
                assert_eq!(tree.mask().get(i, j), anc.contains(&j), "mask[{i}][{j}]");
            }
        }
    }

    #[test]
    fn chain_mask_is_lower_triangular() {
        let m = model(4, 1, 0);
        let t = build_tree_const(&m, &[1], &[1, 1, 1], &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(
            t.mask().to_rows(),
            vec![vec![1, 0, 0], vec![1, 1, 0], vec![1, 1, 1]]
        );
        assert_eq!(t.position_ids(), &[1, 2, 3]);
    }

    #[test]
    fn two_one_mask() {
        let m = model(4, 1, 1);
        let t = build_tree_const(&m, &[0, 2], &[2, 1], &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(
            t.mask().to_rows(),
            vec![
                vec![1, 0, 0, 0],
                vec![0, 1, 0, 0],
                vec![1, 0, 1, 0],
                vec![0, 1, 0, 1]
            ]
        );
        assert_eq!(t.levels()[1].parent_ids, vec![0, 1]);
        assert_eq!(t.levels()[0].flat_node_ids, vec![2, 3]);
        assert_eq!(t.levels()[1].flat_node_ids, vec![4, 5]);
        assert_eq!(t.position_ids(), &[2, 2, 3, 3]);
    }

    #[test]
    fn single_level_mask_is_identity() {
        let m = build_attention_mask(&AttentionMask::empty(), &[0], 0).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1]]);
    }

    #[test]
    fn mask_rejects_bad_parent() {
        let first = build_attention_mask(&AttentionMask::empty(), &[0, 0], 0).unwrap();
        assert!(matches!(
            build_attention_mask(&first, &[0, 2], 0),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(build_attention_mask(&AttentionMask::empty(), &[1], 0).is_err());
    }

    #[test]
    fn three_two_one_shape() {
        let m = model(5, 2, 2);
        let t = build_tree_const(&m, &[0], &[3, 2, 1], &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(t.num_nodes(), vec![1, 3, 6, 6]);
        assert_mask_ancestry(&t);
    }

    #[test]
    fn const_shrinks_on_small_support() {
        let m = NGramModel::from_rows(4, 0, [(vec![], vec![0.6, 0.0, 0.4, 0.0])], None).unwrap();
        let t = build_tree_const(&m, &[], &[3, 3], &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(t.num_nodes(), vec![1, 2, 4]);
    }

    #[test]
    fn const_children_are_wor_ordered() {
        let m = model(4, 1, 3);
        let mut rng = RngStream::new(3, 0);
        for _ in 0..200 {
            let t = build_tree_const(&m, &[0], &[3, 2], &mut rng).unwrap();
            for level in t.levels() {
                for parent in 0..level.parent_dists.len() {
                    let kids: Vec<usize> = level.children_of(parent).collect();
                    for w in kids.windows(2) {
                        assert!(level.scores[w[0]] > level.scores[w[1]]);
                        assert_ne!(level.tokens[w[0]], level.tokens[w[1]]);
                    }
                }
            }
        }
    }

    #[test]
    fn sbs_levels_bounded_and_sorted() {
        let m = model(4, 1, 4);
        let mut rng = RngStream::new(4, 0);
        let mut truncated = 0;
        for _ in 0..300 {
            let t = build_tree_sbs(&m, &[1], 3, 3, &mut rng).unwrap();
            assert_mask_ancestry(&t);
            for level in t.levels() {
                assert!(level.len() <= 3);
                for w in level.scores.windows(2) {
                    assert!(w[0] >= w[1]);
                }
            }
            let full = t.levels().iter().skip(1).all(|lvl| {
                (0..lvl.parent_dists.len()).all(|p| lvl.children_of(p).next().is_some())
            });
            if !full {
                truncated += 1;
            }
        }
        assert!(truncated > 0);
    }

    #[test]
    fn sbs_binary_width_two_takes_both() {
        let m = model(2, 1, 5);
        let t = build_tree_sbs(&m, &[0], 2, 1, &mut RngStream::new(5, 0)).unwrap();
        let lvl = &t.levels()[0];
        let mut toks = lvl.tokens.clone();
        toks.sort();
        assert_eq!(toks, vec![0, 1]);
        assert!(lvl.scores[0] > lvl.scores[1]);
    }

    #[test]
    fn sbs_root_beam_scores() {
        let m = model(3, 1, 6);
        let t = build_tree_sbs(&m, &[2], 3, 2, &mut RngStream::new(6, 0)).unwrap();
        // Level-1 scores are truncated at the root's psi = 0; the top one equals it.
        assert_eq!(t.levels()[0].scores[0], 0.0);
        let d = m.next_distribution(&[2]).unwrap();
        for (i, &x) in t.levels()[0].tokens.iter().enumerate() {
            assert_eq!(t.levels()[0].path_log_probs[i], 0.0 + d.log_prob(x));
        }
        let entries = t.beam_entries(1);
        for e in &entries {
            assert_eq!(e.sequence.len(), 3);
            assert!(e.psi <= 0.0);
        }
    }

    #[test]
    fn comb_structure() {
        let m = model(4, 1, 7);
        let t = build_tree_comb(&m, &[0], 3, 2, &mut RngStream::new(7, 0)).unwrap();
        assert_eq!(t.num_nodes(), vec![1, 3, 3]);
        assert_eq!(t.levels()[0].parent_ids, vec![0, 0, 0]);
        assert_eq!(t.levels()[1].parent_ids, vec![0, 1, 2]);
        assert_mask_ancestry(&t);
    }

    #[test]
    fn comb_collision_rate() {
        // Two fair coin flips coincide with probability 1/2.
        let m = NGramModel::bernoulli(0.5).unwrap();
        let mut rng = RngStream::new(8, 0);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| {
                let t = build_tree_comb(&m, &[], 2, 1, &mut rng).unwrap();
                t.levels()[0].tokens[0] == t.levels()[0].tokens[1]
            })
            .count();
        let sigma = (0.25f64 / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn empty_configs_give_empty_trees() {
        let m = model(3, 1, 9);
        let mut rng = RngStream::new(9, 0);
        assert!(build_tree_const(&m, &[0], &[], &mut rng).unwrap().is_empty());
        assert!(build_tree_sbs(&m, &[0], 2, 0, &mut rng).unwrap().is_empty());
        assert!(build_tree_comb(&m, &[0], 2, 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn node_context_walks_parents() {
        let m = model(4, 2, 10);
        let t = build_tree_const(&m, &[3, 3], &[2, 2], &mut RngStream::new(10, 0)).unwrap();
        for flat in 0..t.num_tree_nodes() {
            let ctx = t.node_context(flat);
            let (l, _) = t.locate(flat);
            assert_eq!(ctx.len(), 2 + l + 1);
            assert_eq!(t.position_ids()[flat], ctx.len() - 1);
        }
    }

    #[test]
    fn filter_cache_examples() {
        let input_len = 5;
        let cache = ContextCache::with_tree(input_len, 4);
        assert_eq!(filter_cache(&cache, input_len, &[]), ContextCache::prefix(input_len));

        let chain = ContextCache::with_tree(input_len, 3);
        assert_eq!(
            filter_cache(&chain, input_len, &[5, 6, 7]),
            ContextCache::prefix(input_len + 3)
        );

        let m = model(4, 1, 11);
        let t = build_tree_const(&m, &[0; 5], &[2, 1], &mut RngStream::new(11, 0)).unwrap();
        let path = [t.levels()[0].flat_node_ids[1], t.levels()[1].flat_node_ids[1]];
        let kept = filter_cache(&cache, input_len, &path);
        assert_eq!(kept.retained_positions, vec![0, 1, 2, 3, 4, 6, 8]);
    }

    #[test]
    fn snapshots_match_draft() {
        let m = model(3, 1, 12);
        let t = build_tree_sbs(&m, &[0], 2, 2, &mut RngStream::new(12, 0)).unwrap();
        assert_eq!(t.levels()[0].parent_dists, vec![m.next_distribution(&[0]).unwrap()]);
        for (k, d) in t.levels()[1].parent_dists.iter().enumerate() {
            let ctx = t.node_context(k);
            assert_eq!(d, &m.next_distribution(&ctx).unwrap());
        }
    }
}
