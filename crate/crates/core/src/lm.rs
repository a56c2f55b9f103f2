//! Tabular n-gram language models.
//!
//! An order-`m` model maps the last `min(m, len)` tokens of a context to a
//! next-token [`Distribution`]. Contexts shorter than `m` (sequence starts)
//! are ordinary keys; there is no BOS token.
//!
//! Model files are JSON:
//!
//! ```json
//! {"vocab_size": 2, "order": 1,
//!  "default": ["0.5", "0.5"],
//!  "table": {"": ["0.7", "0.3"], "1": ["0.1", "0.9"]}}
//! ```
//!
//! Probabilities are decimal strings so that a save/load round trip is
//! bit-exact. `default` is optional; without it every context of length
//! `0..=order` must be present.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand_distr::{Distribution as _, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{apply_nucleus, apply_temperature, normalize, Distribution, Token};
use crate::rng::RngStream;

/// Tolerance on row sums when reading model files.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Anything that yields a next-token distribution for a context.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn next_distribution(&self, context: &[Token]) -> Result<Distribution>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, context: &[Token]) -> Result<Distribution> {
        (**self).next_distribution(context)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    probs: Vec<f64>,
    dist: Distribution,
}

impl Row {
    fn new(probs: Vec<f64>) -> Result<Self> {
        let dist = normalize(&probs)?;
        Ok(Self { probs, dist })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    vocab_size: usize,
    order: usize,
    table: BTreeMap<Vec<Token>, Row>,
    default: Option<Row>,
}

impl NGramModel {
    /// Build from probability rows. Rows are normalized; each must carry
    /// positive mass and have length `vocab_size`.
    pub fn from_rows(
        vocab_size: usize,
        order: usize,
        rows: impl IntoIterator<Item = (Vec<Token>, Vec<f64>)>,
        default: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (ctx, probs) in rows {
            if ctx.len() > order {
                return Err(Error::InvalidConfig(format!(
                    "context {ctx:?} longer than order {order}"
                )));
            }
            if let Some(&t) = ctx.iter().find(|&&t| t >= vocab_size) {
                return Err(Error::TokenOutOfRange { token: t, vocab_size });
            }
            if probs.len() != vocab_size {
                return Err(Error::SupportMismatch(format!(
                    "row for {ctx:?} has {} entries, vocabulary has {vocab_size}",
                    probs.len()
                )));
            }
            table.insert(ctx, Row::new(probs)?);
        }
        let default = default.map(Row::new).transpose()?;
        Ok(Self {
            vocab_size,
            order,
            table,
            default,
        })
    }

    /// Order-0 model over `{0, 1}` with `P(1) = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::from_rows(2, 0, [(vec![], vec![1.0 - p, p])], None)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of explicit table rows.
    pub fn num_rows(&self) -> usize {
        self.table.len()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[Token], &Distribution)> {
        self.table.iter().map(|(k, r)| (k.as_slice(), &r.dist))
    }

    fn lookup(&self, context: &[Token]) -> Result<&Row> {
        let key = &context[context.len().saturating_sub(self.order)..];
        self.table
            .get(key)
            .or(self.default.as_ref())
            .ok_or_else(|| Error::UnknownContext {
                context: key.to_vec(),
            })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            vocab_size: self.vocab_size,
            order: self.order,
            default: self.default.as_ref().map(|r| probs_to_strings(&r.probs)),
            table: self
                .table
                .iter()
                .map(|(k, r)| (context_key(k), probs_to_strings(&r.probs)))
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Self::parse(&text).map_err(|detail| Error::MalformedFile {
            path: path.to_path_buf(),
            detail,
        })
    }

    /// Parse the JSON model format. Errors are human-readable diagnostics
    /// naming the line and field at fault.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| {
            format!("line {} column {}: {e}", e.line(), e.column())
        })?;
        let v = file.vocab_size;
        if v < 1 {
            return Err("field `vocab_size`: must be at least 1".into());
        }
        let row = |field: &str, key: Option<&str>, probs: &[String]| -> std::result::Result<Vec<f64>, String> {
            let at = describe(text, field, key);
            if probs.len() != v {
                return Err(format!("{at}: expected {v} probabilities, found {}", probs.len()));
            }
            let parsed = probs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite() && *x >= 0.0)
                        .ok_or_else(|| format!("{at}: entry {i} ({s:?}) is not a probability"))
                })
                .collect::<std::result::Result<Vec<f64>, String>>()?;
            let sum: f64 = parsed.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(format!("{at}: probabilities sum to {sum}, expected 1"));
            }
            Ok(parsed)
        };

        let mut rows = Vec::with_capacity(file.table.len());
        for (key, probs) in &file.table {
            let ctx = parse_context_key(key).ok_or_else(|| {
                format!("{}: context key is not a comma-separated token list", describe(text, "table", Some(key)))
            })?;
            if ctx.len() > file.order {
                return Err(format!(
                    "{}: context longer than order {}",
                    describe(text, "table", Some(key)),
                    file.order
                ));
            }
            if let Some(t) = ctx.iter().find(|&&t| t >= v) {
                return Err(format!(
                    "{}: token {t} outside vocabulary of size {v}",
                    describe(text, "table", Some(key))
                ));
            }
            rows.push((ctx, row("table", Some(key), probs)?));
        }
        let default = file
            .default
            .as_deref()
            .map(|p| row("default", None, p))
            .transpose()?;

        if default.is_none() {
            let present: std::collections::BTreeSet<&Vec<Token>> = rows.iter().map(|(c, _)| c).collect();
            for ctx in all_contexts(v, file.order) {
                if !present.contains(&ctx) {
                    return Err(format!(
                        "field `table`: missing context {:?} and no `default` row",
                        context_key(&ctx)
                    ));
                }
            }
        }
        NGramModel::from_rows(v, file.order, rows, default).map_err(|e| e.to_string())
    }
}

impl LanguageModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_distribution(&self, context: &[Token]) -> Result<Distribution> {
        if let Some(&t) = context.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                token: t,
                vocab_size: self.vocab_size,
            });
        }
        Ok(self.lookup(context)?.dist.clone())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    vocab_size: usize,
    order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<Vec<String>>,
    table: BTreeMap<String, Vec<String>>,
}

fn probs_to_strings(p: &[f64]) -> Vec<String> {
    // `Display` for f64 is the shortest string that parses back to the same bits.
    p.iter().map(|x| x.to_string()).collect()
}

fn context_key(ctx: &[Token]) -> String {
    ctx.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_context_key(key: &str) -> Option<Vec<Token>> {
    if key.trim().is_empty() {
        return Some(vec![]);
    }
    key.split(',').map(|s| s.trim().parse().ok()).collect()
}

/// `field "key" (line N)` for diagnostics, locating the key in the source text.
fn describe(text: &str, field: &str, key: Option<&str>) -> String {
    let needle = match key {
        Some(k) => format!("\"{k}\""),
        None => format!("\"{field}\""),
    };
    let line = text
        .lines()
        .position(|l| l.contains(&needle))
        .map(|i| format!(" (line {})", i + 1))
        .unwrap_or_default();
    match key {
        Some(k) => format!("field `{field}[\"{k}\"]`{line}"),
        None => format!("field `{field}`{line}"),
    }
}

/// Every context of length `0..=order`, shortest first, lexicographic within a length.
pub fn all_contexts(vocab_size: usize, order: usize) -> Vec<Vec<Token>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<Vec<Token>> = vec![vec![]];
    for _ in 0..order {
        let mut next = Vec::with_capacity(frontier.len() * vocab_size);
        for ctx in &frontier {
            for t in 0..vocab_size {
                let mut c = ctx.clone();
                c.push(t);
                next.push(c);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Random model whose rows are symmetric-Dirichlet draws.
pub fn random_model(
    vocab_size: usize,
    order: usize,
    rng: &mut RngStream,
    concentration: f64,
) -> Result<NGramModel> {
    if vocab_size < 2 {
        return Err(Error::InvalidConfig("random models need vocab_size >= 2".into()));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidConfig(format!("concentration {concentration}: {e}")))?;
    let rows = all_contexts(vocab_size, order)
        .into_iter()
        .map(|ctx| {
            let probs = loop {
                let w: Vec<f64> = (0..vocab_size).map(|_| gamma.sample(rng.inner_mut())).collect();
                let s: f64 = w.iter().sum();
                if s > 0.0 && s.is_finite() {
                    break w.into_iter().map(|x| x / s).collect::<Vec<f64>>();
                }
            };
            (ctx, probs)
        })
        .collect::<Vec<_>>();
    NGramModel::from_rows(vocab_size, order, rows, None)
}

/// Sampling transforms applied identically to draft and target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transforms {
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "one")]
    pub top_p: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Transforms {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 1.0,
        }
    }
}

impl Transforms {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::NonPositiveTemperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidNucleus(self.top_p));
        }
        Ok(())
    }

    pub fn apply(&self, d: &Distribution) -> Result<Distribution> {
        apply_nucleus(&apply_temperature(d, self.temperature)?, self.top_p)
    }

    pub fn is_identity(&self) -> bool {
        self.temperature == 1.0 && self.top_p == 1.0
    }
}

/// A model whose outputs pass through temperature then nucleus filtering.
#[derive(Debug, Clone)]
pub struct Transformed<M> {
    inner: M,
    transforms: Transforms,
}

impl<M: LanguageModel> Transformed<M> {
    pub fn new(inner: M, transforms: Transforms) -> Result<Self> {
        transforms.validate()?;
        Ok(Self { inner, transforms })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn transforms(&self) -> Transforms {
        self.transforms
    }
}

impl<M: LanguageModel> LanguageModel for Transformed<M> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_distribution(&self, context: &[Token]) -> Result<Distribution> {
        self.transforms.apply(&self.inner.next_distribution(context)?)
    }
}

/// The law every recovery check compares against.
pub fn effective_target<M: LanguageModel>(target: M, transforms: Transforms) -> Result<Transformed<M>> {
    Transformed::new(target, transforms)
}

/// Draft `p` and target `q` over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPair {
    pub draft: NGramModel,
    pub target: NGramModel,
}

impl ModelPair {
    pub fn new(draft: NGramModel, target: NGramModel) -> Result<Self> {
        if draft.vocab_size != target.vocab_size {
            return Err(Error::VocabMismatch {
                draft: draft.vocab_size,
                target: target.vocab_size,
            });
        }
        Ok(Self { draft, target })
    }

    pub fn vocab_size(&self) -> usize {
        self.draft.vocab_size
    }

    /// Both sides wrapped with the same transforms.
    pub fn effective(&self, transforms: Transforms) -> Result<(Transformed<&NGramModel>, Transformed<&NGramModel>)> {
        Ok((
            Transformed::new(&self.draft, transforms)?,
            Transformed::new(&self.target, transforms)?,
        ))
    }
}
