//! Regenerates the model files under `fixtures/models`.
//!
//! `cargo run -p rsd-cli --example make_fixtures -- <out dir>`

use std::path::PathBuf;

use rsd_core::lm::random_model;
use rsd_core::{NGramModel, RngStream};

const SEED: u64 = 20_240_501;

fn main() -> anyhow::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/models".into()));
    std::fs::create_dir_all(&dir)?;

    let mut rng = RngStream::new(SEED, 0);
    random_model(8, 2, &mut rng, 1.0)?.save(dir.join("v8_draft.json"))?;
    random_model(8, 2, &mut rng, 1.0)?.save(dir.join("v8_target.json"))?;

    let unigram = |w: Vec<f64>| NGramModel::from_rows(3, 0, vec![(vec![], w)], None);
    unigram(vec![0.6, 0.3, 0.1])?.save(dir.join("skew_draft.json"))?;
    unigram(vec![0.1, 0.3, 0.6])?.save(dir.join("skew_target.json"))?;
    Ok(())
}
