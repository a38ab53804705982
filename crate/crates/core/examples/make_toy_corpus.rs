//! Regenerates `data/toy_corpus.csv`: `cargo run --example make_toy_corpus > data/toy_corpus.csv`.

use std::io::Write;

use tempora::synthetic::{policy_corpus, session_years, to_csv};

fn main() -> anyhow::Result<()> {
    let raw = policy_corpus(&session_years(), 4, 4, 2023);
    std::io::stdout().write_all(&to_csv(&raw)?)?;
    Ok(())
}
