//! Generates a synthetic corpus and prints a few sentences and tag counts.
//!
//! cargo run --example synth_corpus -- [seed] [n_docs]

use std::collections::BTreeMap;

use dnetag::corpus::{generate_synthetic, write_corpus, SynthSpec};

fn main() -> anyhow::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let seed = args.first().copied().unwrap_or(1);
    let n_docs = args.get(1).copied().unwrap_or(20) as usize;

    let spec = SynthSpec::default();
    let docs = generate_synthetic(seed, n_docs, &spec)?;
    let mut counts = BTreeMap::new();
    for s in docs.iter().flat_map(|d| &d.sentences) {
        for t in s.tags().unwrap_or_default() {
            *counts.entry(t.as_str()).or_insert(0usize) += 1;
        }
    }
    for s in docs[0].sentences.iter().take(3) {
        println!("{}", s.text());
    }
    println!("tag counts: {counts:?}");
    println!("gazetteer entries: {}", spec.gazetteer()?.len());
    print!("{}", write_corpus(&docs[..1]).lines().take(8).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}
