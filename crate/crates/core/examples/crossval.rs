//! Cross-validated comparison of two feature CRFs with per-fold tables.
//!
//! cargo run --release --example crossval -- [n_docs] [k]

use dnetag::baseline::{train_baseline, FeatureTemplate};
use dnetag::corpus::{generate_synthetic, Document, SynthSpec};
use dnetag::eval::{crossval, format_comparison, format_summary, Comparison};
use dnetag::layers::AdamConfig;
use dnetag::tagger::TrainConfig;

fn main() -> anyhow::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n_docs = args.first().copied().unwrap_or(100);
    let k = args.get(1).copied().unwrap_or(5);

    let docs = generate_synthetic(21, n_docs, &SynthSpec::default())?;
    let cfg = TrainConfig {
        epochs: 5,
        max_epochs: 5,
        adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let run = |t: FeatureTemplate| {
        crossval(|train: &[Document]| train_baseline(t, &cfg, train).map(|r| r.0), &docs, k, 4, 1)
    };
    let uni = run(FeatureTemplate::Unigram)?;
    let bi = run(FeatureTemplate::Bigram)?;
    print!("{}", format_summary("CRF_unigram", &uni));
    print!("{}", format_summary("CRF_bigram", &bi));
    print!("{}", format_comparison(&Comparison::new("CRF_unigram", uni, "CRF_bigram", bi)?));
    Ok(())
}
