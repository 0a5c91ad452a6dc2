//! CRF_unigram and CRF_bigram next to a small BiLSTM+CRF on one held-out fold.
//!
//! cargo run --release --example baseline_compare -- [n_docs] [epochs]

use dnetag::baseline::{train_baseline, FeatureTemplate};
use dnetag::corpus::{generate_synthetic, split_folds, Document, SynthSpec};
use dnetag::eval::{evaluate_tagger, format_report, EvalReport};
use dnetag::layers::AdamConfig;
use dnetag::tagger::{train, Dims, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n_docs = args.first().copied().unwrap_or(300);
    let epochs = args.get(1).copied().unwrap_or(8);

    let docs = generate_synthetic(11, n_docs, &SynthSpec::default())?;
    let folds = split_folds(&docs, 10, 3)?;
    let take = |keep: &dyn Fn(usize) -> bool| -> Vec<Document> {
        folds.iter().enumerate().filter(|(i, _)| keep(*i)).flat_map(|(_, f)| f.iter().map(|&d| docs[d].clone())).collect()
    };
    let (train_docs, test_docs) = (take(&|i| i != 0), take(&|i| i == 0));

    let base = TrainConfig {
        epochs,
        max_epochs: epochs,
        ..TrainConfig::default()
    };
    let crf_cfg = TrainConfig {
        adam: AdamConfig { lr: 0.05, ..AdamConfig::default() },
        ..base.clone()
    };
    let lstm_cfg = TrainConfig {
        dims: Dims { char_dim: 32, icd_dim: 16, ctype_dim: 10, hidden: 32 },
        adam: AdamConfig { lr: 0.005, ..AdamConfig::default() },
        ..base
    };

    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    for template in [FeatureTemplate::Unigram, FeatureTemplate::Bigram] {
        let (m, _) = train_baseline(template, &crf_cfg, &train_docs)?;
        rows.push((template.system_name().into(), evaluate_tagger(&m, &test_docs)?));
    }
    let (m, _) = train(&lstm_cfg, &train_docs)?;
    rows.push((lstm_cfg.features.system_name().into(), evaluate_tagger(&m, &test_docs)?));

    let table: Vec<(&str, &EvalReport)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", format_report(&table));
    Ok(())
}
