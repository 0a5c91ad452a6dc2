//! Trains a BiLSTM+CRF on a synthetic corpus and scores a held-out tenth.
//!
//! cargo run --release --example train_tagger -- [n_docs] [epochs] [hidden]

use dnetag::corpus::{generate_synthetic, split_folds, Document, SynthSpec};
use dnetag::eval::{evaluate_tagger, format_report};
use dnetag::tagger::{train, Dims, FeatureConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let n_docs = args.first().copied().unwrap_or(500);
    let epochs = args.get(1).copied().unwrap_or(20);
    let hidden = args.get(2).copied().unwrap_or(100);

    let docs = generate_synthetic(2024, n_docs, &SynthSpec::default())?;
    let folds = split_folds(&docs, 10, 7)?;
    let pick = |keep: &dyn Fn(usize) -> bool| -> Vec<Document> {
        folds.iter().enumerate().filter(|(i, _)| keep(*i)).flat_map(|(_, f)| f.iter().map(|&d| docs[d].clone())).collect()
    };
    let (train_docs, test_docs) = (pick(&|i| i != 0), pick(&|i| i == 0));

    let cfg = TrainConfig {
        features: FeatureConfig { use_ctype: false, use_icd: false },
        dims: Dims { hidden, ..Dims::default() },
        epochs,
        max_epochs: epochs.max(1),
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let (model, trace) = train(&cfg, &train_docs)?;
    for (e, loss) in trace.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", e + 1);
    }
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    let report = evaluate_tagger(&model, &test_docs)?;
    print!("{}", format_report(&[(cfg.features.system_name(), &report)]));
    Ok(())
}
