//! Trains a tiny tagger, saves it, reloads it and compares predictions.
//!
//! cargo run --release --example model_roundtrip

use dnetag::corpus::{generate_synthetic, SynthSpec};
use dnetag::tagger::{train, Dims, TaggerModel, TrainConfig};

fn main() -> anyhow::Result<()> {
    let docs = generate_synthetic(9, 30, &SynthSpec::default())?;
    let cfg = TrainConfig {
        dims: Dims { char_dim: 16, icd_dim: 8, ctype_dim: 4, hidden: 16 },
        epochs: 3,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (model, _) = train(&cfg, &docs)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("tagger.model");
    model.save(&path)?;
    let text = std::fs::read_to_string(&path)?;
    println!("{} bytes, last line: {}", text.len(), text.lines().last().unwrap_or(""));

    let back = TaggerModel::load(&path)?;
    println!("parameters identical: {}", back == model);
    let s = back.predict("胃癌の既往なし。", None)?;
    let tags: Vec<&str> = s.tags().unwrap_or_default().iter().map(|t| t.as_str()).collect();
    println!("{} -> {}", s.text(), tags.join(" "));
    Ok(())
}
