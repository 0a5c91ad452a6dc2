//! Viterbi decoding with and without the IOB2 transition mask.
//!
//! cargo run --example crf_decode

use dnetag::autograd::Tensor;
use dnetag::corpus::Tag;
use dnetag::crf::{build_constraint_mask, log_partition_value, viterbi, CrfParams};

fn show(tags: &[Tag]) -> String {
    tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
}

fn main() -> anyhow::Result<()> {
    // emissions favour an I tag at the start, which IOB2 forbids
    #[rustfmt::skip]
    let emissions = Tensor::matrix(4, 5, vec![
        0.0, 0.0, 0.5, 2.0, 0.0,
        0.0, 0.0, 0.0, 2.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 1.0,
        1.5, 0.0, 0.0, 0.0, 1.0,
    ])?;
    let params = CrfParams::default();
    let mask = build_constraint_mask();

    let (free, s_free) = viterbi(&emissions, &params, None)?;
    let (masked, s_masked) = viterbi(&emissions, &params, Some(&mask))?;
    println!("unconstrained: {}  score {s_free:.3}", show(&free));
    println!("constrained:   {}  score {s_masked:.3}", show(&masked));
    println!("log Z: {:.4} unconstrained, {:.4} constrained",
        log_partition_value(&emissions, &params, None)?,
        log_partition_value(&emissions, &params, Some(&mask))?);
    Ok(())
}
