//! Chunk extraction and the three scores: P-tag, N-tag and DNE-E.
//!
//! cargo run --example chunk_eval

use dnetag::corpus::Tag::{self, *};
use dnetag::eval::{evaluate, extract_chunks, format_report, iob2_validate};

fn main() -> anyhow::Result<()> {
    let gold: Vec<Vec<Tag>> = vec![
        vec![BeginNegative, InsideNegative, Outside, BeginPositive, InsidePositive],
        vec![Outside, BeginPositive, Outside],
    ];
    // second entity right span, wrong modality; orphan I opens a chunk
    let pred: Vec<Vec<Tag>> = vec![
        vec![BeginNegative, InsideNegative, Outside, BeginNegative, InsideNegative],
        vec![Outside, InsidePositive, Outside],
    ];
    for (g, p) in gold.iter().zip(&pred) {
        println!("gold {:?}", extract_chunks(g));
        println!("pred {:?}  invalid at {:?}", extract_chunks(p), iob2_validate(p));
    }
    let report = evaluate(&gold, &pred)?;
    print!("{}", format_report(&[("example", &report)]));
    Ok(())
}
