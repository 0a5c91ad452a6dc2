//! Dictionary lookup over raw text: ICD code and character type per character.
//!
//! cargo run --example gazetteer_annotate

use dnetag::corpus::{Gazetteer, Sentence};

fn main() -> anyhow::Result<()> {
    let gaz = Gazetteer::parse("心房細動\tI48\n胃癌\tC16\n癌\tC80\n肺炎\tJ18\n")?;
    for text in ["心房細動と胃癌の既往なし。", "肺炎を認める"] {
        let mut s = Sentence::from_text(text);
        s.annotate(&gaz);
        println!("{text}");
        for r in &s.records {
            println!("  {}\t{}\t{}", r.ch, r.icd.as_deref().unwrap_or("-"), r.ctype.as_str());
        }
    }
    Ok(())
}
