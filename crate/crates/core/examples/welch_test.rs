//! Welch's t-test on two sets of per-fold scores.
//!
//! cargo run --example welch_test

use dnetag::eval::welch_t;

fn main() -> anyhow::Result<()> {
    let bilstm = [88.2, 90.1, 86.5, 91.0, 89.4, 87.7, 90.6, 88.9, 89.8, 87.1];
    let crf = [71.3, 75.8, 69.9, 74.2, 72.5, 70.4, 76.1, 73.0, 71.8, 74.9];
    for (name, xs, ys) in [("bilstm vs crf", &bilstm, &crf), ("bilstm vs itself", &bilstm, &bilstm)] {
        let r = welch_t(xs, ys)?;
        println!("{name}: t = {:.4}, df = {:.3}, p = {:.3e}", r.t, r.df, r.p);
    }
    Ok(())
}
