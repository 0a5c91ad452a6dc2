//! Reverse-mode gradients of the CRF loss against central differences.
//!
//! cargo run --example gradient_check

use dnetag::autograd::{check_gradient, Tensor};
use dnetag::corpus::Tag;
use dnetag::crf::{nll, CrfVars};
use dnetag::layers::uniform;
use dnetag::rng::{stream, Stream};

fn main() -> anyhow::Result<()> {
    let mut rng = stream(3, Stream::Init);
    let params: Vec<Tensor> = [vec![4, 5], vec![5, 5], vec![5], vec![5]]
        .iter()
        .map(|s| uniform(s, 1.0, &mut rng))
        .collect();
    let gold = [Tag::BeginNegative, Tag::InsideNegative, Tag::Outside, Tag::BeginPositive];
    for h in [1e-3, 1e-5, 1e-7] {
        let err = check_gradient(
            |g, v| {
                let crf = CrfVars { transitions: v[1], start: v[2], end: v[3] };
                nll(g, v[0], &crf, &gold, None)
            },
            &params,
            h,
        )?;
        println!("h = {h:e}: max relative error {err:.3e}");
    }
    Ok(())
}
