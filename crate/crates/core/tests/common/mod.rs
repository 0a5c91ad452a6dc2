//! Brute-force CRF oracle shared by the integration tests. Scores every one
//! of the 5^L tag paths explicitly.
#![allow(dead_code)]

use dnetag::autograd::Tensor;
use dnetag::corpus::Tag;
use dnetag::crf::{ConstraintMask, CrfParams};
use dnetag::layers::uniform;
use dnetag::rng::Rng;

pub const K: usize = 5;

pub fn all_paths(len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..K.pow(len as u32)).map(move |mut code| {
        let mut path = vec![0; len];
        for slot in path.iter_mut().rev() {
            *slot = code % K;
            code /= K;
        }
        path
    })
}

pub fn score(e: &Tensor, p: &CrfParams, path: &[usize]) -> f64 {
    let (start, end, trans) = (p.start.data(), p.end.data(), p.transitions.data());
    let mut s = start[path[0]] + end[path[path.len() - 1]];
    for (t, &y) in path.iter().enumerate() {
        s += e.data()[t * K + y];
        if t > 0 {
            s += trans[path[t - 1] * K + y];
        }
    }
    s
}

pub fn allowed(mask: &ConstraintMask, path: &[usize]) -> bool {
    mask.start_allowed[path[0]]
        && mask.end_allowed[path[path.len() - 1]]
        && path.windows(2).all(|w| mask.trans_allowed[w[0]][w[1]])
}

/// Scores of every path (restricted to `mask` when given).
pub fn path_scores(e: &Tensor, p: &CrfParams, mask: Option<&ConstraintMask>) -> Vec<(Vec<usize>, f64)> {
    let len = e.shape()[0];
    all_paths(len)
        .filter(|path| mask.map_or(true, |m| allowed(m, path)))
        .map(|path| {
            let s = score(e, p, &path);
            (path, s)
        })
        .collect()
}

pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn random_instance(rng: &mut Rng, len: usize, scale: f64) -> (Tensor, CrfParams) {
    let p = CrfParams {
        transitions: uniform(&[K, K], scale, rng),
        start: uniform(&[K], scale, rng),
        end: uniform(&[K], scale, rng),
    };
    (uniform(&[len, K], scale, rng), p)
}

pub fn to_tags(path: &[usize]) -> Vec<Tag> {
    path.iter().map(|&i| Tag::from_index(i).unwrap()).collect()
}
