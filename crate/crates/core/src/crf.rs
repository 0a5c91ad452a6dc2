//! Linear-chain CRF over the five IOB2 tags.
//!
//! Scores of a tag path `y` given emissions `e` (`[L, K]`):
//! `start[y_1] + sum_t e[t, y_t] + sum_{t>1} trans[y_{t-1}, y_t] + end[y_L]`.
//! Everything is computed in log space; forbidden moves under a
//! [`ConstraintMask`] are `-inf` and drop out of every log-sum-exp.

use crate::autograd::{Graph, Tensor, Var};
use crate::corpus::{iob2_allowed, Tag, NUM_TAGS};
use crate::error::{Error, Result};

const K: usize = NUM_TAGS;

/// Transition, start and end scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    /// `[K, K]`, row = previous tag, column = current tag.
    pub transitions: Tensor,
    pub start: Tensor,
    pub end: Tensor,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            transitions: Tensor::zeros(&[K, K]),
            start: Tensor::zeros(&[K]),
            end: Tensor::zeros(&[K]),
        }
    }
}

/// CRF parameters living on a graph.
#[derive(Debug, Clone, Copy)]
pub struct CrfVars {
    pub transitions: Var,
    pub start: Var,
    pub end: Var,
}

impl CrfParams {
    pub fn bind(&self, g: &mut Graph) -> CrfVars {
        CrfVars {
            transitions: g.leaf(self.transitions.clone()),
            start: g.leaf(self.start.clone()),
            end: g.leaf(self.end.clone()),
        }
    }

    pub fn trans(&self, prev: usize, cur: usize) -> f64 {
        self.transitions.data()[prev * K + cur]
    }
}

/// IOB2 legality: which tags may start a sentence, follow one another, or
/// end a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintMask {
    pub trans_allowed: [[bool; K]; K],
    pub start_allowed: [bool; K],
    pub end_allowed: [bool; K],
}

pub fn build_constraint_mask() -> ConstraintMask {
    let mut trans_allowed = [[false; K]; K];
    for prev in Tag::ALL {
        for cur in Tag::ALL {
            trans_allowed[prev.index()][cur.index()] = iob2_allowed(Some(prev), cur);
        }
    }
    ConstraintMask {
        trans_allowed,
        start_allowed: Tag::ALL.map(|t| iob2_allowed(None, t)),
        end_allowed: [true; K],
    }
}

impl Default for ConstraintMask {
    fn default() -> Self {
        build_constraint_mask()
    }
}

fn penalty(allowed: bool) -> f64 {
    if allowed {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

impl ConstraintMask {
    pub fn allows(&self, tags: &[Tag]) -> bool {
        let Some((first, _)) = tags.split_first() else {
            return true;
        };
        self.start_allowed[first.index()]
            && self.end_allowed[tags[tags.len() - 1].index()]
            && tags
                .windows(2)
                .all(|w| self.trans_allowed[w[0].index()][w[1].index()])
    }

    fn trans_penalty(&self) -> Tensor {
        let data = self.trans_allowed.iter().flatten().map(|&a| penalty(a)).collect();
        Tensor::matrix(K, K, data).expect("K x K")
    }

    fn start_penalty(&self) -> Tensor {
        Tensor::vector(self.start_allowed.iter().map(|&a| penalty(a)).collect())
    }

    fn end_penalty(&self) -> Tensor {
        Tensor::vector(self.end_allowed.iter().map(|&a| penalty(a)).collect())
    }
}

fn emission_len(shape: &[usize]) -> Result<usize> {
    match shape {
        [l, k] if *l >= 1 && *k == K => Ok(*l),
        _ => Err(Error::Shape {
            op: "crf emissions",
            shapes: vec![shape.to_vec(), vec![0, K]],
        }),
    }
}

/// Unnormalized log score of `tags`.
pub fn sequence_score(g: &mut Graph, emissions: Var, crf: &CrfVars, tags: &[Tag]) -> Result<Var> {
    let len = emission_len(g.value(emissions).shape())?;
    if tags.len() != len {
        return Err(Error::invalid(format!(
            "sequence_score: {} tags for {len} positions",
            tags.len()
        )));
    }
    let mut emit = Tensor::zeros(&[len, K]);
    for (t, tag) in tags.iter().enumerate() {
        emit.data_mut()[t * K + tag.index()] = 1.0;
    }
    let mut trans = Tensor::zeros(&[K, K]);
    for w in tags.windows(2) {
        trans.data_mut()[w[0].index() * K + w[1].index()] += 1.0;
    }
    let mut first = Tensor::zeros(&[K]);
    first.data_mut()[tags[0].index()] = 1.0;
    let mut last = Tensor::zeros(&[K]);
    last.data_mut()[tags[len - 1].index()] = 1.0;

    let mut parts = Vec::with_capacity(4);
    for (var, selector) in [
        (crf.start, first),
        (emissions, emit),
        (crf.transitions, trans),
        (crf.end, last),
    ] {
        let sel = g.constant(selector);
        let picked = g.mul(var, sel)?;
        parts.push(g.sum(picked)?);
    }
    g.add_all(&parts)
}

/// Log of the sum of exponentiated scores over all (allowed) paths, by the
/// forward recursion.
pub fn log_partition(
    g: &mut Graph,
    emissions: Var,
    crf: &CrfVars,
    mask: Option<&ConstraintMask>,
) -> Result<Var> {
    let len = emission_len(g.value(emissions).shape())?;
    let (mut start, mut trans, mut end) = (crf.start, crf.transitions, crf.end);
    if let Some(m) = mask {
        let sp = g.constant(m.start_penalty());
        start = g.add(start, sp)?;
        let tp = g.constant(m.trans_penalty());
        trans = g.add(trans, tp)?;
        let ep = g.constant(m.end_penalty());
        end = g.add(end, ep)?;
    }
    let row = |g: &mut Graph, t: usize| -> Result<Var> {
        let r = g.slice(emissions, 0, t, t + 1)?;
        g.reshape(r, &[K])
    };
    let e0 = row(g, 0)?;
    let mut alpha = g.add(start, e0)?;
    for t in 1..len {
        let col = g.reshape(alpha, &[K, 1])?;
        let scores = g.add(trans, col)?;
        let reduced = g.logsumexp(scores, Some(0))?;
        let et = row(g, t)?;
        alpha = g.add(reduced, et)?;
    }
    let fin = g.add(alpha, end)?;
    g.logsumexp(fin, None)
}

/// Negative log-likelihood of `gold`. With a mask, `gold` must be allowed.
pub fn nll(
    g: &mut Graph,
    emissions: Var,
    crf: &CrfVars,
    gold: &[Tag],
    mask: Option<&ConstraintMask>,
) -> Result<Var> {
    if let Some(m) = mask {
        if !m.allows(gold) {
            return Err(Error::InvalidGold(
                "gold path contains a forbidden transition".into(),
            ));
        }
    }
    let log_z = log_partition(g, emissions, crf, mask)?;
    let score = sequence_score(g, emissions, crf, gold)?;
    g.sub(log_z, score)
}

/// Score of a path computed directly on values.
pub fn path_score(emissions: &Tensor, p: &CrfParams, tags: &[Tag]) -> f64 {
    let mut s = p.start.data()[tags[0].index()];
    for (t, tag) in tags.iter().enumerate() {
        s += emissions.at(t, tag.index());
    }
    for w in tags.windows(2) {
        s += p.trans(w[0].index(), w[1].index());
    }
    s + p.end.data()[tags[tags.len() - 1].index()]
}

/// Highest-scoring path and its score. Ties go to the lowest tag index.
pub fn viterbi(
    emissions: &Tensor,
    p: &CrfParams,
    mask: Option<&ConstraintMask>,
) -> Result<(Vec<Tag>, f64)> {
    let len = emission_len(emissions.shape())?;
    let ok_start = |j: usize| mask.map_or(true, |m| m.start_allowed[j]);
    let ok_trans = |i: usize, j: usize| mask.map_or(true, |m| m.trans_allowed[i][j]);
    let ok_end = |j: usize| mask.map_or(true, |m| m.end_allowed[j]);

    let mut delta: Vec<f64> = (0..K)
        .map(|j| {
            if ok_start(j) {
                p.start.data()[j] + emissions.at(0, j)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut back = vec![[0usize; K]; len];
    for t in 1..len {
        let mut next = [f64::NEG_INFINITY; K];
        for j in 0..K {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..K {
                if !ok_trans(i, j) {
                    continue;
                }
                let s = delta[i] + p.trans(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            next[j] = best + emissions.at(t, j);
            back[t][j] = arg;
        }
        delta = next.to_vec();
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = None;
    for j in 0..K {
        if !ok_end(j) {
            continue;
        }
        let s = delta[j] + p.end.data()[j];
        if s > best || last.is_none() && s == best {
            best = s;
            last = Some(j);
        }
    }
    let mut cur = last.ok_or_else(|| Error::Numeric("viterbi: no admissible path".into()))?;
    if best == f64::NEG_INFINITY || best.is_nan() {
        return Err(Error::Numeric("viterbi: no finite-scoring path".into()));
    }
    let mut path = vec![0usize; len];
    path[len - 1] = cur;
    for t in (1..len).rev() {
        cur = back[t][cur];
        path[t - 1] = cur;
    }
    let tags: Vec<Tag> = path
        .into_iter()
        .map(|i| Tag::from_index(i).expect("tag index"))
        .collect();
    let score = path_score(emissions, p, &tags);
    Ok((tags, score))
}

/// Log-partition on plain values (no graph).
pub fn log_partition_value(emissions: &Tensor, p: &CrfParams, mask: Option<&ConstraintMask>) -> Result<f64> {
    let mut g = Graph::new();
    let e = g.constant(emissions.clone());
    let vars = CrfVars {
        transitions: g.constant(p.transitions.clone()),
        start: g.constant(p.start.clone()),
        end: g.constant(p.end.clone()),
    };
    let z = log_partition(&mut g, e, &vars, mask)?;
    Ok(g.value(z).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{check_gradient, logsumexp_slice};
    use crate::layers::uniform;
    use crate::rng::{stream, Stream};

    fn zero_emissions(len: usize) -> Tensor {
        Tensor::zeros(&[len, K])
    }

    #[test]
    fn mask_contents() {
        let m = build_constraint_mask();
        assert!(!m.start_allowed[Tag::InsidePositive.index()]);
        assert!(!m.start_allowed[Tag::InsideNegative.index()]);
        assert!(m.start_allowed[Tag::BeginPositive.index()]);
        assert!(!m.trans_allowed[Tag::Outside.index()][Tag::InsideNegative.index()]);
        assert!(!m.trans_allowed[Tag::BeginPositive.index()][Tag::InsideNegative.index()]);
        assert!(m.trans_allowed[Tag::BeginPositive.index()][Tag::InsidePositive.index()]);
        assert!(m.trans_allowed[Tag::InsideNegative.index()][Tag::InsideNegative.index()]);
        assert!(m.end_allowed.iter().all(|&a| a));
        let allowed: usize = m.trans_allowed.iter().flatten().filter(|&&a| a).count();
        assert_eq!(allowed, 25 - 6);
    }

    #[test]
    fn zero_scores() {
        let p = CrfParams::default();
        let mut g = Graph::new();
        let e = g.leaf(zero_emissions(3));
        let v = p.bind(&mut g);
        let z = log_partition(&mut g, e, &v, None).unwrap();
        assert!((g.value(z).item() - 3.0 * 5f64.ln()).abs() < 1e-12);
        assert!((g.value(z).item() - 4.8283137).abs() < 1e-7);
        let gold = [Tag::Outside, Tag::BeginNegative, Tag::InsideNegative];
        let s = sequence_score(&mut g, e, &v, &gold).unwrap();
        assert_eq!(g.value(s).item(), 0.0);
        let loss = nll(&mut g, e, &v, &gold, None).unwrap();
        assert!((g.value(loss).item() - 3.0 * 5f64.ln()).abs() < 1e-12);

        let (path, score) = viterbi(&zero_emissions(4), &p, None).unwrap();
        assert_eq!(path, vec![Tag::BeginPositive; 4]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn single_position() {
        let mut r = stream(4, Stream::Init);
        let p = CrfParams {
            transitions: uniform(&[K, K], 1.0, &mut r),
            start: uniform(&[K], 1.0, &mut r),
            end: uniform(&[K], 1.0, &mut r),
        };
        let e = uniform(&[1, K], 1.0, &mut r);
        let expect: Vec<f64> = (0..K)
            .map(|j| p.start.data()[j] + e.at(0, j) + p.end.data()[j])
            .collect();
        let z = log_partition_value(&e, &p, None).unwrap();
        assert!((z - logsumexp_slice(&expect)).abs() < 1e-12);
        let mut g = Graph::new();
        let ev = g.constant(e.clone());
        let v = p.bind(&mut g);
        let s = sequence_score(&mut g, ev, &v, &[Tag::BeginNegative]).unwrap();
        assert!((g.value(s).item() - expect[2]).abs() < 1e-15);
    }

    #[test]
    fn viterbi_single_position_outside() {
        let p = CrfParams::default();
        let e = Tensor::matrix(1, K, vec![0.0, 0.0, 0.0, 0.0, 9.0]).unwrap();
        let (path, score) = viterbi(&e, &p, None).unwrap();
        assert_eq!(path, vec![Tag::Outside]);
        assert_eq!(score, 9.0);
    }

    #[test]
    fn masked_viterbi_avoids_forbidden_moves() {
        let p = CrfParams::default();
        // strongly prefers I-N everywhere
        let e = Tensor::matrix(2, K, vec![0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 5.0, 0.0]).unwrap();
        let (free, _) = viterbi(&e, &p, None).unwrap();
        assert_eq!(free, vec![Tag::InsideNegative; 2]);
        let (masked, score) = viterbi(&e, &p, Some(&build_constraint_mask())).unwrap();
        assert_eq!(masked, vec![Tag::BeginNegative, Tag::InsideNegative]);
        assert_eq!(score, 5.0);
    }

    #[test]
    fn nll_rejects_forbidden_gold_under_mask() {
        let p = CrfParams::default();
        let mut g = Graph::new();
        let e = g.leaf(zero_emissions(2));
        let v = p.bind(&mut g);
        let gold = [Tag::Outside, Tag::InsidePositive];
        assert!(nll(&mut g, e, &v, &gold, Some(&build_constraint_mask())).is_err());
        assert!(nll(&mut g, e, &v, &gold, None).is_ok());
    }

    #[test]
    fn nll_vanishes_with_huge_margin() {
        let gold = [Tag::BeginPositive, Tag::InsidePositive, Tag::Outside];
        let mut e = Tensor::zeros(&[3, K]);
        for (t, tag) in gold.iter().enumerate() {
            e.data_mut()[t * K + tag.index()] = 60.0;
        }
        let p = CrfParams::default();
        let mut g = Graph::new();
        let ev = g.leaf(e);
        let v = p.bind(&mut g);
        let loss = nll(&mut g, ev, &v, &gold, None).unwrap();
        let l = g.value(loss).item();
        assert!(l.abs() < 1e-12, "{l}");
    }

    #[test]
    fn emission_gradient_is_marginals_minus_gold() {
        let mut r = stream(9, Stream::Init);
        let p = CrfParams {
            transitions: uniform(&[K, K], 1.0, &mut r),
            start: uniform(&[K], 1.0, &mut r),
            end: uniform(&[K], 1.0, &mut r),
        };
        let e = uniform(&[3, K], 2.0, &mut r);
        let gold = [Tag::BeginNegative, Tag::InsideNegative, Tag::Outside];
        let err = check_gradient(
            |g, v| {
                let vars = CrfVars {
                    transitions: v[1],
                    start: v[2],
                    end: v[3],
                };
                nll(g, v[0], &vars, &gold, Some(&build_constraint_mask()))
            },
            &[e.clone(), p.transitions.clone(), p.start.clone(), p.end.clone()],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");

        // each gradient row sums to zero: marginals sum to one, gold is one-hot
        let mut g = Graph::new();
        let ev = g.leaf(e);
        let vars = p.bind(&mut g);
        let loss = nll(&mut g, ev, &vars, &gold, None).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(ev).unwrap();
        for t in 0..3 {
            assert!(grad.row(t).iter().sum::<f64>().abs() < 1e-12);
            assert!(grad.at(t, gold[t].index()) < 0.0);
        }
    }

    #[test]
    fn bad_emission_shape() {
        let p = CrfParams::default();
        assert!(viterbi(&Tensor::zeros(&[3, 4]), &p, None).is_err());
        assert!(viterbi(&Tensor::zeros(&[0, K]), &p, None).is_err());
        let mut g = Graph::new();
        let e = g.leaf(zero_emissions(2));
        let v = p.bind(&mut g);
        assert!(sequence_score(&mut g, e, &v, &[Tag::Outside]).is_err());
    }
}
