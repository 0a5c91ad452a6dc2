//! Chunk-level scoring in the CoNLL-2000 style, cross-validation and
//! Welch's t-test.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{split_folds, Document, Modality, Sentence, Tag};
use crate::error::{Error, Result};
use crate::tagger::SequenceTagger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ChunkType {
    P,
    N,
    /// Either modality, after merging.
    D,
}

impl ChunkType {
    fn of(tag: Tag) -> Option<ChunkType> {
        tag.modality().map(|m| match m {
            Modality::Positive => ChunkType::P,
            Modality::Negative => ChunkType::N,
        })
    }
}

/// Inclusive character span, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Chunk {
    pub start: usize,
    pub end: usize,
    pub ty: ChunkType,
}

fn chunks_with(tags: &[Tag], merge: bool) -> Vec<Chunk> {
    let mut out = Vec::new();
    let mut open: Option<Chunk> = None;
    let mut prev_ty = None;
    for (i, &tag) in tags.iter().enumerate() {
        let ty = ChunkType::of(tag).map(|t| if merge { ChunkType::D } else { t });
        let continues = tag.is_inside() && ty == prev_ty;
        if !continues {
            out.extend(open.take());
            if let Some(ty) = ty {
                open = Some(Chunk { start: i, end: i, ty });
            }
        } else if let Some(c) = open.as_mut() {
            c.end = i;
        }
        prev_ty = ty;
    }
    out.extend(open);
    out
}

/// Chunks of a tag sequence. A chunk starts at `B-X`, or at `I-X` after `O`,
/// the sequence start or a different type, and runs through the following
/// `I-X` tags.
pub fn extract_chunks(tags: &[Tag]) -> Vec<Chunk> {
    chunks_with(tags, false)
}

/// Positions (0-based) where an `I-X` tag does not follow `B-X` or `I-X`.
pub fn iob2_validate(tags: &[Tag]) -> Vec<usize> {
    (0..tags.len())
        .filter(|&i| !crate::corpus::iob2_allowed(i.checked_sub(1).map(|j| tags[j]), tags[i]))
        .collect()
}

/// Precision, recall and F1 in percent, with their counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl Prf {
    pub fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(correct, predicted);
        let recall = pct(correct, gold);
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            gold,
            predicted,
            correct,
            precision,
            recall,
            f,
        }
    }
}

fn check_aligned(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidGold(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::InvalidGold(format!(
                "sentence {}: {} gold tags but {} predicted",
                i + 1,
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

fn score(gold: &[Vec<Tag>], pred: &[Vec<Tag>], filter: Option<ChunkType>, merge: bool) -> Result<Prf> {
    check_aligned(gold, pred)?;
    let keep = |c: &Chunk| filter.map_or(true, |t| c.ty == t);
    let (mut ng, mut np, mut nc) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gc: Vec<Chunk> = chunks_with(g, merge).into_iter().filter(keep).collect();
        let pc: Vec<Chunk> = chunks_with(p, merge).into_iter().filter(keep).collect();
        ng += gc.len();
        np += pc.len();
        nc += pc.iter().filter(|c| gc.contains(c)).count();
    }
    Ok(Prf::from_counts(ng, np, nc))
}

/// Chunk scores over aligned sentences, optionally restricted to one type.
pub fn chunk_prf(gold: &[Vec<Tag>], pred: &[Vec<Tag>], type_filter: Option<ChunkType>) -> Result<Prf> {
    score(gold, pred, type_filter, false)
}

/// Scores with modality ignored: P and N chunks both become D.
pub fn merged_eval(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<Prf> {
    score(gold, pred, None, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub positive: Prf,
    pub negative: Prf,
    pub dne: Prf,
    pub overall: Prf,
    /// Chunk types with no gold chunk in this evaluation set.
    pub warnings: Vec<String>,
}

pub fn evaluate(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> Result<EvalReport> {
    let positive = chunk_prf(gold, pred, Some(ChunkType::P))?;
    let negative = chunk_prf(gold, pred, Some(ChunkType::N))?;
    let mut warnings = Vec::new();
    for (name, prf) in [("P-tag", &positive), ("N-tag", &negative)] {
        if prf.gold == 0 {
            warnings.push(format!("no gold {name} chunks; recall recorded as 0"));
        }
    }
    Ok(EvalReport {
        positive,
        negative,
        dne: merged_eval(gold, pred)?,
        overall: chunk_prf(gold, pred, None)?,
        warnings,
    })
}

/// The metrics reported per fold, in a fixed order.
pub const METRIC_NAMES: [&str; 9] = [
    "P-tag precision",
    "P-tag recall",
    "P-tag F",
    "N-tag precision",
    "N-tag recall",
    "N-tag F",
    "DNE-E precision",
    "DNE-E recall",
    "DNE-E F",
];

impl EvalReport {
    pub fn metrics(&self) -> [f64; 9] {
        let [p, n, d] = [&self.positive, &self.negative, &self.dne];
        [
            p.precision,
            p.recall,
            p.f,
            n.precision,
            n.recall,
            n.f,
            d.precision,
            d.recall,
            d.f,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub folds: Vec<EvalReport>,
    pub mean: [f64; 9],
    /// Sample standard deviation (n - 1 denominator).
    pub std: [f64; 9],
}

impl FoldSummary {
    pub fn new(folds: Vec<EvalReport>) -> Result<Self> {
        if folds.len() < 2 {
            return Err(Error::invalid("a fold summary needs at least two folds"));
        }
        let k = folds.len() as f64;
        let mut mean = [0.0; 9];
        let mut std = [0.0; 9];
        for m in 0..9 {
            let xs: Vec<f64> = folds.iter().map(|r| r.metrics()[m]).collect();
            mean[m] = xs.iter().sum::<f64>() / k;
            std[m] = (xs.iter().map(|x| (x - mean[m]).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        }
        Ok(FoldSummary { folds, mean, std })
    }

    pub fn metric_values(&self, m: usize) -> Vec<f64> {
        self.folds.iter().map(|r| r.metrics()[m]).collect()
    }
}

/// Tags every sentence of `docs` with `tagger`.
pub fn tag_documents<T: SequenceTagger + ?Sized>(tagger: &T, docs: &[Document]) -> Result<Vec<Vec<Tag>>> {
    docs.iter()
        .flat_map(|d| &d.sentences)
        .map(|s| tagger.tag(s))
        .collect()
}

pub fn gold_of(docs: &[Document]) -> Result<Vec<Vec<Tag>>> {
    docs.iter()
        .flat_map(|d| &d.sentences)
        .enumerate()
        .map(|(i, s): (usize, &Sentence)| {
            s.tags()
                .ok_or_else(|| Error::InvalidGold(format!("sentence {} has no gold tags", i + 1)))
        })
        .collect()
}

pub fn evaluate_tagger<T: SequenceTagger + ?Sized>(tagger: &T, docs: &[Document]) -> Result<EvalReport> {
    let gold = gold_of(docs)?;
    let pred = tag_documents(tagger, docs)?;
    evaluate(&gold, &pred)
}

fn fold_split(docs: &[Document], folds: &[Vec<usize>], i: usize) -> (Vec<Document>, Vec<Document>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (j, fold) in folds.iter().enumerate() {
        let target = if j == i { &mut test } else { &mut train };
        target.extend(fold.iter().map(|&d| docs[d].clone()));
    }
    (train, test)
}

fn run_pool<R: Send>(parallel: usize, jobs: usize, f: impl Fn(usize) -> Result<R> + Sync) -> Result<Vec<R>> {
    if parallel <= 1 {
        return (0..jobs).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..jobs).into_par_iter().map(&f).collect())
}

/// k-fold cross-validation by document: fold `i` is scored by a model trained
/// on the others. Up to `parallel` folds run at once; results are ordered by
/// fold index either way.
pub fn crossval<T, F>(train_fn: F, docs: &[Document], k: usize, seed: u64, parallel: usize) -> Result<FoldSummary>
where
    T: SequenceTagger,
    F: Fn(&[Document]) -> Result<T> + Sync,
{
    let folds = split_folds(docs, k, seed)?;
    let reports = run_pool(parallel, k, |i| {
        let (train, test) = fold_split(docs, &folds, i);
        let model = train_fn(&train)?;
        evaluate_tagger(&model, &test)
    })?;
    FoldSummary::new(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    /// Set when both samples are constant and their means differ.
    pub infinite: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test.
pub fn welch_t(xs: &[f64], ys: &[f64]) -> Result<WelchResult> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::invalid("welch_t needs at least two values per sample"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("welch_t got a non-finite value".into()));
    }
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (m1, v1) = mean_var(xs);
    let (m2, v2) = mean_var(ys);
    let (a, b) = (v1 / n1, v2 / n2);
    if a + b == 0.0 {
        let df = n1 + n2 - 2.0;
        return Ok(if m1 == m2 {
            WelchResult {
                t: 0.0,
                df,
                p: 1.0,
                infinite: false,
            }
        } else {
            WelchResult {
                t: if m1 > m2 { f64::INFINITY } else { f64::NEG_INFINITY },
                df,
                p: 0.0,
                infinite: true,
            }
        });
    }
    let t = (m1 - m2) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    let p = if t == 0.0 {
        1.0
    } else {
        statrs::function::beta::beta_reg(df / 2.0, 0.5, df / (df + t * t))
    };
    Ok(WelchResult {
        t,
        df,
        p,
        infinite: false,
    })
}

/// Two systems scored on identical folds, with a Welch test per metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name_a: String,
    pub name_b: String,
    pub a: FoldSummary,
    pub b: FoldSummary,
    pub tests: Vec<WelchResult>,
}

impl Comparison {
    pub fn new(name_a: &str, a: FoldSummary, name_b: &str, b: FoldSummary) -> Result<Self> {
        let tests = (0..9)
            .map(|m| welch_t(&a.metric_values(m), &b.metric_values(m)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Comparison {
            name_a: name_a.into(),
            name_b: name_b.into(),
            a,
            b,
            tests,
        })
    }
}

fn table_header(out: &mut String, label_width: usize) {
    let _ = writeln!(
        out,
        "{:<w$} | {:^23} | {:^23} | {:^23}",
        "",
        "P-tag",
        "N-tag",
        "DNE-E",
        w = label_width
    );
    let _ = writeln!(
        out,
        "{:<w$} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}",
        "",
        "Prec",
        "Rec",
        "F",
        "Prec",
        "Rec",
        "F",
        "Prec",
        "Rec",
        "F",
        w = label_width
    );
}

fn table_row(out: &mut String, label: &str, m: &[f64; 9], label_width: usize) {
    let _ = writeln!(
        out,
        "{:<w$} | {:>7.2} {:>7.2} {:>7.2} | {:>7.2} {:>7.2} {:>7.2} | {:>7.2} {:>7.2} {:>7.2}",
        label,
        m[0],
        m[1],
        m[2],
        m[3],
        m[4],
        m[5],
        m[6],
        m[7],
        m[8],
        w = label_width
    );
}

/// Aligned table with precision, recall and F for each column group.
pub fn format_report(rows: &[(&str, &EvalReport)]) -> String {
    let w = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    table_header(&mut out, w);
    for (name, r) in rows {
        table_row(&mut out, name, &r.metrics(), w);
    }
    for (name, r) in rows {
        for warn in &r.warnings {
            let _ = writeln!(out, "warning: {name}: {warn}");
        }
    }
    out
}

pub fn format_summary(name: &str, s: &FoldSummary) -> String {
    let labels: Vec<String> = (1..=s.folds.len()).map(|i| format!("fold {i}")).collect();
    let w = labels
        .iter()
        .map(|l| l.len())
        .chain([name.chars().count() + 7])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "system: {name}");
    table_header(&mut out, w);
    for (label, r) in labels.iter().zip(&s.folds) {
        table_row(&mut out, label, &r.metrics(), w);
    }
    table_row(&mut out, "mean", &s.mean, w);
    table_row(&mut out, "std", &s.std, w);
    for (label, r) in labels.iter().zip(&s.folds) {
        for warn in &r.warnings {
            let _ = writeln!(out, "warning: {label}: {warn}");
        }
    }
    out
}

pub fn format_comparison(c: &Comparison) -> String {
    let mut out = format_summary(&c.name_a, &c.a);
    out.push('\n');
    out.push_str(&format_summary(&c.name_b, &c.b));
    out.push('\n');
    let _ = writeln!(out, "Welch's t-test, {} vs {}", c.name_a, c.name_b);
    let _ = writeln!(out, "{:<16} {:>12} {:>10} {:>12}", "metric", "t", "df", "p");
    for (name, r) in METRIC_NAMES.iter().zip(&c.tests) {
        let _ = writeln!(out, "{:<16} {:>12.6} {:>10.4} {:>12.6e}", name, r.t, r.df, r.p);
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::invalid(format!("json: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Tag::*;

    fn chunk(start: usize, end: usize, ty: ChunkType) -> Chunk {
        Chunk { start, end, ty }
    }

    #[test]
    fn chunk_extraction() {
        assert_eq!(
            extract_chunks(&[Outside, BeginPositive, InsidePositive, BeginPositive, Outside]),
            vec![chunk(1, 2, ChunkType::P), chunk(3, 3, ChunkType::P)]
        );
        assert_eq!(
            extract_chunks(&[Outside, InsidePositive, InsidePositive]),
            vec![chunk(1, 2, ChunkType::P)]
        );
        assert_eq!(
            extract_chunks(&[BeginPositive, InsideNegative, InsideNegative]),
            vec![chunk(0, 0, ChunkType::P), chunk(1, 2, ChunkType::N)]
        );
        assert!(extract_chunks(&[Outside; 4]).is_empty());
        assert_eq!(chunks_with(&[BeginPositive, InsideNegative], true), vec![chunk(0, 1, ChunkType::D)]);
    }

    #[test]
    fn validation() {
        assert_eq!(iob2_validate(&[BeginPositive, InsideNegative]), vec![1]);
        assert_eq!(iob2_validate(&[Outside, InsidePositive]), vec![1]);
        assert_eq!(iob2_validate(&[InsideNegative]), vec![0]);
        assert!(iob2_validate(&[BeginNegative, InsideNegative, Outside, BeginPositive]).is_empty());
    }

    #[test]
    fn prf_examples() {
        let gold = vec![vec![BeginPositive, InsidePositive, Outside, BeginNegative]];
        let same = chunk_prf(&gold, &gold, None).unwrap();
        assert_eq!((same.precision, same.recall, same.f), (100.0, 100.0, 100.0));
        let pred = vec![vec![BeginPositive, Outside, Outside, BeginNegative]];
        let r = chunk_prf(&gold, &pred, None).unwrap();
        assert_eq!((r.correct, r.precision, r.recall, r.f), (1, 50.0, 50.0, 50.0));
        let none = vec![vec![Outside; 4]];
        let r = chunk_prf(&gold, &none, None).unwrap();
        assert_eq!((r.precision, r.recall, r.f), (0.0, 0.0, 0.0));
        assert!(chunk_prf(&gold, &[vec![Outside]], None).is_err());
        assert!(chunk_prf(&gold, &[], None).is_err());
    }

    #[test]
    fn merging_forgives_modality_only() {
        let gold = vec![vec![BeginPositive, InsidePositive, Outside]];
        let swapped = vec![vec![BeginNegative, InsideNegative, Outside]];
        assert_eq!(chunk_prf(&gold, &swapped, None).unwrap().correct, 0);
        let m = merged_eval(&gold, &swapped).unwrap();
        assert_eq!((m.correct, m.precision, m.recall), (1, 100.0, 100.0));
        let short = vec![vec![BeginNegative, Outside, Outside]];
        assert_eq!(merged_eval(&gold, &short).unwrap().correct, 0);
    }

    #[test]
    fn report_warns_without_gold() {
        let gold = vec![vec![BeginPositive, Outside]];
        let r = evaluate(&gold, &gold).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("N-tag"));
        let text = format_report(&[("sys", &r)]);
        assert!(text.contains("100.00"));
        assert!(text.contains("warning: sys"));
    }

    #[test]
    fn summary_of_constant_folds() {
        let gold = vec![vec![BeginPositive, Outside, BeginNegative]];
        let r = evaluate(&gold, &gold).unwrap();
        let s = FoldSummary::new(vec![r.clone(), r.clone(), r]).unwrap();
        assert_eq!(s.mean[2], 100.0);
        assert!(s.std.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn welch_edge_cases() {
        let xs = [1.0, 2.0, 3.5, 4.0];
        let r = welch_t(&xs, &xs).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = welch_t(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((r.t, r.p, r.infinite), (0.0, 1.0, false));
        let r = welch_t(&[2.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!((r.p, r.infinite), (0.0, true));
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());

        let ys = [2.0, 4.0, 6.0, 8.0, 10.0];
        let base = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &ys).unwrap();
        let scaled = welch_t(&[3.0, 6.0, 9.0, 12.0, 15.0], &ys.map(|y| 3.0 * y)).unwrap();
        assert!((base.t - scaled.t).abs() < 1e-12);
        assert!(base.p > 0.0 && base.p < 1.0);
    }

    fn tag_seq() -> impl Strategy<Value = Vec<Tag>> {
        prop::collection::vec((0..5usize).prop_map(|i| Tag::from_index(i).unwrap()), 1..12)
    }

    proptest! {
        #[test]
        fn precision_recall_symmetry(pairs in prop::collection::vec((tag_seq(), tag_seq()), 1..6)) {
            let gold: Vec<Vec<Tag>> = pairs.iter().map(|(g, _)| g.clone()).collect();
            let pred: Vec<Vec<Tag>> = pairs.iter().map(|(g, p)| {
                p.iter().cycle().take(g.len()).copied().collect()
            }).collect();
            let a = chunk_prf(&gold, &pred, None).unwrap();
            let b = chunk_prf(&pred, &gold, None).unwrap();
            prop_assert_eq!(a.precision, b.recall);
            if a.precision > 0.0 && a.recall > 0.0 {
                prop_assert!(a.f >= a.precision.min(a.recall) - 1e-12);
                prop_assert!(a.f <= a.precision.max(a.recall) + 1e-12);
            }
            let merged = merged_eval(&gold, &pred).unwrap();
            let p = chunk_prf(&gold, &pred, Some(ChunkType::P)).unwrap();
            let n = chunk_prf(&gold, &pred, Some(ChunkType::N)).unwrap();
            let valid = gold.iter().chain(&pred).all(|t| iob2_validate(t).is_empty());
            if valid {
                prop_assert!(merged.correct >= p.correct + n.correct);
            }
        }
    }
}
