//! Column file reading and writing.
//!
//! ```text
//! #doc d1
//! 心<TAB>I48<TAB>C<TAB>B-P
//! 房<TAB>I48<TAB>C<TAB>I-P
//! ...
//! <blank line ends the sentence>
//! ```

use super::{iob2_allowed, CharRecord, CharType, Document, Sentence, Tag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject gold tag sequences that break IOB2.
    pub strict: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { strict: true }
    }
}

pub fn parse_corpus(text: &str) -> Result<Vec<Document>> {
    parse_corpus_with(text, ParseOptions::default())
}

pub fn parse_corpus_with(text: &str, opts: ParseOptions) -> Result<Vec<Document>> {
    let (docs, _) = parse_columns(text, opts, false)?;
    Ok(docs)
}

/// Reads a five-column prediction file (corpus columns plus a predicted tag).
/// Returns the gold documents and predicted tags per sentence, in document
/// order. Neither tag column is checked for IOB2 validity.
pub fn parse_predictions(text: &str) -> Result<(Vec<Document>, Vec<Vec<Tag>>)> {
    parse_columns(text, ParseOptions { strict: false }, true)
}

fn parse_columns(
    text: &str,
    opts: ParseOptions,
    with_pred: bool,
) -> Result<(Vec<Document>, Vec<Vec<Tag>>)> {
    let mut docs: Vec<Document> = Vec::new();
    let mut preds: Vec<Vec<Tag>> = Vec::new();
    let mut cur = Sentence::default();
    let mut cur_pred: Vec<Tag> = Vec::new();
    let mut prev_tag: Option<Tag> = None;

    fn flush(
        docs: &mut [Document],
        preds: &mut Vec<Vec<Tag>>,
        cur: &mut Sentence,
        cur_pred: &mut Vec<Tag>,
        with_pred: bool,
    ) {
        if cur.is_empty() {
            return;
        }
        let doc = docs.last_mut().expect("records are only accepted inside a document");
        doc.sentences.push(std::mem::take(cur));
        if with_pred {
            preds.push(std::mem::take(cur_pred));
        }
    }

    for (i, line) in text.split('\n').enumerate() {
        let lineno = i + 1;
        if let Some(id) = line.strip_prefix("#doc ") {
            flush(&mut docs, &mut preds, &mut cur, &mut cur_pred, with_pred);
            if id.is_empty() {
                return Err(Error::parse(lineno, "empty document id"));
            }
            if docs.iter().any(|d| d.id == id) {
                return Err(Error::parse(lineno, format!("duplicate document id {id:?}")));
            }
            docs.push(Document {
                id: id.to_string(),
                sentences: Vec::new(),
            });
            prev_tag = None;
            continue;
        }
        if line.is_empty() {
            flush(&mut docs, &mut preds, &mut cur, &mut cur_pred, with_pred);
            prev_tag = None;
            continue;
        }
        if docs.is_empty() {
            return Err(Error::parse(lineno, "record before the first #doc header"));
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let expected: &[usize] = if with_pred { &[5] } else { &[3, 4] };
        if !expected.contains(&cols.len()) {
            return Err(Error::parse(
                lineno,
                format!("expected {expected:?} tab-separated columns, found {}", cols.len()),
            ));
        }
        let mut chars = cols[0].chars();
        let (Some(ch), None) = (chars.next(), chars.next()) else {
            return Err(Error::parse(lineno, "first column must be exactly one character"));
        };
        let icd = match cols[1] {
            "-" => None,
            "" => return Err(Error::parse(lineno, "empty ICD column")),
            code => Some(code.to_string()),
        };
        let ctype: CharType = cols[2]
            .parse()
            .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let tag = match cols.get(3) {
            Some(s) => Some(
                s.parse::<Tag>()
                    .map_err(|e| Error::parse(lineno, e.to_string()))?,
            ),
            None => None,
        };
        if let Some(t) = tag {
            if opts.strict && !iob2_allowed(prev_tag, t) {
                return Err(Error::Iob2 { line: lineno });
            }
            prev_tag = Some(t);
        }
        if with_pred {
            cur_pred.push(
                cols[4]
                    .parse::<Tag>()
                    .map_err(|e| Error::parse(lineno, e.to_string()))?,
            );
        }
        cur.records.push(CharRecord { ch, ctype, icd, tag });
    }
    flush(&mut docs, &mut preds, &mut cur, &mut cur_pred, with_pred);
    Ok((docs, preds))
}

/// Plain text input: one sentence per non-empty line, `#doc <id>` lines start
/// documents. Lines before any header go to a document named `doc1`.
pub fn parse_plain_text(text: &str) -> Vec<Document> {
    let mut docs: Vec<Document> = Vec::new();
    for line in text.lines() {
        if let Some(id) = line.strip_prefix("#doc ") {
            docs.push(Document {
                id: id.to_string(),
                sentences: Vec::new(),
            });
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if docs.is_empty() {
            docs.push(Document {
                id: "doc1".to_string(),
                sentences: Vec::new(),
            });
        }
        docs.last_mut()
            .expect("pushed above")
            .sentences
            .push(Sentence::from_text(line));
    }
    docs
}

fn write_record(out: &mut String, r: &CharRecord) {
    out.push(r.ch);
    out.push('\t');
    out.push_str(r.icd.as_deref().unwrap_or("-"));
    out.push('\t');
    out.push_str(r.ctype.as_str());
    if let Some(t) = r.tag {
        out.push('\t');
        out.push_str(t.as_str());
    }
}

pub fn write_corpus(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str("#doc ");
        out.push_str(&doc.id);
        out.push('\n');
        for s in &doc.sentences {
            for r in &s.records {
                write_record(&mut out, r);
                out.push('\n');
            }
            out.push('\n');
        }
    }
    out
}

/// Writes gold columns plus a fifth predicted-tag column. `preds` holds one
/// tag sequence per sentence in document order.
pub fn write_predictions(docs: &[Document], preds: &[Vec<Tag>]) -> Result<String> {
    let mut out = String::new();
    let mut pred_iter = preds.iter();
    for doc in docs {
        out.push_str("#doc ");
        out.push_str(&doc.id);
        out.push('\n');
        for s in &doc.sentences {
            let p = pred_iter
                .next()
                .ok_or_else(|| Error::invalid("fewer predictions than sentences"))?;
            if p.len() != s.len() {
                return Err(Error::invalid("prediction length differs from sentence length"));
            }
            for (r, t) in s.records.iter().zip(p) {
                let mut r = r.clone();
                r.tag = Some(r.tag.unwrap_or(Tag::Outside));
                write_record(&mut out, &r);
                out.push('\t');
                out.push_str(t.as_str());
                out.push('\n');
            }
            out.push('\n');
        }
    }
    if pred_iter.next().is_some() {
        return Err(Error::invalid("more predictions than sentences"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "#doc d1\n病\tI48\tC\tB-P\n気\tI48\tC\tI-P\nだ\t-\tH\tO\n\nな\t-\tH\tO\n\n";

    #[test]
    fn parses_sample() {
        let docs = parse_corpus(SAMPLE).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].id, "d1");
        assert_eq!(docs[0].sentences.len(), 2);
        assert_eq!(
            docs[0].sentences[0].records[0],
            CharRecord {
                ch: '病',
                ctype: CharType::C,
                icd: Some("I48".into()),
                tag: Some(Tag::BeginPositive),
            }
        );
        assert_eq!(write_corpus(&docs), SAMPLE);
    }

    #[test]
    fn unlabeled_records() {
        let text = "#doc x\nの\t-\tH\n\n";
        let docs = parse_corpus(text).unwrap();
        assert_eq!(docs[0].sentences[0].records[0].tag, None);
        assert_eq!(write_corpus(&docs), text);
    }

    #[test]
    fn canonicalizes_blank_lines() {
        let docs = parse_corpus("#doc a\nの\t-\tH\tO\n\n\n\nの\t-\tH\tO").unwrap();
        assert_eq!(docs[0].sentences.len(), 2);
        assert_eq!(write_corpus(&docs), "#doc a\nの\t-\tH\tO\n\nの\t-\tH\tO\n\n");
    }

    #[test]
    fn iob2_violation_reports_line() {
        let err = parse_corpus("#doc a\nの\t-\tH\tO\nの\t-\tH\tI-P\n").unwrap_err();
        assert!(matches!(err, Error::Iob2 { line: 3 }), "{err:?}");
        assert_eq!(err.to_string(), "IOB2 violation at line 3");
        let lenient = parse_corpus_with(
            "#doc a\nの\t-\tH\tO\nの\t-\tH\tI-P\n",
            ParseOptions { strict: false },
        );
        assert!(lenient.is_ok());
    }

    #[test]
    fn malformed_lines() {
        for bad in [
            "#doc a\nの\t-\n",
            "#doc a\nのの\t-\tH\tO\n",
            "#doc a\nの\t-\tX\tO\n",
            "#doc a\nの\t-\tH\tB-Q\n",
            "の\t-\tH\tO\n",
            "#doc a\n#doc a\n",
        ] {
            let err = parse_corpus(bad).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{bad:?} -> {err:?}");
        }
    }

    #[test]
    fn prediction_file_roundtrip() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let preds = vec![
            vec![Tag::BeginNegative, Tag::InsidePositive, Tag::Outside],
            vec![Tag::InsideNegative],
        ];
        let text = write_predictions(&docs, &preds).unwrap();
        let (gold, p) = parse_predictions(&text).unwrap();
        assert_eq!(gold, docs);
        assert_eq!(p, preds);
    }

    #[test]
    fn plain_text() {
        let docs = parse_plain_text("胃癌あり\n\n#doc b\n肺炎なし\n");
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].id, "doc1");
        assert_eq!(docs[1].sentences[0].text(), "肺炎なし");
    }

    fn arb_docs() -> impl Strategy<Value = Vec<Document>> {
        let record = (
            proptest::char::range('\u{3041}', '\u{3096}'),
            proptest::option::of("[A-Z][0-9]{2}"),
        );
        let sentence = proptest::collection::vec(record, 1..8).prop_map(|recs| {
            let mut prev = None;
            Sentence {
                records: recs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (ch, icd))| {
                        let tag = match (i % 3, prev) {
                            (0, _) => Tag::BeginNegative,
                            (1, Some(Tag::BeginNegative)) => Tag::InsideNegative,
                            _ => Tag::Outside,
                        };
                        prev = Some(tag);
                        CharRecord {
                            ch,
                            ctype: CharType::H,
                            icd,
                            tag: Some(tag),
                        }
                    })
                    .collect(),
            }
        });
        proptest::collection::vec(proptest::collection::vec(sentence, 0..4), 0..4).prop_map(
            |docs| {
                docs.into_iter()
                    .enumerate()
                    .map(|(i, sentences)| Document {
                        id: format!("doc{i}"),
                        sentences,
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(docs in arb_docs()) {
            let text = write_corpus(&docs);
            let back = parse_corpus(&text).unwrap();
            prop_assert_eq!(&back, &docs);
            prop_assert_eq!(write_corpus(&back), text);
        }
    }
}
