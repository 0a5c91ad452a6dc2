//! Corpus data model: characters with their feature columns and IOB2 tags.

mod format;
mod gazetteer;
mod synth;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

pub use format::{
    parse_corpus, parse_corpus_with, parse_plain_text, parse_predictions, write_corpus,
    write_predictions, ParseOptions,
};
pub use gazetteer::Gazetteer;
pub use synth::{generate_synthetic, LexEntry, SynthSpec};

/// Number of tags in the label set.
pub const NUM_TAGS: usize = 5;

/// IOB2 tag over the positive (P) and negative (N) modality types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    BeginPositive = 0,
    InsidePositive = 1,
    BeginNegative = 2,
    InsideNegative = 3,
    Outside = 4,
}

/// Entity type carried by a non-`O` tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Positive,
    Negative,
}

impl Tag {
    pub const ALL: [Tag; NUM_TAGS] = [
        Tag::BeginPositive,
        Tag::InsidePositive,
        Tag::BeginNegative,
        Tag::InsideNegative,
        Tag::Outside,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        Tag::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::BeginPositive => "B-P",
            Tag::InsidePositive => "I-P",
            Tag::BeginNegative => "B-N",
            Tag::InsideNegative => "I-N",
            Tag::Outside => "O",
        }
    }

    pub fn modality(self) -> Option<Modality> {
        match self {
            Tag::BeginPositive | Tag::InsidePositive => Some(Modality::Positive),
            Tag::BeginNegative | Tag::InsideNegative => Some(Modality::Negative),
            Tag::Outside => None,
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, Tag::BeginPositive | Tag::BeginNegative)
    }

    pub fn is_inside(self) -> bool {
        matches!(self, Tag::InsidePositive | Tag::InsideNegative)
    }

    pub fn begin(m: Modality) -> Tag {
        match m {
            Modality::Positive => Tag::BeginPositive,
            Modality::Negative => Tag::BeginNegative,
        }
    }

    pub fn inside(m: Modality) -> Tag {
        match m {
            Modality::Positive => Tag::InsidePositive,
            Modality::Negative => Tag::InsideNegative,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown tag {s:?}")))
    }
}

/// True when `cur` may follow `prev` (`None` = sequence start) under IOB2.
pub fn iob2_allowed(prev: Option<Tag>, cur: Tag) -> bool {
    match cur {
        Tag::InsidePositive => matches!(prev, Some(Tag::BeginPositive | Tag::InsidePositive)),
        Tag::InsideNegative => matches!(prev, Some(Tag::BeginNegative | Tag::InsideNegative)),
        _ => true,
    }
}

/// Japanese character class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CharType {
    /// Kanji.
    C,
    /// Hiragana.
    H,
    /// Katakana.
    K,
    /// Alphanumerics and everything else.
    A,
}

impl CharType {
    pub const ALL: [CharType; 4] = [CharType::C, CharType::H, CharType::K, CharType::A];

    pub fn as_str(self) -> &'static str {
        match self {
            CharType::C => "C",
            CharType::H => "H",
            CharType::K => "K",
            CharType::A => "A",
        }
    }
}

impl FromStr for CharType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CharType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown character type {s:?}")))
    }
}

pub fn classify_char_type(ch: char) -> CharType {
    match ch as u32 {
        0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EE5F
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x323AF => CharType::C,
        0x3040..=0x309F => CharType::H,
        0x30A0..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9F => CharType::K,
        _ => CharType::A,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharRecord {
    pub ch: char,
    pub ctype: CharType,
    /// ICD code assigned by the gazetteer, `None` outside any match.
    pub icd: Option<String>,
    pub tag: Option<Tag>,
}

impl CharRecord {
    pub fn new(ch: char) -> Self {
        CharRecord {
            ch,
            ctype: classify_char_type(ch),
            icd: None,
            tag: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Sentence {
    pub records: Vec<CharRecord>,
}

impl Sentence {
    /// Unlabeled sentence with character types filled in.
    pub fn from_text(text: &str) -> Self {
        Sentence {
            records: text.chars().map(CharRecord::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn text(&self) -> String {
        self.records.iter().map(|r| r.ch).collect()
    }

    /// Gold tags, if every character carries one.
    pub fn tags(&self) -> Option<Vec<Tag>> {
        self.records.iter().map(|r| r.tag).collect()
    }

    pub fn set_tags(&mut self, tags: &[Tag]) {
        for (r, t) in self.records.iter_mut().zip(tags) {
            r.tag = Some(*t);
        }
    }

    /// Recomputes character types and ICD codes from scratch.
    pub fn annotate(&mut self, gaz: &Gazetteer) {
        for r in &mut self.records {
            r.ctype = classify_char_type(r.ch);
        }
        let codes = gaz.annotate(&self.text());
        for (r, code) in self.records.iter_mut().zip(codes) {
            r.icd = code;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

/// Splits documents into `k` folds of near-equal size after a seeded shuffle.
/// Returns document indices per fold, each fold sorted ascending.
pub fn split_folds(docs: &[Document], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be at least 2, got {k}")));
    }
    if k > docs.len() {
        return Err(Error::invalid(format!(
            "cannot split {} documents into {k} folds",
            docs.len()
        )));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut stream(seed, Stream::Folds));
    let base = docs.len() / k;
    let extra = docs.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut fold = order[offset..offset + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        offset += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_types() {
        assert_eq!(classify_char_type('病'), CharType::C);
        assert_eq!(classify_char_type('の'), CharType::H);
        assert_eq!(classify_char_type('リ'), CharType::K);
        assert_eq!(classify_char_type('7'), CharType::A);
        assert_eq!(classify_char_type('。'), CharType::A);
        assert_eq!(classify_char_type('ー'), CharType::K);
        assert_eq!(classify_char_type('ｱ'), CharType::K);
        assert_eq!(classify_char_type('ㇰ'), CharType::K);
        assert_eq!(classify_char_type('Ａ'), CharType::A);
        assert_eq!(classify_char_type('\u{2000B}'), CharType::C);
        assert_eq!(classify_char_type('\u{F900}'), CharType::C);
    }

    #[test]
    fn tag_roundtrip_and_order() {
        for (i, t) in Tag::ALL.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.as_str().parse::<Tag>().unwrap(), *t);
        }
        assert!("B-X".parse::<Tag>().is_err());
    }

    fn docs(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| Document {
                id: format!("d{i}"),
                sentences: vec![],
            })
            .collect()
    }

    #[test]
    fn folds_balanced() {
        let f = split_folds(&docs(10), 3, 1).unwrap();
        let mut sizes: Vec<usize> = f.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);

        let f = split_folds(&docs(500), 10, 7).unwrap();
        assert!(f.iter().all(|x| x.len() == 50));
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn folds_deterministic() {
        let d = docs(37);
        assert_eq!(split_folds(&d, 5, 99).unwrap(), split_folds(&d, 5, 99).unwrap());
        assert_ne!(split_folds(&d, 5, 99).unwrap(), split_folds(&d, 5, 100).unwrap());
    }

    #[test]
    fn folds_errors() {
        assert!(split_folds(&docs(2), 3, 0).is_err());
        assert!(split_folds(&docs(5), 1, 0).is_err());
    }
}
