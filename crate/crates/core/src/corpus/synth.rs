//! Seeded template-based generator for clinical-style labeled corpora.
//!
//! Templates are strings with one `{E}` placeholder for the disease mention
//! and optionally one `{F}` placeholder. `{F}` expands to filler phrases of at
//! least `long_range_distance` characters, which puts the modality cue of the
//! template out of reach of any small fixed context window.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{CharRecord, Document, Gazetteer, Modality, Sentence, Tag};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexEntry {
    pub surface: String,
    /// ICD code; entries without one are left out of the companion gazetteer.
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub lexicon: Vec<LexEntry>,
    pub positive_templates: Vec<String>,
    pub negative_templates: Vec<String>,
    pub fillers: Vec<String>,
    /// Sentence-initial phrases that carry no modality information.
    #[serde(default)]
    pub openers: Vec<String>,
    /// Probability that a mention is negated.
    pub n_ratio: f64,
    pub long_range_distance: usize,
    pub min_sentences_per_doc: usize,
    pub max_sentences_per_doc: usize,
    /// Probability that a sentence carries a second clause.
    pub second_clause_prob: f64,
    pub opener_prob: f64,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            toml::from_str(text).map_err(|e| Error::invalid(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.lexicon.is_empty() {
            return Err(Error::invalid("synth spec: empty lexicon"));
        }
        if self.lexicon.iter().any(|e| e.surface.is_empty()) {
            return Err(Error::invalid("synth spec: empty lexicon surface"));
        }
        if self.lexicon.iter().any(|e| !(e.weight > 0.0 && e.weight.is_finite())) {
            return Err(Error::invalid("synth spec: lexicon weights must be positive"));
        }
        if !(0.0..=1.0).contains(&self.n_ratio) {
            return Err(Error::invalid("synth spec: n_ratio must lie in [0, 1]"));
        }
        if self.positive_templates.is_empty() && self.n_ratio < 1.0 {
            return Err(Error::invalid("synth spec: no positive templates"));
        }
        if self.negative_templates.is_empty() && self.n_ratio > 0.0 {
            return Err(Error::invalid("synth spec: no negative templates"));
        }
        for t in self.positive_templates.iter().chain(&self.negative_templates) {
            if t.matches("{E}").count() != 1 || t.matches("{F}").count() > 1 {
                return Err(Error::invalid(format!(
                    "synth spec: template {t:?} needs exactly one {{E}} and at most one {{F}}"
                )));
            }
            if t.contains("{F}") && self.fillers.iter().all(String::is_empty) {
                return Err(Error::invalid("synth spec: long-range template without fillers"));
            }
        }
        if self.min_sentences_per_doc == 0 || self.min_sentences_per_doc > self.max_sentences_per_doc
        {
            return Err(Error::invalid("synth spec: bad sentences-per-doc range"));
        }
        Ok(())
    }

    /// Dictionary of every lexicon entry that has a code.
    pub fn gazetteer(&self) -> Result<Gazetteer> {
        Gazetteer::new(
            self.lexicon
                .iter()
                .filter_map(|e| e.code.as_ref().map(|c| (e.surface.clone(), c.clone()))),
        )
    }
}

const ORGANS: [&str; 12] = [
    "胃", "肺", "肝", "腎", "心", "脳", "膵", "腸", "胆", "脾", "膀胱", "食道",
];

const LESIONS: [(&str, &str); 8] = [
    ("癌", "C80"),
    ("炎", "K52"),
    ("梗塞", "I63"),
    ("不全", "N19"),
    ("腫瘍", "D48"),
    ("出血", "R58"),
    ("結石", "N20"),
    ("潰瘍", "K27"),
];

const NAMED: [(&str, Option<&str>); 20] = [
    ("心房細動", Some("I48")),
    ("糖尿病", Some("E14")),
    ("高血圧", Some("I10")),
    ("貧血", Some("D64")),
    ("脱水", Some("E86")),
    ("発熱", Some("R50")),
    ("頭痛", Some("R51")),
    ("咳嗽", Some("R05")),
    ("嘔吐", Some("R11")),
    ("浮腫", Some("R60")),
    ("黄疸", Some("R17")),
    ("インフルエンザ", Some("J11")),
    ("ヘルニア", Some("K46")),
    ("ポリープ", Some("K63")),
    ("アレルギー", Some("T78")),
    ("リウマチ", Some("M06")),
    ("ムンプス", None),
    ("ＣＯＰＤ", None),
    ("ＤＭ", None),
    ("ＡＦ", None),
];

const RARE_KANJI: [char; 24] = [
    '鬱', '癇', '疹', '痺', '癜', '疱', '瘻', '痙', '攣', '疽', '癬', '痘', '瘤', '痔', '疣',
    '膿', '疥', '瘡', '痂', '疳', '瘧', '痢', '癰', '疔',
];

const RARE_CODES: [&str; 4] = ["L30", "L98", "M79", "R23"];

impl Default for SynthSpec {
    fn default() -> Self {
        let mut lexicon = Vec::new();
        for organ in ORGANS {
            for (lesion, code) in LESIONS {
                lexicon.push(LexEntry {
                    surface: format!("{organ}{lesion}"),
                    code: Some(code.to_string()),
                    weight: 1.0,
                });
            }
        }
        for (surface, code) in NAMED {
            lexicon.push(LexEntry {
                surface: surface.to_string(),
                code: code.map(str::to_string),
                weight: 1.0,
            });
        }
        // Long tail of uncommon dictionary names, most seen at most once.
        let common_mass: f64 = lexicon.iter().map(|e| e.weight).sum();
        let n_rare = 120;
        let rare_weight = common_mass * 0.06 / 0.94 / n_rare as f64;
        let mut seen: std::collections::HashSet<String> =
            lexicon.iter().map(|e| e.surface.clone()).collect();
        let mut rng = stream(0x5EED, Stream::Synth);
        let mut i = 0;
        while i < n_rare {
            let surface: String = (0..3)
                .map(|_| RARE_KANJI[rng.gen_range(0..RARE_KANJI.len())])
                .collect();
            if !seen.insert(surface.clone()) {
                continue;
            }
            lexicon.push(LexEntry {
                surface,
                code: Some(RARE_CODES[i % RARE_CODES.len()].to_string()),
                weight: rare_weight,
            });
            i += 1;
        }

        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        SynthSpec {
            lexicon,
            positive_templates: s(&[
                "{E}を認めた。",
                "入院時{E}を認めた。",
                "{E}と診断された。",
                "外来にて{E}を指摘された。",
                "{E}の増悪にて入院となった。",
                "{E}が出現した。",
                "精査の結果{E}が判明した。",
                "{E}については{F}、陽性であった。",
                "{E}の可能性を{F}、確定とした。",
                "現病歴として{F}{E}を認めた。",
            ]),
            negative_templates: s(&[
                "{E}は認めなかった。",
                "{E}はない。",
                "既往歴に{E}あり。",
                "家族歴に{E}あり。",
                "{E}は治癒した。",
                "{E}については{F}、陰性であった。",
                "{E}の可能性を{F}、否定した。",
                "家族歴として{F}{E}を認めた。",
            ]),
            fillers: s(&[
                "以前より",
                "経過観察中に",
                "複数回の検査で",
                "外来で",
                "詳細に",
                "慎重に",
                "繰り返し",
                "画像上",
            ]),
            openers: s(&["本日、", "翌日、", "その後、", "今回、"]),
            n_ratio: 0.14,
            long_range_distance: 6,
            min_sentences_per_doc: 3,
            max_sentences_per_doc: 5,
            second_clause_prob: 0.3,
            opener_prob: 0.3,
        }
    }
}

struct Builder<'a> {
    records: Vec<CharRecord>,
    gaz: &'a Gazetteer,
}

impl Builder<'_> {
    fn push_text(&mut self, text: &str, tag: Tag) {
        self.records.extend(text.chars().map(|ch| CharRecord {
            tag: Some(tag),
            ..CharRecord::new(ch)
        }));
    }

    fn push_entity(&mut self, surface: &str, m: Modality) {
        for (i, ch) in surface.chars().enumerate() {
            let tag = if i == 0 { Tag::begin(m) } else { Tag::inside(m) };
            self.records.push(CharRecord {
                tag: Some(tag),
                ..CharRecord::new(ch)
            });
        }
    }

    fn finish(self) -> Sentence {
        let mut s = Sentence {
            records: self.records,
        };
        s.annotate(self.gaz);
        s
    }
}

fn filler(spec: &SynthSpec, rng: &mut Rng) -> String {
    let usable: Vec<&String> = spec.fillers.iter().filter(|f| !f.is_empty()).collect();
    let mut out = String::new();
    while out.chars().count() < spec.long_range_distance.max(1) {
        out.push_str(usable[rng.gen_range(0..usable.len())]);
    }
    out
}

fn clause(
    spec: &SynthSpec,
    lex: &WeightedIndex<f64>,
    rng: &mut Rng,
    b: &mut Builder<'_>,
) {
    let m = if rng.gen_bool(spec.n_ratio) {
        Modality::Negative
    } else {
        Modality::Positive
    };
    let templates = match m {
        Modality::Positive => &spec.positive_templates,
        Modality::Negative => &spec.negative_templates,
    };
    let template = &templates[rng.gen_range(0..templates.len())];
    let entity = &spec.lexicon[lex.sample(rng)].surface;
    let mut rest = template.as_str();
    while !rest.is_empty() {
        let next = [rest.find("{E}"), rest.find("{F}")]
            .into_iter()
            .flatten()
            .min();
        match next {
            Some(pos) => {
                b.push_text(&rest[..pos], Tag::Outside);
                if rest[pos..].starts_with("{E}") {
                    b.push_entity(entity, m);
                } else {
                    let f = filler(spec, rng);
                    b.push_text(&f, Tag::Outside);
                }
                rest = &rest[pos + 3..];
            }
            None => {
                b.push_text(rest, Tag::Outside);
                rest = "";
            }
        }
    }
}

/// Generates `n_docs` annotated documents (`syn0001`, ...). Character types
/// and ICD columns are filled from the spec's own gazetteer.
pub fn generate_synthetic(seed: u64, n_docs: usize, spec: &SynthSpec) -> Result<Vec<Document>> {
    spec.validate()?;
    let gaz = spec.gazetteer()?;
    let lex = WeightedIndex::new(spec.lexicon.iter().map(|e| e.weight))
        .map_err(|e| Error::invalid(format!("synth spec: {e}")))?;
    let mut rng = stream(seed, Stream::Synth);
    let width = n_docs.max(1).to_string().len().max(4);
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let n_sent = rng.gen_range(spec.min_sentences_per_doc..=spec.max_sentences_per_doc);
        let mut sentences = Vec::with_capacity(n_sent);
        for _ in 0..n_sent {
            let mut b = Builder {
                records: Vec::new(),
                gaz: &gaz,
            };
            if !spec.openers.is_empty() && rng.gen_bool(spec.opener_prob) {
                let o = &spec.openers[rng.gen_range(0..spec.openers.len())];
                b.push_text(o, Tag::Outside);
            }
            clause(spec, &lex, &mut rng, &mut b);
            if rng.gen_bool(spec.second_clause_prob) {
                clause(spec, &lex, &mut rng, &mut b);
            }
            sentences.push(b.finish());
        }
        docs.push(Document {
            id: format!("syn{:0width$}", d + 1),
            sentences,
        });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{iob2_allowed, write_corpus};

    fn entity_counts(docs: &[Document]) -> (usize, usize) {
        let mut p = 0;
        let mut n = 0;
        for s in docs.iter().flat_map(|d| &d.sentences) {
            for r in &s.records {
                match r.tag {
                    Some(Tag::BeginPositive) => p += 1,
                    Some(Tag::BeginNegative) => n += 1,
                    _ => {}
                }
            }
        }
        (p, n)
    }

    #[test]
    fn deterministic() {
        let spec = SynthSpec::default();
        let a = write_corpus(&generate_synthetic(5, 40, &spec).unwrap());
        let b = write_corpus(&generate_synthetic(5, 40, &spec).unwrap());
        assert_eq!(a, b);
        let c = write_corpus(&generate_synthetic(6, 40, &spec).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn tags_are_valid_and_every_sentence_has_an_entity() {
        let docs = generate_synthetic(1, 60, &SynthSpec::default()).unwrap();
        for s in docs.iter().flat_map(|d| &d.sentences) {
            let tags = s.tags().unwrap();
            let mut prev = None;
            for t in &tags {
                assert!(iob2_allowed(prev, *t));
                prev = Some(*t);
            }
            assert!(tags.iter().any(|t| t.is_begin()));
        }
    }

    #[test]
    fn zero_negation_ratio() {
        let spec = SynthSpec {
            n_ratio: 0.0,
            ..SynthSpec::default()
        };
        let docs = generate_synthetic(3, 50, &spec).unwrap();
        let (p, n) = entity_counts(&docs);
        assert!(p > 0);
        assert_eq!(n, 0);
    }

    #[test]
    fn negation_ratio_close_to_target() {
        let docs = generate_synthetic(2024, 500, &SynthSpec::default()).unwrap();
        let (p, n) = entity_counts(&docs);
        let ratio = n as f64 / (p + n) as f64;
        assert!((ratio - 0.14).abs() <= 0.02, "ratio {ratio}");
        let sentences: usize = docs.iter().map(|d| d.sentences.len()).sum();
        assert!((1800..=2200).contains(&sentences), "{sentences}");
    }

    #[test]
    fn long_range_cue_is_outside_small_window() {
        let spec = SynthSpec {
            lexicon: vec![LexEntry {
                surface: "胃癌".into(),
                code: Some("C16".into()),
                weight: 1.0,
            }],
            positive_templates: vec![],
            negative_templates: vec!["{E}{F}否定した。".into()],
            fillers: vec!["以前より".into()],
            openers: vec![],
            n_ratio: 1.0,
            long_range_distance: 6,
            min_sentences_per_doc: 1,
            max_sentences_per_doc: 1,
            second_clause_prob: 0.0,
            opener_prob: 0.0,
        };
        let docs = generate_synthetic(0, 5, &spec).unwrap();
        for s in docs.iter().flat_map(|d| &d.sentences) {
            let chars: Vec<char> = s.text().chars().collect();
            let entity_end = s
                .records
                .iter()
                .rposition(|r| r.tag.and_then(Tag::modality).is_some())
                .unwrap();
            let cue = chars.windows(2).position(|w| w == ['否', '定']).unwrap();
            assert!(cue - entity_end > 6, "cue at {cue}, entity ends {entity_end}");
            assert!(cue - entity_end > 2);
            assert_eq!(s.records[0].icd.as_deref(), Some("C16"));
        }
    }

    #[test]
    fn spec_validation() {
        let empty = SynthSpec {
            lexicon: vec![],
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(0, 1, &empty).is_err());
        let bad = SynthSpec {
            negative_templates: vec!["no placeholder".into()],
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let spec = SynthSpec::default();
        assert_eq!(SynthSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        assert!(SynthSpec::from_toml("n_ratio = 0.5").is_err());
    }

    #[test]
    fn abbreviations_stay_out_of_gazetteer() {
        let spec = SynthSpec::default();
        let gaz = spec.gazetteer().unwrap();
        assert!(gaz.entries().iter().all(|(s, _)| s != "ＣＯＰＤ"));
        assert!(gaz.entries().iter().any(|(s, c)| s == "心房細動" && c == "I48"));
    }
}
