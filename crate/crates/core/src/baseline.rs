//! Feature-based linear-chain CRF over character unigrams (and bigrams).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Tensor, Var};
use crate::corpus::{Document, Sentence, Tag, NUM_TAGS};
use crate::error::{Error, Result};
use crate::layers::{Binding, ParamId, ParamStore};
use crate::modelfile::ModelDocument;
use crate::tagger::{decode, fit, gold_tags, CrfIds, CrfModel, SequenceTagger, TrainConfig, TrainCtx, Vocabulary};

pub const MODEL_KIND: &str = "baseline";
pub const BOS: &str = "<BOS>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTemplate {
    /// `U:c_t`
    Unigram,
    /// `U:c_t` and `B:c_{t-1}|c_t`
    Bigram,
}

impl FeatureTemplate {
    pub fn slots(self) -> usize {
        match self {
            FeatureTemplate::Unigram => 1,
            FeatureTemplate::Bigram => 2,
        }
    }

    pub fn system_name(self) -> &'static str {
        match self {
            FeatureTemplate::Unigram => "CRF_unigram",
            FeatureTemplate::Bigram => "CRF_bigram",
        }
    }
}

impl fmt::Display for FeatureTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureTemplate::Unigram => "unigram",
            FeatureTemplate::Bigram => "bigram",
        })
    }
}

impl FromStr for FeatureTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unigram" => Ok(FeatureTemplate::Unigram),
            "bigram" => Ok(FeatureTemplate::Bigram),
            _ => Err(Error::invalid(format!("unknown feature template {s:?}"))),
        }
    }
}

/// Feature strings active at position `t` (0-based).
pub fn extract_features(sentence: &Sentence, template: FeatureTemplate, t: usize) -> Result<Vec<String>> {
    let recs = &sentence.records;
    let cur = recs
        .get(t)
        .ok_or_else(|| Error::invalid(format!("position {t} outside a sentence of length {}", recs.len())))?
        .ch;
    let mut out = vec![format!("U:{cur}")];
    if template == FeatureTemplate::Bigram {
        let prev = match t {
            0 => BOS.to_string(),
            _ => recs[t - 1].ch.to_string(),
        };
        out.push(format!("B:{prev}|{cur}"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineMeta {
    template: FeatureTemplate,
    train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub template: FeatureTemplate,
    pub config: TrainConfig,
    pub features: Vocabulary,
    pub store: ParamStore,
    /// `[|F|, 5]`
    pub weights: ParamId,
    pub crf: CrfIds,
}

impl BaselineModel {
    /// Zero-initialized model over the features seen in `docs`.
    pub fn new(template: FeatureTemplate, config: TrainConfig, docs: &[Document]) -> Result<Self> {
        let mut features = Vocabulary::new();
        for s in docs.iter().flat_map(|d| &d.sentences) {
            for t in 0..s.len() {
                for f in extract_features(s, template, t)? {
                    features.observe(&f);
                }
            }
        }
        Self::with_features(template, config, features)
    }

    fn with_features(template: FeatureTemplate, config: TrainConfig, features: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let weights = store.add("weights", Tensor::zeros(&[features.len(), NUM_TAGS]));
        let crf = CrfIds::new(&mut store);
        Ok(BaselineModel {
            template,
            config,
            features,
            store,
            weights,
            crf,
        })
    }

    pub fn emission_scores(&self, sentence: &Sentence) -> Result<Tensor> {
        let x = self.encode(sentence)?;
        let mut g = Graph::new();
        let b = self.store.bind(&mut g);
        let e = self.emissions(&mut g, &b, &x, None)?;
        Ok(g.value(e).clone())
    }

    pub fn to_document(&self) -> Result<ModelDocument> {
        let meta = BaselineMeta {
            template: self.template,
            train: self.config.clone(),
        };
        let config = serde_json::to_value(meta).map_err(|e| Error::Model(e.to_string()))?;
        let mut doc = ModelDocument::new(MODEL_KIND, config);
        doc.vocabularies.insert("features".into(), self.features.to_record());
        doc.push_params(&self.store);
        Ok(doc)
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.model_kind != MODEL_KIND {
            return Err(Error::Model(format!(
                "expected model_kind {MODEL_KIND}, found {}",
                doc.model_kind
            )));
        }
        let meta: BaselineMeta =
            serde_json::from_value(doc.config.clone()).map_err(|e| Error::Model(e.to_string()))?;
        let features = Vocabulary::from_record(doc.vocab("features")?)?;
        let mut model = Self::with_features(meta.template, meta.train, features)?;
        doc.fill_params(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_document()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_document(&ModelDocument::load(path)?)
    }
}

impl CrfModel for BaselineModel {
    /// Feature ids per template slot, one per position.
    type Input = Vec<Vec<usize>>;

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn crf_ids(&self) -> CrfIds {
        self.crf
    }

    fn encode(&self, sentence: &Sentence) -> Result<Vec<Vec<usize>>> {
        if sentence.is_empty() {
            return Err(Error::invalid("cannot encode an empty sentence"));
        }
        let mut slots = vec![Vec::with_capacity(sentence.len()); self.template.slots()];
        for t in 0..sentence.len() {
            for (slot, f) in slots.iter_mut().zip(extract_features(sentence, self.template, t)?) {
                slot.push(self.features.get(&f));
            }
        }
        Ok(slots)
    }

    fn emissions(&self, g: &mut Graph, b: &Binding, x: &Vec<Vec<usize>>, _ctx: Option<&mut TrainCtx>) -> Result<Var> {
        let w = b.var(self.weights);
        let rows = x
            .iter()
            .map(|ids| g.row_select(w, ids.clone()))
            .collect::<Result<Vec<_>>>()?;
        g.add_all(&rows)
    }

    fn penalty(&self, g: &mut Graph, b: &Binding) -> Result<Option<Var>> {
        if self.config.lambda_l2 == 0.0 {
            return Ok(None);
        }
        let mut squares = Vec::with_capacity(b.vars().len());
        for &v in b.vars() {
            let sq = g.mul(v, v)?;
            squares.push(g.sum(sq)?);
        }
        let total = g.add_all(&squares)?;
        Ok(Some(g.scale(total, self.config.lambda_l2)?))
    }
}

impl SequenceTagger for BaselineModel {
    fn tag(&self, sentence: &Sentence) -> Result<Vec<Tag>> {
        decode(self, &self.encode(sentence)?)
    }
}

/// Builds the feature inventory from `docs` and trains with the tagger's
/// minibatch protocol. The loss is the minibatch mean NLL plus
/// `lambda_l2 * ||theta||^2`.
pub fn train_baseline(template: FeatureTemplate, cfg: &TrainConfig, docs: &[Document]) -> Result<(BaselineModel, Vec<f64>)> {
    cfg.validate()?;
    let sentences: Vec<&Sentence> = docs.iter().flat_map(|d| &d.sentences).collect();
    gold_tags(&sentences)?;
    if sentences.is_empty() {
        return Err(Error::InvalidGold("cannot train on an empty corpus".into()));
    }
    let mut model = BaselineModel::new(template, cfg.clone(), docs)?;
    let trace = fit(&mut model, &sentences, cfg)?;
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::check_gradient;
    use crate::corpus::parse_corpus;
    use crate::crf::{build_constraint_mask, viterbi};
    use crate::layers::AdamConfig;
    use crate::tagger::batch_loss;

    const SAMPLE: &str = "#doc d1\n胃\t-\tC\tB-N\n癌\t-\tC\tI-N\nな\t-\tH\tO\nし\t-\tH\tO\n\n肺\t-\tC\tB-P\n炎\t-\tC\tI-P\nあ\t-\tH\tO\nり\t-\tH\tO\n";

    #[test]
    fn feature_templates() {
        let s = Sentence::from_text("病変");
        assert_eq!(extract_features(&s, FeatureTemplate::Bigram, 1).unwrap(), ["U:変", "B:病|変"]);
        assert_eq!(extract_features(&s, FeatureTemplate::Bigram, 0).unwrap(), ["U:病", "B:<BOS>|病"]);
        assert_eq!(extract_features(&s, FeatureTemplate::Unigram, 1).unwrap().len(), 1);
        assert!(extract_features(&s, FeatureTemplate::Unigram, 2).is_err());
        assert_eq!("bigram".parse::<FeatureTemplate>().unwrap(), FeatureTemplate::Bigram);
        assert!("trigram".parse::<FeatureTemplate>().is_err());
    }

    #[test]
    fn emissions_sum_active_rows() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let mut m = BaselineModel::new(FeatureTemplate::Unigram, TrainConfig::default(), &docs).unwrap();
        let s = Sentence::from_text("胃な");
        assert_eq!(m.emission_scores(&s).unwrap(), Tensor::zeros(&[2, 5]));
        let id = m.features.get("U:胃");
        let w = m.store.get_mut(m.weights);
        for k in 0..5 {
            w.data_mut()[id * 5 + k] = k as f64;
        }
        let e = m.emission_scores(&s).unwrap();
        assert_eq!(e.row(0), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.row(1), &[0.0; 5]);
    }

    #[test]
    fn shared_decoder_matches_direct_viterbi() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (m, _) = train_baseline(FeatureTemplate::Bigram, &cfg, &docs).unwrap();
        let s = &docs[0].sentences[0];
        let e = m.emission_scores(s).unwrap();
        let direct = viterbi(&e, &m.crf.params(&m.store), Some(&build_constraint_mask())).unwrap().0;
        assert_eq!(m.tag(s).unwrap(), direct);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let mut m = BaselineModel::new(
            FeatureTemplate::Bigram,
            TrainConfig {
                lambda_l2: 0.3,
                ..TrainConfig::default()
            },
            &docs,
        )
        .unwrap();
        let mut rng = crate::rng::stream(5, crate::rng::Stream::Init);
        for v in m.store.values_mut() {
            *v = crate::layers::uniform(v.shape(), 1.0, &mut rng);
        }
        let sents: Vec<&Sentence> = docs[0].sentences.iter().collect();
        let gold = gold_tags(&sents).unwrap();
        let inputs: Vec<_> = sents.iter().map(|s| m.encode(s).unwrap()).collect();
        let err = check_gradient(
            |g, vars| {
                let b = ParamStore::bind_values(g, vars);
                let batch: Vec<_> = inputs.iter().zip(&gold).map(|(x, t)| (x, t.as_slice())).collect();
                batch_loss(&m, g, &b, &batch, None, None)
            },
            m.store.values(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn memorizes_and_is_deterministic() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let cfg = TrainConfig {
            adam: AdamConfig {
                lr: 0.1,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (m, trace) = train_baseline(FeatureTemplate::Bigram, &cfg, &docs).unwrap();
        assert!(trace[19] < trace[0]);
        for s in &docs[0].sentences {
            assert_eq!(m.tag(s).unwrap(), s.tags().unwrap());
        }
        let (again, _) = train_baseline(FeatureTemplate::Bigram, &cfg, &docs).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn huge_lambda_keeps_weights_small() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let cfg = TrainConfig {
            lambda_l2: 1e3,
            adam: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (m, _) = train_baseline(FeatureTemplate::Unigram, &cfg, &docs).unwrap();
        let max = m.store.values().iter().flat_map(|t| t.data()).fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(max < 0.05, "{max}");
    }

    #[test]
    fn save_load_round_trip() {
        let docs = parse_corpus(SAMPLE).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (m, _) = train_baseline(FeatureTemplate::Bigram, &cfg, &docs).unwrap();
        let doc = m.to_document().unwrap();
        let back = BaselineModel::from_document(&ModelDocument::from_text(&doc.to_text().unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(crate::tagger::TaggerModel::from_document(&doc).is_err());
    }
}
