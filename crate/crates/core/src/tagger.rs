//! Character-level BiLSTM+CRF tagger, its training loop and model files.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Tensor, Var};
use crate::corpus::{CharType, Document, Gazetteer, Sentence, Tag, NUM_TAGS};
use crate::crf::{self, build_constraint_mask, ConstraintMask, CrfParams, CrfVars};
use crate::error::{Error, Result};
use crate::layers::{
    bilstm, dropout, dropout_schedule, embed_rows, linear, AdamConfig, AdamState, Binding,
    EmbeddingTable, LinearParams, LstmParams, ParamId, ParamStore,
};
use crate::modelfile::{ModelDocument, VocabRecord};
use crate::rng::{stream, Rng, Stream};

pub const UNK: usize = 0;
pub const UNK_TOKEN: &str = "<UNK>";
pub const NONE_TOKEN: &str = "<NONE>";
pub const MODEL_KIND: &str = "bilstm_crf";

/// Anything that maps an annotated sentence to one tag per character.
pub trait SequenceTagger: Sync {
    fn tag(&self, sentence: &Sentence) -> Result<Vec<Tag>>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub use_ctype: bool,
    pub use_icd: bool,
}

impl FeatureConfig {
    /// Conventional system name: `BiLSTM`, `BiLSTM_ct`, `BiLSTM_icd` or `BiLSTM_ct_icd`.
    pub fn system_name(self) -> &'static str {
        match (self.use_ctype, self.use_icd) {
            (false, false) => "BiLSTM",
            (true, false) => "BiLSTM_ct",
            (false, true) => "BiLSTM_icd",
            (true, true) => "BiLSTM_ct_icd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub char_dim: usize,
    pub icd_dim: usize,
    pub ctype_dim: usize,
    pub hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            char_dim: 100,
            icd_dim: 100,
            ctype_dim: 10,
            hidden: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub features: FeatureConfig,
    pub dims: Dims,
    pub epochs: usize,
    pub max_epochs: usize,
    pub minibatch_size: usize,
    pub dropout_base: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub constrain_training: bool,
    /// Probability of replacing a training-set singleton character with UNK.
    pub unk_replace: f64,
    /// L2 coefficient, used by the feature CRF only.
    pub lambda_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            features: FeatureConfig::default(),
            dims: Dims::default(),
            epochs: 20,
            max_epochs: 20,
            minibatch_size: 10,
            dropout_base: 0.5,
            adam: AdamConfig::default(),
            seed: 1,
            constrain_training: false,
            unk_replace: 0.5,
            lambda_l2: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size == 0 {
            return Err(Error::invalid("minibatch_size must be at least 1"));
        }
        if self.max_epochs == 0 || self.epochs > self.max_epochs {
            return Err(Error::invalid(format!(
                "epochs ({}) must lie in 0..=max_epochs ({}) and max_epochs must be positive",
                self.epochs, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_base) {
            return Err(Error::invalid("dropout_base must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.unk_replace) {
            return Err(Error::invalid("unk_replace must lie in [0, 1]"));
        }
        if !(self.lambda_l2 >= 0.0) || !self.adam.lr.is_finite() || self.adam.lr <= 0.0 {
            return Err(Error::invalid("lambda_l2 must be >= 0 and adam.lr positive"));
        }
        let d = self.dims;
        if d.char_dim == 0 || d.hidden == 0 || (self.features.use_icd && d.icd_dim == 0)
            || (self.features.use_ctype && d.ctype_dim == 0)
        {
            return Err(Error::invalid("embedding and hidden dimensions must be positive"));
        }
        Ok(())
    }
}

/// Token inventory with UNK at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary {
            tokens: vec![UNK_TOKEN.to_string()],
            counts: vec![0],
            index: HashMap::from([(UNK_TOKEN.to_string(), UNK)]),
        }
    }

    pub fn from_tokens(tokens: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) || counts.len() != tokens.len() {
            return Err(Error::Model("vocabulary must start with <UNK> and carry one count per token".into()));
        }
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Model("vocabulary has duplicate tokens".into()));
        }
        Ok(Vocabulary { tokens, counts, index })
    }

    /// Adds one occurrence of `token`, inserting it if new.
    pub fn observe(&mut self, token: &str) -> usize {
        let i = match self.index.get(token) {
            Some(&i) => i,
            None => {
                self.tokens.push(token.to_string());
                self.counts.push(0);
                self.index.insert(token.to_string(), self.tokens.len() - 1);
                self.tokens.len() - 1
            }
        };
        self.counts[i] += 1;
        i
    }

    pub fn insert(&mut self, token: &str) -> usize {
        let i = self.observe(token);
        self.counts[i] -= 1;
        i
    }

    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts.get(i).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn to_record(&self) -> VocabRecord {
        VocabRecord {
            tokens: self.tokens.clone(),
            counts: self.counts.clone(),
        }
    }

    pub fn from_record(r: &VocabRecord) -> Result<Self> {
        Self::from_tokens(r.tokens.clone(), r.counts.clone())
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabularies {
    pub chars: Vocabulary,
    /// `<UNK>`, `<NONE>`, then the codes seen in training.
    pub icd: Vocabulary,
    /// `<UNK>` (never produced) followed by C, H, K, A.
    pub ctype: Vocabulary,
}

fn ctype_vocab() -> Vocabulary {
    let mut v = Vocabulary::new();
    for t in CharType::ALL {
        v.insert(t.as_str());
    }
    v
}

pub fn build_vocabularies(docs: &[Document]) -> Result<Vocabularies> {
    let mut chars = Vocabulary::new();
    let mut icd = Vocabulary::new();
    icd.insert(NONE_TOKEN);
    let mut seen = false;
    for r in docs.iter().flat_map(|d| &d.sentences).flat_map(|s| &s.records) {
        seen = true;
        let mut buf = [0u8; 4];
        chars.observe(r.ch.encode_utf8(&mut buf));
        icd.observe(r.icd.as_deref().unwrap_or(NONE_TOKEN));
    }
    if !seen {
        return Err(Error::InvalidGold("cannot build vocabularies from an empty corpus".into()));
    }
    Ok(Vocabularies {
        chars,
        icd,
        ctype: ctype_vocab(),
    })
}

/// Parameter ids of a CRF layer held in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfIds {
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
}

impl CrfIds {
    pub fn new(store: &mut ParamStore) -> Self {
        let p = CrfParams::default();
        CrfIds {
            transitions: store.add("crf.transitions", p.transitions),
            start: store.add("crf.start", p.start),
            end: store.add("crf.end", p.end),
        }
    }

    pub fn vars(&self, b: &Binding) -> CrfVars {
        CrfVars {
            transitions: b.var(self.transitions),
            start: b.var(self.start),
            end: b.var(self.end),
        }
    }

    pub fn params(&self, store: &ParamStore) -> CrfParams {
        CrfParams {
            transitions: store.get(self.transitions).clone(),
            start: store.get(self.start).clone(),
            end: store.get(self.end).clone(),
        }
    }
}

/// Training-time randomness handed to an encoder.
pub struct TrainCtx<'a> {
    pub dropout: f64,
    pub dropout_rng: &'a mut Rng,
    pub unk_rng: &'a mut Rng,
    pub unk_replace: f64,
}

/// A model made of an emission encoder and a CRF layer, trainable by
/// [`fit`].
pub trait CrfModel {
    type Input: Send + Sync;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn crf_ids(&self) -> CrfIds;
    fn encode(&self, sentence: &Sentence) -> Result<Self::Input>;
    /// `[L, 5]` emission scores. `ctx` is `Some` only while training.
    fn emissions(&self, g: &mut Graph, b: &Binding, x: &Self::Input, ctx: Option<&mut TrainCtx>)
        -> Result<Var>;
    /// Extra loss term added once per minibatch.
    fn penalty(&self, _g: &mut Graph, _b: &Binding) -> Result<Option<Var>> {
        Ok(None)
    }
}

/// Mean CRF negative log-likelihood over `batch` plus the model penalty.
pub fn batch_loss<M: CrfModel>(
    model: &M,
    g: &mut Graph,
    b: &Binding,
    batch: &[(&M::Input, &[Tag])],
    mut ctx: Option<&mut TrainCtx>,
    mask: Option<&ConstraintMask>,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid("empty minibatch"));
    }
    let crf_vars = model.crf_ids().vars(b);
    let mut losses = Vec::with_capacity(batch.len());
    for (x, gold) in batch {
        let e = model.emissions(g, b, x, ctx.as_deref_mut())?;
        losses.push(crf::nll(g, e, &crf_vars, gold, mask)?);
    }
    let total = g.add_all(&losses)?;
    let mut loss = g.scale(total, 1.0 / batch.len() as f64)?;
    if let Some(p) = model.penalty(g, b)? {
        loss = g.add(loss, p)?;
    }
    Ok(loss)
}

/// Gold tags of every sentence, checked for presence and IOB2 validity.
pub fn gold_tags(sentences: &[&Sentence]) -> Result<Vec<Vec<Tag>>> {
    let mask = build_constraint_mask();
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let tags = s
                .tags()
                .ok_or_else(|| Error::InvalidGold(format!("sentence {} is unlabeled", i + 1)))?;
            if s.is_empty() {
                return Err(Error::InvalidGold(format!("sentence {} is empty", i + 1)));
            }
            if !mask.allows(&tags) {
                return Err(Error::InvalidGold(format!(
                    "sentence {} has an IOB2-invalid tag sequence",
                    i + 1
                )));
            }
            Ok(tags)
        })
        .collect()
}

/// Minibatch Adam training: shuffled sentences, groups of
/// `minibatch_size`, one tape and one update per group. Returns the mean
/// per-sentence loss of each epoch.
pub fn fit<M: CrfModel>(model: &mut M, sentences: &[&Sentence], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let gold = gold_tags(sentences)?;
    let inputs = sentences
        .iter()
        .map(|s| model.encode(s))
        .collect::<Result<Vec<_>>>()?;
    let mask = build_constraint_mask();
    let mask = cfg.constrain_training.then_some(&mask);
    let mut adam = AdamState::new(cfg.adam, model.params().values());
    let mut shuffle_rng = stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);
    let mut unk_rng = stream(cfg.seed, Stream::Unk);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let rate = dropout_schedule(epoch, cfg.max_epochs, cfg.dropout_base)?;
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.minibatch_size) {
            let batch: Vec<(&M::Input, &[Tag])> =
                chunk.iter().map(|&i| (&inputs[i], gold[i].as_slice())).collect();
            let mut g = Graph::new();
            let b = model.params().bind(&mut g);
            let mut ctx = TrainCtx {
                dropout: rate,
                dropout_rng: &mut dropout_rng,
                unk_rng: &mut unk_rng,
                unk_replace: cfg.unk_replace,
            };
            let loss = batch_loss(model, &mut g, &b, &batch, Some(&mut ctx), mask)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss {value} in epoch {epoch}")));
            }
            epoch_loss += value * chunk.len() as f64;
            g.backward(loss)?;
            let grads = b.grads(&g);
            adam.step(model.params_mut().values_mut(), &grads)?;
        }
        trace.push(epoch_loss / inputs.len().max(1) as f64);
    }
    Ok(trace)
}

/// Masked Viterbi decode of one encoded sentence.
pub fn decode<M: CrfModel>(model: &M, x: &M::Input) -> Result<Vec<Tag>> {
    let mut g = Graph::new();
    let b = model.params().bind(&mut g);
    let e = model.emissions(&mut g, &b, x, None)?;
    let crf = model.crf_ids().params(model.params());
    let (tags, _) = crf::viterbi(g.value(e), &crf, Some(&build_constraint_mask()))?;
    Ok(tags)
}

/// Sentence encoded as vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub chars: Vec<usize>,
    pub icd: Vec<usize>,
    pub ctype: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub config: TrainConfig,
    pub vocab: Vocabularies,
    pub store: ParamStore,
    pub char_emb: EmbeddingTable,
    pub icd_emb: Option<EmbeddingTable>,
    pub ctype_emb: Option<EmbeddingTable>,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub out: LinearParams,
    pub crf: CrfIds,
}

impl TaggerModel {
    /// Freshly initialized model; all initial values come from the `Init`
    /// stream of `config.seed`.
    pub fn new(config: TrainConfig, vocab: Vocabularies) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, Stream::Init);
        let mut store = ParamStore::new();
        let d = config.dims;
        let f = config.features;
        let char_emb = EmbeddingTable::new(&mut store, "emb.char", vocab.chars.len(), d.char_dim, &mut rng);
        let icd_emb = f
            .use_icd
            .then(|| EmbeddingTable::new(&mut store, "emb.icd", vocab.icd.len(), d.icd_dim, &mut rng));
        let ctype_emb = f
            .use_ctype
            .then(|| EmbeddingTable::new(&mut store, "emb.ctype", vocab.ctype.len(), d.ctype_dim, &mut rng));
        let input = Self::lstm_input_dim(&config);
        let fwd = LstmParams::new(&mut store, "lstm.fwd", input, d.hidden, &mut rng);
        let bwd = LstmParams::new(&mut store, "lstm.bwd", input, d.hidden, &mut rng);
        let out = LinearParams::new(&mut store, "out", 2 * d.hidden, NUM_TAGS, &mut rng);
        let crf = CrfIds::new(&mut store);
        Ok(TaggerModel {
            config,
            vocab,
            store,
            char_emb,
            icd_emb,
            ctype_emb,
            fwd,
            bwd,
            out,
            crf,
        })
    }

    pub fn lstm_input_dim(config: &TrainConfig) -> usize {
        let d = config.dims;
        d.char_dim
            + if config.features.use_icd { d.icd_dim } else { 0 }
            + if config.features.use_ctype { d.ctype_dim } else { 0 }
    }

    pub fn features(&self) -> FeatureConfig {
        self.config.features
    }

    /// Emissions in inference mode.
    pub fn emission_scores(&self, sentence: &Sentence) -> Result<Tensor> {
        let x = self.encode(sentence)?;
        let mut g = Graph::new();
        let b = self.store.bind(&mut g);
        let e = self.emissions(&mut g, &b, &x, None)?;
        Ok(g.value(e).clone())
    }

    /// Tags raw text: character types and gazetteer codes are attached,
    /// then the masked Viterbi path is decoded.
    pub fn predict(&self, raw_text: &str, gaz: Option<&Gazetteer>) -> Result<Sentence> {
        if raw_text.is_empty() {
            return Err(Error::invalid("cannot tag empty text"));
        }
        let mut s = Sentence::from_text(raw_text);
        if self.config.features.use_icd {
            let gaz = gaz.ok_or_else(|| Error::invalid("this model uses ICD features and needs a gazetteer"))?;
            s.annotate(gaz);
        } else if let Some(gaz) = gaz {
            s.annotate(gaz);
        }
        let tags = self.tag(&s)?;
        s.set_tags(&tags);
        Ok(s)
    }

    pub fn to_document(&self) -> Result<ModelDocument> {
        let config = serde_json::to_value(&self.config).map_err(|e| Error::Model(e.to_string()))?;
        let mut doc = ModelDocument::new(MODEL_KIND, config);
        doc.vocabularies.insert("char".into(), self.vocab.chars.to_record());
        doc.vocabularies.insert("icd".into(), self.vocab.icd.to_record());
        doc.vocabularies.insert("ctype".into(), self.vocab.ctype.to_record());
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
        let config: TrainConfig =
            serde_json::from_value(doc.config.clone()).map_err(|e| Error::Model(e.to_string()))?;
        let vocab = Vocabularies {
            chars: Vocabulary::from_record(doc.vocab("char")?)?,
            icd: Vocabulary::from_record(doc.vocab("icd")?)?,
            ctype: Vocabulary::from_record(doc.vocab("ctype")?)?,
        };
        let mut model = TaggerModel::new(config, vocab)?;
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

impl CrfModel for TaggerModel {
    type Input = Encoded;

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn crf_ids(&self) -> CrfIds {
        self.crf
    }

    fn encode(&self, sentence: &Sentence) -> Result<Encoded> {
        if sentence.is_empty() {
            return Err(Error::invalid("cannot encode an empty sentence"));
        }
        let mut buf = [0u8; 4];
        let mut x = Encoded {
            chars: Vec::with_capacity(sentence.len()),
            icd: Vec::with_capacity(sentence.len()),
            ctype: Vec::with_capacity(sentence.len()),
        };
        for r in &sentence.records {
            x.chars.push(self.vocab.chars.get(r.ch.encode_utf8(&mut buf)));
            x.icd.push(self.vocab.icd.get(r.icd.as_deref().unwrap_or(NONE_TOKEN)));
            x.ctype.push(self.vocab.ctype.get(r.ctype.as_str()));
        }
        Ok(x)
    }

    fn emissions(&self, g: &mut Graph, b: &Binding, x: &Encoded, mut ctx: Option<&mut TrainCtx>) -> Result<Var> {
        let chars: Vec<usize> = match ctx.as_deref_mut() {
            Some(c) if c.unk_replace > 0.0 => x
                .chars
                .iter()
                .map(|&i| {
                    if self.vocab.chars.count(i) == 1 && c.unk_rng.gen::<f64>() < c.unk_replace {
                        UNK
                    } else {
                        i
                    }
                })
                .collect(),
            _ => x.chars.clone(),
        };
        let mut parts = vec![embed_rows(g, b, &self.char_emb, &chars)?];
        if let Some(t) = &self.icd_emb {
            parts.push(embed_rows(g, b, t, &x.icd)?);
        }
        if let Some(t) = &self.ctype_emb {
            parts.push(embed_rows(g, b, t, &x.ctype)?);
        }
        let mut h = g.concat(&parts, 1)?;
        if let Some(c) = ctx.as_deref_mut() {
            h = dropout(g, h, c.dropout, c.dropout_rng, true)?;
        }
        h = bilstm(g, b, &self.fwd, &self.bwd, h)?;
        if let Some(c) = ctx {
            h = dropout(g, h, c.dropout, c.dropout_rng, true)?;
        }
        linear(g, b, &self.out, h)
    }
}

impl SequenceTagger for TaggerModel {
    fn tag(&self, sentence: &Sentence) -> Result<Vec<Tag>> {
        decode(self, &self.encode(sentence)?)
    }
}

/// Builds vocabularies from `docs`, initializes a model and trains it.
pub fn train(cfg: &TrainConfig, docs: &[Document]) -> Result<(TaggerModel, Vec<f64>)> {
    cfg.validate()?;
    let sentences: Vec<&Sentence> = docs.iter().flat_map(|d| &d.sentences).collect();
    gold_tags(&sentences)?;
    let vocab = build_vocabularies(docs)?;
    let mut model = TaggerModel::new(cfg.clone(), vocab)?;
    let trace = fit(&mut model, &sentences, cfg)?;
    Ok((model, trace))
}
