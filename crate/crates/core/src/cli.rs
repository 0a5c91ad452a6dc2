//! Command-line front end: argument parsing, run configuration files and the
//! `cmd_*` entry points behind each subcommand.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baseline::{train_baseline, BaselineModel, FeatureTemplate};
use crate::corpus::{
    generate_synthetic, parse_corpus, parse_corpus_with, parse_plain_text, parse_predictions, write_corpus,
    Document, Gazetteer, ParseOptions, SynthSpec, Tag,
};
use crate::error::{Error, Result};
use crate::eval::{
    crossval, evaluate, format_comparison, format_report, format_summary, gold_of, to_json, Comparison,
    FoldSummary,
};
use crate::modelfile::ModelDocument;
use crate::tagger::{self, SequenceTagger, TaggerModel, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    BilstmCrf,
    Crf(FeatureTemplate),
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "bilstm_crf" => Ok(ModelKind::BilstmCrf),
            "crf_unigram" => Ok(ModelKind::Crf(FeatureTemplate::Unigram)),
            "crf_bigram" => Ok(ModelKind::Crf(FeatureTemplate::Bigram)),
            _ => Err(Error::invalid(format!(
                "unknown model_kind {s:?} (expected bilstm_crf, crf_unigram or crf_bigram)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::BilstmCrf => "bilstm_crf",
            ModelKind::Crf(FeatureTemplate::Unigram) => "crf_unigram",
            ModelKind::Crf(FeatureTemplate::Bigram) => "crf_bigram",
        }
    }
}

/// Everything a training run needs. Read from flat `key = value` files;
/// later `set` calls override earlier values.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model_kind: ModelKind,
    pub train: TrainConfig,
    pub corpus: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub loss_log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model_kind: ModelKind::BilstmCrf,
            train: TrainConfig::default(),
            corpus: None,
            gazetteer: None,
            model: None,
            loss_log: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "model_kind",
        "epochs",
        "max_epochs",
        "minibatch_size",
        "dropout_base",
        "seed",
        "use_ctype",
        "use_icd",
        "constrain_training",
        "lambda_l2",
        "unk_replace",
        "char_dim",
        "icd_dim",
        "ctype_dim",
        "hidden",
        "adam.lr",
        "adam.beta1",
        "adam.beta2",
        "adam.eps",
        "corpus",
        "gazetteer",
        "model",
        "loss_log",
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected `key = value`"))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::InvalidArgument(msg) => Error::parse(i + 1, msg),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // relative paths inside a config file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus, &mut cfg.gazetteer, &mut cfg.model, &mut cfg.loss_log]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "model_kind" => self.model_kind = ModelKind::parse(value)?,
            "epochs" => t.epochs = parse_value(key, value)?,
            "max_epochs" => t.max_epochs = parse_value(key, value)?,
            "minibatch_size" => t.minibatch_size = parse_value(key, value)?,
            "dropout_base" => t.dropout_base = parse_value(key, value)?,
            "seed" => t.seed = parse_value(key, value)?,
            "use_ctype" => t.features.use_ctype = parse_value(key, value)?,
            "use_icd" => t.features.use_icd = parse_value(key, value)?,
            "constrain_training" => t.constrain_training = parse_value(key, value)?,
            "lambda_l2" => t.lambda_l2 = parse_value(key, value)?,
            "unk_replace" => t.unk_replace = parse_value(key, value)?,
            "char_dim" => t.dims.char_dim = parse_value(key, value)?,
            "icd_dim" => t.dims.icd_dim = parse_value(key, value)?,
            "ctype_dim" => t.dims.ctype_dim = parse_value(key, value)?,
            "hidden" => t.dims.hidden = parse_value(key, value)?,
            "adam.lr" => t.adam.lr = parse_value(key, value)?,
            "adam.beta1" => t.adam.beta1 = parse_value(key, value)?,
            "adam.beta2" => t.adam.beta2 = parse_value(key, value)?,
            "adam.eps" => t.adam.eps = parse_value(key, value)?,
            "corpus" => self.corpus = Some(value.into()),
            "gazetteer" => self.gazetteer = Some(value.into()),
            "model" => self.model = Some(value.into()),
            "loss_log" => self.loss_log = Some(value.into()),
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("model_kind", self.model_kind.as_str().into());
        kv("epochs", t.epochs.to_string());
        kv("max_epochs", t.max_epochs.to_string());
        kv("minibatch_size", t.minibatch_size.to_string());
        kv("dropout_base", t.dropout_base.to_string());
        kv("seed", t.seed.to_string());
        kv("use_ctype", t.features.use_ctype.to_string());
        kv("use_icd", t.features.use_icd.to_string());
        kv("constrain_training", t.constrain_training.to_string());
        kv("lambda_l2", t.lambda_l2.to_string());
        kv("unk_replace", t.unk_replace.to_string());
        kv("char_dim", t.dims.char_dim.to_string());
        kv("icd_dim", t.dims.icd_dim.to_string());
        kv("ctype_dim", t.dims.ctype_dim.to_string());
        kv("hidden", t.dims.hidden.to_string());
        kv("adam.lr", t.adam.lr.to_string());
        kv("adam.beta1", t.adam.beta1.to_string());
        kv("adam.beta2", t.adam.beta2.to_string());
        kv("adam.eps", t.adam.eps.to_string());
        for (k, p) in [
            ("corpus", &self.corpus),
            ("gazetteer", &self.gazetteer),
            ("model", &self.model),
            ("loss_log", &self.loss_log),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        out
    }

    /// Display name of the configured system, e.g. `BiLSTM_icd`.
    pub fn system_name(&self) -> &'static str {
        match self.model_kind {
            ModelKind::BilstmCrf => self.train.features.system_name(),
            ModelKind::Crf(t) => t.system_name(),
        }
    }
}

/// A loaded model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Tagger(TaggerModel),
    Baseline(BaselineModel),
}

impl AnyModel {
    pub fn load(path: &Path) -> Result<Self> {
        let doc = ModelDocument::load(path)?;
        match doc.model_kind.as_str() {
            tagger::MODEL_KIND => Ok(AnyModel::Tagger(TaggerModel::from_document(&doc)?)),
            crate::baseline::MODEL_KIND => Ok(AnyModel::Baseline(BaselineModel::from_document(&doc)?)),
            other => Err(Error::Model(format!("unknown model_kind {other}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyModel::Tagger(m) => m.save(path),
            AnyModel::Baseline(m) => m.save(path),
        }
    }

    pub fn uses_icd(&self) -> bool {
        matches!(self, AnyModel::Tagger(m) if m.features().use_icd)
    }
}

impl SequenceTagger for AnyModel {
    fn tag(&self, s: &crate::corpus::Sentence) -> Result<Vec<Tag>> {
        match self {
            AnyModel::Tagger(m) => m.tag(s),
            AnyModel::Baseline(m) => m.tag(s),
        }
    }
}

/// Trains the system described by `cfg` on `docs`.
pub fn train_system(cfg: &RunConfig, docs: &[Document]) -> Result<(AnyModel, Vec<f64>)> {
    match cfg.model_kind {
        ModelKind::BilstmCrf => {
            let (m, trace) = tagger::train(&cfg.train, docs)?;
            Ok((AnyModel::Tagger(m), trace))
        }
        ModelKind::Crf(template) => {
            let (m, trace) = train_baseline(template, &cfg.train, docs)?;
            Ok((AnyModel::Baseline(m), trace))
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn require_writable_parent(path: &Path, what: &str) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "directory for {what} {} does not exist",
            path.display()
        )))
    }
}

fn load_gazetteer(path: &Path) -> Result<Gazetteer> {
    Gazetteer::parse(&read(path)?)
}

/// Reads the configured corpus, re-annotating it when a gazetteer is set.
fn load_training_corpus(cfg: &RunConfig) -> Result<Vec<Document>> {
    let corpus = cfg.corpus.as_deref().ok_or_else(|| Error::invalid("no corpus given"))?;
    let mut docs = parse_corpus(&read(corpus)?)?;
    if let Some(g) = cfg.gazetteer.as_deref() {
        let gaz = load_gazetteer(g)?;
        for s in docs.iter_mut().flat_map(|d| &mut d.sentences) {
            s.annotate(&gaz);
        }
    }
    Ok(docs)
}

fn check_inputs(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.corpus.as_deref().ok_or_else(|| Error::invalid("no corpus given"))?;
    require_file(corpus, "corpus")?;
    if let Some(g) = cfg.gazetteer.as_deref() {
        require_file(g, "gazetteer")?;
    }
    Ok(())
}

fn looks_like_columns(text: &str) -> bool {
    text.lines()
        .find(|l| !l.is_empty() && !l.starts_with("#doc"))
        .is_some_and(|l| l.contains('\t'))
}

/// Attaches character types and gazetteer codes. Column files keep their
/// tags; anything else is read as plain text with one sentence per line.
pub fn cmd_preprocess(input: &Path, gazetteer: &Path, output: &Path) -> Result<String> {
    require_file(input, "input")?;
    require_file(gazetteer, "gazetteer")?;
    require_writable_parent(output, "output")?;
    let gaz = load_gazetteer(gazetteer)?;
    let text = read(input)?;
    let mut docs = if looks_like_columns(&text) {
        parse_corpus(&text)?
    } else {
        parse_plain_text(&text)
    };
    let mut n = 0;
    for s in docs.iter_mut().flat_map(|d| &mut d.sentences) {
        s.annotate(&gaz);
        n += 1;
    }
    write(output, &write_corpus(&docs))?;
    Ok(format!("preprocessed {} documents, {n} sentences", docs.len()))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    check_inputs(cfg)?;
    let model_path = cfg.model.as_deref().ok_or_else(|| Error::invalid("no model output path given"))?;
    let loss_path = cfg
        .loss_log
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", model_path.display())));
    require_writable_parent(model_path, "model")?;
    require_writable_parent(&loss_path, "loss log")?;
    cfg.train.validate()?;
    let docs = load_training_corpus(cfg)?;
    let (model, trace) = train_system(cfg, &docs)?;
    model.save(model_path)?;
    let mut csv = String::from("epoch,loss\n");
    let mut log = String::new();
    for (e, loss) in trace.iter().enumerate() {
        let _ = writeln!(csv, "{},{loss:?}", e + 1);
        let _ = writeln!(log, "epoch {} loss {loss:.6}", e + 1);
    }
    write(&loss_path, &csv)?;
    let _ = write!(
        log,
        "trained {} on {} documents; model written to {}",
        cfg.system_name(),
        docs.len(),
        model_path.display()
    );
    Ok(log)
}

/// Tags each line of a plain-text file (or each sentence of a column file)
/// and writes a column file with predicted tags.
pub fn cmd_predict(model: &Path, input: &Path, gazetteer: Option<&Path>, output: &Path) -> Result<String> {
    require_file(model, "model")?;
    require_file(input, "input")?;
    if let Some(g) = gazetteer {
        require_file(g, "gazetteer")?;
    }
    require_writable_parent(output, "output")?;
    let model = AnyModel::load(model)?;
    let gaz = gazetteer.map(load_gazetteer).transpose()?;
    if model.uses_icd() && gaz.is_none() {
        return Err(Error::invalid("this model uses ICD features; pass --gazetteer"));
    }
    let text = read(input)?;
    let mut docs = if looks_like_columns(&text) {
        parse_corpus_with(&text, ParseOptions { strict: false })?
    } else {
        parse_plain_text(&text)
    };
    let mut n = 0;
    for s in docs.iter_mut().flat_map(|d| &mut d.sentences) {
        if let Some(g) = &gaz {
            s.annotate(g);
        }
        let tags = model.tag(s)?;
        s.set_tags(&tags);
        n += 1;
    }
    write(output, &write_corpus(&docs))?;
    Ok(format!("tagged {n} sentences"))
}

/// Scores predictions against gold tags. `pred` may be a column file with
/// tags in the fourth column or a five-column prediction file; when `gold`
/// is `None`, `pred` must be a five-column file holding both.
pub fn cmd_eval(gold: Option<&Path>, pred: &Path, json: Option<&Path>) -> Result<String> {
    require_file(pred, "prediction file")?;
    if let Some(g) = gold {
        require_file(g, "gold file")?;
    }
    if let Some(j) = json {
        require_writable_parent(j, "json output")?;
    }
    let pred_text = read(pred)?;
    let five_columns = pred_text
        .lines()
        .find(|l| !l.is_empty() && !l.starts_with("#doc"))
        .is_some_and(|l| l.split('\t').count() == 5);
    let (gold_tags, pred_tags) = if five_columns {
        let (docs, preds) = parse_predictions(&pred_text)?;
        let gold_tags = match gold {
            Some(g) => gold_of(&parse_corpus_with(&read(g)?, ParseOptions { strict: false })?)?,
            None => gold_of(&docs)?,
        };
        (gold_tags, preds)
    } else {
        let g = gold.ok_or_else(|| Error::invalid("a four-column prediction file needs --gold"))?;
        let gold_docs = parse_corpus_with(&read(g)?, ParseOptions { strict: false })?;
        let pred_docs = parse_corpus_with(&pred_text, ParseOptions { strict: false })?;
        (gold_of(&gold_docs)?, gold_of(&pred_docs)?)
    };
    let report = evaluate(&gold_tags, &pred_tags)?;
    if let Some(j) = json {
        write(j, &to_json(&report)?)?;
    }
    let mut out = format_report(&[("system", &report)]);
    for (name, p) in [("P-tag", &report.positive), ("N-tag", &report.negative), ("DNE-E", &report.dne)] {
        let _ = writeln!(out, "{name}: gold {} predicted {} correct {}", p.gold, p.predicted, p.correct);
    }
    Ok(out)
}

fn crossval_one(cfg: &RunConfig, docs: &[Document], k: usize, parallel: usize) -> Result<FoldSummary> {
    cfg.train.validate()?;
    crossval(|train| Ok(train_system(cfg, train)?.0), docs, k, cfg.train.seed, parallel)
}

/// Cross-validation of one system, or of two on identical folds when
/// `compare` is given. Folds are drawn from the first config's seed.
pub fn cmd_crossval(
    cfg: &RunConfig,
    compare: Option<&RunConfig>,
    k: usize,
    parallel: usize,
    json: Option<&Path>,
) -> Result<String> {
    check_inputs(cfg)?;
    if let Some(j) = json {
        require_writable_parent(j, "json output")?;
    }
    let docs = load_training_corpus(cfg)?;
    let a = crossval_one(cfg, &docs, k, parallel)?;
    let (text, json_text) = match compare {
        None => (format_summary(cfg.system_name(), &a), to_json(&a)?),
        Some(other) => {
            let mut other = other.clone();
            other.train.seed = cfg.train.seed;
            let b = crossval_one(&other, &docs, k, parallel)?;
            let (mut name_a, name_b) = (cfg.system_name().to_string(), other.system_name().to_string());
            if name_a == name_b {
                name_a.push_str(" (A)");
            }
            let c = Comparison::new(&name_a, a, &name_b, b)?;
            (format_comparison(&c), to_json(&c)?)
        }
    };
    if let Some(j) = json {
        write(j, &json_text)?;
    }
    Ok(text)
}

/// Writes a synthetic corpus and the gazetteer that covers its coded entities.
pub fn cmd_synth(seed: u64, n_docs: usize, spec: Option<&Path>, output: &Path, gazetteer_out: &Path) -> Result<String> {
    if let Some(s) = spec {
        require_file(s, "spec")?;
    }
    require_writable_parent(output, "output")?;
    require_writable_parent(gazetteer_out, "gazetteer output")?;
    let spec = match spec {
        Some(p) => SynthSpec::from_toml(&read(p)?)?,
        None => SynthSpec::default(),
    };
    let docs = generate_synthetic(seed, n_docs, &spec)?;
    write(output, &write_corpus(&docs))?;
    write(gazetteer_out, &spec.gazetteer()?.to_text())?;
    let sentences: usize = docs.iter().map(|d| d.sentences.len()).sum();
    Ok(format!("generated {} documents, {sentences} sentences", docs.len()))
}

#[derive(Debug, Parser)]
#[command(name = "dnetag", version, about = "Disease entity and modality tagging with BiLSTM+CRF")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Re-annotates the corpus ICD column with this gazetteer.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Per-epoch loss CSV; defaults to `<model>.loss.csv`.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    /// Overrides a config key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl TrainArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                require_file(p, "config")?;
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(p) = &self.corpus {
            cfg.corpus = Some(p.clone());
        }
        if let Some(p) = &self.gazetteer {
            cfg.gazetteer = Some(p.clone());
        }
        if let Some(p) = &self.model {
            cfg.model = Some(p.clone());
        }
        if let Some(p) = &self.loss_log {
            cfg.loss_log = Some(p.clone());
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub run: TrainArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Second system's config; both run on identical folds.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attach character-type and ICD columns to raw or column text.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a model from a labeled column corpus.
    Train(TrainArgs),
    /// Tag raw text with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Chunk-level precision, recall and F.
    Eval {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// k-fold cross-validation, optionally against a second system.
    Crossval(CrossvalArgs),
    /// Generate a synthetic corpus and its gazetteer.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_docs: usize,
        /// TOML generator spec; built-in defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        gazetteer_out: PathBuf,
    },
    /// Same as `crossval --compare`.
    Compare(CrossvalArgs),
}

fn emit(output: Option<&Path>, text: &str) -> Result<String> {
    match output {
        Some(p) => {
            write(p, text)?;
            Ok(String::new())
        }
        None => Ok(text.to_string()),
    }
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Preprocess { input, gazetteer, output } => cmd_preprocess(&input, &gazetteer, &output),
        Command::Train(args) => cmd_train(&args.run_config()?),
        Command::Predict {
            model,
            input,
            gazetteer,
            output,
        } => cmd_predict(&model, &input, gazetteer.as_deref(), &output),
        Command::Eval { gold, pred, json } => cmd_eval(gold.as_deref(), &pred, json.as_deref()),
        Command::Crossval(args) | Command::Compare(args) => {
            let cfg = args.run.run_config()?;
            if let Some(o) = &args.output {
                require_writable_parent(o, "output")?;
            }
            let other = match &args.compare {
                Some(p) => {
                    require_file(p, "compare config")?;
                    Some(RunConfig::load(p)?)
                }
                None => None,
            };
            let text = cmd_crossval(&cfg, other.as_ref(), args.k, args.parallel, args.json.as_deref())?;
            emit(args.output.as_deref(), &text)
        }
        Command::Synth {
            seed,
            n_docs,
            spec,
            output,
            gazetteer_out,
        } => cmd_synth(seed, n_docs, spec.as_deref(), &output, &gazetteer_out),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print one line: `error: <category>: <message>`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return 2;
        }
    };
    if let Command::Compare(args) = &cli.command {
        if args.compare.is_none() {
            eprintln!("error: usage: compare needs --compare <config>");
            return 2;
        }
    }
    match execute(cli) {
        Ok(text) => {
            if !text.is_empty() {
                println!("{}", text.trim_end());
            }
            0
        }
        Err(e) => {
            let cat = e.category();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", cat.as_str());
            cat.exit_code()
        }
    }
}
