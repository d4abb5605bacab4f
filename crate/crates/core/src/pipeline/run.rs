//! Pipeline steps over a work directory.
//!
//! ```text
//! config.toml
//! bundle/                 corpus bundle
//! lda/model.txt           aspect model
//! lda/top_words.txt
//! sketch/ngrams.txt       n-gram table
//! sketch/keep.txt         keep sets
//! sketch/symbols.txt      sketch vocabulary
//! sketch/triples.{train,valid,test}.jsonl
//! stoplist.txt            optional, per-aspect words excluded from keep sets
//! train/last.bin          epoch checkpoint
//! train/report.json
//! model.bin               final checkpoint
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::generate::{GenerationResult, Generator};
use super::model::{mode, Model, Sizes};
use super::train::{train, EpochRecord, TrainOptions, TrainReport};
use super::triples::{build_tables, build_triples, read_triples, write_triples, TrainingTriple};
use crate::aspect_decoder::Context;
use crate::corpus::{
    ingest, preprocess, read_bundle, split, write_bundle, CorpusBundle, CorpusSplit, IngestSchema, RawReview, SplitRatios,
};
use crate::eval::MetricReport;
use crate::lda::{fit_gibbs, AspectModel};
use crate::nn::Checkpoint;
use crate::review_decoder::BoostTable;
use crate::sketch::{parse_stoplist, KeepSets, NgramTable, RuleTagger, SketchTables, SketchVocab};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorkDir {
    pub root: PathBuf,
}

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        WorkDir { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn bundle(&self) -> PathBuf {
        self.root.join("bundle")
    }
    pub fn lda_model(&self) -> PathBuf {
        self.root.join("lda/model.txt")
    }
    pub fn lda_report(&self) -> PathBuf {
        self.root.join("lda/top_words.txt")
    }
    pub fn ngrams(&self) -> PathBuf {
        self.root.join("sketch/ngrams.txt")
    }
    pub fn keep(&self) -> PathBuf {
        self.root.join("sketch/keep.txt")
    }
    pub fn symbols(&self) -> PathBuf {
        self.root.join("sketch/symbols.txt")
    }
    pub fn triples(&self, split: Split) -> PathBuf {
        self.root.join(format!("sketch/triples.{}.jsonl", split.name()))
    }
    pub fn stoplist(&self) -> PathBuf {
        self.root.join("stoplist.txt")
    }
    pub fn last_checkpoint(&self) -> PathBuf {
        self.root.join("train/last.bin")
    }
    pub fn train_report(&self) -> PathBuf {
        self.root.join("train/report.json")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.bin")
    }

    /// The run configuration stored by `prepare`, with `SEED` applied.
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(&self.config())?;
        c.apply_env()?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub read: usize,
    pub malformed: Vec<(usize, String)>,
    pub kept: usize,
    pub vocab: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Ingest, preprocess and split a corpus; store the bundle and the config.
pub fn prepare(input: &Path, schema: &IngestSchema, cfg: &RunConfig, work: &WorkDir) -> Result<PrepareSummary> {
    cfg.validate()?;
    let report = ingest(input, schema)?;
    let corpus = preprocess(&report.reviews, &cfg.corpus)?;
    let s = split(&corpus.reviews, cfg.split, cfg.seed)?;
    let summary = PrepareSummary {
        read: report.reviews.len() + report.malformed.len(),
        malformed: report.malformed,
        kept: corpus.reviews.len(),
        vocab: corpus.vocab.len(),
        train: s.train.len(),
        valid: s.valid.len(),
        test: s.test.len(),
    };
    write_bundle(&work.bundle(), &CorpusBundle::new(&corpus, s))?;
    write(&work.config(), cfg.to_toml())?;
    Ok(summary)
}

/// Fit the aspect model on the training split and write the top-words
/// report.
pub fn fit_aspects(work: &WorkDir, cfg: &RunConfig) -> Result<AspectModel> {
    let bundle = read_bundle(&work.bundle())?;
    let docs: Vec<_> = bundle.split.train.iter().map(|r| r.sentences.clone()).collect();
    let model = fit_gibbs(&docs, bundle.vocab.len(), bundle.vocab.num_reserved(), &cfg.lda())?;
    let path = work.lda_model();
    write(&path, model.to_text())?;
    write(
        &work.lda_report(),
        model.top_words_report(cfg.sketcher.keep_per_aspect, |w| bundle.vocab.word(w).to_string()),
    )?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchSummary {
    pub ngrams: usize,
    pub symbols: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Mine sketch tables from the training split and write triples for every
/// split.
pub fn build_sketches(work: &WorkDir, cfg: &RunConfig) -> Result<SketchSummary> {
    let bundle = read_bundle(&work.bundle())?;
    let model = AspectModel::load(&work.lda_model())?;
    let stoplist = if work.stoplist().exists() {
        parse_stoplist(&read(&work.stoplist())?, &bundle.vocab, model.num_aspects)?
    } else {
        Vec::new()
    };
    let tables = build_tables(&bundle.split.train, &model, &bundle.vocab, &cfg.sketcher, &stoplist);
    let symbols = SketchVocab::build(&tables);
    write(&work.ngrams(), tables.ngrams.to_text(&bundle.vocab))?;
    write(&work.keep(), tables.keep.to_text(&bundle.vocab))?;
    write(&work.symbols(), symbols.to_text(&bundle.vocab))?;
    let tagger = RuleTagger::new();
    let mut counts = [0usize; 3];
    for (i, (split, reviews)) in [
        (Split::Train, &bundle.split.train),
        (Split::Valid, &bundle.split.valid),
        (Split::Test, &bundle.split.test),
    ]
    .into_iter()
    .enumerate()
    {
        let t = build_triples(reviews, &model, &tables, &symbols, &bundle.vocab, &tagger)?;
        counts[i] = t.len();
        write_triples(&work.triples(split), &t)?;
    }
    Ok(SketchSummary {
        ngrams: tables.ngrams.len(),
        symbols: symbols.len(),
        train: counts[0],
        valid: counts[1],
        test: counts[2],
    })
}

/// Everything a trained model needs besides its checkpoint.
pub struct Artifacts {
    pub bundle: CorpusBundle,
    pub aspects: AspectModel,
    pub tables: SketchTables,
    pub symbols: SketchVocab,
}

impl Artifacts {
    pub fn load(work: &WorkDir) -> Result<Self> {
        let bundle = read_bundle(&work.bundle())?;
        let aspects = AspectModel::load(&work.lda_model())?;
        let v = &bundle.vocab;
        let tables = SketchTables {
            ngrams: NgramTable::from_text(&read(&work.ngrams())?, v)?,
            keep: KeepSets::from_text(&read(&work.keep())?, v)?,
        };
        let symbols = SketchVocab::from_text(&read(&work.symbols())?, v)?;
        Ok(Artifacts {
            bundle,
            aspects,
            tables,
            symbols,
        })
    }

    pub fn sizes(&self, train: &[TrainingTriple]) -> Sizes {
        Sizes {
            users: self.bundle.users.len(),
            items: self.bundle.items.len(),
            ratings: self.bundle.num_ratings,
            aspects: self.aspects.num_aspects,
            vocab: self.bundle.vocab.len(),
            symbols: self.symbols.len(),
            mode_sentences: mode(train.iter().map(TrainingTriple::len)),
        }
    }

    /// A freshly initialized model for these artifacts.
    pub fn new_model(&self, cfg: &RunConfig, train: &[TrainingTriple]) -> Result<Model> {
        Model::new(cfg, self.sizes(train), BoostTable::new(self.aspects.theta.clone())?)
    }

    pub fn generator<'a>(&'a self, model: &'a Model) -> Result<Generator<'a>> {
        Generator::new(model, &self.bundle.vocab, &self.symbols)
    }

    /// Map raw ids to a context. Unknown users or items become `None`; the
    /// rating is 1-based.
    pub fn context(&self, user: &str, item: &str, rating: u32) -> Result<Context> {
        if rating == 0 || rating as usize > self.bundle.num_ratings {
            return Err(Error::data(format!(
                "rating {rating} outside 1..={}",
                self.bundle.num_ratings
            )));
        }
        Ok(Context {
            user: self.bundle.users.iter().position(|u| u == user),
            item: self.bundle.items.iter().position(|i| i == item),
            rating: rating as usize - 1,
        })
    }
}

/// All pipeline preparation in memory, with every review in the training
/// split. Returns the artifacts and the training triples.
pub fn prepare_in_memory(raw: &[RawReview], cfg: &RunConfig) -> Result<(Artifacts, Vec<TrainingTriple>)> {
    cfg.validate()?;
    let corpus = preprocess(raw, &cfg.corpus)?;
    let split = CorpusSplit {
        train: corpus.reviews.clone(),
        valid: Vec::new(),
        test: Vec::new(),
        seed: cfg.seed,
        ratios: SplitRatios {
            train: 1.0,
            valid: 0.0,
            test: 0.0,
        },
    };
    let bundle = CorpusBundle::new(&corpus, split);
    let docs: Vec<_> = corpus.reviews.iter().map(|r| r.sentences.clone()).collect();
    let aspects = fit_gibbs(&docs, corpus.vocab.len(), corpus.vocab.num_reserved(), &cfg.lda())?;
    let tables = build_tables(&corpus.reviews, &aspects, &corpus.vocab, &cfg.sketcher, &[]);
    let symbols = SketchVocab::build(&tables);
    let triples = build_triples(&corpus.reviews, &aspects, &tables, &symbols, &corpus.vocab, &RuleTagger::new())?;
    Ok((
        Artifacts {
            bundle,
            aspects,
            tables,
            symbols,
        },
        triples,
    ))
}

/// Train on the stored training triples and write the final checkpoint to
/// `out`, or `model.bin` when `out` is `None`.
pub fn train_model(
    work: &WorkDir,
    cfg: &RunConfig,
    resume: bool,
    out: Option<&Path>,
    progress: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<(Model, TrainReport)> {
    let artifacts = Artifacts::load(work)?;
    let triples = read_triples(&work.triples(Split::Train))?;
    let mut model = artifacts.new_model(cfg, &triples)?;
    let last = work.last_checkpoint();
    if let Some(dir) = last.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    if !resume && last.exists() {
        fs::remove_file(&last).map_err(|e| Error::io(&last, e))?;
    }
    let report = train(
        &mut model,
        &triples,
        TrainOptions {
            checkpoint: Some(last),
            resume,
            max_epochs: None,
            progress,
        },
    )?;
    write(
        &work.train_report(),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    model
        .checkpoint(None, &[])
        .save(out.unwrap_or(&work.model()))?;
    Ok((model, report))
}

pub fn load_model(path: &Path) -> Result<Model> {
    Model::from_checkpoint(&Checkpoint::load(path)?)
}

/// A generation request with raw ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRequest {
    pub user: String,
    pub item: String,
    pub rating: u32,
}

/// Parse one request per line: `{"user": .., "item": .., "rating": ..}`.
pub fn read_requests(text: &str) -> Result<Vec<ContextRequest>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::data(format!("request line {}: {e}", n + 1))))
        .collect()
}

/// Generate for every triple of a split and score against the references.
pub fn evaluate(artifacts: &Artifacts, model: &Model, triples: &[TrainingTriple]) -> Result<(MetricReport, Vec<GenerationResult>)> {
    if triples.is_empty() {
        return Err(Error::Usage("no samples to evaluate".into()));
    }
    let ppl = model.perplexity(triples)?;
    let generator = artifacts.generator(model)?;
    let results = triples
        .iter()
        .map(|t| generator.generate(&t.context))
        .collect::<Result<Vec<_>>>()?;
    let generated: Vec<Vec<usize>> = results.iter().map(GenerationResult::words).collect();
    let references: Vec<Vec<usize>> = triples.iter().map(|t| t.sentences.concat()).collect();
    let report = MetricReport::compute(ppl.slots, ppl.softmax, &generated, &references, &artifacts.tables.keep)?;
    Ok((report, results))
}
