//! Staged training followed by joint fine-tuning.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::StageConfig;
use super::model::{Factors, FactorTotals, Model};
use super::triples::TrainingTriple;
use crate::nn::{Adam, Checkpoint, Grads, NodeId, ParamId, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Aspect,
    Sketch,
    Review,
    Joint,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Aspect, Stage::Sketch, Stage::Review, Stage::Joint];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Aspect => "aspect",
            Stage::Sketch => "sketch",
            Stage::Review => "review",
            Stage::Joint => "joint",
        }
    }

    pub fn factors(self) -> Factors {
        let only = |aspect, sketch, word| Factors { aspect, sketch, word };
        match self {
            Stage::Aspect => only(true, false, false),
            Stage::Sketch => only(false, true, false),
            Stage::Review => only(false, false, true),
            Stage::Joint => Factors::ALL,
        }
    }

    /// The loss a stage optimizes, from evaluation totals.
    pub fn loss(self, t: &FactorTotals) -> f64 {
        match self {
            Stage::Aspect => t.aspect(),
            Stage::Sketch => t.sketch(),
            Stage::Review => t.word(),
            Stage::Joint => t.joint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub lr: f64,
    /// Mean training-mode batch loss.
    pub loss: f64,
    pub steps: usize,
}

/// Evaluation-mode loss of a stage's objective over the training set,
/// before and after the stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub start_loss: f64,
    pub end_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stages: Vec<StageSummary>,
    /// Last completed `(stage, epoch)`.
    pub done: Option<(Stage, usize)>,
}

impl TrainReport {
    pub fn summary(&self, stage: Stage) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Written after every epoch; on divergence it holds the last good state.
    pub checkpoint: Option<PathBuf>,
    /// Continue from `checkpoint` if it exists.
    pub resume: bool,
    /// Stop after this many epochs in this call (for tests of resumption).
    pub max_epochs: Option<usize>,
    pub progress: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

const PROGRESS_KEY: &str = "progress";

/// SplitMix64 finalizer; derives independent seeds from a run seed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |acc, &p| mix(acc ^ mix(p)))
}

impl Model {
    fn stage_config(&self, stage: Stage) -> &StageConfig {
        match stage {
            Stage::Aspect => &self.config.aspect_decoder.train,
            Stage::Sketch => &self.config.sketch_decoder.train,
            Stage::Review => &self.config.review_decoder.train,
            Stage::Joint => &self.config.orchestrator.joint,
        }
    }

    fn stage_enabled(&self, stage: Stage) -> bool {
        let o = &self.config.orchestrator;
        !(stage == Stage::Aspect && o.no_aspect || stage == Stage::Sketch && o.no_sketch)
    }

    fn stage_params(&self, stage: Stage) -> Vec<ParamId> {
        let tune = match stage {
            Stage::Aspect | Stage::Joint => true,
            _ => self.config.orchestrator.tune_context_in_stages,
        };
        self.params_for(stage.factors(), tune)
    }
}

/// Group review indices into batches. The aspect stage counts reviews; the
/// others count sentences, closing a batch once it holds at least `size`.
fn batches(order: &[usize], triples: &[TrainingTriple], stage: Stage, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut fill = 0;
    for &k in order {
        cur.push(k);
        fill += if stage == Stage::Aspect { 1 } else { triples[k].len() };
        if fill >= size {
            out.push(std::mem::take(&mut cur));
            fill = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

struct BatchResult {
    loss: f64,
    grads: Grads,
}

/// Forward and backward over one batch. Each factor contributes its mean
/// per-token loss.
fn batch_step(model: &Model, batch: &[usize], triples: &[TrainingTriple], stage: Stage, seed: u64) -> Result<BatchResult> {
    let f = stage.factors();
    let dropout = model.config.orchestrator.dropout;
    let mut per_review = Vec::with_capacity(batch.len());
    let (mut na, mut ns, mut nw) = (0usize, 0usize, 0usize);
    let mut grads = Grads::new(&model.store);
    // Token counts first, so every loss node can be seeded with its weight.
    for (i, &k) in batch.iter().enumerate() {
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, i as u64]));
        let mut tape = Tape::training(&model.store, dropout, rng);
        let l = model.review_losses(&mut tape, &triples[k], f)?;
        na += l.aspect.len();
        ns += l.sketch.len();
        nw += l.word.len();
        per_review.push((tape, l));
    }
    let w = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let (wa, ws, ww) = (w(na), w(ns), w(nw));
    let mut loss = 0.0;
    for (tape, l) in &per_review {
        let mut seeds: Vec<(NodeId, f64)> = Vec::with_capacity(l.aspect.len() + l.sketch.len() + l.word.len());
        seeds.extend(l.aspect.iter().map(|&n| (n, wa)));
        seeds.extend(l.sketch.iter().map(|&n| (n, ws)));
        seeds.extend(l.word.iter().map(|&n| (n, ww)));
        loss += seeds.iter().map(|&(n, s)| s * tape.scalar(n)).sum::<f64>();
        tape.backward(&seeds, &mut grads);
    }
    Ok(BatchResult { loss, grads })
}

fn save_progress(model: &Model, adam: &Adam, report: &TrainReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string(report).expect("report serializes");
    let bytes = model.checkpoint(Some(adam), &[(PROGRESS_KEY, json)]).to_bytes();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Progress recorded in a training checkpoint.
pub fn read_progress(ckpt: &Checkpoint) -> Result<TrainReport> {
    match ckpt.meta.get(PROGRESS_KEY) {
        Some(s) => serde_json::from_str(s).map_err(|e| Error::data(format!("checkpoint progress: {e}"))),
        None => Ok(TrainReport::default()),
    }
}

/// Run every enabled stage in order, then the joint phase.
///
/// All randomness (epoch shuffles, dropout masks) is derived from the run
/// seed, the stage and the epoch, so a run resumed from an epoch checkpoint
/// follows the same trajectory as an uninterrupted one.
pub fn train(model: &mut Model, triples: &[TrainingTriple], mut opts: TrainOptions) -> Result<TrainReport> {
    if triples.is_empty() {
        return Err(Error::data("no training triples"));
    }
    for t in triples {
        t.validate()?;
    }
    let mut adam = Adam::new(&model.store, model.config.aspect_decoder.train.lr);
    let mut report = TrainReport::default();
    if let (true, Some(path)) = (opts.resume, opts.checkpoint.as_deref()) {
        if path.exists() {
            let ckpt = Checkpoint::load(path)?;
            let resumed = Model::from_checkpoint(&ckpt)?;
            if resumed.config != model.config || resumed.sizes != model.sizes {
                return Err(Error::config("checkpoint was written by a different run configuration"));
            }
            *model = resumed;
            adam = ckpt.adam(adam.lr);
            report = read_progress(&ckpt)?;
        }
    }
    let seed = model.config.seed;
    let clip = model.config.orchestrator.clip_norm;
    let mut budget = opts.max_epochs;
    for (si, stage) in Stage::ALL.into_iter().enumerate() {
        if !model.stage_enabled(stage) {
            continue;
        }
        let sc = model.stage_config(stage).clone();
        let first = match report.done {
            Some((s, e)) if s == stage => e + 1,
            Some((s, _)) if s > stage => continue,
            _ => 0,
        };
        if first >= sc.epochs {
            continue;
        }
        if report.summary(stage).is_none() {
            let start = stage.loss(&model.totals(triples, stage.factors())?);
            report.stages.push(StageSummary {
                stage,
                start_loss: start,
                end_loss: None,
            });
        }
        let ids = model.stage_params(stage);
        for epoch in first..sc.epochs {
            if budget == Some(0) {
                return Ok(report);
            }
            budget = budget.map(|b| b - 1);
            adam.lr = sc.lr_at(epoch);
            let mut order: Vec<usize> = (0..triples.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, si as u64, epoch as u64])));
            let bs = batches(&order, triples, stage, sc.batch);
            let mut total = 0.0;
            for (b, batch) in bs.iter().enumerate() {
                let bseed = derive_seed(&[seed, si as u64, epoch as u64, b as u64, 1]);
                let BatchResult { loss, mut grads } = batch_step(model, batch, triples, stage, bseed)?;
                let norm = grads.clip(&ids, clip);
                if !loss.is_finite() || !norm.is_finite() {
                    return Err(Error::Diverged {
                        stage: stage.name().into(),
                        epoch,
                        loss,
                    });
                }
                adam.step(&mut model.store, &grads, &ids);
                total += loss;
            }
            if !model.store.all_finite() {
                return Err(Error::Diverged {
                    stage: stage.name().into(),
                    epoch,
                    loss: f64::NAN,
                });
            }
            let rec = EpochRecord {
                stage,
                epoch,
                lr: adam.lr,
                loss: total / bs.len() as f64,
                steps: bs.len(),
            };
            if let Some(p) = opts.progress.as_mut() {
                p(&rec);
            }
            report.epochs.push(rec);
            report.done = Some((stage, epoch));
            if epoch + 1 == sc.epochs {
                let end = stage.loss(&model.totals(triples, stage.factors())?);
                if let Some(s) = report.stages.iter_mut().find(|s| s.stage == stage) {
                    s.end_loss = Some(end);
                }
            }
            if let Some(path) = opts.checkpoint.as_deref() {
                save_progress(model, &adam, &report, path)?;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::config::RunConfig;
    use crate::pipeline::model::tests::toy;

    fn quick() -> RunConfig {
        let mut c = RunConfig::desk();
        c.aspect_decoder.train.epochs = 6;
        c.aspect_decoder.train.lr = 2e-2;
        c.sketch_decoder.train.epochs = 4;
        c.review_decoder.train.epochs = 4;
        c.orchestrator.joint.epochs = 2;
        c.sketch_decoder.train.batch = 2;
        c.review_decoder.train.batch = 2;
        c
    }

    #[test]
    fn every_stage_lowers_its_loss() {
        let (mut m, triples) = toy(quick());
        let r = train(&mut m, &triples, TrainOptions::default()).unwrap();
        assert_eq!(r.epochs.len(), 6 + 4 + 4 + 2);
        for s in &r.stages[..3] {
            assert!(s.end_loss.unwrap() < s.start_loss, "{s:?}");
        }
        let j = r.summary(Stage::Joint).unwrap();
        assert!(j.end_loss.unwrap() <= j.start_loss * 1.01, "{j:?}");
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("last.bin");
        let (mut a, triples) = toy(quick());
        let full = train(&mut a, &triples, TrainOptions::default()).unwrap();

        let (mut b, _) = toy(quick());
        let opts = |max| TrainOptions {
            checkpoint: Some(path.clone()),
            resume: true,
            max_epochs: max,
            progress: None,
        };
        train(&mut b, &triples, opts(Some(7))).unwrap();
        let (mut c, _) = toy(quick());
        let resumed = train(&mut c, &triples, opts(None)).unwrap();
        assert_eq!(resumed, full);
        assert_eq!(c.store, a.store);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut m, triples) = toy(quick());
        m.config.aspect_decoder.train.lr = f64::INFINITY;
        let e = train(&mut m, &triples, TrainOptions::default()).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");
    }

    #[test]
    fn ablations_skip_their_stage() {
        let mut cfg = quick();
        cfg.orchestrator.no_aspect = true;
        let (mut m, triples) = toy(cfg);
        let r = train(&mut m, &triples, TrainOptions::default()).unwrap();
        assert!(r.summary(Stage::Aspect).is_none());
        assert!(m.store.get(m.aspect.embed).row(0).iter().all(|&x| x == 1.0));

        let mut cfg = quick();
        cfg.orchestrator.no_sketch = true;
        let (mut m, triples) = toy(cfg);
        let before = m.store.get(m.sketch.w5).clone();
        let r = train(&mut m, &triples, TrainOptions::default()).unwrap();
        assert!(r.summary(Stage::Sketch).is_none());
        assert_eq!(m.store.get(m.sketch.w5), &before);
    }
}
