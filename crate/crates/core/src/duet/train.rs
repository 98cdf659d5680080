use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sample_structured_mask, DuetConfig, DuetModel, Mode, StructuredMask};
use crate::corpus::{Corpus, Document, Field, Qrels, Query};
use crate::eval::{Run, ScoredDoc};
use crate::tensor::{AdamState, Tape};
use crate::{Error, Result};

/// A (query, preferred, other) training example. `mask` pins the structured
/// dropout decision; `None` lets the trainer sample one.
#[derive(Debug, Clone)]
pub struct Triple<'a> {
    pub query: Vec<String>,
    pub pos: &'a Document,
    pub neg: &'a Document,
    pub mask: Option<StructuredMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 128,
            epochs: 10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub triples_per_epoch: Vec<usize>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Uniform draw from the ungraded-or-zero documents among the top `depth`
/// candidates.
pub fn sample_negative<'r, R: Rng + ?Sized>(
    query_id: &str,
    candidates: &'r [ScoredDoc],
    qrels: &Qrels,
    depth: usize,
    rng: &mut R,
) -> Result<&'r str> {
    let pool: Vec<&str> = candidates
        .iter()
        .take(depth)
        .filter(|c| qrels.grade(query_id, &c.doc_id) == 0)
        .map(|c| c.doc_id.as_str())
        .collect();
    pool.choose(rng)
        .copied()
        .ok_or_else(|| Error::NoNegative(query_id.to_string()))
}

/// One triple per judged-relevant document of each query, each paired with
/// a freshly sampled negative. Queries without any negative candidate or
/// without candidates are skipped.
pub fn supervised_triples<'a, R: Rng + ?Sized>(
    corpus: &'a Corpus,
    queries: &[&Query],
    candidates: &Run,
    qrels: &Qrels,
    depth: usize,
    rng: &mut R,
) -> Result<Vec<Triple<'a>>> {
    let mut out = Vec::new();
    for q in queries {
        let (Some(ranking), Some(judged)) = (
            candidates.ranking(&q.query_id),
            qrels.for_query(&q.query_id),
        ) else {
            continue;
        };
        for (doc_id, &grade) in judged {
            if grade == 0 {
                continue;
            }
            let Some(pos) = corpus.get(doc_id) else {
                continue;
            };
            let neg_id = match sample_negative(&q.query_id, ranking, qrels, depth, rng) {
                Ok(id) => id,
                Err(Error::NoNegative(_)) => break,
                Err(e) => return Err(e),
            };
            let neg = corpus
                .get(neg_id)
                .ok_or_else(|| Error::UnknownDoc(neg_id.to_string()))?;
            out.push(Triple {
                query: q.tokens.clone(),
                pos,
                neg,
                mask: None,
            });
        }
    }
    Ok(out)
}

/// Pseudo-query triple: the URL or title of a random document acts as the
/// query, that document is preferred over another random one, and the source
/// field is masked out of both.
pub fn generate_pretrain_triple<'a, R: Rng + ?Sized>(
    corpus: &'a Corpus,
    config: &DuetConfig,
    rng: &mut R,
) -> Result<Triple<'a>> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Empty("pretraining needs at least two documents"));
    }
    let (url_slot, title_slot) = match (
        config.field_slot(Field::Url),
        config.field_slot(Field::Title),
    ) {
        (Some(u), Some(t)) if config.fields.len() > 1 => (u, t),
        _ => {
            return Err(Error::InvalidConfig(
                "pretraining needs url, title and another field".into(),
            ))
        }
    };
    let (source, slot) = if rng.gen_bool(0.5) {
        (Field::Url, url_slot)
    } else {
        (Field::Title, title_slot)
    };
    for _ in 0..1000 {
        let pos = rng.gen_range(0..n);
        let mut neg = rng.gen_range(0..n - 1);
        if neg >= pos {
            neg += 1;
        }
        let pos = &corpus.docs()[pos];
        if pos.field(source).is_empty() {
            continue;
        }
        let query: Vec<String> = pos
            .field(source)
            .iter()
            .take(config.max_query_terms)
            .cloned()
            .collect();
        let nf = config.fields.len();
        let local_on = (0..nf)
            .map(|_| !rng.gen_bool(config.local_dropout_prob))
            .collect();
        let mut active = vec![true; nf];
        active[slot] = false;
        return Ok(Triple {
            query,
            pos,
            neg: &corpus.docs()[neg],
            mask: Some(StructuredMask { local_on, active }),
        });
    }
    Err(Error::Empty("no document with a non-empty url or title"))
}

fn triple_grads(
    model: &DuetModel,
    triple: &Triple<'_>,
    mask: &StructuredMask,
    dropout_seed: u64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let sp = model.forward(
        &mut tape,
        &vars,
        &triple.query,
        triple.pos,
        mask,
        Mode::Train,
        &mut rng,
    )?;
    let sn = model.forward(
        &mut tape,
        &vars,
        &triple.query,
        triple.neg,
        mask,
        Mode::Train,
        &mut rng,
    )?;
    let loss = tape.ranknet(sp, sn)?;
    tape.backward(loss)?;
    let grads = vars
        .iter()
        .zip(model.params().tensors())
        .map(|(&v, t)| {
            tape.grad(v)
                .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();
    Ok((tape.value(loss).item(), grads))
}

/// Mini-batch RankNet training with Adam. `make_triples` supplies each
/// epoch's examples; masks and dropout streams are drawn up front so results
/// do not depend on the thread count.
pub fn train_duet<'a, F>(
    model: &mut DuetModel,
    config: &TrainConfig,
    mut make_triples: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> Result<Vec<Triple<'a>>>,
{
    if config.batch_size == 0 || !(config.lr >= 0.0) {
        return Err(Error::InvalidConfig(
            "batch size must be >= 1 and lr >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.lr, model.params().tensors());
    let mut report = TrainReport::default();
    let wave = rayon::current_num_threads().max(1) * 2;
    for epoch in 0..config.epochs {
        let mut triples = make_triples(epoch, &mut rng)?;
        if triples.is_empty() {
            return Err(Error::Empty("no training triples"));
        }
        triples.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in triples.chunks(config.batch_size) {
            let plan: Vec<(StructuredMask, u64)> = batch
                .iter()
                .map(|t| {
                    let mask = t
                        .mask
                        .clone()
                        .unwrap_or_else(|| sample_structured_mask(model.config(), &mut rng));
                    (mask, rng.gen())
                })
                .collect();
            let mut acc = model.params().zero_grads();
            let frozen = &*model;
            for (ts, ps) in batch.chunks(wave).zip(plan.chunks(wave)) {
                let results: Vec<Result<(f64, Vec<Vec<f64>>)>> = ts
                    .par_iter()
                    .zip(ps.par_iter())
                    .map(|(t, (mask, seed))| triple_grads(frozen, t, mask, *seed))
                    .collect();
                for r in results {
                    let (loss, grads) = r?;
                    total += loss;
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                a.iter_mut().for_each(|x| *x *= scale);
            }
            adam.step(model.params_mut().tensors_mut(), &acc)?;
        }
        report.epoch_losses.push(total / triples.len() as f64);
        report.triples_per_epoch.push(triples.len());
    }
    Ok(report)
}

/// Fraction of triples whose preferred document out-scores the other at
/// inference.
pub fn pairwise_accuracy(model: &DuetModel, triples: &[Triple<'_>]) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::Empty("no triples to evaluate"));
    }
    let hits = triples
        .par_iter()
        .map(|t| Ok(model.score(&t.query, t.pos)? > model.score(&t.query, t.neg)?))
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / triples.len() as f64)
}

/// Mean inference score of independently trained models.
pub fn ensemble_score<S: AsRef<str>>(
    models: &[DuetModel],
    query: &[S],
    doc: &Document,
) -> Result<f64> {
    let (first, rest) = models
        .split_first()
        .ok_or(Error::Empty("ensemble has no models"))?;
    let base = first.score(query, doc)?;
    let mut shift = 0.0;
    for m in rest {
        shift += m.score(query, doc)? - base;
    }
    Ok(base + shift / models.len() as f64)
}
