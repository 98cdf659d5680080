use std::collections::HashMap;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureSchema, FeatureSet};
use crate::corpus::Qrels;
use crate::eval::{Run, ScoredDoc};
use crate::tensor::{
    read_checkpoint, write_checkpoint, AdamState, Checkpoint, Params, Tape, Tensor, Var,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LtrConfig {
    pub hidden: [usize; 2],
    pub lr: f64,
    /// Pairs per Adam step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Negatives sampled per positive each epoch; 0 pairs with every negative.
    pub negatives_per_positive: usize,
    pub threshold: u32,
    pub seed: u64,
    /// Stop once training pairwise accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for LtrConfig {
    fn default() -> Self {
        LtrConfig {
            hidden: [1024, 1024],
            lr: 1e-3,
            batch_size: 128,
            epochs: 20,
            negatives_per_positive: 8,
            threshold: 1,
            seed: 1,
            target_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LtrReport {
    pub epoch_losses: Vec<f64>,
    /// Training pairwise accuracy after the last epoch, when tracked.
    pub train_accuracy: Option<f64>,
}

/// Two-hidden-layer ReLU network over z-normalized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LtrModel {
    schema: FeatureSchema,
    mean: Vec<f64>,
    std: Vec<f64>,
    params: Params,
}

fn he_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / rows as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

/// Per-dimension mean and population standard deviation.
pub fn normalization_stats(rows: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = rows.first().ok_or(Error::Empty("no feature rows"))?;
    let d = first.len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    Ok((mean, var.into_iter().map(|s| (s / n).sqrt()).collect()))
}

impl LtrModel {
    pub fn new(schema: FeatureSchema, hidden: [usize; 2], seed: u64) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(Error::InvalidConfig("ltr hidden sizes must be >= 1".into()));
        }
        let d = schema.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        params.add("fc1", he_uniform(&mut rng, d, hidden[0]));
        params.add("fc1_b", Tensor::zeros(&[1, hidden[0]]));
        params.add("fc2", he_uniform(&mut rng, hidden[0], hidden[1]));
        params.add("fc2_b", Tensor::zeros(&[1, hidden[1]]));
        params.add("fc3", he_uniform(&mut rng, hidden[1], 1));
        params.add("fc3_b", Tensor::zeros(&[1, 1]));
        Ok(LtrModel {
            schema,
            mean: vec![0.0; d],
            std: vec![1.0; d],
            params,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn set_normalization(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != self.schema.dim() || std.len() != self.schema.dim() {
            return Err(Error::Schema(
                "normalization stats do not match schema".into(),
            ));
        }
        self.mean = mean;
        self.std = std;
        Ok(())
    }

    /// z-score against the stored statistics; zero-variance dimensions map
    /// to 0.
    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    fn forward<'p>(&'p self, tape: &mut Tape<'p>, batch: Tensor) -> Result<(Vec<Var>, Var)> {
        let vars: Vec<Var> = self
            .params
            .tensors()
            .iter()
            .map(|t| tape.param(t))
            .collect();
        let mut x = tape.constant(batch);
        for layer in 0..3 {
            let y = tape.matmul(x, vars[2 * layer])?;
            x = tape.add_bias(y, vars[2 * layer + 1])?;
            if layer < 2 {
                x = tape.relu(x);
            }
        }
        Ok((vars, x))
    }

    fn stack(&self, rows: &[Vec<f64>]) -> Result<Tensor> {
        let d = self.schema.dim();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Schema(format!(
                "{} values for a {d}-feature schema",
                r.len()
            )));
        }
        Tensor::matrix(rows.len(), d, rows.concat())
    }

    /// Scores already-normalized rows.
    pub fn score_normalized(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let (_, out) = self.forward(&mut tape, self.stack(rows)?)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn score_rows(&self, rows: &[&[f64]]) -> Result<Vec<f64>> {
        let z: Vec<Vec<f64>> = rows.iter().map(|r| self.normalize(r)).collect();
        self.score_normalized(&z)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("kind".into(), "ltr".into());
        ckpt.meta
            .insert("schema".into(), self.schema.names().join(" "));
        ckpt.params = self.params.clone();
        ckpt.params.add("norm.mean", Tensor::row(self.mean.clone()));
        ckpt.params.add("norm.std", Tensor::row(self.std.clone()));
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.meta("kind")? != "ltr" {
            return Err(Error::Checkpoint("not an ltr checkpoint".into()));
        }
        let names: Vec<&str> = ckpt.meta("schema")?.split_whitespace().collect();
        let schema = FeatureSchema::from_names(&names)?;
        let get = |name: &str| {
            ckpt.params
                .by_name(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let fc1 = get("fc1")?;
        let fc2 = get("fc2")?;
        if fc1.shape().len() != 2 || fc2.shape().len() != 2 || fc1.rows() != schema.dim() {
            return Err(Error::Checkpoint("ltr weights do not match schema".into()));
        }
        let mut model = LtrModel::new(schema, [fc1.cols(), fc2.cols()], 0)?;
        for slot in 0..model.params.len() {
            let name = model.params.names()[slot].clone();
            let t = get(&name)?;
            if t.shape() != model.params.get(slot).shape() {
                return Err(Error::Checkpoint(format!("tensor {name} has wrong shape")));
            }
            *model.params.get_mut(slot) = t;
        }
        model.set_normalization(get("norm.mean")?.into_data(), get("norm.std")?.into_data())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(&self.to_checkpoint()?, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(read_checkpoint(path)?)
    }
}

struct TrainQuery {
    rows: Vec<Vec<f64>>,
    pos: Vec<usize>,
    neg: Vec<usize>,
}

fn pairwise_accuracy(model: &LtrModel, queries: &[TrainQuery]) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for q in queries {
        let s = model.score_normalized(&q.rows)?;
        for &p in &q.pos {
            for &n in &q.neg {
                total += 1;
                hits += usize::from(s[p] > s[n]);
            }
        }
    }
    Ok(hits as f64 / total as f64)
}

/// RankNet training on (positive, negative) pairs within each query.
pub fn train_ltr(
    features: &FeatureSet,
    qrels: &Qrels,
    config: &LtrConfig,
) -> Result<(LtrModel, LtrReport)> {
    if config.batch_size == 0 || !(config.lr >= 0.0) {
        return Err(Error::InvalidConfig(
            "batch size must be >= 1 and lr >= 0".into(),
        ));
    }
    let all: Vec<&[f64]> = features
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| r.features.values.as_slice()))
        .collect();
    let (mean, std) = normalization_stats(&all)?;
    let mut model = LtrModel::new(features.schema.clone(), config.hidden, config.seed)?;
    model.set_normalization(mean, std)?;

    let mut queries = Vec::new();
    for (qid, rows) in features.iter() {
        let (pos, neg): (Vec<usize>, Vec<usize>) =
            (0..rows.len()).partition(|&i| qrels.grade(qid, &rows[i].doc_id) >= config.threshold);
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let rows = rows
            .iter()
            .map(|r| model.normalize(&r.features.values))
            .collect();
        queries.push(TrainQuery { rows, pos, neg });
    }
    if queries.is_empty() {
        return Err(Error::Empty(
            "no query with both a positive and a negative candidate",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut adam = AdamState::new(config.lr, model.params.tensors());
    let mut report = LtrReport::default();
    for _ in 0..config.epochs {
        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        for (qi, q) in queries.iter().enumerate() {
            for &p in &q.pos {
                if config.negatives_per_positive == 0
                    || config.negatives_per_positive >= q.neg.len()
                {
                    pairs.extend(q.neg.iter().map(|&n| (qi, p, n)));
                } else {
                    let picked = q
                        .neg
                        .iter()
                        .copied()
                        .choose_multiple(&mut rng, config.negatives_per_positive);
                    pairs.extend(picked.into_iter().map(|n| (qi, p, n)));
                }
            }
        }
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in pairs.chunks(config.batch_size) {
            let b = batch.len();
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * b);
            rows.extend(batch.iter().map(|&(q, p, _)| queries[q].rows[p].clone()));
            rows.extend(batch.iter().map(|&(q, _, n)| queries[q].rows[n].clone()));
            let index: Vec<(usize, usize)> = (0..b).map(|i| (i, b + i)).collect();
            let grads = {
                let mut tape = Tape::new();
                let (vars, scores) = model.forward(&mut tape, model.stack(&rows)?)?;
                let loss = tape.pairwise_ranknet(scores, &index)?;
                tape.backward(loss)?;
                total += tape.value(loss).item() * b as f64;
                vars.iter()
                    .zip(model.params.tensors())
                    .map(|(&v, t)| {
                        tape.grad(v)
                            .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
                    })
                    .collect::<Vec<_>>()
            };
            adam.step(model.params.tensors_mut(), &grads)?;
        }
        report.epoch_losses.push(total / pairs.len() as f64);
        if let Some(target) = config.target_accuracy {
            let acc = pairwise_accuracy(&model, &queries)?;
            report.train_accuracy = Some(acc);
            if acc >= target {
                break;
            }
        }
    }
    Ok((model, report))
}

/// Reorders each query's candidates by model score, ties by doc id.
pub fn rerank(
    model: &LtrModel,
    candidates: &Run,
    features: &FeatureSet,
    run_id: &str,
) -> Result<Run> {
    if features.schema != *model.schema() {
        return Err(Error::Schema(
            "feature set and model use different schemas".into(),
        ));
    }
    let mut out = Run::new(run_id);
    for (qid, ranking) in candidates.iter() {
        let rows: HashMap<&str, &[f64]> = features
            .query(qid)
            .unwrap_or(&[])
            .iter()
            .map(|r| (r.doc_id.as_str(), r.features.values.as_slice()))
            .collect();
        let inputs = ranking
            .iter()
            .map(|c| {
                rows.get(c.doc_id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Schema(format!("no features for {qid}/{}", c.doc_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = model.score_rows(&inputs)?;
        let docs = ranking
            .iter()
            .zip(scores)
            .map(|(c, score)| ScoredDoc {
                doc_id: c.doc_id.clone(),
                score,
            })
            .collect();
        out.insert_scores(qid, docs)?;
    }
    Ok(out)
}
