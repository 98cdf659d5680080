use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingPair, Side};
use crate::{Error, Result};

/// Skip-gram with negative sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context radius on each side of the centre word.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate, decayed linearly to 1e-4 of itself.
    pub lr: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 1,
            seed: 1,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.min_count == 0 {
            return Err(Error::InvalidConfig(
                "skip-gram dim, window, negatives and min_count must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("skip-gram lr must be positive".into()));
        }
        Ok(())
    }
}

/// Mean negative-sampling loss per (centre, context) pair for each epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkipGramReport {
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trains IN (centre) and OUT (context) vectors on token streams.
/// Single-threaded and deterministic for a given seed.
pub fn train_skipgram<S: AsRef<[String]>>(
    streams: &[S],
    config: &SkipGramConfig,
) -> Result<(EmbeddingPair, SkipGramReport)> {
    config.validate()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in streams {
        for t in s.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("skip-gram training stream"));
    }
    let mut vocab: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count)
        .collect();
    if vocab.is_empty() {
        return Err(Error::Empty("skip-gram vocabulary after min_count"));
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let terms: Vec<String> = vocab.iter().map(|(t, _)| t.to_string()).collect();
    let mut emb = EmbeddingPair::random(terms, config.dim, config.seed)?;
    let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let encoded: Vec<Vec<usize>> = streams
        .iter()
        .map(|s| s.as_ref().iter().filter_map(|t| emb.id(t)).collect())
        .collect();
    let pairs_per_epoch: usize = encoded
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|i| i.min(config.window) + (s.len() - 1 - i).min(config.window))
                .sum::<usize>()
        })
        .sum();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let dim = config.dim;
    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut report = SkipGramReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        pairs_per_epoch,
    };
    let mut centre_grad = vec![0.0; dim];
    let mut centre = vec![0.0; dim];

    for _ in 0..config.epochs {
        let mut loss = 0.0;
        for stream in &encoded {
            for (i, &c) in stream.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(stream.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let lr = config.lr * (1.0 - step as f64 / total_steps).max(1e-4);
                    step += 1;
                    centre.copy_from_slice(emb.vector(Side::In, c));
                    centre_grad.iter_mut().for_each(|g| *g = 0.0);
                    let targets = std::iter::once((stream[j], 1.0))
                        .chain((0..config.negatives).map(|_| (noise.sample(&mut rng), 0.0)));
                    for (target, label) in targets {
                        if label == 0.0 && target == stream[j] {
                            continue;
                        }
                        let out = &mut emb.matrix_mut(Side::Out)[target * dim..(target + 1) * dim];
                        let dot: f64 = centre.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                        let p = sigmoid(dot);
                        loss -= if label == 1.0 {
                            p.max(1e-300).ln()
                        } else {
                            (1.0 - p).max(1e-300).ln()
                        };
                        let g = p - label;
                        for k in 0..dim {
                            centre_grad[k] += g * out[k];
                            out[k] -= lr * g * centre[k];
                        }
                    }
                    let row = &mut emb.matrix_mut(Side::In)[c * dim..(c + 1) * dim];
                    for (x, g) in row.iter_mut().zip(&centre_grad) {
                        *x -= lr * g;
                    }
                }
            }
        }
        report
            .epoch_losses
            .push(loss / pairs_per_epoch.max(1) as f64);
    }
    Ok((emb, report))
}
