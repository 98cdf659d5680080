//! Trains several body-only DuetMF models with different seeds on a
//! passage-style set and compares each with their mean.

use std::sync::Arc;

use duetmf::cli::pipeline::{embedding_streams, score_duet_run, split_queries};
use duetmf::corpus::{Field, Query};
use duetmf::duet::{supervised_triples, train_duet, DuetConfig, DuetModel, TrainConfig, WordTable};
use duetmf::embed::{train_skipgram, SkipGramConfig};
use duetmf::eval::{evaluate, Metric, MetricConfig};
use duetmf::synth::{generate, SynthConfig};

fn main() -> duetmf::Result<()> {
    let data = generate(&SynthConfig {
        num_docs: 300,
        num_queries: 80,
        ..SynthConfig::passage_style()
    })?;
    let (emb, _) = train_skipgram(
        &embedding_streams(&data.corpus),
        &SkipGramConfig {
            dim: 16,
            epochs: 3,
            ..SkipGramConfig::default()
        },
    )?;
    let words = Arc::new(WordTable::from_pair(&emb));
    let split = split_queries(&data.queries, &data.qrels, (0.6, 0.0), 1)?;
    let train: Vec<&Query> = data.queries.iter().filter(|q| split.duet.contains(&q.query_id)).collect();

    let mut members = Vec::new();
    for seed in 1..=4 {
        let config = DuetConfig {
            fields: vec![Field::Body],
            hidden: 16,
            max_body_terms: 60,
            seed,
            ..DuetConfig::default()
        };
        let mut model = DuetModel::new(config, words.clone())?;
        let tcfg = TrainConfig {
            lr: 1e-3,
            batch_size: 16,
            epochs: 5,
            seed: 100 + seed,
        };
        train_duet(&mut model, &tcfg, |_, rng| {
            supervised_triples(&data.corpus, &train, &data.candidates, &data.qrels, 100, rng)
        })?;
        members.push(model);
    }

    let held_out = data.candidates.restrict(&split.test);
    let cfg = MetricConfig::documents();
    let ndcg = |models: &[DuetModel]| -> duetmf::Result<f64> {
        let run = score_duet_run(models, &data.corpus, &data.queries, &held_out, "duet")?;
        evaluate(&run, &data.qrels, Metric::Ndcg(10), &cfg)
    };
    for (i, m) in members.iter().enumerate() {
        println!("seed {}\tndcg@10 {:.4}", i + 1, ndcg(std::slice::from_ref(m))?);
    }
    println!("ensemble\tndcg@10 {:.4}", ndcg(&members)?);
    Ok(())
}
