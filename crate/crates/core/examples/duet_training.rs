//! Pretrains DuetMF on URL/title pseudo-queries, fine-tunes it on judged
//! queries and reranks held-out candidates.

use std::sync::Arc;

use duetmf::cli::pipeline::{embedding_streams, fit_duet, score_duet_run, split_queries, PipelineConfig};
use duetmf::duet::{DuetModel, WordTable};
use duetmf::embed::train_skipgram;
use duetmf::eval::{evaluate, Metric, MetricConfig};
use duetmf::synth::{generate, SynthConfig};

fn main() -> duetmf::Result<()> {
    let data = generate(&SynthConfig {
        num_docs: 500,
        num_queries: 100,
        ..SynthConfig::default()
    })?;
    let mut cfg = PipelineConfig {
        pretrain_epochs: 2,
        pretrain_triples: 500,
        ..PipelineConfig::default()
    };
    cfg.duet_train.epochs = 10;
    let cfg = cfg.seeded();

    let (emb, _) = train_skipgram(&embedding_streams(&data.corpus), &cfg.embed)?;
    let mut model = DuetModel::new(cfg.duet.clone(), Arc::new(WordTable::from_pair(&emb)))?;
    println!("{} parameters", model.params().num_values());

    let split = split_queries(&data.queries, &data.qrels, (0.7, 0.0), cfg.seed)?;
    let (pre, fine) = fit_duet(&mut model, &data.corpus, &data.queries, &data.qrels, &data.candidates, &split.duet, &cfg)?;
    if let Some(pre) = pre {
        println!("pretraining losses {:.4?}", pre.epoch_losses);
    }
    println!("fine-tuning losses {:.4?}", fine.epoch_losses);

    let mcfg = MetricConfig::documents();
    let held_out = data.candidates.restrict(&split.test);
    let run = score_duet_run(&[model], &data.corpus, &data.queries, &held_out, "duetmf")?;
    for m in [Metric::Mrr, Metric::Ndcg(10)] {
        println!(
            "{m}\tql {:.4}\tduetmf {:.4}",
            evaluate(&held_out, &data.qrels, m, &mcfg)?,
            evaluate(&run, &data.qrels, m, &mcfg)?
        );
    }
    Ok(())
}
