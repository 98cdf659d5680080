//! Ranks a synthetic collection with QL, BM25, SDM and RM1 expansion.

use duetmf::cli::pipeline::rank_candidates;
use duetmf::corpus::InvertedIndex;
use duetmf::eval::{evaluate, Metric, MetricConfig};
use duetmf::lexical::Ranker;
use duetmf::synth::{generate, SynthConfig};

fn main() -> duetmf::Result<()> {
    let data = generate(&SynthConfig {
        num_docs: 400,
        num_queries: 50,
        ..SynthConfig::default()
    })?;
    let index = InvertedIndex::build(&data.corpus)?;
    let cfg = MetricConfig::documents();
    println!("ranker\tmrr\tndcg@10");
    for name in ["ql", "bm25[0.9,0.4]", "bm25[3.44,0.87]", "sdm", "prf"] {
        let ranker = Ranker::parse(name)?;
        let run = rank_candidates(&index, &data.queries, &data.candidates, &ranker, name)?;
        println!(
            "{name}\t{:.4}\t{:.4}",
            evaluate(&run, &data.qrels, Metric::Mrr, &cfg)?,
            evaluate(&run, &data.qrels, Metric::Ndcg(10), &cfg)?
        );
    }

    let q = &data.queries[0];
    let top = Ranker::parse("bm25")?.rank(&index, None, &q.tokens, duetmf::lexical::Scope::All)?;
    println!("\n{} {:?}", q.query_id, q.text);
    for d in top.iter().take(5) {
        println!("  {}\t{:.3}\tgrade {}", d.doc_id, d.score, data.qrels.grade(&q.query_id, &d.doc_id));
    }
    Ok(())
}
