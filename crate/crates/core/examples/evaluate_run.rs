//! Reads a TREC run and qrels (or builds a toy pair) and prints metrics.
//!
//! `cargo run --example evaluate_run -- RUN QRELS`

use duetmf::corpus::{read_qrels, Qrels};
use duetmf::eval::{evaluate, format_report, parse_metrics, read_run, MetricConfig, Run, ScoredDoc};

fn toy() -> duetmf::Result<(Run, Qrels)> {
    let mut qrels = Qrels::new();
    for (q, d, g) in [("q1", "a", 2), ("q1", "c", 1), ("q1", "b", 0), ("q2", "e", 1)] {
        qrels.insert(q, d, g);
    }
    let mut run = Run::new("toy");
    for (q, docs) in [("q1", ["b", "a", "d", "c"]), ("q2", ["f", "g", "h", "e"])] {
        let ranked = docs
            .iter()
            .enumerate()
            .map(|(i, d)| ScoredDoc {
                doc_id: d.to_string(),
                score: 1.0 / (i + 1) as f64,
            })
            .collect();
        run.insert_ranked(q, ranked)?;
    }
    Ok((run, qrels))
}

fn main() -> duetmf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (run, qrels) = match args.as_slice() {
        [r, q] => (read_run(r.as_ref())?, read_qrels(q.as_ref())?),
        _ => toy()?,
    };
    let cfg = MetricConfig::documents();
    let rows = parse_metrics("mrr,ndcg@10,map,recall@100")?
        .into_iter()
        .map(|m| Ok((m, evaluate(&run, &qrels, m, &cfg)?)))
        .collect::<duetmf::Result<Vec<_>>>()?;
    print!("{}", format_report(&rows));
    Ok(())
}
