//! Trains IN/OUT skip-gram vectors and scores documents with the four DESM
//! variants.

use duetmf::cli::pipeline::embedding_streams;
use duetmf::embed::{cosine, desm_score, train_skipgram, DesmVariant, Side, SkipGramConfig};
use duetmf::synth::{generate, SynthConfig};

fn main() -> duetmf::Result<()> {
    let data = generate(&SynthConfig {
        num_docs: 300,
        num_queries: 20,
        ..SynthConfig::default()
    })?;
    let cfg = SkipGramConfig {
        dim: 32,
        epochs: 3,
        ..SkipGramConfig::default()
    };
    let (emb, report) = train_skipgram(&embedding_streams(&data.corpus), &cfg)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {}\tloss {loss:.4}", e + 1);
    }

    let q = &data.queries[0];
    let markers = &data.markers[0];
    if let (Some(a), Some(b)) = (emb.get(Side::In, &markers[0]), emb.get(Side::In, &markers[1])) {
        println!("\ncos_IN({}, {}) = {:.3}", markers[0], markers[1], cosine(a, b));
    }
    let ranking = data.candidates.ranking(&q.query_id).unwrap();
    println!("\n{} {:?}", q.query_id, q.text);
    print!("doc\tgrade");
    for v in DesmVariant::ALL {
        print!("\t{}", v.name());
    }
    println!();
    for c in ranking.iter().take(8) {
        let doc = data.corpus.get(&c.doc_id).unwrap();
        print!("{}\t{}", c.doc_id, data.qrels.grade(&q.query_id, &c.doc_id));
        for v in DesmVariant::ALL {
            print!("\t{:.3}", desm_score(&q.tokens, &doc.body_tokens, &emb, v).value);
        }
        println!();
    }
    Ok(())
}
