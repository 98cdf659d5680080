mod common;

use std::collections::HashSet;
use std::path::Path;

use duetmf::cli::{execute, main_with_args, parse_command};
use duetmf::corpus::Qrels;
use duetmf::eval::{read_run, Run};
use duetmf::ltr::{train_ltr, FeatureSchema, FeatureSet, FeatureVector, LtrConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL: [&str; 18] = [
    "--set", "embed.dim=8", "--set", "embed.epochs=1", "--set", "duet.hidden=8", "--set", "duet.epochs=2",
    "--set", "duet.max_body_terms=40", "--set", "ltr.hidden=32,32", "--set", "ltr.epochs=3", "--set",
    "duet.pretrain_triples=100", "--set", "duet.pretrain_epochs=1",
];

fn run(dir: &Path, args: &[&str]) -> String {
    let mut argv = vec!["duetmf".to_string()];
    argv.extend(args.iter().map(|a| a.replace("@", dir.to_str().unwrap())));
    argv.extend(SMALL.iter().map(|s| s.to_string()));
    let plan = parse_command(&argv).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    let mut out = Vec::new();
    execute(&plan, &mut out).unwrap_or_else(|e| panic!("{args:?}: {e:#}"));
    String::from_utf8(out).unwrap()
}

fn ids(run: &Run, qid: &str) -> Vec<String> {
    let mut v: Vec<String> = run.ranking(qid).unwrap().iter().map(|d| d.doc_id.clone()).collect();
    v.sort();
    v
}

#[test]
fn subcommands_chain_into_a_full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run(dir, &["make-synthetic", "--out", "@/data", "--docs", "150", "--queries", "30", "--seed", "3"]);
    run(dir, &["index", "--corpus", "@/data/docs.tsv", "--out", "@/index.json"]);
    let q = "@/data/queries.tsv";
    let cands = "@/data/candidates.run";
    for (ranker, name) in [
        ("sdm", "sdm"),
        ("prf", "prf"),
        ("bm25[0.9,0.4]", "bm25_0.9_0.4"),
        ("bm25[3.44,0.87]", "bm25_3.44_0.87"),
    ] {
        let out = format!("@/{name}.run");
        run(dir, &["rank", "--index", "@/index.json", "--queries", q, "--ranker", ranker, "--candidates", cands, "--out", &out, "--run-id", name]);
    }
    run(dir, &["train-embeddings", "--corpus", "@/data/docs.tsv", "--out", "@/emb"]);
    run(dir, &["pretrain-duet", "--corpus", "@/data/docs.tsv", "--embeddings", "@/emb", "--out", "@/pre.ckpt"]);
    let common = ["--corpus", "@/data/docs.tsv", "--queries", q, "--qrels", "@/data/qrels.txt", "--candidates", cands];
    let mut args = vec!["train-duet"];
    args.extend(common);
    args.extend(["--init", "@/pre.ckpt", "--out", "@/duet.ckpt"]);
    let printed = run(dir, &args);
    assert_eq!(printed.lines().count(), 2);
    let mut args = vec!["train-duet"];
    args.extend(common);
    args.extend(["--embeddings", "@/emb", "--seeds", "1..2", "--out", "@/member.ckpt"]);
    run(dir, &args);
    assert!(dir.join("member.seed1.ckpt").exists() && dir.join("member.seed2.ckpt").exists());
    run(dir, &[
        "score-duet", "--model", "@/member.seed1.ckpt", "@/member.seed2.ckpt", "--corpus", "@/data/docs.tsv",
        "--queries", q, "--candidates", cands, "--out", "@/duetmf.run", "--run-id", "duetmf",
    ]);
    let mut args = vec!["extract-features"];
    args.extend(common);
    args.extend([
        "--embeddings", "@/emb", "--run", "duetmf=@/duetmf.run", "--run", "sdm=@/sdm.run", "--run", "prf=@/prf.run",
        "--run", "bm25_0.9_0.4=@/bm25_0.9_0.4.run", "--run", "bm25_3.44_0.87=@/bm25_3.44_0.87.run", "--out",
        "@/features.tsv",
    ]);
    run(dir, &args);
    run(dir, &["train-ltr", "--features", "@/features.tsv", "--qrels", "@/data/qrels.txt", "--out", "@/ltr.ckpt"]);
    run(dir, &[
        "rerank", "--model", "@/ltr.ckpt", "--features", "@/features.tsv", "--candidates", cands, "--out",
        "@/final.run",
    ]);
    let report = run(dir, &["eval", "--run", "@/final.run", "--qrels", "@/data/qrels.txt"]);
    assert_eq!(report.lines().count(), 4, "{report}");

    let candidates = read_run(&dir.join("data/candidates.run")).unwrap();
    let reranked = read_run(&dir.join("final.run")).unwrap();
    let duet = read_run(&dir.join("duetmf.run")).unwrap();
    assert_eq!(reranked.num_queries(), candidates.num_queries());
    for (qid, _) in candidates.iter() {
        assert_eq!(ids(&reranked, qid), ids(&candidates, qid), "{qid}");
        assert_eq!(ids(&duet, qid), ids(&candidates, qid), "{qid}");
    }
}

#[test]
fn exit_codes_distinguish_usage_from_failure() {
    assert_eq!(main_with_args(["duetmf", "eval", "--bogus"]), 2);
    assert_eq!(main_with_args(["duetmf", "eval", "--run", "/nonexistent/r", "--qrels", "/nonexistent/q"]), 1);
}

#[test]
fn ltr_learns_a_monotone_feature() {
    let schema = FeatureSchema::default();
    let signal = schema.index("bm25_0.9_0.4.score").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut features = FeatureSet::new(schema.clone());
    let mut qrels = Qrels::new();
    for q in 0..60 {
        let qid = format!("q{q}");
        for d in 0..20 {
            let grade = u32::from(d < 3) + u32::from(d == 0);
            let mut values: Vec<f64> = (0..schema.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            values[signal] = grade as f64 + rng.gen_range(0.0..0.9) + q as f64 * 0.01;
            let did = format!("q{q}d{d}");
            qrels.insert(&qid, &did, grade);
            features
                .insert(&qid, &did, FeatureVector { missing: vec![false; values.len()], values })
                .unwrap();
        }
    }
    let train: HashSet<String> = (0..40).map(|q| format!("q{q}")).collect();
    let test: HashSet<String> = (40..60).map(|q| format!("q{q}")).collect();
    let cfg = LtrConfig {
        hidden: [64, 64],
        epochs: 10,
        ..LtrConfig::default()
    };
    let (model, _) = train_ltr(&features.restrict(&train), &qrels, &cfg).unwrap();
    let held_out = features.restrict(&test);
    let (mut right, mut total) = (0, 0);
    for (qid, rows) in held_out.iter() {
        let inputs: Vec<&[f64]> = rows.iter().map(|r| r.features.values.as_slice()).collect();
        let scores = model.score_rows(&inputs).unwrap();
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                if qrels.grade(qid, &rows[i].doc_id) > qrels.grade(qid, &rows[j].doc_id) {
                    total += 1;
                    right += usize::from(scores[i] > scores[j]);
                }
            }
        }
    }
    let accuracy = right as f64 / total as f64;
    assert!(accuracy >= 0.95, "held-out pairwise accuracy {accuracy}");
}
