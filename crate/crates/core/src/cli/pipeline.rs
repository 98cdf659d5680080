//! The full document pipeline behind `run-all`, plus the pieces the
//! individual subcommands reuse.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{
    read_corpus, read_qrels, read_queries, Corpus, Field, InvertedIndex, Qrels, Query,
};
use crate::duet::{
    generate_pretrain_triple, supervised_triples, train_duet, DuetConfig, DuetModel, TrainConfig,
    TrainReport, WordTable,
};
use crate::embed::{
    embedding_paths, save_embeddings, train_skipgram, EmbeddingPair, SkipGramConfig,
};
use crate::eval::{evaluate, parse_metrics, write_run, Metric, MetricConfig, Run, ScoredDoc};
use crate::lexical::{Bm25Config, PrfConfig, QlConfig, Ranker, Scope, SdmConfig};
use crate::ltr::{
    extract_feature_set, rerank, train_ltr, write_features, DomainStats, FeatureSchema, LtrConfig,
    LtrReport, DEFAULT_RUNS,
};
use crate::synth::{DOCS_FILE, QRELS_FILE, QUERIES_FILE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Index,
    TrainEmbeddings,
    QlCandidates,
    DuetMF,
    Ltr,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Index,
        Stage::TrainEmbeddings,
        Stage::QlCandidates,
        Stage::DuetMF,
        Stage::Ltr,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Index => "index",
            Stage::TrainEmbeddings => "train-embeddings",
            Stage::QlCandidates => "ql-candidates",
            Stage::DuetMF => "duetmf",
            Stage::Ltr => "ltr",
            Stage::Eval => "eval",
        }
    }
}

/// Every knob of the pipeline. Defaults are sized for a single CPU core.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Shares of judged queries used to train DuetMF and the LTR model; the
    /// rest is held out.
    pub split: (f64, f64),
    pub depth: usize,
    pub negative_depth: usize,
    pub embed: SkipGramConfig,
    pub duet: DuetConfig,
    pub duet_train: TrainConfig,
    pub pretrain_epochs: usize,
    pub pretrain_triples: usize,
    pub ltr: LtrConfig,
    pub metrics: Vec<Metric>,
    pub duet_run_id: String,
    pub ensemble_run_id: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            split: (0.4, 0.4),
            depth: 100,
            negative_depth: 100,
            embed: SkipGramConfig {
                dim: 32,
                epochs: 5,
                ..SkipGramConfig::default()
            },
            duet: DuetConfig {
                hidden: 32,
                max_body_terms: 200,
                ..DuetConfig::default()
            },
            duet_train: TrainConfig {
                lr: 1e-3,
                batch_size: 16,
                epochs: 20,
                seed: 1,
            },
            pretrain_epochs: 0,
            pretrain_triples: 1000,
            ltr: LtrConfig {
                epochs: 8,
                ..LtrConfig::default()
            },
            metrics: parse_metrics("mrr,ndcg@10,map,recall@100").expect("valid metric list"),
            duet_run_id: "ms_duet".into(),
            ensemble_run_id: "ms_ensemble".into(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
}

impl PipelineConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_value(key, v)?,
            "depth" => self.depth = parse_value(key, v)?,
            "split.duet" => self.split.0 = parse_value(key, v)?,
            "split.ltr" => self.split.1 = parse_value(key, v)?,
            "embed.dim" => self.embed.dim = parse_value(key, v)?,
            "embed.window" => self.embed.window = parse_value(key, v)?,
            "embed.negatives" => self.embed.negatives = parse_value(key, v)?,
            "embed.epochs" => self.embed.epochs = parse_value(key, v)?,
            "embed.lr" => self.embed.lr = parse_value(key, v)?,
            "embed.min_count" => self.embed.min_count = parse_value(key, v)?,
            "duet.hidden" => self.duet.hidden = parse_value(key, v)?,
            "duet.max_query_terms" => self.duet.max_query_terms = parse_value(key, v)?,
            "duet.max_url_terms" => self.duet.max_url_terms = parse_value(key, v)?,
            "duet.max_title_terms" => self.duet.max_title_terms = parse_value(key, v)?,
            "duet.max_body_terms" => self.duet.max_body_terms = parse_value(key, v)?,
            "duet.dropout" => self.duet.dropout_rate = parse_value(key, v)?,
            "duet.local_dropout" => self.duet.local_dropout_prob = parse_value(key, v)?,
            "duet.kernel_width" => self.duet.kernel_width = parse_value(key, v)?,
            "duet.fields" => {
                self.duet.fields = v
                    .split(',')
                    .map(|f| {
                        Field::parse(f.trim())
                            .ok_or_else(|| Error::InvalidConfig(format!("unknown field {f:?}")))
                    })
                    .collect::<Result<_>>()?
            }
            "duet.lr" => self.duet_train.lr = parse_value(key, v)?,
            "duet.batch" => self.duet_train.batch_size = parse_value(key, v)?,
            "duet.epochs" => self.duet_train.epochs = parse_value(key, v)?,
            "duet.pretrain_epochs" => self.pretrain_epochs = parse_value(key, v)?,
            "duet.pretrain_triples" => self.pretrain_triples = parse_value(key, v)?,
            "duet.negative_depth" => self.negative_depth = parse_value(key, v)?,
            "ltr.hidden" => {
                let sizes: Vec<usize> = v
                    .split(',')
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_>>()?;
                self.ltr.hidden = sizes
                    .try_into()
                    .map_err(|_| Error::InvalidConfig("ltr.hidden takes two sizes".into()))?;
            }
            "ltr.lr" => self.ltr.lr = parse_value(key, v)?,
            "ltr.batch" => self.ltr.batch_size = parse_value(key, v)?,
            "ltr.epochs" => self.ltr.epochs = parse_value(key, v)?,
            "ltr.negatives" => self.ltr.negatives_per_positive = parse_value(key, v)?,
            "metrics" => self.metrics = parse_metrics(v)?,
            "run_id.duet" => self.duet_run_id = v.to_string(),
            "run_id.ensemble" => self.ensemble_run_id = v.to_string(),
            other => return Err(Error::InvalidConfig(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, settings: &BTreeMap<String, String>) -> Result<()> {
        settings.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Sub-configurations with seeds derived from the pipeline seed.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.embed.seed = self.seed;
        c.duet.seed = self.seed.wrapping_add(1);
        c.duet_train.seed = self.seed.wrapping_add(2);
        c.ltr.seed = self.seed.wrapping_add(3);
        c
    }
}

/// Disjoint query-id sets for DuetMF training, LTR training and testing.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySplit {
    pub duet: HashSet<String>,
    pub ltr: HashSet<String>,
    pub test: HashSet<String>,
}

impl QuerySplit {
    pub fn training(&self) -> HashSet<String> {
        self.duet.union(&self.ltr).cloned().collect()
    }
}

/// Seeded shuffle of the judged queries cut at the given shares.
pub fn split_queries(
    queries: &[Query],
    qrels: &Qrels,
    shares: (f64, f64),
    seed: u64,
) -> Result<QuerySplit> {
    if shares.0 < 0.0 || shares.1 < 0.0 || shares.0 + shares.1 > 1.0 {
        return Err(Error::InvalidConfig(
            "split shares must be >= 0 and sum to <= 1".into(),
        ));
    }
    let mut ids: Vec<String> = queries
        .iter()
        .filter(|q| qrels.for_query(&q.query_id).is_some())
        .map(|q| q.query_id.clone())
        .collect();
    if ids.len() < 3 {
        return Err(Error::Empty("need at least three judged queries"));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len() as f64;
    let a = ((n * shares.0).round() as usize).max(1);
    let b = (a + ((n * shares.1).round() as usize).max(1)).min(ids.len() - 1);
    Ok(QuerySplit {
        duet: ids[..a].iter().cloned().collect(),
        ltr: ids[a..b].iter().cloned().collect(),
        test: ids[b..].iter().cloned().collect(),
    })
}

/// Sentences for embedding training: each non-empty field of each document.
pub fn embedding_streams(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .iter()
        .flat_map(|d| Field::ALL.map(|f| d.field(f).to_vec()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Ranks every query over the whole index and keeps the top `depth`.
pub fn rank_all(
    index: &InvertedIndex,
    queries: &[Query],
    ranker: &Ranker,
    depth: usize,
    run_id: &str,
) -> Result<Run> {
    let mut run = Run::new(run_id);
    for q in queries {
        let mut r = ranker.rank(index, None, &q.tokens, Scope::All)?;
        r.truncate(depth);
        run.insert_ranked(&q.query_id, r)?;
    }
    Ok(run)
}

/// Rescores each query's candidates with `ranker`.
pub fn rank_candidates(
    index: &InvertedIndex,
    queries: &[Query],
    candidates: &Run,
    ranker: &Ranker,
    run_id: &str,
) -> Result<Run> {
    let mut run = Run::new(run_id);
    for q in queries {
        let Some(cands) = candidates.ranking(&q.query_id) else {
            continue;
        };
        let ids: Vec<String> = cands.iter().map(|c| c.doc_id.clone()).collect();
        run.insert_ranked(
            &q.query_id,
            ranker.rank(index, None, &q.tokens, Scope::Candidates(&ids))?,
        )?;
    }
    Ok(run)
}

/// Rankers behind the lexical features of the default schema.
pub fn lexical_feature_rankers() -> Vec<(&'static str, Ranker)> {
    vec![
        (DEFAULT_RUNS[1], Ranker::Sdm(SdmConfig::default())),
        (DEFAULT_RUNS[2], Ranker::Prf(PrfConfig::default())),
        (DEFAULT_RUNS[3], Ranker::Bm25(Bm25Config::conservative())),
        (DEFAULT_RUNS[4], Ranker::Bm25(Bm25Config::tuned())),
    ]
}

/// Scores every candidate with the mean of `models`.
pub fn score_duet_run(
    models: &[DuetModel],
    corpus: &Corpus,
    queries: &[Query],
    candidates: &Run,
    run_id: &str,
) -> Result<Run> {
    let (first, rest) = models.split_first().ok_or(Error::Empty("no duet models"))?;
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let mut run = Run::new(run_id);
    for (qid, cands) in candidates.iter() {
        let q = by_id
            .get(qid)
            .ok_or_else(|| Error::InvalidConfig(format!("candidates for unknown query {qid}")))?;
        let docs = cands
            .par_iter()
            .map(|c| {
                let doc = corpus
                    .get(&c.doc_id)
                    .ok_or_else(|| Error::UnknownDoc(c.doc_id.clone()))?;
                let base = first.score(&q.tokens, doc)?;
                let mut shift = 0.0;
                for m in rest {
                    shift += m.score(&q.tokens, doc)? - base;
                }
                Ok(ScoredDoc {
                    doc_id: c.doc_id.clone(),
                    score: base + shift / models.len() as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        run.insert_scores(qid, docs)?;
    }
    Ok(run)
}

/// Pretrains on pseudo-queries when `pretrain_epochs > 0`, then trains on
/// judged triples of `train_queries`. Returns the pretraining and
/// supervised reports.
#[allow(clippy::too_many_arguments)]
pub fn fit_duet(
    model: &mut DuetModel,
    corpus: &Corpus,
    queries: &[Query],
    qrels: &Qrels,
    candidates: &Run,
    train_queries: &HashSet<String>,
    config: &PipelineConfig,
) -> Result<(Option<TrainReport>, TrainReport)> {
    let pre = if config.pretrain_epochs > 0 {
        let cfg = TrainConfig {
            epochs: config.pretrain_epochs,
            seed: config.duet_train.seed.wrapping_add(100),
            ..config.duet_train.clone()
        };
        let dcfg = model.config().clone();
        let n = config.pretrain_triples;
        Some(train_duet(model, &cfg, |_, rng| {
            (0..n)
                .map(|_| generate_pretrain_triple(corpus, &dcfg, rng))
                .collect()
        })?)
    } else {
        None
    };
    let chosen: Vec<&Query> = queries
        .iter()
        .filter(|q| train_queries.contains(&q.query_id))
        .collect();
    let depth = config.negative_depth;
    let report = train_duet(model, &config.duet_train, |_, rng| {
        supervised_triples(corpus, &chosen, candidates, qrels, depth, rng)
    })?;
    Ok((pre, report))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub split: QuerySplit,
    pub ql: Run,
    pub lexical: Vec<(String, Run)>,
    pub duet: Run,
    pub ensemble: Run,
    pub duet_report: TrainReport,
    pub pretrain_report: Option<TrainReport>,
    pub ltr_report: LtrReport,
    /// (run id, metric, value) on the held-out queries.
    pub metrics: Vec<(String, Metric, f64)>,
}

impl PipelineOutput {
    pub fn metric(&self, run_id: &str, metric: Metric) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(r, m, _)| r == run_id && *m == metric)
            .map(|(_, _, v)| *v)
    }

    pub fn metrics_tsv(&self) -> String {
        self.metrics
            .iter()
            .map(|(r, m, v)| format!("{r}\t{m}\t{v:.4}\n"))
            .collect()
    }
}

/// Writes through a temporary sibling and renames on success.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    match write(&tmp) {
        Ok(()) => std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Saves both embedding files under a temporary prefix, then renames them.
pub fn save_embeddings_atomic(emb: &EmbeddingPair, prefix: &Path) -> Result<()> {
    let mut tmp_name = prefix
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = prefix.with_file_name(tmp_name);
    save_embeddings(emb, &tmp)?;
    let (tmp_in, tmp_out) = embedding_paths(&tmp);
    let (final_in, final_out) = embedding_paths(prefix);
    for (from, to) in [(tmp_in, final_in), (tmp_out, final_out)] {
        std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
    }
    Ok(())
}

pub const PIPELINE_FILES: [&str; 5] = [
    "ql.run",
    "ms_duet.run",
    "ms_ensemble.run",
    "features.tsv",
    "metrics.tsv",
];

/// Runs all six stages on `data` (docs.tsv, queries.tsv, qrels.txt) and
/// writes every artifact into `out`. `progress` hears about each stage.
pub fn run_all(
    data: &Path,
    out: &Path,
    config: &PipelineConfig,
    mut progress: impl FnMut(Stage),
) -> Result<PipelineOutput> {
    let cfg = config.seeded();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = |name: &str| -> PathBuf { out.join(name) };

    progress(Stage::Index);
    let corpus = read_corpus(&data.join(DOCS_FILE))?;
    let queries = read_queries(&data.join(QUERIES_FILE))?;
    let qrels = read_qrels(&data.join(QRELS_FILE))?;
    let index = InvertedIndex::build(&corpus)?;
    write_atomic(&path("index.json"), |p| index.save(p))?;

    progress(Stage::TrainEmbeddings);
    let (emb, _) = train_skipgram(&embedding_streams(&corpus), &cfg.embed)?;
    save_embeddings_atomic(&emb, &path("embeddings"))?;

    progress(Stage::QlCandidates);
    let ql = rank_all(
        &index,
        &queries,
        &Ranker::Ql(QlConfig::default()),
        cfg.depth,
        "ql",
    )?;
    write_atomic(&path("ql.run"), |p| write_run(&ql, p))?;
    let split = split_queries(&queries, &qrels, cfg.split, cfg.seed)?;

    progress(Stage::DuetMF);
    let words = Arc::new(WordTable::from_pair(&emb));
    let mut model = DuetModel::new(cfg.duet.clone(), words)?;
    let (pretrain_report, duet_report) = fit_duet(
        &mut model,
        &corpus,
        &queries,
        &qrels,
        &ql,
        &split.duet,
        &cfg,
    )?;
    write_atomic(&path("duetmf.ckpt"), |p| model.save(p))?;
    let duet = score_duet_run(
        std::slice::from_ref(&model),
        &corpus,
        &queries,
        &ql,
        &cfg.duet_run_id,
    )?;
    write_atomic(&path("ms_duet.run"), |p| write_run(&duet, p))?;

    progress(Stage::Ltr);
    let mut lexical = Vec::new();
    for (name, ranker) in lexical_feature_rankers() {
        lexical.push((
            name.to_string(),
            rank_candidates(&index, &queries, &ql, &ranker, name)?,
        ));
    }
    let mut feature_runs: Vec<(&str, &Run)> = vec![(DEFAULT_RUNS[0], &duet)];
    feature_runs.extend(lexical.iter().map(|(n, r)| (n.as_str(), r)));
    let stats = DomainStats::build(&corpus, &qrels, &split.training(), 1);
    let schema = FeatureSchema::default();
    let features =
        extract_feature_set(&queries, &corpus, &ql, &feature_runs, &emb, &stats, &schema)?;
    write_atomic(&path("features.tsv"), |p| write_features(&features, p))?;
    let (ltr, ltr_report) = train_ltr(&features.restrict(&split.ltr), &qrels, &cfg.ltr)?;
    write_atomic(&path("ltr.ckpt"), |p| ltr.save(p))?;
    let ensemble = rerank(&ltr, &ql, &features, &cfg.ensemble_run_id)?;
    write_atomic(&path("ms_ensemble.run"), |p| write_run(&ensemble, p))?;

    progress(Stage::Eval);
    let mcfg = MetricConfig::documents();
    let mut metrics = Vec::new();
    let mut runs: Vec<(&str, &Run)> = vec![("ql", &ql)];
    runs.extend(lexical.iter().map(|(n, r)| (n.as_str(), r)));
    runs.push((&cfg.duet_run_id, &duet));
    runs.push((&cfg.ensemble_run_id, &ensemble));
    for (name, run) in runs {
        let held_out = run.restrict(&split.test);
        for &m in &cfg.metrics {
            metrics.push((name.to_string(), m, evaluate(&held_out, &qrels, m, &mcfg)?));
        }
    }
    let output = PipelineOutput {
        split,
        ql,
        lexical,
        duet,
        ensemble,
        duet_report,
        pretrain_report,
        ltr_report,
        metrics,
    };
    let tsv = output.metrics_tsv();
    write_atomic(&path("metrics.tsv"), |p| {
        std::fs::write(p, &tsv).map_err(|e| Error::io(p, e))
    })?;
    Ok(output)
}
