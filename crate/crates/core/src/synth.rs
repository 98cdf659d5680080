//! Deterministic synthetic collections with planted relevance.
//!
//! Each query owns a few unique marker terms. A document is relevant to a
//! query exactly when its title and body together contain every marker;
//! decoy documents carry only some of them. Candidates are the top 100 by
//! query likelihood.

use std::collections::HashSet;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    write_corpus, write_qrels, write_queries, Corpus, Document, InvertedIndex, Qrels, Query,
};
use crate::eval::{write_run, Run};
use crate::lexical::{QlConfig, Ranker, Scope};
use crate::{Error, Result};

pub const DOCS_FILE: &str = "docs.tsv";
pub const QUERIES_FILE: &str = "queries.tsv";
pub const QRELS_FILE: &str = "qrels.txt";
pub const CANDIDATES_FILE: &str = "candidates.run";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_docs: usize,
    pub num_queries: usize,
    pub vocab_size: usize,
    pub body_len: (usize, usize),
    pub title_len: (usize, usize),
    pub markers_per_query: usize,
    /// Inclusive range of relevant documents per query.
    pub positives: (usize, usize),
    /// Inclusive range of partial-marker decoys per query.
    pub decoys: (usize, usize),
    pub num_domains: usize,
    /// Leading share of domains that relevant documents favour.
    pub good_domain_fraction: f64,
    pub good_domain_rate: f64,
    /// Body-only documents with no URL or title.
    pub passages: bool,
    pub candidates_depth: usize,
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_docs: 1000,
            num_queries: 200,
            vocab_size: 3000,
            body_len: (60, 160),
            title_len: (3, 8),
            markers_per_query: 3,
            positives: (1, 4),
            decoys: (6, 15),
            num_domains: 40,
            good_domain_fraction: 0.2,
            good_domain_rate: 0.7,
            passages: false,
            candidates_depth: 100,
            max_attempts: 5,
            seed: 1,
        }
    }
}

impl SynthConfig {
    /// Short body-only passages.
    pub fn passage_style() -> Self {
        SynthConfig {
            num_docs: 600,
            num_queries: 120,
            body_len: (30, 60),
            passages: true,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.num_docs < 2
            || self.num_queries == 0
            || self.vocab_size < 10
            || self.num_domains == 0
        {
            return bad("synthetic set needs >= 2 docs, >= 1 query, >= 10 words and >= 1 domain");
        }
        if self.markers_per_query == 0 || self.positives.0 == 0 || self.candidates_depth < 2 {
            return bad("need >= 1 marker, >= 1 positive and a candidate depth >= 2");
        }
        for (lo, hi) in [self.body_len, self.title_len, self.positives, self.decoys] {
            if lo > hi {
                return bad("range with min > max");
            }
        }
        if self.body_len.0 == 0 || self.positives.1 + self.decoys.1 > self.num_docs {
            return bad("bodies must be non-empty and planted docs must fit the collection");
        }
        for p in [self.good_domain_fraction, self.good_domain_rate] {
            if !(0.0..=1.0).contains(&p) {
                return bad("rates must lie in [0,1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub corpus: Corpus,
    pub queries: Vec<Query>,
    pub qrels: Qrels,
    pub candidates: Run,
    /// Marker terms per query, in query order.
    pub markers: Vec<Vec<String>>,
}

impl SynthData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_corpus(&self.corpus, &dir.join(DOCS_FILE))?;
        write_queries(&self.queries, &dir.join(QUERIES_FILE))?;
        write_qrels(&self.qrels, &dir.join(QRELS_FILE))?;
        write_run(&self.candidates, &dir.join(CANDIDATES_FILE))
    }
}

struct Draft {
    domain: usize,
    path: Vec<String>,
    title: Vec<String>,
    body: Vec<String>,
}

fn insert_randomly<R: Rng>(rng: &mut R, tokens: &mut Vec<String>, term: &str, times: usize) {
    for _ in 0..times {
        let at = rng.gen_range(0..=tokens.len());
        tokens.insert(at, term.to_string());
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    for attempt in 0..config.max_attempts as u64 {
        if let Some(data) = attempt_generate(
            config,
            config.seed.wrapping_add(attempt.wrapping_mul(0x9e37)),
        )? {
            return Ok(data);
        }
    }
    Err(Error::InvalidConfig(format!(
        "no valid synthetic set after {} attempts",
        config.max_attempts
    )))
}

fn attempt_generate(config: &SynthConfig, seed: u64) -> Result<Option<SynthData>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..config.vocab_size).map(|i| format!("w{i}")).collect();
    let zipf = WeightedIndex::new((0..config.vocab_size).map(|i| 1.0 / (i + 1) as f64))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| words[zipf.sample(rng)].clone()).collect()
    };
    let good_domains =
        ((config.num_domains as f64 * config.good_domain_fraction).ceil() as usize).max(1);

    let mut drafts: Vec<Draft> = (0..config.num_docs)
        .map(|_| {
            let body_n = rng.gen_range(config.body_len.0..=config.body_len.1);
            let title_n = rng.gen_range(config.title_len.0..=config.title_len.1);
            let path_n = rng.gen_range(1..=3);
            Draft {
                domain: rng.gen_range(0..config.num_domains),
                path: draw(&mut rng, path_n),
                title: draw(&mut rng, title_n),
                body: draw(&mut rng, body_n),
            }
        })
        .collect();

    let mut queries = Vec::with_capacity(config.num_queries);
    let mut markers = Vec::with_capacity(config.num_queries);
    let topic_lo = (config.vocab_size / 50).max(1);
    let topic_hi = (config.vocab_size / 5).max(topic_lo + 1);
    for q in 0..config.num_queries {
        let marks: Vec<String> = (0..config.markers_per_query)
            .map(|k| format!("mk{q}x{k}"))
            .collect();
        let topic = words[rng.gen_range(topic_lo..topic_hi)].clone();
        let mut terms = marks.clone();
        terms.push(topic.clone());
        terms.shuffle(&mut rng);

        let n_pos = rng.gen_range(config.positives.0..=config.positives.1);
        let n_decoy = rng.gen_range(config.decoys.0..=config.decoys.1);
        let picked =
            rand::seq::index::sample(&mut rng, config.num_docs, n_pos + n_decoy).into_vec();
        for (i, &d) in picked.iter().enumerate() {
            let draft = &mut drafts[d];
            if i < n_pos {
                for m in &marks {
                    let times = rng.gen_range(1..=2);
                    insert_randomly(&mut rng, &mut draft.body, m, times);
                }
                if !config.passages && rng.gen_bool(0.6) {
                    for m in &marks {
                        insert_randomly(&mut rng, &mut draft.title, m, 1);
                    }
                }
                if !config.passages && rng.gen_bool(0.4) {
                    draft.path.insert(0, marks[0].clone());
                }
                let times = rng.gen_range(1..=2);
                insert_randomly(&mut rng, &mut draft.body, &topic, times);
                if rng.gen_bool(config.good_domain_rate) {
                    draft.domain = rng.gen_range(0..good_domains);
                }
            } else {
                let keep = if marks.len() > 1 {
                    rng.gen_range(1..marks.len())
                } else {
                    0
                };
                let subset: Vec<&String> = marks.choose_multiple(&mut rng, keep).collect();
                for m in subset {
                    let times = rng.gen_range(2..=5);
                    insert_randomly(&mut rng, &mut draft.body, m, times);
                    if !config.passages && rng.gen_bool(0.3) {
                        insert_randomly(&mut rng, &mut draft.title, m, 1);
                    }
                }
                let times = rng.gen_range(1..=3);
                insert_randomly(&mut rng, &mut draft.body, &topic, times);
            }
        }
        queries.push(Query::new(&format!("q{q}"), &terms.join(" ")));
        markers.push(marks);
    }

    let width = (config.num_docs - 1).to_string().len();
    let docs = drafts.into_iter().enumerate().map(|(i, d)| {
        let id = format!("d{i:0width$}");
        if config.passages {
            Document::new(&id, "", "", &d.body.join(" "))
        } else {
            let url = format!("http://site{}.com/{}", d.domain, d.path.join("/"));
            Document::new(&id, &url, &d.title.join(" "), &d.body.join(" "))
        }
    });
    let corpus = Corpus::from_documents(docs)?;

    let index = InvertedIndex::build(&corpus)?;
    let ql = Ranker::Ql(QlConfig::default());
    let mut candidates = Run::new("ql");
    let mut qrels = Qrels::new();
    for (query, marks) in queries.iter().zip(&markers) {
        let mut ranking = ql.rank(&index, None, &query.tokens, Scope::All)?;
        ranking.truncate(config.candidates_depth);
        let relevant: Vec<&Document> = corpus
            .iter()
            .filter(|d| {
                let present: HashSet<&String> =
                    d.title_tokens.iter().chain(&d.body_tokens).collect();
                marks.iter().all(|m| present.contains(m))
            })
            .collect();
        let rel_ids: HashSet<&str> = relevant.iter().map(|d| d.doc_id.as_str()).collect();
        let hits = ranking
            .iter()
            .filter(|s| rel_ids.contains(s.doc_id.as_str()))
            .count();
        if hits == 0 || hits == ranking.len() {
            return Ok(None);
        }
        for d in &relevant {
            let in_title = marks.iter().all(|m| d.title_tokens.contains(m));
            qrels.insert(&query.query_id, &d.doc_id, if in_title { 2 } else { 1 });
        }
        for s in &ranking {
            if !rel_ids.contains(s.doc_id.as_str()) {
                qrels.insert(&query.query_id, &s.doc_id, 0);
            }
        }
        candidates.insert_ranked(&query.query_id, ranking)?;
    }
    Ok(Some(SynthData {
        corpus,
        queries,
        qrels,
        candidates,
        markers,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{mrr, MetricConfig};
    use crate::lexical::Bm25Config;

    fn small() -> SynthConfig {
        SynthConfig {
            num_docs: 200,
            num_queries: 30,
            vocab_size: 500,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        generate(&cfg)
            .unwrap()
            .write(&dir.path().join("a"))
            .unwrap();
        generate(&cfg)
            .unwrap()
            .write(&dir.path().join("b"))
            .unwrap();
        for f in [DOCS_FILE, QUERIES_FILE, QRELS_FILE, CANDIDATES_FILE] {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn relevance_rule_is_literal() {
        let data = generate(&small()).unwrap();
        for (q, marks) in data.queries.iter().zip(&data.markers) {
            let positives: Vec<&str> = data
                .qrels
                .for_query(&q.query_id)
                .unwrap()
                .iter()
                .filter(|(_, &g)| g > 0)
                .map(|(d, _)| d.as_str())
                .collect();
            assert!(!positives.is_empty());
            for d in data.corpus.iter() {
                let has_all = marks
                    .iter()
                    .all(|m| d.title_tokens.contains(m) || d.body_tokens.contains(m));
                assert_eq!(has_all, positives.contains(&d.doc_id.as_str()));
            }
            let ranking = data.candidates.ranking(&q.query_id).unwrap();
            assert_eq!(ranking.len(), 100);
            assert!(ranking
                .iter()
                .any(|s| data.qrels.grade(&q.query_id, &s.doc_id) > 0));
            assert!(ranking
                .iter()
                .any(|s| data.qrels.grade(&q.query_id, &s.doc_id) == 0));
        }
    }

    #[test]
    fn markers_are_discriminative_for_bm25() {
        let data = generate(&small()).unwrap();
        let index = InvertedIndex::build(&data.corpus).unwrap();
        let bm25 = Ranker::Bm25(Bm25Config::conservative());
        let mut run = Run::new("bm25");
        for q in &data.queries {
            let r = bm25.rank(&index, None, &q.tokens, Scope::All).unwrap();
            run.insert_ranked(&q.query_id, r).unwrap();
        }
        assert!(mrr(&run, &data.qrels, &MetricConfig::documents()).unwrap() >= 0.6);
    }

    #[test]
    fn passage_mode_has_bodies_only() {
        let cfg = SynthConfig {
            num_docs: 150,
            num_queries: 10,
            ..SynthConfig::passage_style()
        };
        let data = generate(&cfg).unwrap();
        assert!(data.corpus.iter().all(|d| d.url_tokens.is_empty()
            && d.title_tokens.is_empty()
            && !d.body_tokens.is_empty()));
    }
}
