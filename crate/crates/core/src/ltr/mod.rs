//! Learning-to-rank: per (query, candidate) feature vectors built from
//! several runs, DESM similarities and query/document priors, reranked by a
//! two-hidden-layer network.

mod model;

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::corpus::{Corpus, Document, Field, Qrels, Query};
use crate::embed::{desm_score, DesmVariant, EmbeddingPair};
use crate::eval::{Run, ScoredDoc};
use crate::{Error, Result};

pub use model::{rerank, train_ltr, LtrConfig, LtrModel, LtrReport};

/// Run names of the default schema, in feature order.
pub const DEFAULT_RUNS: [&str; 5] = ["duetmf", "sdm", "prf", "bm25_0.9_0.4", "bm25_3.44_0.87"];

const DESM_FIELDS: [Field; 2] = [Field::Title, Field::Body];

/// Ordered feature names: a score and reciprocal-rank pair per run, eight
/// DESM similarities, query length and domain quality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    runs: Vec<String>,
    names: Vec<String>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        FeatureSchema::with_runs(DEFAULT_RUNS.iter().map(|s| s.to_string()).collect())
            .expect("default runs are valid")
    }
}

impl FeatureSchema {
    pub fn with_runs(runs: Vec<String>) -> Result<Self> {
        let mut names = Vec::new();
        for r in &runs {
            if r.is_empty() || r.chars().any(char::is_whitespace) {
                return Err(Error::Schema(format!("bad run name {r:?}")));
            }
            names.push(format!("{r}.score"));
            names.push(format!("{r}.rr"));
        }
        for f in DESM_FIELDS {
            for v in DesmVariant::ALL {
                names.push(format!("desm.{f}.{v}"));
            }
        }
        names.push("query_length".into());
        names.push("domain_quality".into());
        let unique: HashSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Schema("duplicate run names".into()));
        }
        Ok(FeatureSchema { runs, names })
    }

    /// Rebuilds a schema from its persisted names.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let runs = names
            .iter()
            .filter_map(|n| n.as_ref().strip_suffix(".score"))
            .map(String::from)
            .collect();
        let schema = FeatureSchema::with_runs(runs)?;
        if schema
            .names
            .iter()
            .map(String::as_str)
            .ne(names.iter().map(AsRef::as_ref))
        {
            return Err(Error::Schema(
                "feature names do not form a valid schema".into(),
            ));
        }
        Ok(schema)
    }

    pub fn runs(&self) -> &[String] {
        &self.runs
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Per schema run, whether the document was absent from it.
    pub missing: Vec<bool>,
}

/// Domain counts among positively judged training documents and the whole
/// collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DomainStats {
    positive: HashMap<String, u64>,
    collection: HashMap<String, u64>,
    total_positive: u64,
    total_collection: u64,
}

impl DomainStats {
    pub fn new(positive: HashMap<String, u64>, collection: HashMap<String, u64>) -> Self {
        let total_positive = positive.values().sum();
        let total_collection = collection.values().sum();
        DomainStats {
            positive,
            collection,
            total_positive,
            total_collection,
        }
    }

    /// Counts judgments with grade >= `threshold` for `train_queries` only.
    pub fn build(
        corpus: &Corpus,
        qrels: &Qrels,
        train_queries: &HashSet<String>,
        threshold: u32,
    ) -> Self {
        let mut collection = HashMap::new();
        for d in corpus.iter() {
            *collection.entry(d.domain.clone()).or_insert(0) += 1;
        }
        let mut positive = HashMap::new();
        for (q, doc, g) in qrels.iter() {
            if g < threshold || !train_queries.contains(q) {
                continue;
            }
            if let Some(d) = corpus.get(doc) {
                *positive.entry(d.domain.clone()).or_insert(0) += 1;
            }
        }
        DomainStats::new(positive, collection)
    }

    pub fn num_domains(&self) -> usize {
        self.positive
            .keys()
            .chain(self.collection.keys())
            .collect::<HashSet<_>>()
            .len()
    }

    /// Smoothed ratio of a domain's share of positives to its share of the
    /// collection, with add-`eps` smoothing. Empty stats give 1.
    pub fn quality_with(&self, domain: &str, eps: f64) -> f64 {
        let d = self.num_domains() as f64;
        if d == 0.0 {
            return 1.0;
        }
        let p = self.positive.get(domain).copied().unwrap_or(0) as f64;
        let c = self.collection.get(domain).copied().unwrap_or(0) as f64;
        let pos_share = (p + eps) / (self.total_positive as f64 + eps * d);
        let coll_share = (c + eps) / (self.total_collection as f64 + eps * d);
        pos_share / coll_share
    }

    pub fn quality(&self, domain: &str) -> f64 {
        self.quality_with(domain, 1.0)
    }
}

/// Features of one document for one query. `runs` pairs each schema run name
/// with that run's ranking for the query.
pub fn extract_features(
    query: &Query,
    doc: &Document,
    runs: &[(&str, &[ScoredDoc])],
    emb: &EmbeddingPair,
    stats: &DomainStats,
    schema: &FeatureSchema,
) -> Result<FeatureVector> {
    if runs.len() != schema.runs.len() || runs.iter().zip(&schema.runs).any(|((n, _), s)| n != s) {
        return Err(Error::Schema(format!(
            "runs [{}] do not match schema runs [{}]",
            runs.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","),
            schema.runs.join(",")
        )));
    }
    let mut values = Vec::with_capacity(schema.dim());
    let mut missing = Vec::with_capacity(runs.len());
    for (_, ranking) in runs {
        match ranking.iter().position(|s| s.doc_id == doc.doc_id) {
            Some(i) => {
                values.push(ranking[i].score);
                values.push(1.0 / (i + 1) as f64);
                missing.push(false);
            }
            None => {
                let min = ranking
                    .iter()
                    .map(|s| s.score)
                    .fold(f64::INFINITY, f64::min);
                values.push(if min.is_finite() { min - 1.0 } else { -1.0 });
                values.push(0.0);
                missing.push(true);
            }
        }
    }
    for f in DESM_FIELDS {
        for v in DesmVariant::ALL {
            values.push(desm_score(&query.tokens, doc.field(f), emb, v).value);
        }
    }
    values.push(query.tokens.len() as f64);
    values.push(stats.quality(&doc.domain));
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Schema(format!(
            "feature {} is not finite",
            schema.names[i]
        )));
    }
    Ok(FeatureVector { values, missing })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub doc_id: String,
    pub features: FeatureVector,
}

/// Feature vectors grouped by query, in candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub schema: FeatureSchema,
    rows: IndexMap<String, Vec<FeatureRow>>,
}

impl FeatureSet {
    pub fn new(schema: FeatureSchema) -> Self {
        FeatureSet {
            schema,
            rows: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, features: FeatureVector) -> Result<()> {
        if features.values.len() != self.schema.dim() {
            return Err(Error::Schema(format!(
                "{} values for a {}-feature schema",
                features.values.len(),
                self.schema.dim()
            )));
        }
        self.rows
            .entry(query_id.to_string())
            .or_default()
            .push(FeatureRow {
                doc_id: doc_id.to_string(),
                features,
            });
        Ok(())
    }

    pub fn query(&self, query_id: &str) -> Option<&[FeatureRow]> {
        self.rows.get(query_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[FeatureRow])> {
        self.rows.iter().map(|(q, r)| (q.as_str(), r.as_slice()))
    }

    pub fn num_rows(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn restrict(&self, query_ids: &HashSet<String>) -> FeatureSet {
        FeatureSet {
            schema: self.schema.clone(),
            rows: self
                .rows
                .iter()
                .filter(|(q, _)| query_ids.contains(*q))
                .map(|(q, r)| (q.clone(), r.clone()))
                .collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("qid\tdocid\t{}\n", self.schema.names.join("\t"));
        for (q, rows) in &self.rows {
            for r in rows {
                let _ = write!(out, "{q}\t{}", r.doc_id);
                for v in &r.features.values {
                    let _ = write!(out, "\t{v}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Extracts features for every candidate of every query, in parallel.
/// `runs` must follow the schema's run order.
pub fn extract_feature_set(
    queries: &[Query],
    corpus: &Corpus,
    candidates: &Run,
    runs: &[(&str, &Run)],
    emb: &EmbeddingPair,
    stats: &DomainStats,
    schema: &FeatureSchema,
) -> Result<FeatureSet> {
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let mut jobs = Vec::new();
    for (qid, ranking) in candidates.iter() {
        let query = by_id
            .get(qid)
            .ok_or_else(|| Error::Schema(format!("candidates for unknown query {qid}")))?;
        for c in ranking {
            jobs.push((*query, c.doc_id.as_str()));
        }
    }
    let vectors = jobs
        .par_iter()
        .map(|&(q, doc_id)| {
            let doc = corpus
                .get(doc_id)
                .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
            let evidence: Vec<(&str, &[ScoredDoc])> = runs
                .iter()
                .map(|(name, run)| (*name, run.ranking(&q.query_id).unwrap_or(&[])))
                .collect();
            extract_features(q, doc, &evidence, emb, stats, schema)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = FeatureSet::new(schema.clone());
    for ((q, doc_id), v) in jobs.iter().zip(vectors) {
        set.insert(&q.query_id, doc_id, v)?;
    }
    Ok(set)
}

pub fn parse_features<R: BufRead>(reader: R) -> Result<FeatureSet> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::parse(1, e.to_string()))?,
        None => return Err(Error::parse(1, "missing header")),
    };
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 || cols[0] != "qid" || cols[1] != "docid" {
        return Err(Error::parse(1, "header must start with qid, docid"));
    }
    let schema = FeatureSchema::from_names(&cols[2..])?;
    let mut set = FeatureSet::new(schema);
    let nruns = set.schema.runs.len();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::parse(n, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != set.schema.dim() + 2 {
            return Err(Error::parse(
                n,
                format!("expected {} columns", set.schema.dim() + 2),
            ));
        }
        let values = parts[2..]
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(n, format!("bad value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let missing = (0..nruns).map(|r| values[2 * r + 1] == 0.0).collect();
        set.insert(parts[0], parts[1], FeatureVector { values, missing })?;
    }
    Ok(set)
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_features(BufReader::new(f))
}

pub fn write_features(set: &FeatureSet, path: &Path) -> Result<()> {
    std::fs::write(path, set.to_tsv()).map_err(|e| Error::io(path, e))
}
