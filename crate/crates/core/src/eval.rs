//! TREC run files and rank-quality metrics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::corpus::Qrels;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked lists per query, in query insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub run_id: String,
    rankings: IndexMap<String, Vec<ScoredDoc>>,
}

/// Sorts by descending score, ascending doc id on ties.
pub fn sort_ranking(docs: &mut [ScoredDoc]) {
    docs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

impl Run {
    pub fn new(run_id: impl Into<String>) -> Self {
        Run {
            run_id: run_id.into(),
            rankings: IndexMap::new(),
        }
    }

    /// Stores a ranking in the given order. Doc ids must be distinct.
    pub fn insert_ranked(&mut self, query_id: &str, docs: Vec<ScoredDoc>) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &docs {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "doc {} appears twice for query {query_id}",
                    d.doc_id
                )));
            }
        }
        self.rankings.insert(query_id.to_string(), docs);
        Ok(())
    }

    /// Sorts `docs` with [`sort_ranking`] and stores them.
    pub fn insert_scores(&mut self, query_id: &str, mut docs: Vec<ScoredDoc>) -> Result<()> {
        sort_ranking(&mut docs);
        self.insert_ranked(query_id, docs)
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[ScoredDoc]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        self.rankings
            .iter()
            .map(|(q, d)| (q.as_str(), d.as_slice()))
    }

    /// Rankings in query-id order, so aggregates do not depend on the order
    /// queries were inserted.
    pub fn iter_sorted(&self) -> impl Iterator<Item = (&str, &[ScoredDoc])> {
        let mut all: Vec<_> = self.iter().collect();
        all.sort_unstable_by(|a, b| a.0.cmp(b.0));
        all.into_iter()
    }

    pub fn num_queries(&self) -> usize {
        self.rankings.len()
    }

    /// Keeps only the listed queries, preserving order.
    pub fn restrict(&self, query_ids: &HashSet<String>) -> Run {
        Run {
            run_id: self.run_id.clone(),
            rankings: self
                .rankings
                .iter()
                .filter(|(q, _)| query_ids.contains(*q))
                .map(|(q, d)| (q.clone(), d.clone()))
                .collect(),
        }
    }

    /// 1-based rank of every doc of a query.
    pub fn rank_map(&self, query_id: &str) -> HashMap<&str, usize> {
        self.ranking(query_id)
            .unwrap_or(&[])
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.as_str(), i + 1))
            .collect()
    }

    /// Truncates every ranking to its first `k` documents.
    pub fn truncate(&mut self, k: usize) {
        for docs in self.rankings.values_mut() {
            docs.truncate(k);
        }
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (qid, docs) in &self.rankings {
            for (i, d) in docs.iter().enumerate() {
                writeln!(
                    out,
                    "{qid} Q0 {} {} {:.6} {}",
                    d.doc_id,
                    i + 1,
                    d.score,
                    self.run_id
                )?;
            }
        }
        Ok(())
    }
}

/// Writes `qid Q0 docid rank score run_id` lines.
pub fn write_run(run: &Run, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    run.write_to(&mut buf).expect("write to vec");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_run<R: BufRead>(reader: R) -> Result<Run> {
    struct Entry {
        line: usize,
        rank: usize,
        doc: ScoredDoc,
    }
    let mut run_id = None;
    let mut per_query: IndexMap<String, Vec<Entry>> = IndexMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<run stream>", e))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 6 {
            return Err(Error::parse(line_no, "expected 6 fields"));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad score {:?}", cols[4])))?;
        run_id.get_or_insert_with(|| cols[5].to_string());
        per_query
            .entry(cols[0].to_string())
            .or_default()
            .push(Entry {
                line: line_no,
                rank,
                doc: ScoredDoc {
                    doc_id: cols[2].to_string(),
                    score,
                },
            });
    }
    let mut run = Run::new(run_id.unwrap_or_default());
    for (qid, mut entries) in per_query {
        entries.sort_by_key(|e| (e.rank, e.line));
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::parse(
                    e.line,
                    format!(
                        "non-contiguous rank {} for query {qid} (expected {})",
                        e.rank,
                        i + 1
                    ),
                ));
            }
            if !seen.insert(e.doc.doc_id.clone()) {
                return Err(Error::parse(
                    e.line,
                    format!("duplicate doc {} for query {qid}", e.doc.doc_id),
                ));
            }
        }
        run.rankings
            .insert(qid, entries.into_iter().map(|e| e.doc).collect());
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<Run> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_run(BufReader::new(file))
}

/// Binarization threshold and recall depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub threshold: u32,
    pub recall_cutoff: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            threshold: 1,
            recall_cutoff: 100,
        }
    }
}

impl MetricConfig {
    pub fn documents() -> Self {
        Self::default()
    }

    pub fn passages() -> Self {
        MetricConfig {
            recall_cutoff: 1000,
            ..Self::default()
        }
    }
}

/// A mean over queries that excludes queries without relevant documents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averaged {
    pub value: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

fn require_queries(run: &Run) -> Result<()> {
    if run.num_queries() == 0 {
        Err(Error::Empty("run has no queries"))
    } else {
        Ok(())
    }
}

pub fn mrr(run: &Run, qrels: &Qrels, config: &MetricConfig) -> Result<f64> {
    require_queries(run)?;
    let total: f64 = run
        .iter_sorted()
        .map(|(qid, docs)| {
            docs.iter()
                .position(|d| qrels.grade(qid, &d.doc_id) >= config.threshold)
                .map_or(0.0, |i| 1.0 / (i + 1) as f64)
        })
        .sum();
    Ok(total / run.num_queries() as f64)
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG for one ranked list of grades against the judged grades.
pub fn ndcg_of_grades(ranked: &[u32], judged: &[u32], k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) * discount(i + 1))
        .sum();
    let mut ideal = judged.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) * discount(i + 1))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

pub fn ndcg_at(run: &Run, qrels: &Qrels, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("ndcg cutoff must be >= 1".into()));
    }
    require_queries(run)?;
    let total: f64 = run
        .iter_sorted()
        .map(|(qid, docs)| {
            let ranked: Vec<u32> = docs.iter().map(|d| qrels.grade(qid, &d.doc_id)).collect();
            let judged: Vec<u32> = qrels
                .for_query(qid)
                .map(|m| m.values().copied().collect())
                .unwrap_or_default();
            ndcg_of_grades(&ranked, &judged, k)
        })
        .sum();
    Ok(total / run.num_queries() as f64)
}

fn mean_over_judged(
    run: &Run,
    qrels: &Qrels,
    threshold: u32,
    per_query: impl Fn(&str, &[ScoredDoc], usize) -> f64,
) -> Averaged {
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut excluded = 0;
    for (qid, docs) in run.iter_sorted() {
        let relevant = qrels.num_relevant(qid, threshold);
        if relevant == 0 {
            excluded += 1;
            continue;
        }
        evaluated += 1;
        sum += per_query(qid, docs, relevant);
    }
    Averaged {
        value: if evaluated > 0 {
            sum / evaluated as f64
        } else {
            0.0
        },
        evaluated,
        excluded,
    }
}

pub fn map(run: &Run, qrels: &Qrels, config: &MetricConfig) -> Averaged {
    mean_over_judged(run, qrels, config.threshold, |qid, docs, relevant| {
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (i, d) in docs.iter().enumerate() {
            if qrels.grade(qid, &d.doc_id) >= config.threshold {
                hits += 1;
                precision_sum += hits as f64 / (i + 1) as f64;
            }
        }
        precision_sum / relevant as f64
    })
}

pub fn recall_at(run: &Run, qrels: &Qrels, k: usize, threshold: u32) -> Averaged {
    mean_over_judged(run, qrels, threshold, |qid, docs, relevant| {
        let hits = docs
            .iter()
            .take(k)
            .filter(|d| qrels.grade(qid, &d.doc_id) >= threshold)
            .count();
        hits as f64 / relevant as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mrr,
    Ndcg(usize),
    Map,
    Recall(usize),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Mrr => write!(f, "mrr"),
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Map => write!(f, "map"),
            Metric::Recall(k) => write!(f, "recall@{k}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown metric {s:?}"));
        let cutoff = |k: &str| k.parse::<usize>().ok().filter(|&k| k >= 1).ok_or_else(bad);
        match s.trim().split_once('@') {
            None if s.trim() == "mrr" => Ok(Metric::Mrr),
            None if s.trim() == "map" => Ok(Metric::Map),
            Some(("ndcg", k)) => Ok(Metric::Ndcg(cutoff(k)?)),
            Some(("recall", k)) => Ok(Metric::Recall(cutoff(k)?)),
            _ => Err(bad()),
        }
    }
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

pub fn evaluate(run: &Run, qrels: &Qrels, metric: Metric, config: &MetricConfig) -> Result<f64> {
    Ok(match metric {
        Metric::Mrr => mrr(run, qrels, config)?,
        Metric::Ndcg(k) => ndcg_at(run, qrels, k)?,
        Metric::Map => map(run, qrels, config).value,
        Metric::Recall(k) => recall_at(run, qrels, k, config.threshold).value,
    })
}

/// One `metric \t value` line per metric, four decimals.
pub fn format_report(rows: &[(Metric, f64)]) -> String {
    rows.iter().map(|(m, v)| format!("{m}\t{v:.4}\n")).collect()
}
