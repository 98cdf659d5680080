//! Probabilistic lexical rankers over an [`InvertedIndex`].

mod prf;
mod sdm;

use rayon::prelude::*;

use crate::corpus::{Field, FieldIndex, InvertedIndex};
use crate::eval::{sort_ranking, ScoredDoc};
use crate::{Error, Result};

pub use prf::{relevance_model, rm1_expand, Expansion, PrfConfig};
pub use sdm::{ordered_count, sdm_score, unordered_count, SdmConfig, SdmScorer};

/// Query likelihood with Dirichlet smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QlConfig {
    pub mu: f64,
    pub field: Field,
}

impl Default for QlConfig {
    fn default() -> Self {
        QlConfig {
            mu: 1250.0,
            field: Field::Body,
        }
    }
}

impl QlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu > 0.0 && self.mu.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "mu must be > 0, got {}",
                self.mu
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    pub field: Field,
}

impl Bm25Config {
    pub const fn new(k1: f64, b: f64) -> Self {
        Bm25Config {
            k1,
            b,
            field: Field::Body,
        }
    }

    /// `k1 = 0.9, b = 0.4`
    pub const fn conservative() -> Self {
        Self::new(0.9, 0.4)
    }

    /// `k1 = 3.44, b = 0.87`
    pub const fn tuned() -> Self {
        Self::new(3.44, 0.87)
    }

    pub fn presets() -> [Bm25Config; 2] {
        [Self::conservative(), Self::tuned()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "bm25 needs k1 >= 0 and b in [0,1], got k1={} b={}",
                self.k1, self.b
            )))
        }
    }
}

impl Default for Bm25Config {
    fn default() -> Self {
        Self::conservative()
    }
}

/// `log((tf + mu * cf / |C|) / (|d| + mu))`
#[inline]
pub(crate) fn dirichlet_log(tf: f64, cf: f64, collection_len: f64, doc_len: f64, mu: f64) -> f64 {
    ((tf + mu * cf / collection_len) / (doc_len + mu)).ln()
}

pub(crate) fn query_term_ids(index: &InvertedIndex, query: &[String]) -> Vec<Option<u32>> {
    query.iter().map(|t| index.term_id(t)).collect()
}

pub(crate) fn ql_doc(fi: &FieldIndex, terms: &[Option<u32>], doc: u32, mu: f64) -> f64 {
    let coll = fi.collection_len() as f64;
    let dl = fi.doc_len(doc) as f64;
    terms
        .iter()
        .flatten()
        .filter(|&&t| fi.cf(t) > 0)
        .map(|&t| dirichlet_log(fi.tf(t, doc) as f64, fi.cf(t) as f64, coll, dl, mu))
        .sum()
}

pub fn ql_score(
    query: &[String],
    doc_id: &str,
    index: &InvertedIndex,
    config: &QlConfig,
) -> Result<f64> {
    config.validate()?;
    let doc = index.doc_index(doc_id)?;
    let terms = query_term_ids(index, query);
    Ok(ql_doc(index.field(config.field), &terms, doc, config.mu))
}

pub(crate) fn bm25_doc(
    index: &InvertedIndex,
    terms: &[Option<u32>],
    doc: u32,
    config: &Bm25Config,
) -> f64 {
    let fi = index.field(config.field);
    let n = index.num_docs() as f64;
    let avgdl = fi.avg_doc_len();
    let dl = fi.doc_len(doc) as f64;
    let norm = if avgdl > 0.0 {
        1.0 - config.b + config.b * dl / avgdl
    } else {
        1.0
    };
    terms
        .iter()
        .flatten()
        .filter(|&&t| fi.df(t) > 0)
        .map(|&t| {
            let df = fi.df(t) as f64;
            let tf = fi.tf(t, doc) as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            idf * tf * (config.k1 + 1.0) / (tf + config.k1 * norm)
        })
        .sum()
}

pub fn bm25_score(
    query: &[String],
    doc_id: &str,
    index: &InvertedIndex,
    config: &Bm25Config,
) -> Result<f64> {
    config.validate()?;
    let doc = index.doc_index(doc_id)?;
    Ok(bm25_doc(index, &query_term_ids(index, query), doc, config))
}

/// A normalized bag of weighted terms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedQuery {
    terms: Vec<(String, f64)>,
}

impl WeightedQuery {
    /// Merges duplicate terms, drops non-positive weights and normalizes.
    pub fn new(terms: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut merged: Vec<(String, f64)> = Vec::new();
        for (t, w) in terms {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("bad weight {w} for {t}")));
            }
            match merged.iter_mut().find(|(m, _)| *m == t) {
                Some((_, acc)) => *acc += w,
                None => merged.push((t, w)),
            }
        }
        merged.retain(|(_, w)| *w > 0.0);
        let total: f64 = merged.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::Empty("weighted query"));
        }
        for (_, w) in &mut merged {
            *w /= total;
        }
        merged.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(WeightedQuery { terms: merged })
    }

    /// Maximum-likelihood weights of a token sequence.
    pub fn from_tokens(tokens: &[String]) -> Result<Self> {
        Self::new(tokens.iter().map(|t| (t.clone(), 1.0)))
    }

    pub fn terms(&self) -> &[(String, f64)] {
        &self.terms
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.terms
            .iter()
            .find(|(t, _)| t == term)
            .map_or(0.0, |(_, w)| *w)
    }
}

pub(crate) fn weighted_ql_doc(
    fi: &FieldIndex,
    terms: &[(Option<u32>, f64)],
    doc: u32,
    mu: f64,
) -> f64 {
    let coll = fi.collection_len() as f64;
    let dl = fi.doc_len(doc) as f64;
    terms
        .iter()
        .filter_map(|&(t, w)| t.map(|t| (t, w)))
        .filter(|&(t, _)| fi.cf(t) > 0)
        .map(|(t, w)| w * dirichlet_log(fi.tf(t, doc) as f64, fi.cf(t) as f64, coll, dl, mu))
        .sum()
}

fn weighted_term_ids(index: &InvertedIndex, wq: &WeightedQuery) -> Vec<(Option<u32>, f64)> {
    wq.terms()
        .iter()
        .map(|(t, w)| (index.term_id(t), *w))
        .collect()
}

pub fn weighted_ql_score(
    query: &WeightedQuery,
    doc_id: &str,
    index: &InvertedIndex,
    mu: f64,
    field: Field,
) -> Result<f64> {
    let doc = index.doc_index(doc_id)?;
    Ok(weighted_ql_doc(
        index.field(field),
        &weighted_term_ids(index, query),
        doc,
        mu,
    ))
}

/// Which documents a ranking covers.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    All,
    Candidates(&'a [String]),
}

impl Scope<'_> {
    pub(crate) fn docs(&self, index: &InvertedIndex) -> Result<Vec<u32>> {
        match self {
            Scope::All => Ok((0..index.num_docs() as u32).collect()),
            Scope::Candidates(ids) => ids.iter().map(|d| index.doc_index(d)).collect(),
        }
    }
}

/// Scores every document in scope and sorts by descending score with
/// ascending doc id on ties.
pub fn rank_by<F>(index: &InvertedIndex, scope: Scope<'_>, score: F) -> Result<Vec<ScoredDoc>>
where
    F: Fn(u32) -> f64 + Sync,
{
    let docs = scope.docs(index)?;
    let mut scored: Vec<ScoredDoc> = docs
        .par_iter()
        .map(|&d| ScoredDoc {
            doc_id: index.doc_id(d).to_string(),
            score: score(d),
        })
        .collect();
    sort_ranking(&mut scored);
    Ok(scored)
}

/// A named lexical ranker.
#[derive(Debug, Clone, PartialEq)]
pub enum Ranker {
    Ql(QlConfig),
    Bm25(Bm25Config),
    Sdm(SdmConfig),
    Prf(PrfConfig),
}

impl Ranker {
    /// Parses `ql`, `sdm`, `prf`, `bm25` or `bm25[k1,b]`.
    pub fn parse(name: &str) -> Result<Ranker> {
        let name = name.trim();
        match name {
            "ql" => return Ok(Ranker::Ql(QlConfig::default())),
            "sdm" => return Ok(Ranker::Sdm(SdmConfig::default())),
            "prf" => return Ok(Ranker::Prf(PrfConfig::default())),
            "bm25" => return Ok(Ranker::Bm25(Bm25Config::default())),
            _ => {}
        }
        let bad = || Error::InvalidConfig(format!("unknown ranker {name:?}"));
        let args = name
            .strip_prefix("bm25[")
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(bad)?;
        let (k1, b) = args.split_once(',').ok_or_else(bad)?;
        let config = Bm25Config::new(
            k1.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        config.validate()?;
        Ok(Ranker::Bm25(config))
    }

    pub fn name(&self) -> String {
        match self {
            Ranker::Ql(_) => "ql".into(),
            Ranker::Bm25(c) => format!("bm25[{},{}]", c.k1, c.b),
            Ranker::Sdm(_) => "sdm".into(),
            Ranker::Prf(_) => "prf".into(),
        }
    }

    /// Ranks `scope` for `query`. `aux` supplies the passages for
    /// expansion when set; SDM and the other rankers ignore it.
    pub fn rank(
        &self,
        index: &InvertedIndex,
        aux: Option<&InvertedIndex>,
        query: &[String],
        scope: Scope<'_>,
    ) -> Result<Vec<ScoredDoc>> {
        match self {
            Ranker::Ql(c) => {
                c.validate()?;
                let terms = query_term_ids(index, query);
                let fi = index.field(c.field);
                rank_by(index, scope, |d| ql_doc(fi, &terms, d, c.mu))
            }
            Ranker::Bm25(c) => {
                c.validate()?;
                let terms = query_term_ids(index, query);
                rank_by(index, scope, |d| bm25_doc(index, &terms, d, c))
            }
            Ranker::Sdm(c) => {
                let scorer = SdmScorer::new(index, c.clone())?;
                let prepared = scorer.prepare(query);
                rank_by(index, scope, |d| scorer.score_prepared(&prepared, d))
            }
            Ranker::Prf(c) => {
                let source = aux.unwrap_or(index);
                // Expansion draws on the candidates only when ranking the same index.
                let expansion_scope = if aux.is_some() { Scope::All } else { scope };
                let expansion = rm1_expand(query, source, c, expansion_scope)?;
                let terms = weighted_term_ids(index, &expansion.query);
                let fi = index.field(c.field);
                rank_by(index, scope, |d| weighted_ql_doc(fi, &terms, d, c.mu))
            }
        }
    }
}
