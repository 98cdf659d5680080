use std::collections::HashMap;
use std::sync::Mutex;

use super::{dirichlet_log, ql_doc, query_term_ids};
use crate::corpus::{Field, FieldIndex, InvertedIndex};
use crate::{Error, Result};

/// Sequential dependence model weights and windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct SdmConfig {
    /// Longest adjacent query n-gram used (>= 2).
    pub order: usize,
    pub lambda_t: f64,
    pub lambda_o: f64,
    pub lambda_u: f64,
    /// Unordered window width is `window_factor * n` for an n-gram.
    pub window_factor: usize,
    pub mu: f64,
    pub field: Field,
}

impl Default for SdmConfig {
    fn default() -> Self {
        SdmConfig {
            order: 3,
            lambda_t: 0.90,
            lambda_o: 0.034,
            lambda_u: 0.066,
            window_factor: 4,
            mu: 1250.0,
            field: Field::Body,
        }
    }
}

impl SdmConfig {
    pub fn validate(&self) -> Result<()> {
        let sum = self.lambda_t + self.lambda_o + self.lambda_u;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "sdm weights sum to {sum}, expected 1"
            )));
        }
        if self.order < 2 {
            return Err(Error::InvalidConfig("sdm order must be >= 2".into()));
        }
        if self.window_factor == 0 || !(self.mu > 0.0) {
            return Err(Error::InvalidConfig(
                "sdm window factor and mu must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Exact contiguous matches of `gram` (overlapping matches counted).
pub fn ordered_count(fi: &FieldIndex, gram: &[u32], doc: u32) -> u64 {
    let first = fi.positions(gram[0], doc);
    let rest: Vec<&[u32]> = gram[1..].iter().map(|&t| fi.positions(t, doc)).collect();
    if rest.iter().any(|p| p.is_empty()) {
        return 0;
    }
    first
        .iter()
        .filter(|&&p| {
            rest.iter()
                .enumerate()
                .all(|(k, pos)| pos.binary_search(&(p + k as u32 + 1)).is_ok())
        })
        .count() as u64
}

/// Non-overlapping windows of at most `width` tokens that contain every
/// term of `gram` (with multiplicity), matched greedily left to right.
pub fn unordered_count(fi: &FieldIndex, gram: &[u32], doc: u32, width: usize) -> u64 {
    let mut distinct: Vec<(u32, usize)> = Vec::new();
    for &t in gram {
        match distinct.iter_mut().find(|(d, _)| *d == t) {
            Some((_, n)) => *n += 1,
            None => distinct.push((t, 1)),
        }
    }
    let mut occurrences: Vec<(u32, usize)> = Vec::new();
    for (slot, &(t, need)) in distinct.iter().enumerate() {
        let pos = fi.positions(t, doc);
        if pos.len() < need {
            return 0;
        }
        occurrences.extend(pos.iter().map(|&p| (p, slot)));
    }
    occurrences.sort_unstable();

    let mut count = 0;
    let mut i = 0;
    while i < occurrences.len() {
        let start = occurrences[i].0;
        let mut need: Vec<usize> = distinct.iter().map(|&(_, n)| n).collect();
        let mut remaining = gram.len();
        let mut end = None;
        for (j, &(pos, slot)) in occurrences.iter().enumerate().skip(i) {
            if (pos - start) as usize + 1 > width {
                break;
            }
            if need[slot] > 0 {
                need[slot] -= 1;
                remaining -= 1;
                if remaining == 0 {
                    end = Some(j);
                    break;
                }
            }
        }
        match end {
            Some(j) => {
                count += 1;
                i = j + 1;
            }
            None => i += 1,
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Window {
    Ordered,
    Unordered(usize),
}

/// SDM scorer with memoized n-gram collection counts.
pub struct SdmScorer<'a> {
    index: &'a InvertedIndex,
    config: SdmConfig,
    collection_counts: Mutex<HashMap<(Vec<u32>, Window), u64>>,
}

/// Query resolved against the index vocabulary.
pub struct PreparedSdm {
    unigrams: Vec<Option<u32>>,
    /// In-vocabulary adjacent n-grams for n = 2..=order.
    grams: Vec<Vec<u32>>,
    ordered_cf: Vec<u64>,
    unordered_cf: Vec<u64>,
}

impl<'a> SdmScorer<'a> {
    pub fn new(index: &'a InvertedIndex, config: SdmConfig) -> Result<Self> {
        config.validate()?;
        Ok(SdmScorer {
            index,
            config,
            collection_counts: Mutex::new(HashMap::new()),
        })
    }

    fn fi(&self) -> &FieldIndex {
        self.index.field(self.config.field)
    }

    fn count(&self, gram: &[u32], window: Window, doc: u32) -> u64 {
        match window {
            Window::Ordered => ordered_count(self.fi(), gram, doc),
            Window::Unordered(w) => unordered_count(self.fi(), gram, doc, w),
        }
    }

    fn collection_count(&self, gram: &[u32], window: Window) -> u64 {
        let key = (gram.to_vec(), window);
        if let Some(&c) = self.collection_counts.lock().unwrap().get(&key) {
            return c;
        }
        // Only documents containing the first term can match.
        let total = self
            .fi()
            .postings(gram[0])
            .iter()
            .map(|p| self.count(gram, window, p.doc))
            .sum();
        self.collection_counts.lock().unwrap().insert(key, total);
        total
    }

    pub fn prepare(&self, query: &[String]) -> PreparedSdm {
        let unigrams = query_term_ids(self.index, query);
        let mut grams = Vec::new();
        for n in 2..=self.config.order {
            for window in unigrams.windows(n) {
                if let Some(ids) = window.iter().copied().collect::<Option<Vec<u32>>>() {
                    grams.push(ids);
                }
            }
        }
        let ordered_cf = grams
            .iter()
            .map(|g| self.collection_count(g, Window::Ordered))
            .collect();
        let unordered_cf = grams
            .iter()
            .map(|g| {
                self.collection_count(g, Window::Unordered(self.config.window_factor * g.len()))
            })
            .collect();
        PreparedSdm {
            unigrams,
            grams,
            ordered_cf,
            unordered_cf,
        }
    }

    pub fn score_prepared(&self, q: &PreparedSdm, doc: u32) -> f64 {
        let c = &self.config;
        let fi = self.fi();
        let coll = fi.collection_len() as f64;
        let dl = fi.doc_len(doc) as f64;
        let unigram = ql_doc(fi, &q.unigrams, doc, c.mu);
        let mut ordered = 0.0;
        let mut unordered = 0.0;
        for (i, gram) in q.grams.iter().enumerate() {
            if q.ordered_cf[i] > 0 {
                let tf = self.count(gram, Window::Ordered, doc) as f64;
                ordered += dirichlet_log(tf, q.ordered_cf[i] as f64, coll, dl, c.mu);
            }
            if q.unordered_cf[i] > 0 {
                let w = Window::Unordered(c.window_factor * gram.len());
                let tf = self.count(gram, w, doc) as f64;
                unordered += dirichlet_log(tf, q.unordered_cf[i] as f64, coll, dl, c.mu);
            }
        }
        c.lambda_t * unigram + c.lambda_o * ordered + c.lambda_u * unordered
    }

    pub fn score(&self, query: &[String], doc_id: &str) -> Result<f64> {
        let doc = self.index.doc_index(doc_id)?;
        Ok(self.score_prepared(&self.prepare(query), doc))
    }
}

pub fn sdm_score(
    query: &[String],
    doc_id: &str,
    index: &InvertedIndex,
    config: &SdmConfig,
) -> Result<f64> {
    SdmScorer::new(index, config.clone())?.score(query, doc_id)
}
