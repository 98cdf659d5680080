use std::collections::HashMap;

use super::{dirichlet_log, query_term_ids, Scope, WeightedQuery};
use crate::corpus::text::passage_spans;
use crate::corpus::{Field, InvertedIndex};
use crate::{Error, Result};

/// Passage-level relevance-model expansion settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PrfConfig {
    /// Feedback passages.
    pub m: usize,
    /// Expansion terms kept.
    pub k: usize,
    pub passage_width: usize,
    pub passage_overlap: usize,
    /// Mass kept on the original query.
    pub alpha: f64,
    pub mu: f64,
    pub field: Field,
}

impl Default for PrfConfig {
    fn default() -> Self {
        PrfConfig {
            m: 10,
            k: 50,
            passage_width: 75,
            passage_overlap: 25,
            alpha: 0.5,
            mu: 1250.0,
            field: Field::Body,
        }
    }
}

impl PrfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("prf m and k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "prf alpha {} outside [0,1]",
                self.alpha
            )));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidConfig("prf mu must be > 0".into()));
        }
        if self.passage_width <= self.passage_overlap {
            return Err(Error::InvalidConfig(
                "passage width must exceed overlap".into(),
            ));
        }
        Ok(())
    }
}

/// Result of expansion; `expanded` is false when no feedback passage
/// matched and the original query came back unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub query: WeightedQuery,
    pub expanded: bool,
}

/// Relevance-model term weights from feedback passages.
///
/// Each passage is `(tokens, log P(q|p))`. Weights are
/// `sum_p P(w|p) * P(q|p)` over all passages, truncated to the `k`
/// heaviest terms (ties by term) and normalized.
pub fn relevance_model<T: AsRef<str>>(passages: &[(&[T], f64)], k: usize) -> Vec<(String, f64)> {
    let Some(max_log) = passages
        .iter()
        .filter(|(t, _)| !t.is_empty())
        .map(|(_, s)| *s)
        .max_by(f64::total_cmp)
    else {
        return Vec::new();
    };
    let mut weights: HashMap<&str, f64> = HashMap::new();
    for (tokens, log_score) in passages {
        if tokens.is_empty() {
            continue;
        }
        // Shifting by the max keeps exp() finite; the factor cancels on normalization.
        let p_q = (log_score - max_log).exp();
        let inv_len = 1.0 / tokens.len() as f64;
        for t in tokens.iter() {
            *weights.entry(t.as_ref()).or_default() += inv_len * p_q;
        }
    }
    let mut ranked: Vec<(String, f64)> = weights
        .into_iter()
        .map(|(t, w)| (t.to_string(), w))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    let total: f64 = ranked.iter().map(|(_, w)| w).sum();
    if total > 0.0 {
        for (_, w) in &mut ranked {
            *w /= total;
        }
    }
    ranked
}

/// Expands `query` from the top `m` passages of `scope` in `index`,
/// ranked by passage query likelihood.
pub fn rm1_expand(
    query: &[String],
    index: &InvertedIndex,
    config: &PrfConfig,
    scope: Scope<'_>,
) -> Result<Expansion> {
    config.validate()?;
    let original = WeightedQuery::from_tokens(query)?;
    let unexpanded = || Expansion {
        query: original.clone(),
        expanded: false,
    };
    let fi = index.field(config.field);
    let terms: Vec<u32> = query_term_ids(index, query)
        .into_iter()
        .flatten()
        .filter(|&t| fi.cf(t) > 0)
        .collect();
    if terms.is_empty() {
        return Ok(unexpanded());
    }
    let coll = fi.collection_len() as f64;

    // (score, doc, start, len)
    let mut scored: Vec<(f64, u32, usize, usize)> = Vec::new();
    for doc in scope.docs(index)? {
        let tokens = fi.tokens(doc);
        if tokens.is_empty() {
            continue;
        }
        for (start, len) in
            passage_spans(tokens.len(), config.passage_width, config.passage_overlap)?
        {
            let window = &tokens[start..start + len];
            let mut matched = false;
            let score: f64 = terms
                .iter()
                .map(|&t| {
                    let tf = window.iter().filter(|&&w| w == t).count();
                    matched |= tf > 0;
                    dirichlet_log(tf as f64, fi.cf(t) as f64, coll, len as f64, config.mu)
                })
                .sum();
            if matched {
                scored.push((score, doc, start, len));
            }
        }
    }
    if scored.is_empty() {
        return Ok(unexpanded());
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    scored.truncate(config.m);

    let passage_terms: Vec<Vec<&str>> = scored
        .iter()
        .map(|&(_, doc, start, len)| {
            fi.tokens(doc)[start..start + len]
                .iter()
                .map(|&t| index.vocab().term(t))
                .collect()
        })
        .collect();
    let feedback: Vec<(&[&str], f64)> = passage_terms
        .iter()
        .zip(&scored)
        .map(|(toks, s)| (toks.as_slice(), s.0))
        .collect();
    let expansion = relevance_model(&feedback, config.k);

    let mixed = original
        .terms()
        .iter()
        .map(|(t, w)| (t.clone(), config.alpha * w))
        .chain(
            expansion
                .into_iter()
                .map(|(t, w)| (t, (1.0 - config.alpha) * w)),
        );
    Ok(Expansion {
        query: WeightedQuery::new(mixed)?,
        expanded: true,
    })
}
