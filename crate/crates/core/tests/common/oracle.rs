//! Direct-definition reimplementations used as test oracles. They work on
//! raw token lists and never touch the index.

use std::collections::{BTreeMap, HashMap};

pub fn count(tokens: &[String], t: &str) -> usize {
    tokens.iter().filter(|x| *x == t).count()
}

fn dirichlet(tf: f64, cf: f64, coll: f64, dl: f64, mu: f64) -> f64 {
    ((tf + mu * cf / coll) / (dl + mu)).ln()
}

pub fn ql(query: &[String], docs: &[Vec<String>], d: usize, mu: f64) -> f64 {
    let coll: usize = docs.iter().map(Vec::len).sum();
    let mut s = 0.0;
    for t in query {
        let cf: usize = docs.iter().map(|doc| count(doc, t)).sum();
        if cf == 0 {
            continue;
        }
        s += dirichlet(count(&docs[d], t) as f64, cf as f64, coll as f64, docs[d].len() as f64, mu);
    }
    s
}

pub fn weighted_ql(query: &[(String, f64)], docs: &[Vec<String>], d: usize, mu: f64) -> f64 {
    let coll: usize = docs.iter().map(Vec::len).sum();
    let mut s = 0.0;
    for (t, w) in query {
        let cf: usize = docs.iter().map(|doc| count(doc, t)).sum();
        if cf == 0 {
            continue;
        }
        s += w * dirichlet(count(&docs[d], t) as f64, cf as f64, coll as f64, docs[d].len() as f64, mu);
    }
    s
}

pub fn bm25(query: &[String], docs: &[Vec<String>], d: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let dl = docs[d].len() as f64;
    let mut s = 0.0;
    for t in query {
        let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
        if df == 0.0 {
            continue;
        }
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        let tf = count(&docs[d], t) as f64;
        s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    s
}

/// Positions where `gram` occurs contiguously.
pub fn ordered_matches(doc: &[String], gram: &[String]) -> usize {
    if doc.len() < gram.len() {
        return 0;
    }
    (0..=doc.len() - gram.len())
        .filter(|&s| doc[s..s + gram.len()] == *gram)
        .count()
}

/// Scans left to right; from each gram token, takes the shortest window of
/// at most `width` tokens holding the whole gram as a multiset and resumes
/// after it.
pub fn unordered_matches(doc: &[String], gram: &[String], width: usize) -> usize {
    let mut found = 0;
    let mut s = 0;
    while s < doc.len() {
        if !gram.contains(&doc[s]) {
            s += 1;
            continue;
        }
        let mut need: HashMap<&String, usize> = HashMap::new();
        for g in gram {
            *need.entry(g).or_insert(0) += 1;
        }
        let mut left = gram.len();
        let mut end = None;
        for (e, tok) in doc.iter().enumerate().skip(s).take(width) {
            if let Some(n) = need.get_mut(tok) {
                if *n > 0 {
                    *n -= 1;
                    left -= 1;
                    if left == 0 {
                        end = Some(e);
                        break;
                    }
                }
            }
        }
        match end {
            Some(e) => {
                found += 1;
                s = e + 1;
            }
            None => s += 1,
        }
    }
    found
}

#[allow(clippy::too_many_arguments)]
pub fn sdm(
    query: &[String],
    docs: &[Vec<String>],
    d: usize,
    order: usize,
    lambdas: (f64, f64, f64),
    window_factor: usize,
    mu: f64,
) -> f64 {
    let coll: usize = docs.iter().map(Vec::len).sum();
    let dl = docs[d].len() as f64;
    let mut ordered = 0.0;
    let mut unordered = 0.0;
    for n in 2..=order {
        if query.len() < n {
            break;
        }
        for gram in query.windows(n) {
            let ocf: usize = docs.iter().map(|doc| ordered_matches(doc, gram)).sum();
            if ocf > 0 {
                let tf = ordered_matches(&docs[d], gram) as f64;
                ordered += dirichlet(tf, ocf as f64, coll as f64, dl, mu);
            }
            let w = window_factor * n;
            let ucf: usize = docs.iter().map(|doc| unordered_matches(doc, gram, w)).sum();
            if ucf > 0 {
                let tf = unordered_matches(&docs[d], gram, w) as f64;
                unordered += dirichlet(tf, ucf as f64, coll as f64, dl, mu);
            }
        }
    }
    lambdas.0 * ql(query, docs, d, mu) + lambdas.1 * ordered + lambdas.2 * unordered
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

/// Mean cosine of each in-vocabulary query vector with the normalized
/// centroid of the normalized document vectors; `None` when degenerate.
pub fn desm(
    query: &[String],
    field: &[String],
    qvecs: &HashMap<String, Vec<f64>>,
    dvecs: &HashMap<String, Vec<f64>>,
) -> Option<f64> {
    let dim = dvecs.values().next()?.len();
    let mut centroid = vec![0.0; dim];
    let mut any = false;
    for t in field {
        if let Some(u) = dvecs.get(t).and_then(|v| unit(v)) {
            for (c, x) in centroid.iter_mut().zip(u) {
                *c += x;
            }
            any = true;
        }
    }
    if !any {
        return None;
    }
    let centroid = unit(&centroid)?;
    let cosines: Vec<f64> = query
        .iter()
        .filter_map(|t| qvecs.get(t))
        .map(|v| match unit(v) {
            Some(u) => u.iter().zip(&centroid).map(|(a, b)| a * b).sum(),
            None => 0.0,
        })
        .collect();
    if cosines.is_empty() {
        return None;
    }
    Some(cosines.iter().sum::<f64>() / cosines.len() as f64)
}

pub type Judged = BTreeMap<String, BTreeMap<String, u32>>;
pub type Ranked = BTreeMap<String, Vec<String>>;

pub fn mrr(run: &Ranked, qrels: &Judged, threshold: u32) -> f64 {
    let mut total = 0.0;
    for (q, docs) in run {
        let grades = qrels.get(q);
        for (i, d) in docs.iter().enumerate() {
            if grades.and_then(|g| g.get(d)).copied().unwrap_or(0) >= threshold {
                total += 1.0 / (i + 1) as f64;
                break;
            }
        }
    }
    total / run.len() as f64
}

pub fn ndcg(run: &Ranked, qrels: &Judged, k: usize) -> f64 {
    let gain = |g: u32| 2f64.powi(g as i32) - 1.0;
    let mut total = 0.0;
    for (q, docs) in run {
        let empty = BTreeMap::new();
        let grades = qrels.get(q).unwrap_or(&empty);
        let mut dcg = 0.0;
        for (i, d) in docs.iter().take(k).enumerate() {
            dcg += gain(grades.get(d).copied().unwrap_or(0)) / ((i + 2) as f64).log2();
        }
        let mut ideal: Vec<u32> = grades.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let mut idcg = 0.0;
        for (i, &g) in ideal.iter().take(k).enumerate() {
            idcg += gain(g) / ((i + 2) as f64).log2();
        }
        if idcg > 0.0 {
            total += dcg / idcg;
        }
    }
    total / run.len() as f64
}

fn relevant_total(qrels: &Judged, q: &str, threshold: u32) -> usize {
    qrels
        .get(q)
        .map_or(0, |g| g.values().filter(|&&x| x >= threshold).count())
}

/// Mean over queries with at least one relevant judgment.
pub fn map(run: &Ranked, qrels: &Judged, threshold: u32) -> Option<f64> {
    let mut aps = Vec::new();
    for (q, docs) in run {
        let r = relevant_total(qrels, q, threshold);
        if r == 0 {
            continue;
        }
        let mut hits = 0;
        let mut sum = 0.0;
        for (i, d) in docs.iter().enumerate() {
            if qrels[q].get(d).copied().unwrap_or(0) >= threshold {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        aps.push(sum / r as f64);
    }
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

pub fn recall(run: &Ranked, qrels: &Judged, k: usize, threshold: u32) -> Option<f64> {
    let mut vals = Vec::new();
    for (q, docs) in run {
        let r = relevant_total(qrels, q, threshold);
        if r == 0 {
            continue;
        }
        let hit = docs
            .iter()
            .take(k)
            .filter(|d| qrels[q].get(*d).copied().unwrap_or(0) >= threshold)
            .count();
        vals.push(hit as f64 / r as f64);
    }
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
