//! Dual IN/OUT word embeddings and DESM similarity.

mod desm;
mod skipgram;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use desm::{desm_score, DesmScore, DesmVariant};
pub use skipgram::{train_skipgram, SkipGramConfig, SkipGramReport};

/// Which matrix of an [`EmbeddingPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Centre-word vectors.
    In,
    /// Context-word vectors.
    Out,
}

/// Vocabulary with parallel IN and OUT matrices, both `|V| x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    terms: Vec<String>,
    lookup: HashMap<String, usize>,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl EmbeddingPair {
    pub fn new(terms: Vec<String>, dim: usize, input: Vec<f64>, output: Vec<f64>) -> Result<Self> {
        if input.len() != terms.len() * dim || output.len() != input.len() {
            return Err(Error::shape(
                "embeddings",
                format!(
                    "{} terms x {dim} needs {} values, got IN {} OUT {}",
                    terms.len(),
                    terms.len() * dim,
                    input.len(),
                    output.len()
                ),
            ));
        }
        let mut lookup = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if lookup.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate embedding term {t}"
                )));
            }
        }
        Ok(EmbeddingPair {
            terms,
            lookup,
            dim,
            input,
            output,
        })
    }

    /// Uniform `(-0.5/dim, 0.5/dim)` initialization of both matrices.
    pub fn random(terms: Vec<String>, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = terms.len() * dim;
        let half = 0.5 / dim as f64;
        let input = (0..n).map(|_| rng.gen_range(-half..half)).collect();
        let output = (0..n).map(|_| rng.gen_range(-half..half)).collect();
        Self::new(terms, dim, input, output)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn matrix(&self, side: Side) -> &[f64] {
        match side {
            Side::In => &self.input,
            Side::Out => &self.output,
        }
    }

    pub(crate) fn matrix_mut(&mut self, side: Side) -> &mut [f64] {
        match side {
            Side::In => &mut self.input,
            Side::Out => &mut self.output,
        }
    }

    pub fn vector(&self, side: Side, id: usize) -> &[f64] {
        &self.matrix(side)[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get(&self, side: Side, term: &str) -> Option<&[f64]> {
        self.id(term).map(|i| self.vector(side, i))
    }

    /// Copy with every vector multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.input.iter_mut().for_each(|v| *v *= c);
        out.output.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Copy whose OUT matrix equals its IN matrix.
    pub fn with_out_as_in(&self) -> Self {
        let mut out = self.clone();
        out.output = out.input.clone();
        out
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Paths of the `.in.vec` / `.out.vec` pair for a prefix.
pub fn embedding_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    (
        with_suffix(prefix, ".in.vec"),
        with_suffix(prefix, ".out.vec"),
    )
}

fn matrix_text(terms: &[String], dim: usize, values: &[f64]) -> String {
    let mut out = format!("{} {}\n", terms.len(), dim);
    for (i, t) in terms.iter().enumerate() {
        out.push_str(t);
        for v in &values[i * dim..(i + 1) * dim] {
            let _ = write!(out, " {v:.8e}");
        }
        out.push('\n');
    }
    out
}

fn parse_matrix(text: &str) -> Result<(Vec<String>, usize, Vec<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|v| v.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(1, format!("malformed header {header:?}")))?;
    let &[count, dim] = nums.as_slice() else {
        return Err(Error::parse(1, format!("malformed header {header:?}")));
    };
    let mut terms = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count * dim);
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let term = parts.next().unwrap_or_default().to_string();
        let row: Vec<f64> = parts
            .map(|v| v.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(i + 1, format!("bad number in row for term {term:?}")))?;
        if row.len() != dim {
            return Err(Error::parse(
                i + 1,
                format!(
                    "row for term {term:?} has {} values, expected {dim}",
                    row.len()
                ),
            ));
        }
        terms.push(term);
        values.extend(row);
    }
    if terms.len() != count {
        return Err(Error::parse(
            1,
            format!("header declares {count} rows, found {}", terms.len()),
        ));
    }
    Ok((terms, dim, values))
}

/// Writes `<prefix>.in.vec` and `<prefix>.out.vec`.
pub fn save_embeddings(pair: &EmbeddingPair, prefix: &Path) -> Result<()> {
    let (in_path, out_path) = embedding_paths(prefix);
    std::fs::write(&in_path, matrix_text(&pair.terms, pair.dim, &pair.input))
        .map_err(|e| Error::io(&in_path, e))?;
    std::fs::write(&out_path, matrix_text(&pair.terms, pair.dim, &pair.output))
        .map_err(|e| Error::io(&out_path, e))
}

pub fn load_embeddings(prefix: &Path) -> Result<EmbeddingPair> {
    let (in_path, out_path) = embedding_paths(prefix);
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let (terms, dim, input) = parse_matrix(&read(&in_path)?)?;
    let (out_terms, out_dim, output) = parse_matrix(&read(&out_path)?)?;
    if out_terms != terms || out_dim != dim {
        return Err(Error::InvalidConfig(
            "IN and OUT embedding files disagree on vocabulary or dimension".into(),
        ));
    }
    EmbeddingPair::new(terms, dim, input, output)
}
