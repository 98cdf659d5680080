use std::fmt;
use std::str::FromStr;

use super::{EmbeddingPair, Side};
use crate::Error;

/// Query-side and document-side matrix choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesmVariant {
    InIn,
    InOut,
    OutIn,
    OutOut,
}

impl DesmVariant {
    pub const ALL: [DesmVariant; 4] = [
        DesmVariant::InIn,
        DesmVariant::InOut,
        DesmVariant::OutIn,
        DesmVariant::OutOut,
    ];

    pub fn sides(self) -> (Side, Side) {
        match self {
            DesmVariant::InIn => (Side::In, Side::In),
            DesmVariant::InOut => (Side::In, Side::Out),
            DesmVariant::OutIn => (Side::Out, Side::In),
            DesmVariant::OutOut => (Side::Out, Side::Out),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DesmVariant::InIn => "INxIN",
            DesmVariant::InOut => "INxOUT",
            DesmVariant::OutIn => "OUTxIN",
            DesmVariant::OutOut => "OUTxOUT",
        }
    }
}

impl fmt::Display for DesmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DesmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        DesmVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s) || format!("{v:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown DESM variant {s:?}")))
    }
}

/// A DESM similarity; `degenerate` marks an empty query or document side
/// (value 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesmScore {
    pub value: f64,
    pub degenerate: bool,
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

/// Mean cosine between in-vocabulary query vectors and the normalized
/// centroid of the normalized document vectors. Unknown terms and zero
/// vectors are skipped.
pub fn desm_score<S: AsRef<str>>(
    query: &[S],
    field: &[S],
    emb: &EmbeddingPair,
    variant: DesmVariant,
) -> DesmScore {
    let degenerate = DesmScore {
        value: 0.0,
        degenerate: true,
    };
    let (q_side, d_side) = variant.sides();
    let dim = emb.dim();
    let mut centroid = vec![0.0; dim];
    let mut doc_terms = 0usize;
    for t in field {
        if let Some(v) = emb.get(d_side, t.as_ref()).and_then(normalized) {
            centroid.iter_mut().zip(&v).for_each(|(c, x)| *c += x);
            doc_terms += 1;
        }
    }
    if doc_terms == 0 {
        return degenerate;
    }
    centroid.iter_mut().for_each(|c| *c /= doc_terms as f64);
    let Some(centroid) = normalized(&centroid) else {
        return degenerate;
    };
    let mut total = 0.0;
    let mut query_terms = 0usize;
    for t in query {
        if let Some(v) = emb.get(q_side, t.as_ref()).and_then(normalized) {
            total += v.iter().zip(&centroid).map(|(a, b)| a * b).sum::<f64>();
            query_terms += 1;
        }
    }
    if query_terms == 0 {
        return degenerate;
    }
    DesmScore {
        value: (total / query_terms as f64).clamp(-1.0, 1.0),
        degenerate: false,
    }
}
