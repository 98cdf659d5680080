use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, Field};
use crate::{Error, Result};

/// Term dictionary shared by all fields of an index.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocab {
    terms: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, u32>,
}

impl Vocab {
    fn intern(&mut self, term: &str) -> u32 {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.terms.push(term.to_string());
        self.ids.insert(term.to_string(), id);
        id
    }

    fn rebuild_lookup(&mut self) {
        self.ids = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub positions: Vec<u32>,
}

/// Postings and statistics for one field.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FieldIndex {
    /// Indexed by term id; each list sorted by doc.
    postings: Vec<Vec<Posting>>,
    cf: Vec<u64>,
    doc_len: Vec<u32>,
    collection_len: u64,
    /// Token ids of each document in order.
    forward: Vec<Vec<u32>>,
}

impl FieldIndex {
    pub fn postings(&self, term: u32) -> &[Posting] {
        self.postings
            .get(term as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn positions(&self, term: u32, doc: u32) -> &[u32] {
        let list = self.postings(term);
        match list.binary_search_by_key(&doc, |p| p.doc) {
            Ok(i) => &list[i].positions,
            Err(_) => &[],
        }
    }

    pub fn tf(&self, term: u32, doc: u32) -> u32 {
        self.positions(term, doc).len() as u32
    }

    pub fn df(&self, term: u32) -> u32 {
        self.postings(term).len() as u32
    }

    pub fn cf(&self, term: u32) -> u64 {
        self.cf.get(term as usize).copied().unwrap_or(0)
    }

    pub fn doc_len(&self, doc: u32) -> u32 {
        self.doc_len[doc as usize]
    }

    pub fn collection_len(&self) -> u64 {
        self.collection_len
    }

    pub fn tokens(&self, doc: u32) -> &[u32] {
        &self.forward[doc as usize]
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.doc_len.is_empty() {
            0.0
        } else {
            self.collection_len as f64 / self.doc_len.len() as f64
        }
    }
}

/// Positional multi-field inverted index. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    domains: Vec<String>,
    vocab: Vocab,
    fields: Vec<FieldIndex>,
    #[serde(skip)]
    doc_lookup: HashMap<String, u32>,
}

/// Partial postings for a contiguous range of documents.
fn partial_postings(forward: &[Vec<u32>], first_doc: u32) -> HashMap<u32, Vec<Posting>> {
    let mut out: HashMap<u32, Vec<Posting>> = HashMap::new();
    for (offset, tokens) in forward.iter().enumerate() {
        let doc = first_doc + offset as u32;
        for (pos, &term) in tokens.iter().enumerate() {
            let list = out.entry(term).or_default();
            match list.last_mut() {
                Some(p) if p.doc == doc => p.positions.push(pos as u32),
                _ => list.push(Posting {
                    doc,
                    positions: vec![pos as u32],
                }),
            }
        }
    }
    out
}

impl InvertedIndex {
    /// Builds the index using the global rayon pool.
    pub fn build(corpus: &Corpus) -> Result<Self> {
        Self::build_with_chunk(corpus, 256)
    }

    /// Builds with `threads` workers. The result does not depend on the
    /// thread count.
    pub fn build_with_threads(corpus: &Corpus, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| Self::build_with_chunk(corpus, 256))
    }

    fn build_with_chunk(corpus: &Corpus, chunk: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        // Term ids are assigned sequentially so they never depend on scheduling.
        let mut vocab = Vocab::default();
        let mut forwards: Vec<Vec<Vec<u32>>> = vec![Vec::with_capacity(corpus.len()); 3];
        for doc in corpus.iter() {
            for field in Field::ALL {
                let ids = doc.field(field).iter().map(|t| vocab.intern(t)).collect();
                forwards[field.index()].push(ids);
            }
        }

        let fields = forwards
            .into_iter()
            .map(|forward| {
                let partials: Vec<HashMap<u32, Vec<Posting>>> = forward
                    .par_chunks(chunk)
                    .enumerate()
                    .map(|(ci, docs)| partial_postings(docs, (ci * chunk) as u32))
                    .collect();
                let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); vocab.len()];
                for partial in partials {
                    let mut terms: Vec<_> = partial.into_iter().collect();
                    terms.sort_by_key(|(t, _)| *t);
                    for (term, list) in terms {
                        postings[term as usize].extend(list);
                    }
                }
                let cf = postings
                    .iter()
                    .map(|l| l.iter().map(|p| p.positions.len() as u64).sum())
                    .collect();
                let doc_len: Vec<u32> = forward.iter().map(|t| t.len() as u32).collect();
                let collection_len = doc_len.iter().map(|&l| l as u64).sum();
                FieldIndex {
                    postings,
                    cf,
                    doc_len,
                    collection_len,
                    forward,
                }
            })
            .collect();

        let doc_ids: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
        let doc_lookup = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
        Ok(InvertedIndex {
            doc_ids,
            domains: corpus.iter().map(|d| d.domain.clone()).collect(),
            vocab,
            fields,
            doc_lookup,
        })
    }

    pub fn field(&self, field: Field) -> &FieldIndex {
        &self.fields[field.index()]
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocab.id(term)
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn domain(&self, doc: u32) -> &str {
        &self.domains[doc as usize]
    }

    pub fn doc_index(&self, doc_id: &str) -> Result<u32> {
        self.doc_lookup
            .get(doc_id)
            .copied()
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut index: InvertedIndex = serde_json::from_reader(BufReader::new(file))?;
        index.vocab.rebuild_lookup();
        index.doc_lookup = index
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use proptest::prelude::*;

    fn body_corpus(bodies: &[&str]) -> Corpus {
        Corpus::from_documents(
            bodies
                .iter()
                .enumerate()
                .map(|(i, b)| Document::new(&format!("D{}", i + 1), "", "", b)),
        )
        .unwrap()
    }

    #[test]
    fn single_doc_stats() {
        let idx = InvertedIndex::build(&body_corpus(&["a b a"])).unwrap();
        let body = idx.field(Field::Body);
        let a = idx.term_id("a").unwrap();
        assert_eq!(body.cf(a), 2);
        assert_eq!(body.doc_len(0), 3);
        assert_eq!(body.positions(a, 0), &[0, 2]);
    }

    #[test]
    fn empty_body_and_shared_terms() {
        let idx = InvertedIndex::build(&body_corpus(&["t x", "", "t"])).unwrap();
        let body = idx.field(Field::Body);
        assert_eq!(body.doc_len(1), 0);
        let t = idx.term_id("t").unwrap();
        assert_eq!(body.df(t), 2);
        assert!(body.postings(t).iter().all(|p| p.doc != 1));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(InvertedIndex::build(&Corpus::new()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let idx = InvertedIndex::build(&body_corpus(&["a b", "b c"])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        let back = InvertedIndex::load(&path).unwrap();
        assert_eq!(back.doc_index("D2").unwrap(), 1);
        let b = back.term_id("b").unwrap();
        assert_eq!(back.field(Field::Body).df(b), 2);
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<(String, String, String)>> {
        let words = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h"]);
        let text = prop::collection::vec(words, 0..12).prop_map(|w| w.join(" "));
        prop::collection::vec((text.clone(), text.clone(), text), 1..100)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn statistics_match_brute_force(docs in arb_corpus(), threads in 1usize..4) {
            let corpus = Corpus::from_documents(docs.iter().enumerate().map(|(i, (u, t, b))| {
                Document::new(&format!("D{i}"), u, t, b)
            })).unwrap();
            let idx = InvertedIndex::build_with_chunk(&corpus, 7).unwrap();
            let other = InvertedIndex::build_with_threads(&corpus, threads).unwrap();
            for field in Field::ALL {
                let fi = idx.field(field);
                let total: u64 = corpus.iter().map(|d| d.field(field).len() as u64).sum();
                prop_assert_eq!(fi.collection_len(), total);
                for term in ["a", "b", "c", "d", "e", "f", "g", "h"] {
                    let Some(id) = idx.term_id(term) else {
                        prop_assert!(corpus.iter().all(|d| d.field(field).iter().all(|t| t != term)));
                        continue;
                    };
                    let mut cf = 0u64;
                    let mut df = 0u32;
                    for (di, doc) in corpus.iter().enumerate() {
                        let pos: Vec<u32> = doc.field(field).iter().enumerate()
                            .filter(|(_, t)| *t == term).map(|(p, _)| p as u32).collect();
                        cf += pos.len() as u64;
                        df += u32::from(!pos.is_empty());
                        prop_assert_eq!(fi.positions(id, di as u32), pos.as_slice());
                        prop_assert_eq!(fi.doc_len(di as u32) as usize, doc.field(field).len());
                    }
                    prop_assert_eq!(fi.cf(id), cf);
                    prop_assert_eq!(fi.df(id), df);
                    prop_assert_eq!(other.field(field).postings(id), fi.postings(id));
                }
            }
        }
    }
}
