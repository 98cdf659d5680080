//! Collections, queries, judgments and the positional index.

mod index;
pub(crate) mod text;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use index::{FieldIndex, InvertedIndex, Posting, Vocab};
pub use text::{extract_domain, segment_passages, tokenize, tokenize_url, Passage};

/// The three document fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    Url,
    Title,
    Body,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Url, Field::Title, Field::Body];

    pub fn index(self) -> usize {
        match self {
            Field::Url => 0,
            Field::Title => 1,
            Field::Body => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Url => "url",
            Field::Title => "title",
            Field::Body => "body",
        }
    }

    pub fn parse(s: &str) -> Option<Field> {
        match s {
            "url" => Some(Field::Url),
            "title" => Some(Field::Title),
            "body" => Some(Field::Body),
            _ => None,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A tokenized multi-field document.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub raw_url: String,
    pub domain: String,
    pub url_tokens: Vec<String>,
    pub title_tokens: Vec<String>,
    pub body_tokens: Vec<String>,
}

impl Document {
    pub fn new(doc_id: &str, url: &str, title: &str, body: &str) -> Self {
        Document {
            doc_id: doc_id.to_string(),
            raw_url: url.to_string(),
            domain: extract_domain(url),
            url_tokens: tokenize_url(url),
            title_tokens: tokenize(title),
            body_tokens: tokenize(body),
        }
    }

    pub fn field(&self, field: Field) -> &[String] {
        match field {
            Field::Url => &self.url_tokens,
            Field::Title => &self.title_tokens,
            Field::Body => &self.body_tokens,
        }
    }

    pub fn field_mut(&mut self, field: Field) -> &mut Vec<String> {
        match field {
            Field::Url => &mut self.url_tokens,
            Field::Title => &mut self.title_tokens,
            Field::Body => &mut self.body_tokens,
        }
    }
}

/// An ordered, id-unique collection of documents.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    lookup: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self> {
        let mut corpus = Corpus::new();
        for doc in docs {
            corpus.push(doc)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, doc: Document) -> Result<()> {
        if doc.doc_id.is_empty() {
            return Err(Error::InvalidConfig("empty document id".into()));
        }
        if self.lookup.contains_key(&doc.doc_id) {
            return Err(Error::DuplicateDoc(doc.doc_id));
        }
        self.lookup.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.lookup.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.iter()
    }
}

/// Reads a `doc_id \t url \t title \t body` stream.
pub fn ingest_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<corpus stream>", e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(line_no, "expected 4 fields"));
        }
        if cols[0].is_empty() {
            return Err(Error::parse(line_no, "empty document id"));
        }
        corpus.push(Document::new(cols[0], cols[1], cols[2], cols[3]))?;
    }
    Ok(corpus)
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_corpus(BufReader::new(file))
}

/// Writes the corpus back as TSV with tokenized title and body text.
pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    for d in corpus.iter() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            d.doc_id,
            d.raw_url,
            d.title_tokens.join(" "),
            d.body_tokens.join(" ")
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Query {
    pub fn new(query_id: &str, text: &str) -> Self {
        Query {
            query_id: query_id.to_string(),
            text: text.to_string(),
            tokens: tokenize(text),
        }
    }

    /// A query with no tokens after tokenization.
    pub fn is_degenerate(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Reads `query_id \t text` lines. Query ids must be unique.
pub fn ingest_queries<R: BufRead>(reader: R) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<query stream>", e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (qid, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(line_no, "expected 2 fields"))?;
        if qid.is_empty() {
            return Err(Error::parse(line_no, "empty query id"));
        }
        if !seen.insert(qid.to_string()) {
            return Err(Error::parse(line_no, format!("duplicate query id {qid}")));
        }
        out.push(Query::new(qid, text));
    }
    Ok(out)
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_queries(BufReader::new(file))
}

pub fn write_queries(queries: &[Query], path: &Path) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&q.query_id);
        out.push('\t');
        out.push_str(&q.text);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Graded judgments: query id -> doc id -> grade.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) {
        self.judgments
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade);
    }

    /// Grade of a pair; 0 when unjudged.
    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Number of judged docs for the query with grade at least `threshold`.
    pub fn num_relevant(&self, query_id: &str, threshold: u32) -> usize {
        self.for_query(query_id)
            .map(|m| m.values().filter(|&&g| g >= threshold).count())
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, m)| m.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }
}

/// Parses TREC qrels: `qid iter docid grade`.
pub fn ingest_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<qrels stream>", e))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(Error::parse(line_no, "expected 4 fields"));
        }
        let grade: i64 = cols[3]
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad grade {:?}", cols[3])))?;
        if grade < 0 {
            return Err(Error::parse(line_no, format!("negative grade {grade}")));
        }
        qrels.insert(cols[0], cols[2], grade as u32);
    }
    Ok(qrels)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_qrels(BufReader::new(file))
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for (q, d, g) in qrels.iter() {
        writeln!(buf, "{q} 0 {d} {g}").expect("write to vec");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Candidate lists share the TREC run representation.
pub type CandidateSet = crate::eval::Run;
