//! The multi-field Duet ranker.
//!
//! Every document field gets its own, unshared Duet: a local path over the
//! query/field exact-match matrix and a distributed path over frozen word
//! embeddings. Each emits a `hidden`-wide field vector; the vectors are
//! concatenated in a fixed field order and an MLP head maps them to a
//! relevance score.

mod train;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Field};
use crate::embed::{EmbeddingPair, Side};
use crate::tensor::{read_checkpoint, write_checkpoint, Checkpoint, Params, Tape, Tensor, Var};
use crate::{Error, Result};

pub use train::{
    ensemble_score, generate_pretrain_triple, pairwise_accuracy, sample_negative,
    supervised_triples, train_duet, TrainConfig, TrainReport, Triple,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuetConfig {
    pub max_query_terms: usize,
    pub max_url_terms: usize,
    pub max_title_terms: usize,
    pub max_body_terms: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    /// Probability that a field's local path is switched off for a sample.
    pub local_dropout_prob: f64,
    pub fields: Vec<Field>,
    pub kernel_width: usize,
    pub seed: u64,
}

impl Default for DuetConfig {
    fn default() -> Self {
        DuetConfig {
            max_query_terms: 20,
            max_url_terms: 20,
            max_title_terms: 20,
            max_body_terms: 2000,
            hidden: 300,
            dropout_rate: 0.5,
            local_dropout_prob: 0.5,
            fields: Field::ALL.to_vec(),
            kernel_width: 3,
            seed: 1,
        }
    }
}

impl DuetConfig {
    pub fn cap(&self, field: Field) -> usize {
        match field {
            Field::Url => self.max_url_terms,
            Field::Title => self.max_title_terms,
            Field::Body => self.max_body_terms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [
            self.max_query_terms,
            self.max_url_terms,
            self.max_title_terms,
            self.max_body_terms,
            self.hidden,
            self.kernel_width,
        ];
        if lens.contains(&0) {
            return Err(Error::InvalidConfig(
                "duet lengths and widths must be >= 1".into(),
            ));
        }
        for p in [self.dropout_rate, self.local_dropout_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "probability {p} outside [0,1]"
                )));
            }
        }
        if self.dropout_rate >= 1.0 {
            return Err(Error::InvalidConfig("dropout rate must be < 1".into()));
        }
        if self.fields.is_empty() {
            return Err(Error::InvalidConfig("duet needs at least one field".into()));
        }
        let mut seen = self.fields.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.fields.len() {
            return Err(Error::InvalidConfig("duet fields must be distinct".into()));
        }
        Ok(())
    }

    /// Position of `field` in the aggregation order.
    pub fn field_slot(&self, field: Field) -> Option<usize> {
        self.fields.iter().position(|&f| f == field)
    }
}

/// Structured dropout decision for one training sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredMask {
    /// Per configured field, whether its local path contributes.
    pub local_on: Vec<bool>,
    /// Per configured field, whether the field model contributes at all.
    pub active: Vec<bool>,
}

impl StructuredMask {
    pub fn full(num_fields: usize) -> Self {
        StructuredMask {
            local_on: vec![true; num_fields],
            active: vec![true; num_fields],
        }
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn validate(&self, num_fields: usize) -> Result<()> {
        if self.local_on.len() != num_fields || self.active.len() != num_fields {
            return Err(Error::InvalidConfig(format!(
                "mask covers {} fields, model has {num_fields}",
                self.active.len()
            )));
        }
        if self.num_active() == 0 {
            return Err(Error::InvalidConfig("mask has no active field".into()));
        }
        Ok(())
    }
}

/// Draws local-path switches independently and the active field set
/// uniformly from the non-empty subsets.
pub fn sample_structured_mask<R: Rng + ?Sized>(config: &DuetConfig, rng: &mut R) -> StructuredMask {
    let n = config.fields.len();
    let local_on = (0..n)
        .map(|_| !rng.gen_bool(config.local_dropout_prob))
        .collect();
    let subset: u64 = rng.gen_range(1..(1u64 << n));
    let active = (0..n).map(|i| subset & (1 << i) != 0).collect();
    StructuredMask { local_on, active }
}

/// `[max_q, max_f]` indicator of equal query/field tokens, zero padded.
/// Inputs longer than the caps are truncated.
pub fn exact_match_matrix<S: AsRef<str>>(
    query: &[S],
    field: &[S],
    max_q: usize,
    max_f: usize,
) -> Tensor {
    let mut data = vec![0.0; max_q * max_f];
    for (i, q) in query.iter().take(max_q).enumerate() {
        for (j, f) in field.iter().take(max_f).enumerate() {
            if q.as_ref() == f.as_ref() {
                data[i * max_f + j] = 1.0;
            }
        }
    }
    Tensor::matrix(max_q, max_f, data).expect("consistent shape")
}

/// Match matrix laid out as a sequence over field positions:
/// `[max_f, max_q]`, the input of the local convolution.
fn local_input<S: AsRef<str>>(query: &[S], field: &[S], max_q: usize, max_f: usize) -> Tensor {
    let mut data = vec![0.0; max_f * max_q];
    for (i, q) in query.iter().take(max_q).enumerate() {
        for (j, f) in field.iter().take(max_f).enumerate() {
            if q.as_ref() == f.as_ref() {
                data[j * max_q + i] = 1.0;
            }
        }
    }
    Tensor::matrix(max_f, max_q, data).expect("consistent shape")
}

/// Frozen input representation: the IN matrix of an embedding pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTable {
    terms: Vec<String>,
    lookup: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl WordTable {
    pub fn new(terms: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != terms.len() * dim || dim == 0 {
            return Err(Error::shape(
                "word table",
                format!("{} terms x {dim}", terms.len()),
            ));
        }
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(WordTable {
            terms,
            lookup,
            dim,
            data,
        })
    }

    pub fn from_pair(pair: &EmbeddingPair) -> Self {
        WordTable::new(
            pair.terms().to_vec(),
            pair.dim(),
            pair.matrix(Side::In).to_vec(),
        )
        .expect("embedding pair is consistent")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `[cap, dim]` rows for the first `cap` tokens; unknown and padding
    /// positions are zero.
    fn rows<S: AsRef<str>>(&self, tokens: &[S], cap: usize) -> Tensor {
        let mut data = vec![0.0; cap * self.dim];
        for (r, t) in tokens.iter().take(cap).enumerate() {
            if let Some(&id) = self.lookup.get(t.as_ref()) {
                data[r * self.dim..(r + 1) * self.dim]
                    .copy_from_slice(&self.data[id * self.dim..(id + 1) * self.dim]);
            }
        }
        Tensor::matrix(cap, self.dim, data).expect("consistent shape")
    }
}

/// Train mode samples dropout; infer mode is deterministic with the full mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

// Parameter layout: PER_FIELD tensors per configured field, then the head.
const PER_FIELD: usize = 14;
const LOCAL_CONV: usize = 0;
const LOCAL_FC1: usize = 2;
const LOCAL_FC2: usize = 4;
const DIST_QCONV: usize = 6;
const DIST_FCONV: usize = 8;
const DIST_FC1: usize = 10;
const DIST_FC2: usize = 12;

fn glorot<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-limit..limit)).collect(),
    )
    .expect("consistent shape")
}

#[derive(Debug, Clone)]
pub struct DuetModel {
    config: DuetConfig,
    params: Params,
    words: Arc<WordTable>,
}

impl DuetModel {
    /// Glorot-initialized model seeded by `config.seed`.
    pub fn new(config: DuetConfig, words: Arc<WordTable>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (h, w, q, d) = (
            config.hidden,
            config.kernel_width,
            config.max_query_terms,
            words.dim(),
        );
        let mut params = Params::new();
        for &f in &config.fields {
            let mut add = |name: &str, t: Tensor| {
                params.add(format!("{f}.{name}"), t);
            };
            add("local.conv", glorot(&mut rng, &[w, q, h], w * q, h));
            add("local.conv_b", Tensor::zeros(&[1, h]));
            add("local.fc1", glorot(&mut rng, &[h, h], h, h));
            add("local.fc1_b", Tensor::zeros(&[1, h]));
            add("local.fc2", glorot(&mut rng, &[h, h], h, h));
            add("local.fc2_b", Tensor::zeros(&[1, h]));
            add("dist.qconv", glorot(&mut rng, &[w, d, h], w * d, h));
            add("dist.qconv_b", Tensor::zeros(&[1, h]));
            add("dist.fconv", glorot(&mut rng, &[w, d, h], w * d, h));
            add("dist.fconv_b", Tensor::zeros(&[1, h]));
            add("dist.fc1", glorot(&mut rng, &[h, h], h, h));
            add("dist.fc1_b", Tensor::zeros(&[1, h]));
            add("dist.fc2", glorot(&mut rng, &[h, h], h, h));
            add("dist.fc2_b", Tensor::zeros(&[1, h]));
        }
        let nf = config.fields.len();
        params.add("head.fc1", glorot(&mut rng, &[nf * h, h], nf * h, h));
        params.add("head.fc1_b", Tensor::zeros(&[1, h]));
        params.add("head.fc2", glorot(&mut rng, &[h, 1], h, 1));
        params.add("head.fc2_b", Tensor::zeros(&[1, 1]));
        Ok(DuetModel {
            config,
            params,
            words,
        })
    }

    pub fn config(&self) -> &DuetConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn words(&self) -> &Arc<WordTable> {
        &self.words
    }

    /// Registers every parameter on the tape, in layout order.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Vec<Var> {
        self.params
            .tensors()
            .iter()
            .map(|t| tape.param(t))
            .collect()
    }

    fn dense(tape: &mut Tape<'_>, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }

    fn dropout<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if mode == Mode::Infer || self.config.dropout_rate == 0.0 {
            return Ok(x);
        }
        let keep_p = 1.0 - self.config.dropout_rate;
        let keep: Vec<bool> = (0..tape.value(x).len())
            .map(|_| rng.gen_bool(keep_p))
            .collect();
        tape.dropout(x, self.config.dropout_rate, &keep)
    }

    fn conv_pool(tape: &mut Tape<'_>, input: Tensor, kernel: Var, bias: Var) -> Result<Var> {
        let x = tape.constant(input);
        let c = tape.conv1d(x, kernel)?;
        let c = tape.add_bias(c, bias)?;
        let c = tape.relu(c);
        tape.global_max_pool(c)
    }

    /// One field's Duet on the tape, returning its `[1, hidden]` vector.
    #[allow(clippy::too_many_arguments)]
    pub fn field_forward<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        slot: usize,
        query: &[S],
        field_tokens: &[S],
        local_on: bool,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let field = self.config.fields[slot];
        let cap = self.config.cap(field);
        let max_q = self.config.max_query_terms;
        let p = |k: usize| vars[slot * PER_FIELD + k];

        // distributed path
        let q = Self::conv_pool(
            tape,
            self.words.rows(query, max_q),
            p(DIST_QCONV),
            p(DIST_QCONV + 1),
        )?;
        let f = Self::conv_pool(
            tape,
            self.words.rows(field_tokens, cap),
            p(DIST_FCONV),
            p(DIST_FCONV + 1),
        )?;
        let joint = tape.hadamard(q, f)?;
        let h = Self::dense(tape, joint, p(DIST_FC1), p(DIST_FC1 + 1))?;
        let h = tape.relu(h);
        let h = self.dropout(tape, h, mode, rng)?;
        let dist = Self::dense(tape, h, p(DIST_FC2), p(DIST_FC2 + 1))?;

        if mode == Mode::Train && !local_on {
            return Ok(dist);
        }
        let m = local_input(query, field_tokens, max_q, cap);
        let l = Self::conv_pool(tape, m, p(LOCAL_CONV), p(LOCAL_CONV + 1))?;
        let l = Self::dense(tape, l, p(LOCAL_FC1), p(LOCAL_FC1 + 1))?;
        let l = tape.relu(l);
        let l = self.dropout(tape, l, mode, rng)?;
        let local = Self::dense(tape, l, p(LOCAL_FC2), p(LOCAL_FC2 + 1))?;
        tape.add(local, dist)
    }

    /// Full forward pass to a `[1, 1]` score. Infer mode ignores `mask`.
    pub fn forward<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        vars: &[Var],
        query: &[S],
        doc: &Document,
        mask: &StructuredMask,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let nf = self.config.fields.len();
        let full = StructuredMask::full(nf);
        let mask = match mode {
            Mode::Train => {
                mask.validate(nf)?;
                mask
            }
            Mode::Infer => &full,
        };
        let h = self.config.hidden;
        let mut parts = Vec::with_capacity(nf);
        for (slot, &field) in self.config.fields.iter().enumerate() {
            if !mask.active[slot] {
                parts.push(tape.constant(Tensor::zeros(&[1, h])));
                continue;
            }
            let tokens: Vec<&str> = doc.field(field).iter().map(String::as_str).collect();
            let query: Vec<&str> = query.iter().map(AsRef::as_ref).collect();
            parts.push(self.field_forward(
                tape,
                vars,
                slot,
                &query,
                &tokens,
                mask.local_on[slot],
                mode,
                rng,
            )?);
        }
        let head = nf * PER_FIELD;
        let x = tape.concat(&parts)?;
        let x = Self::dense(tape, x, vars[head], vars[head + 1])?;
        let x = tape.relu(x);
        let x = self.dropout(tape, x, mode, rng)?;
        Self::dense(tape, x, vars[head + 2], vars[head + 3])
    }

    /// Inference score with the full mask and no dropout.
    pub fn score<S: AsRef<str>>(&self, query: &[S], doc: &Document) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nf = self.config.fields.len();
        let s = self.forward(
            &mut tape,
            &vars,
            query,
            doc,
            &StructuredMask::full(nf),
            Mode::Infer,
            &mut rng,
        )?;
        Ok(tape.value(s).item())
    }

    /// Train-mode score under an explicit mask and dropout stream.
    pub fn score_train<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        query: &[S],
        doc: &Document,
        mask: &StructuredMask,
        rng: &mut R,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let s = self.forward(&mut tape, &vars, query, doc, mask, Mode::Train, rng)?;
        Ok(tape.value(s).item())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::default();
        ckpt.meta.insert("kind".into(), "duetmf".into());
        ckpt.meta
            .insert("config".into(), serde_json::to_string(&self.config)?);
        ckpt.meta.insert("vocab".into(), self.words.terms.join(" "));
        ckpt.params = self.params.clone();
        ckpt.params.add(
            "words",
            Tensor::matrix(
                self.words.terms.len(),
                self.words.dim,
                self.words.data.clone(),
            )?,
        );
        Ok(ckpt)
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        if ckpt.meta("kind")? != "duetmf" {
            return Err(Error::Checkpoint("not a duetmf checkpoint".into()));
        }
        let config: DuetConfig = serde_json::from_str(ckpt.meta("config")?)?;
        let terms: Vec<String> = ckpt
            .meta("vocab")?
            .split_whitespace()
            .map(String::from)
            .collect();
        let words_tensor = ckpt
            .params
            .by_name("words")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("missing words table".into()))?;
        let words = WordTable::new(terms, words_tensor.cols(), words_tensor.into_data())?;
        let mut model = DuetModel::new(config, Arc::new(words))?;
        for (name, slot) in model.params.names().to_vec().iter().zip(0..) {
            let t = ckpt
                .params
                .by_name_mut(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != model.params.get(slot).shape() {
                return Err(Error::Checkpoint(format!("tensor {name} has wrong shape")));
            }
            *model.params.get_mut(slot) = std::mem::replace(t, Tensor::zeros(&[0]));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(&self.to_checkpoint()?, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(read_checkpoint(path)?)
    }
}
