//! Command-line front end: argument parsing into a [`CommandPlan`] and its
//! execution.

pub mod pipeline;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use crate::corpus::{read_corpus, read_qrels, read_queries, InvertedIndex};
use crate::duet::{generate_pretrain_triple, train_duet, DuetModel, WordTable};
use crate::embed::{embedding_paths, load_embeddings, train_skipgram};
use crate::eval::{evaluate, format_report, parse_metrics, read_run, write_run, MetricConfig};
use crate::lexical::{Ranker, Scope};
use crate::ltr::{
    extract_feature_set, read_features, rerank, train_ltr, write_features, DomainStats,
    FeatureSchema, LtrModel,
};
use crate::synth::{generate, SynthConfig};

use pipeline::{embedding_streams, fit_duet, save_embeddings_atomic, score_duet_run, write_atomic};
pub use pipeline::{run_all, PipelineConfig, PipelineOutput, Stage};

#[derive(Parser, Debug)]
#[command(
    name = "duetmf",
    version,
    about = "Multi-field neural ranking and learning-to-rank experiments"
)]
struct Cli {
    /// key=value settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra key=value setting, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Build and save the inverted index of a corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank with a lexical model (ql, bm25, bm25[k1,b], sdm, prf).
    Rank {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "ql")]
        ranker: String,
        /// Index supplying expansion passages for prf.
        #[arg(long)]
        aux_index: Option<PathBuf>,
        /// Rerank these candidates instead of the whole collection.
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Train skip-gram IN/OUT embeddings; writes PREFIX.in.vec and PREFIX.out.vec.
    TrainEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain DuetMF on URL/title pseudo-queries.
    PretrainDuet {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train DuetMF on judged queries, optionally from a checkpoint.
    TrainDuet {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long, required_unless_present = "init")]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        init: Option<PathBuf>,
        /// Train one model per seed ("1..8" or "1,4,7"), written as
        /// `<out stem>.seed<N>.<ext>`.
        #[arg(long, value_parser = parse_seeds, conflicts_with = "init")]
        seeds: Option<SeedList>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidates with one DuetMF model or the mean of several.
    ScoreDuet {
        #[arg(long, num_args = 1.., required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "score-duet")]
        run_id: String,
    },
    /// Write the feature TSV for every candidate.
    ExtractFeatures {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// NAME=RUNFILE per feature run, in schema order.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        /// Query ids (one per line) whose judgments feed domain quality.
        #[arg(long)]
        train_queries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the LTR network on a feature TSV.
    TrainLtr {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerank candidates with a trained LTR model.
    Rerank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "rerank")]
        run_id: String,
    },
    /// Print metrics of a run, one `metric<TAB>value` row each.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value = "mrr,ndcg@10,map,recall@100")]
        metrics: String,
        #[arg(long, default_value_t = 1)]
        threshold: u32,
    },
    /// Generate a synthetic collection with planted relevance.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        /// Body-only passages.
        #[arg(long)]
        passages: bool,
    },
    /// Full pipeline: index, embeddings, QL candidates, DuetMF, LTR, eval.
    RunAll {
        #[arg(long)]
        data: PathBuf,
        /// Output directory, default DATA/run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A parsed invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandPlan {
    pub name: &'static str,
    pub command: Command,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config_file: Option<PathBuf>,
    /// Flag-level settings; they win over the config file.
    pub overrides: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub stages: Vec<Stage>,
}

/// Model seeds for an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedList(pub Vec<u64>);

fn parse_seeds(spec: &str) -> Result<SeedList, String> {
    let bad = || format!("bad seed list {spec:?}");
    let seeds: Vec<u64> = match spec.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            (a..=b).collect()
        }
        None => spec
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?,
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(SeedList(seeds))
}

/// Checkpoint path of one ensemble member.
pub fn member_path(out: &Path, seed: u64) -> PathBuf {
    let stem = out.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match out.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    out.with_file_name(name)
}

fn run_path(spec: &str) -> PathBuf {
    PathBuf::from(spec.split_once('=').map_or(spec, |(_, p)| p))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Index { .. } => "index",
            Command::Rank { .. } => "rank",
            Command::TrainEmbeddings { .. } => "train-embeddings",
            Command::PretrainDuet { .. } => "pretrain-duet",
            Command::TrainDuet { .. } => "train-duet",
            Command::ScoreDuet { .. } => "score-duet",
            Command::ExtractFeatures { .. } => "extract-features",
            Command::TrainLtr { .. } => "train-ltr",
            Command::Rerank { .. } => "rerank",
            Command::Eval { .. } => "eval",
            Command::MakeSynthetic { .. } => "make-synthetic",
            Command::RunAll { .. } => "run-all",
        }
    }

    fn paths(&self) -> (Vec<PathBuf>, Vec<PathBuf>) {
        let emb = |p: &Path| {
            let (i, o) = embedding_paths(p);
            vec![i, o]
        };
        match self {
            Command::Index { corpus, out } => (vec![corpus.clone()], vec![out.clone()]),
            Command::Rank {
                index,
                queries,
                aux_index,
                candidates,
                out,
                ..
            } => {
                let mut i = vec![index.clone(), queries.clone()];
                i.extend(aux_index.iter().cloned());
                i.extend(candidates.iter().cloned());
                (i, vec![out.clone()])
            }
            Command::TrainEmbeddings { corpus, out } => (vec![corpus.clone()], emb(out)),
            Command::PretrainDuet {
                corpus,
                embeddings,
                out,
            } => {
                let mut i = vec![corpus.clone()];
                i.extend(emb(embeddings));
                (i, vec![out.clone()])
            }
            Command::TrainDuet {
                corpus,
                queries,
                qrels,
                candidates,
                embeddings,
                init,
                seeds,
                out,
            } => {
                let mut i = vec![
                    corpus.clone(),
                    queries.clone(),
                    qrels.clone(),
                    candidates.clone(),
                ];
                if let Some(e) = embeddings {
                    i.extend(emb(e));
                }
                i.extend(init.iter().cloned());
                let o = match seeds {
                    Some(seeds) => seeds.0.iter().map(|&s| member_path(out, s)).collect(),
                    None => vec![out.clone()],
                };
                (i, o)
            }
            Command::ScoreDuet {
                model,
                corpus,
                queries,
                candidates,
                out,
                ..
            } => {
                let mut i = model.clone();
                i.extend([corpus.clone(), queries.clone(), candidates.clone()]);
                (i, vec![out.clone()])
            }
            Command::ExtractFeatures {
                corpus,
                queries,
                qrels,
                candidates,
                embeddings,
                runs,
                train_queries,
                out,
            } => {
                let mut i = vec![
                    corpus.clone(),
                    queries.clone(),
                    qrels.clone(),
                    candidates.clone(),
                ];
                i.extend(emb(embeddings));
                i.extend(runs.iter().map(|r| run_path(r)));
                i.extend(train_queries.iter().cloned());
                (i, vec![out.clone()])
            }
            Command::TrainLtr {
                features,
                qrels,
                out,
            } => (vec![features.clone(), qrels.clone()], vec![out.clone()]),
            Command::Rerank {
                model,
                features,
                candidates,
                out,
                ..
            } => (
                vec![model.clone(), features.clone(), candidates.clone()],
                vec![out.clone()],
            ),
            Command::Eval { run, qrels, .. } => (vec![run.clone(), qrels.clone()], vec![]),
            Command::MakeSynthetic { out, .. } => (vec![], vec![out.clone()]),
            Command::RunAll { data, out } => (
                vec![data.clone()],
                vec![out.clone().unwrap_or_else(|| data.join("run"))],
            ),
        }
    }
}

/// Parses `argv` (program name first). Unknown subcommands or flags give a
/// clap usage error.
pub fn parse_command<I, T>(argv: I) -> Result<CommandPlan, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let mut overrides = BTreeMap::new();
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            clap::Error::raw(
                clap::error::ErrorKind::InvalidValue,
                format!("--set expects KEY=VALUE, got {kv:?}\n"),
            )
        })?;
        overrides.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(seed) = cli.seed {
        overrides.insert("seed".into(), seed.to_string());
    }
    let (inputs, outputs) = cli.command.paths();
    let stages = match cli.command {
        Command::RunAll { .. } => Stage::ALL.to_vec(),
        _ => Vec::new(),
    };
    Ok(CommandPlan {
        name: cli.command.name(),
        command: cli.command,
        inputs,
        outputs,
        config_file: cli.config,
        overrides,
        seed: cli.seed,
        threads: cli.threads,
        stages,
    })
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_settings(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl CommandPlan {
    /// Pipeline settings from defaults, then the config file, then flags.
    pub fn settings(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config_file {
            cfg.apply(&read_settings(path)?)?;
        }
        cfg.apply(&self.overrides)?;
        Ok(cfg)
    }
}

fn load_words(prefix: &Path) -> anyhow::Result<(crate::embed::EmbeddingPair, Arc<WordTable>)> {
    let emb = load_embeddings(prefix)?;
    let words = Arc::new(WordTable::from_pair(&emb));
    Ok((emb, words))
}

/// Runs a plan, writing human-readable results to `out`.
pub fn execute(plan: &CommandPlan, out: &mut dyn Write) -> anyhow::Result<()> {
    for p in &plan.inputs {
        if !p.exists() {
            bail!("input {} does not exist", p.display());
        }
    }
    if let Some(n) = plan.threads {
        // A second build in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let cfg = plan.settings()?.seeded();
    match &plan.command {
        Command::Index { corpus, out: dest } => {
            let corpus = read_corpus(corpus)?;
            let index = InvertedIndex::build(&corpus)?;
            write_atomic(dest, |p| index.save(p))?;
            writeln!(out, "indexed {} documents", index.num_docs())?;
        }
        Command::Rank {
            index,
            queries,
            ranker,
            aux_index,
            candidates,
            depth,
            out: dest,
            run_id,
        } => {
            let index = InvertedIndex::load(index)?;
            let queries = read_queries(queries)?;
            let ranker = Ranker::parse(ranker)?;
            let aux = aux_index.as_deref().map(InvertedIndex::load).transpose()?;
            let run_id = run_id.clone().unwrap_or_else(|| ranker.name());
            let mut run = crate::eval::Run::new(&run_id);
            let cands = candidates.as_deref().map(read_run).transpose()?;
            for q in &queries {
                let ranking = match &cands {
                    Some(c) => {
                        let Some(r) = c.ranking(&q.query_id) else {
                            continue;
                        };
                        let ids: Vec<String> = r.iter().map(|s| s.doc_id.clone()).collect();
                        ranker.rank(&index, aux.as_ref(), &q.tokens, Scope::Candidates(&ids))?
                    }
                    None => ranker.rank(&index, aux.as_ref(), &q.tokens, Scope::All)?,
                };
                run.insert_ranked(&q.query_id, ranking.into_iter().take(*depth).collect())?;
            }
            write_atomic(dest, |p| write_run(&run, p))?;
            writeln!(out, "ranked {} queries with {run_id}", run.num_queries())?;
        }
        Command::TrainEmbeddings { corpus, out: dest } => {
            let corpus = read_corpus(corpus)?;
            let (emb, report) = train_skipgram(&embedding_streams(&corpus), &cfg.embed)?;
            save_embeddings_atomic(&emb, dest)?;
            for (e, l) in report.epoch_losses.iter().enumerate() {
                writeln!(out, "epoch {}\tloss {l:.6}", e + 1)?;
            }
        }
        Command::PretrainDuet {
            corpus,
            embeddings,
            out: dest,
        } => {
            let corpus = read_corpus(corpus)?;
            let (_, words) = load_words(embeddings)?;
            let mut model = DuetModel::new(cfg.duet.clone(), words)?;
            let dcfg = cfg.duet.clone();
            let n = cfg.pretrain_triples;
            let report = train_duet(&mut model, &cfg.duet_train, |_, rng| {
                (0..n)
                    .map(|_| generate_pretrain_triple(&corpus, &dcfg, rng))
                    .collect()
            })?;
            write_atomic(dest, |p| model.save(p))?;
            for (e, l) in report.epoch_losses.iter().enumerate() {
                writeln!(out, "epoch {}\tloss {l:.6}", e + 1)?;
            }
        }
        Command::TrainDuet {
            corpus,
            queries,
            qrels,
            candidates,
            embeddings,
            init,
            seeds,
            out: dest,
        } => {
            let corpus = read_corpus(corpus)?;
            let queries = read_queries(queries)?;
            let qrels = read_qrels(qrels)?;
            let candidates = read_run(candidates)?;
            let train: HashSet<String> = queries.iter().map(|q| q.query_id.clone()).collect();
            let fit = |model: &mut DuetModel, cfg: &PipelineConfig| {
                let no_pretrain = PipelineConfig {
                    pretrain_epochs: 0,
                    ..cfg.clone()
                };
                fit_duet(model, &corpus, &queries, &qrels, &candidates, &train, &no_pretrain)
            };
            match (seeds, init, embeddings) {
                (Some(seeds), _, Some(e)) => {
                    let words = load_words(e)?.1;
                    for &seed in &seeds.0 {
                        let member = PipelineConfig {
                            seed,
                            ..cfg.clone()
                        }
                        .seeded();
                        let mut model = DuetModel::new(member.duet.clone(), words.clone())?;
                        let (_, report) = fit(&mut model, &member)?;
                        let path = member_path(dest, seed);
                        write_atomic(&path, |p| model.save(p))?;
                        writeln!(
                            out,
                            "seed {seed}\tfinal loss {:.6}\t{}",
                            report.final_loss().unwrap_or(f64::NAN),
                            path.display()
                        )?;
                    }
                }
                (Some(_), _, None) => bail!("train-duet --seeds needs --embeddings"),
                (None, init, embeddings) => {
                    let mut model = match (init, embeddings) {
                        (Some(ckpt), _) => DuetModel::load(ckpt)?,
                        (None, Some(e)) => DuetModel::new(cfg.duet.clone(), load_words(e)?.1)?,
                        (None, None) => bail!("train-duet needs --embeddings or --init"),
                    };
                    let (_, report) = fit(&mut model, &cfg)?;
                    write_atomic(dest, |p| model.save(p))?;
                    for (e, l) in report.epoch_losses.iter().enumerate() {
                        writeln!(out, "epoch {}\tloss {l:.6}", e + 1)?;
                    }
                }
            }
        }
        Command::ScoreDuet {
            model,
            corpus,
            queries,
            candidates,
            out: dest,
            run_id,
        } => {
            let models = model
                .iter()
                .map(|p| DuetModel::load(p))
                .collect::<crate::Result<Vec<_>>>()?;
            let corpus = read_corpus(corpus)?;
            let queries = read_queries(queries)?;
            let candidates = read_run(candidates)?;
            let run = score_duet_run(&models, &corpus, &queries, &candidates, run_id)?;
            write_atomic(dest, |p| write_run(&run, p))?;
            writeln!(
                out,
                "scored {} queries with {} model(s)",
                run.num_queries(),
                models.len()
            )?;
        }
        Command::ExtractFeatures {
            corpus,
            queries,
            qrels,
            candidates,
            embeddings,
            runs,
            train_queries,
            out: dest,
        } => {
            let corpus = read_corpus(corpus)?;
            let queries = read_queries(queries)?;
            let qrels = read_qrels(qrels)?;
            let candidates = read_run(candidates)?;
            let emb = load_embeddings(embeddings)?;
            let mut names = Vec::new();
            let mut loaded = Vec::new();
            for spec in runs {
                let Some((name, path)) = spec.split_once('=') else {
                    bail!("--run expects NAME=RUNFILE, got {spec:?}");
                };
                names.push(name.to_string());
                loaded.push(read_run(Path::new(path))?);
            }
            let schema = FeatureSchema::with_runs(names.clone())?;
            let feature_runs: Vec<(&str, &crate::eval::Run)> = names
                .iter()
                .map(String::as_str)
                .zip(loaded.iter())
                .collect();
            let train: HashSet<String> = match train_queries {
                Some(p) => std::fs::read_to_string(p)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                None => qrels.query_ids().map(String::from).collect(),
            };
            let stats = DomainStats::build(&corpus, &qrels, &train, 1);
            let set = extract_feature_set(
                &queries,
                &corpus,
                &candidates,
                &feature_runs,
                &emb,
                &stats,
                &schema,
            )?;
            write_atomic(dest, |p| write_features(&set, p))?;
            writeln!(
                out,
                "wrote {} feature rows of dimension {}",
                set.num_rows(),
                schema.dim()
            )?;
        }
        Command::TrainLtr {
            features,
            qrels,
            out: dest,
        } => {
            let features = read_features(features)?;
            let qrels = read_qrels(qrels)?;
            let (model, report) = train_ltr(&features, &qrels, &cfg.ltr)?;
            write_atomic(dest, |p| model.save(p))?;
            for (e, l) in report.epoch_losses.iter().enumerate() {
                writeln!(out, "epoch {}\tloss {l:.6}", e + 1)?;
            }
        }
        Command::Rerank {
            model,
            features,
            candidates,
            out: dest,
            run_id,
        } => {
            let model = LtrModel::load(model)?;
            let features = read_features(features)?;
            let candidates = read_run(candidates)?;
            let run = rerank(&model, &candidates, &features, run_id)?;
            write_atomic(dest, |p| write_run(&run, p))?;
            writeln!(out, "reranked {} queries", run.num_queries())?;
        }
        Command::Eval {
            run,
            qrels,
            metrics,
            threshold,
        } => {
            let run = read_run(run)?;
            let qrels = read_qrels(qrels)?;
            let mcfg = MetricConfig {
                threshold: *threshold,
                ..MetricConfig::documents()
            };
            let rows = parse_metrics(metrics)?
                .into_iter()
                .map(|m| Ok((m, evaluate(&run, &qrels, m, &mcfg)?)))
                .collect::<crate::Result<Vec<_>>>()?;
            write!(out, "{}", format_report(&rows))?;
        }
        Command::MakeSynthetic {
            out: dest,
            docs,
            queries,
            passages,
        } => {
            let mut scfg = if *passages {
                SynthConfig::passage_style()
            } else {
                SynthConfig::default()
            };
            scfg.seed = cfg.seed;
            if let Some(n) = docs {
                scfg.num_docs = *n;
            }
            if let Some(n) = queries {
                scfg.num_queries = *n;
            }
            let data = generate(&scfg)?;
            data.write(dest)?;
            writeln!(
                out,
                "wrote {} documents and {} queries to {}",
                data.corpus.len(),
                data.queries.len(),
                dest.display()
            )?;
        }
        Command::RunAll { data, out: dest } => {
            let dest = dest.clone().unwrap_or_else(|| data.join("run"));
            let result = run_all(data, &dest, &cfg, |stage| {
                eprintln!("[run-all] {}", stage.name());
            })?;
            write!(out, "{}", result.metrics_tsv())?;
        }
    }
    Ok(())
}

/// Entry point shared by the binary: parse, execute, map errors to exit codes.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let plan = match parse_command(argv) {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(&plan, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
