use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mathgcl_core::embed::{sample_corpus, train_subword_skipgram};
use mathgcl_core::eval::{combine_reports, evaluate_run, QrelSet, Run, DEFAULT_DEPTH};
use mathgcl_core::gcl::{node_features, read_checkpoint, train, write_checkpoint, Checkpoint, EmbedMode, Objective};
use mathgcl_core::graph::{read_graph_records, FormulaGraph, GraphRecord, Layout};
use mathgcl_core::index::build_index;
use mathgcl_core::pipeline::{
    embed_records, load_index, load_table, parse_corpus, query_pipeline, read_corpus, read_embeddings, run_pipeline,
    write_embeddings, write_graph_records, ArtifactSet, Manifest, Model, PipelineConfig, PipelineError, QueryError, CORPUS_FILE,
};

use crate::server;

#[derive(Debug, Parser)]
#[command(name = "mathgcl", version, about = "Formula retrieval with graph contrastive learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a LaTeX corpus into SLT and/or OPT graph records.
    Parse {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = LayoutChoice::Both)]
        layout: LayoutChoice,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train subword skip-gram token embeddings on random walks over graph records.
    TrainTokens(TrainTokensArgs),
    /// Train a graph encoder under one contrastive objective.
    TrainGcl(TrainGclArgs),
    /// Embed graph records with a checkpoint, or with the averaging baseline when none is given.
    Embed {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a cosine index from embedding records.
    Index {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank indexed formulas against a LaTeX query.
    Query(QueryArgs),
    /// Score run files against qrels with bpref and nDCG.
    Eval {
        /// Comma-separated run files, one per trial. With --opt-run these are the SLT trials.
        #[arg(long, value_delimiter = ',', required = true)]
        run: Vec<PathBuf>,
        /// OPT trials; adds the F1 of SLT and OPT means to the report.
        #[arg(long, value_delimiter = ',')]
        opt_run: Vec<PathBuf>,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve /search, /parse and /health over HTTP.
    Serve {
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = server::DEFAULT_K)]
        default_k: usize,
    },
    /// Run every offline stage from one config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the artifact directory of the config.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        /// Overrides the global seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutChoice {
    Slt,
    Opt,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Slt,
    Opt,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Slt => Layout::Slt,
            LayoutArg::Opt => Layout::Opt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Infograph,
    Graphcl,
    Bgrl,
    Baseline,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Infograph => Model::InfoGraph,
            ModelArg::Graphcl => Model::GraphCl,
            ModelArg::Bgrl => Model::Bgrl,
            ModelArg::Baseline => Model::Baseline,
        }
    }
}

/// Settings shared by the training commands: an optional config file plus flag overrides.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Pipeline config whose sections supply defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => serde_json::from_value(json!({ "paths": { "corpus": "", "artifacts": "" } })).expect("empty config parses"),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        Ok(c.with_global_seed())
    }
}

#[derive(Debug, Args)]
pub struct TrainTokensArgs {
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: ConfigArgs,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    walks_per_node: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    buckets: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainGclArgs {
    #[arg(long, value_enum)]
    model: ObjectiveArg,
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(long, value_enum)]
    layout: LayoutArg,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: ConfigArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Infograph,
    Graphcl,
    Bgrl,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Infograph => Objective::InfoGraph,
            ObjectiveArg::Graphcl => Objective::GraphCl,
            ObjectiveArg::Bgrl => Objective::Bgrl,
        }
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    latex: String,
    #[arg(long, default_value_t = server::DEFAULT_K)]
    k: usize,
    /// Query layout; defaults to the index layout, or opt with --artifacts.
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    /// Pipeline artifact directory; selects files through its manifest.
    #[arg(long, conflicts_with_all = ["index", "tokens", "checkpoint"])]
    artifacts: Option<PathBuf>,
    #[arg(long, value_enum, requires = "artifacts", default_value_t = ModelArg::Graphcl)]
    model: ModelArg,
    #[arg(long, requires = "tokens")]
    index: Option<PathBuf>,
    #[arg(long, requires = "index")]
    tokens: Option<PathBuf>,
    #[arg(long, requires = "index")]
    checkpoint: Option<PathBuf>,
    /// Corpus used to attach LaTeX to results.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn write_to(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    body(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", path.display()))
}

fn print_json(v: &Value) {
    println!("{v}");
}

fn graphs_of(path: &Path, layout: Option<Layout>) -> Result<Vec<GraphRecord>> {
    let records: Vec<GraphRecord> =
        read_graph_records(open(path)?)?.into_iter().filter(|r| layout.map_or(true, |l| r.graph.layout == l)).collect();
    if records.is_empty() {
        bail!("{} holds no {} graph records", path.display(), layout.map_or("", |l| l.as_str()));
    }
    Ok(records)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Parse { corpus, layout, out } => {
            let entries = read_corpus(open(&corpus)?)?;
            let layouts = match layout {
                LayoutChoice::Slt => vec![Layout::Slt],
                LayoutChoice::Opt => vec![Layout::Opt],
                LayoutChoice::Both => vec![Layout::Slt, Layout::Opt],
            };
            let mut records = Vec::new();
            for l in layouts {
                records.extend(parse_corpus(&entries, l)?);
            }
            write_to(&out, |w| write_graph_records(&records, w))?;
            log::info!("parsed {} formulas into {} records", entries.len(), records.len());
            print_json(&json!({ "formulas": entries.len(), "records": records.len(), "out": out }));
        }
        Command::TrainTokens(a) => {
            let mut c = a.settings.load()?;
            let overrides = [
                (a.dim, &mut c.tokens.dim),
                (a.walks_per_node, &mut c.walks.walks_per_node),
                (a.walk_length, &mut c.walks.walk_length),
                (a.window, &mut c.tokens.window),
                (a.negatives, &mut c.tokens.negatives),
                (a.epochs, &mut c.tokens.epochs),
                (a.buckets, &mut c.tokens.buckets),
            ];
            for (flag, slot) in overrides {
                if let Some(v) = flag {
                    *slot = v;
                }
            }
            if let Some(lr) = a.lr {
                c.tokens.learning_rate = lr;
            }
            let hash = c.hash();
            let graphs: Vec<FormulaGraph> = graphs_of(&a.graphs, None)?.into_iter().map(|r| r.graph).collect();
            let walks = sample_corpus(&graphs, c.walks.walks_per_node, c.walks.walk_length, c.seed);
            let table = train_subword_skipgram(&walks, &c.tokens)?.with_config_hash(hash);
            write_to(&a.out, |w| table.write_to(w))?;
            log::info!("trained {} token vectors from {} walks", table.vocab().len(), walks.sequences.len());
            print_json(&json!({ "vocab": table.vocab().len(), "dim": table.dim(), "config_hash": format!("{hash:016x}") }));
        }
        Command::TrainGcl(a) => {
            let c = a.settings.load()?;
            let layout = Layout::from(a.layout);
            let table = load_table(&a.tokens)?;
            let graphs: Vec<FormulaGraph> = graphs_of(&a.graphs, Some(layout))?.into_iter().map(|r| r.graph).collect();
            let mut tc = c.gcl.clone();
            tc.objective = a.model.into();
            tc.epochs = a.epochs.unwrap_or(tc.epochs);
            tc.batch_size = a.batch_size.unwrap_or(tc.batch_size);
            tc.learning_rate = a.lr.unwrap_or(tc.learning_rate);
            let features: Vec<_> = graphs.iter().map(|g| node_features(&table, g)).collect();
            let outcome = train(&graphs, &features, &tc)?;
            let ckpt = Checkpoint { params: outcome.params, layout, config_hash: table.config_hash() };
            write_to(&a.out, |w| write_checkpoint(&ckpt, w))?;
            print_json(&json!({
                "model": tc.objective.as_str(),
                "layout": layout,
                "loss_curve": outcome.loss_curve,
                "counters": outcome.counters,
            }));
        }
        Command::Embed { graphs, tokens, checkpoint, layout, out } => {
            let layout = Layout::from(layout);
            let table = load_table(&tokens)?;
            let records = graphs_of(&graphs, Some(layout))?;
            let params = match &checkpoint {
                None => None,
                Some(path) => {
                    let ck = read_checkpoint(&mut open(path)?).with_context(|| format!("reading {}", path.display()))?;
                    if ck.layout != layout {
                        return Err(QueryError::ArtifactMismatch(format!("checkpoint layout {} != requested {layout}", ck.layout)).into());
                    }
                    if ck.config_hash != table.config_hash() {
                        return Err(QueryError::ArtifactMismatch(format!(
                            "checkpoint hash {:016x} != table hash {:016x}",
                            ck.config_hash,
                            table.config_hash()
                        ))
                        .into());
                    }
                    Some(ck.params)
                }
            };
            let mode = params.as_ref().map_or(EmbedMode::AverageBaseline, EmbedMode::Gcl);
            let embeddings = embed_records(mode, &records, &table)?;
            write_to(&out, |w| write_embeddings(&embeddings, table.config_hash(), w))?;
            print_json(&json!({ "embeddings": embeddings.len(), "provenance": mode.provenance() }));
        }
        Command::Index { embeddings, out } => {
            let (embs, hash) = read_embeddings(open(&embeddings)?).map_err(|e| anyhow::anyhow!("{}: {e}", embeddings.display()))?;
            let index = build_index(&embs)?.with_config_hash(hash);
            write_to(&out, |w| index.write_to(w))?;
            print_json(&json!({ "rows": index.len(), "dim": index.dim(), "layout": index.layout(), "provenance": index.provenance() }));
        }
        Command::Query(a) => print_json(&query(a)?),
        Command::Eval { run, opt_run, qrels, k, out } => {
            let qrels = QrelSet::parse(&std::fs::read_to_string(&qrels).with_context(|| format!("reading {}", qrels.display()))?)?;
            let load_runs = |paths: &[PathBuf]| -> Result<Vec<Run>> {
                paths
                    .iter()
                    .map(|p| Ok(Run::parse(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?))
                    .collect()
            };
            let report = evaluate_run(&load_runs(&run)?, &qrels, k)?;
            let mut v = json!({ "k": k, "run": report });
            if !opt_run.is_empty() {
                let opt = evaluate_run(&load_runs(&opt_run)?, &qrels, k)?;
                v["f1"] = serde_json::to_value(combine_reports(&report, &opt)?)?;
                v["opt_run"] = serde_json::to_value(opt)?;
            }
            match out {
                Some(path) => {
                    write_to(&path, |w| writeln!(w, "{}", serde_json::to_string_pretty(&v).expect("report serializes")))?;
                    print_json(&json!({ "out": path, "bpref": v["run"]["bpref"], "ndcg": v["run"]["ndcg"], "f1": v.get("f1") }));
                }
                None => print_json(&v),
            }
        }
        Command::Serve { artifacts, host, port, default_k } => {
            let state = server::ServeState::load(&artifacts, default_k)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(state, addr))?;
        }
        Command::Pipeline { config, artifacts, seed } => {
            let mut c = PipelineConfig::load(&config)?;
            if let Some(dir) = artifacts {
                c.paths.artifacts = dir;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            let report = run_pipeline(&c)?;
            print_json(&serde_json::to_value(report)?);
        }
    }
    Ok(())
}

fn query(a: QueryArgs) -> Result<Value> {
    let (set, corpus_path) = match (&a.artifacts, &a.index) {
        (Some(dir), _) => {
            let manifest = Manifest::load(dir)?;
            let layout = a.layout.map_or(Layout::Opt, Layout::from);
            let model = Model::from(a.model);
            let entry = manifest
                .entries
                .iter()
                .find(|e| e.layout == layout && e.model == model)
                .ok_or_else(|| QueryError::ArtifactMismatch(format!("no {layout}/{model} artifacts in {}", dir.display())))?;
            (ArtifactSet::load_entry(dir, entry)?, a.corpus.clone().or_else(|| Some(dir.join(CORPUS_FILE))))
        }
        (None, Some(index)) => {
            let tokens = a.tokens.as_ref().expect("clap requires --tokens with --index");
            let set = match &a.checkpoint {
                None => ArtifactSet::new(load_table(tokens)?, None, load_index(index)?)?,
                Some(ck) => ArtifactSet::load(tokens, Some(ck), index)?,
            };
            (set, a.corpus.clone())
        }
        (None, None) => bail!("query needs --artifacts or --index with --tokens"),
    };
    let layout = a.layout.map_or(set.layout, Layout::from);
    let list = query_pipeline(&set, &a.latex, layout, a.k)?;
    let latex = match corpus_path.filter(|p| p.exists()) {
        Some(p) => read_corpus(open(&p)?)?.into_iter().map(|e| (e.id, e.latex)).collect(),
        None => std::collections::HashMap::new(),
    };
    let results: Vec<Value> = list
        .hits
        .iter()
        .map(|h| match latex.get(&h.id) {
            Some(l) => json!({ "id": h.id, "latex": l, "score": h.score }),
            None => json!({ "id": h.id, "score": h.score }),
        })
        .collect();
    Ok(json!({ "query": a.latex, "layout": layout, "model": set.model, "results": results }))
}

/// The error chain joined with `: `, skipping causes whose text an outer message already includes.
pub fn error_message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let s = cause.to_string();
        if !out.contains(&s) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&s);
        }
    }
    out
}

/// Machine-readable description of a failed command.
pub fn error_report(err: &anyhow::Error) -> Value {
    for cause in err.chain() {
        if let Some(q) = cause.downcast_ref::<QueryError>() {
            return json!({ "error": q.to_json() });
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            let (stage, kind) = match p {
                PipelineError::Config(_) => ("config", "ConfigError"),
                PipelineError::Corpus(_) => ("parse", "CorpusError"),
                PipelineError::Tokens(_) => ("train-tokens", "TrainTokensError"),
                PipelineError::Gcl(_) => ("train-gcl", "GclError"),
                PipelineError::Index(_) => ("index", "IndexError"),
                PipelineError::Eval(_) => ("eval", "EvalError"),
                PipelineError::Io { .. } => ("io", "IoError"),
            };
            return json!({ "error": { "stage": stage, "kind": kind, "message": error_message(err) } });
        }
        if cause.downcast_ref::<mathgcl_core::pipeline::ConfigError>().is_some() {
            return json!({ "error": { "stage": "config", "kind": "ConfigError", "message": error_message(err) } });
        }
    }
    json!({ "error": { "kind": "Error", "message": error_message(err) } })
}
