//! Command-line front end: `ingest`, `inspect`, `answer`, `eval`, `export`.
//!
//! Settings come from an optional TOML file and are overridden by flags.
//! Credentials are only read from the environment.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendConfig, BackendError, BackendKind, GenerationBackend, RetrievalAnswerMode,
};
use crate::decomposer::{
    DecomposeError, DecompositionPlan, PromptTemplate, TemplateKind, TemplateSet,
};
use crate::detectors::{
    AliasScanProposer, DetectorConfig, DetectorError, Detectors, LexicalEntityScorer,
    LexicalRelationScorer, PairScorer, RemoteScorer,
};
use crate::eval::{
    build_oracle, evaluate, export_decomposition_dataset, export_entity_detector_dataset,
    export_relation_detector_dataset, filter_overlapping, load_dataset, DatasetError,
    DatasetSummary, EditBatchSpec, EditSource, EvalContext, EvalError, EvalSettings, GraphBuilder,
    MQuakeCase, NoisyOracleScorer, OracleKind, PlanMode, Schedule,
};
use crate::extraction::{
    ingest_edits, read_edit_file, EntityKb, ExtractError, Linker, PatternExtractor,
    RemoteExtractor, RemoteKb, StructuredExtractor, TripleExtractor,
};
use crate::http::{HttpError, HttpSettings};
use crate::kg::{ConflictMode, GraphError, KnowledgeGraph};
use crate::orchestrator::{
    answer_multihop, MultiHopError, MultiHopFailure, PipelineConfig, PlanSource,
};
use crate::relations::InverseTable;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("format: {0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Backend(_) => 4,
            CliError::Format(_) => 5,
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) | BackendError::MissingCredential(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Config(_) => CliError::Config(e.to_string()),
            DetectorError::Backend(_) => CliError::Backend(e.to_string()),
        }
    }
}

impl From<HttpError> for CliError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Setup(_) => CliError::Config(e.to_string()),
            _ => CliError::Backend(e.to_string()),
        }
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::Backend(h) => h.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Format(_) => CliError::Format(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DecomposeError> for CliError {
    fn from(e: DecomposeError) -> Self {
        match e {
            DecomposeError::Backend(b) => b.into(),
            DecomposeError::Template(_) => CliError::Config(e.to_string()),
            DecomposeError::Format { .. } | DecomposeError::MissingMarker(_) => {
                CliError::Format(e.to_string())
            }
            DecomposeError::Data(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MultiHopError> for CliError {
    fn from(e: MultiHopError) -> Self {
        use crate::orchestrator::HopError;
        match e.failure {
            MultiHopFailure::Decomposition(d) | MultiHopFailure::Substitution { source: d, .. } => {
                d.into()
            }
            MultiHopFailure::Hop {
                source: HopError::Backend(b),
                ..
            } => b.into(),
            MultiHopFailure::Hop {
                source: HopError::Detector(d),
                ..
            } => d.into(),
            MultiHopFailure::Hop {
                source: HopError::UnresolvedMarker(q),
                ..
            } => CliError::Format(format!("unresolved marker in {q:?}")),
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Prompt template overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatePaths {
    pub divide: Option<PathBuf>,
    pub answer: Option<PathBuf>,
    pub retrieve: Option<PathBuf>,
}

/// Everything a command may need, as read from the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub k: EditBatchSpec,
    pub alpha: f64,
    pub schedule: Schedule,
    pub plan_source: PlanMode,
    pub oracle: OracleKind,
    pub conflict_mode: ConflictMode,
    pub retrieval_mode: RetrievalAnswerMode,
    /// `lexical`, `remote:URL` or (relation only) `noisy-oracle:SEED`.
    pub relation_scorer: String,
    pub entity_scorer: String,
    /// `structured`, `pattern` or `remote:URL`.
    pub extractor: String,
    pub kb: Option<String>,
    pub kb_mandatory: bool,
    pub graph: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// 0 means one worker per core.
    pub parallelism: usize,
    pub backend: BackendConfig,
    pub templates: TemplatePaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            k: EditBatchSpec::size(1).expect("nonzero"),
            alpha: crate::detectors::DEFAULT_ALPHA,
            schedule: Schedule::default(),
            plan_source: PlanMode::default(),
            oracle: OracleKind::default(),
            conflict_mode: ConflictMode::default(),
            retrieval_mode: RetrievalAnswerMode::default(),
            relation_scorer: "lexical".into(),
            entity_scorer: "lexical".into(),
            extractor: "pattern".into(),
            kb: None,
            kb_mandatory: false,
            graph: None,
            out: None,
            parallelism: 0,
            backend: BackendConfig::default(),
            templates: TemplatePaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        DetectorConfig::with_alpha(self.alpha)?;
        self.backend.validate()?;
        Ok(())
    }

    fn http_settings(&self) -> HttpSettings {
        self.backend.http_settings()
    }

    fn require_dataset(&self) -> Result<&Path, CliError> {
        self.dataset.as_deref().ok_or_else(|| {
            CliError::Config(
                "a dataset path is required (--dataset or `dataset` in the config)".into(),
            )
        })
    }

    fn templates(&self) -> Result<TemplateSet, CliError> {
        let load = |kind, path: &Option<PathBuf>| match path {
            Some(p) => PromptTemplate::from_file(kind, p).map_err(CliError::from),
            None => Ok(PromptTemplate::builtin(kind)),
        };
        Ok(TemplateSet {
            divide: load(TemplateKind::Divide, &self.templates.divide)?,
            answer: load(TemplateKind::Answer, &self.templates.answer)?,
            retrieve: load(TemplateKind::Retrieve, &self.templates.retrieve)?,
        })
    }

    fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        Ok(PipelineConfig {
            retrieval_mode: self.retrieval_mode,
            templates: self.templates()?,
        })
    }

    /// Detectors with the configured scorers. `cases` feeds the noisy
    /// oracle scorer.
    pub fn detectors(&self, cases: &[MQuakeCase]) -> Result<Detectors, CliError> {
        let config = DetectorConfig {
            entity_scorer: self.entity_scorer.clone(),
            relation_scorer: self.relation_scorer.clone(),
            ..DetectorConfig::with_alpha(self.alpha)?
        };
        let entity: Box<dyn PairScorer> = match scorer_spec(&self.entity_scorer)? {
            ScorerSpec::Lexical => Box::new(LexicalEntityScorer),
            ScorerSpec::Remote(url) => Box::new(RemoteScorer::new(url, self.http_settings())?),
            ScorerSpec::Noisy(_) => {
                return Err(CliError::Config(
                    "noisy-oracle is only available as a relation scorer".into(),
                ))
            }
        };
        let relation: Box<dyn PairScorer> = match scorer_spec(&self.relation_scorer)? {
            ScorerSpec::Lexical => Box::new(LexicalRelationScorer::builtin()),
            ScorerSpec::Remote(url) => Box::new(RemoteScorer::new(url, self.http_settings())?),
            ScorerSpec::Noisy(seed) => {
                if cases.is_empty() {
                    return Err(CliError::Config(
                        "noisy-oracle scorer needs a dataset".into(),
                    ));
                }
                Box::new(NoisyOracleScorer::from_cases(cases, seed))
            }
        };
        Ok(Detectors::new(
            config,
            Box::new(AliasScanProposer::default()),
            entity,
            relation,
        )?)
    }

    fn extractor(&self) -> Result<Box<dyn TripleExtractor>, CliError> {
        Ok(match self.extractor.as_str() {
            "structured" => Box::new(StructuredExtractor),
            "pattern" => Box::new(PatternExtractor::new(InverseTable::builtin())),
            other => match other.strip_prefix("remote:") {
                Some(url) => Box::new(RemoteExtractor::new(url, self.http_settings())?),
                None => return Err(CliError::Config(format!("unknown extractor {other:?}"))),
            },
        })
    }

    fn kb(&self) -> Result<Option<RemoteKb>, CliError> {
        self.kb
            .as_deref()
            .map(|url| RemoteKb::new(url, self.http_settings()))
            .transpose()
            .map_err(CliError::from)
    }
}

enum ScorerSpec<'a> {
    Lexical,
    Remote(&'a str),
    Noisy(u64),
}

fn scorer_spec(spec: &str) -> Result<ScorerSpec<'_>, CliError> {
    if spec == "lexical" {
        return Ok(ScorerSpec::Lexical);
    }
    if let Some(url) = spec.strip_prefix("remote:") {
        return Ok(ScorerSpec::Remote(url));
    }
    if let Some(seed) = spec.strip_prefix("noisy-oracle:") {
        return seed
            .parse()
            .map(ScorerSpec::Noisy)
            .map_err(|_| CliError::Config(format!("bad noisy-oracle seed {seed:?}")));
    }
    Err(CliError::Config(format!(
        "unknown scorer {spec:?}; expected lexical, remote:URL or noisy-oracle:SEED"
    )))
}

/// Parse a kebab-case enum through its serde representation.
fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "kgedit",
    version,
    about = "Multi-hop question answering over an editable knowledge graph"
)]
pub struct Cli {
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add edit statements (JSON lines) to a graph snapshot.
    Ingest(IngestArgs),
    /// Print the facts or entities of a graph snapshot as JSON lines.
    Inspect(InspectArgs),
    /// Answer one multi-hop question and print its trace.
    Answer(AnswerArgs),
    /// Score a dataset and write the metrics report.
    Eval(EvalArgs),
    /// Write training records for the detectors or the decomposer.
    Export(ExportArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Edit batch size: a positive integer or `all`.
    #[arg(long)]
    pub k: Option<EditBatchSpec>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// oracle, scripted or remote.
    #[arg(long, value_parser = parse_kebab::<BackendKind>)]
    pub backend: Option<BackendKind>,
    /// Oracle table or script file for the backend.
    #[arg(long)]
    pub backend_source: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// model or scripted.
    #[arg(long, value_parser = parse_kebab::<PlanMode>)]
    pub plan_source: Option<PlanMode>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// pooled or sequential.
    #[arg(long, value_parser = parse_kebab::<Schedule>)]
    pub schedule: Option<Schedule>,
    /// world or gold; used when the oracle backend has no table file.
    #[arg(long, value_parser = parse_kebab::<OracleKind>)]
    pub oracle: Option<OracleKind>,
    /// replace or append-only.
    #[arg(long, value_parser = parse_kebab::<ConflictMode>)]
    pub conflict_mode: Option<ConflictMode>,
    /// deterministic or llm.
    #[arg(long, value_parser = parse_kebab::<RetrievalAnswerMode>)]
    pub retrieval_mode: Option<RetrievalAnswerMode>,
    #[arg(long)]
    pub relation_scorer: Option<String>,
    #[arg(long)]
    pub entity_scorer: Option<String>,
    /// structured, pattern or remote:URL.
    #[arg(long)]
    pub extractor: Option<String>,
    #[arg(long)]
    pub kb: Option<String>,
    #[arg(long)]
    pub divide_template: Option<PathBuf>,
    #[arg(long)]
    pub answer_template: Option<PathBuf>,
    #[arg(long)]
    pub retrieve_template: Option<PathBuf>,
}

impl CommonArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = &self.$flag { $field = v.clone().into(); })*
            };
        }
        set!(
            dataset => cfg.dataset,
            k => cfg.k,
            alpha => cfg.alpha,
            backend => cfg.backend.kind,
            backend_source => cfg.backend.source,
            endpoint => cfg.backend.endpoint,
            model => cfg.backend.model_name,
            plan_source => cfg.plan_source,
            graph => cfg.graph,
            out => cfg.out,
            parallelism => cfg.parallelism,
            schedule => cfg.schedule,
            oracle => cfg.oracle,
            conflict_mode => cfg.conflict_mode,
            retrieval_mode => cfg.retrieval_mode,
            relation_scorer => cfg.relation_scorer,
            entity_scorer => cfg.entity_scorer,
            extractor => cfg.extractor,
            kb => cfg.kb,
            divide_template => cfg.templates.divide,
            answer_template => cfg.templates.answer,
            retrieve_template => cfg.templates.retrieve,
        );
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON lines: `{"text": ...}` or `{"s", "r", "o_old", "o_new"}`.
    #[arg(long)]
    pub edits: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Only facts whose subject resolves from this mention.
    #[arg(long)]
    pub subject: Option<String>,
    /// List entities instead of facts.
    #[arg(long)]
    pub entities: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    pub question: String,
    /// Sub-questions for a scripted plan, in order; 2.. carry `[ENT]`.
    #[arg(long = "sub-question")]
    pub sub_questions: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Entity,
    Relation,
    Decomposition,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_enum)]
    pub kind: ExportKind,
    /// Datasets whose edited `(s, r)` pairs must not appear in the export.
    #[arg(long)]
    pub held_out: Vec<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

fn resolve_config(path: Option<&Path>, common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    common.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(io::stderr)
        .try_init();
}

/// Run a parsed command line, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&resolve_config(config, &a.common)?, &a.edits, out),
        Command::Inspect(a) => cmd_inspect(&resolve_config(config, &a.common)?, a, out),
        Command::Answer(a) => cmd_answer(&resolve_config(config, &a.common)?, a, out),
        Command::Eval(a) => cmd_eval(&resolve_config(config, &a.common)?, out).map(|_| ()),
        Command::Export(a) => cmd_export(&resolve_config(config, &a.common)?, a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("writing output: {e}")))
}

fn load_graph(path: &Path, mode: ConflictMode) -> Result<KnowledgeGraph, CliError> {
    match File::open(path) {
        Ok(f) => Ok(KnowledgeGraph::load_snapshot(BufReader::new(f))?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(KnowledgeGraph::with_mode(mode)),
        Err(e) => Err(io_err(path, e)),
    }
}

fn save_graph(graph: &KnowledgeGraph, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    graph.write_snapshot(BufWriter::new(file))?;
    Ok(())
}

fn require_graph(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.graph
        .as_deref()
        .ok_or_else(|| CliError::Config("a graph snapshot path is required (--graph)".into()))
}

/// Ingest an edit file into the snapshot at `cfg.graph`, creating it when
/// missing. The snapshot is written even when some statements fail.
pub fn cmd_ingest(cfg: &RunConfig, edits: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let graph_path = require_graph(cfg)?;
    let (statements, parse_failures) = read_edit_file(edits).map_err(|e| io_err(edits, e))?;
    let mut graph = load_graph(graph_path, cfg.conflict_mode)?;
    let extractor = cfg.extractor()?;
    let kb = cfg.kb()?;
    let linker = match &kb {
        Some(kb) => Linker::with_kb(kb as &dyn EntityKb, cfg.kb_mandatory),
        None => Linker::local(),
    };
    let mut report = ingest_edits(&mut graph, &statements, extractor.as_ref(), &linker);
    save_graph(&graph, graph_path)?;
    let n_parse = parse_failures.len();
    report.failures.splice(0..0, parse_failures);
    write_out(out, &format!("{report}\n"))?;
    for failure in &report.failures {
        eprintln!("failed: {} ({})", failure.statement, failure.reason);
    }
    if n_parse > 0 {
        return Err(CliError::Format(format!(
            "{n_parse} malformed line(s) in {}",
            edits.display()
        )));
    }
    if !report.failures.is_empty() {
        return Err(CliError::Data(format!(
            "{} statement(s) could not be ingested",
            report.failures.len()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct FactView<'a> {
    subject: &'a str,
    relation: &'a str,
    object: &'a str,
    subject_id: &'a str,
    object_id: &'a str,
    seq: u64,
}

pub fn cmd_inspect(
    cfg: &RunConfig,
    args: &InspectArgs,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let path = require_graph(cfg)?;
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let graph = KnowledgeGraph::load_snapshot(BufReader::new(file))?;
    let mut text = String::new();
    if args.entities {
        for e in graph.entities() {
            text.push_str(&serde_json::to_string(e).expect("entity serializes"));
            text.push('\n');
        }
        return write_out(out, &text);
    }
    let subject = match &args.subject {
        Some(m) => Some(
            graph
                .resolve(m)
                .ok_or_else(|| CliError::Data(format!("no entity named {m:?}")))?
                .clone(),
        ),
        None => None,
    };
    let mut facts: Vec<_> = graph
        .facts()
        .filter(|f| subject.as_ref().is_none_or(|s| f.subject == *s))
        .collect();
    facts.sort_by_key(|f| f.seq);
    for f in facts {
        let view = FactView {
            subject: graph.label(&f.subject).unwrap_or(f.subject.as_str()),
            relation: &f.relation,
            object: graph.label(&f.object).unwrap_or(f.object.as_str()),
            subject_id: f.subject.as_str(),
            object_id: f.object.as_str(),
            seq: f.seq,
        };
        text.push_str(&serde_json::to_string(&view).expect("fact serializes"));
        text.push('\n');
    }
    write_out(out, &text)
}

/// Answer one question against the snapshot (or an empty graph when no
/// snapshot is given). On failure the partial trace goes to stderr.
pub fn cmd_answer(cfg: &RunConfig, args: &AnswerArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = match cfg.plan_source {
        PlanMode::Scripted => {
            if args.sub_questions.is_empty() {
                return Err(CliError::Config(
                    "scripted plan source needs --sub-question for every hop (or use --plan-source model)".into(),
                ));
            }
            PlanSource::Scripted(DecompositionPlan::new(
                args.question.clone(),
                args.sub_questions.clone(),
            )?)
        }
        PlanMode::Model => PlanSource::Model,
    };
    let graph = match &cfg.graph {
        Some(p) => load_graph(p, cfg.conflict_mode)?,
        None => KnowledgeGraph::with_mode(cfg.conflict_mode),
    };
    let backend = cfg.backend.build(None)?;
    let detectors = cfg.detectors(&[])?;
    let pipeline = cfg.pipeline()?;
    match answer_multihop(
        &args.question,
        &graph,
        &detectors,
        backend.as_ref(),
        &pipeline,
        &plan,
    ) {
        Ok(record) => {
            let mut buf = Vec::new();
            record
                .write_jsonl(&mut buf)
                .expect("writing to a Vec cannot fail");
            out.write_all(&buf)
                .map_err(|e| CliError::Data(e.to_string()))
        }
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string(&e.partial).expect("trace serializes")
            );
            Err(e.into())
        }
    }
}

fn load_cases(path: &Path) -> Result<Vec<MQuakeCase>, CliError> {
    let cases = load_dataset(path)?;
    tracing::info!(path = %path.display(), summary = %DatasetSummary::of(&cases), "dataset loaded");
    Ok(cases)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Evaluate the configured dataset. The report JSON goes to `cfg.out` when
/// set and the summary table to `out`.
pub fn cmd_eval(
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<crate::eval::MetricsReport, CliError> {
    let path = cfg.require_dataset()?;
    let cases = load_cases(path)?;
    let oracle_kind = (cfg.backend.kind == BackendKind::Oracle && cfg.backend.source.is_none())
        .then_some(cfg.oracle);
    let backend: Box<dyn GenerationBackend> = cfg
        .backend
        .build(oracle_kind.map(|k| build_oracle(&cases, k)))?;
    let detectors = cfg.detectors(&cases)?;
    let pipeline = cfg.pipeline()?;
    let ctx = EvalContext {
        backend: backend.as_ref(),
        detectors: &detectors,
        pipeline: &pipeline,
        graphs: GraphBuilder::structured(cfg.conflict_mode),
    };
    let settings = EvalSettings {
        dataset_name: dataset_name(path),
        batch: cfg.k,
        schedule: cfg.schedule,
        plan_mode: cfg.plan_source,
        oracle: oracle_kind,
        relation_scorer: cfg.relation_scorer.clone(),
        parallelism: cfg.parallelism,
    };
    let report = evaluate(&cases, &settings, &ctx)?;
    if let Some(path) = &cfg.out {
        std::fs::write(path, report.to_json() + "\n").map_err(|e| io_err(path, e))?;
    }
    write_out(out, &report.render_table())?;
    let backend_failed: std::collections::BTreeSet<&str> = report
        .failures
        .iter()
        .filter(|f| f.kind == "backend")
        .map(|f| f.case_id.as_str())
        .collect();
    if report.n_cases > 0 && backend_failed.len() == report.n_cases {
        return Err(CliError::Backend(format!(
            "every case hit a backend failure; first: {}",
            report.failures[0].message
        )));
    }
    Ok(report)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Data(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn cmd_export(cfg: &RunConfig, args: &ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cases = load_cases(cfg.require_dataset()?)?;
    let held: Vec<Vec<MQuakeCase>> = args
        .held_out
        .iter()
        .map(|p| load_cases(p))
        .collect::<Result<_, _>>()?;
    let held_refs: Vec<&[MQuakeCase]> = held.iter().map(Vec::as_slice).collect();
    let (cases, dropped) = filter_overlapping(cases, &held_refs);
    let target = cfg
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("an output path is required (--out)".into()))?;
    let graphs = GraphBuilder {
        source: EditSource::Structured,
        ..GraphBuilder::structured(cfg.conflict_mode)
    };
    let summary = match args.kind {
        ExportKind::Entity => {
            let detectors = cfg.detectors(&cases)?;
            let export = export_entity_detector_dataset(&cases, &graphs, &detectors, cfg.k);
            write_jsonl(target, &export.records)?;
            format!(
                "{} entity records from {} sub-questions ({} with the subject proposed)",
                export.records.len(),
                export.sub_questions,
                export.covered
            )
        }
        ExportKind::Relation => {
            let records = export_relation_detector_dataset(&cases, &graphs, cfg.k);
            write_jsonl(target, &records)?;
            format!("{} relation records", records.len())
        }
        ExportKind::Decomposition => {
            let (records, errors) = export_decomposition_dataset(&cases);
            for e in &errors {
                eprintln!("skipped: {e}");
            }
            write_jsonl(target, &records)?;
            format!(
                "{} decomposition records, {} cases skipped",
                records.len(),
                errors.len()
            )
        }
    };
    write_out(
        out,
        &format!("{summary}; {dropped} overlapping cases dropped\n"),
    )
}
