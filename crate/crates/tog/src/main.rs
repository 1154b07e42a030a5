use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tog::config::{build_backends, build_kg, ScorerKind, ServiceConfig};
use tog::eval::{load_dataset, render_table, run_eval};
use tog::llm::LlmConfig;
use tog::sparql::EndpointConfig;
use tog::{Service, TraceStore};
use tog_core::engine::{EntityPrune, PruneMode, Variant};
use tog_core::prompting::{build_prompt, ExemplarSet, PathRendering, PromptSpec};
use tog_core::run;

#[derive(Parser)]
#[command(name = "tog", version, about = "Beam-search question answering over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question and optionally write its trace.
    Run {
        question: String,
        #[command(flatten)]
        search: SearchArgs,
        /// Write the trace document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a JSONL dataset.
    Eval {
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Write the report (metrics and per-record results) as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Print the prompt a backend would receive.
    RenderPrompt {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        question: String,
        /// Topic entity for relation prompts, relation for entity prompts.
        #[arg(long, default_value = "")]
        anchor: String,
        /// Semicolon-separated candidate names.
        #[arg(long, default_value = "")]
        candidates: String,
        /// Rendered paths or chains.
        #[arg(long, default_value = "")]
        evidence: String,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Args)]
struct SearchArgs {
    /// TOML service configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    prompt_format: Option<FormatArg>,
    #[arg(long, value_enum)]
    prune_mode: Option<PruneModeArg>,
    #[arg(long, value_enum)]
    scorer: Option<ScorerKind>,
    /// Triple file path or SPARQL endpoint URL.
    #[arg(long)]
    kg: Option<String>,
    /// Correction log for a triple file.
    #[arg(long)]
    corrections: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scripted backend replies (JSON).
    #[arg(long)]
    script: Option<PathBuf>,
    /// Vector table for the embedding scorer.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Chat-completions URL for the llm backend.
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Tog,
    TogR,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Triples,
    Sequences,
    Sentences,
}

#[derive(Clone, Copy, ValueEnum)]
enum PruneModeArg {
    PerSet,
    Unified,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    TopicExtract,
    RelationPrune,
    EntityPrune,
    Sufficiency,
    AnswerGen,
    TogrReason,
    Cot,
    Io,
}

impl SearchArgs {
    fn resolve(&self) -> Result<ServiceConfig, String> {
        let mut cfg = match &self.config {
            Some(p) => ServiceConfig::load(p).map_err(|e| e.to_string())?,
            None => ServiceConfig::default(),
        };
        let s = &mut cfg.search;
        if let Some(w) = self.width {
            s.width = w;
        }
        if let Some(d) = self.depth {
            s.depth = d;
        }
        if let Some(v) = self.variant {
            (s.variant, s.entity_prune) = match v {
                VariantArg::Tog => (Variant::Tog, EntityPrune::Scored),
                VariantArg::TogR => (Variant::TogR, EntityPrune::Random),
            };
        }
        match self.prompt_format {
            Some(f) => {
                s.rendering = match f {
                    FormatArg::Triples => PathRendering::Triples,
                    FormatArg::Sequences => PathRendering::Sequences,
                    FormatArg::Sentences => PathRendering::Sentences,
                }
            }
            None if s.variant == Variant::TogR && s.rendering == PathRendering::Triples => {
                s.rendering = PathRendering::Sequences;
            }
            None => {}
        }
        if let Some(m) = self.prune_mode {
            s.prune_mode = match m {
                PruneModeArg::PerSet => PruneMode::PerSet,
                PruneModeArg::Unified => PruneMode::Unified,
            };
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(kg) = &self.kg {
            if kg.starts_with("http://") || kg.starts_with("https://") {
                cfg.kg.file = None;
                cfg.kg.sparql = Some(EndpointConfig { endpoint: kg.clone(), ..cfg.kg.sparql.take().unwrap_or_default() });
            } else {
                cfg.kg.sparql = None;
                cfg.kg.file = Some(PathBuf::from(kg));
            }
        }
        if self.corrections.is_some() {
            cfg.kg.corrections = self.corrections.clone();
        }
        if let Some(k) = self.scorer {
            cfg.scorer.kind = k;
        }
        if self.script.is_some() {
            cfg.scorer.script = self.script.clone();
        }
        if self.vectors.is_some() {
            cfg.scorer.vectors = self.vectors.clone();
        }
        if self.llm_endpoint.is_some() || self.model.is_some() {
            let llm = cfg.llm.get_or_insert_with(LlmConfig::default);
            if let Some(e) = &self.llm_endpoint {
                llm.endpoint = e.clone();
            }
            if let Some(m) = &self.model {
                llm.model = m.clone();
            }
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Run { question, search, out } => {
            let cfg = search.resolve()?;
            let backends = build_backends(&cfg).map_err(|e| e.to_string())?;
            let kg = build_kg(&cfg.kg).map_err(|e| e.to_string())?;
            let search = cfg.effective_search();
            let result =
                kg.with_source(|kg| run(&question, &search, backends.scorer.as_ref(), backends.reasoner.as_ref(), kg));
            let (trace, outcome) = match result {
                Ok(r) => (r.trace, Ok(r.outcome)),
                Err(e) => (*e.trace, Err(e.source.to_string())),
            };
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&trace).map_err(|e| e.to_string())?;
                std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let o = outcome?;
            println!("{}", o.answer);
            eprintln!(
                "termination: {:?}, depth: {}, fallback: {}, calls: {} (+{} topic)",
                o.termination,
                o.depth,
                o.fallback,
                o.ledger.total(),
                o.ledger.topic_extract
            );
            Ok(())
        }
        Command::Eval { search, dataset, out, workers } => {
            let cfg = search.resolve()?;
            let backends = build_backends(&cfg).map_err(|e| e.to_string())?;
            let kg = build_kg(&cfg.kg).map_err(|e| e.to_string())?;
            let records = load_dataset(&dataset).map_err(|e| e.to_string())?;
            let search = cfg.effective_search();
            let report = kg.with_source(|kg| {
                run_eval(&records, &search, backends.scorer.as_ref(), backends.reasoner.as_ref(), kg, workers)
            });
            print!("{}", render_table(&report.metrics));
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
                std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(())
        }
        Command::Serve { search, listen, trace_dir } => {
            let mut cfg = search.resolve()?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            if let Some(d) = trace_dir {
                cfg.trace_dir = d;
            }
            let backends = build_backends(&cfg).map_err(|e| e.to_string())?;
            let kg = build_kg(&cfg.kg).map_err(|e| e.to_string())?;
            let store = TraceStore::open(&cfg.trace_dir).map_err(|e| e.to_string())?;
            let service = Arc::new(Service::new(kg, backends, cfg.effective_search(), store));
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(tog::http::serve(service, cfg.listen)).map_err(|e| e.to_string())
        }
        Command::RenderPrompt { kind, question, anchor, candidates, evidence, k } => {
            let names: Vec<String> =
                candidates.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            let spec = match kind {
                KindArg::TopicExtract => PromptSpec::TopicExtract,
                KindArg::RelationPrune => PromptSpec::RelationPrune { k, topic_entity: &anchor, relations: &names },
                KindArg::EntityPrune => PromptSpec::EntityPrune { relation: &anchor, entities: &names },
                KindArg::Sufficiency => PromptSpec::SufficiencyEval { knowledge: &evidence },
                KindArg::AnswerGen => PromptSpec::AnswerGen { knowledge: &evidence },
                KindArg::TogrReason => PromptSpec::TogRReason { chains: &evidence },
                KindArg::Cot => PromptSpec::CotBaseline,
                KindArg::Io => PromptSpec::IoBaseline,
            };
            println!("{}", build_prompt(&question, &spec, &ExemplarSet::default()));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
