use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cultvqa::bundled;
use cultvqa::dataset::{self, DatasetRecord};
use cultvqa::evalkit::{self, EvalOptions, MetricReport};
use cultvqa::explain::render_overlay_svg;
use cultvqa::kb::{self, match_entity, KnowledgeBase};
use cultvqa::perception::load_detection_index;
use cultvqa::pipeline::{run_answer, AblationConfig, AnswerOutput, DetectionSource, Engine, PipelineError};
use cultvqa::progen::{load_exemplars, RemoteGenerator};

/// Exit status of every failure class; see the README table.
mod exit {
    pub const INTERNAL: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INPUT: u8 = 3;
    pub const MISSING_FIXTURE: u8 = 4;
    pub const DETECTOR: u8 = 5;
    pub const GENERATOR: u8 = 6;
    pub const OUTPUT: u8 = 7;
    pub const VALIDATION: u8 = 8;
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type Res<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "cultvqa", version, about = "Knowledge-grounded VQA over Vietnamese cultural imagery")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Knowledge base (JSON lines); defaults to the bundled starter KB.
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "human")]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Recorded with evaluation output; the pipeline has no random steps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for evaluation (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    JsonLines,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorKind {
    Fallback,
    Remote,
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Detection fixtures (JSON lines); defaults to the bundled fixtures.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Remote detector endpoint, used instead of fixtures.
    #[arg(long, conflicts_with = "detections")]
    detector_url: Option<String>,
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    /// Program generator endpoint (bearer key from CULTVQA_GENERATOR_KEY).
    #[arg(long)]
    generator_url: Option<String>,
    /// Exemplar bundle for prompts (JSON lines).
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Fuzzy match threshold in [0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    /// Evidence regions per explanation.
    #[arg(long)]
    k: Option<usize>,
    /// Repair rounds after an ill-formed generator response.
    #[arg(long, default_value_t = 2)]
    max_repairs: usize,
    /// Fail instead of falling back when the generator is unreachable.
    #[arg(long)]
    no_fallback: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Answer a question about an image.
    Answer(AnswerArgs),
    /// Answer and show the full explanation, optionally with an SVG overlay.
    Explain {
        #[command(flatten)]
        answer: AnswerArgs,
        /// Write the evidence overlay as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        width: u32,
        #[arg(long, default_value_t = 1000)]
        height: u32,
    },
    /// Score one pipeline variant on a manifest.
    Eval {
        #[command(flatten)]
        eval: EvalArgs,
        /// Pipeline variant: full, no_kb, no_visual or no_program.
        #[arg(long, default_value = "full")]
        config: AblationConfig,
    },
    /// Score several pipeline variants on a manifest.
    Ablate {
        #[command(flatten)]
        eval: EvalArgs,
        /// Comma-separated variants (repeatable).
        #[arg(long, value_delimiter = ',', default_value = "full,no_kb,no_visual,no_program")]
        config: Vec<AblationConfig>,
    },
    /// Knowledge base queries.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Dataset manifests.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Args, Clone)]
struct AnswerArgs {
    #[arg(long)]
    image: String,
    #[arg(long)]
    question: String,
    /// Pipeline variant: full, no_kb, no_visual or no_program.
    #[arg(long, default_value = "full")]
    config: AblationConfig,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// Dataset manifest; defaults to the bundled sample.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Match a mention against entity names and aliases.
    Lookup {
        mention: String,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Print an entity record.
    Show { id: String },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Category composition and question statistics.
    Stats {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Counts-only manifest; `bundled` for the published composition.
        #[arg(long, conflicts_with = "manifest")]
        counts: Option<String>,
    },
    /// Validate a manifest against the knowledge base.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Treat warnings as failures.
        #[arg(long)]
        strict: bool,
    },
    /// Cohen's kappa between two annotators (tab-separated label pairs).
    Agreement { labels: PathBuf },
}

fn open(path: &Path) -> Res<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| fail(exit::INPUT, format!("{}: {e}", path.display())))
}

fn load_kb(global: &Global) -> Res<KnowledgeBase> {
    match &global.kb {
        None => Ok(bundled::starter_kb()),
        Some(path) => kb::load_kb(open(path)?).map_err(|e| fail(exit::INPUT, format!("{}: {e}", path.display()))),
    }
}

fn check_threshold(t: f64) -> Res<f64> {
    if (0.0..=1.0).contains(&t) {
        Ok(t)
    } else {
        Err(fail(exit::USAGE, format!("threshold must be in [0, 1], got {t}")))
    }
}

fn build_engine(global: &Global, args: &PipelineArgs) -> Res<(Engine, DetectionSource)> {
    let mut engine = Engine::new(load_kb(global)?);
    if let Some(t) = args.threshold {
        engine.exec.matching.threshold = check_threshold(t)?;
    }
    if let Some(k) = args.k {
        engine.explain.k = k;
    }
    engine.generator.policy.max_repairs = args.max_repairs;
    engine.generator.policy.fallback_on_transport_error = !args.no_fallback;
    if let Some(path) = &args.exemplars {
        engine.generator.exemplars =
            load_exemplars(open(path)?).map_err(|e| fail(exit::INPUT, format!("{}: {e}", path.display())))?;
    }
    let generator_url = args.generator_url.clone();
    let kind = args
        .generator
        .unwrap_or(if generator_url.is_some() { GeneratorKind::Remote } else { GeneratorKind::Fallback });
    if kind == GeneratorKind::Remote {
        let url = generator_url.ok_or_else(|| fail(exit::USAGE, "--generator remote needs --generator-url"))?;
        engine.backend = Some(Box::new(RemoteGenerator::from_env(url)));
    }
    let source = match (&args.detector_url, &args.detections) {
        (Some(url), _) => DetectionSource::Remote { endpoint: url.clone() },
        (None, Some(path)) => DetectionSource::Fixtures(
            load_detection_index(open(path)?).map_err(|e| fail(exit::INPUT, format!("{}: {e}", path.display())))?,
        ),
        (None, None) => DetectionSource::Fixtures(bundled::fixtures()),
    };
    Ok((engine, source))
}

fn pipeline_failure(e: PipelineError) -> Failure {
    let code = match &e {
        PipelineError::MissingImage(_) => exit::MISSING_FIXTURE,
        PipelineError::Detector(_) => exit::DETECTOR,
        PipelineError::Generator(_) => exit::GENERATOR,
        PipelineError::Exec(_) => exit::INTERNAL,
    };
    fail(code, e.to_string())
}

fn load_manifest(path: Option<&Path>, kb: &KnowledgeBase) -> Res<Vec<DatasetRecord>> {
    match path {
        None => Ok(bundled::sample_manifest(Some(kb)).records),
        Some(p) => dataset::load_manifest(open(p)?, Some(kb))
            .map(|l| l.records)
            .map_err(|e| fail(exit::INPUT, format!("{}: {e}", p.display()))),
    }
}

fn json_line<T: serde::Serialize>(value: &T) -> Res<String> {
    serde_json::to_string(value)
        .map(|s| s + "\n")
        .map_err(|e| fail(exit::INTERNAL, e.to_string()))
}

fn render_answer(out: &AnswerOutput, full: bool) -> String {
    let e = &out.explanation;
    let mut s = format!("answer: {}\n", e.answer);
    if e.uncertain {
        s.push_str("(uncertain)\n");
    }
    if !out.program.is_empty() {
        s.push_str("program:\n");
        for line in out.program.lines() {
            s.push_str(&format!("  {line}\n"));
        }
    }
    if !full {
        return s;
    }
    s.push_str(&format!("identification: {}\n", e.sections.identification));
    if !e.sections.cultural_context.is_empty() {
        s.push_str(&format!("cultural context: {}\n", e.sections.cultural_context));
    }
    if !e.sections.elaboration.is_empty() {
        s.push_str(&format!("elaboration: {}\n", e.sections.elaboration));
    }
    s.push_str("evidence:\n");
    for ev in &e.evidence {
        let b = &ev.detection.bbox;
        s.push_str(&format!(
            "  region {} `{}` conf {:.2} box [{}, {}, {}, {}] saliency {:.3}{}\n",
            ev.region,
            ev.detection.label,
            ev.detection.confidence,
            b.x1,
            b.y1,
            b.x2,
            b.y2,
            ev.saliency,
            ev.entity_id.as_deref().map(|id| format!(" -> {id}")).unwrap_or_default()
        ));
    }
    s.push_str(&format!(
        "consistency: {}\n",
        if out.consistency.overall { "pass" } else { "FAIL" }
    ));
    for c in &out.consistency.checks {
        let mark = if c.passed { "ok" } else { "failed" };
        let id = serde_json::to_value(c.check_id).ok().and_then(|v| v.as_str().map(str::to_string));
        s.push_str(&format!("  {}: {mark}", id.unwrap_or_default()));
        if !c.passed {
            s.push_str(&format!(" ({})", c.note));
        }
        s.push('\n');
    }
    s
}

fn run(cli: Cli) -> Res<String> {
    let g = &cli.global;
    let threads = g.threads.unwrap_or(0);
    match &cli.command {
        Command::Answer(a) | Command::Explain { answer: a, .. } => {
            let (engine, source) = build_engine(g, &a.pipeline)?;
            let out = run_answer(&engine, &source, &a.image, &a.question, a.config).map_err(pipeline_failure)?;
            let full = matches!(cli.command, Command::Explain { .. });
            if let Command::Explain {
                svg: Some(path),
                width,
                height,
                ..
            } = &cli.command
            {
                std::fs::write(path, render_overlay_svg(&out.explanation, *width, *height))
                    .map_err(|e| fail(exit::OUTPUT, format!("{}: {e}", path.display())))?;
            }
            match g.format {
                Format::Human => Ok(render_answer(&out, full)),
                Format::JsonLines => json_line(&out),
            }
        }
        Command::Eval { eval, config } => run_eval(g, eval, &[*config], threads),
        Command::Ablate { eval, config } => run_eval(g, eval, config, threads),
        Command::Kb { command } => {
            let kb = load_kb(g)?;
            match command {
                KbCommand::Lookup { mention, threshold } => {
                    let t = check_threshold(threshold.unwrap_or(0.75))?;
                    let hits = match_entity(mention, &kb, t);
                    let mut s = String::new();
                    for h in &hits {
                        match g.format {
                            Format::Human => s.push_str(&format!(
                                "{}\t{:.4}\t{}\t{:?}\n",
                                h.entity_id, h.score, h.matched_alias, h.method
                            )),
                            Format::JsonLines => s.push_str(&json_line(h)?),
                        }
                    }
                    if hits.is_empty() && g.format == Format::Human {
                        s.push_str("no match\n");
                    }
                    Ok(s)
                }
                KbCommand::Show { id } => {
                    let e = kb::get_entity(id, &kb).map_err(|e| fail(exit::INPUT, e.to_string()))?;
                    match g.format {
                        Format::Human => serde_json::to_string_pretty(e)
                            .map(|s| s + "\n")
                            .map_err(|e| fail(exit::INTERNAL, e.to_string())),
                        Format::JsonLines => json_line(e),
                    }
                }
            }
        }
        Command::Dataset { command } => run_dataset(g, command),
    }
}

fn run_eval(g: &Global, args: &EvalArgs, configs: &[AblationConfig], threads: usize) -> Res<String> {
    let (engine, source) = build_engine(g, &args.pipeline)?;
    let records = load_manifest(args.manifest.as_deref(), &engine.kb)?;
    let opts = EvalOptions {
        threads,
        ..EvalOptions::default()
    };
    let mut reports: Vec<MetricReport> = Vec::new();
    for &c in configs {
        let r = evalkit::run_ablation(&engine, &source, &records, c, &opts)
            .map_err(|e| fail(exit::INTERNAL, e.to_string()))?;
        reports.push(r);
    }
    // a detector outage fails every item; report it as such
    if let DetectionSource::Remote { .. } = source {
        if let Some(r) = reports.iter().find(|r| r.n == 0 && r.failed > 0) {
            let msg = r.per_item[0].error.clone().unwrap_or_default();
            return Err(fail(exit::DETECTOR, msg));
        }
    }
    match g.format {
        Format::JsonLines => {
            let mut s = String::new();
            for r in &reports {
                s.push_str(&json_line(&serde_json::json!({"seed": g.seed, "report": r}))?);
            }
            Ok(s)
        }
        Format::Human => {
            let mut s = evalkit::render_table(&reports);
            for r in &reports {
                s.push_str(&format!(
                    "{}: n={} failed={} ROUGE-L {:.4} METEOR-lite {:.4}\n",
                    r.config, r.n, r.failed, r.aggregate.rouge_l, r.aggregate.meteor_lite
                ));
                for item in r.per_item.iter().filter(|i| i.error.is_some()) {
                    s.push_str(&format!("  {}: {}\n", item.item_id, item.error.as_deref().unwrap_or("")));
                }
            }
            Ok(s)
        }
    }
}

fn run_dataset(g: &Global, command: &DatasetCommand) -> Res<String> {
    match command {
        DatasetCommand::Stats { manifest, counts } => {
            let stats = match (manifest, counts.as_deref()) {
                (Some(p), _) => {
                    let load = dataset::load_manifest(open(p)?, None)
                        .map_err(|e| fail(exit::INPUT, format!("{}: {e}", p.display())))?;
                    dataset::compute_stats(&load.records)
                }
                (None, Some("bundled")) => dataset::compute_stats_from_counts(&bundled::composition_counts()),
                (None, Some(p)) => {
                    let m = dataset::load_counts_manifest(open(Path::new(p))?)
                        .map_err(|e| fail(exit::INPUT, format!("{p}: {e}")))?;
                    dataset::compute_stats_from_counts(&m)
                }
                (None, None) => dataset::compute_stats(&bundled::sample_manifest(None).records),
            };
            match g.format {
                Format::Human => {
                    let mut s = stats.render_table();
                    s.push_str("\nper category:\n");
                    for c in &stats.categories {
                        s.push_str(&format!("  {}: {} ({:.1}%)\n", c.category, c.images, c.percent));
                    }
                    Ok(s)
                }
                Format::JsonLines => json_line(&stats),
            }
        }
        DatasetCommand::Validate { manifest, strict } => {
            let kb = load_kb(g)?;
            let load = dataset::load_manifest(open(manifest)?, Some(&kb))
                .map_err(|e| fail(exit::VALIDATION, format!("{}: {e}", manifest.display())))?;
            let mut s = String::new();
            for w in &load.warnings {
                match g.format {
                    Format::Human => s.push_str(&format!("warning: line {} ({}): {}\n", w.line, w.image_id, w.message)),
                    Format::JsonLines => s.push_str(&json_line(w)?),
                }
            }
            if *strict && !load.warnings.is_empty() {
                return Err(fail(
                    exit::VALIDATION,
                    format!("{s}{} warning(s) in strict mode", load.warnings.len()),
                ));
            }
            if g.format == Format::Human {
                s.push_str(&format!("{} records valid\n", load.records.len()));
            }
            Ok(s)
        }
        DatasetCommand::Agreement { labels } => {
            let (a, b) = evalkit::load_label_pairs(open(labels)?)
                .map_err(|e| fail(exit::INPUT, format!("{}: {e}", labels.display())))?;
            let k: f64 = evalkit::cohen_kappa(&a, &b).map_err(|e| fail(exit::VALIDATION, e.to_string()))?;
            match g.format {
                Format::Human => Ok(format!("items: {}\nkappa: {k:.4}\n", a.len())),
                Format::JsonLines => json_line(&serde_json::json!({"items": a.len(), "kappa": k})),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    let out_path = cli.global.out.clone();
    let result = run(cli).and_then(|text| {
        let written = match &out_path {
            Some(p) => std::fs::write(p, &text),
            None => std::io::stdout().lock().write_all(text.as_bytes()),
        };
        written.map_err(|e| fail(exit::OUTPUT, e.to_string()))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
