use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use itemcert::api::DecisionRequest;
use itemcert::clock::{Clock, FixedClock, SystemClock};
use itemcert::config::PipelineConfig;
use itemcert::connectors::generator::{
    generate_batch, quarantine, GenerateOptions, GenerationRequest, GeneratorAdapter,
    HttpChatAdapter, StubAdapter,
};
use itemcert::connectors::ingest::{ingest_items, to_line};
use itemcert::connectors::simulator::{
    plant_review_defects, simulate_corpus, PlantedDefect, SimulationProfile,
};
use itemcert::ledger::{verify_bytes, Anchor, AuditSink, ChainStatus, EventType, Ledger};
use itemcert::model::{rfc3339, CertificationRecord, HexDigest, ItemEdits, Label, ReviewAction, Status, TaxonomyLevel};
use itemcert::pipeline::{certify_batch, Verifier};
use itemcert::report::{render_document, summary_report, Period};
use itemcert::store::{read_records, write_records, RecordStore};
use itemcert_client::{ReviewClient, ScriptedReviewer};
use itemcert_service::{AppState, TOKEN_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_LEDGER: u8 = 3;

#[derive(Parser)]
#[command(name = "itemcert", version, about = "Certify generated multiple-choice items")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, env = "ITEMCERT_CONFIG")]
    config: Option<PathBuf>,
    /// Use a fixed clock for reproducible output. Without a value the
    /// instant is 2025-01-01T00:00:00Z; pass one as `--fixed-clock=<ts>`.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = FixedClock::DEFAULT_INSTANT, value_name = "RFC3339")]
    fixed_clock: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest an items file, verify, and certify.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ledger file; defaults to ledger.jsonl next to --out.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Build a simulated corpus and run the full pipeline over it.
    Simulate {
        /// Built-in profile name (poc-2025) or a TOML profile file.
        #[arg(long)]
        profile: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate items with the stub or an HTTP chat endpoint.
    Generate {
        #[arg(long, required = true)]
        topic: Vec<String>,
        /// Target level, e.g. Bloom:Apply.
        #[arg(long, required = true)]
        level: Vec<String>,
        #[arg(long, default_value = "Undergraduate computing")]
        course_context: String,
        #[arg(long, value_enum, default_value_t = AdapterKind::Stub)]
        adapter: AdapterKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Export an accreditation report.
    Report {
        #[arg(long)]
        certs: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Structured)]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        /// Log a ReportExported event to this ledger.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Audit ledger tools.
    Audit {
        #[command(subcommand)]
        command: AuditCommand,
    },
    /// Serve the review API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        certs: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Review commands against a running service.
    Review(ReviewArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AdapterKind {
    Stub,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Structured,
    Document,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Verify the hash chain; exit 0 only if it is intact.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        /// For a rotated file: `<entry_hash>@<first_index>` of the previous
        /// file's last entry.
        #[arg(long)]
        anchor: Option<String>,
    },
}

#[derive(Args)]
struct ReviewArgs {
    #[arg(long, global = true, env = "REVIEW_API_URL", default_value = "http://127.0.0.1:8080")]
    url: String,
    #[arg(long, global = true, env = TOKEN_ENV, hide_env_values = true)]
    token: Option<String>,
    #[command(subcommand)]
    command: ReviewCommand,
}

#[derive(Subcommand)]
enum ReviewCommand {
    /// List a queue page.
    Queue {
        #[arg(long, default_value = "yellow")]
        status: String,
        #[arg(long, default_value_t = 1)]
        page: usize,
        #[arg(long, default_value_t = 50)]
        page_size: usize,
    },
    /// Print the full package for an item.
    Show { id: String },
    /// Submit a decision for an item at its current version.
    Decide {
        id: String,
        #[arg(long, value_enum)]
        action: ActionArg,
        #[arg(long)]
        reviewer: String,
        #[arg(long, default_value = "")]
        notes: String,
        /// JSON object of field edits (for approve-with-edits).
        #[arg(long)]
        edits: Option<String>,
        #[arg(long)]
        override_reason: Option<String>,
    },
    /// Run a scripted reviewer over a plan written by `simulate`.
    Replay {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value = "scripted-reviewer")]
        reviewer: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ActionArg {
    ApproveUnchanged,
    ApproveWithEdits,
    Reject,
}

impl From<ActionArg> for ReviewAction {
    fn from(a: ActionArg) -> Self {
        match a {
            ActionArg::ApproveUnchanged => ReviewAction::ApproveUnchanged,
            ActionArg::ApproveWithEdits => ReviewAction::ApproveWithEdits,
            ActionArg::Reject => ReviewAction::Reject,
        }
    }
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn data(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_DATA,
        error: error.into(),
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(error: E) -> Self {
        data(error)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn clock(cli: &Cli) -> Result<Arc<dyn Clock>, Failure> {
    Ok(match &cli.fixed_clock {
        Some(ts) => Arc::new(FixedClock(parse_time(ts).map_err(|e| Failure {
            code: EXIT_USAGE,
            error: e,
        })?)),
        None => Arc::new(SystemClock),
    })
}

fn parse_time(s: &str) -> anyhow::Result<DateTime<Utc>> {
    rfc3339::parse(s).with_context(|| format!("`{s}` is not an RFC 3339 timestamp"))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    Ok(match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn dispatch(cli: Cli) -> CmdResult {
    let config = load_config(&cli)?;
    let clock = clock(&cli)?;
    match &cli.command {
        Command::Run { input, out, ledger } => run(&config, clock, input, out, ledger.as_deref()),
        Command::Simulate { profile, out } => simulate(&config, clock, profile, out),
        Command::Generate {
            topic,
            level,
            course_context,
            adapter,
            seed,
            out,
            ledger,
        } => generate(&config, clock, topic, level, course_context, *adapter, *seed, out, ledger.as_deref()),
        Command::Report {
            certs,
            format,
            out,
            from,
            to,
            ledger,
        } => report(clock, certs, *format, out, from.as_deref(), to.as_deref(), ledger.as_deref()),
        Command::Audit {
            command: AuditCommand::Verify { ledger, anchor },
        } => audit_verify(ledger, anchor.as_deref()),
        Command::Serve { addr, certs, ledger } => serve(&config, clock, addr, certs, ledger),
        Command::Review(args) => review(&config, clock, args),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn default_ledger(out: &Path) -> PathBuf {
    out.parent().unwrap_or(Path::new(".")).join("ledger.jsonl")
}

fn triage_line(records: &[CertificationRecord]) -> String {
    let n = |l: Label| records.iter().filter(|r| r.label == l).count();
    format!("Green {} / Yellow {} / Red {}", n(Label::Green), n(Label::Yellow), n(Label::Red))
}

fn run(config: &PipelineConfig, clock: Arc<dyn Clock>, input: &Path, out: &Path, ledger: Option<&Path>) -> CmdResult {
    let verifier = Verifier::from_config(config)?;
    let file = fs::File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    let outcome = ingest_items(BufReader::new(file), clock.as_ref())
        .with_context(|| format!("cannot read {}", input.display()))?;
    for e in &outcome.errors {
        eprintln!("line {}: {}: {}", e.line, e.code, e.message);
    }
    let errors = outcome.errors.len();
    ensure_parent(out)?;
    let ledger_path = ledger.map(Path::to_path_buf).unwrap_or_else(|| default_ledger(out));
    let mut ledger = Ledger::open(&ledger_path, clock.clone())
        .with_context(|| format!("ledger {}", ledger_path.display()))?;
    let source = input.display().to_string();
    let records = certify_batch(outcome.into_pairs(), &verifier, clock, &mut ledger, &source)?;
    write_records(out, &records)?;
    println!("Ingested {} items, {} line errors", records.len(), errors);
    println!("{}", triage_line(&records));
    Ok(())
}

fn simulate(config: &PipelineConfig, clock: Arc<dyn Clock>, profile: &str, out: &Path) -> CmdResult {
    let started = std::time::Instant::now();
    let verifier = Verifier::from_config(config)?;
    let profile = SimulationProfile::resolve(profile)?;
    let corpus = simulate_corpus(&profile, &verifier, clock.as_ref())?;
    let (h, m, l) = corpus.band_counts();
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let mut items = String::new();
    for s in &corpus.items {
        items.push_str(&to_line(&s.item, Some(&s.provenance)));
        items.push('\n');
    }
    fs::write(out.join("items.jsonl"), items)?;

    let ledger_path = out.join("ledger.jsonl");
    if ledger_path.exists() {
        fs::remove_file(&ledger_path)?;
    }
    let mut ledger = Ledger::open(&ledger_path, clock.clone())?;
    let records = certify_batch(corpus.into_pairs(), &verifier, clock, &mut ledger, "simulation")?;
    write_records(out.join("certs.jsonl"), &records)?;

    if let Some(mix) = profile.review_sample {
        let pending: Vec<String> = records
            .iter()
            .filter(|r| r.status == Status::PendingReview)
            .map(|r| r.item.id.clone())
            .collect();
        let plan = plant_review_defects(&pending, mix, profile.seed)?;
        fs::write(out.join("review_plan.json"), serde_json::to_string_pretty(&plan)?)?;
    }

    println!("Confidence bands: high {h} / medium {m} / low {l}");
    println!("{}", triage_line(&records));
    println!("Wrote {} ({:.2}s)", out.display(), started.elapsed().as_secs_f64());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn generate(
    config: &PipelineConfig,
    clock: Arc<dyn Clock>,
    topics: &[String],
    levels: &[String],
    course_context: &str,
    adapter: AdapterKind,
    seed: u64,
    out: &Path,
    ledger: Option<&Path>,
) -> CmdResult {
    let mut requests = Vec::new();
    for level in levels {
        let level = TaxonomyLevel::parse_qualified(level).map_err(|e| Failure {
            code: EXIT_USAGE,
            error: e.into(),
        })?;
        for topic in topics {
            requests.push(GenerationRequest::new(topic.clone(), level, course_context));
        }
    }
    let mut options = GenerateOptions {
        timeout: Duration::from_secs(config.generator.timeout_seconds),
        store_prompt_text: config.generator.store_prompt_text,
    };
    let adapter: Arc<dyn GeneratorAdapter> = match adapter {
        AdapterKind::Stub => Arc::new(StubAdapter::new(seed)),
        AdapterKind::Http => {
            let (a, timeout) = HttpChatAdapter::from_env().map_err(|e| Failure {
                code: EXIT_USAGE,
                error: anyhow!(e),
            })?;
            if let Some(t) = timeout {
                options.timeout = t;
            }
            Arc::new(a)
        }
    };
    ensure_parent(out)?;
    let runtime = tokio::runtime::Runtime::new()?;
    let results = runtime.block_on(generate_batch(
        &requests,
        adapter,
        clock.clone(),
        &options,
        config.generator.parallelism,
    ));
    let ledger_path = ledger.map(Path::to_path_buf).unwrap_or_else(|| default_ledger(out));
    let mut ledger = Ledger::open(&ledger_path, clock)?;
    let mut lines = String::new();
    let mut failed = 0;
    for (request, result) in requests.iter().zip(results) {
        match result {
            Ok((item, provenance)) => {
                lines.push_str(&to_line(&item, Some(&provenance)));
                lines.push('\n');
            }
            Err(e) => {
                failed += 1;
                eprintln!("{} {}:{}: {e}", request.topic, request.target_level.framework(), request.target_level.name());
                quarantine(&mut ledger, request, &e)?;
            }
        }
    }
    fs::write(out, lines)?;
    println!("Generated {} items, {failed} quarantined", requests.len() - failed);
    Ok(())
}

fn report(
    clock: Arc<dyn Clock>,
    certs: &Path,
    format: ReportFormat,
    out: &Path,
    from: Option<&str>,
    to: Option<&str>,
    ledger: Option<&Path>,
) -> CmdResult {
    let usage = |e| Failure { code: EXIT_USAGE, error: e };
    let period = Period {
        from: from.map(parse_time).transpose().map_err(usage)?,
        to: to.map(parse_time).transpose().map_err(usage)?,
    };
    let records = read_records(certs)?;
    let report = summary_report(&records, period);
    let text = match format {
        ReportFormat::Structured => itemcert::canonical::to_canonical_string(&report)?,
        ReportFormat::Document => render_document(&report),
    };
    ensure_parent(out)?;
    fs::write(out, text)?;
    if let Some(path) = ledger {
        let mut ledger = Ledger::open(path, clock)?;
        ledger.append(
            EventType::ReportExported,
            serde_json::json!({"period": report.period, "total_records": report.total_records, "path": out.display().to_string()}),
        )?;
    }
    println!("{} records: {}", report.total_records, {
        let c = &report.triage_counts;
        format!("Green {} / Yellow {} / Red {}", c[&Label::Green], c[&Label::Yellow], c[&Label::Red])
    });
    Ok(())
}

fn parse_anchor(s: &str) -> anyhow::Result<Anchor> {
    let (hash, index) = s
        .split_once('@')
        .ok_or_else(|| anyhow!("anchor must be <entry_hash>@<first_index>"))?;
    Ok(Anchor::After {
        hash: HexDigest::parse(hash)?,
        start_index: index.parse().context("anchor index")?,
    })
}

fn audit_verify(path: &Path, anchor: Option<&str>) -> CmdResult {
    let anchor = match anchor {
        Some(a) => parse_anchor(a).map_err(|e| Failure { code: EXIT_USAGE, error: e })?,
        None => Anchor::Genesis,
    };
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    match verify_bytes(&bytes, &anchor) {
        ChainStatus::Valid => {
            let lines = bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()).count();
            println!("Valid ({lines} entries)");
            Ok(())
        }
        ChainStatus::FirstBadIndex(i) => Err(Failure {
            code: EXIT_LEDGER,
            error: anyhow!("ledger invalid: FirstBadIndex({i})"),
        }),
    }
}

fn serve(config: &PipelineConfig, clock: Arc<dyn Clock>, addr: &str, certs: &Path, ledger: &Path) -> CmdResult {
    let token = std::env::var(TOKEN_ENV).map_err(|_| Failure {
        code: EXIT_USAGE,
        error: anyhow!("{TOKEN_ENV} must be set"),
    })?;
    if token.is_empty() {
        return Err(Failure {
            code: EXIT_USAGE,
            error: anyhow!("{TOKEN_ENV} is empty"),
        });
    }
    let verifier = Verifier::from_config(config)?;
    let store = RecordStore::open(certs)?;
    let ledger = Ledger::open(ledger, clock.clone())?;
    let state = AppState::new(store, ledger, verifier, clock, token).map_err(|e| anyhow!(e))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        println!("Serving review API on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        itemcert_service::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

fn review(config: &PipelineConfig, clock: Arc<dyn Clock>, args: &ReviewArgs) -> CmdResult {
    let token = args.token.as_deref().filter(|t| !t.is_empty()).ok_or_else(|| Failure {
        code: EXIT_USAGE,
        error: anyhow!("a bearer token is required: pass --token or set {TOKEN_ENV}"),
    })?;
    let client = ReviewClient::new(&args.url, token);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        match &args.command {
            ReviewCommand::Queue { status, page, page_size } => {
                let p = client.queue(status, *page, *page_size).await?;
                println!("page {}/{} ({} items)", p.page, p.pages.max(1), p.total);
                for s in &p.items {
                    println!(
                        "{}\t{}\t{:?}\t{:.3}\t{} flags\tv{}",
                        s.id, s.label, s.status, s.confidence, s.flag_count, s.version
                    );
                }
            }
            ReviewCommand::Show { id } => {
                let p = client.package(id).await?;
                println!("{}", serde_json::to_string_pretty(&p)?);
            }
            ReviewCommand::Decide {
                id,
                action,
                reviewer,
                notes,
                edits,
                override_reason,
            } => {
                let edits: Option<ItemEdits> = edits
                    .as_deref()
                    .map(serde_json::from_str)
                    .transpose()
                    .context("--edits must be a JSON object of item fields")?;
                let current = client.package(id).await?;
                let request = DecisionRequest {
                    action: (*action).into(),
                    edits,
                    notes: notes.clone(),
                    reviewer_pseudonym: reviewer.clone(),
                    expected_version: current.record.version,
                    started_at: Some(clock.now()),
                    override_reason: override_reason.clone(),
                };
                let resp = client.decide(id, &request).await?;
                println!("{} -> {:?} (v{})", resp.summary.id, resp.summary.status, resp.summary.version);
            }
            ReviewCommand::Replay { plan, reviewer } => {
                let text = fs::read_to_string(plan).with_context(|| format!("cannot read {}", plan.display()))?;
                let plan: Vec<(String, PlantedDefect)> = serde_json::from_str(&text)?;
                let verifier = Verifier::from_config(config)?;
                let scripted = ScriptedReviewer {
                    client: &client,
                    verifier: &verifier,
                    pseudonym: reviewer.clone(),
                };
                let summary = scripted.run(&plan).await?;
                for action in ReviewAction::ALL {
                    println!("{action:?}: {}", summary.actions.get(&action).copied().unwrap_or(0));
                }
                for (id, reason) in &summary.refused {
                    eprintln!("refused {id}: {reason}");
                }
                if !summary.refused.is_empty() {
                    bail!("{} decisions were refused", summary.refused.len());
                }
            }
        }
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}
