use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use rvfuzz_core::config::Config;
use rvfuzz_core::corpus::{load_seed_file, Corpus, Origin, ResourceClass, SeedFormat, SeedMeta};
use rvfuzz_core::difftest::{
    compare, format_trace, run_campaign, run_reference, run_reference_with_bug, Backend,
    CampaignConfig, CommitTrace, Divergence, InjectedBug, SeedInput,
};
use rvfuzz_core::isa::{decode, disasm, to_hex_text, Entry};
use rvfuzz_core::mutation::{mutant_rng, mutate_seed, reassemble, AcceptPolarity, Seed};
use rvfuzz_core::similarity::instruction_similarity;

#[derive(Parser)]
#[command(
    name = "rvfuzz",
    version,
    about = "Similarity-guided RISC-V test-case mutation and differential testing"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file with [similarity], [mutation] and [difftest] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides mutation.rng_seed from the config.
    #[arg(long, global = true)]
    rng_seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    output: OutputFormat,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    /// One JSON record per line.
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Split a seed into CTI-terminated blocks.
    Segment {
        seed: PathBuf,
        #[arg(long, default_value = "auto")]
        format: SeedFormat,
        /// List every entry of every block.
        #[arg(long)]
        disasm: bool,
    },
    /// Similarity breakdown of two instruction words (hex).
    Sim { word_a: String, word_b: String },
    /// Generate similarity-guided mutants of a seed.
    Mutate(MutateArgs),
    /// Mutate seeds and run every mutant on two backends.
    Fuzz(FuzzArgs),
    /// Run one test case on two backends and compare their traces.
    Difftest {
        testcase: PathBuf,
        #[arg(long, default_value = "auto")]
        format: SeedFormat,
        #[command(flatten)]
        backends: BackendArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Print the built-in interpreter's commit trace for a test case.
    Trace {
        testcase: PathBuf,
        #[arg(long, default_value = "auto")]
        format: SeedFormat,
        /// Enable an injected bug (addiw-no-sext, sltu-flip, imm-range-unchecked, jalr-misaligned-ok).
        #[arg(long)]
        bug: Option<String>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Manage a seed corpus directory.
    #[command(subcommand)]
    Corpus(CorpusCommand),
}

#[derive(Args)]
struct BackendArgs {
    /// clean, bug:<id> or external:<backend.toml>
    #[arg(long, default_value = "clean")]
    backend_a: String,
    #[arg(long, default_value = "clean")]
    backend_b: String,
}

#[derive(Args)]
struct ExecArgs {
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    memory_bytes: Option<usize>,
    /// Also compare final pc, registers and halt cause.
    #[arg(long)]
    final_state: bool,
}

#[derive(Args)]
struct MutationArgs {
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long, value_enum)]
    polarity: Option<Polarity>,
    /// Only produce instructions the built-in interpreter executes.
    #[arg(long)]
    executable_only: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Polarity {
    Below,
    Above,
}

#[derive(Args)]
struct MutateArgs {
    seed: PathBuf,
    #[arg(long, default_value = "auto")]
    format: SeedFormat,
    /// Number of mutants to generate.
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[command(flatten)]
    mutation: MutationArgs,
    /// Directory for mutant files, named by content id.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write mutants as hex text instead of raw binary.
    #[arg(long)]
    hex: bool,
    /// Write all mutation reports here as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record the seed and its mutants in this corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct FuzzArgs {
    /// Seed files (raw, hex or ELF).
    seeds: Vec<PathBuf>,
    /// Use every seed of this corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    backends: BackendArgs,
    #[arg(long, default_value_t = 10)]
    rounds: u32,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    mutation: MutationArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Write the full campaign report here as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Include per-seed wall-clock time in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Add one seed file.
    Add {
        dir: PathBuf,
        file: PathBuf,
        #[arg(long, default_value = "auto")]
        format: SeedFormat,
        #[arg(long, value_enum, default_value_t = OriginArg::Generated)]
        origin: OriginArg,
        #[arg(long)]
        source_processor: Option<String>,
        #[arg(long)]
        report_url: Option<String>,
        #[arg(long, value_enum)]
        resource_class: Option<ResourceArg>,
        /// Parent seed id (required for mutants).
        #[arg(long)]
        parent: Option<String>,
        /// Test case was written by hand from a report.
        #[arg(long)]
        manual: bool,
    },
    /// Summarize a corpus.
    Stats { dir: PathBuf },
    /// Import crawler records (JSON Lines).
    Import { dir: PathBuf, records: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum OriginArg {
    HistoricalBug,
    Generated,
    Mutant,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResourceArg {
    Executable,
    PartialSnippet,
    DescriptionOnly,
}

enum Status {
    Ok,
    Divergence,
}

struct Ctx {
    config: Config,
    structured: bool,
}

impl Ctx {
    fn record<T: Serialize>(&self, value: &T) {
        println!(
            "{}",
            serde_json::to_string(value).expect("record serializes")
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Divergence) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Status> {
    let mut config = match &cli.global.config {
        Some(path) => {
            tracing::info!(path = %path.display(), "loading config");
            Config::load(path)?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.global.rng_seed {
        config.mutation.rng_seed = seed;
    }
    let ctx = Ctx {
        config,
        structured: cli.global.output == OutputFormat::Structured,
    };
    match cli.command {
        Command::Segment {
            seed,
            format,
            disasm,
        } => cmd_segment(&ctx, &seed, format, disasm),
        Command::Sim { word_a, word_b } => cmd_sim(&ctx, &word_a, &word_b),
        Command::Mutate(args) => cmd_mutate(&ctx, args),
        Command::Fuzz(args) => cmd_fuzz(&ctx, args),
        Command::Difftest {
            testcase,
            format,
            backends,
            exec,
        } => cmd_difftest(&ctx, &testcase, format, &backends, &exec),
        Command::Trace {
            testcase,
            format,
            bug,
            exec,
        } => cmd_trace(&ctx, &testcase, format, bug.as_deref(), &exec),
        Command::Corpus(cmd) => cmd_corpus(&ctx, cmd),
    }
}

fn load_seed(path: &Path, format: SeedFormat) -> Result<Vec<u8>> {
    load_seed_file(path, format).with_context(|| format!("reading {}", path.display()))
}

fn cmd_segment(ctx: &Ctx, path: &Path, format: SeedFormat, show_entries: bool) -> Result<Status> {
    let seed = Seed::from_bytes(&load_seed(path, format)?)?;
    let words = seed.entry_count();
    if ctx.structured {
        ctx.record(
            &json!({"kind": "summary", "blocks": seed.blocks.len(), "words": words, "id": seed.id}),
        );
    } else {
        let plural = if seed.blocks.len() == 1 { "" } else { "s" };
        println!(
            "{} block{plural}, {words} words, id {}",
            seed.blocks.len(),
            seed.id
        );
    }
    for (i, block) in seed.blocks.iter().enumerate() {
        let term = block.terminator.map(|t| disasm(&Entry::Inst(t)));
        let entries: Vec<String> = block.entries().map(|e| disasm(&e)).collect();
        if ctx.structured {
            ctx.record(&json!({
                "kind": "block",
                "index": i,
                "offset": block.start_offset,
                "size": block.len() * 4,
                "terminator": term,
                "entries": if show_entries { Some(&entries) } else { None },
            }));
        } else {
            println!(
                "block {i}: offset {:#06x} size {} terminator {}",
                block.start_offset,
                block.len() * 4,
                term.as_deref().unwrap_or("(none)")
            );
            if show_entries {
                for (j, (text, word)) in entries.iter().zip(block.words()).enumerate() {
                    println!("  {:#06x}  {word:08x}  {text}", block.start_offset + 4 * j);
                }
            }
        }
    }
    Ok(Status::Ok)
}

fn parse_word(text: &str) -> Result<u32> {
    let digits = text
        .strip_prefix("0x")
        .or_else(|| text.strip_prefix("0X"))
        .unwrap_or(text);
    u32::from_str_radix(digits, 16).with_context(|| format!("`{text}` is not a 32-bit hex word"))
}

fn cmd_sim(ctx: &Ctx, a: &str, b: &str) -> Result<Status> {
    let (wa, wb) = (parse_word(a)?, parse_word(b)?);
    let ia =
        decode(wa).with_context(|| format!("{wa:#010x} does not decode to a known instruction"))?;
    let ib =
        decode(wb).with_context(|| format!("{wb:#010x} does not decode to a known instruction"))?;
    let score = instruction_similarity(&ia, &ib, &ctx.config.similarity);
    let bd = score.breakdown;
    if ctx.structured {
        ctx.record(&json!({
            "a": disasm(&Entry::Inst(ia)),
            "b": disasm(&Entry::Inst(ib)),
            "type": bd.type_,
            "opcode": bd.opcode,
            "subsemantic": bd.subsemantic,
            "field": bd.field,
            "total": score.value,
        }));
    } else {
        println!("a            {}", disasm(&Entry::Inst(ia)));
        println!("b            {}", disasm(&Entry::Inst(ib)));
        println!("type         {}", bd.type_);
        println!("opcode       {}", bd.opcode);
        println!("subsemantic  {}", bd.subsemantic);
        println!("field        {}", bd.field);
        println!("total        {}", score.value);
    }
    Ok(Status::Ok)
}

fn mutation_config(
    ctx: &Ctx,
    args: &MutationArgs,
) -> Result<rvfuzz_core::mutation::MutationConfig> {
    let mut cfg = ctx.config.mutation.clone();
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if let Some(r) = args.retries {
        cfg.retries = r;
    }
    if let Some(p) = args.polarity {
        cfg.accept_polarity = match p {
            Polarity::Below => AcceptPolarity::BelowThreshold,
            Polarity::Above => AcceptPolarity::AboveThreshold,
        };
    }
    cfg.executable_only |= args.executable_only;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_mutate(ctx: &Ctx, args: MutateArgs) -> Result<Status> {
    let cfg = mutation_config(ctx, &args.mutation)?;
    let bytes = load_seed(&args.seed, args.format)?;
    let seed = Seed::from_bytes(&bytes)?;
    let mut corpus = match &args.corpus {
        Some(dir) => {
            let mut corpus = Corpus::open(dir)?;
            if corpus.manifest().find(&seed.id).is_none() {
                corpus.add_seed(&bytes, SeedMeta::new(Origin::Generated))?;
            }
            Some(corpus)
        }
        None => None,
    };
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut reports = Vec::new();
    for round in 0..args.rounds {
        let mut rng = mutant_rng(cfg.rng_seed, &seed.id, round);
        let (mutant, report) = mutate_seed(&seed, &cfg, &ctx.config.similarity, &mut rng);
        let out = reassemble(&mutant);
        let mut written = None;
        if let Some(dir) = &args.out_dir {
            let (name, data) = if args.hex {
                let words = out
                    .chunks_exact(4)
                    .map(|w| u32::from_le_bytes(w.try_into().expect("word")));
                (
                    format!("{}.hex", mutant.id),
                    to_hex_text(words).into_bytes(),
                )
            } else {
                (format!("{}.bin", mutant.id), out.clone())
            };
            let path = dir.join(name);
            fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
            written = Some(path);
        }
        if let Some(corpus) = corpus.as_mut() {
            if mutant.id != seed.id {
                corpus.add_seed(&out, SeedMeta::mutant_of(&seed.id))?;
            }
        }
        if ctx.structured {
            ctx.record(&json!({"round": round, "path": written, "report": report}));
        } else {
            println!(
                "round {round}: mutant {} blocks changed {}/{}",
                mutant.id, report.blocks_changed, report.blocks_total
            );
        }
        reports.push(json!({"round": round, "report": report}));
    }
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&reports)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Status::Ok)
}

fn backend(spec: &str) -> Result<Backend> {
    Backend::parse(spec).with_context(|| format!("backend `{spec}`"))
}

fn exec_settings(
    ctx: &Ctx,
    exec: &ExecArgs,
) -> (rvfuzz_core::difftest::Limits, rvfuzz_core::difftest::Policy) {
    let mut limits = ctx.config.difftest.limits;
    let mut policy = ctx.config.difftest.policy;
    if let Some(n) = exec.max_steps {
        limits.max_steps = n;
    }
    if let Some(n) = exec.memory_bytes {
        limits.memory_bytes = n;
    }
    policy.final_state |= exec.final_state;
    (limits, policy)
}

fn cmd_fuzz(ctx: &Ctx, args: FuzzArgs) -> Result<Status> {
    let mutation = mutation_config(ctx, &args.mutation)?;
    let (limits, policy) = exec_settings(ctx, &args.exec);
    let (a, b) = (
        backend(&args.backends.backend_a)?,
        backend(&args.backends.backend_b)?,
    );

    let mut seeds = Vec::new();
    if let Some(dir) = &args.corpus {
        let corpus = Corpus::open(dir)?;
        for record in corpus.records() {
            seeds.push(SeedInput {
                id: record.id.clone(),
                bytes: corpus.read_seed(record)?,
            });
        }
    }
    for path in &args.seeds {
        let bytes = load_seed(path, SeedFormat::Auto)?;
        seeds.push(SeedInput {
            id: path.display().to_string(),
            bytes,
        });
    }
    if seeds.is_empty() {
        bail!("no seeds: pass seed files or --corpus");
    }

    let cfg = CampaignConfig {
        rounds: args.rounds,
        mutation,
        similarity: ctx.config.similarity.clone(),
        limits,
        policy,
        jobs: args.jobs,
        timings: args.timings,
    };
    let report = run_campaign(&seeds, &cfg, &a, &b);
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }

    if ctx.structured {
        for group in &report.divergences {
            ctx.record(&json!({"kind": "divergence", "group": group}));
        }
        for case in &report.error_cases {
            ctx.record(&json!({"kind": "error", "case": case}));
        }
        ctx.record(&json!({
            "kind": "summary",
            "backend_a": report.backend_a,
            "backend_b": report.backend_b,
            "seeds": report.seeds,
            "rounds": report.rounds,
            "mutants": report.mutants,
            "divergent_mutants": report.divergent_mutants,
            "unique_divergences": report.unique_divergences,
            "errors": report.errors,
        }));
    } else {
        println!("{} vs {}", report.backend_a, report.backend_b);
        println!(
            "seeds {} rounds {} mutants {} divergent {} unique {} errors {}",
            report.seeds,
            report.rounds,
            report.mutants,
            report.divergent_mutants,
            report.unique_divergences,
            report.errors
        );
        for g in &report.divergences {
            println!(
                "divergence pc={:#x} field={} count={} seed={} round={} step={}",
                g.pc, g.field, g.count, g.seed_id, g.round, g.divergence.step
            );
        }
        for e in &report.error_cases {
            eprintln!(
                "warning: seed {} round {:?}: {}",
                e.seed_id, e.round, e.message
            );
        }
    }

    if report.found_divergence() {
        Ok(Status::Divergence)
    } else if report.mutants > 0 && report.errors >= report.mutants {
        bail!("every test case failed to run; see errors above")
    } else {
        Ok(Status::Ok)
    }
}

fn print_divergence(ctx: &Ctx, d: &Divergence) {
    if ctx.structured {
        ctx.record(&json!({"kind": "divergence", "divergence": d}));
        return;
    }
    println!(
        "divergence at step {} pc={:#x} field={}",
        d.step, d.pc, d.field
    );
    println!("  a: {}", d.a);
    println!("  b: {}", d.b);
    for (name, ctxr) in [("a", &d.context_a), ("b", &d.context_b)] {
        println!("  context {name}:");
        for r in ctxr {
            println!("    {r}");
        }
    }
}

fn cmd_difftest(
    ctx: &Ctx,
    path: &Path,
    format: SeedFormat,
    backends: &BackendArgs,
    exec: &ExecArgs,
) -> Result<Status> {
    let bytes = load_seed(path, format)?;
    let (limits, policy) = exec_settings(ctx, exec);
    let a = backend(&backends.backend_a)?;
    let b = backend(&backends.backend_b)?;
    let ta: CommitTrace = a.run(&bytes, &limits).context("backend A")?;
    let tb: CommitTrace = b.run(&bytes, &limits).context("backend B")?;
    match compare(&ta, &tb, &policy) {
        Some(d) => {
            print_divergence(ctx, &d);
            Ok(Status::Divergence)
        }
        None => {
            if ctx.structured {
                ctx.record(&json!({"kind": "match", "commits": ta.records.len()}));
            } else {
                println!("no divergence ({} commits)", ta.records.len());
            }
            Ok(Status::Ok)
        }
    }
}

fn cmd_trace(
    ctx: &Ctx,
    path: &Path,
    format: SeedFormat,
    bug: Option<&str>,
    exec: &ExecArgs,
) -> Result<Status> {
    let bytes = load_seed(path, format)?;
    let (limits, _) = exec_settings(ctx, exec);
    let trace = match bug {
        Some(id) => run_reference_with_bug(&bytes, &limits, id.parse::<InjectedBug>()?),
        None => run_reference(&bytes, &limits),
    };
    if ctx.structured {
        for r in &trace.records {
            ctx.record(r);
        }
        ctx.record(&json!({"kind": "halt", "final": trace.final_state}));
    } else {
        print!("{}", format_trace(&trace));
    }
    Ok(Status::Ok)
}

fn cmd_corpus(ctx: &Ctx, cmd: CorpusCommand) -> Result<Status> {
    match cmd {
        CorpusCommand::Add {
            dir,
            file,
            format,
            origin,
            source_processor,
            report_url,
            resource_class,
            parent,
            manual,
        } => {
            let bytes = load_seed(&file, format)?;
            let meta = SeedMeta {
                origin: match origin {
                    OriginArg::HistoricalBug => Origin::HistoricalBug,
                    OriginArg::Generated => Origin::Generated,
                    OriginArg::Mutant => Origin::Mutant,
                },
                source_processor,
                report_url,
                resource_class: resource_class.map(|r| match r {
                    ResourceArg::Executable => ResourceClass::Executable,
                    ResourceArg::PartialSnippet => ResourceClass::PartialSnippet,
                    ResourceArg::DescriptionOnly => ResourceClass::DescriptionOnly,
                }),
                parent_id: parent,
                manual,
            };
            let mut corpus = Corpus::open(&dir)?;
            let record = corpus.add_seed(&bytes, meta)?;
            if ctx.structured {
                ctx.record(&record);
            } else {
                println!("{} {}", record.id, record.path);
            }
        }
        CorpusCommand::Stats { dir } => {
            let corpus = Corpus::open(&dir)?;
            let stats = corpus.stats();
            if ctx.structured {
                ctx.record(&stats);
            } else {
                println!("seeds {} pending {}", stats.seeds, stats.pending);
                let join = |m: &std::collections::BTreeMap<&str, usize>| {
                    m.iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                };
                println!("origin: {}", join(&stats.by_origin));
                println!("resource class: {}", join(&stats.by_resource_class));
                println!(
                    "words {} instructions {} opaque {}",
                    stats.total_words, stats.instructions, stats.opaque
                );
                println!("opclass: {}", join(&stats.by_opclass));
                println!("unit: {}", join(&stats.by_unit));
                for s in &stats.per_seed {
                    println!(
                        "seed {} instructions {} ctis {} density {:.3}",
                        s.id, s.instructions, s.ctis, s.cti_density
                    );
                }
                for id in &stats.unreadable {
                    println!("unreadable {id}");
                }
            }
        }
        CorpusCommand::Import { dir, records } => {
            let mut corpus = Corpus::open(&dir)?;
            let summary = corpus.import(&records)?;
            if ctx.structured {
                ctx.record(&summary);
            } else {
                println!(
                    "added {} duplicates {} pending {}",
                    summary.added.len(),
                    summary.duplicates.len(),
                    summary.pending
                );
            }
        }
    }
    Ok(Status::Ok)
}
