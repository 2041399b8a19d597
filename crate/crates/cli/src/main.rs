//! `docparse`: pipelines over tagged document-parsing output.
//!
//! Data goes to stdout (or `-o`), diagnostics to stderr. Exit status is 0 on
//! success, 1 on input or grammar errors and 2 on usage errors.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use docparse_core::doc_model::{Document, PromptConfig};
use docparse_core::grammar::{
    make_serializable, serialize, ParseOptions, StreamEvent, StreamState,
};
use docparse_core::jsonl::{from_json_line, to_json_line};
use docparse_core::metrics::{aggregate, score_document, Aggregate, DocScores, EvalProfile};
use docparse_core::mtp::{greedy_decode_multi, LookupDecoder, MtpWeights};
use docparse_core::reading_order::{
    check_order, reorder, reorder_lenient, OrderPolicy, OrderViolation,
};
use docparse_core::tables::{
    emit_html, emit_latex, emit_markdown, parse_html_table_verbose, parse_latex_table_verbose,
};

#[derive(Parser)]
#[command(
    name = "docparse",
    version,
    about = "Parse, check, reorder and score tagged document output"
)]
struct Cli {
    /// Recover from malformed input instead of failing.
    #[arg(long, global = true, env = "DOCPARSE_LENIENT", value_parser = clap::builder::BoolishValueParser::new())]
    lenient: bool,
    /// Clamp out-of-range coordinates to the page.
    #[arg(long, global = true)]
    clip: bool,
    /// Input file (default: stdin).
    #[arg(short, long, global = true)]
    input: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Raw model output to JSONL.
    Parse(ParseArgs),
    /// JSONL to raw model output, one page per line.
    Serialize,
    /// Check JSONL documents against their prompts; writes a JSON report.
    Validate(ValidateArgs),
    /// Rewrite JSONL documents in a reading order.
    Reorder(ReorderArgs),
    /// Convert a table between LaTeX, HTML, Markdown and JSON.
    ConvertTable(ConvertArgs),
    /// Score hypothesis JSONL against reference JSONL.
    Eval(EvalArgs),
    /// Greedy multi-token decoding with a lookup-table decoder.
    SimMtp(SimArgs),
}

#[derive(Args)]
struct ParseArgs {
    /// Prompt tokens, e.g. "<output_markdown><predict_bbox><predict_classes>".
    #[arg(long, value_parser = parse_prompt)]
    prompt: PromptConfig,
    /// Treat every non-blank input line as a separate page.
    #[arg(long)]
    lines: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Also check reading order under this policy (v11 or tc).
    #[arg(long, value_parser = parse_order)]
    order: Option<OrderPolicy>,
}

#[derive(Args)]
struct ReorderArgs {
    /// Reading-order policy: v11 or tc.
    #[arg(long, value_parser = parse_order, default_value = "v11")]
    order: OrderPolicy,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableSource {
    Latex,
    Html,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableTarget {
    Html,
    Markdown,
    Latex,
    Json,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    from: TableSource,
    #[arg(long, value_enum)]
    to: TableTarget,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference JSONL.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Hypothesis JSONL.
    #[arg(long)]
    hyp: PathBuf,
    /// Normalization profile: plain, mip or tables.
    #[arg(long, value_parser = parse_profile, default_value = "plain")]
    profile: EvalProfile,
    /// Leave page headers and footers out of text metrics.
    #[arg(long)]
    mask_headers: bool,
}

#[derive(Args)]
struct SimArgs {
    /// JSON bundle: MTP weights plus a `decoder` lookup table.
    #[arg(long)]
    weights: PathBuf,
    /// Comma-separated prompt token ids.
    #[arg(long, value_parser = parse_tokens, default_value = "")]
    prompt: Tokens,
    /// Tokens per step (default: all heads in the bundle).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_len: usize,
    #[arg(long)]
    end_token: Option<usize>,
}

#[derive(Clone)]
struct Tokens(Vec<usize>);

fn parse_prompt(s: &str) -> Result<PromptConfig, String> {
    s.parse::<PromptConfig>().map_err(|e| e.to_string())
}

fn parse_order(s: &str) -> Result<OrderPolicy, String> {
    s.parse::<OrderPolicy>().map_err(|e| e.to_string())
}

fn parse_profile(s: &str) -> Result<EvalProfile, String> {
    s.parse::<EvalProfile>()
}

fn parse_tokens(s: &str) -> Result<Tokens, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| format!("bad token id {t:?}"))
        })
        .collect::<Result<_, _>>()
        .map(Tokens)
}

#[derive(Deserialize)]
struct SimBundle {
    #[serde(flatten)]
    weights: MtpWeights,
    decoder: LookupDecoder,
}

struct Io {
    input: Option<PathBuf>,
    output: Option<PathBuf>,
}

impl Io {
    fn input_name(&self) -> String {
        self.input
            .as_ref()
            .map_or_else(|| "<stdin>".to_owned(), |p| p.display().to_string())
    }

    fn reader(&self) -> Result<Box<dyn BufRead>> {
        Ok(match &self.input {
            None => Box::new(BufReader::new(io::stdin())),
            Some(p) => Box::new(BufReader::new(
                File::open(p).with_context(|| format!("cannot read {}", p.display()))?,
            )),
        })
    }

    fn read_all(&self) -> Result<String> {
        let mut s = String::new();
        self.reader()?
            .read_to_string(&mut s)
            .with_context(|| format!("cannot read {}", self.input_name()))?;
        Ok(s)
    }

    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            None => Box::new(BufWriter::new(io::stdout())),
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
            )),
        })
    }
}

fn read_file(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Non-blank JSONL lines as `(line number, document)`.
fn read_jsonl(text: &str, name: &str, clip: bool) -> Result<Vec<(usize, Document)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            from_json_line(l, clip)
                .map(|d| (i + 1, d))
                .map_err(|e| anyhow!("{name}:{}: {e}", i + 1))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("docparse: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let io = Io {
        input: cli.input,
        output: cli.output,
    };
    let options = ParseOptions {
        lenient: cli.lenient,
        clip: cli.clip,
    };
    // buffered so that a failed run never truncates the output file
    let mut out: Vec<u8> = Vec::new();
    let code = match cli.command {
        Command::Parse(args) => cmd_parse(&io, &mut out, args, options)?,
        Command::Serialize => cmd_serialize(&io, &mut out, options)?,
        Command::Validate(args) => cmd_validate(&io, &mut out, args, options)?,
        Command::Reorder(args) => cmd_reorder(&io, &mut out, args, options)?,
        Command::ConvertTable(args) => cmd_convert(&io, &mut out, args)?,
        Command::Eval(args) => cmd_eval(&mut out, args, options)?,
        Command::SimMtp(args) => cmd_sim(&mut out, args)?,
    };
    let mut sink = io.writer()?;
    sink.write_all(&out)
        .and_then(|()| sink.flush())
        .context("cannot write output")?;
    Ok(code)
}

/// Streams `pieces` through the parser, reporting diagnostics under `label`.
fn parse_page(
    pieces: impl Iterator<Item = Result<String>>,
    prompt: PromptConfig,
    options: ParseOptions,
    label: &str,
) -> Result<Document> {
    let mut state = StreamState::new(prompt, options);
    let mut doc = Document::new(prompt);
    let mut handle = |events: Vec<StreamEvent>| -> Result<()> {
        for event in events {
            match event {
                StreamEvent::BlockComplete(b) => doc.blocks.push(b),
                StreamEvent::Diagnostic(d) => eprintln!("{label}: {}", d.message),
                StreamEvent::Error(e) => bail!("{label}: {e}"),
            }
        }
        Ok(())
    };
    for piece in pieces {
        handle(state.feed_mut(&piece?))?;
    }
    handle(state.finish())?;
    Ok(doc)
}

fn cmd_parse(
    io: &Io,
    out: &mut dyn Write,
    args: ParseArgs,
    options: ParseOptions,
) -> Result<ExitCode> {
    let name = io.input_name();
    if args.lines {
        let text = io.read_all()?;
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let doc = parse_page(
                std::iter::once(Ok(line.to_owned())),
                args.prompt,
                options,
                &format!("{name}:{}", i + 1),
            )?;
            writeln!(out, "{}", to_json_line(&doc))?;
        }
    } else {
        // feed line by line so large inputs stream through the parser
        let mut reader = io.reader()?;
        let pieces = std::iter::from_fn(|| {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => None,
                Ok(_) => Some(Ok(line)),
                Err(e) => Some(Err(anyhow!(e).context(format!("cannot read {name}")))),
            }
        });
        let doc = parse_page(pieces, args.prompt, options, &name)?;
        writeln!(out, "{}", to_json_line(&doc))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serialize(io: &Io, out: &mut dyn Write, options: ParseOptions) -> Result<ExitCode> {
    let name = io.input_name();
    for (line, doc) in read_jsonl(&io.read_all()?, &name, options.clip)? {
        let doc = if options.lenient {
            let (fixed, notes) = make_serializable(&doc);
            for n in notes {
                eprintln!("{name}:{line}: {n}");
            }
            fixed
        } else {
            doc
        };
        let text = serialize(&doc).map_err(|e| anyhow!("{name}:{line}: {e}"))?;
        writeln!(out, "{text}")?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DocumentReport {
    line: usize,
    valid: bool,
    violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    order_violations: Option<Vec<OrderViolation>>,
}

#[derive(Serialize)]
struct ValidationReport {
    valid: bool,
    documents: Vec<DocumentReport>,
}

fn cmd_validate(
    io: &Io,
    out: &mut dyn Write,
    args: ValidateArgs,
    options: ParseOptions,
) -> Result<ExitCode> {
    let name = io.input_name();
    let mut documents = Vec::new();
    for (line, doc) in read_jsonl(&io.read_all()?, &name, options.clip)? {
        let mut violations: Vec<String> =
            doc.violations().iter().map(ToString::to_string).collect();
        let order_violations = match args.order {
            None => None,
            Some(policy) if doc.prompt.boxes => match check_order(&doc, policy) {
                Ok(v) => Some(v),
                Err(e) => {
                    violations.push(e.to_string());
                    None
                }
            },
            Some(_) => Some(Vec::new()),
        };
        let valid = violations.is_empty() && order_violations.as_ref().is_none_or(Vec::is_empty);
        documents.push(DocumentReport {
            line,
            valid,
            violations,
            order_violations,
        });
    }
    let report = ValidationReport {
        valid: documents.iter().all(|d| d.valid),
        documents,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    if report.valid {
        Ok(ExitCode::SUCCESS)
    } else {
        let bad = report.documents.iter().filter(|d| !d.valid).count();
        eprintln!("{name}: {bad} invalid document(s)");
        Ok(ExitCode::from(1))
    }
}

fn cmd_reorder(
    io: &Io,
    out: &mut dyn Write,
    args: ReorderArgs,
    options: ParseOptions,
) -> Result<ExitCode> {
    let name = io.input_name();
    for (line, doc) in read_jsonl(&io.read_all()?, &name, options.clip)? {
        let ordered = if options.lenient {
            let (d, notes) = reorder_lenient(&doc, args.order);
            for n in notes {
                eprintln!("{name}:{line}: {n}");
            }
            d
        } else {
            reorder(&doc, args.order).map_err(|e| anyhow!("{name}:{line}: {e}"))?
        };
        writeln!(out, "{}", to_json_line(&ordered))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_convert(io: &Io, out: &mut dyn Write, args: ConvertArgs) -> Result<ExitCode> {
    let name = io.input_name();
    let src = io.read_all()?;
    let parsed = match args.from {
        TableSource::Latex => parse_latex_table_verbose(&src),
        TableSource::Html => parse_html_table_verbose(&src),
    }
    .map_err(|e| anyhow!("{name}: {e}"))?;
    for d in &parsed.diagnostics {
        eprintln!("{name}: {d}");
    }
    let t = &parsed.table;
    let text = match args.to {
        TableTarget::Html => emit_html(t),
        TableTarget::Markdown => emit_markdown(t),
        TableTarget::Latex => emit_latex(t),
        TableTarget::Json => serde_json::to_string(t)?,
    };
    writeln!(out, "{text}")?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ScoredDocument {
    index: usize,
    #[serde(flatten)]
    scores: DocScores,
}

#[derive(Serialize)]
struct EvalReport {
    profile: &'static str,
    mask_headers: bool,
    aggregate: Aggregate,
    documents: Vec<ScoredDocument>,
}

fn cmd_eval(out: &mut dyn Write, args: EvalArgs, options: ParseOptions) -> Result<ExitCode> {
    let load = |p: &PathBuf| -> Result<Vec<Document>> {
        let docs = read_jsonl(&read_file(p)?, &p.display().to_string(), options.clip)?;
        Ok(docs.into_iter().map(|(_, d)| d).collect())
    };
    let (reference, hypothesis) = (load(&args.reference)?, load(&args.hyp)?);
    if reference.len() != hypothesis.len() {
        bail!(
            "{} has {} documents but {} has {}",
            args.reference.display(),
            reference.len(),
            args.hyp.display(),
            hypothesis.len()
        );
    }
    let mut norm = args.profile.norm_options();
    if args.mask_headers {
        norm = norm.with_mask_out();
    }
    // indexed parallel collect keeps input order
    let scores: Vec<DocScores> = reference
        .par_iter()
        .zip(hypothesis.par_iter())
        .map(|(r, h)| score_document(r, h, &norm))
        .collect();
    let report = EvalReport {
        profile: match args.profile {
            EvalProfile::Plain => "plain",
            EvalProfile::Mip => "mip",
            EvalProfile::Tables => "tables",
        },
        mask_headers: args.mask_headers,
        aggregate: aggregate(&scores),
        documents: scores
            .into_iter()
            .enumerate()
            .map(|(index, scores)| ScoredDocument { index, scores })
            .collect(),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sim(out: &mut dyn Write, args: SimArgs) -> Result<ExitCode> {
    let name = args.weights.display().to_string();
    let bundle: SimBundle = serde_json::from_str(&read_file(&args.weights)?)
        .with_context(|| format!("{name}: bad weight bundle"))?;
    let decoder = LookupDecoder::new(bundle.decoder.context, bundle.decoder.states)
        .map_err(|e| anyhow!("{name}: {e}"))?;
    let w = bundle.weights;
    let m = args.m.unwrap_or(w.m);
    let tokens = greedy_decode_multi(
        &decoder,
        &w,
        &args.prompt.0,
        m,
        args.max_len,
        args.end_token,
    )
    .map_err(|e| anyhow!("{name}: {e}"))?;
    let ids: Vec<String> = tokens.iter().map(ToString::to_string).collect();
    writeln!(out, "{}", ids.join(","))?;
    Ok(ExitCode::SUCCESS)
}
