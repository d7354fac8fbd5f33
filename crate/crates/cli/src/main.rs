//! Command-line front end for the ingredient extraction pipeline:
//! ingest, stats, split, generate, train, tag, eval.
//!
//! Every command is deterministic given its flags; randomness always
//! comes from an explicit `--seed` (default 42). Machine-readable data
//! goes to files; diagnostics go to stderr.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ingrex::corpus::{
    corpus_stats, normalize_spans, parse_annotated_records, parse_annotated_xml, split,
    write_records, Document, ParsedCorpus, SplitRatios,
};
use ingrex::eval::evaluate;
use ingrex::generator::{default_templates, generate, templates_from_reader, Vocabulary};
use ingrex::iob::{decode_iob, tokenize, IobSequence};
use ingrex::tagger::{gazetteer_tag, train, Lexicon, TaggerModel};

const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "ingrex", version, about = "Ingredient extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Xml,
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an annotated corpus, repair spans, write canonical records.
    Ingest {
        /// Input corpus file.
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Output records file.
        #[arg(long)]
        output: PathBuf,
        /// Provenance tag for XML input; defaults to the input file stem.
        #[arg(long)]
        source: Option<String>,
    },
    /// Document/span counts and the most frequent ingredients.
    Stats {
        /// Records file.
        input: PathBuf,
        #[arg(long = "top-k", default_value_t = 5)]
        top_k: usize,
    },
    /// Deterministic train/eval/test split of a records file.
    Split {
        /// Records file.
        input: PathBuf,
        /// Ratios as A/B/C, percentages or exact decimals.
        #[arg(long, default_value = "80/10/10")]
        ratios: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Directory for train.jsonl, eval.jsonl, test.jsonl.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Generate synthetic queries with gold spans.
    Generate {
        /// Template file (one pattern per line) or the word `builtin`.
        #[arg(long, default_value = "builtin")]
        templates: String,
        /// Vocabulary file, one ingredient per line.
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output records file.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the perceptron tagger on a records file.
    Train {
        /// Training records file.
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Where to write the model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Tag a records file, writing predicted spans.
    Tag(TagArgs),
    /// Score predictions against gold records.
    Eval {
        /// Predicted records file.
        #[arg(long)]
        pred: PathBuf,
        /// Gold records file.
        #[arg(long)]
        gold: PathBuf,
        /// Optional machine-readable report file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TagArgs {
    /// Input records file; gold spans, if any, are ignored.
    input: PathBuf,
    /// Output records file with predicted spans.
    #[arg(long)]
    output: PathBuf,
    /// Model file from `train`.
    #[arg(long, conflicts_with = "gazetteer", required_unless_present = "gazetteer")]
    model: Option<PathBuf>,
    /// Use the gazetteer baseline instead of a model.
    #[arg(long, requires = "vocab")]
    gazetteer: bool,
    /// Lexicon for --gazetteer, one phrase per line.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn report_defects(parsed: &ParsedCorpus) {
    if parsed.defects.is_empty() {
        return;
    }
    eprintln!("{} annotation defect(s):", parsed.defects.len());
    for defect in &parsed.defects {
        eprintln!("  {defect}");
    }
}

fn read_records_file(path: &Path) -> Result<Vec<Document>> {
    let parsed = parse_annotated_records(open(path)?)
        .with_context(|| format!("failed to parse {}", path.display()))?;
    report_defects(&parsed);
    Ok(parsed.documents)
}

fn write_records_file(docs: &[Document], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write_records(docs, &mut out)?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, format, output, source } => {
            let source = source.unwrap_or_else(|| {
                input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let parsed = match format {
                Format::Xml => parse_annotated_xml(open(&input)?, &source)
                    .with_context(|| format!("failed to parse {}", input.display()))?,
                Format::Records => parse_annotated_records(open(&input)?)
                    .with_context(|| format!("failed to parse {}", input.display()))?,
            };
            report_defects(&parsed);
            let normalized: Vec<Document> =
                parsed.documents.iter().map(normalize_spans).collect();
            write_records_file(&normalized, &output)?;
            eprintln!(
                "ingested {} document(s), {} span(s) after normalization",
                normalized.len(),
                normalized.iter().map(|d| d.spans.len()).sum::<usize>()
            );
            Ok(())
        }
        Command::Stats { input, top_k } => {
            let docs = read_records_file(&input)?;
            let report = corpus_stats(&docs, top_k);
            println!("documents: {}", report.document_count);
            println!("spans: {}", report.span_count);
            println!("top ingredients:");
            for (surface, count) in &report.top_ingredients {
                println!("  {surface}\t{count}");
            }
            Ok(())
        }
        Command::Split { input, ratios, seed, out_dir } => {
            let ratios = SplitRatios::parse(&ratios)?;
            let docs = read_records_file(&input)?;
            let sets = split(&docs, &ratios, seed);
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("cannot create {}", out_dir.display()))?;
            for (name, part) in
                [("train", &sets.train), ("eval", &sets.eval), ("test", &sets.test)]
            {
                write_records_file(part, &out_dir.join(format!("{name}.jsonl")))?;
            }
            eprintln!(
                "split {} document(s) into {}/{}/{}",
                docs.len(),
                sets.train.len(),
                sets.eval.len(),
                sets.test.len()
            );
            Ok(())
        }
        Command::Generate { templates, vocab, n, seed, output } => {
            let templates = if templates == "builtin" {
                default_templates()
            } else {
                templates_from_reader(open(Path::new(&templates))?)?
            };
            let vocab = Vocabulary::from_reader(open(&vocab)?)?;
            let docs = generate(&templates, &vocab, n, seed)?;
            write_records_file(&docs, &output)?;
            eprintln!("generated {} document(s)", docs.len());
            Ok(())
        }
        Command::Train { input, epochs, seed, model } => {
            let docs: Vec<Document> =
                read_records_file(&input)?.iter().map(normalize_spans).collect();
            let trained = train(&docs, epochs, seed)?;
            for (epoch, errors) in trained.metadata().epoch_errors.iter().enumerate() {
                eprintln!("epoch {}: {} training error(s)", epoch + 1, errors);
            }
            let mut out = create(&model)?;
            trained.save(&mut out)?;
            out.flush()?;
            eprintln!(
                "model with {} feature(s) written to {}",
                trained.weights().len(),
                model.display()
            );
            Ok(())
        }
        Command::Tag(args) => {
            let docs = read_records_file(&args.input)?;
            let tagged: Vec<Document> = if args.gazetteer {
                let vocab_path = args.vocab.as_ref().expect("clap enforces --vocab");
                let vocab = Vocabulary::from_reader(open(vocab_path)?)?;
                let lexicon = Lexicon::new(vocab.entries())?;
                docs.iter()
                    .map(|d| {
                        let tokens = tokenize(&d.text);
                        let tags = gazetteer_tag(&tokens, &lexicon);
                        let seq = IobSequence::new(d.text.clone(), tokens, tags)
                            .expect("tags are parallel to tokens");
                        Document::new(
                            d.id.clone(),
                            d.text.clone(),
                            decode_iob(&seq),
                            d.source.clone(),
                        )
                    })
                    .collect()
            } else {
                let model_path = args.model.as_ref().expect("clap enforces --model");
                let model = TaggerModel::load(open(model_path)?)?;
                docs.iter()
                    .map(|d| {
                        let seq = model.tag_text(&d.text);
                        Document::new(
                            d.id.clone(),
                            d.text.clone(),
                            decode_iob(&seq),
                            d.source.clone(),
                        )
                    })
                    .collect()
            };
            write_records_file(&tagged, &args.output)?;
            eprintln!("tagged {} document(s)", tagged.len());
            Ok(())
        }
        Command::Eval { pred, gold, json } => {
            let pred_docs: Vec<Document> =
                read_records_file(&pred)?.iter().map(normalize_spans).collect();
            let gold_docs: Vec<Document> =
                read_records_file(&gold)?.iter().map(normalize_spans).collect();
            if pred_docs.is_empty() && gold_docs.is_empty() {
                bail!("nothing to evaluate: both inputs are empty");
            }
            let summary = evaluate(&pred_docs, &gold_docs)?;
            print!("{summary}");
            if let Some(path) = json {
                let mut out = create(&path)?;
                serde_json::to_writer_pretty(&mut out, &summary)?;
                out.flush()?;
            }
            Ok(())
        }
    }
}
