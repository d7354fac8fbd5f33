//! Annotated corpus handling: loading recipe data from external formats,
//! repairing annotation defects, reporting statistics, and deterministic
//! dataset splits.
//!
//! All character offsets in this crate count Unicode scalar values, not
//! bytes. The canonical on-disk form is the newline-delimited record
//! format produced by [`write_records`] and read by
//! [`parse_annotated_records`].

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use num_rational::Ratio;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The single entity label used throughout this crate.
pub const ING_LABEL: &str = "ING";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("xml parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("duplicate document id `{id}`")]
    DuplicateId { id: String },
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A labeled half-open character interval `[start, end)` over a document's
/// text. Offsets count Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Span { start, end, label: label.into() }
    }

    /// Shorthand for an ingredient span.
    pub fn ing(start: usize, end: usize) -> Self {
        Span::new(start, end, ING_LABEL)
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    /// Half-open interval overlap.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The covered substring, or `None` when the span is out of bounds.
    pub fn surface<'a>(&self, text: &'a str) -> Option<&'a str> {
        char_slice(text, self.start, self.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.start, self.end, self.label)
    }
}

/// A text plus its gold annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub spans: Vec<Span>,
    /// Provenance tag, typically the corpus name.
    pub source: String,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        spans: Vec<Span>,
        source: impl Into<String>,
    ) -> Self {
        Document { id: id.into(), text: text.into(), spans, source: source.into() }
    }

    /// Text length in Unicode scalar values.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

/// Slices `text` by character offsets. Returns `None` when the offsets do
/// not address valid character boundaries (`start > end` or past the end).
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut byte_start = None;
    let mut byte_end = None;
    let mut total = 0;
    for (ci, (bi, _)) in text.char_indices().enumerate() {
        if ci == start {
            byte_start = Some(bi);
        }
        if ci == end {
            byte_end = Some(bi);
        }
        total = ci + 1;
    }
    if byte_start.is_none() && start == total {
        byte_start = Some(text.len());
    }
    if byte_end.is_none() && end == total {
        byte_end = Some(text.len());
    }
    text.get(byte_start?..byte_end?)
}

/// An annotation problem found while parsing. Defects do not abort the
/// parse; the affected document survives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Defect {
    /// Span rejected and dropped: not a valid interval over the text.
    SpanOutOfBounds { doc_id: String, start: usize, end: usize },
    /// The annotation's quoted surface text disagrees with the offsets.
    /// Offsets are authoritative, so the span is kept.
    SurfaceMismatch {
        doc_id: String,
        start: usize,
        end: usize,
        annotated: String,
        actual: String,
    },
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Defect::SpanOutOfBounds { doc_id, start, end } => {
                write!(f, "{doc_id}: span ({start}, {end}) out of bounds, dropped")
            }
            Defect::SurfaceMismatch { doc_id, start, end, annotated, actual } => {
                write!(
                    f,
                    "{doc_id}: span ({start}, {end}) annotated as {annotated:?} but text reads {actual:?}, span kept"
                )
            }
        }
    }
}

/// Parse result: documents plus the defects found along the way.
#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub documents: Vec<Document>,
    pub defects: Vec<Defect>,
}

#[derive(Default)]
struct RecipeState {
    id: String,
    text: String,
    annotations: Vec<(usize, usize, Option<String>)>,
}

fn xml_err(offset: u64, message: impl Into<String>) -> CorpusError {
    CorpusError::Xml { offset, message: message.into() }
}

fn attr_string(
    elem: &BytesStart,
    name: &[u8],
    offset: u64,
) -> Result<Option<String>, CorpusError> {
    for attr in elem.attributes() {
        let attr = attr.map_err(|e| xml_err(offset, e.to_string()))?;
        if attr.key.local_name().as_ref() == name {
            let value = attr
                .unescape_value()
                .map_err(|e| xml_err(offset, e.to_string()))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

fn attr_usize(elem: &BytesStart, name: &[u8], offset: u64) -> Result<usize, CorpusError> {
    let raw = attr_string(elem, name, offset)?.ok_or_else(|| {
        xml_err(
            offset,
            format!("annotation missing `{}` attribute", String::from_utf8_lossy(name)),
        )
    })?;
    raw.trim().parse().map_err(|_| {
        xml_err(
            offset,
            format!("annotation attribute `{}` is not an integer: {raw:?}", String::from_utf8_lossy(name)),
        )
    })
}

/// Parses an annotated corpus in the recipe XML layout: a root element
/// holding `recipe` elements, each with an `id` attribute, one `text`
/// child, and any number of `annotation` children carrying integer
/// `start`/`end` attributes and an optional `surface` attribute.
///
/// Spans are taken verbatim (not normalized). Out-of-bounds spans are
/// dropped with a [`Defect`]; surface mismatches are recorded but the
/// span is kept, since offsets are authoritative.
pub fn parse_annotated_xml<R: BufRead>(
    reader: R,
    source: &str,
) -> Result<ParsedCorpus, CorpusError> {
    let mut xml = Reader::from_reader(reader);
    let mut buf = Vec::new();
    let mut out = ParsedCorpus::default();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    let mut current: Option<RecipeState> = None;
    let mut in_text = false;

    loop {
        let offset = xml.buffer_position();
        match xml.read_event_into(&mut buf) {
            Err(e) => return Err(xml_err(xml.error_position(), e.to_string())),
            Ok(Event::Eof) => break,
            Ok(Event::Start(e)) => match e.local_name().as_ref() {
                b"recipe" => {
                    if current.is_some() {
                        return Err(xml_err(offset, "nested recipe element"));
                    }
                    let id = attr_string(&e, b"id", offset)?
                        .ok_or_else(|| xml_err(offset, "recipe element missing id attribute"))?;
                    if !seen_ids.insert(id.clone()) {
                        return Err(CorpusError::DuplicateId { id });
                    }
                    current = Some(RecipeState { id, ..RecipeState::default() });
                }
                b"text" if current.is_some() => in_text = true,
                b"annotation" => {
                    if let Some(state) = current.as_mut() {
                        let start = attr_usize(&e, b"start", offset)?;
                        let end = attr_usize(&e, b"end", offset)?;
                        let surface = attr_string(&e, b"surface", offset)?;
                        state.annotations.push((start, end, surface));
                    }
                }
                _ => {}
            },
            Ok(Event::Empty(e)) => {
                if e.local_name().as_ref() == b"annotation" {
                    if let Some(state) = current.as_mut() {
                        let start = attr_usize(&e, b"start", offset)?;
                        let end = attr_usize(&e, b"end", offset)?;
                        let surface = attr_string(&e, b"surface", offset)?;
                        state.annotations.push((start, end, surface));
                    }
                }
            }
            Ok(Event::Text(t)) => {
                if in_text {
                    let decoded = t.decode().map_err(|e| xml_err(offset, e.to_string()))?;
                    if let Some(state) = current.as_mut() {
                        state.text.push_str(&decoded);
                    }
                }
            }
            Ok(Event::GeneralRef(r)) => {
                if in_text {
                    let resolved = match r
                        .resolve_char_ref()
                        .map_err(|e| xml_err(offset, e.to_string()))?
                    {
                        Some(ch) => ch.to_string(),
                        None => {
                            let name = r.decode().map_err(|e| xml_err(offset, e.to_string()))?;
                            quick_xml::escape::resolve_predefined_entity(&name)
                                .ok_or_else(|| {
                                    xml_err(offset, format!("unknown entity &{name};"))
                                })?
                                .to_string()
                        }
                    };
                    if let Some(state) = current.as_mut() {
                        state.text.push_str(&resolved);
                    }
                }
            }
            Ok(Event::CData(t)) => {
                if in_text {
                    let decoded = String::from_utf8_lossy(t.as_ref()).into_owned();
                    if let Some(state) = current.as_mut() {
                        state.text.push_str(&decoded);
                    }
                }
            }
            Ok(Event::End(e)) => match e.local_name().as_ref() {
                b"text" => in_text = false,
                b"recipe" => {
                    if let Some(state) = current.take() {
                        finalize_recipe(state, source, &mut out);
                    }
                }
                _ => {}
            },
            Ok(_) => {}
        }
        buf.clear();
    }
    Ok(out)
}

fn finalize_recipe(state: RecipeState, source: &str, out: &mut ParsedCorpus) {
    let total = state.text.chars().count();
    let mut spans = Vec::with_capacity(state.annotations.len());
    for (start, end, surface) in state.annotations {
        if start >= end || end > total {
            out.defects.push(Defect::SpanOutOfBounds { doc_id: state.id.clone(), start, end });
            continue;
        }
        if let Some(annotated) = surface {
            let actual = char_slice(&state.text, start, end).unwrap_or_default();
            if annotated != actual {
                out.defects.push(Defect::SurfaceMismatch {
                    doc_id: state.id.clone(),
                    start,
                    end,
                    annotated,
                    actual: actual.to_string(),
                });
            }
        }
        spans.push(Span::ing(start, end));
    }
    out.documents.push(Document::new(state.id, state.text, spans, source));
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    spans: Vec<(usize, usize, String)>,
    #[serde(default)]
    source: String,
}

impl From<&Document> for RawRecord {
    fn from(doc: &Document) -> Self {
        RawRecord {
            id: doc.id.clone(),
            text: doc.text.clone(),
            spans: doc
                .spans
                .iter()
                .map(|s| (s.start, s.end, s.label.clone()))
                .collect(),
            source: doc.source.clone(),
        }
    }
}

/// Parses the canonical record format: one JSON object per line with
/// fields `id`, `text`, `spans` (array of `[start, end, label]`) and an
/// optional `source`.
///
/// A structurally bad line (unparseable JSON, or a span with
/// `start >= end`) aborts with an error naming the line. Spans that are
/// well-formed but fall outside the text are dropped with a [`Defect`],
/// mirroring the XML parser.
pub fn parse_annotated_records<R: BufRead>(reader: R) -> Result<ParsedCorpus, CorpusError> {
    let mut out = ParsedCorpus::default();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line)
            .map_err(|e| CorpusError::Record { line: line_no, message: e.to_string() })?;
        if !seen_ids.insert(raw.id.clone()) {
            return Err(CorpusError::DuplicateId { id: raw.id });
        }
        let total = raw.text.chars().count();
        let mut spans = Vec::with_capacity(raw.spans.len());
        for (start, end, label) in raw.spans {
            if start >= end {
                return Err(CorpusError::Record {
                    line: line_no,
                    message: format!("span ({start}, {end}) violates start < end"),
                });
            }
            if end > total {
                out.defects.push(Defect::SpanOutOfBounds {
                    doc_id: raw.id.clone(),
                    start,
                    end,
                });
                continue;
            }
            spans.push(Span::new(start, end, label));
        }
        out.documents.push(Document::new(raw.id, raw.text, spans, raw.source));
    }
    Ok(out)
}

/// Writes documents in the canonical record format, one JSON object per
/// line, final newline included. Inverse of [`parse_annotated_records`].
pub fn write_records<W: Write>(docs: &[Document], mut writer: W) -> io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut writer, &RawRecord::from(doc)).map_err(io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Repairs annotation defects within one document:
/// exact duplicate `(start, end, label)` spans collapse to one, and among
/// overlapping spans the longest wins (ties broken by smaller start).
/// The rule is reapplied against already-kept spans until no overlaps
/// remain, so the output is sorted, duplicate-free and pairwise
/// non-overlapping. Idempotent.
pub fn normalize_spans(doc: &Document) -> Document {
    let mut candidates = doc.spans.clone();
    candidates.sort();
    candidates.dedup();
    // Selection order: longest first, then leftmost. Anything that
    // overlaps an already-kept span loses.
    candidates.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
            .then(a.label.cmp(&b.label))
    });
    let mut kept: Vec<Span> = Vec::with_capacity(candidates.len());
    for span in candidates {
        if !kept.iter().any(|k| k.overlaps(&span)) {
            kept.push(span);
        }
    }
    kept.sort();
    Document { spans: kept, ..doc.clone() }
}

/// Corpus-level counts plus the most frequent ingredient surfaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsReport {
    pub document_count: usize,
    pub span_count: usize,
    /// `(lowercased surface, count)`, sorted by count descending then
    /// surface ascending, truncated to the requested k.
    pub top_ingredients: Vec<(String, usize)>,
}

/// Counts documents and spans and ranks the `k` most frequent lowercased
/// span surfaces.
pub fn corpus_stats(docs: &[Document], k: usize) -> StatsReport {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut span_count = 0;
    for doc in docs {
        span_count += doc.spans.len();
        for span in &doc.spans {
            if let Some(surface) = span.surface(&doc.text) {
                *counts.entry(surface.to_lowercase()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    StatsReport { document_count: docs.len(), span_count, top_ingredients: ranked }
}

/// Exact train/eval/test proportions. The three parts must sum to one in
/// exact rational arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRatios {
    train: Ratio<u64>,
    eval: Ratio<u64>,
    test: Ratio<u64>,
}

impl SplitRatios {
    pub fn new(
        train: Ratio<u64>,
        eval: Ratio<u64>,
        test: Ratio<u64>,
    ) -> Result<Self, CorpusError> {
        if train + eval + test != Ratio::from_integer(1) {
            return Err(CorpusError::Ratios(format!(
                "{train}/{eval}/{test} does not sum to 1"
            )));
        }
        Ok(SplitRatios { train, eval, test })
    }

    /// Builds ratios from a percentage triple such as `80/10/10`.
    pub fn from_percent(train: u64, eval: u64, test: u64) -> Result<Self, CorpusError> {
        if train + eval + test != 100 {
            return Err(CorpusError::Ratios(format!(
                "{train}/{eval}/{test} does not sum to 100"
            )));
        }
        SplitRatios::new(
            Ratio::new(train, 100),
            Ratio::new(eval, 100),
            Ratio::new(test, 100),
        )
    }

    /// Parses `A/B/C`. An all-integer triple is read as percentages and
    /// must sum to 100; otherwise the components are exact decimals that
    /// must sum to 1.
    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let parts: Vec<&str> = raw.split('/').collect();
        if parts.len() != 3 {
            return Err(CorpusError::Ratios(format!(
                "expected A/B/C, got {raw:?}"
            )));
        }
        let values: Vec<Ratio<u64>> = parts
            .iter()
            .map(|p| parse_ratio_component(p))
            .collect::<Result<_, _>>()?;
        let sum: Ratio<u64> = values.iter().sum();
        if sum == Ratio::from_integer(1) {
            SplitRatios::new(values[0], values[1], values[2])
        } else if values.iter().all(|v| v.is_integer()) && sum == Ratio::from_integer(100) {
            SplitRatios::new(
                values[0] / 100,
                values[1] / 100,
                values[2] / 100,
            )
        } else {
            Err(CorpusError::Ratios(format!("{raw:?} does not sum to 1")))
        }
    }

    pub fn train(&self) -> Ratio<u64> {
        self.train
    }

    pub fn eval(&self) -> Ratio<u64> {
        self.eval
    }

    pub fn test(&self) -> Ratio<u64> {
        self.test
    }
}

fn parse_ratio_component(raw: &str) -> Result<Ratio<u64>, CorpusError> {
    let raw = raw.trim();
    let bad = || CorpusError::Ratios(format!("invalid component {raw:?}"));
    if let Some((int_part, frac_part)) = raw.split_once('.') {
        if frac_part.is_empty() || frac_part.len() > 18 {
            return Err(bad());
        }
        let int_val: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let frac_val: u64 = frac_part.parse().map_err(|_| bad())?;
        let scale = 10u64.pow(frac_part.len() as u32);
        Ok(Ratio::new(
            int_val.checked_mul(scale).ok_or_else(bad)?.checked_add(frac_val).ok_or_else(bad)?,
            scale,
        ))
    } else {
        let v: u64 = raw.parse().map_err(|_| bad())?;
        Ok(Ratio::from_integer(v))
    }
}

/// Output of [`split`]: disjoint, jointly exhaustive document lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSets {
    pub train: Vec<Document>,
    pub eval: Vec<Document>,
    pub test: Vec<Document>,
}

/// Shuffles documents with a seeded pseudorandom permutation, then cuts
/// by cumulative ratio. The eval and test sizes are floored; the
/// remainder goes to train. Deterministic for fixed `(docs, ratios, seed)`.
pub fn split(docs: &[Document], ratios: &SplitRatios, seed: u64) -> SplitSets {
    let mut shuffled = docs.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n = shuffled.len() as u64;
    let eval_n = (ratios.eval * n).floor().to_integer() as usize;
    let test_n = (ratios.test * n).floor().to_integer() as usize;
    let train_n = shuffled.len() - eval_n - test_n;
    let test = shuffled.split_off(train_n + eval_n);
    let eval = shuffled.split_off(train_n);
    SplitSets { train: shuffled, eval, test }
}
