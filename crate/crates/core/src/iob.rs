//! Tokenization and the codec between character spans and per-token IOB
//! tags.
//!
//! The tag set is closed: `B-ING` opens an ingredient chunk, `I-ING`
//! continues it, `O` is everything else. Encoding snaps span boundaries
//! that fall inside a token outward to token boundaries (favoring recall)
//! and reports a warning for each snap. Decoding is total: an `I-ING`
//! with no open chunk is repaired to `B-ING`.

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::corpus::{Document, Span, ING_LABEL};

#[derive(Debug, Error)]
pub enum IobError {
    #[error("line {line}: expected `token tag`, found {found} fields")]
    Ragged { line: usize, found: usize },
    #[error("line {line}: unknown tag `{tag}`")]
    UnknownTag { line: usize, tag: String },
    #[error("tokens/tags length mismatch: {tokens} tokens, {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-token tag. The variant order is the fixed action order used for
/// score tie-breaking: `B-ING` before `I-ING` before `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Begin,
    Inside,
    Outside,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Begin => "B-ING",
            Tag::Inside => "I-ING",
            Tag::Outside => "O",
        }
    }

    pub fn parse(raw: &str) -> Option<Tag> {
        match raw {
            "B-ING" => Some(Tag::Begin),
            "I-ING" => Some(Tag::Inside),
            "O" => Some(Tag::Outside),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A token with its half-open character interval in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn new(surface: impl Into<String>, start: usize, end: usize) -> Self {
        Token { surface: surface.into(), start, end }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Rule-based, deterministic tokenizer. Maximal runs of alphanumeric
/// characters (apostrophes allowed between two alphanumerics) form one
/// token; every other non-whitespace character is a single-character
/// token. Whitespace only separates.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if is_word_char(c) {
            i += 1;
            while i < chars.len()
                && (is_word_char(chars[i])
                    || (is_apostrophe(chars[i])
                        && is_word_char(chars[i - 1])
                        && i + 1 < chars.len()
                        && is_word_char(chars[i + 1])))
            {
                i += 1;
            }
        } else {
            i += 1;
        }
        tokens.push(Token::new(chars[start..i].iter().collect::<String>(), start, i));
    }
    tokens
}

/// Parallel tokens and tags over one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IobSequence {
    pub text: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
}

impl IobSequence {
    pub fn new(
        text: impl Into<String>,
        tokens: Vec<Token>,
        tags: Vec<Tag>,
    ) -> Result<Self, IobError> {
        if tokens.len() != tags.len() {
            return Err(IobError::LengthMismatch { tokens: tokens.len(), tags: tags.len() });
        }
        Ok(IobSequence { text: text.into(), tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A span whose boundary fell strictly inside a token and was widened to
/// the enclosing token boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapWarning {
    pub original: Span,
    pub snapped: Span,
}

/// [`encode_iob`] output: the tag sequence plus any boundary snaps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub sequence: IobSequence,
    pub warnings: Vec<SnapWarning>,
}

/// Converts a normalized document into per-token tags. Tokens fully
/// inside a span get `I-ING` except the chunk-initial one, which gets
/// `B-ING`; everything else is `O`. A span boundary strictly inside a
/// token snaps outward to the token's boundaries, with a warning.
pub fn encode_iob(doc: &Document) -> Encoding {
    let tokens = tokenize(&doc.text);
    let mut tags = vec![Tag::Outside; tokens.len()];
    let mut warnings = Vec::new();

    for span in &doc.spans {
        let mut start = span.start;
        let mut end = span.end;
        for t in &tokens {
            if t.start < start && start < t.end {
                start = t.start;
            }
            if t.start < end && end < t.end {
                end = t.end;
            }
        }
        if (start, end) != (span.start, span.end) {
            warnings.push(SnapWarning {
                original: span.clone(),
                snapped: Span::new(start, end, span.label.clone()),
            });
        }
        let mut first = true;
        for (i, t) in tokens.iter().enumerate() {
            if t.start >= start && t.end <= end && tags[i] == Tag::Outside {
                tags[i] = if first { Tag::Begin } else { Tag::Inside };
                first = false;
            }
        }
    }

    Encoding {
        sequence: IobSequence { text: doc.text.clone(), tokens, tags },
        warnings,
    }
}

/// Converts tags back to spans: every maximal `B-ING (I-ING)*` run
/// becomes one span from the first token's start to the last token's
/// end. An `I-ING` with no valid predecessor is treated as `B-ING`, so
/// this is total over arbitrary tag sequences. Output spans are sorted
/// and non-overlapping.
pub fn decode_iob(seq: &IobSequence) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for (token, tag) in seq.tokens.iter().zip(&seq.tags) {
        match tag {
            Tag::Begin => {
                if let Some((s, e)) = current.take() {
                    spans.push(Span::new(s, e, ING_LABEL));
                }
                current = Some((token.start, token.end));
            }
            Tag::Inside => match current.as_mut() {
                Some(open) => open.1 = token.end,
                None => current = Some((token.start, token.end)),
            },
            Tag::Outside => {
                if let Some((s, e)) = current.take() {
                    spans.push(Span::new(s, e, ING_LABEL));
                }
            }
        }
    }
    if let Some((s, e)) = current {
        spans.push(Span::new(s, e, ING_LABEL));
    }
    spans
}

/// Structural repair used when reading untrusted tag sequences: `I-ING`
/// at position 0 or right after `O` becomes `B-ING`.
fn repair_tags(tags: &mut [Tag]) {
    let mut prev = Tag::Outside;
    for tag in tags.iter_mut() {
        if *tag == Tag::Inside && prev == Tag::Outside {
            *tag = Tag::Begin;
        }
        prev = *tag;
    }
}

/// Reads sequences in the CoNLL-style layout: one `token tag` pair per
/// line, a blank line ends a sequence. Token offsets are reconstructed
/// by joining surfaces with single spaces, so the record format stays
/// the source of truth for real offsets.
pub fn read_conll<R: BufRead>(reader: R) -> Result<Vec<IobSequence>, IobError> {
    let mut sequences = Vec::new();
    let mut pending: Vec<(String, Tag)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush_conll_sequence(&mut pending, &mut sequences);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(IobError::Ragged { line: line_no, found: fields.len() });
        }
        let tag = Tag::parse(fields[1])
            .ok_or_else(|| IobError::UnknownTag { line: line_no, tag: fields[1].to_string() })?;
        pending.push((fields[0].to_string(), tag));
    }
    flush_conll_sequence(&mut pending, &mut sequences);
    Ok(sequences)
}

fn flush_conll_sequence(pending: &mut Vec<(String, Tag)>, sequences: &mut Vec<IobSequence>) {
    if pending.is_empty() {
        return;
    }
    let mut text = String::new();
    let mut tokens = Vec::with_capacity(pending.len());
    let mut tags = Vec::with_capacity(pending.len());
    let mut cursor = 0;
    for (surface, tag) in pending.drain(..) {
        if cursor > 0 {
            text.push(' ');
            cursor += 1;
        }
        let len = surface.chars().count();
        tokens.push(Token::new(surface.clone(), cursor, cursor + len));
        text.push_str(&surface);
        cursor += len;
        tags.push(tag);
    }
    repair_tags(&mut tags);
    sequences.push(IobSequence { text, tokens, tags });
}

/// Writes sequences in the CoNLL-style layout. Each sequence ends with a
/// blank line; empty sequences are skipped. Inverse of [`read_conll`] up
/// to whitespace normalization.
pub fn write_conll<W: Write>(sequences: &[IobSequence], mut writer: W) -> io::Result<()> {
    for seq in sequences {
        if seq.is_empty() {
            continue;
        }
        for (token, tag) in seq.tokens.iter().zip(&seq.tags) {
            writeln!(writer, "{} {}", token.surface, tag)?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
