//! Synthetic user queries built from slot templates, with exact gold
//! spans.
//!
//! Spans are computed while substituting, never by searching the final
//! string: substring search breaks down as soon as one filler occurs
//! inside another filler or inside the template itself. Multi-slot
//! templates are supported; fillers within one document are sampled
//! without replacement.

use std::io::BufRead;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{Document, Span, ING_LABEL};

/// The slot marker looked up in template patterns.
pub const SLOT_MARKER: &str = "{ing}";

/// Source tag carried by generated documents.
pub const GENERATED_SOURCE: &str = "generated";

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("template `{id}` contains no `{SLOT_MARKER}` marker")]
    NoSlots { id: String },
    #[error("template `{id}` has adjacent slot markers")]
    AdjacentSlots { id: String },
    #[error("template `{id}` expects {slots} fillers, got {given}")]
    FillerCount { id: String, slots: usize, given: usize },
    #[error("no templates given")]
    NoTemplates,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("vocabulary entry {index} is empty")]
    EmptyEntry { index: usize },
    #[error("vocabulary entry `{entry}` contains the slot marker")]
    MarkerInEntry { entry: String },
    #[error("template `{id}` needs {slots} fillers but the vocabulary has only {vocab} entries")]
    VocabTooSmall { id: String, slots: usize, vocab: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A query pattern with one or more `{ing}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub pattern: String,
}

impl Template {
    /// Validates that the pattern has at least one slot and that slots
    /// are separated by at least one character.
    pub fn new(id: impl Into<String>, pattern: impl Into<String>) -> Result<Self, GeneratorError> {
        let id = id.into();
        let pattern = pattern.into();
        let slots: Vec<usize> = pattern.match_indices(SLOT_MARKER).map(|(i, _)| i).collect();
        if slots.is_empty() {
            return Err(GeneratorError::NoSlots { id });
        }
        for pair in slots.windows(2) {
            if pair[1] == pair[0] + SLOT_MARKER.len() {
                return Err(GeneratorError::AdjacentSlots { id });
            }
        }
        Ok(Template { id, pattern })
    }

    pub fn slot_count(&self) -> usize {
        self.pattern.matches(SLOT_MARKER).count()
    }
}

/// The four built-in query templates.
pub fn default_templates() -> Vec<Template> {
    [
        ("t1", "I would like a dish with {ing}"),
        ("t2", "Show me {ing} recipes"),
        ("t3", "Can I see recipes with {ing}"),
        ("t4", "I want {ing} in my recipe"),
    ]
    .into_iter()
    .map(|(id, pattern)| Template::new(id, pattern).expect("built-in template is valid"))
    .collect()
}

/// Loads templates from a reader, one pattern per line. Blank lines are
/// skipped; ids are `t<line>`.
pub fn templates_from_reader<R: BufRead>(reader: R) -> Result<Vec<Template>, GeneratorError> {
    let mut templates = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        templates.push(Template::new(format!("t{}", idx + 1), line)?);
    }
    Ok(templates)
}

/// The ingredient strings available to [`generate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
}

impl Vocabulary {
    /// Validates and deduplicates entries, keeping first-occurrence
    /// order.
    pub fn new<I, S>(entries: I) -> Result<Self, GeneratorError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for (index, entry) in entries.into_iter().enumerate() {
            let entry = entry.into();
            if entry.is_empty() {
                return Err(GeneratorError::EmptyEntry { index });
            }
            if entry.contains(SLOT_MARKER) {
                return Err(GeneratorError::MarkerInEntry { entry });
            }
            if seen.insert(entry.clone()) {
                out.push(entry);
            }
        }
        if out.is_empty() {
            return Err(GeneratorError::EmptyVocabulary);
        }
        Ok(Vocabulary { entries: out })
    }

    /// Reads one ingredient per line, trimming whitespace and skipping
    /// blank lines.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, GeneratorError> {
        let mut entries = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                entries.push(trimmed.to_string());
            }
        }
        Vocabulary::new(entries)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Substitutes fillers into the template's slots left to right and
/// returns the document with one gold span per filler. Offsets are
/// accumulated during substitution, so the spans are exact by
/// construction.
pub fn expand(template: &Template, fillers: &[&str]) -> Result<Document, GeneratorError> {
    let slots = template.slot_count();
    if fillers.len() != slots {
        return Err(GeneratorError::FillerCount {
            id: template.id.clone(),
            slots,
            given: fillers.len(),
        });
    }
    let mut text = String::new();
    let mut cursor = 0;
    let mut spans = Vec::with_capacity(slots);
    let mut rest = template.pattern.as_str();
    for filler in fillers {
        let at = rest.find(SLOT_MARKER).expect("slot count was validated");
        let (before, tail) = rest.split_at(at);
        text.push_str(before);
        cursor += before.chars().count();
        let len = filler.chars().count();
        spans.push(Span::new(cursor, cursor + len, ING_LABEL));
        text.push_str(filler);
        cursor += len;
        rest = &tail[SLOT_MARKER.len()..];
    }
    text.push_str(rest);
    Ok(Document::new(template.id.clone(), text, spans, GENERATED_SOURCE))
}

/// Generates `n` query documents. Templates are drawn uniformly and
/// fillers are sampled without replacement within one document, all from
/// a ChaCha stream seeded with `seed`, so the output is reproducible
/// byte for byte. Document ids are `q00000`, `q00001`, ...
pub fn generate(
    templates: &[Template],
    vocab: &Vocabulary,
    n: usize,
    seed: u64,
) -> Result<Vec<Document>, GeneratorError> {
    if templates.is_empty() {
        return Err(GeneratorError::NoTemplates);
    }
    for t in templates {
        if t.slot_count() > vocab.len() {
            return Err(GeneratorError::VocabTooSmall {
                id: t.id.clone(),
                slots: t.slot_count(),
                vocab: vocab.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut documents = Vec::with_capacity(n);
    for i in 0..n {
        let template = &templates[rng.gen_range(0..templates.len())];
        let picks = rand::seq::index::sample(&mut rng, vocab.len(), template.slot_count());
        let fillers: Vec<&str> =
            picks.iter().map(|idx| vocab.entries[idx].as_str()).collect();
        let mut doc = expand(template, &fillers)?;
        doc.id = format!("q{i:05}");
        documents.push(doc);
    }
    Ok(documents)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Occurrence-indexed substring search, the independent route for
    // span offsets: find the k-th occurrence of the filler in the final
    // text, counting in characters.
    fn nth_occurrence_span(text: &str, needle: &str, n: usize) -> Option<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        let needle_chars: Vec<char> = needle.chars().collect();
        let mut seen = 0;
        for start in 0..=chars.len().saturating_sub(needle_chars.len()) {
            if chars[start..start + needle_chars.len()] == needle_chars[..] {
                if seen == n {
                    return Some((start, start + needle_chars.len()));
                }
                seen += 1;
            }
        }
        None
    }

    #[test]
    fn expand_single_slot() {
        let t = Template::new("t4", "I want {ing} in my recipe").unwrap();
        let d = expand(&t, &["soy sauce"]).unwrap();
        assert_eq!(d.text, "I want soy sauce in my recipe");
        assert_eq!(
            nth_occurrence_span(&d.text, "soy sauce", 0),
            Some((7, 16))
        );
        assert_eq!(d.spans, vec![Span::ing(7, 16)]);
    }

    #[test]
    fn expand_show_me() {
        let t = Template::new("t2", "Show me {ing} recipes").unwrap();
        let d = expand(&t, &["bacon"]).unwrap();
        assert_eq!(d.text, "Show me bacon recipes");
        assert_eq!(nth_occurrence_span(&d.text, "bacon", 0), Some((8, 13)));
        assert_eq!(d.spans, vec![Span::ing(8, 13)]);
    }

    #[test]
    fn expand_repeated_filler_distinguishes_occurrences() {
        let t = Template::new("t", "{ing} and {ing} stew").unwrap();
        let d = expand(&t, &["beef", "beef"]).unwrap();
        assert_eq!(d.text, "beef and beef stew");
        assert_eq!(nth_occurrence_span(&d.text, "beef", 0), Some((0, 4)));
        assert_eq!(nth_occurrence_span(&d.text, "beef", 1), Some((9, 13)));
        assert_eq!(d.spans, vec![Span::ing(0, 4), Span::ing(9, 13)]);
    }

    #[test]
    fn expand_filler_count_mismatch() {
        let t = Template::new("t", "A {ing} B").unwrap();
        assert!(matches!(
            expand(&t, &[]),
            Err(GeneratorError::FillerCount { slots: 1, given: 0, .. })
        ));
    }

    #[test]
    fn expand_non_ascii_filler_offsets() {
        let t = Template::new("t", "Show me {ing} recipes").unwrap();
        let d = expand(&t, &["crème fraîche"]).unwrap();
        assert_eq!(d.spans, vec![Span::ing(8, 21)]);
        assert_eq!(d.spans[0].surface(&d.text), Some("crème fraîche"));
    }

    #[test]
    fn template_rejects_missing_or_adjacent_slots() {
        assert!(matches!(
            Template::new("x", "no slots here"),
            Err(GeneratorError::NoSlots { .. })
        ));
        assert!(matches!(
            Template::new("x", "a {ing}{ing} b"),
            Err(GeneratorError::AdjacentSlots { .. })
        ));
        assert!(Template::new("x", "a {ing} {ing} b").is_ok());
    }

    #[test]
    fn default_templates_are_the_four_builtin_patterns() {
        let ts = default_templates();
        assert_eq!(ts.len(), 4);
        assert!(ts.iter().all(|t| t.slot_count() == 1));
        let d = expand(&ts[0], &["peanut oil"]).unwrap();
        assert_eq!(d.text, "I would like a dish with peanut oil");
        let patterns: Vec<&str> = ts.iter().map(|t| t.pattern.as_str()).collect();
        assert_eq!(
            patterns,
            vec![
                "I would like a dish with {ing}",
                "Show me {ing} recipes",
                "Can I see recipes with {ing}",
                "I want {ing} in my recipe",
            ]
        );
    }

    #[test]
    fn vocabulary_dedups_and_validates() {
        let v = Vocabulary::new(["salt", "salt", "pepper"]).unwrap();
        assert_eq!(v.entries(), ["salt", "pepper"]);
        assert!(matches!(
            Vocabulary::new(Vec::<String>::new()),
            Err(GeneratorError::EmptyVocabulary)
        ));
        assert!(matches!(
            Vocabulary::new(["ok", ""]),
            Err(GeneratorError::EmptyEntry { index: 1 })
        ));
        assert!(matches!(
            Vocabulary::new(["bad {ing} entry"]),
            Err(GeneratorError::MarkerInEntry { .. })
        ));
    }

    #[test]
    fn vocabulary_from_reader_skips_blanks() {
        let v = Vocabulary::from_reader("salt\n\n  pepper \nsalt\n".as_bytes()).unwrap();
        assert_eq!(v.entries(), ["salt", "pepper"]);
    }

    #[test]
    fn generate_produces_n_documents_with_spans() {
        let vocab = Vocabulary::new(["bacon", "soy sauce", "peanut oil", "flour"]).unwrap();
        let docs = generate(&default_templates(), &vocab, 500, 7).unwrap();
        assert_eq!(docs.len(), 500);
        for d in &docs {
            assert!(!d.spans.is_empty());
            for span in &d.spans {
                let surface = span.surface(&d.text).unwrap();
                assert!(vocab.entries().iter().any(|e| e == surface));
            }
        }
    }

    #[test]
    fn generate_zero_is_empty() {
        let vocab = Vocabulary::new(["salt"]).unwrap();
        assert!(generate(&default_templates(), &vocab, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn generate_exhausted_vocab_repeats() {
        let t = vec![Template::new("t2", "Show me {ing} recipes").unwrap()];
        let vocab = Vocabulary::new(["bacon"]).unwrap();
        let docs = generate(&t, &vocab, 3, 11).unwrap();
        assert_eq!(docs.len(), 3);
        for d in &docs {
            assert_eq!(d.text, "Show me bacon recipes");
            assert_eq!(d.spans, vec![Span::ing(8, 13)]);
        }
    }

    #[test]
    fn generate_multi_slot_needs_enough_vocab() {
        let t = vec![Template::new("t", "{ing} and {ing}").unwrap()];
        let vocab = Vocabulary::new(["bacon"]).unwrap();
        assert!(matches!(
            generate(&t, &vocab, 1, 0),
            Err(GeneratorError::VocabTooSmall { slots: 2, vocab: 1, .. })
        ));
    }

    #[test]
    fn generate_is_deterministic() {
        let vocab = Vocabulary::new(["bacon", "salt", "soy sauce", "flour", "eggs"]).unwrap();
        let a = generate(&default_templates(), &vocab, 50, 123).unwrap();
        let b = generate(&default_templates(), &vocab, 50, 123).unwrap();
        assert_eq!(a, b);
        let c = generate(&default_templates(), &vocab, 50, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generate_samples_without_replacement_within_document() {
        let t = vec![Template::new("t", "{ing} and {ing} and {ing}").unwrap()];
        let vocab = Vocabulary::new(["a", "b", "c"]).unwrap();
        for doc in generate(&t, &vocab, 40, 5).unwrap() {
            let mut fillers: Vec<&str> =
                doc.spans.iter().map(|s| s.surface(&doc.text).unwrap()).collect();
            fillers.sort();
            fillers.dedup();
            assert_eq!(fillers.len(), 3);
        }
    }

    #[test]
    fn generated_spans_match_fillers_via_occurrence_oracle() {
        // Vocabulary picked so some entries are substrings of others and
        // of template words; exactness must still hold.
        let vocab =
            Vocabulary::new(["pea", "peanut", "peanut oil", "recip", "show"]).unwrap();
        let docs = generate(&default_templates(), &vocab, 200, 99).unwrap();
        for d in &docs {
            for span in &d.spans {
                let surface = span.surface(&d.text).unwrap();
                // The span must land on SOME occurrence of its own
                // surface; search per occurrence index.
                let mut found = false;
                for occ in 0.. {
                    match nth_occurrence_span(&d.text, surface, occ) {
                        Some((s, e)) => {
                            if (s, e) == (span.start, span.end) {
                                found = true;
                                break;
                            }
                        }
                        None => break,
                    }
                }
                assert!(found, "span {span} does not slice to its filler in {:?}", d.text);
            }
        }
    }
}
