//! Ingredient extraction toolkit.
//!
//! The pipeline runs end to end on plain files: ingest annotated recipe
//! corpora and repair their annotation defects ([`corpus`]), convert
//! between character spans and per-token IOB tags ([`iob`]), generate
//! synthetic user queries with exact gold spans ([`generator`]), train
//! and run a greedy perceptron tagger or a gazetteer baseline
//! ([`tagger`]), and score predictions with span-level and token-level
//! precision/recall/F1 ([`eval`]).
//!
//! Everything is deterministic: all randomness is drawn from ChaCha
//! streams seeded by explicit `seed` arguments.

pub mod corpus;
pub mod eval;
pub mod generator;
pub mod iob;
pub mod tagger;

pub use corpus::{
    corpus_stats, normalize_spans, parse_annotated_records, parse_annotated_xml, split,
    write_records, CorpusError, Defect, Document, ParsedCorpus, Span, SplitRatios, SplitSets,
    StatsReport, ING_LABEL,
};
pub use eval::{
    entity_metrics, error_report, evaluate, f1_from_precision_recall, prf, token_metrics,
    ErrorReport, EvalError, EvalSummary, Metrics,
};
pub use generator::{
    default_templates, expand, generate, templates_from_reader, GeneratorError, Template,
    Vocabulary,
};
pub use iob::{
    decode_iob, encode_iob, read_conll, tokenize, write_conll, Encoding, IobError, IobSequence,
    SnapWarning, Tag, Token,
};
pub use tagger::{
    extract_features, gazetteer_tag, train, FeatureVector, Lexicon, TaggerError, TaggerModel,
    TaggerState,
};
