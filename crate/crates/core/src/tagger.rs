//! Greedy transition-based sequence tagger.
//!
//! Tokens are consumed left to right; at each step the tagger applies
//! the best-scoring structurally valid action from the fixed order
//! `B-ING < I-ING < O` (earlier wins ties). Scores are dot products of
//! sparse indicator features with per-action weights, learned with the
//! averaged perceptron. A gazetteer longest-match baseline shares the
//! same output shape.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::iob::{encode_iob, tokenize, IobSequence, Tag, Token};

/// Actions in tie-break order.
pub const ACTIONS: [Tag; 3] = [Tag::Begin, Tag::Inside, Tag::Outside];

const MODEL_VERSION: u32 = 1;
const BOS: &str = "<BOS>";
const EOS: &str = "<EOS>";

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("token index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("lexicon phrase {0:?} has no tokens")]
    EmptyPhrase(String),
    #[error("unsupported model version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn action_index(tag: Tag) -> usize {
    match tag {
        Tag::Begin => 0,
        Tag::Inside => 1,
        Tag::Outside => 2,
    }
}

/// `I-ING` is only valid after `B-ING` or `I-ING`.
fn is_valid_action(action: Tag, prev: Option<Tag>) -> bool {
    match action {
        Tag::Inside => matches!(prev, Some(Tag::Begin) | Some(Tag::Inside)),
        _ => true,
    }
}

/// Argmax over valid actions; ties resolve to the earliest action in
/// [`ACTIONS`].
fn best_valid_action(scores: &[f64; 3], prev: Option<Tag>) -> Tag {
    let mut best: Option<(Tag, f64)> = None;
    for action in ACTIONS {
        if !is_valid_action(action, prev) {
            continue;
        }
        let score = scores[action_index(action)];
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((action, score)),
        }
    }
    best.expect("B-ING and O are always valid").0
}

/// The tagger's transition state: tokens plus the tags assigned so far.
/// The position is the index of the next token to tag.
#[derive(Debug, Clone)]
pub struct TaggerState<'a> {
    tokens: &'a [Token],
    tags: Vec<Tag>,
}

impl<'a> TaggerState<'a> {
    pub fn new(tokens: &'a [Token]) -> Self {
        TaggerState { tokens, tags: Vec::with_capacity(tokens.len()) }
    }

    pub fn position(&self) -> usize {
        self.tags.len()
    }

    pub fn is_complete(&self) -> bool {
        self.tags.len() == self.tokens.len()
    }

    pub fn prev_tag(&self) -> Option<Tag> {
        self.tags.last().copied()
    }

    pub fn is_valid(&self, action: Tag) -> bool {
        is_valid_action(action, self.prev_tag())
    }

    pub fn advance(&mut self, action: Tag) {
        debug_assert!(!self.is_complete());
        debug_assert!(self.is_valid(action));
        self.tags.push(action);
    }

    pub fn into_tags(self) -> Vec<Tag> {
        self.tags
    }
}

/// Sparse set of indicator feature names, each with implicit value 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    names: Vec<String>,
}

impl FeatureVector {
    pub fn names(&self) -> &[String] {
        &self.names
    }
}

fn word_shape(surface: &str) -> String {
    surface
        .chars()
        .map(|c| {
            if c.is_numeric() {
                'd'
            } else if c.is_uppercase() {
                'X'
            } else if c.is_alphabetic() {
                'x'
            } else {
                c
            }
        })
        .collect()
}

/// Features for the token at `i` given the previous tag: the lowercased
/// word, its shape, prefixes and suffixes of lengths 1 to 3, the
/// neighbor words (with `<BOS>`/`<EOS>` markers), the previous tag, the
/// previous-tag and word conjunction, and a constant bias.
pub fn extract_features(
    tokens: &[Token],
    i: usize,
    prev_tag: Option<Tag>,
) -> Result<FeatureVector, TaggerError> {
    if i >= tokens.len() {
        return Err(TaggerError::IndexOutOfRange { index: i, len: tokens.len() });
    }
    Ok(features_at(tokens, i, prev_tag))
}

fn features_at(tokens: &[Token], i: usize, prev_tag: Option<Tag>) -> FeatureVector {
    let surface = tokens[i].surface.as_str();
    let lower = surface.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let prev_word = if i == 0 { BOS.to_string() } else { tokens[i - 1].surface.to_lowercase() };
    let next_word = if i + 1 == tokens.len() {
        EOS.to_string()
    } else {
        tokens[i + 1].surface.to_lowercase()
    };
    let prev_tag_str = prev_tag.map_or(BOS, Tag::as_str);

    let mut names = Vec::with_capacity(13);
    names.push("bias".to_string());
    names.push(format!("w={lower}"));
    names.push(format!("shape={}", word_shape(surface)));
    for k in 1..=3usize.min(chars.len()) {
        names.push(format!("pre{k}={}", chars[..k].iter().collect::<String>()));
        names.push(format!("suf{k}={}", chars[chars.len() - k..].iter().collect::<String>()));
    }
    names.push(format!("prev_w={prev_word}"));
    names.push(format!("next_w={next_word}"));
    names.push(format!("prev_tag={prev_tag_str}"));
    names.push(format!("prev_tag+w={prev_tag_str}|{lower}"));
    FeatureVector { names }
}

/// Training metadata kept alongside the weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub epochs: usize,
    pub seed: u64,
    /// Mispredicted positions per epoch, in training order.
    pub epoch_errors: Vec<usize>,
}

/// A finalized (averaged) tagging model: feature name to per-action
/// weight triple, indexed like [`ACTIONS`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaggerModel {
    weights: BTreeMap<String, [f64; 3]>,
    metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    weights: BTreeMap<String, [f64; 3]>,
    metadata: ModelMetadata,
}

impl TaggerModel {
    /// A model with no weights; it scores every action 0.
    pub fn empty() -> Self {
        TaggerModel::default()
    }

    pub fn from_weights(weights: BTreeMap<String, [f64; 3]>, metadata: ModelMetadata) -> Self {
        TaggerModel { weights, metadata }
    }

    pub fn weights(&self) -> &BTreeMap<String, [f64; 3]> {
        &self.weights
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    /// Per-action score triple: the sum of each present feature's
    /// weights. Missing features contribute 0.
    pub fn score(&self, features: &FeatureVector) -> [f64; 3] {
        let mut scores = [0.0; 3];
        for name in features.names() {
            if let Some(w) = self.weights.get(name) {
                scores[0] += w[0];
                scores[1] += w[1];
                scores[2] += w[2];
            }
        }
        scores
    }

    /// Tags tokens left to right, always taking the best-scoring valid
    /// action. The output is structurally valid by construction.
    pub fn greedy_decode(&self, tokens: &[Token]) -> Vec<Tag> {
        let mut state = TaggerState::new(tokens);
        while !state.is_complete() {
            let features = features_at(tokens, state.position(), state.prev_tag());
            let scores = self.score(&features);
            state.advance(best_valid_action(&scores, state.prev_tag()));
        }
        state.into_tags()
    }

    /// Tokenizes and tags a text.
    pub fn tag_text(&self, text: &str) -> IobSequence {
        let tokens = tokenize(text);
        let tags = self.greedy_decode(&tokens);
        IobSequence { text: text.to_string(), tokens, tags }
    }

    /// Writes the model as a versioned container.
    pub fn save<W: Write>(&self, writer: W) -> Result<(), TaggerError> {
        let file = ModelFile {
            version: MODEL_VERSION,
            weights: self.weights.clone(),
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(writer, &file).map_err(|e| TaggerError::Corrupt(e.to_string()))
    }

    /// Reads a model written by [`TaggerModel::save`]. Truncated or
    /// malformed input and version mismatches are errors.
    pub fn load<R: Read>(reader: R) -> Result<Self, TaggerError> {
        let file: ModelFile =
            serde_json::from_reader(reader).map_err(|e| TaggerError::Corrupt(e.to_string()))?;
        if file.version != MODEL_VERSION {
            return Err(TaggerError::VersionMismatch {
                found: file.version,
                expected: MODEL_VERSION,
            });
        }
        Ok(TaggerModel { weights: file.weights, metadata: file.metadata })
    }
}

/// Training-time weights with the lazily updated running totals needed
/// for averaging. `stamps` records, per (feature, action), the tick at
/// which the weight last changed, so totals can be settled on demand
/// instead of on every tick.
#[derive(Default)]
struct AveragedPerceptron {
    weights: BTreeMap<String, [f64; 3]>,
    totals: BTreeMap<String, [f64; 3]>,
    stamps: BTreeMap<String, [u64; 3]>,
    ticks: u64,
}

impl AveragedPerceptron {
    fn score(&self, features: &FeatureVector) -> [f64; 3] {
        let mut scores = [0.0; 3];
        for name in features.names() {
            if let Some(w) = self.weights.get(name) {
                scores[0] += w[0];
                scores[1] += w[1];
                scores[2] += w[2];
            }
        }
        scores
    }

    fn update(&mut self, features: &FeatureVector, gold: Tag, predicted: Tag) {
        for name in features.names() {
            self.bump(name, action_index(gold), 1.0);
            self.bump(name, action_index(predicted), -1.0);
        }
    }

    fn bump(&mut self, name: &str, action: usize, delta: f64) {
        let w = self.weights.entry(name.to_string()).or_insert([0.0; 3]);
        let t = self.totals.entry(name.to_string()).or_insert([0.0; 3]);
        let s = self.stamps.entry(name.to_string()).or_insert([0; 3]);
        t[action] += (self.ticks - s[action]) as f64 * w[action];
        s[action] = self.ticks;
        w[action] += delta;
    }

    /// Settles outstanding totals and divides by the tick count. Feature
    /// rows whose averaged triple is exactly zero are dropped.
    fn into_averaged(mut self) -> BTreeMap<String, [f64; 3]> {
        let mut averaged = BTreeMap::new();
        if self.ticks == 0 {
            return averaged;
        }
        for (name, w) in self.weights {
            let t = self.totals.entry(name.clone()).or_insert([0.0; 3]);
            let s = self.stamps.entry(name.clone()).or_insert([0; 3]);
            let mut row = [0.0; 3];
            for a in 0..3 {
                let total = t[a] + (self.ticks - s[a]) as f64 * w[a];
                row[a] = total / self.ticks as f64;
            }
            if row != [0.0; 3] {
                averaged.insert(name, row);
            }
        }
        averaged
    }
}

/// Trains an averaged perceptron on normalized documents. Gold tags come
/// from the IOB encoding of each document. Documents are shuffled each
/// epoch from a ChaCha stream seeded with `seed`; feature extraction
/// uses the gold previous tag (teacher forcing), while prediction at
/// each position respects structural validity against that same gold
/// history. Deterministic for fixed `(docs, epochs, seed)`.
pub fn train(docs: &[Document], epochs: usize, seed: u64) -> Result<TaggerModel, TaggerError> {
    if epochs == 0 {
        return Err(TaggerError::ZeroEpochs);
    }
    let examples: Vec<(Vec<Token>, Vec<Tag>)> = docs
        .iter()
        .map(|d| {
            let enc = encode_iob(d);
            (enc.sequence.tokens, enc.sequence.tags)
        })
        .filter(|(tokens, _)| !tokens.is_empty())
        .collect();
    if examples.is_empty() {
        return Err(TaggerError::EmptyTrainingSet);
    }

    let mut perceptron = AveragedPerceptron::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_errors = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut errors = 0;
        for &idx in &order {
            let (tokens, gold) = &examples[idx];
            for i in 0..tokens.len() {
                let prev = if i == 0 { None } else { Some(gold[i - 1]) };
                let features = features_at(tokens, i, prev);
                perceptron.ticks += 1;
                let scores = perceptron.score(&features);
                let predicted = best_valid_action(&scores, prev);
                if predicted != gold[i] {
                    errors += 1;
                    perceptron.update(&features, gold[i], predicted);
                }
            }
        }
        epoch_errors.push(errors);
    }

    Ok(TaggerModel {
        weights: perceptron.into_averaged(),
        metadata: ModelMetadata { epochs, seed, epoch_errors },
    })
}

/// Lowercased multi-token ingredient phrases for the baseline matcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    phrases: BTreeSet<Vec<String>>,
    max_tokens: usize,
}

impl Lexicon {
    /// Tokenizes and lowercases each phrase. Phrases that tokenize to
    /// nothing are rejected.
    pub fn new<I, S>(phrases: I) -> Result<Self, TaggerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        let mut max_tokens = 0;
        for phrase in phrases {
            let toks: Vec<String> = tokenize(phrase.as_ref())
                .into_iter()
                .map(|t| t.surface.to_lowercase())
                .collect();
            if toks.is_empty() {
                return Err(TaggerError::EmptyPhrase(phrase.as_ref().to_string()));
            }
            max_tokens = max_tokens.max(toks.len());
            set.insert(toks);
        }
        Ok(Lexicon { phrases: set, max_tokens })
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// Baseline tagger: greedy longest match of lowercased token n-grams
/// against the lexicon, left to right, non-overlapping.
pub fn gazetteer_tag(tokens: &[Token], lexicon: &Lexicon) -> Vec<Tag> {
    let lowered: Vec<String> = tokens.iter().map(|t| t.surface.to_lowercase()).collect();
    let mut tags = vec![Tag::Outside; tokens.len()];
    let mut i = 0;
    while i < tokens.len() {
        let longest = lexicon.max_tokens.min(tokens.len() - i);
        let mut matched = 0;
        for n in (1..=longest).rev() {
            if lexicon.phrases.contains(&lowered[i..i + n]) {
                matched = n;
                break;
            }
        }
        if matched > 0 {
            tags[i] = Tag::Begin;
            for tag in tags.iter_mut().take(i + matched).skip(i + 1) {
                *tag = Tag::Inside;
            }
            i += matched;
        } else {
            i += 1;
        }
    }
    tags
}
