//! Mention and entity input templates, sentence splitting, and embedding
//! providers.
//!
//! A mention is rendered from the text around its span as (left, surface,
//! right); an entity is rendered as (title, first sentences of its
//! description). Embeddings come from a provider: either the deterministic
//! reference hash embedder or tables of precomputed vectors keyed by id.

pub(crate) mod vectors;

pub use vectors::{Vector, VectorTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{DescriptionMode, Entity};

/// Default embedding width of the reference hash embedder.
pub const DEFAULT_DIM: usize = 256;

/// Abbreviations that do not end a sentence. The list is part of the
/// sentence-splitting contract.
pub const ABBREVIATIONS: [&str; 10] = [
    "dr.", "mr.", "mrs.", "ms.", "st.", "no.", "vs.", "etc.", "e.g.", "i.e.",
];

/// A mention inside a tweet. Offsets count Unicode scalar values, 0-based,
/// `start` inclusive and `end` exclusive; `surface` must equal the text at
/// `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub tweet_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(default)]
    pub gold_ids: Vec<String>,
    #[serde(default)]
    pub source: SpanSource,
}

/// Where a span came from: human gold annotation or an NER system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpanSource {
    #[default]
    Gold,
    Ner,
}

impl SpanAnnotation {
    /// True for mentions with no KB entity (empty gold set).
    pub fn is_nil(&self) -> bool {
        self.gold_ids.is_empty()
    }

    /// Stable key identifying this span within a corpus.
    pub fn key(&self) -> (String, usize, usize) {
        (self.tweet_id.clone(), self.start, self.end)
    }
}

/// Key under which a span's precomputed mention vector is stored.
pub fn mention_key(span: &SpanAnnotation) -> String {
    format!("{}:{}-{}", span.tweet_id, span.start, span.end)
}

/// The three-field mention template: text left of the span, the span
/// surface, text right of the span. `left + surface + right` always
/// reconstructs the tweet exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionInput {
    pub left: String,
    pub surface: String,
    pub right: String,
}

impl MentionInput {
    /// Single-string form consumed by the hash embedder.
    pub fn render(&self) -> String {
        format!("{} {} {}", self.left, self.surface, self.right)
    }

    /// Token-stream form with literal boundary markers, for external
    /// encoders that consume raw text.
    pub fn render_marked(&self) -> String {
        format!("{} [M1] {} [M2] {}", self.left, self.surface, self.right)
    }
}

/// The two-field entity template: title plus the first sentences of the
/// selected description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityInput {
    pub title: String,
    pub description: String,
}

impl EntityInput {
    pub fn render(&self) -> String {
        format!("{} {}", self.title, self.description)
    }

    pub fn render_marked(&self) -> String {
        format!("{} [M3] {}", self.title, self.description)
    }
}

/// Split the tweet text at the span boundaries. Errors signal corrupted
/// annotations: offsets out of range or a surface that does not match the
/// text slice.
pub fn build_mention_input(tweet_text: &str, span: &SpanAnnotation) -> Result<MentionInput> {
    let char_count = tweet_text.chars().count();
    if !(span.start < span.end && span.end <= char_count) {
        return Err(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            len: char_count,
        });
    }
    let start_byte = byte_offset(tweet_text, span.start);
    let end_byte = byte_offset(tweet_text, span.end);
    let actual = &tweet_text[start_byte..end_byte];
    if actual != span.surface {
        return Err(Error::SurfaceMismatch {
            surface: span.surface.clone(),
            actual: actual.to_string(),
        });
    }
    Ok(MentionInput {
        left: tweet_text[..start_byte].to_string(),
        surface: actual.to_string(),
        right: tweet_text[end_byte..].to_string(),
    })
}

fn byte_offset(text: &str, char_offset: usize) -> usize {
    text.char_indices()
        .nth(char_offset)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

/// Split text into sentences. A sentence ends after `.`, `!` or `?`
/// followed by whitespace and an uppercase letter, or by the end of the
/// text; a `.` closing a word on [`ABBREVIATIONS`] never ends a sentence.
/// Each sentence keeps its trailing whitespace, so concatenating the result
/// reconstructs the input exactly.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut sentences = Vec::new();
    let mut start_byte = 0;
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c == '.' || c == '!' || c == '?' {
            if c == '.' && ends_abbreviation(text, &chars, i) {
                i += 1;
                continue;
            }
            let mut j = i + 1;
            while j < n && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j >= n {
                break; // terminator runs to end of text; remainder is the last sentence
            }
            if j > i + 1 && chars[j].1.is_uppercase() {
                let end_byte = chars[j].0;
                sentences.push(&text[start_byte..end_byte]);
                start_byte = end_byte;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if start_byte < text.len() {
        sentences.push(&text[start_byte..]);
    }
    sentences
}

/// Does the `.` at char index `i` close an abbreviation like "Dr." or "e.g."?
fn ends_abbreviation(text: &str, chars: &[(usize, char)], i: usize) -> bool {
    let mut k = i;
    while k > 0 {
        let prev = chars[k - 1].1;
        if prev.is_alphanumeric() || prev == '.' {
            k -= 1;
        } else {
            break;
        }
    }
    if k == i {
        return false; // bare dot with no word attached
    }
    let end = chars
        .get(i + 1)
        .map(|&(b, _)| b)
        .unwrap_or(text.len());
    let word = text[chars[k].0..end].to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Render an entity as title plus the first `max_sentences` sentences of the
/// selected description. An empty description yields a title-only input.
pub fn build_entity_input(
    entity: &Entity,
    mode: DescriptionMode,
    max_sentences: usize,
) -> EntityInput {
    let desc = match mode {
        DescriptionMode::Long => &entity.long_description,
        DescriptionMode::Short => &entity.short_description,
    };
    let sentences = split_sentences(desc);
    let keep = sentences.len().min(max_sentences);
    // sentences are contiguous slices starting at byte 0
    let end: usize = sentences[..keep].iter().map(|s| s.len()).sum();
    EntityInput {
        title: entity.title.clone(),
        description: desc[..end].to_string(),
    }
}

/// Lowercased word tokens: split on non-alphanumeric boundaries,
/// Unicode-aware, no stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Deterministic hashed-feature text embedder.
///
/// Features are the lowercase word tokens of the input followed by the
/// character trigrams of the whole lowercased text. Each feature string is
/// hashed with 64-bit FNV-1a; the bucket is `hash mod dim` and the sign is
/// +1 when bit 63 is clear, -1 otherwise. Signed counts are accumulated in
/// feature order (words first, then trigrams, each left to right) and the
/// result is L2-normalized. The fixed accumulation order makes outputs
/// bit-identical across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedder dim must be positive".into()));
        }
        Ok(HashEmbedder { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, text: &str) -> Vector {
        let lower = text.to_lowercase();
        let mut values = vec![0f32; self.dim];
        let mut bump = |feature: &str| {
            let h = fnv1a64(feature.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0f32 } else { -1.0f32 };
            values[bucket] += sign;
        };
        for word in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|s| !s.is_empty())
        {
            bump(word);
        }
        let chars: Vec<char> = lower.chars().collect();
        let mut trigram = String::with_capacity(12);
        for window in chars.windows(3) {
            trigram.clear();
            trigram.extend(window);
            bump(&trigram);
        }
        let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        Vector::new(values)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: DEFAULT_DIM }
    }
}

/// Which embedding provider backs the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    ReferenceHash,
    Precomputed,
}

/// Embedding provider: a pure function from rendered template text (or, for
/// precomputed tables, from an id) to a fixed-width vector.
#[derive(Debug, Clone)]
pub enum Provider {
    ReferenceHash(HashEmbedder),
    Precomputed {
        mentions: VectorTable,
        entities: VectorTable,
    },
}

impl Provider {
    pub fn reference_hash(dim: usize) -> Result<Self> {
        Ok(Provider::ReferenceHash(HashEmbedder::new(dim)?))
    }

    /// Wrap precomputed vector tables. Mention vectors are keyed by
    /// [`mention_key`], entity vectors by entity id.
    pub fn precomputed(mentions: VectorTable, entities: VectorTable) -> Result<Self> {
        if mentions.dim() != entities.dim() {
            return Err(Error::DimMismatch {
                expected: entities.dim(),
                got: mentions.dim(),
            });
        }
        Ok(Provider::Precomputed { mentions, entities })
    }

    pub fn kind(&self) -> ProviderKind {
        match self {
            Provider::ReferenceHash(_) => ProviderKind::ReferenceHash,
            Provider::Precomputed { .. } => ProviderKind::Precomputed,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Provider::ReferenceHash(e) => e.dim(),
            Provider::Precomputed { entities, .. } => entities.dim(),
        }
    }

    /// Vector for a mention. The reference embedder hashes the rendered
    /// template; the precomputed provider resolves `key` and fails cleanly
    /// when the vector is missing.
    pub fn mention_vector(&self, key: &str, rendered: &str) -> Result<Vector> {
        match self {
            Provider::ReferenceHash(e) => Ok(e.embed(rendered)),
            Provider::Precomputed { mentions, .. } => mentions
                .get(key)
                .map(|v| Vector::new(v.to_vec()))
                .ok_or_else(|| Error::MissingVector(key.to_string())),
        }
    }

    /// Vector for an entity, resolved by entity id under the precomputed
    /// provider.
    pub fn entity_vector(&self, id: &str, rendered: &str) -> Result<Vector> {
        match self {
            Provider::ReferenceHash(e) => Ok(e.embed(rendered)),
            Provider::Precomputed { entities, .. } => entities
                .get(id)
                .map(|v| Vector::new(v.to_vec()))
                .ok_or_else(|| Error::MissingVector(id.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(tweet_id: &str, start: usize, end: usize, surface: &str) -> SpanAnnotation {
        SpanAnnotation {
            tweet_id: tweet_id.into(),
            start,
            end,
            surface: surface.into(),
            gold_ids: vec![],
            source: SpanSource::Gold,
        }
    }

    #[test]
    fn mention_input_partitions_text() {
        let text = "Liam is a gr8 ML Researcher";
        let m = build_mention_input(text, &span("t", 0, 4, "Liam")).unwrap();
        assert_eq!(m.left, "");
        assert_eq!(m.surface, "Liam");
        assert_eq!(m.right, " is a gr8 ML Researcher");
    }

    #[test]
    fn span_covering_whole_text() {
        let text = "hello";
        let m = build_mention_input(text, &span("t", 0, 5, "hello")).unwrap();
        assert_eq!(m.left, "");
        assert_eq!(m.right, "");
    }

    #[test]
    fn mention_input_counts_chars_not_bytes() {
        let text = "héllo 🌍 wörld";
        let m = build_mention_input(text, &span("t", 6, 7, "🌍")).unwrap();
        assert_eq!(m.left, "héllo ");
        assert_eq!(m.surface, "🌍");
        assert_eq!(m.right, " wörld");
        assert_eq!(format!("{}{}{}", m.left, m.surface, m.right), text);
    }

    #[test]
    fn mention_input_rejects_bad_spans() {
        let text = "short";
        assert!(matches!(
            build_mention_input(text, &span("t", 2, 9, "ort")),
            Err(Error::SpanOutOfRange { .. })
        ));
        assert!(matches!(
            build_mention_input(text, &span("t", 3, 3, "")),
            Err(Error::SpanOutOfRange { .. })
        ));
        assert!(matches!(
            build_mention_input(text, &span("t", 0, 2, "xx")),
            Err(Error::SurfaceMismatch { .. })
        ));
    }

    #[test]
    fn splits_simple_sentences() {
        let s = split_sentences("A big cat. It sat. Done.");
        assert_eq!(s, vec!["A big cat. ", "It sat. ", "Done."]);
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert!(ABBREVIATIONS.contains(&"dr."));
        let s = split_sentences("Dr. Smith went home. He slept.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0], "Dr. Smith went home. ");
        let s = split_sentences("Pick one, e.g. Apples. Then leave.");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn lowercase_after_terminator_does_not_split() {
        assert_eq!(split_sentences("v1. beta is out. Try it.").len(), 2);
    }

    #[test]
    fn concatenation_reconstructs_input() {
        let text = "One! Two? Three. And then... More!! End";
        let joined: String = split_sentences(text).concat();
        assert_eq!(joined, text);
    }

    fn entity_with_long(desc: &str) -> Entity {
        Entity {
            id: "Q1".into(),
            title: "Title".into(),
            long_description: desc.into(),
            short_description: String::new(),
            aliases: vec![],
            type_tags: vec![],
            pagerank: 0.0,
            link_count: 0,
        }
    }

    #[test]
    fn entity_input_caps_sentences_at_ten() {
        let desc: String = (1..=12).map(|i| format!("Sentence number {i}. ")).collect();
        let e = entity_with_long(desc.trim_end());
        let input = build_entity_input(&e, DescriptionMode::Long, 10);
        assert_eq!(split_sentences(&input.description).len(), 10);
        assert!(input.description.contains("number 10"));
        assert!(!input.description.contains("number 11"));
    }

    #[test]
    fn entity_input_empty_short_description() {
        let e = entity_with_long("whatever");
        let input = build_entity_input(&e, DescriptionMode::Short, 10);
        assert_eq!(input.description, "");
        assert_eq!(input.title, "Title");
    }

    #[test]
    fn entity_input_keeps_all_below_cap() {
        let e = entity_with_long("One here. Two here. Three here.");
        let input = build_entity_input(&e, DescriptionMode::Long, 10);
        assert_eq!(split_sentences(&input.description).len(), 3);
        assert_eq!(input.description, e.long_description);
    }

    #[test]
    fn embed_is_deterministic() {
        let e = HashEmbedder::new(64).unwrap();
        let a = e.embed("the same text");
        let b = e.embed("the same text");
        assert_eq!(a, b);
    }

    #[test]
    fn embed_ab_dim8_matches_hand_computation() {
        // Independent straight-line FNV-1a evaluation for the single feature
        // "ab" (no trigrams: the text is shorter than 3 chars).
        let mut h: u64 = 0xcbf29ce484222325;
        h ^= b'a' as u64;
        h = h.wrapping_mul(0x100000001b3);
        h ^= b'b' as u64;
        h = h.wrapping_mul(0x100000001b3);
        assert_eq!(h, 620445648566982762);
        let bucket = (h % 8) as usize;
        assert_eq!(bucket, 2);
        assert_eq!(h >> 63, 0); // sign +1

        let mut expected = vec![0f32; 8];
        expected[bucket] = 1.0; // single +1 count, L2-normalized
        let got = HashEmbedder::new(8).unwrap().embed("ab");
        assert_eq!(got.values(), expected.as_slice());
    }

    #[test]
    fn embed_self_dot_is_unit() {
        let e = HashEmbedder::new(256).unwrap();
        let v = e.embed("some longer text with words and trigrams");
        assert!((v.dot(&v) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn embed_empty_text_is_zero_vector() {
        let e = HashEmbedder::new(8).unwrap();
        assert_eq!(e.embed("").values(), vec![0f32; 8].as_slice());
    }

    #[test]
    fn precomputed_provider_reports_missing_ids() {
        let mut mentions = VectorTable::new(2).unwrap();
        mentions.insert("t1:0-4", &[1.0, 0.0]).unwrap();
        let mut entities = VectorTable::new(2).unwrap();
        entities.insert("Q1", &[0.0, 1.0]).unwrap();
        let p = Provider::precomputed(mentions, entities).unwrap();
        assert!(p.mention_vector("t1:0-4", "ignored").is_ok());
        assert!(matches!(
            p.entity_vector("Q404", "ignored"),
            Err(Error::MissingVector(_))
        ));
    }

    proptest! {
        #[test]
        fn mention_round_trip(text in "\\PC{1,60}", a in 0usize..60, b in 1usize..61) {
            let len = text.chars().count();
            prop_assume!(len > 0);
            let start = a % len;
            let end = start + 1 + (b % (len - start));
            let start_byte = byte_offset(&text, start);
            let end_byte = byte_offset(&text, end);
            let sp = span("t", start, end, &text[start_byte..end_byte]);
            let m = build_mention_input(&text, &sp).unwrap();
            prop_assert_eq!(format!("{}{}{}", m.left, m.surface, m.right), text);
        }

        #[test]
        fn sentence_concat_reconstructs(text in "\\PC{0,80}") {
            let joined: String = split_sentences(&text).concat();
            prop_assert_eq!(joined, text);
        }

        #[test]
        fn entity_input_respects_cap(desc in "\\PC{0,120}", cap in 0usize..6) {
            let e = entity_with_long(&desc);
            let input = build_entity_input(&e, DescriptionMode::Long, cap);
            prop_assert!(split_sentences(&input.description).len() <= cap.max(0));
        }
    }
}
