//! Synthetic corpora for tests, benchmarks, and the bundled fixtures.
//!
//! Three generators:
//! - [`mixed_corpus`]: a seeded, varied corpus of ~200 entities and ~50
//!   tweets mixing alias-reachable, embedding-reachable, ambiguous, NIL,
//!   and multi-gold spans across all three splits.
//! - [`disjoint_strengths`]: an engineered corpus where half the golds are
//!   reachable only by exact alias match and half only by embedding
//!   similarity, so the hybrid union beats either method by a wide margin.
//! - [`shared_descriptions`]: entity families sharing one terse short
//!   description while their long descriptions stay distinctive, so dense
//!   disambiguation collapses under short descriptions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encode::{SpanAnnotation, SpanSource};
use crate::error::{Error, Result};
use crate::eval::{write_dataset, Dataset, Split};
use crate::kb::Entity;
use crate::sparse::CountRecord;

/// A complete generated corpus: entity records, alias count observations, a
/// type-tag denylist, and an annotated tweet dataset.
#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    pub entities: Vec<Entity>,
    pub counts: Vec<CountRecord>,
    pub denylist: Vec<String>,
    pub dataset: Dataset,
}

impl SyntheticCorpus {
    /// Write the corpus as the pipeline input files: `entities.jsonl`,
    /// `alias_counts.tsv`, `denylist.txt`, `dataset.jsonl`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io_path(dir.display().to_string(), e))?;
        let mut w = writer(&dir.join("entities.jsonl"))?;
        for e in &self.entities {
            serde_json::to_writer(&mut w, e).map_err(|e| Error::InvalidInput(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;

        let mut w = writer(&dir.join("alias_counts.tsv"))?;
        for c in &self.counts {
            writeln!(w, "{}\t{}\t{}", c.surface, c.entity_id, c.count)?;
        }
        w.flush()?;

        let mut w = writer(&dir.join("denylist.txt"))?;
        writeln!(w, "# type tags removed before indexing")?;
        for tag in &self.denylist {
            writeln!(w, "{tag}")?;
        }
        w.flush()?;

        let mut w = writer(&dir.join("dataset.jsonl"))?;
        write_dataset(&mut w, &self.dataset)?;
        w.flush()?;
        Ok(())
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::io_path(path.display().to_string(), e)
    })?))
}

fn entity(id: &str, title: &str) -> Entity {
    Entity {
        id: id.into(),
        title: title.into(),
        long_description: String::new(),
        short_description: String::new(),
        aliases: Vec::new(),
        type_tags: Vec::new(),
        pagerank: 0.0,
        link_count: 0,
    }
}

/// Accumulates a tweet's text and spans while tracking char offsets.
struct TweetBuilder {
    tweet_id: String,
    text: String,
    chars: usize,
    spans: Vec<SpanAnnotation>,
}

impl TweetBuilder {
    fn new(tweet_id: impl Into<String>) -> Self {
        TweetBuilder {
            tweet_id: tweet_id.into(),
            text: String::new(),
            chars: 0,
            spans: Vec::new(),
        }
    }

    fn word(&mut self, w: &str) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        self.text.push_str(w);
        self.chars += w.chars().count();
    }

    fn span(&mut self, surface: &str, gold_ids: &[&str], source: SpanSource) {
        if !self.text.is_empty() {
            self.text.push(' ');
            self.chars += 1;
        }
        let start = self.chars;
        self.text.push_str(surface);
        self.chars += surface.chars().count();
        self.spans.push(SpanAnnotation {
            tweet_id: self.tweet_id.clone(),
            start,
            end: self.chars,
            surface: surface.to_string(),
            gold_ids: gold_ids.iter().map(|s| s.to_string()).collect(),
            source,
        });
    }

    fn finish(self, ds: &mut Dataset, split: Split) {
        ds.tweets.insert(self.tweet_id.clone(), self.text);
        ds.split_of.insert(self.tweet_id, split);
        ds.spans.extend(self.spans);
    }
}

const WORDS: [&str; 48] = [
    "river", "music", "launch", "goal", "storm", "band", "movie", "signal", "market", "pixel",
    "rocket", "garden", "silver", "cloud", "tiger", "valley", "bridge", "crystal", "harbor",
    "meadow", "copper", "falcon", "ember", "quartz", "willow", "thunder", "canyon", "breeze",
    "marble", "forest", "comet", "prairie", "lantern", "velvet", "summit", "glacier", "raven",
    "drift", "horizon", "pebble", "saffron", "timber", "vortex", "whistle", "zephyr", "bramble",
    "cinder", "dune",
];

const SHORTS: [&str; 6] = [
    "species of bird",
    "city in india",
    "american singer",
    "video game",
    "research project",
    "mountain peak",
];

const DENY_TAG: &str = "Q_disambiguation_page";

/// Seeded mixed corpus: ~200 entities (60 linkable, 20 denylisted, 120
/// filler) and ~50 tweets whose spans mix every reachability flavor.
pub fn mixed_corpus(seed: u64) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = SyntheticCorpus {
        denylist: vec![DENY_TAG.to_string()],
        ..SyntheticCorpus::default()
    };

    // linkable targets with signature tokens woven into their descriptions
    let mut linkable: Vec<String> = Vec::new();
    for i in 0..60 {
        let id = format!("Q{:04}", 1000 + i);
        let w1 = WORDS[rng.gen_range(0..WORDS.len())];
        let w2 = WORDS[rng.gen_range(0..WORDS.len())];
        let mut e = entity(&id, &format!("{} {}", title_case(w1), title_case(w2)));
        let n_sents = rng.gen_range(4..=8usize);
        let mut desc = String::new();
        for s in 0..n_sents {
            let mut words: Vec<String> =
                (0..rng.gen_range(4..7usize)).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect();
            if s < 3 {
                words.push(format!("sig{i}x{s}"));
            }
            desc.push_str(&title_case(&words.join(" ")));
            desc.push_str(". ");
        }
        e.long_description = desc.trim_end().to_string();
        e.short_description = SHORTS[rng.gen_range(0..SHORTS.len())].to_string();
        e.aliases = vec![format!("alias{i}")];
        if rng.gen_bool(0.4) {
            e.aliases.push(format!("{w1} {w2}"));
        }
        if rng.gen_bool(0.25) {
            e.aliases.push("star".to_string()); // shared ambiguous alias
        }
        e.type_tags = vec!["Q_notable".to_string()];
        e.pagerank = rng.gen_range(0.0..1.0);
        e.link_count = rng.gen_range(0..2000);
        corpus.entities.push(e);
        linkable.push(id);
    }
    // denylisted pages that must disappear before retrieval
    for i in 0..20 {
        let mut e = entity(
            &format!("Q{:04}", 2000 + i),
            &format!("List of {} things {i}", WORDS[i % WORDS.len()]),
        );
        e.type_tags = vec![DENY_TAG.to_string()];
        e.aliases = vec![format!("alias{}", i % 10)]; // collides with linkable aliases
        e.long_description = "A page enumerating many unrelated entries.".into();
        corpus.entities.push(e);
    }
    // filler
    for i in 0..120 {
        let mut e = entity(&format!("Q{:04}", 3000 + i), &format!("Filler {i}"));
        e.long_description = format!("Unrelated note about flub{i}a and flub{i}b. Nothing else.");
        e.type_tags = vec!["Q_notable".to_string()];
        corpus.entities.push(e);
    }

    // alias count observations, including a few referencing unknown ids
    for (i, id) in linkable.iter().enumerate() {
        if rng.gen_bool(0.7) {
            corpus.counts.push(CountRecord {
                surface: format!("alias{i}"),
                entity_id: id.clone(),
                count: rng.gen_range(1..40),
            });
        }
    }
    for i in 0..5 {
        corpus.counts.push(CountRecord {
            surface: format!("ghost{i}"),
            entity_id: "Q9999".into(),
            count: 3,
        });
    }

    let splits = [Split::Academic, Split::Ood, Split::Train];
    for t in 0..50 {
        let mut tb = TweetBuilder::new(format!("t{t:03}"));
        if rng.gen_bool(0.2) {
            tb.word("🔥");
        }
        let split = match rng.gen_range(0..10) {
            0..=3 => splits[0],
            4..=7 => splits[1],
            _ => splits[2],
        };
        let n_spans = if rng.gen_bool(0.3) { 2 } else { 1 };
        for s in 0..n_spans {
            let gi = rng.gen_range(0..linkable.len());
            let gold = linkable[gi].clone();
            tb.word(WORDS[rng.gen_range(0..WORDS.len())]);
            match rng.gen_range(0..10) {
                // alias-reachable, context matches the gold's description
                0..=2 => {
                    tb.span(&format!("alias{gi}"), &[&gold], SpanSource::Gold);
                    for k in 0..3 {
                        tb.word(&format!("sig{gi}x{k}"));
                    }
                }
                // embedding-reachable only: unseen surface, matching context
                3..=5 => {
                    tb.span(&format!("xq{t}{s}"), &[&gold], SpanSource::Gold);
                    for k in 0..3 {
                        tb.word(&format!("sig{gi}x{k}"));
                    }
                    tb.word(WORDS[rng.gen_range(0..WORDS.len())]);
                }
                // alias-reachable with unhelpful context
                6..=7 => {
                    tb.span(&format!("alias{gi}"), &[&gold], SpanSource::Gold);
                    for _ in 0..3 {
                        tb.word(WORDS[rng.gen_range(0..WORDS.len())]);
                    }
                }
                // ambiguous shared alias with two golds
                8 => {
                    let others: Vec<&str> = corpus
                        .entities
                        .iter()
                        .filter(|e| e.aliases.iter().any(|a| a == "star"))
                        .map(|e| e.id.as_str())
                        .take(2)
                        .collect();
                    if others.is_empty() {
                        tb.span(&format!("alias{gi}"), &[&gold], SpanSource::Gold);
                    } else {
                        tb.span("star", &others, SpanSource::Gold);
                    }
                    tb.word(WORDS[rng.gen_range(0..WORDS.len())]);
                }
                // NIL span
                _ => {
                    tb.span(&format!("nil{t}{s}"), &[], SpanSource::Gold);
                    tb.word(WORDS[rng.gen_range(0..WORDS.len())]);
                }
            }
        }
        // NER spans mirror the gold spans, sometimes with clipped boundaries
        let gold_spans: Vec<SpanAnnotation> = tb.spans.clone();
        for span in gold_spans {
            let mut ner = span.clone();
            ner.source = SpanSource::Ner;
            if rng.gen_bool(0.2) {
                // clip to the first word of the surface
                if let Some(first) = span.surface.split(' ').next() {
                    if first.len() < span.surface.len() {
                        ner.end = ner.start + first.chars().count();
                        ner.surface = first.to_string();
                    }
                }
            }
            tb.spans.push(ner);
        }
        tb.finish(&mut corpus.dataset, split);
    }
    corpus
}

fn title_case(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Engineered complementarity: 25 golds reachable only through an exact
/// alias (their descriptions are junk and twenty decoys soak up the dense
/// ranks) and 25 golds reachable only through context similarity (their
/// surfaces appear in no alias). Lookup and dense each recall exactly half;
/// the union recalls everything.
pub fn disjoint_strengths() -> SyntheticCorpus {
    let mut corpus = SyntheticCorpus {
        denylist: vec![DENY_TAG.to_string()],
        ..SyntheticCorpus::default()
    };
    let shared_ctx: Vec<String> = (0..8).map(|j| format!("ctxaw{j}")).collect();

    for i in 0..25 {
        let mut e = entity(&format!("QA{i:03}"), &format!("Gold Alpha {i}"));
        e.aliases = vec![format!("blorp{i}")];
        e.long_description = format!("About zuzu{i} and qift{i}. Also moxo{i} veld{i}.");
        e.pagerank = 0.5;
        e.link_count = 100;
        corpus.entities.push(e);
    }
    for k in 0..20 {
        let mut e = entity(&format!("QD{k:03}"), &format!("Decoy {k}"));
        e.long_description = format!("{} filler{k}.", shared_ctx.join(" "));
        corpus.entities.push(e);
    }
    for i in 0..25 {
        let ctx: Vec<String> = (0..8).map(|j| format!("ctxb{i}w{j}")).collect();
        let mut e = entity(&format!("QB{i:03}"), &format!("Zarnixe {i}"));
        e.long_description = format!("{} tail{i}.", ctx.join(" "));
        e.pagerank = 0.5;
        e.link_count = 100;
        corpus.entities.push(e);
    }
    for f in 0..130 {
        let mut e = entity(&format!("QF{f:03}"), &format!("Filler {f}"));
        e.long_description = format!("Notes on junk{f}a junk{f}b junk{f}c junk{f}d.");
        corpus.entities.push(e);
    }

    for i in 0..25 {
        let mut tb = TweetBuilder::new(format!("a{i:03}"));
        tb.word("someone");
        tb.word("said");
        tb.span(&format!("blorp{i}"), &[&format!("QA{i:03}")], SpanSource::Gold);
        tb.word("is");
        tb.word("near");
        for w in &shared_ctx {
            tb.word(w);
        }
        tb.finish(&mut corpus.dataset, Split::Academic);
    }
    for i in 0..25 {
        let mut tb = TweetBuilder::new(format!("b{i:03}"));
        tb.word("talking");
        tb.word("about");
        tb.span(&format!("zarnix{i}"), &[&format!("QB{i:03}")], SpanSource::Gold);
        tb.word("with");
        for j in 0..8 {
            tb.word(&format!("ctxb{i}w{j}"));
        }
        tb.finish(&mut corpus.dataset, Split::Ood);
    }
    corpus
}

/// Ablation fixture: 12 families of 5 entities sharing one surface form and
/// one terse short description, while long descriptions carry each entity's
/// distinctive vocabulary. Tweets mention a family member with that
/// vocabulary as context; 3 tweets per entity split train/academic/ood.
pub fn shared_descriptions() -> SyntheticCorpus {
    const FAMILIES: [&str; 12] = [
        "finch", "osprey", "heron", "plover", "warbler", "kite", "tern", "crake", "brant",
        "swift", "vireo", "grebe",
    ];
    let mut corpus = SyntheticCorpus {
        denylist: vec![DENY_TAG.to_string()],
        ..SyntheticCorpus::default()
    };
    for (f, fam) in FAMILIES.iter().enumerate() {
        for m in 0..5 {
            let id = format!("QX{f:02}{m}");
            let member = char::from(b'A' + m as u8);
            let mut e = entity(&id, &format!("{} {member}", title_case(fam)));
            let (u1, u2, u3) = unique_tokens(f, m);
            e.short_description = if f < 6 {
                "species of bird".to_string()
            } else {
                "city in india".to_string()
            };
            e.long_description = if f < 6 {
                format!("A bird often seen with {u1} and {u2}. Known for {u3} behaviour.")
            } else {
                format!("A place known for {u1} and {u2}. Visitors mention {u3} often.")
            };
            e.aliases = vec![fam.to_string()];
            e.pagerank = 0.5;
            e.link_count = 100;
            corpus.entities.push(e);
        }
    }

    let templates: [&[&str]; 3] = [
        &["spotted", "the"],
        &["just", "saw", "a"],
        &["thinking", "about", "that"],
    ];
    let splits = [Split::Train, Split::Academic, Split::Ood];
    for (f, fam) in FAMILIES.iter().enumerate() {
        for m in 0..5 {
            let id = format!("QX{f:02}{m}");
            let (u1, u2, u3) = unique_tokens(f, m);
            for (t, split) in splits.iter().enumerate() {
                let mut tb = TweetBuilder::new(format!("s{f:02}{m}{t}"));
                for w in templates[t] {
                    tb.word(w);
                }
                tb.span(fam, &[&id], SpanSource::Gold);
                tb.word("today");
                tb.word("near");
                tb.word(&u1);
                tb.word(&u2);
                tb.word("while");
                tb.word(&u3);
                tb.finish(&mut corpus.dataset, *split);
            }
        }
    }
    corpus
}

fn unique_tokens(f: usize, m: usize) -> (String, String, String) {
    (
        format!("tok{f}m{m}a"),
        format!("tok{f}m{m}b"),
        format!("tok{f}m{m}c"),
    )
}
