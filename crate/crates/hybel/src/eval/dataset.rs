//! Evaluation datasets: tweets, annotated spans, and split labels, plus the
//! line-delimited file format and a column adapter for TweetNERD-style TSV.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::encode::{SpanAnnotation, SpanSource};
use crate::error::{Error, Result};

/// Benchmark split a tweet belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Academic,
    Ood,
    Train,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Academic => "academic",
            Split::Ood => "ood",
            Split::Train => "train",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "academic" => Ok(Split::Academic),
            "ood" => Ok(Split::Ood),
            "train" => Ok(Split::Train),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Tweets and their annotated spans. Every span's tweet id resolves to a
/// text and a split label.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub tweets: BTreeMap<String, String>,
    pub spans: Vec<SpanAnnotation>,
    pub split_of: BTreeMap<String, Split>,
}

impl Dataset {
    pub fn text(&self, tweet_id: &str) -> Result<&str> {
        self.tweets
            .get(tweet_id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownId(tweet_id.to_string()))
    }

    pub fn spans_with_source(&self, source: SpanSource) -> impl Iterator<Item = &SpanAnnotation> {
        self.spans.iter().filter(move |s| s.source == source)
    }

    /// Check every span against its tweet text.
    pub fn validate(&self) -> Result<()> {
        for span in &self.spans {
            let text = self.text(&span.tweet_id)?;
            crate::encode::build_mention_input(text, span)?;
            if !self.split_of.contains_key(&span.tweet_id) {
                return Err(Error::InvalidInput(format!(
                    "tweet {:?} has no split label",
                    span.tweet_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TweetRecord {
    tweet_id: String,
    text: String,
    split: Split,
    spans: Vec<SpanRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpanRecord {
    start: usize,
    end: usize,
    surface: String,
    #[serde(default)]
    gold_ids: Vec<String>,
    #[serde(default)]
    source: SpanSource,
}

/// Load a dataset from line-delimited JSON, validating span offsets and
/// surfaces against each tweet's text.
pub fn load_dataset(reader: impl BufRead, path: &str) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TweetRecord = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        if ds.tweets.contains_key(&record.tweet_id) {
            return Err(Error::malformed(
                path,
                idx + 1,
                format!("duplicate tweet_id {:?}", record.tweet_id),
            ));
        }
        for sr in record.spans {
            let span = SpanAnnotation {
                tweet_id: record.tweet_id.clone(),
                start: sr.start,
                end: sr.end,
                surface: sr.surface,
                gold_ids: sr.gold_ids,
                source: sr.source,
            };
            crate::encode::build_mention_input(&record.text, &span)
                .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
            ds.spans.push(span);
        }
        ds.split_of.insert(record.tweet_id.clone(), record.split);
        ds.tweets.insert(record.tweet_id, record.text);
    }
    Ok(ds)
}

/// Write a dataset as line-delimited JSON, tweets in id order and spans in
/// (start, end, source) order, so identical datasets serialize identically.
pub fn write_dataset(w: &mut impl Write, ds: &Dataset) -> Result<()> {
    let mut by_tweet: BTreeMap<&str, Vec<&SpanAnnotation>> = BTreeMap::new();
    for span in &ds.spans {
        by_tweet.entry(&span.tweet_id).or_default().push(span);
    }
    for (tweet_id, text) in &ds.tweets {
        let split = *ds.split_of.get(tweet_id).ok_or_else(|| {
            Error::InvalidInput(format!("tweet {tweet_id:?} has no split label"))
        })?;
        let mut spans = by_tweet.remove(tweet_id.as_str()).unwrap_or_default();
        spans.sort_by_key(|s| (s.start, s.end, s.source == SpanSource::Ner));
        let record = TweetRecord {
            tweet_id: tweet_id.clone(),
            text: text.clone(),
            split,
            spans: spans
                .into_iter()
                .map(|s| SpanRecord {
                    start: s.start,
                    end: s.end,
                    surface: s.surface.clone(),
                    gold_ids: s.gold_ids.clone(),
                    source: s.source,
                })
                .collect(),
        };
        serde_json::to_writer(&mut *w, &record).map_err(|e| Error::InvalidInput(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Ingestion tallies from the TweetNERD adapter.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows: usize,
    pub missing_text: usize,
    pub invalid_span: usize,
    pub spans: usize,
}

/// Default sentinel entity values that mean "no linkable entity".
pub fn default_sentinels() -> BTreeSet<String> {
    ["NO_ENTITY", "AMBIGUOUS", ""]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Ingest TweetNERD-style TSV rows (tweet id, phrase, start, end, entity id;
/// extra columns ignored) into a dataset. Rows with the same (tweet, start,
/// end) merge their entity ids; sentinel or unknown entity values contribute
/// nothing, so an all-sentinel span becomes a NIL annotation. Rows whose
/// tweet text is missing or whose span does not match the text are skipped
/// and tallied.
pub fn ingest_tweetnerd(
    reader: impl BufRead,
    path: &str,
    texts: &BTreeMap<String, String>,
    split: Split,
    source: SpanSource,
    sentinels: &BTreeSet<String>,
) -> Result<(Dataset, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut merged: BTreeMap<(String, usize, usize), (String, BTreeSet<String>)> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 5 {
            return Err(Error::malformed(
                path,
                idx + 1,
                format!("expected at least 5 tab-separated columns, got {}", cols.len()),
            ));
        }
        let (start, end) = match (cols[2].trim().parse(), cols[3].trim().parse()) {
            (Ok(s), Ok(e)) => (s, e),
            _ if idx == 0 => continue, // header row
            _ => {
                return Err(Error::malformed(
                    path,
                    idx + 1,
                    "start/end columns are not integers",
                ))
            }
        };
        stats.rows += 1;
        let tweet_id = cols[0].trim().to_string();
        if !texts.contains_key(&tweet_id) {
            stats.missing_text += 1;
            continue;
        }
        let entry = merged
            .entry((tweet_id, start, end))
            .or_insert_with(|| (cols[1].to_string(), BTreeSet::new()));
        let entity = cols[4].trim();
        if !sentinels.contains(entity) {
            entry.1.insert(entity.to_string());
        }
    }

    let mut ds = Dataset::default();
    for ((tweet_id, start, end), (surface, gold_ids)) in merged {
        let text = &texts[&tweet_id];
        let span = SpanAnnotation {
            tweet_id: tweet_id.clone(),
            start,
            end,
            surface,
            gold_ids: gold_ids.into_iter().collect(),
            source,
        };
        if crate::encode::build_mention_input(text, &span).is_err() {
            stats.invalid_span += 1;
            continue;
        }
        if !ds.tweets.contains_key(&tweet_id) {
            ds.tweets.insert(tweet_id.clone(), text.clone());
            ds.split_of.insert(tweet_id, split);
        }
        ds.spans.push(span);
        stats.spans += 1;
    }
    if stats.missing_text > 0 || stats.invalid_span > 0 {
        log::warn!(
            "ingest: skipped {} rows without tweet text, {} spans failing validation",
            stats.missing_text,
            stats.invalid_span
        );
    }
    Ok((ds, stats))
}

/// Read a tweet-texts file: line-delimited JSON records {tweet_id, text}.
pub fn load_tweet_texts(reader: impl BufRead, path: &str) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        tweet_id: String,
        text: String,
    }
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io_path(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        out.insert(row.tweet_id, row.text);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn dataset_round_trips() {
        let line = concat!(
            r#"{"tweet_id":"t1","text":"Wiz and Amber here","split":"academic","#,
            r#""spans":[{"start":8,"end":13,"surface":"Amber","gold_ids":["Q290856"],"source":"gold"}]}"#,
            "\n",
        );
        let ds = load_dataset(Cursor::new(line), "mem").unwrap();
        assert_eq!(ds.spans.len(), 1);
        assert_eq!(ds.spans[0].surface, "Amber");
        assert_eq!(ds.split_of["t1"], Split::Academic);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let again = load_dataset(Cursor::new(&buf), "mem").unwrap();
        assert_eq!(again.spans, ds.spans);
        assert_eq!(again.tweets, ds.tweets);
    }

    #[test]
    fn bad_offsets_are_rejected_at_load() {
        let line = concat!(
            r#"{"tweet_id":"t1","text":"short","split":"ood","#,
            r#""spans":[{"start":0,"end":99,"surface":"short"}]}"#,
        );
        assert!(load_dataset(Cursor::new(line), "mem").is_err());
        let line = concat!(
            r#"{"tweet_id":"t1","text":"short","split":"ood","#,
            r#""spans":[{"start":0,"end":2,"surface":"xx"}]}"#,
        );
        assert!(load_dataset(Cursor::new(line), "mem").is_err());
    }

    #[test]
    fn tweetnerd_rows_merge_and_map_sentinels() {
        let mut texts = BTreeMap::new();
        texts.insert("11".to_string(), "Wiz and Amber here".to_string());
        texts.insert("22".to_string(), "nothing to link".to_string());
        let tsv = "tweet_id\tphrase\tstart\tend\tentityId\n\
                   11\tAmber\t8\t13\tQ290856\n\
                   11\tAmber\t8\t13\tQ456862\n\
                   11\tWiz\t0\t3\tNO_ENTITY\n\
                   22\tnothing\t0\t7\tAMBIGUOUS\n\
                   33\tghost\t0\t5\tQ1\n";
        let (ds, stats) = ingest_tweetnerd(
            Cursor::new(tsv),
            "mem",
            &texts,
            Split::Ood,
            SpanSource::Gold,
            &default_sentinels(),
        )
        .unwrap();
        assert_eq!(stats.rows, 5);
        assert_eq!(stats.missing_text, 1);
        assert_eq!(stats.spans, 3);
        let amber = ds
            .spans
            .iter()
            .find(|s| s.surface == "Amber")
            .unwrap();
        assert_eq!(amber.gold_ids, vec!["Q290856", "Q456862"]);
        let wiz = ds.spans.iter().find(|s| s.surface == "Wiz").unwrap();
        assert!(wiz.is_nil());
        assert!(ds.spans.iter().find(|s| s.surface == "nothing").unwrap().is_nil());
    }

    #[test]
    fn tweetnerd_invalid_spans_are_tallied() {
        let mut texts = BTreeMap::new();
        texts.insert("1".to_string(), "tiny".to_string());
        let tsv = "1\tmismatch\t0\t4\tQ5\n1\ttiny\t0\t4\tQ7\n";
        let (ds, stats) = ingest_tweetnerd(
            Cursor::new(tsv),
            "mem",
            &texts,
            Split::Academic,
            SpanSource::Ner,
            &default_sentinels(),
        )
        .unwrap();
        // both rows target the same span; the first surface wins the merge
        // and does not match the text, so the span is dropped
        assert_eq!(stats.invalid_span, 1);
        assert_eq!(ds.spans.len(), 0);
    }
}
