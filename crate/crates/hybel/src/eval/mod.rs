//! Measurement protocol: recall@K per split, recall curves, unique-correct
//! counts, method-overlap contingency tables, and disambiguation P/R/F1.

pub mod dataset;
pub mod report;

pub use dataset::{
    default_sentinels, ingest_tweetnerd, load_dataset, load_tweet_texts, write_dataset, Dataset,
    IngestStats, Split,
};
pub use report::EvalReport;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::candidate::{rank_order, Method};
use crate::encode::SpanSource;
use crate::error::{Error, Result};
use crate::retrieve::CandidateSet;

/// How candidates are matched against gold entities: per span, or against
/// the union of a tweet's retrieved candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    SpanAligned,
    TweetLevel,
}

/// One recall unit: a span with its gold ids, or a single (tweet, gold id)
/// pair in tweet-level mode. Instances with no gold ids are NIL and never
/// enter recall denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldInstance {
    pub tweet_id: String,
    pub span: Option<(usize, usize)>,
    pub gold_ids: Vec<String>,
}

impl GoldInstance {
    pub fn is_nil(&self) -> bool {
        self.gold_ids.is_empty()
    }
}

/// Span-aligned gold instances: one per annotated span of the given source.
/// A span with several gold ids stays one instance and counts as hit when
/// any of them is retrieved.
pub fn span_gold_instances(ds: &Dataset, source: SpanSource) -> Vec<GoldInstance> {
    ds.spans_with_source(source)
        .map(|s| GoldInstance {
            tweet_id: s.tweet_id.clone(),
            span: Some((s.start, s.end)),
            gold_ids: s.gold_ids.clone(),
        })
        .collect()
}

/// Tweet-level gold instances: one per unique gold entity of each tweet,
/// drawn from spans of the given source.
pub fn tweet_gold_instances(ds: &Dataset, source: SpanSource) -> Vec<GoldInstance> {
    let mut per_tweet: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for span in ds.spans_with_source(source) {
        let golds = per_tweet.entry(&span.tweet_id).or_default();
        for id in &span.gold_ids {
            if !golds.contains(id) {
                golds.push(id.clone());
            }
        }
    }
    per_tweet
        .into_iter()
        .flat_map(|(tweet_id, golds)| {
            golds.into_iter().map(move |g| GoldInstance {
                tweet_id: tweet_id.to_string(),
                span: None,
                gold_ids: vec![g],
            })
        })
        .collect()
}

/// Candidate ids a set retains at cutoff `k`, optionally restricted to a
/// subset of its methods. Ranked methods keep their top `k` by (score
/// descending, id ascending); retrieve-all methods (lookup) are never
/// truncated, matching the evaluation protocol.
fn retained_ids<'a>(
    set: &'a CandidateSet,
    k: usize,
    methods: Option<&[Method]>,
) -> HashSet<&'a str> {
    let mut out = HashSet::new();
    for spec in &set.method_config {
        if let Some(allowed) = methods {
            if !allowed.contains(&spec.method) {
                continue;
            }
        }
        let bearing = set
            .candidates
            .iter()
            .filter(|c| c.methods.contains(&spec.method));
        match spec.k {
            None => out.extend(bearing.map(|c| c.id.as_str())),
            Some(_) => {
                let mut ranked: Vec<(f64, &str)> = bearing
                    .map(|c| (c.scores[&spec.method], c.id.as_str()))
                    .collect();
                ranked.sort_by(|a, b| rank_order(a.0, a.1, b.0, b.1));
                out.extend(ranked.into_iter().take(k).map(|(_, id)| id));
            }
        }
    }
    out
}

type SpanKey = (String, usize, usize);

struct SetLookup<'a> {
    by_span: HashMap<SpanKey, &'a CandidateSet>,
    by_tweet: HashMap<&'a str, Vec<&'a CandidateSet>>,
}

impl<'a> SetLookup<'a> {
    fn new(sets: &'a [CandidateSet]) -> Self {
        let mut by_span = HashMap::new();
        let mut by_tweet: HashMap<&str, Vec<&CandidateSet>> = HashMap::new();
        for set in sets {
            by_span.insert(set.span.key(), set);
            by_tweet.entry(set.tweet_id()).or_default().push(set);
        }
        SetLookup { by_span, by_tweet }
    }

    fn hit(
        &self,
        instance: &GoldInstance,
        mode: EvalMode,
        k: usize,
        methods: Option<&[Method]>,
    ) -> bool {
        match (mode, instance.span) {
            (EvalMode::SpanAligned, Some((start, end))) => {
                let key = (instance.tweet_id.clone(), start, end);
                self.by_span.get(&key).is_some_and(|set| {
                    let retained = retained_ids(set, k, methods);
                    instance.gold_ids.iter().any(|g| retained.contains(g.as_str()))
                })
            }
            (EvalMode::TweetLevel, _) => self
                .by_tweet
                .get(instance.tweet_id.as_str())
                .is_some_and(|sets| {
                    instance.gold_ids.iter().any(|g| {
                        sets.iter()
                            .any(|set| retained_ids(set, k, methods).contains(g.as_str()))
                    })
                }),
            // a span-aligned evaluation over tweet-level instances has no
            // span to align with; treat as miss
            (EvalMode::SpanAligned, None) => false,
        }
    }
}

/// Hit/total counts for one system on one slice of instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub hits: usize,
    pub total: usize,
}

impl Counts {
    pub fn recall(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits as f64 / self.total as f64
        }
    }
}

/// Recall broken down by split. `overall` pools academic and ood instances
/// before division; train instances never enter it.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RecallBreakdown {
    pub per_split: BTreeMap<Split, Counts>,
    pub overall: Counts,
}

/// Recall@k of the candidate sets taken as one system (the methods each set
/// was built with). NIL instances are excluded from denominators.
pub fn recall_at_k(
    sets: &[CandidateSet],
    golds: &[GoldInstance],
    k: usize,
    mode: EvalMode,
    split_of: &BTreeMap<String, Split>,
) -> Result<RecallBreakdown> {
    recall_at_k_methods(sets, golds, k, mode, split_of, None)
}

/// Recall@k restricted to the named methods within each candidate set.
pub fn recall_at_k_methods(
    sets: &[CandidateSet],
    golds: &[GoldInstance],
    k: usize,
    mode: EvalMode,
    split_of: &BTreeMap<String, Split>,
    methods: Option<&[Method]>,
) -> Result<RecallBreakdown> {
    if k < 1 {
        return Err(Error::InvalidInput("recall@k requires k >= 1".into()));
    }
    let lookup = SetLookup::new(sets);
    let mut breakdown = RecallBreakdown::default();
    for instance in golds {
        if instance.is_nil() {
            continue;
        }
        let split = *split_of
            .get(&instance.tweet_id)
            .ok_or_else(|| Error::InvalidInput(format!(
                "tweet {:?} has no split label",
                instance.tweet_id
            )))?;
        let hit = lookup.hit(instance, mode, k, methods);
        let entry = breakdown.per_split.entry(split).or_default();
        entry.total += 1;
        entry.hits += hit as usize;
        if split != Split::Train {
            breakdown.overall.total += 1;
            breakdown.overall.hits += hit as usize;
        }
    }
    Ok(breakdown)
}

/// One point of a recall@K curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub system: String,
    pub k: usize,
    pub recall: f64,
}

/// Systems a curve is drawn for: every method present in the sets plus the
/// hybrid union when both of its components are present.
fn curve_systems(sets: &[CandidateSet]) -> Vec<(String, Vec<Method>)> {
    let mut present: Vec<Method> = Vec::new();
    for m in Method::ALL {
        if sets
            .iter()
            .any(|s| s.method_config.iter().any(|spec| spec.method == m))
        {
            present.push(m);
        }
    }
    let mut systems: Vec<(String, Vec<Method>)> = present
        .iter()
        .map(|m| (m.as_str().to_string(), vec![*m]))
        .collect();
    if present.contains(&Method::Lookup) && present.contains(&Method::Dense) {
        systems.push(("hybrid".into(), vec![Method::Lookup, Method::Dense]));
    }
    systems
}

/// Recall@K over ascending `ks` for every method present plus hybrid,
/// computed over the pooled non-train instances. Curves are non-decreasing
/// in K by the prefix property of ranked lists.
pub fn recall_curve(
    sets: &[CandidateSet],
    golds: &[GoldInstance],
    ks: &[usize],
    mode: EvalMode,
    split_of: &BTreeMap<String, Split>,
) -> Result<Vec<CurvePoint>> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "curve ks must be non-empty and strictly ascending".into(),
        ));
    }
    let mut points = Vec::new();
    for (system, methods) in curve_systems(sets) {
        for &k in ks {
            let breakdown =
                recall_at_k_methods(sets, golds, k, mode, split_of, Some(&methods))?;
            points.push(CurvePoint {
                system: system.clone(),
                k,
                recall: breakdown.overall.recall(),
            });
        }
    }
    Ok(points)
}

/// Per-method hit sets over the non-NIL gold instances, used by the
/// unique-correct and overlap reports. `denominator` is the number of
/// non-NIL instances; hit sets index into that sequence.
#[derive(Debug, Clone, Default)]
pub struct HitAnalysis {
    pub hits: BTreeMap<Method, HashSet<usize>>,
    pub denominator: usize,
}

pub fn method_hit_sets(
    sets: &[CandidateSet],
    golds: &[GoldInstance],
    methods: &[Method],
    k: usize,
    mode: EvalMode,
) -> HitAnalysis {
    let lookup = SetLookup::new(sets);
    let mut analysis = HitAnalysis::default();
    for m in methods {
        analysis.hits.insert(*m, HashSet::new());
    }
    for instance in golds.iter().filter(|g| !g.is_nil()) {
        let idx = analysis.denominator;
        analysis.denominator += 1;
        for m in methods {
            if lookup.hit(instance, mode, k, Some(&[*m])) {
                analysis.hits.get_mut(m).unwrap().insert(idx);
            }
        }
    }
    analysis
}

/// Which reading of "unique correct" to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UniqueDef {
    /// Instances hit by this method and by no other method in the set.
    Exclusive,
    /// All instances hit by this method.
    Total,
}

/// Unique-correct counts per method under the chosen definition.
pub fn unique_correct(analysis: &HitAnalysis, def: UniqueDef) -> BTreeMap<Method, usize> {
    analysis
        .hits
        .iter()
        .map(|(m, hits)| {
            let n = match def {
                UniqueDef::Total => hits.len(),
                UniqueDef::Exclusive => hits
                    .iter()
                    .filter(|i| {
                        analysis
                            .hits
                            .iter()
                            .all(|(other, theirs)| other == m || !theirs.contains(i))
                    })
                    .count(),
            };
            (*m, n)
        })
        .collect()
}

/// One row of the overlap contingency table: a yes/no pattern over the
/// methods, its instance count, and its proportion of the denominator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub pattern: Vec<(Method, bool)>,
    pub count: usize,
    pub proportion: f64,
}

/// The 2^m contingency table assigning every non-NIL instance to exactly one
/// hit pattern. Rows are ordered with all-yes first (the Y/N order of the
/// methods' presence bits, most significant first).
pub fn overlap_table(analysis: &HitAnalysis) -> Vec<OverlapRow> {
    let methods: Vec<Method> = analysis.hits.keys().copied().collect();
    let m = methods.len();
    let mut counts = vec![0usize; 1 << m];
    for i in 0..analysis.denominator {
        let mut pattern = 0usize;
        for (j, method) in methods.iter().enumerate() {
            if analysis.hits[method].contains(&i) {
                pattern |= 1 << (m - 1 - j);
            }
        }
        counts[pattern] += 1;
    }
    (0..(1 << m))
        .rev()
        .map(|pattern| OverlapRow {
            pattern: methods
                .iter()
                .enumerate()
                .map(|(j, method)| (*method, pattern & (1 << (m - 1 - j)) != 0))
                .collect(),
            count: counts[pattern],
            proportion: if analysis.denominator == 0 {
                0.0
            } else {
                counts[pattern] as f64 / analysis.denominator as f64
            },
        })
        .collect()
}

/// Micro precision/recall/F1 over span-aligned predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Span-aligned disambiguation scoring. A prediction is a true positive iff
/// its entity is among the span's gold ids; a non-NIL prediction for a NIL
/// gold is a false positive; a missed or wrong non-NIL gold is a false
/// negative. Both maps must cover the same span universe.
pub fn f1_score(
    predicted: &BTreeMap<SpanKey, Option<String>>,
    gold: &BTreeMap<SpanKey, Vec<String>>,
) -> Result<Prf> {
    if predicted.len() != gold.len() || !predicted.keys().all(|k| gold.contains_key(k)) {
        return Err(Error::InvalidInput(
            "prediction and gold span universes differ".into(),
        ));
    }
    let mut prf = Prf::default();
    for (key, pred) in predicted {
        let golds = &gold[key];
        match pred {
            Some(entity) if golds.contains(entity) => prf.tp += 1,
            Some(_) => {
                prf.fp += 1;
                if !golds.is_empty() {
                    prf.fn_ += 1;
                }
            }
            None => {
                if !golds.is_empty() {
                    prf.fn_ += 1;
                }
            }
        }
    }
    prf.precision = ratio(prf.tp, prf.tp + prf.fp);
    prf.recall = ratio(prf.tp, prf.tp + prf.fn_);
    prf.f1 = if prf.precision + prf.recall == 0.0 {
        0.0
    } else {
        2.0 * prf.precision * prf.recall / (prf.precision + prf.recall)
    };
    Ok(prf)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
