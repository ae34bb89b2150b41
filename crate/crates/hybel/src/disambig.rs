//! Linear mention-entity ranker: lookup, prior, and contextual-similarity
//! features, logistic-loss training, and one-entity-or-NIL selection.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::knn_search;
use crate::encode::{build_entity_input, build_mention_input, mention_key, SpanAnnotation, Vector};
use crate::error::{Error, Result};
use crate::retrieve::{Backends, CandidateSet};
use crate::sparse::normalize_surface;

pub const FEATURE_COUNT: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "log_mention_count",
    "cond_prob",
    "pagerank",
    "log_link_count",
    "context_sim",
    "dense_rank_inv",
    "exact_title_match",
];

/// Features scoring one mention-candidate pair. Absence from the alias
/// table or the dense list yields zero for the affected features.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    /// ln(1 + alias count for this surface/entity).
    pub log_mention_count: f64,
    /// p(entity | surface form); 0 when absent from the alias table.
    pub cond_prob: f64,
    pub pagerank: f64,
    /// ln(1 + entity link count).
    pub log_link_count: f64,
    /// Dot product of the mention embedding and the entity description
    /// embedding.
    pub context_sim: f64,
    /// 1 / (1 + rank) with 1-based rank in the dense list; 0 when absent.
    pub dense_rank_inv: f64,
    /// 1 when the entity title equals the surface after normalization.
    pub exact_title_match: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.log_mention_count,
            self.cond_prob,
            self.pagerank,
            self.log_link_count,
            self.context_sim,
            self.dense_rank_inv,
            self.exact_title_match,
        ]
    }
}

/// Linear scorer with a NIL threshold. Serialization round-trips exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub weights: [f64; FEATURE_COUNT],
    pub bias: f64,
    pub nil_threshold: f64,
}

impl Default for RankerModel {
    fn default() -> Self {
        RankerModel {
            weights: [0.0; FEATURE_COUNT],
            bias: 0.0,
            nil_threshold: f64::MIN,
        }
    }
}

impl RankerModel {
    pub fn score(&self, features: &FeatureVector) -> f64 {
        let x = features.as_array();
        let mut z = self.bias;
        for i in 0..FEATURE_COUNT {
            z += self.weights[i] * x[i];
        }
        z
    }

    /// Line-oriented text form: one `name value` pair per line, values with
    /// 17 significant digits so reloading reproduces every score exactly.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        for (name, weight) in FEATURE_NAMES.iter().zip(self.weights.iter()) {
            writeln!(w, "{name} {weight:.16e}")?;
        }
        writeln!(w, "bias {:.16e}", self.bias)?;
        writeln!(w, "nil_threshold {:.16e}", self.nil_threshold)?;
        Ok(())
    }

    pub fn read_from(r: impl BufRead, path: &str) -> Result<Self> {
        let mut model = RankerModel::default();
        let mut lines = r.lines().enumerate();
        let mut next_value = |expected: &str| -> Result<f64> {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::Truncated {
                    path: path.to_string(),
                    msg: format!("missing {expected} line"),
                })?;
            let line = line.map_err(|e| Error::io_path(path, e))?;
            let (name, value) = line.split_once(' ').ok_or_else(|| {
                Error::malformed(path, idx + 1, "expected `name value`")
            })?;
            if name != expected {
                return Err(Error::malformed(
                    path,
                    idx + 1,
                    format!("expected field {expected:?}, found {name:?}"),
                ));
            }
            value
                .trim()
                .parse()
                .map_err(|_| Error::malformed(path, idx + 1, format!("bad number {value:?}")))
        };
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            model.weights[i] = next_value(name)?;
        }
        model.bias = next_value("bias")?;
        model.nil_threshold = next_value("nil_threshold")?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }
}

/// Precomputed per-span context shared by all candidates of one span.
struct SpanContext {
    mention_vector: Vector,
    dense_rank: HashMap<String, usize>, // 1-based
    normalized_surface: String,
}

fn span_context(backends: &Backends, tweet_text: &str, span: &SpanAnnotation) -> Result<SpanContext> {
    let mention = build_mention_input(tweet_text, span)?;
    let mention_vector = backends
        .provider
        .mention_vector(&mention_key(span), &mention.render())?;
    let mut dense_rank = HashMap::new();
    if let Some(index) = &backends.dense {
        for (i, c) in knn_search(index, &mention_vector, backends.k)?.iter().enumerate() {
            dense_rank.insert(c.id.clone(), i + 1);
        }
    }
    Ok(SpanContext {
        mention_vector,
        dense_rank,
        normalized_surface: normalize_surface(&span.surface, &backends.normalization),
    })
}

fn features_in_context(
    backends: &Backends,
    span: &SpanAnnotation,
    ctx: &SpanContext,
    candidate_id: &str,
) -> Result<FeatureVector> {
    let entity = backends.store.require(candidate_id)?;

    let (count, prob) = backends
        .alias
        .as_ref()
        .and_then(|table| {
            let key = normalize_surface(&span.surface, &table.normalization);
            table.entries(&key).and_then(|entries| {
                entries
                    .iter()
                    .find(|e| e.entity_id == candidate_id)
                    .map(|e| (e.count, e.prob))
            })
        })
        .unwrap_or((0, 0.0));

    let entity_input = build_entity_input(entity, backends.store.description_mode, 10);
    let entity_vector = backends
        .provider
        .entity_vector(candidate_id, &entity_input.render())?;

    Ok(FeatureVector {
        log_mention_count: (1.0 + count as f64).ln(),
        cond_prob: prob,
        pagerank: entity.pagerank,
        log_link_count: (1.0 + entity.link_count as f64).ln(),
        context_sim: ctx.mention_vector.dot(&entity_vector),
        dense_rank_inv: ctx
            .dense_rank
            .get(candidate_id)
            .map_or(0.0, |&r| 1.0 / (1.0 + r as f64)),
        exact_title_match: f64::from(
            normalize_surface(&entity.title, &backends.normalization) == ctx.normalized_surface,
        ),
    })
}

/// Features for one mention-candidate pair. Errors on candidate ids missing
/// from the entity store.
pub fn extract_features(
    backends: &Backends,
    tweet_text: &str,
    span: &SpanAnnotation,
    candidate_id: &str,
) -> Result<FeatureVector> {
    let ctx = span_context(backends, tweet_text, span)?;
    features_in_context(backends, span, &ctx, candidate_id)
}

/// Features for every candidate of a set, computing the span context once.
pub fn extract_for_set(
    backends: &Backends,
    tweet_text: &str,
    set: &CandidateSet,
) -> Result<Vec<(String, FeatureVector)>> {
    let ctx = span_context(backends, tweet_text, &set.span)?;
    set.candidates
        .iter()
        .map(|c| {
            features_in_context(backends, &set.span, &ctx, &c.id).map(|f| (c.id.clone(), f))
        })
        .collect()
}

/// One training candidate: features plus whether it is the span's gold.
#[derive(Debug, Clone)]
pub struct LabeledCandidate {
    pub entity_id: String,
    pub features: FeatureVector,
    pub is_gold: bool,
}

/// One training span. `gold_exists` is true when the span has a non-NIL
/// gold annotation, whether or not that gold was retrieved.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub candidates: Vec<LabeledCandidate>,
    pub gold_exists: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of spans held out for NIL-threshold fitting.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            seed: 42,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainStats {
    /// Mean training loss before the first epoch and after each epoch.
    pub epoch_losses: Vec<f64>,
    pub holdout_size: usize,
    pub holdout_f1: Option<f64>,
    /// All candidate labels were one class; training proceeded anyway.
    pub degenerate: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logistic_loss(z: f64, y: f64) -> f64 {
    // max(z, 0) - y*z + ln(1 + exp(-|z|)), the overflow-safe form
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// Train the ranker with full-batch gradient descent over logistic loss on
/// (candidate, is-gold) pairs. The seed fixes the holdout split, so two runs
/// with identical inputs and config produce bit-identical models. The NIL
/// threshold is fitted on the held-out spans to maximize F1.
pub fn train_ranker(
    instances: &[TrainingInstance],
    cfg: &TrainConfig,
) -> Result<(RankerModel, TrainStats)> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if let Some(i) = instances.iter().position(|inst| inst.candidates.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "training span {i} has no candidates"
        )));
    }

    let mut model = RankerModel::default();
    let mut stats = TrainStats::default();
    if cfg.epochs == 0 {
        return Ok((model, stats));
    }

    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let holdout_n = ((instances.len() as f64) * cfg.holdout_fraction).floor() as usize;
    let holdout_n = holdout_n.min(instances.len() - 1);
    let (holdout_idx, train_idx) = order.split_at(holdout_n);
    stats.holdout_size = holdout_idx.len();

    let pairs: Vec<([f64; FEATURE_COUNT], f64)> = train_idx
        .iter()
        .flat_map(|&i| {
            instances[i]
                .candidates
                .iter()
                .map(|c| (c.features.as_array(), f64::from(c.is_gold)))
        })
        .collect();
    let positives = pairs.iter().filter(|(_, y)| *y == 1.0).count();
    if positives == 0 || positives == pairs.len() {
        stats.degenerate = true;
        log::warn!(
            "training labels are all one class ({positives} of {} positive)",
            pairs.len()
        );
    }

    let m = pairs.len() as f64;
    let mean_loss = |w: &[f64; FEATURE_COUNT], b: f64| -> f64 {
        pairs
            .iter()
            .map(|(x, y)| {
                let mut z = b;
                for i in 0..FEATURE_COUNT {
                    z += w[i] * x[i];
                }
                logistic_loss(z, *y)
            })
            .sum::<f64>()
            / m
    };
    stats.epoch_losses.push(mean_loss(&model.weights, model.bias));
    for _ in 0..cfg.epochs {
        let mut grad_w = [0f64; FEATURE_COUNT];
        let mut grad_b = 0f64;
        for (x, y) in &pairs {
            let mut z = model.bias;
            for i in 0..FEATURE_COUNT {
                z += model.weights[i] * x[i];
            }
            let g = sigmoid(z) - y;
            for i in 0..FEATURE_COUNT {
                grad_w[i] += g * x[i];
            }
            grad_b += g;
        }
        for i in 0..FEATURE_COUNT {
            model.weights[i] -= cfg.learning_rate * grad_w[i] / m;
        }
        model.bias -= cfg.learning_rate * grad_b / m;
        stats.epoch_losses.push(mean_loss(&model.weights, model.bias));
    }

    if !holdout_idx.is_empty() {
        let (threshold, f1) = fit_nil_threshold(instances, holdout_idx, &model);
        model.nil_threshold = threshold;
        stats.holdout_f1 = Some(f1);
    }
    Ok((model, stats))
}

/// Pick the threshold maximizing F1 of argmax-or-NIL predictions on the
/// held-out spans; ties prefer the smallest threshold.
fn fit_nil_threshold(
    instances: &[TrainingInstance],
    holdout: &[usize],
    model: &RankerModel,
) -> (f64, f64) {
    struct Best<'a> {
        score: f64,
        is_gold: bool,
        gold_exists: bool,
        _id: &'a str,
    }
    let mut bests: Vec<Best> = Vec::with_capacity(holdout.len());
    for &i in holdout {
        let inst = &instances[i];
        let mut best: Option<(f64, &str, bool)> = None;
        for c in &inst.candidates {
            let s = model.score(&c.features);
            let better = match &best {
                None => true,
                Some((bs, bid, _)) => s > *bs || (s == *bs && c.entity_id.as_str() < *bid),
            };
            if better {
                best = Some((s, &c.entity_id, c.is_gold));
            }
        }
        let (score, id, is_gold) = best.expect("instances have candidates");
        bests.push(Best {
            score,
            is_gold,
            gold_exists: inst.gold_exists,
            _id: id,
        });
    }
    let mut thresholds: Vec<f64> = bests.iter().map(|b| b.score).collect();
    thresholds.push(f64::MIN);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut best_threshold = f64::MIN;
    let mut best_f1 = -1.0;
    for &t in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for b in &bests {
            if b.score >= t {
                if b.is_gold {
                    tp += 1;
                } else {
                    fp += 1;
                    if b.gold_exists {
                        fn_ += 1;
                    }
                }
            } else if b.gold_exists {
                fn_ += 1;
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if f1 > best_f1 {
            best_f1 = f1;
            best_threshold = t;
        }
    }
    (best_threshold, best_f1)
}

/// Argmax of the linear score with ascending-id tie-break; NIL when the
/// candidate list is empty or the best score falls below the threshold.
pub fn disambiguate_scored(
    model: &RankerModel,
    scored: &[(String, FeatureVector)],
) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for (id, features) in scored {
        let s = model.score(features);
        let better = match &best {
            None => true,
            Some((bs, bid)) => s > *bs || (s == *bs && id.as_str() < *bid),
        };
        if better {
            best = Some((s, id));
        }
    }
    let (score, id) = best?;
    (score >= model.nil_threshold).then(|| id.to_string())
}

/// Select one entity (or NIL) for a span from its candidate set.
pub fn disambiguate(
    model: &RankerModel,
    backends: &Backends,
    tweet_text: &str,
    span: &SpanAnnotation,
    set: &CandidateSet,
) -> Result<Option<String>> {
    debug_assert_eq!(set.span.key(), span.key());
    let scored = extract_for_set(backends, tweet_text, set)?;
    Ok(disambiguate_scored(model, &scored))
}

/// Prior-only baseline: argmax of p(entity | surface form) with
/// ascending-id tie-break, never NIL unless the set is empty.
pub fn prior_argmax(scored: &[(String, FeatureVector)]) -> Option<String> {
    let mut best: Option<(f64, &str)> = None;
    for (id, features) in scored {
        let s = features.cond_prob;
        let better = match &best {
            None => true,
            Some((bs, bid)) => s > *bs || (s == *bs && id.as_str() < *bid),
        };
        if better {
            best = Some((s, id));
        }
    }
    best.map(|(_, id)| id.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn fv(cond_prob: f64, context_sim: f64) -> FeatureVector {
        FeatureVector {
            cond_prob,
            context_sim,
            ..FeatureVector::default()
        }
    }

    /// Separable instances: gold candidates sit +2 higher on cond_prob.
    fn separable_instances(n: usize, seed: u64) -> Vec<TrainingInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let gold_slot = rng.gen_range(0..4);
                let candidates = (0..4)
                    .map(|j| {
                        let base: f64 = rng.gen_range(0.0..1.0);
                        LabeledCandidate {
                            entity_id: format!("Q{j}"),
                            features: fv(
                                if j == gold_slot { base + 2.0 } else { base },
                                rng.gen_range(-0.2..0.2),
                            ),
                            is_gold: j == gold_slot,
                        }
                    })
                    .collect();
                TrainingInstance {
                    candidates,
                    gold_exists: true,
                }
            })
            .collect()
    }

    #[test]
    fn separable_training_reaches_high_holdout_f1() {
        let instances = separable_instances(200, 5);
        let (model, stats) = train_ranker(&instances, &TrainConfig::default()).unwrap();
        assert!(stats.holdout_f1.unwrap() >= 0.95, "{stats:?}");
        assert!(model.weights[1] > 0.0); // cond_prob carries the signal
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let instances = separable_instances(10, 1);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (model, stats) = train_ranker(&instances, &cfg).unwrap();
        assert_eq!(model, RankerModel::default());
        assert!(stats.epoch_losses.is_empty());
    }

    #[test]
    fn identical_seeds_give_bit_identical_models() {
        let instances = separable_instances(60, 9);
        let cfg = TrainConfig::default();
        let (a, _) = train_ranker(&instances, &cfg).unwrap();
        let (b, _) = train_ranker(&instances, &cfg).unwrap();
        assert_eq!(a.weights.map(f64::to_bits), b.weights.map(f64::to_bits));
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
        assert_eq!(a.nil_threshold.to_bits(), b.nil_threshold.to_bits());
    }

    #[test]
    fn training_loss_is_non_increasing() {
        let instances = separable_instances(80, 3);
        let (_, stats) = train_ranker(&instances, &TrainConfig::default()).unwrap();
        for w in stats.epoch_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn empty_training_set_is_an_error() {
        assert!(train_ranker(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn one_class_input_is_reported_not_crashed() {
        let instances: Vec<TrainingInstance> = (0..10)
            .map(|_| TrainingInstance {
                candidates: vec![LabeledCandidate {
                    entity_id: "Q0".into(),
                    features: fv(0.5, 0.0),
                    is_gold: false,
                }],
                gold_exists: false,
            })
            .collect();
        let (_, stats) = train_ranker(&instances, &TrainConfig::default()).unwrap();
        assert!(stats.degenerate);
    }

    #[test]
    fn disambiguate_empty_set_is_nil() {
        assert_eq!(disambiguate_scored(&RankerModel::default(), &[]), None);
    }

    #[test]
    fn single_candidate_above_threshold_is_selected() {
        let mut model = RankerModel::default();
        model.weights[1] = 1.0;
        model.nil_threshold = 0.2;
        let scored = vec![("Q7".to_string(), fv(0.9, 0.0))];
        assert_eq!(disambiguate_scored(&model, &scored), Some("Q7".into()));
        model.nil_threshold = 1.5;
        assert_eq!(disambiguate_scored(&model, &scored), None);
    }

    #[test]
    fn selection_is_a_member_of_the_candidate_set() {
        let mut model = RankerModel::default();
        model.weights[4] = 1.0;
        let scored: Vec<(String, FeatureVector)> = (0..5)
            .map(|i| (format!("Q{i}"), fv(0.1 * i as f64, 0.3 * i as f64)))
            .collect();
        let pick = disambiguate_scored(&model, &scored).unwrap();
        assert!(scored.iter().any(|(id, _)| *id == pick));
    }

    #[test]
    fn model_file_round_trips_exactly() {
        let model = RankerModel {
            weights: [
                0.1234567890123456,
                -7.5e-12,
                1.0 / 3.0,
                2.0f64.sqrt(),
                -0.0,
                1e300,
                f64::MIN_POSITIVE,
            ],
            bias: -0.625,
            nil_threshold: f64::MIN,
        };
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = RankerModel::read_from(std::io::Cursor::new(&buf), "mem").unwrap();
        assert_eq!(model.weights.map(f64::to_bits), back.weights.map(f64::to_bits));
        assert_eq!(model.bias.to_bits(), back.bias.to_bits());
        assert_eq!(model.nil_threshold.to_bits(), back.nil_threshold.to_bits());
    }

    #[test]
    fn model_file_rejects_reordered_fields() {
        let model = RankerModel::default();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("bias", "blas");
        assert!(RankerModel::read_from(std::io::Cursor::new(text.into_bytes()), "mem").is_err());
    }

    proptest! {
        #[test]
        fn argmax_is_shift_invariant_when_threshold_disabled(
            sims in proptest::collection::vec(-1.0f64..1.0, 1..8),
            shift in -5.0f64..5.0,
        ) {
            let mut model = RankerModel::default();
            model.weights[4] = 1.0;
            let scored: Vec<(String, FeatureVector)> = sims
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("Q{i}"), fv(0.0, s)))
                .collect();
            let baseline = disambiguate_scored(&model, &scored);
            let mut shifted = model.clone();
            shifted.bias += shift; // moves every candidate score equally
            prop_assert_eq!(disambiguate_scored(&shifted, &scored), baseline);
        }
    }
}
