//! Metrics over scored views.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataview::{DataView, ExecContext, RowCursor};
use crate::error::{Error, ErrorKind, Result};
use crate::learners::label_reader;
use crate::types::{ColumnType, ItemKind};
use crate::value::Getter;

/// Probabilities are clipped to `[EPS, 1 - EPS]` before taking logs.
pub const LOG_LOSS_EPS: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Binary,
    Regression,
}

/// Metrics of one evaluation. Serializes flat:
/// `{"task": "binary", "row_count": 10, "accuracy": 0.9, ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task: EvalTask,
    pub row_count: u64,
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
}

impl EvaluationReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Column names read by the evaluators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalColumns {
    #[serde(default = "label")]
    pub label: String,
    #[serde(default = "score")]
    pub score: String,
    #[serde(default = "probability")]
    pub probability: String,
}

fn label() -> String {
    "Label".into()
}
fn score() -> String {
    crate::learners::SCORE_COLUMN.into()
}
fn probability() -> String {
    crate::learners::PROBABILITY_COLUMN.into()
}

impl Default for EvalColumns {
    fn default() -> Self {
        EvalColumns {
            label: label(),
            score: score(),
            probability: probability(),
        }
    }
}

/// Area under the ROC curve: the fraction of (positive, negative) pairs ranked
/// correctly by `scores`, ties counting one half. `None` when either class is absent.
///
/// Sorts `pairs` by score.
pub fn auc(pairs: &mut [(f64, bool)]) -> Option<f64> {
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut neg_below: u64 = 0;
    // twice the number of correctly ordered pairs plus ties, kept exact
    let mut doubled: u128 = 0;
    let mut k = 0;
    while k < pairs.len() {
        let s = pairs[k].0;
        let (mut pos, mut neg) = (0u64, 0u64);
        while k < pairs.len() && pairs[k].0.total_cmp(&s).is_eq() {
            if pairs[k].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            k += 1;
        }
        doubled += 2 * pos as u128 * neg_below as u128 + pos as u128 * neg as u128;
        neg_below += neg;
    }
    let p = pairs.iter().filter(|x| x.1).count() as u128;
    let n = pairs.len() as u128 - p;
    if p == 0 || n == 0 {
        return None;
    }
    Some(doubled as f64 / (2 * p * n) as f64)
}

fn require(view: &dyn DataView, name: &str, role: &str) -> Result<usize> {
    view.schema()
        .resolve(name)
        .ok_or_else(|| Error::schema(format!("evaluator needs a {role} column '{name}'")))
}

type ScoreReader = Box<dyn FnMut() -> Result<f64> + Send>;

fn score_reader(cur: &mut dyn RowCursor, col: usize) -> Result<ScoreReader> {
    match cur.schema().column(col)?.ty {
        ColumnType::Scalar(ItemKind::R4) => {
            let mut g: Getter<f32> = cur.get_getter(col)?;
            let mut v = 0.0;
            Ok(Box::new(move || {
                g.get(&mut v)?;
                Ok(v as f64)
            }))
        }
        ColumnType::Scalar(ItemKind::R8) => {
            let mut g: Getter<f64> = cur.get_getter(col)?;
            let mut v = 0.0;
            Ok(Box::new(move || {
                g.get(&mut v)?;
                Ok(v)
            }))
        }
        ty => Err(Error::schema(format!(
            "column '{}' has type {ty}, expected R4 or R8",
            cur.schema().column(col)?.name
        ))),
    }
}

/// Accuracy (positive iff score > 0), log-loss and AUC for a binary task. Rows with a
/// missing label are ignored. AUC is omitted when only one class is present.
pub fn evaluate_binary(view: &dyn DataView, columns: &EvalColumns, ctx: &ExecContext) -> Result<EvaluationReport> {
    let l = require(view, &columns.label, "label")?;
    let s = require(view, &columns.score, "score")?;
    let p = require(view, &columns.probability, "probability")?;
    let mut cur = ctx.open_columns(view, &[l, s, p])?;
    let mut gl = label_reader(&mut *cur, l)?;
    let mut gs = score_reader(&mut *cur, s)?;
    let mut gp = score_reader(&mut *cur, p)?;

    let mut pairs = Vec::new();
    let mut correct = 0u64;
    let mut loss = KahanSum::default();
    while cur.move_next()? {
        let y = gl()?;
        if y.is_nan() {
            continue;
        }
        let positive = match y {
            y if y == 1.0 => true,
            y if y == 0.0 => false,
            y => return Err(Error::input(format!("binary label must be 0 or 1, got {y}"))),
        };
        let score = gs()?;
        let prob = gp()?.clamp(LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS);
        if (score > 0.0) == positive {
            correct += 1;
        }
        loss.add(-if positive { prob.ln() } else { (1.0 - prob).ln() });
        pairs.push((score, positive));
    }
    let n = pairs.len() as u64;
    if n == 0 {
        return Err(ErrorKind::EmptyInput("no labeled rows to evaluate".into()).into());
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("accuracy".to_string(), correct as f64 / n as f64);
    metrics.insert("log_loss".to_string(), loss.value() / n as f64);
    if let Some(a) = auc(&mut pairs) {
        metrics.insert("auc".to_string(), a);
    }
    Ok(EvaluationReport {
        task: EvalTask::Binary,
        row_count: n,
        metrics,
    })
}

/// Root mean squared error between label and score. Rows with a missing label are
/// ignored.
pub fn evaluate_regression(view: &dyn DataView, columns: &EvalColumns, ctx: &ExecContext) -> Result<EvaluationReport> {
    let l = require(view, &columns.label, "label")?;
    let s = require(view, &columns.score, "score")?;
    let mut cur = ctx.open_columns(view, &[l, s])?;
    let mut gl = label_reader(&mut *cur, l)?;
    let mut gs = score_reader(&mut *cur, s)?;
    let mut sq = KahanSum::default();
    let mut n = 0u64;
    while cur.move_next()? {
        let y = gl()?;
        if y.is_nan() {
            continue;
        }
        let d = y - gs()?;
        sq.add(d * d);
        n += 1;
    }
    if n == 0 {
        return Err(ErrorKind::EmptyInput("no labeled rows to evaluate".into()).into());
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("rms".to_string(), (sq.value() / n as f64).sqrt());
    Ok(EvaluationReport {
        task: EvalTask::Regression,
        row_count: n,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataview::InMemoryView;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pairwise(pairs: &[(f64, bool)]) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for a in pairs.iter().filter(|p| p.1) {
            for b in pairs.iter().filter(|p| !p.1) {
                den += 1.0;
                if a.0 > b.0 {
                    num += 1.0;
                } else if a.0 == b.0 {
                    num += 0.5;
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&mut [(0.9, true), (0.1, false)]), Some(1.0));
        assert_eq!(auc(&mut [(0.5, true), (0.5, false)]), Some(0.5));
        assert_eq!(auc(&mut [(0.5, true), (0.7, true)]), None);
    }

    #[test]
    fn auc_random_matches_pairwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pairs: Vec<(f64, bool)> = (0..1000)
            .map(|_| ((rng.gen_range(0..50) as f64) / 10.0, rng.gen_bool(0.4)))
            .collect();
        let expected = pairwise(&pairs).unwrap();
        assert!((auc(&mut pairs).unwrap() - expected).abs() < 1e-12);
    }

    fn scored(labels: Vec<f32>, scores: Vec<f32>) -> InMemoryView {
        let probs = scores.iter().map(|&s| 1.0 / (1.0 + (-s).exp())).collect();
        InMemoryView::builder()
            .column("Label", ColumnType::R4, labels)
            .column("Score", ColumnType::R4, scores)
            .column("Probability", ColumnType::R4, probs)
            .build()
            .unwrap()
    }

    #[test]
    fn perfect_binary() {
        let v = scored(vec![1.0, 0.0, 1.0, 0.0], vec![2.0, -2.0, 3.0, -1.0]);
        let r = evaluate_binary(&v, &EvalColumns::default(), &ExecContext::default()).unwrap();
        assert_eq!(r.metric("auc"), Some(1.0));
        assert_eq!(r.metric("accuracy"), Some(1.0));
        assert!(r.metric("log_loss").unwrap() > 0.0);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["auc"], 1.0);
        assert_eq!(json["task"], "binary");
        assert_eq!(json["row_count"], 4);
    }

    #[test]
    fn single_class_omits_auc() {
        let v = scored(vec![1.0, 1.0], vec![2.0, -2.0]);
        let r = evaluate_binary(&v, &EvalColumns::default(), &ExecContext::default()).unwrap();
        assert_eq!(r.metric("auc"), None);
        assert_eq!(r.metric("accuracy"), Some(0.5));
    }

    #[test]
    fn missing_score_column_is_schema_error() {
        let v = InMemoryView::builder().column("Label", ColumnType::R4, vec![1.0f32]).build().unwrap();
        let err = evaluate_binary(&v, &EvalColumns::default(), &ExecContext::default()).unwrap_err();
        assert!(matches!(err.kind(), ErrorKind::Schema(_)));
    }

    #[test]
    fn regression_examples() {
        let v = scored(vec![1.0, 2.0], vec![1.0, 2.0]);
        let r = evaluate_regression(&v, &EvalColumns::default(), &ExecContext::default()).unwrap();
        assert_eq!(r.metric("rms"), Some(0.0));
        let v = scored(vec![0.0], vec![1.0]);
        let r = evaluate_regression(&v, &EvalColumns::default(), &ExecContext::default()).unwrap();
        assert_eq!(r.metric("rms"), Some(1.0));
        let v = scored(vec![], vec![]);
        let err = evaluate_regression(&v, &EvalColumns::default(), &ExecContext::default()).unwrap_err();
        assert!(matches!(err.kind(), ErrorKind::EmptyInput(_)));
    }

    #[test]
    fn regression_matches_naive_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<f32> = (0..10_000).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let scores: Vec<f32> = labels.iter().map(|&l| l + rng.gen_range(-1.0..1.0)).collect();
        let naive = (labels
            .iter()
            .zip(&scores)
            .map(|(&l, &s)| (l as f64 - s as f64).powi(2))
            .sum::<f64>()
            / labels.len() as f64)
            .sqrt();
        let v = scored(labels, scores);
        let r = evaluate_regression(&v, &EvalColumns::default(), &ExecContext::default()).unwrap();
        assert!((r.metric("rms").unwrap() - naive).abs() <= 1e-10 * naive);
    }

    proptest! {
        #[test]
        fn auc_is_invariant_under_monotone_maps(
            raw in proptest::collection::vec((0u8..20, any::<bool>()), 2..200),
        ) {
            let mut a: Vec<(f64, bool)> = raw.iter().map(|&(s, l)| (s as f64, l)).collect();
            let mut b: Vec<(f64, bool)> = raw.iter().map(|&(s, l)| ((s as f64).exp() * 3.0 - 1.0, l)).collect();
            let expected = pairwise(&a);
            prop_assert_eq!(auc(&mut a), auc(&mut b));
            let got = auc(&mut a);
            match (got, expected) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }

        #[test]
        fn metrics_are_permutation_invariant(
            rows in proptest::collection::vec((-3.0f32..3.0, any::<bool>()), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mk = |r: &[(f32, bool)]| scored(r.iter().map(|x| x.1 as u8 as f32).collect(), r.iter().map(|x| x.0).collect());
            let a = evaluate_binary(&mk(&rows), &EvalColumns::default(), &ExecContext::default()).unwrap();
            let b = evaluate_binary(&mk(&shuffled), &EvalColumns::default(), &ExecContext::default()).unwrap();
            prop_assert_eq!(a.metric("auc"), b.metric("auc"));
            prop_assert_eq!(a.metric("accuracy"), b.metric("accuracy"));
            prop_assert!((a.metric("log_loss").unwrap() - b.metric("log_loss").unwrap()).abs() < 1e-12);
        }
    }
}
