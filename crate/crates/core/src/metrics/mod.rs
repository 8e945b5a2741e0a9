//! Evaluation metrics: binary and weighted one-vs-rest AUC, multi-class
//! F1, confusion matrices, percentile bootstrap confidence intervals and
//! per-slice breakdowns (agency, prediction-lag bucket, time period).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Agency, MonthIndex};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("auc_binary needs both positive and negative labels")]
    SingleClassLabels,
    #[error("no class has both positives and negatives")]
    NoDiscriminableClass,
    #[error("probability row {row} sums to {sum}, outside 1 ± 1e-4")]
    InvalidProbabilities { row: usize, sum: f64 },
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("class value {value} out of range for {classes} classes")]
    ClassOutOfRange { value: usize, classes: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("bootstrap needs at least 100 resamples, got {resamples}")]
    TooFewResamples { resamples: usize },
    #[error("bootstrap level {level} outside (0, 1)")]
    InvalidLevel { level: f64 },
    #[error("metric undefined on {undefined} of {resamples} bootstrap resamples")]
    DegenerateBootstrap { undefined: usize, resamples: usize },
}

/// Deterministic seed derivation (splitmix64 finalizer over base and tag),
/// so parallel or resumed work streams stay independent of scheduling.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ── AUC ─────────────────────────────────────────────────────────────

/// Probability that a random positive outranks a random negative, ties
/// counting one half (Mann-Whitney). Rank-based, O(n log n).
pub fn auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Average rank of the tie run [i, j], 1-based.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-class one-vs-rest AUC over probability columns; None where a class
/// has no positives or no negatives.
pub fn per_class_auc(
    probabilities: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
) -> Vec<Option<f64>> {
    (0..classes)
        .map(|c| {
            let scores: Vec<f64> = probabilities.iter().map(|row| row[c]).collect();
            let flags: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            auc_binary(&scores, &flags).ok()
        })
        .collect()
}

/// Support-weighted average of the per-class one-vs-rest AUCs. Classes
/// absent from the labels are excluded and the weights renormalized.
pub fn auc_weighted_ovr(
    probabilities: &[Vec<f64>],
    labels: &[usize],
) -> Result<f64, MetricsError> {
    if probabilities.is_empty() || probabilities.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: probabilities.len(),
            right: labels.len(),
        });
    }
    let classes = probabilities[0].len();
    for (row, p) in probabilities.iter().enumerate() {
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(MetricsError::InvalidProbabilities { row, sum });
        }
    }
    for &l in labels {
        if l >= classes {
            return Err(MetricsError::ClassOutOfRange { value: l, classes });
        }
    }
    let aucs = per_class_auc(probabilities, labels, classes);
    let mut weighted = 0.0;
    let mut weight_total = 0.0;
    for (c, auc) in aucs.iter().enumerate() {
        if let Some(a) = auc {
            let support = labels.iter().filter(|&&l| l == c).count() as f64;
            weighted += a * support;
            weight_total += support;
        }
    }
    if weight_total == 0.0 {
        return Err(MetricsError::NoDiscriminableClass);
    }
    Ok(weighted / weight_total)
}

// ── F1 ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    #[default]
    Weighted,
    Macro,
    Micro,
}

#[derive(Debug, Clone)]
pub struct F1Score {
    pub value: f64,
    pub per_class: Vec<f64>,
    /// Classes whose F1 was 0/0 (no support and no predictions); they
    /// contribute zero to the average.
    pub degenerate_classes: Vec<usize>,
}

/// Multi-class F1 from per-class 2TP/(2TP+FP+FN), averaged per `average`.
pub fn f1_score(
    predictions: &[usize],
    labels: &[usize],
    classes: usize,
    average: F1Average,
) -> Result<F1Score, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let confusion = confusion_matrix(predictions, labels, classes)?;
    let mut degenerate = Vec::new();
    let mut per_class = vec![0.0; classes];
    let mut supports = vec![0usize; classes];
    let mut tp_total = 0usize;
    for c in 0..classes {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..classes).map(|r| confusion[r][c]).sum();
        supports[c] = support;
        tp_total += tp;
        let denom = 2 * tp + (predicted - tp) + (support - tp);
        if denom == 0 {
            degenerate.push(c);
            per_class[c] = 0.0;
        } else {
            per_class[c] = 2.0 * tp as f64 / denom as f64;
        }
    }
    let value = match average {
        F1Average::Weighted => {
            let total: usize = supports.iter().sum();
            per_class
                .iter()
                .zip(supports.iter())
                .map(|(f, &s)| f * s as f64)
                .sum::<f64>()
                / total as f64
        }
        F1Average::Macro => per_class.iter().sum::<f64>() / classes as f64,
        // With one prediction per sample, micro-F1 reduces to accuracy.
        F1Average::Micro => tp_total as f64 / predictions.len() as f64,
    };
    Ok(F1Score {
        value,
        per_class,
        degenerate_classes: degenerate,
    })
}

/// Support-weighted F1 (the reporting default).
pub fn f1_weighted(
    predictions: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<f64, MetricsError> {
    Ok(f1_score(predictions, labels, classes, F1Average::Weighted)?.value)
}

/// Counts matrix: entry (i, j) = true class i predicted as j.
pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<Vec<Vec<usize>>, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut m = vec![vec![0usize; classes]; classes];
    for (&p, &l) in predictions.iter().zip(labels.iter()) {
        if p >= classes {
            return Err(MetricsError::ClassOutOfRange {
                value: p,
                classes,
            });
        }
        if l >= classes {
            return Err(MetricsError::ClassOutOfRange {
                value: l,
                classes,
            });
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// Row-normalized percentages for reporting; empty rows stay zero.
pub fn row_normalized(confusion: &[Vec<usize>]) -> Vec<Vec<f64>> {
    confusion
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&v| {
                    if total == 0 {
                        0.0
                    } else {
                        100.0 * v as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect()
}

// ── bootstrap ───────────────────────────────────────────────────────

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over test rows. `metric` receives a resampled
/// index multiset and may return None when undefined on that resample;
/// such resamples are skipped (erroring if they exceed half). Each
/// resample draws from its own derived seed, so results do not depend on
/// evaluation order or worker count.
pub fn bootstrap_ci(
    n: usize,
    metric: impl Fn(&[usize]) -> Option<f64>,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), MetricsError> {
    if resamples < 100 {
        return Err(MetricsError::TooFewResamples { resamples });
    }
    if !(0.0..1.0).contains(&level) || level == 0.0 {
        return Err(MetricsError::InvalidLevel { level });
    }
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mut values = Vec::with_capacity(resamples);
    let mut undefined = 0usize;
    let mut indices = vec![0usize; n];
    for r in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
        for slot in indices.iter_mut() {
            *slot = rng.gen_range(0..n);
        }
        match metric(&indices) {
            Some(v) => values.push(v),
            None => undefined += 1,
        }
    }
    if undefined * 2 > resamples {
        return Err(MetricsError::DegenerateBootstrap {
            undefined,
            resamples,
        });
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok((percentile(&values, alpha), percentile(&values, 1.0 - alpha)))
}

// ── reporting ───────────────────────────────────────────────────────

/// Per-sample metadata used for slicing.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleMeta {
    pub agency: Agency,
    pub lag_months: u32,
    pub time_index: MonthIndex,
}

/// Prediction-lag buckets: short ≤ 4 months, medium 5–9, long ≥ 10.
pub fn lag_bucket(lag_months: u32) -> &'static str {
    match lag_months {
        0..=4 => "short",
        5..=9 => "medium",
        _ => "long",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKey {
    Agency,
    LagBucket,
    Period,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOptions {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub slices: Vec<SliceKey>,
    /// Boundary for the period slice: records strictly before the cut are
    /// "before", the rest "after".
    pub period_cut: Option<MonthIndex>,
    pub f1_average: F1Average,
}

impl Default for EvalOptions {
    fn default() -> EvalOptions {
        EvalOptions {
            resamples: 10_000,
            level: 0.90,
            seed: 0,
            slices: vec![],
            period_cut: None,
            f1_average: F1Average::Weighted,
        }
    }
}

/// Metrics for one evaluation set, with optional nested slice reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub support: usize,
    pub weighted_auc: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub per_class_auc: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
    /// metric name → (low, high) percentile bootstrap interval.
    pub ci: BTreeMap<String, (f64, f64)>,
    pub degenerate_f1_classes: Vec<usize>,
    pub slices: BTreeMap<String, MetricsReport>,
}

/// Argmax class per probability row, ties to the lowest index.
pub fn argmax_predictions(probabilities: &[Vec<f64>]) -> Vec<usize> {
    probabilities
        .iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn empty_report(classes: usize) -> MetricsReport {
    MetricsReport {
        support: 0,
        weighted_auc: None,
        f1: None,
        accuracy: None,
        per_class_auc: vec![None; classes],
        confusion: vec![vec![0; classes]; classes],
        ci: BTreeMap::new(),
        degenerate_f1_classes: vec![],
        slices: BTreeMap::new(),
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn single_report(
    probabilities: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    opts: &EvalOptions,
    seed: u64,
) -> Result<MetricsReport, MetricsError> {
    if probabilities.is_empty() {
        return Ok(empty_report(classes));
    }
    let predictions = argmax_predictions(probabilities);
    let confusion = confusion_matrix(&predictions, labels, classes)?;
    let weighted_auc = auc_weighted_ovr(probabilities, labels).ok();
    let f1 = f1_score(&predictions, labels, classes, opts.f1_average)?;
    let accuracy = predictions
        .iter()
        .zip(labels.iter())
        .filter(|(p, l)| p == l)
        .count() as f64
        / labels.len() as f64;

    let mut ci = BTreeMap::new();
    if weighted_auc.is_some() {
        let auc_metric = |idx: &[usize]| {
            let probs: Vec<Vec<f64>> = idx.iter().map(|&i| probabilities[i].clone()).collect();
            let labs: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            auc_weighted_ovr(&probs, &labs).ok()
        };
        ci.insert(
            "weighted_auc".to_string(),
            bootstrap_ci(
                labels.len(),
                auc_metric,
                opts.resamples,
                opts.level,
                derive_seed(seed, 1),
            )?,
        );
    }
    let f1_metric = |idx: &[usize]| {
        let preds: Vec<usize> = idx.iter().map(|&i| predictions[i]).collect();
        let labs: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        f1_score(&preds, &labs, classes, opts.f1_average)
            .ok()
            .map(|f| f.value)
    };
    ci.insert(
        "f1".to_string(),
        bootstrap_ci(
            labels.len(),
            f1_metric,
            opts.resamples,
            opts.level,
            derive_seed(seed, 2),
        )?,
    );

    Ok(MetricsReport {
        support: labels.len(),
        weighted_auc,
        f1: Some(f1.value),
        accuracy: Some(accuracy),
        per_class_auc: per_class_auc(probabilities, labels, classes),
        confusion,
        ci,
        degenerate_f1_classes: f1.degenerate_classes,
        slices: BTreeMap::new(),
    })
}

/// Full evaluation: overall metrics with bootstrap CIs plus one nested
/// report per requested slice value. Empty slices are marked empty rather
/// than erroring.
pub fn evaluate(
    probabilities: &[Vec<f64>],
    labels: &[usize],
    meta: Option<&[SampleMeta]>,
    opts: &EvalOptions,
) -> Result<MetricsReport, MetricsError> {
    if probabilities.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let classes = probabilities[0].len();
    let mut report = single_report(probabilities, labels, classes, opts, opts.seed)?;

    if let Some(meta) = meta {
        if meta.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                left: meta.len(),
                right: labels.len(),
            });
        }
        for key in &opts.slices {
            let groups: Vec<(String, Vec<usize>)> = match key {
                SliceKey::Agency => Agency::ALL
                    .iter()
                    .map(|agency| {
                        let idx = (0..labels.len())
                            .filter(|&i| meta[i].agency == *agency)
                            .collect();
                        (format!("agency={}", agency.as_str()), idx)
                    })
                    .collect(),
                SliceKey::LagBucket => ["short", "medium", "long"]
                    .iter()
                    .map(|bucket| {
                        let idx = (0..labels.len())
                            .filter(|&i| lag_bucket(meta[i].lag_months) == *bucket)
                            .collect();
                        (format!("lag={bucket}"), idx)
                    })
                    .collect(),
                SliceKey::Period => {
                    let Some(cut) = opts.period_cut else {
                        continue;
                    };
                    let before = (0..labels.len())
                        .filter(|&i| meta[i].time_index < cut)
                        .collect();
                    let after = (0..labels.len())
                        .filter(|&i| meta[i].time_index >= cut)
                        .collect();
                    vec![
                        ("period=before".to_string(), before),
                        ("period=after".to_string(), after),
                    ]
                }
            };
            for (name, idx) in groups {
                let sub = if idx.is_empty() {
                    empty_report(classes)
                } else {
                    let probs: Vec<Vec<f64>> =
                        idx.iter().map(|&i| probabilities[i].clone()).collect();
                    let labs: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                    single_report(&probs, &labs, classes, opts, derive_seed(opts.seed, fnv1a(&name)))?
                };
                report.slices.insert(name, sub);
            }
        }
    }
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsReport {
    /// Flat CSV: one row per slice × metric, with CI bounds where present.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slice,metric,value,ci_low,ci_high,support\n");
        let mut write_rows = |slice: &str, r: &MetricsReport| {
            for (metric, value) in [
                ("weighted_auc", r.weighted_auc),
                ("f1", r.f1),
                ("accuracy", r.accuracy),
            ] {
                let (lo, hi) = r
                    .ci
                    .get(metric)
                    .map(|&(lo, hi)| (format!("{lo:.6}"), format!("{hi:.6}")))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{slice},{metric},{},{lo},{hi},{}\n",
                    fmt_opt(value),
                    r.support
                ));
            }
            for (c, auc) in r.per_class_auc.iter().enumerate() {
                out.push_str(&format!(
                    "{slice},auc_class_{},{},,,{}\n",
                    c + 1,
                    fmt_opt(*auc),
                    r.support
                ));
            }
        };
        write_rows("all", self);
        for (name, sub) in &self.slices {
            write_rows(name, sub);
        }
        out
    }

    /// Human-readable summary with a row-normalized confusion matrix.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, label: &str, v: Option<f64>, ci: Option<&(f64, f64)>| {
            match (v, ci) {
                (Some(v), Some((lo, hi))) => {
                    out.push_str(&format!("{label}: {v:.4} (90% CI {lo:.4}..{hi:.4})\n"))
                }
                (Some(v), None) => out.push_str(&format!("{label}: {v:.4}\n")),
                _ => out.push_str(&format!("{label}: undefined\n")),
            }
        };
        out.push_str(&format!("support: {}\n", self.support));
        line(&mut out, "weighted AUC", self.weighted_auc, self.ci.get("weighted_auc"));
        line(&mut out, "weighted F1", self.f1, self.ci.get("f1"));
        line(&mut out, "accuracy", self.accuracy, None);

        out.push_str("\nconfusion (row-normalized %):\n");
        let pct = row_normalized(&self.confusion);
        out.push_str("true\\pred");
        for c in 0..self.confusion.len() {
            out.push_str(&format!(" {:>6}", c + 1));
        }
        out.push('\n');
        for (r, row) in pct.iter().enumerate() {
            out.push_str(&format!("{:>9}", r + 1));
            for v in row {
                out.push_str(&format!(" {v:>6.1}"));
            }
            out.push('\n');
        }
        if !self.slices.is_empty() {
            out.push_str("\nslices:\n");
            for (name, sub) in &self.slices {
                if sub.support == 0 {
                    out.push_str(&format!("  {name}: empty\n"));
                    continue;
                }
                out.push_str(&format!(
                    "  {name}: support {}, AUC {}, F1 {}\n",
                    sub.support,
                    fmt_opt(sub.weighted_auc),
                    fmt_opt(sub.f1),
                ));
            }
        }
        out
    }
}
