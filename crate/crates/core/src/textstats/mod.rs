//! Corpus exploration: per-class word counts and differential n-gram
//! tables between the high- and low-rating halves of the 22-code scale.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::data::{Sample, Vocabulary, PAD_ID};

pub const DEFAULT_TOP_K: usize = 30;
/// Original codes ≤ 10 count as the high-rating group.
pub const DEFAULT_RATING_THRESHOLD: u8 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextStatsError {
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("n-gram tables have different orders: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingGroup {
    High,
    Low,
}

impl RatingGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            RatingGroup::High => "high",
            RatingGroup::Low => "low",
        }
    }
}

/// Sliding-window n-gram counts summed over a document set.
#[derive(Debug, Clone)]
pub struct NgramTable {
    pub n: usize,
    pub counts: BTreeMap<Vec<String>, u64>,
    pub group: RatingGroup,
}

impl NgramTable {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Top-k n-grams by count descending, lexicographic tiebreak.
    pub fn top_k(&self, k: usize) -> Vec<(Vec<String>, u64)> {
        let mut ranked: Vec<(Vec<String>, u64)> = self
            .counts
            .iter()
            .map(|(g, c)| (g.clone(), *c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

/// Counts n-grams over each document (documents shorter than `n`
/// contribute nothing) and sums across the set.
pub fn ngram_counts(
    documents: &[Vec<String>],
    n: usize,
    group: RatingGroup,
) -> Result<NgramTable, TextStatsError> {
    if n == 0 {
        return Err(TextStatsError::ZeroOrder);
    }
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for doc in documents {
        if doc.len() < n {
            continue;
        }
        for window in doc.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    Ok(NgramTable { n, counts, group })
}

/// The most frequent n-grams of each group that are absent from the other
/// group's top-k, per-group rank order preserved.
pub fn differential_ngrams(
    high: &NgramTable,
    low: &NgramTable,
    top_k: usize,
) -> Result<(Vec<(Vec<String>, u64)>, Vec<(Vec<String>, u64)>), TextStatsError> {
    if high.n != low.n {
        return Err(TextStatsError::OrderMismatch {
            left: high.n,
            right: low.n,
        });
    }
    let high_top = high.top_k(top_k);
    let low_top = low.top_k(top_k);
    let high_set: BTreeSet<&Vec<String>> = high_top.iter().map(|(g, _)| g).collect();
    let low_set: BTreeSet<&Vec<String>> = low_top.iter().map(|(g, _)| g).collect();
    let high_only = high_top
        .iter()
        .filter(|(g, _)| !low_set.contains(g))
        .cloned()
        .collect();
    let low_only = low_top
        .iter()
        .filter(|(g, _)| !high_set.contains(g))
        .cloned()
        .collect();
    Ok((high_only, low_only))
}

/// Splits samples into high (original code ≤ threshold) and low groups.
pub fn group_by_rating(samples: &[Sample], threshold_code: u8) -> (Vec<&Sample>, Vec<&Sample>) {
    let mut high = Vec::new();
    let mut low = Vec::new();
    for s in samples {
        if s.rating_code <= threshold_code {
            high.push(s);
        } else {
            low.push(s);
        }
    }
    (high, low)
}

/// Decodes a sample's stored token ids back to words, pads excluded.
pub fn sample_tokens(sample: &Sample, vocab: &Vocabulary) -> Vec<String> {
    sample
        .tokens
        .iter()
        .filter(|&&id| id != PAD_ID)
        .map(|&id| vocab.token_of(id).to_string())
        .collect()
}

/// Mean pre-padding document length per merged class.
pub fn word_count_stats(samples: &[Sample]) -> BTreeMap<u8, f64> {
    let mut sums: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
    for s in samples {
        let e = sums.entry(s.label).or_insert((0, 0));
        e.0 += s.word_count as u64;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(class, (sum, count))| (class, sum as f64 / count as f64))
        .collect()
}

/// Flat CSV of n-gram counts: `ngram,count,group`.
pub fn ngram_csv(tables: &[&NgramTable]) -> String {
    let mut out = String::from("ngram,count,group\n");
    for table in tables {
        for (gram, count) in table.top_k(usize::MAX) {
            out.push_str(&format!(
                "{},{},{}\n",
                gram.join(" "),
                count,
                table.group.as_str()
            ));
        }
    }
    out
}
