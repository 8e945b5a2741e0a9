//! Data pipeline: channel ingestion and joining, text preprocessing and
//! tokenization, rating-code conversion, dataset splits, feature scaling
//! and synthetic data generation.

mod io;
mod rating;
mod scale;
mod split;
mod synth;
mod text;

pub use io::{load_channels, load_raw_records, write_channel_files, ChannelPaths, LoadReport, RawRecord};
pub use rating::{codes_for_merged_class, map_rating, merged_frequencies, RATING_TO_MERGED};
pub use scale::Scaler;
pub use split::{split_oot, split_oou, split_random, HoldoutSplit, Splits};
pub use synth::{
    assemble_dataset, generate_raw_records, generate_synthetic, Signal, SyntheticSpec,
    JOINT_SIGN_FEATURE,
};
pub use text::{
    encode_text, fit_vocabulary, preprocess_text, Vocabulary, EMAIL_ID, EMAIL_TOKEN, PAD_ID,
    PAD_TOKEN, PHONE_ID, PHONE_TOKEN, RESERVED_TOKENS, STOP_WORDS, UNKNOWN_ID, UNKNOWN_TOKEN,
    URL_ID, URL_TOKEN,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOND_WIDTH: usize = 8;
pub const RATIOS_WIDTH: usize = 45;
pub const MARKET_WIDTH: usize = 98;
/// Agency one-hot (3) plus the scaled last observed merged class.
pub const COVARIATE_WIDTH: usize = 4;
/// Merged rating classes after Table-style grouping.
pub const NUM_CLASSES: usize = 8;
pub const MIN_LAG_MONTHS: u32 = 2;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{file}:{line}: {message}")]
    MalformedRow {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: expected {expected} feature columns, got {got}")]
    WidthMismatch {
        file: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("rating code {code} outside 1..=22")]
    InvalidRatingCode { code: u8 },
    #[error("dataset of {size} records is below the minimum of {minimum}")]
    DatasetTooSmall { size: usize, minimum: usize },
    #[error("out-of-time split impossible: {0}")]
    DegenerateTimeSplit(String),
    #[error("out-of-universe split needs at least two companies")]
    SingleCompany,
    #[error("vocabulary needs a nonempty corpus")]
    EmptyCorpus,
    #[error("vocabulary max_size {max_size} below the {reserved} reserved tokens")]
    VocabTooSmall { max_size: usize, reserved: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid time index {0:?}, expected YYYY-MM")]
    InvalidTimeIndex(String),
    #[error("invalid agency {0:?}, expected MR, SPR or FR")]
    InvalidAgency(String),
}

/// Calendar month used as the join and ordering key, rendered `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthIndex {
    pub year: u16,
    pub month: u8,
}

impl MonthIndex {
    pub fn new(year: u16, month: u8) -> MonthIndex {
        assert!((1..=12).contains(&month), "month {month} outside 1..=12");
        MonthIndex { year, month }
    }

    pub fn plus_months(self, offset: u32) -> MonthIndex {
        let total = self.year as u32 * 12 + (self.month as u32 - 1) + offset;
        MonthIndex {
            year: (total / 12) as u16,
            month: (total % 12 + 1) as u8,
        }
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthIndex {
    type Err = DataError;

    fn from_str(s: &str) -> Result<MonthIndex, DataError> {
        let bad = || DataError::InvalidTimeIndex(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: u16 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(MonthIndex { year, month })
    }
}

impl Serialize for MonthIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MonthIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<MonthIndex, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rating agency issuing the target rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Agency {
    MR,
    SPR,
    FR,
}

impl Agency {
    pub const ALL: [Agency; 3] = [Agency::MR, Agency::SPR, Agency::FR];

    pub fn as_str(&self) -> &'static str {
        match self {
            Agency::MR => "MR",
            Agency::SPR => "SPR",
            Agency::FR => "FR",
        }
    }

    pub fn one_hot(&self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[*self as usize] = 1.0;
        v
    }
}

impl FromStr for Agency {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Agency, DataError> {
        match s {
            "MR" => Ok(Agency::MR),
            "SPR" => Ok(Agency::SPR),
            "FR" => Ok(Agency::FR),
            other => Err(DataError::InvalidAgency(other.to_string())),
        }
    }
}

/// Input channel selector, used for ablation subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Bond,
    Ratios,
    Market,
    Covariate,
    Text,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Bond,
        Channel::Ratios,
        Channel::Market,
        Channel::Covariate,
        Channel::Text,
    ];
    pub const NUMERIC: [Channel; 4] = [
        Channel::Bond,
        Channel::Ratios,
        Channel::Market,
        Channel::Covariate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Bond => "bond",
            Channel::Ratios => "ratios",
            Channel::Market => "market",
            Channel::Covariate => "covariate",
            Channel::Text => "text",
        }
    }

    /// Feature width of a numeric channel; None for text.
    pub fn width(&self) -> Option<usize> {
        match self {
            Channel::Bond => Some(BOND_WIDTH),
            Channel::Ratios => Some(RATIOS_WIDTH),
            Channel::Market => Some(MARKET_WIDTH),
            Channel::Covariate => Some(COVARIATE_WIDTH),
            Channel::Text => None,
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Channel, String> {
        match s {
            "bond" => Ok(Channel::Bond),
            "ratios" => Ok(Channel::Ratios),
            "market" => Ok(Channel::Market),
            "covariate" => Ok(Channel::Covariate),
            "text" => Ok(Channel::Text),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

/// One joined record: four numeric channel vectors, an encoded token
/// sequence, the merged class label and slicing metadata.
#[derive(Debug, Clone)]
pub struct Sample {
    pub company_id: String,
    pub cusip: String,
    pub time_index: MonthIndex,
    pub agency: Agency,
    pub bond: Vec<f64>,
    pub ratios: Vec<f64>,
    pub market: Vec<f64>,
    pub covariate: Vec<f64>,
    /// Right-padded/truncated to the pipeline's max_len.
    pub tokens: Vec<u32>,
    /// Token count after preprocessing, before truncation and padding.
    pub word_count: usize,
    /// Merged class, 1..=8.
    pub label: u8,
    /// Original 22-point rating code.
    pub rating_code: u8,
    /// Months between the input snapshot and the rated outcome.
    pub lag_months: u32,
}

impl Sample {
    pub fn numeric_channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Bond => &self.bond,
            Channel::Ratios => &self.ratios,
            Channel::Market => &self.market,
            Channel::Covariate => &self.covariate,
            Channel::Text => panic!("text is not a numeric channel"),
        }
    }
}

/// Covariate vector: agency one-hot plus the last observed merged class
/// scaled to [0, 1].
pub fn covariate_vector(agency: Agency, last_rating_code: u8) -> Result<Vec<f64>, DataError> {
    let merged = map_rating(last_rating_code)?;
    let mut v = agency.one_hot().to_vec();
    v.push((merged - 1) as f64 / (NUM_CLASSES - 1) as f64);
    Ok(v)
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }
}

#[cfg(test)]
mod tests;
