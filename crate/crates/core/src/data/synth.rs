//! Synthetic data with plantable class signal, schema-compatible with the
//! real ingestion path.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    codes_for_merged_class, covariate_vector, encode_text, fit_vocabulary, map_rating,
    preprocess_text, Agency, DataError, Dataset, MonthIndex, RawRecord, Sample, Vocabulary,
    BOND_WIDTH, MARKET_WIDTH, RATIOS_WIDTH,
};

/// Where the class label is recoverable from.
///
/// `Joint` plants the label as `2·topic + sign`: the topic only in the
/// text channel, the sign only in one designated ratios feature, so
/// neither channel suffices alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    TextOnly,
    NumericOnly,
    Joint,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub classes: usize,
    pub signal: Signal,
    pub seed: u64,
}

const FILLER_WORDS: usize = 40;
const TOPIC_WORDS: usize = 8;
/// Index of the ratios feature carrying the sign component in joint mode.
pub const JOINT_SIGN_FEATURE: usize = 0;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn topic_count(spec: &SyntheticSpec) -> usize {
    match spec.signal {
        Signal::TextOnly => spec.classes,
        Signal::NumericOnly => 4,
        Signal::Joint => spec.classes.div_ceil(2),
    }
}

fn validate(spec: &SyntheticSpec) -> Result<(), DataError> {
    if spec.classes < 2 || spec.classes > 8 {
        return Err(DataError::InvalidSpec(format!(
            "classes {} outside 2..=8",
            spec.classes
        )));
    }
    if spec.n < spec.classes {
        return Err(DataError::InvalidSpec(format!(
            "n {} below classes {}",
            spec.n, spec.classes
        )));
    }
    Ok(())
}

/// Raw (pre-tokenization) records, one per sample, as they would arrive
/// from the channel files.
pub fn generate_raw_records(spec: &SyntheticSpec) -> Result<Vec<RawRecord>, DataError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let topics = topic_count(spec);

    // Balanced labels via a shuffled round-robin.
    let mut labels: Vec<u8> = (0..spec.n).map(|i| (i % spec.classes) as u8 + 1).collect();
    labels.shuffle(&mut rng);

    let num_companies = (spec.n / 20).clamp(5, 200).min(spec.n);
    let mut records = Vec::with_capacity(spec.n);
    for (i, &label) in labels.iter().enumerate() {
        let company = i % num_companies;
        let issuer = format!("{company:06}");
        let cusip = format!("{issuer}A{:02}", company % 100);
        let time_index = MonthIndex::new(2015, 1).plus_months(rng.gen_range(0..96));
        let agency = *[Agency::MR, Agency::SPR, Agency::FR]
            .choose(&mut rng)
            .unwrap();
        let lag_months = rng.gen_range(2..=14);
        let rating_code = *codes_for_merged_class(label).choose(&mut rng).unwrap();
        let last_rating_code = rng.gen_range(1..=22);

        let topic = match spec.signal {
            Signal::TextOnly => (label - 1) as usize,
            Signal::Joint => (label - 1) as usize / 2,
            Signal::NumericOnly => rng.gen_range(0..topics),
        };
        let text = synth_document(&mut rng, topic);

        let bond: Vec<f64> = (0..BOND_WIDTH).map(|_| normal(&mut rng)).collect();
        let market: Vec<f64> = (0..MARKET_WIDTH).map(|_| normal(&mut rng)).collect();
        let mut ratios: Vec<f64> = (0..RATIOS_WIDTH).map(|_| normal(&mut rng)).collect();
        match spec.signal {
            Signal::NumericOnly => {
                ratios[(label - 1) as usize] += 2.5;
            }
            Signal::Joint => {
                // The designated feature determines the sign bit; a few
                // more ratio features carry the same sign so convolution
                // plus global pooling can pick it up at desk scale.
                let sign = if (label - 1) % 2 == 1 { 2.0 } else { -2.0 };
                for j in JOINT_SIGN_FEATURE..JOINT_SIGN_FEATURE + 7 {
                    ratios[j] = sign + 0.5 * normal(&mut rng);
                }
            }
            Signal::TextOnly => {}
        }

        records.push(RawRecord {
            company_id: issuer,
            cusip,
            time_index,
            agency,
            bond,
            ratios,
            market,
            last_rating_code,
            rating_code,
            lag_months,
            text,
        });
    }
    Ok(records)
}

/// A short transcript-flavoured document: mostly filler vocabulary with
/// topic signature words mixed in, some capitalization and punctuation,
/// and occasional URLs/emails so the cleaning pass has work to do.
fn synth_document(rng: &mut ChaCha8Rng, topic: usize) -> String {
    let len = rng.gen_range(20..=60);
    let mut words = Vec::with_capacity(len + 4);
    for _ in 0..len {
        let word = if rng.gen::<f64>() < 0.45 {
            format!("sig{topic}w{}", rng.gen_range(0..TOPIC_WORDS))
        } else {
            format!("fill{}", rng.gen_range(0..FILLER_WORDS))
        };
        let word = if rng.gen::<f64>() < 0.1 {
            let mut c = word.chars();
            c.next().map(|f| f.to_uppercase().to_string() + c.as_str()).unwrap_or(word)
        } else {
            word
        };
        words.push(word);
        if rng.gen::<f64>() < 0.12 {
            let last = words.last_mut().unwrap();
            last.push(*[',', '.', '!', ';'].choose(rng).unwrap());
        }
    }
    if rng.gen::<f64>() < 0.2 {
        words.push("https://example.com/ir".to_string());
    }
    if rng.gen::<f64>() < 0.1 {
        words.push("ir@example.com".to_string());
    }
    words.join(" ")
}

/// Assembles raw records into model-ready samples through the same
/// preprocess → fit-vocabulary → encode path as file ingestion.
pub fn assemble_dataset(
    records: &[RawRecord],
    max_len: usize,
    max_vocab: usize,
) -> Result<(Dataset, Vocabulary), DataError> {
    let normalized: Vec<String> = records.iter().map(|r| preprocess_text(&r.text)).collect();
    let vocab = fit_vocabulary(&normalized, max_vocab)?;
    let mut samples = Vec::with_capacity(records.len());
    for (record, doc) in records.iter().zip(normalized.iter()) {
        let word_count = doc.split_whitespace().count();
        samples.push(Sample {
            company_id: record.company_id.clone(),
            cusip: record.cusip.clone(),
            time_index: record.time_index,
            agency: record.agency,
            bond: record.bond.clone(),
            ratios: record.ratios.clone(),
            market: record.market.clone(),
            covariate: covariate_vector(record.agency, record.last_rating_code)?,
            tokens: encode_text(&vocab, doc, max_len),
            word_count,
            label: map_rating(record.rating_code)?,
            rating_code: record.rating_code,
            lag_months: record.lag_months,
        });
    }
    Ok((Dataset { samples }, vocab))
}

/// End-to-end synthetic dataset with the given tokenizer settings.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    max_len: usize,
    max_vocab: usize,
) -> Result<(Dataset, Vocabulary), DataError> {
    let records = generate_raw_records(spec)?;
    assemble_dataset(&records, max_len, max_vocab)
}
