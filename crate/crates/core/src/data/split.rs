//! Train/validation/test partitions: random, out-of-time and
//! out-of-universe. All are deterministic under a seed, exhaustive and
//! disjoint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    pub train_val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random split: 20% test (floor), then 20% of the remainder as
/// validation (floor), rest train.
pub fn split_random(n: usize, seed: u64) -> Result<Splits, DataError> {
    if n < 5 {
        return Err(DataError::DatasetTooSmall { size: n, minimum: 5 });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let test_n = n / 5;
    let remainder = n - test_n;
    let val_n = remainder / 5;
    let mut test: Vec<usize> = indices[..test_n].to_vec();
    let mut validation: Vec<usize> = indices[test_n..test_n + val_n].to_vec();
    let mut train: Vec<usize> = indices[test_n + val_n..].to_vec();
    test.sort_unstable();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(Splits {
        train,
        validation,
        test,
    })
}

/// Out-of-time split: the latest `cutoff_fraction` of records by time
/// index become the test set; records tied with the boundary month also
/// go to test, so every train timestamp strictly precedes every test
/// timestamp.
pub fn split_oot(dataset: &Dataset, cutoff_fraction: f64) -> Result<HoldoutSplit, DataError> {
    let n = dataset.len();
    if n < 2 {
        return Err(DataError::DatasetTooSmall { size: n, minimum: 2 });
    }
    if !(0.0..1.0).contains(&cutoff_fraction) || cutoff_fraction == 0.0 {
        return Err(DataError::DegenerateTimeSplit(format!(
            "cutoff fraction {cutoff_fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (dataset.samples[i].time_index, i));
    let target_test = ((n as f64) * cutoff_fraction).floor() as usize;
    if target_test == 0 {
        return Err(DataError::DegenerateTimeSplit(
            "test fraction rounds to zero records".to_string(),
        ));
    }
    let boundary = dataset.samples[order[n - target_test]].time_index;
    let mut train_val = Vec::new();
    let mut test = Vec::new();
    for i in 0..n {
        if dataset.samples[i].time_index >= boundary {
            test.push(i);
        } else {
            train_val.push(i);
        }
    }
    if train_val.is_empty() {
        return Err(DataError::DegenerateTimeSplit(
            "all records share the boundary timestamp".to_string(),
        ));
    }
    Ok(HoldoutSplit { train_val, test })
}

/// Out-of-universe split: whole companies are assigned to the test side
/// until it holds roughly `fraction` of the records, leaving at least one
/// company on each side. No company id appears on both sides.
pub fn split_oou(dataset: &Dataset, fraction: f64, seed: u64) -> Result<HoldoutSplit, DataError> {
    let n = dataset.len();
    let mut companies: Vec<&str> = dataset
        .samples
        .iter()
        .map(|s| s.company_id.as_str())
        .collect();
    companies.sort_unstable();
    companies.dedup();
    if companies.len() < 2 {
        return Err(DataError::SingleCompany);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = companies.clone();
    shuffled.shuffle(&mut rng);

    let target = ((n as f64) * fraction).round().max(1.0) as usize;
    let mut test_companies: Vec<&str> = Vec::new();
    let mut test_count = 0usize;
    for company in &shuffled {
        if test_count >= target || test_companies.len() + 1 == companies.len() {
            break;
        }
        test_companies.push(company);
        test_count += dataset
            .samples
            .iter()
            .filter(|s| s.company_id == *company)
            .count();
    }
    let mut train_val = Vec::new();
    let mut test = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        if test_companies.contains(&s.company_id.as_str()) {
            test.push(i);
        } else {
            train_val.push(i);
        }
    }
    Ok(HoldoutSplit { train_val, test })
}
