//! Channel file formats and the joining loader.
//!
//! Numeric channels are CSV with a header row: `cusip,time_index` followed
//! by exactly 8 / 45 / 98 real feature columns (empty cells are treated as
//! missing and imputed downstream). Covariates and labels are small CSVs;
//! transcripts are JSONL with one `{cusip, time_index, text}` object per
//! line. Records join on `(cusip, time_index)` with labels as the driving
//! side; rows missing any channel are dropped and counted.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    assemble_dataset, Agency, DataError, Dataset, MonthIndex, Vocabulary, BOND_WIDTH,
    MARKET_WIDTH, MIN_LAG_MONTHS, RATIOS_WIDTH,
};

/// One fully joined record before tokenization.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub company_id: String,
    pub cusip: String,
    pub time_index: MonthIndex,
    pub agency: Agency,
    pub bond: Vec<f64>,
    pub ratios: Vec<f64>,
    pub market: Vec<f64>,
    pub last_rating_code: u8,
    pub rating_code: u8,
    pub lag_months: u32,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct ChannelPaths {
    pub bond: PathBuf,
    pub ratios: PathBuf,
    pub market: PathBuf,
    pub covariates: PathBuf,
    pub labels: PathBuf,
    pub transcripts: PathBuf,
}

impl ChannelPaths {
    /// The fixed file names inside a data directory.
    pub fn in_dir(dir: &Path) -> ChannelPaths {
        ChannelPaths {
            bond: dir.join("bond.csv"),
            ratios: dir.join("ratios.csv"),
            market: dir.join("market.csv"),
            covariates: dir.join("covariates.csv"),
            labels: dir.join("labels.csv"),
            transcripts: dir.join("transcripts.jsonl"),
        }
    }

    pub fn all(&self) -> [&PathBuf; 6] {
        [
            &self.bond,
            &self.ratios,
            &self.market,
            &self.covariates,
            &self.labels,
            &self.transcripts,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadReport {
    pub labeled_rows: usize,
    pub joined: usize,
    pub dropped_missing_channel: usize,
}

type Key = (String, MonthIndex);

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::MalformedRow {
        file: file_name(path),
        line,
        message: message.into(),
    }
}

fn read_numeric_channel(path: &Path, width: usize) -> Result<HashMap<Key, Vec<f64>>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width + 2 {
            return Err(DataError::WidthMismatch {
                file: file_name(path),
                line,
                expected: width,
                got: record.len().saturating_sub(2),
            });
        }
        let cusip = record[0].to_string();
        let time: MonthIndex = record[1]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad time_index {:?}", &record[1])))?;
        let mut values = Vec::with_capacity(width);
        for cell in record.iter().skip(2) {
            if cell.trim().is_empty() {
                values.push(f64::NAN);
            } else {
                values.push(cell.trim().parse::<f64>().map_err(|_| {
                    malformed(path, line, format!("bad numeric value {cell:?}"))
                })?);
            }
        }
        out.insert((cusip, time), values);
    }
    Ok(out)
}

fn read_covariates(path: &Path) -> Result<HashMap<Key, (Agency, u8)>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 4 {
            return Err(malformed(
                path,
                line,
                format!("expected 4 columns, got {}", record.len()),
            ));
        }
        let cusip = record[0].to_string();
        let time: MonthIndex = record[1]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad time_index {:?}", &record[1])))?;
        let agency: Agency = record[2]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad agency {:?}", &record[2])))?;
        let last: u8 = record[3]
            .parse()
            .ok()
            .filter(|c| (1..=22).contains(c))
            .ok_or_else(|| malformed(path, line, format!("bad rating code {:?}", &record[3])))?;
        out.insert((cusip, time), (agency, last));
    }
    Ok(out)
}

struct LabelRow {
    cusip: String,
    time: MonthIndex,
    rating_code: u8,
    lag_months: u32,
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 4 {
            return Err(malformed(
                path,
                line,
                format!("expected 4 columns, got {}", record.len()),
            ));
        }
        let rating_code: u8 = record[2]
            .parse()
            .ok()
            .filter(|c| (1..=22).contains(c))
            .ok_or_else(|| malformed(path, line, format!("bad rating code {:?}", &record[2])))?;
        let lag_months: u32 = record[3]
            .parse()
            .map_err(|_| malformed(path, line, format!("bad lag {:?}", &record[3])))?;
        if lag_months < MIN_LAG_MONTHS {
            return Err(malformed(
                path,
                line,
                format!("lag {lag_months} below the minimum of {MIN_LAG_MONTHS} months"),
            ));
        }
        out.push(LabelRow {
            cusip: record[0].to_string(),
            time: record[1]
                .parse()
                .map_err(|_| malformed(path, line, format!("bad time_index {:?}", &record[1])))?,
            rating_code,
            lag_months,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct TranscriptLine {
    cusip: String,
    time_index: MonthIndex,
    text: String,
}

fn read_transcripts(path: &Path) -> Result<HashMap<Key, String>, DataError> {
    let file = File::open(path)?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TranscriptLine = serde_json::from_str(&line)
            .map_err(|e| malformed(path, i + 1, format!("bad JSON object: {e}")))?;
        out.insert((parsed.cusip, parsed.time_index), parsed.text);
    }
    Ok(out)
}

/// Joins all channel files into raw records. The company id is the 6-char
/// CUSIP issuer prefix.
pub fn load_raw_records(paths: &ChannelPaths) -> Result<(Vec<RawRecord>, LoadReport), DataError> {
    let bond = read_numeric_channel(&paths.bond, BOND_WIDTH)?;
    let ratios = read_numeric_channel(&paths.ratios, RATIOS_WIDTH)?;
    let market = read_numeric_channel(&paths.market, MARKET_WIDTH)?;
    let covariates = read_covariates(&paths.covariates)?;
    let labels = read_labels(&paths.labels)?;
    let transcripts = read_transcripts(&paths.transcripts)?;

    let mut report = LoadReport {
        labeled_rows: labels.len(),
        ..LoadReport::default()
    };
    let mut records = Vec::new();
    for row in labels {
        let key = (row.cusip.clone(), row.time);
        let (Some(b), Some(r), Some(m), Some(&(agency, last)), Some(text)) = (
            bond.get(&key),
            ratios.get(&key),
            market.get(&key),
            covariates.get(&key),
            transcripts.get(&key),
        ) else {
            report.dropped_missing_channel += 1;
            continue;
        };
        let company_id = row.cusip.chars().take(6).collect();
        records.push(RawRecord {
            company_id,
            cusip: row.cusip,
            time_index: row.time,
            agency,
            bond: b.clone(),
            ratios: r.clone(),
            market: m.clone(),
            last_rating_code: last,
            rating_code: row.rating_code,
            lag_months: row.lag_months,
            text: text.clone(),
        });
    }
    report.joined = records.len();
    Ok((records, report))
}

/// Full ingestion: join, preprocess, fit the vocabulary, encode.
pub fn load_channels(
    paths: &ChannelPaths,
    max_len: usize,
    max_vocab: usize,
) -> Result<(Dataset, Vocabulary, LoadReport), DataError> {
    let (records, report) = load_raw_records(paths)?;
    if records.is_empty() {
        return Ok((Dataset::default(), empty_vocab(max_vocab)?, report));
    }
    let (dataset, vocab) = assemble_dataset(&records, max_len, max_vocab)?;
    Ok((dataset, vocab, report))
}

fn empty_vocab(max_vocab: usize) -> Result<Vocabulary, DataError> {
    super::fit_vocabulary(&[String::new()], max_vocab)
}

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes records out in the six-file channel layout; the inverse of
/// [`load_raw_records`].
pub fn write_channel_files(records: &[RawRecord], dir: &Path) -> Result<ChannelPaths, DataError> {
    std::fs::create_dir_all(dir)?;
    let paths = ChannelPaths::in_dir(dir);

    let write_numeric = |path: &Path, width: usize, get: &dyn Fn(&RawRecord) -> &[f64]|
     -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["cusip".to_string(), "time_index".to_string()];
        header.extend((1..=width).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for r in records {
            let mut row = vec![r.cusip.clone(), r.time_index.to_string()];
            row.extend(get(r).iter().map(|v| fmt_float(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    write_numeric(&paths.bond, BOND_WIDTH, &|r| &r.bond)?;
    write_numeric(&paths.ratios, RATIOS_WIDTH, &|r| &r.ratios)?;
    write_numeric(&paths.market, MARKET_WIDTH, &|r| &r.market)?;

    let mut w = csv::Writer::from_path(&paths.covariates)?;
    w.write_record(["cusip", "time_index", "agency", "last_rating_code"])?;
    for r in records {
        w.write_record([
            r.cusip.as_str(),
            &r.time_index.to_string(),
            r.agency.as_str(),
            &r.last_rating_code.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&paths.labels)?;
    w.write_record(["cusip", "time_index", "rating_code", "lag_months"])?;
    for r in records {
        w.write_record([
            r.cusip.as_str(),
            &r.time_index.to_string(),
            &r.rating_code.to_string(),
            &r.lag_months.to_string(),
        ])?;
    }
    w.flush()?;

    let mut f = File::create(&paths.transcripts)?;
    for r in records {
        let line = serde_json::json!({
            "cusip": r.cusip,
            "time_index": r.time_index.to_string(),
            "text": r.text,
        });
        writeln!(f, "{line}")?;
    }
    Ok(paths)
}
