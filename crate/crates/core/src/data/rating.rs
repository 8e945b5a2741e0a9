//! 22-point rating codes and their merged 8-class grouping.

use super::DataError;

/// Merged class for each of the 22 rating codes (index = code − 1).
/// Codes 1–5 collapse into class 1, 10–12 into 6, 13–15 into 7 and
/// 16–22 into 8; the mid-scale codes keep their own class.
pub const RATING_TO_MERGED: [u8; 22] = [
    1, 1, 1, 1, 1, // 1–5
    2, // 6
    3, // 7
    4, // 8
    5, // 9
    6, 6, 6, // 10–12
    7, 7, 7, // 13–15
    8, 8, 8, 8, 8, 8, 8, // 16–22
];

/// Maps a 22-point rating code onto its merged class 1..=8.
pub fn map_rating(code: u8) -> Result<u8, DataError> {
    if !(1..=22).contains(&code) {
        return Err(DataError::InvalidRatingCode { code });
    }
    Ok(RATING_TO_MERGED[code as usize - 1])
}

/// All original codes merging into the given class.
pub fn codes_for_merged_class(class: u8) -> Vec<u8> {
    (1u8..=22)
        .filter(|&c| RATING_TO_MERGED[c as usize - 1] == class)
        .collect()
}

/// Relative frequency of each merged class over a set of original codes.
pub fn merged_frequencies(codes: &[u8]) -> Result<[f64; 8], DataError> {
    let mut counts = [0usize; 8];
    for &code in codes {
        counts[map_rating(code)? as usize - 1] += 1;
    }
    let total = codes.len().max(1) as f64;
    let mut freqs = [0.0; 8];
    for (f, c) in freqs.iter_mut().zip(counts.iter()) {
        *f = *c as f64 / total;
    }
    Ok(freqs)
}
