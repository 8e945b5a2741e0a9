//! Text normalization and frequency-ordered integer tokenization.
//!
//! The normalization pass mirrors a conventional transcript-cleaning
//! pipeline: repair common mojibake, lowercase, swap URLs / email
//! addresses / phone numbers for marker tokens, strip punctuation and drop
//! stop words. Tokens are then mapped to dense integer ids ordered by
//! corpus frequency, with ties broken lexicographically.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::DataError;

pub const PAD_TOKEN: &str = "⟨pad⟩";
pub const UNKNOWN_TOKEN: &str = "⟨unk⟩";
pub const URL_TOKEN: &str = "⟨url⟩";
pub const EMAIL_TOKEN: &str = "⟨email⟩";
pub const PHONE_TOKEN: &str = "⟨phone⟩";

pub const PAD_ID: u32 = 0;
pub const UNKNOWN_ID: u32 = 1;
pub const URL_ID: u32 = 2;
pub const EMAIL_ID: u32 = 3;
pub const PHONE_ID: u32 = 4;

pub const RESERVED_TOKENS: [&str; 5] = [
    PAD_TOKEN,
    UNKNOWN_TOKEN,
    URL_TOKEN,
    EMAIL_TOKEN,
    PHONE_TOKEN,
];

/// NLTK-style English stop list with apostrophes elided to match the
/// tokenizer output ("don't" → "dont").
pub const STOP_WORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "youre", "youve",
    "youll", "youd", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself",
    "she", "shes", "her", "hers", "herself", "it", "its", "itself", "they", "them", "their",
    "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "thatll", "these",
    "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had",
    "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or",
    "because", "as", "until", "while", "of", "at", "by", "for", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "again", "further", "then",
    "once", "here", "there", "when", "where", "why", "how", "all", "any", "both", "each",
    "few", "more", "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same",
    "so", "than", "too", "very", "s", "t", "can", "will", "just", "don", "dont", "should",
    "shouldve", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "arent", "couldn",
    "couldnt", "didn", "didnt", "doesn", "doesnt", "hadn", "hadnt", "hasn", "hasnt", "haven",
    "havent", "isn", "isnt", "ma", "mightn", "mightnt", "mustn", "mustnt", "needn", "neednt",
    "shan", "shant", "shouldn", "shouldnt", "wasn", "wasnt", "weren", "werent", "won", "wont",
    "wouldn", "wouldnt",
];

/// Common UTF-8-read-as-Latin-1 sequences, longest first.
const MOJIBAKE_TABLE: &[(&str, &str)] = &[
    ("â€™", "'"),
    ("â€˜", "'"),
    ("â€œ", "\""),
    ("â€\u{9d}", "\""),
    ("â€“", "-"),
    ("â€”", "-"),
    ("â€¦", "..."),
    ("Ã©", "e"),
    ("Ã¨", "e"),
    ("Ã¡", "a"),
    ("Ã³", "o"),
    ("Ã±", "n"),
    ("Ã¼", "u"),
    ("Ã¶", "o"),
    ("Ã¤", "a"),
    ("Â·", "-"),
    ("Â", ""),
];

fn url_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S+").unwrap())
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[a-z0-9._%+\-]+@[a-z0-9.\-]+\.[a-z]{2,}").unwrap())
}

fn phone_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Conservative: separator-joined North-American forms or +international,
    // so plain figures and years never match.
    RE.get_or_init(|| {
        Regex::new(r"\+?\(?\d{3}\)?[\s.-]?\d{3}[-.]\d{4}\b|\+\d{8,15}\b").unwrap()
    })
}

/// Apostrophe-like characters elide (no space), so contractions collapse
/// into one token.
const ELIDE: &[char] = &['\'', '’', '‘', '`', '´'];

/// Non-ASCII punctuation that splits tokens, in addition to ASCII
/// punctuation. The ⟨…⟩ marker delimiters are deliberately absent.
const EXTRA_PUNCT: &[char] = &[
    '“', '”', '«', '»', '–', '—', '…', '·', '•', '™', '®', '©', '°', '¿', '¡', '§', '¶',
];

/// Full normalization pass; total on any input string.
pub fn preprocess_text(raw: &str) -> String {
    let mut s = raw.to_string();
    for (from, to) in MOJIBAKE_TABLE {
        if s.contains(from) {
            s = s.replace(from, to);
        }
    }
    s = s.to_lowercase();
    s = url_re().replace_all(&s, URL_TOKEN).into_owned();
    s = email_re().replace_all(&s, EMAIL_TOKEN).into_owned();
    s = phone_re().replace_all(&s, PHONE_TOKEN).into_owned();

    let mut cleaned = String::with_capacity(s.len());
    for c in s.chars() {
        if ELIDE.contains(&c) {
            continue;
        }
        if c.is_ascii_punctuation() || EXTRA_PUNCT.contains(&c) {
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }

    let stop: &HashMap<&str, ()> = stop_set();
    let mut out = String::with_capacity(cleaned.len());
    for token in cleaned.split_whitespace() {
        if stop.contains_key(token) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

fn stop_set() -> &'static HashMap<&'static str, ()> {
    static SET: OnceLock<HashMap<&'static str, ()>> = OnceLock::new();
    SET.get_or_init(|| STOP_WORDS.iter().map(|w| (*w, ())).collect())
}

/// Frequency-ordered token→id map with five reserved leading ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    max_size: usize,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Token id; unknown or overflow tokens map to [`UNKNOWN_ID`].
    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn token_of(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Builds the vocabulary from normalized document strings: whitespace
/// tokens ranked by descending corpus frequency, lexicographic tiebreak,
/// reserved ids first. Tokens beyond `max_size` fall back to the unknown
/// id at encode time.
pub fn fit_vocabulary(corpus: &[String], max_size: usize) -> Result<Vocabulary, DataError> {
    if corpus.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    if max_size < RESERVED_TOKENS.len() {
        return Err(DataError::VocabTooSmall {
            max_size,
            reserved: RESERVED_TOKENS.len(),
        });
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in corpus {
        for token in doc.split_whitespace() {
            if RESERVED_TOKENS.contains(&token) {
                continue;
            }
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - RESERVED_TOKENS.len());

    let mut id_to_token: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
    id_to_token.extend(ranked.iter().map(|(t, _)| t.to_string()));
    let token_to_id = id_to_token
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    Ok(Vocabulary {
        token_to_id,
        id_to_token,
        max_size,
    })
}

/// Encodes a normalized string to exactly `max_len` ids: tokenize, map
/// (unknown for OOV), truncate the tail, right-pad with the pad id.
pub fn encode_text(vocab: &Vocabulary, normalized: &str, max_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = normalized
        .split_whitespace()
        .take(max_len)
        .map(|t| vocab.id_of(t))
        .collect();
    ids.resize(max_len, PAD_ID);
    ids
}
