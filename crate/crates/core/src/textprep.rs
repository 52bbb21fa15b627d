//! Tokenization, stopword removal, lemmatization and bag-of-token vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("line {line}: expected \"surface<TAB>lemma\"")]
    BadExceptionLine { line: usize },
    #[error("line {line}: lemma exception {surface:?} does not settle on a fixed point")]
    UnstableException { line: usize, surface: String },
    #[error("min_df must be at least 1")]
    InvalidMinDf,
    #[error("no token reaches document frequency {min_df}")]
    EmptyVocabulary { min_df: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceField {
    Title,
    Description,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_field: SourceField,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// One token per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self(HashSet::new())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Rule-based lemmatizer: an exception table followed by ordered suffix
/// rules, applied until the token stops changing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
}

const MAX_PASSES: usize = 16;

impl Lemmatizer {
    /// Parses `surface<TAB>lemma` lines. Rejects tables whose entries
    /// never reach a fixed point.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut exceptions = HashMap::new();
        let mut order = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, lemma) = line.split_once('\t').ok_or(TextError::BadExceptionLine { line: i + 1 })?;
            let (surface, lemma) = (surface.trim().to_lowercase(), lemma.trim().to_lowercase());
            if surface.is_empty() || lemma.is_empty() {
                return Err(TextError::BadExceptionLine { line: i + 1 });
            }
            order.push((i + 1, surface.clone()));
            exceptions.insert(surface, lemma);
        }
        let lem = Self { exceptions };
        for (line, surface) in order {
            if lem.settle(&surface).is_none() {
                return Err(TextError::UnstableException { line, surface });
            }
        }
        Ok(lem)
    }

    pub fn lemmatize(&self, token: &str) -> String {
        self.settle(token).unwrap_or_else(|| token.to_string())
    }

    fn settle(&self, token: &str) -> Option<String> {
        let mut current = token.to_string();
        for _ in 0..MAX_PASSES {
            match self.step(&current) {
                Some(next) if next != current => current = next,
                _ => return Some(current),
            }
        }
        None
    }

    fn step(&self, t: &str) -> Option<String> {
        if let Some(lemma) = self.exceptions.get(t) {
            return Some(lemma.clone());
        }
        if let Some(stem) = t.strip_suffix("ies").or_else(|| t.strip_suffix("ied")) {
            if stem.chars().count() >= 2 {
                return Some(format!("{stem}y"));
            }
        }
        if let Some(stem) = t.strip_suffix("sses") {
            return Some(format!("{stem}ss"));
        }
        for suffix in ["ing", "ed"] {
            if let Some(stem) = t.strip_suffix(suffix) {
                if stem.chars().count() >= 3 {
                    return Some(restore_stem(stem));
                }
            }
        }
        if let Some(stem) = t.strip_suffix('s') {
            let protected = t.ends_with("ss") || t.ends_with("us") || t.ends_with("is");
            if !protected && stem.chars().count() >= 3 {
                return Some(stem.to_string());
            }
        }
        None
    }
}

impl Default for Lemmatizer {
    fn default() -> Self {
        Self::parse(DEFAULT_LEMMA_EXCEPTIONS).expect("shipped lemma table is valid")
    }
}

/// Repairs a stem after `-ing`/`-ed` removal: `calculat` -> `calculate`,
/// `plann` -> `plan`.
fn restore_stem(stem: &str) -> String {
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") {
        return format!("{stem}e");
    }
    let bytes = stem.as_bytes();
    if bytes.len() >= 2 {
        let (a, b) = (bytes[bytes.len() - 2], bytes[bytes.len() - 1]);
        if a == b && b.is_ascii_alphabetic() && !b"aeioulsz".contains(&b) {
            return stem[..stem.len() - 1].to_string();
        }
    }
    stem.to_string()
}

/// Stopword list plus lemmatizer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Preprocessor {
    pub stopwords: Stopwords,
    pub lemmatizer: Lemmatizer,
}

impl Preprocessor {
    pub fn new(stopwords: Stopwords, lemmatizer: Lemmatizer) -> Self {
        Self { stopwords, lemmatizer }
    }

    /// Lowercases, drops apostrophes (so `model's` reads as `models`),
    /// splits on non-alphanumeric characters, drops numeric tokens and
    /// stopwords, lemmatizes, and drops any lemma that is a stopword.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let lowered: String = text.to_lowercase().chars().filter(|c| !matches!(c, '\'' | '\u{2019}')).collect();
        lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !t.chars().all(char::is_numeric))
            .filter(|t| !self.stopwords.contains(t))
            .map(|t| self.lemmatizer.lemmatize(t))
            .filter(|t| !t.is_empty() && !self.stopwords.contains(t))
            .collect()
    }

    pub fn preprocess(&self, text: &str, field: SourceField) -> TokenSequence {
        TokenSequence { tokens: self.tokens(text), source_field: field }
    }
}

/// Token to column map with document frequencies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    min_df: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens with document frequency >= `min_df`, ordered by
    /// descending frequency then lexicographically.
    pub fn build<'a, I>(sequences: I, min_df: usize) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if min_df == 0 {
            return Err(TextError::InvalidMinDf);
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for seq in sequences {
            let distinct: HashSet<&str> = seq.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, c)| c >= min_df).collect();
        if kept.is_empty() {
            return Err(TextError::EmptyVocabulary { min_df });
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok(Self::from_parts(
            kept.iter().map(|(t, _)| t.to_string()).collect(),
            kept.iter().map(|(_, c)| *c).collect(),
            min_df,
        ))
    }

    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, min_df: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, doc_freq, min_df, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(mut self) -> Self {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        self
    }
}

/// Sparse column -> count map; only positive counts are stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfTokens(pub BTreeMap<usize, u32>);

impl BagOfTokens {
    pub fn total(&self) -> u64 {
        self.0.values().map(|&c| c as u64).sum()
    }

    pub fn add(&self, other: &BagOfTokens) -> BagOfTokens {
        let mut out = self.0.clone();
        for (&k, &v) in &other.0 {
            *out.entry(k).or_default() += v;
        }
        BagOfTokens(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }
}

/// Counts in-vocabulary tokens; others are dropped.
pub fn vectorize(tokens: &[String], vocab: &Vocabulary) -> BagOfTokens {
    let mut bag = BTreeMap::new();
    for t in tokens {
        if let Some(i) = vocab.get(t) {
            *bag.entry(i).or_insert(0u32) += 1;
        }
    }
    BagOfTokens(bag)
}
