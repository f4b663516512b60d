//! Static word-embedding tables.
//!
//! The on-disk format is the GloVe text layout: one UTF-8 line per word,
//! `word v1 v2 ... vd`, single-space separated. Tables are immutable once
//! built and keep the insertion order of their words.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::numeric::CompensatedSum;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding input is empty")]
    Empty,
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: component {token:?} is not a number")]
    InvalidNumber { line: usize, token: String },
    #[error("line {line}: non-finite component for word {word:?}")]
    NonFinite { line: usize, word: String },
    #[error("line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("word {0:?} is not in the embedding set")]
    MissingWord(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An immutable, insertion-ordered word → vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dimension: usize,
    words: Vec<String>,
    // Row-major, `words.len() * dimension` values.
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    /// Builds a set from `(word, vector)` entries, validating every invariant.
    ///
    /// Errors report the 1-based position of the offending entry as `line`.
    pub fn from_entries<I>(dimension: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut builder = Builder::new(dimension)?;
        for (i, (word, vector)) in entries.into_iter().enumerate() {
            builder.push(i + 1, word, &vector)?;
        }
        Ok(builder.finish())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    /// Like [`get`](Self::get) but with a lookup error for absent words.
    pub fn require(&self, word: &str) -> Result<&[f64], EmbeddingError> {
        self.get(word)
            .ok_or_else(|| EmbeddingError::MissingWord(word.to_string()))
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[f64])> + '_ {
        self.words
            .iter()
            .enumerate()
            .map(move |(i, w)| (w.as_str(), self.row(i)))
    }

    /// Same vocabulary and order, new rows. Rows must be finite and of the
    /// set's dimension.
    pub(crate) fn with_rows(&self, rows: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(rows.len(), self.len());
        let mut values = Vec::with_capacity(self.values.len());
        for row in rows {
            debug_assert_eq!(row.len(), self.dimension);
            values.extend(row);
        }
        Self {
            dimension: self.dimension,
            words: self.words.clone(),
            values,
            index: self.index.clone(),
        }
    }
}

struct Builder {
    dimension: usize,
    words: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Builder {
    fn new(dimension: usize) -> Result<Self, EmbeddingError> {
        if dimension == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            words: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        })
    }

    fn push(&mut self, line: usize, word: String, vector: &[f64]) -> Result<(), EmbeddingError> {
        if vector.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { line, word });
        }
        if self.index.contains_key(&word) {
            return Err(EmbeddingError::DuplicateWord { line, word });
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.values.extend_from_slice(vector);
        Ok(())
    }

    fn finish(self) -> EmbeddingSet {
        EmbeddingSet {
            dimension: self.dimension,
            words: self.words,
            values: self.values,
            index: self.index,
        }
    }
}

/// Parses a GloVe-style text table.
///
/// Blank lines are skipped. The dimension is `expected_dimension` when given,
/// otherwise that of the first entry.
pub fn load_embeddings<R: BufRead>(
    source: R,
    expected_dimension: Option<usize>,
) -> Result<EmbeddingSet, EmbeddingError> {
    let mut builder: Option<Builder> = match expected_dimension {
        Some(d) => Some(Builder::new(d)?),
        None => None,
    };
    let mut components = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let Some(word) = fields.next() else { continue };
        components.clear();
        for token in fields {
            let value: f64 = token.parse().map_err(|_| EmbeddingError::InvalidNumber {
                line: line_no,
                token: token.to_string(),
            })?;
            components.push(value);
        }
        let b = match builder.as_mut() {
            Some(b) => b,
            None => builder.insert(Builder::new(components.len())?),
        };
        b.push(line_no, word.to_string(), &components)?;
    }
    match builder {
        Some(b) if !b.words.is_empty() => Ok(b.finish()),
        _ => Err(EmbeddingError::Empty),
    }
}

/// Writes `set` in the text format with `decimals` fractional digits.
pub fn save_embeddings<W: Write>(
    set: &EmbeddingSet,
    sink: &mut W,
    decimals: usize,
) -> io::Result<()> {
    let mut line = String::new();
    for (word, vector) in set.iter() {
        line.clear();
        line.push_str(word);
        for v in vector {
            use std::fmt::Write as _;
            // -0.0 would otherwise print with a sign.
            let v = if *v == 0.0 { 0.0 } else { *v };
            let _ = write!(line, " {v:.decimals$}");
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()
}

/// One contextual occurrence of a word.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub word: String,
    pub vector: Vec<f64>,
}

impl TokenRecord {
    pub fn new(word: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            word: word.into(),
            vector,
        }
    }
}

/// Averages token vectors into one vector per word type.
///
/// Words appear in first-occurrence order. Sums are compensated so the
/// result does not depend on the order of the token stream beyond rounding.
pub fn aggregate_type_embeddings<I>(tokens: I, dimension: usize) -> Result<EmbeddingSet, EmbeddingError>
where
    I: IntoIterator<Item = TokenRecord>,
{
    if dimension == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut sums: Vec<(Vec<CompensatedSum>, usize)> = Vec::new();
    for (i, token) in tokens.into_iter().enumerate() {
        if token.vector.len() != dimension {
            return Err(EmbeddingError::DimensionMismatch {
                line: i + 1,
                expected: dimension,
                found: token.vector.len(),
            });
        }
        if token.vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite {
                line: i + 1,
                word: token.word,
            });
        }
        let slot = match slots.get(&token.word) {
            Some(&s) => s,
            None => {
                slots.insert(token.word.clone(), order.len());
                order.push(token.word);
                sums.push((vec![CompensatedSum::default(); dimension], 0));
                order.len() - 1
            }
        };
        let (acc, count) = &mut sums[slot];
        for (a, v) in acc.iter_mut().zip(&token.vector) {
            a.add(*v);
        }
        *count += 1;
    }
    if order.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    let entries = order.into_iter().zip(sums).map(|(word, (acc, count))| {
        let mean = acc.iter().map(|s| s.value() / count as f64).collect();
        (word, mean)
    });
    EmbeddingSet::from_entries(dimension, entries)
}
