//! Bilingual lexicon: for each source token, a distribution over target tokens.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use crate::corpus::{lines, read_utf8, write_file};
use crate::error::{Error, Result};

/// Tolerance used when validating rows read from disk.
pub const LOAD_TOLERANCE: f64 = 1e-6;

/// Maps a source token to `(target, p(target | source))` rows, sorted by
/// descending probability with ties in lexicographic order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

fn sort_row(row: &mut [(String, f64)]) {
    row.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a row, dropping non-positive probabilities. Rows are stored as
    /// given apart from sorting; callers are responsible for normalization.
    pub fn insert(&mut self, source: impl Into<String>, row: Vec<(String, f64)>) {
        let mut row: Vec<_> = row.into_iter().filter(|(_, p)| *p > 0.0).collect();
        if row.is_empty() {
            return;
        }
        sort_row(&mut row);
        self.entries.insert(source.into(), row);
    }

    pub fn get(&self, source: &str) -> Option<&[(String, f64)]> {
        self.entries.get(source).map(Vec::as_slice)
    }

    pub fn prob(&self, source: &str, target: &str) -> f64 {
        self.get(source)
            .and_then(|row| row.iter().find(|(t, _)| t == target))
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Keeps only the rows for the given source tokens.
    pub fn restrict<'a, I>(&self, tokens: I) -> Lexicon
    where
        I: IntoIterator<Item = &'a String>,
    {
        let wanted: HashSet<&String> = tokens.into_iter().collect();
        Lexicon {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| wanted.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Row-wise back-off: for each of `tokens`, the row from `self` if present,
    /// otherwise the row from `fallback`.
    pub fn backoff<'a, I>(&self, fallback: &Lexicon, tokens: I) -> Lexicon
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut out = Lexicon::new();
        for token in tokens {
            if out.entries.contains_key(token) {
                continue;
            }
            if let Some(row) = self.get(token).or_else(|| fallback.get(token)) {
                out.entries.insert(token.clone(), row.to_vec());
            }
        }
        out
    }

    /// Keeps at most `top_k` targets with probability ≥ `min_prob` per source
    /// token and renormalizes; rows left empty are dropped.
    pub fn prune(&self, top_k: usize, min_prob: f64) -> Lexicon {
        let mut out = Lexicon::new();
        for (source, row) in &self.entries {
            let kept: Vec<(String, f64)> = row
                .iter()
                .filter(|(_, p)| *p >= min_prob)
                .take(top_k.max(1))
                .cloned()
                .collect();
            let total: f64 = kept.iter().map(|(_, p)| p).sum();
            if kept.is_empty() || total <= 0.0 {
                continue;
            }
            if kept.len() == row.len() {
                out.entries.insert(source.clone(), kept);
                continue;
            }
            out.insert(
                source.clone(),
                kept.into_iter().map(|(t, p)| (t, p / total)).collect(),
            );
        }
        out
    }

    /// Largest |Σp − 1| over all rows.
    pub fn max_row_deviation(&self) -> f64 {
        self.entries
            .values()
            .map(|row| (row.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (source, row) in &self.entries {
            for (target, p) in row {
                out.push_str(source);
                out.push('\t');
                out.push_str(target);
                out.push('\t');
                out.push_str(&format_sig12(*p));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Lexicon> {
        let bad = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rows: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, row) in lines(text).into_iter().enumerate() {
            let line = i + 1;
            let fields: Vec<&str> = row.split('\t').collect();
            let [source, target, prob] = fields[..] else {
                return Err(bad(line, format!("expected 3 fields, found {}", fields.len())));
            };
            if source.is_empty() || target.is_empty() {
                return Err(bad(line, "empty token".into()));
            }
            let p: f64 = prob
                .parse()
                .map_err(|_| bad(line, format!("bad probability {prob:?}")))?;
            if !(p > 0.0 && p <= 1.0 + LOAD_TOLERANCE) {
                return Err(Error::Validation(format!(
                    "{}:{line}: probability {p} outside (0, 1]",
                    path.display()
                )));
            }
            let entry = rows.entry(source.to_owned()).or_default();
            if entry.iter().any(|(t, _)| t == target) {
                return Err(bad(line, format!("duplicate pair {source} → {target}")));
            }
            entry.push((target.to_owned(), p));
        }
        let mut lexicon = Lexicon::new();
        for (source, row) in rows {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > LOAD_TOLERANCE {
                return Err(Error::Validation(format!(
                    "{}: probabilities for {source:?} sum to {total}",
                    path.display()
                )));
            }
            lexicon.insert(source, row);
        }
        Ok(lexicon)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_tsv())
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        Self::from_tsv(&read_utf8(path)?, path)
    }
}

/// Formats a value in (0, 1] with 12 significant digits.
fn format_sig12(p: f64) -> String {
    if p == 0.0 || !p.is_finite() {
        return format!("{p}");
    }
    let magnitude = p.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{p:.decimals$}")
}
