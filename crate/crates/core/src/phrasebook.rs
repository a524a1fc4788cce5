//! Bilingual phrase look-up table with case-insensitive, token-level matching.
//!
//! The on-disk format is a two-column TSV, `source_phrase<TAB>target_phrase`,
//! with space-separated tokens on both sides. Tables extracted from a
//! terminology resource (for instance preferred-term pairs that share a
//! concept identifier) can be loaded directly.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::corpus::{lines, read_utf8, tokenize, write_file};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhraseEntry {
    pub source: Vec<String>,
    pub target: Vec<String>,
    source_folded: Vec<String>,
    target_folded: Vec<String>,
}

impl PhraseEntry {
    pub fn new(source: Vec<String>, target: Vec<String>) -> Self {
        let fold = |v: &[String]| v.iter().map(|t| t.to_lowercase()).collect();
        PhraseEntry {
            source_folded: fold(&source),
            target_folded: fold(&target),
            source,
            target,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PhraseTable {
    entries: Vec<PhraseEntry>,
    by_target_token: HashMap<String, Vec<usize>>,
    by_source_first: HashMap<String, Vec<usize>>,
}

/// A table entry whose source phrase occurs in a query sentence and whose
/// target phrase contains the trigger word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhraseMatch {
    pub entry: usize,
    /// Half-open token span of the source phrase in the query.
    pub source_span: (usize, usize),
    pub position_of_trigger: usize,
}

impl PhraseTable {
    /// Builds a table, skipping exact duplicates. Both sides must be non-empty.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<String>, Vec<String>)>,
    {
        let mut table = PhraseTable::default();
        let mut seen = HashSet::new();
        for (i, (source, target)) in pairs.into_iter().enumerate() {
            if source.is_empty() || target.is_empty() {
                return Err(Error::Validation(format!("phrase pair {i} has an empty side")));
            }
            if seen.insert((source.clone(), target.clone())) {
                table.push(PhraseEntry::new(source, target));
            }
        }
        Ok(table)
    }

    fn push(&mut self, entry: PhraseEntry) {
        let id = self.entries.len();
        let mut targets: Vec<&String> = entry.target_folded.iter().collect();
        targets.sort();
        targets.dedup();
        for t in targets {
            self.by_target_token.entry(t.clone()).or_default().push(id);
        }
        self.by_source_first
            .entry(entry.source_folded[0].clone())
            .or_default()
            .push(id);
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PhraseEntry] {
        &self.entries
    }

    pub fn entry(&self, id: usize) -> Option<&PhraseEntry> {
        self.entries.get(id)
    }

    /// Entry ids whose target phrase contains `token` (case-insensitive).
    pub fn with_target_token(&self, token: &str) -> &[usize] {
        self.by_target_token
            .get(&token.to_lowercase())
            .map_or(&[], Vec::as_slice)
    }

    /// Entry ids whose source phrase starts with `token` (case-insensitive).
    pub fn with_source_first(&self, token: &str) -> &[usize] {
        self.by_source_first
            .get(&token.to_lowercase())
            .map_or(&[], Vec::as_slice)
    }

    /// Longest source phrase contained in `src_tokens` among the entries whose
    /// target phrase contains `trigger`. Ties go to the leftmost occurrence,
    /// then to the smaller entry id.
    pub fn find_match(&self, src_tokens: &[String], trigger: &str) -> Option<PhraseMatch> {
        let folded: Vec<String> = src_tokens.iter().map(|t| t.to_lowercase()).collect();
        let trigger = trigger.to_lowercase();
        let mut best: Option<(usize, PhraseMatch)> = None;
        for &id in self.with_target_token(&trigger) {
            let entry = &self.entries[id];
            let len = entry.source_folded.len();
            let Some(start) = find_subsequence(&folded, &entry.source_folded) else {
                continue;
            };
            let Some(position_of_trigger) = entry.target_folded.iter().position(|t| *t == trigger)
            else {
                continue;
            };
            let candidate = PhraseMatch {
                entry: id,
                source_span: (start, start + len),
                position_of_trigger,
            };
            let better = match &best {
                None => true,
                Some((best_len, m)) => {
                    len > *best_len
                        || (len == *best_len && start < m.source_span.0)
                        || (len == *best_len && start == m.source_span.0 && id < m.entry)
                }
            };
            if better {
                best = Some((len, candidate));
            }
        }
        best.map(|(_, m)| m)
    }

    /// The target token following the trigger in the matched phrase.
    pub fn continuation(&self, m: &PhraseMatch) -> Option<&str> {
        self.entries
            .get(m.entry)?
            .target
            .get(m.position_of_trigger + 1)
            .map(String::as_str)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.source.join(" "));
            out.push('\t');
            out.push_str(&e.target.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, row) in lines(text).into_iter().enumerate() {
            let bad = |message: &str| Error::Format {
                path: path.to_path_buf(),
                line: i + 1,
                message: message.to_owned(),
            };
            let mut parts = row.split('\t');
            let (Some(source), Some(target), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected exactly one TAB"));
            };
            let (source, target) = (tokenize(source), tokenize(target));
            if source.is_empty() || target.is_empty() {
                return Err(bad("empty phrase"));
            }
            pairs.push((source, target));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&read_utf8(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_tsv())
    }
}

fn find_subsequence(haystack: &[String], needle: &[String]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}
