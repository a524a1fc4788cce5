//! Parallel corpus ingestion, vocabularies and train/dev/test splitting.
//!
//! Corpora are two line-aligned UTF-8 files that are already tokenized:
//! one sentence per line, tokens separated by spaces.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

const SPECIALS: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

pub fn is_special(token: &str) -> bool {
    SPECIALS.contains(&token)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub id: usize,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub name: String,
    pub pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    /// Builds a corpus from (source, target) sentences, assigning ids 0..len.
    pub fn from_sentences<I>(name: impl Into<String>, sentences: I) -> Self
    where
        I: IntoIterator<Item = (Vec<String>, Vec<String>)>,
    {
        let pairs = sentences
            .into_iter()
            .enumerate()
            .map(|(id, (source, target))| SentencePair { id, source, target })
            .collect();
        ParallelCorpus {
            name: name.into(),
            pairs,
        }
    }

    /// Convenience constructor from whitespace-separated strings.
    pub fn from_text_pairs(name: impl Into<String>, pairs: &[(&str, &str)]) -> Self {
        Self::from_sentences(
            name,
            pairs.iter().map(|(s, t)| (tokenize(s), tokenize(t))),
        )
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &[String]> {
        self.pairs.iter().map(|p| p.source.as_slice())
    }

    pub fn targets(&self) -> impl Iterator<Item = &[String]> {
        self.pairs.iter().map(|p| p.target.as_slice())
    }

    /// Concatenates corpora in order and renumbers ids.
    pub fn concat(name: impl Into<String>, parts: &[ParallelCorpus]) -> Self {
        Self::from_sentences(
            name,
            parts
                .iter()
                .flat_map(|c| c.pairs.iter().map(|p| (p.source.clone(), p.target.clone()))),
        )
    }

    /// Writes both sides as line-aligned files.
    pub fn write_parallel(&self, source_path: &Path, target_path: &Path) -> Result<()> {
        write_sentences(source_path, self.sources())?;
        write_sentences(target_path, self.targets())
    }

    pub fn stats(&self) -> CorpusStats {
        let source_tokens = self.pairs.iter().map(|p| p.source.len()).sum();
        let target_tokens = self.pairs.iter().map(|p| p.target.len()).sum();
        CorpusStats {
            pairs: self.len(),
            source_tokens,
            target_tokens,
        }
    }
}

/// Pair and token counts in the layout of a corpus statistics table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusStats {
    pub pairs: usize,
    pub source_tokens: usize,
    pub target_tokens: usize,
}

impl CorpusStats {
    pub fn mean_source_len(&self) -> f64 {
        self.source_tokens as f64 / self.pairs.max(1) as f64
    }

    pub fn mean_target_len(&self) -> f64 {
        self.target_tokens as f64 / self.pairs.max(1) as f64
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.1}\t{}\t{:.1}",
            self.pairs,
            self.source_tokens,
            self.mean_source_len(),
            self.target_tokens,
            self.mean_target_len()
        )
    }
}

/// Reads a whole file as UTF-8, reporting the byte offset of the first bad sequence.
pub fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

/// Splits file text into lines, tolerating a trailing newline and CRLF endings.
pub(crate) fn lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}

/// Reads one tokenized sentence per line. Blank lines are rejected.
pub fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_utf8(path)?;
    lines(&text)
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                Err(Error::EmptyLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                })
            } else {
                Ok(tokens)
            }
        })
        .collect()
}

pub fn write_sentences<'a, I>(path: &Path, sentences: I) -> Result<()>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_parallel(source_path: &Path, target_path: &Path) -> Result<ParallelCorpus> {
    let source = read_sentences(source_path)?;
    let target = read_sentences(target_path)?;
    if source.len() != target.len() {
        return Err(Error::Alignment {
            source_lines: source.len(),
            target_lines: target.len(),
        });
    }
    let name = source_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ParallelCorpus::from_sentences(name, source.into_iter().zip(target)))
}

/// Whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Whitespace tokenization that optionally peels leading and trailing ASCII
/// punctuation off each token. Tokens made only of punctuation are kept whole.
pub fn tokenize_with(text: &str, split_punct: bool) -> Vec<String> {
    if !split_punct {
        return tokenize(text);
    }
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        if word.chars().all(|c| c.is_ascii_punctuation()) {
            out.push(word.to_owned());
            continue;
        }
        let start = word.len() - word.trim_start_matches(|c: char| c.is_ascii_punctuation()).len();
        let end = word.trim_end_matches(|c: char| c.is_ascii_punctuation()).len();
        out.extend(word[..start].chars().map(String::from));
        out.push(word[start..end].to_owned());
        out.extend(word[end..].chars().map(String::from));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    to_id: HashMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::specials_only()
    }
}

impl Vocabulary {
    fn specials_only() -> Self {
        let tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let to_id = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Vocabulary {
            to_id,
            tokens,
            counts: vec![0; SPECIALS.len()],
        }
    }

    /// Builds a vocabulary: specials first, then tokens by descending count,
    /// ties in lexicographic order. Tokens seen fewer than `min_count` times are left out.
    pub fn build<'a, I>(sentences: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&'a str, u64> = HashMap::new();
        for sentence in sentences {
            for token in sentence {
                if !is_special(token) {
                    *counts.entry(token.as_str()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Self::specials_only();
        for (token, count) in ranked {
            vocab.push(token.to_owned(), count);
        }
        vocab
    }

    fn push(&mut self, token: String, count: u64) {
        self.to_id.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.to_id.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.to_id.contains_key(token)
    }

    /// Id of `token`, or [`UNK`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn count(&self, token: &str) -> u64 {
        self.get(token).map(|i| self.counts[i]).unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, sentence: &[String], add_bounds: bool) -> Vec<usize> {
        let mut ids = Vec::with_capacity(sentence.len() + 2);
        if add_bounds {
            ids.push(BOS);
        }
        ids.extend(sentence.iter().map(|t| self.id(t)));
        if add_bounds {
            ids.push(EOS);
        }
        ids
    }

    /// Maps ids back to surface forms, dropping BOS/EOS/PAD.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != PAD && i != BOS && i != EOS)
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_owned())
            .collect()
    }

    /// `(token, count)` in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.tokens.iter().map(String::as_str).zip(self.counts.iter().copied())
    }

    /// Rebuilds a vocabulary from [`Self::entries`] output.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut vocab = Vocabulary {
            to_id: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        for (token, count) in entries {
            let id = vocab.len();
            if token.is_empty() || vocab.contains(&token) {
                return Err(Error::Validation(format!("empty or duplicate token {token:?}")));
            }
            if id < SPECIALS.len() && token != SPECIALS[id] {
                return Err(Error::Validation(format!("id {id} is reserved for {}", SPECIALS[id])));
            }
            vocab.push(token, count);
        }
        if vocab.len() < SPECIALS.len() {
            return Err(Error::Validation("vocabulary is missing reserved tokens".into()));
        }
        Ok(vocab)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, (token, count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            out.push_str(&format!("{token}\t{id}\t{count}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut vocab = Vocabulary {
            to_id: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        for (i, row) in lines(text).into_iter().enumerate() {
            let fields: Vec<&str> = row.split('\t').collect();
            let [token, id, count] = fields[..] else {
                return Err(bad(i + 1, format!("expected 3 fields, found {}", fields.len())));
            };
            let id: usize = id.parse().map_err(|_| bad(i + 1, format!("bad id {id:?}")))?;
            let count: u64 = count
                .parse()
                .map_err(|_| bad(i + 1, format!("bad count {count:?}")))?;
            if id != vocab.len() {
                return Err(bad(i + 1, format!("expected id {}, found {id}", vocab.len())));
            }
            if token.is_empty() || vocab.contains(token) {
                return Err(bad(i + 1, format!("empty or duplicate token {token:?}")));
            }
            if id < SPECIALS.len() && token != SPECIALS[id] {
                return Err(bad(i + 1, format!("id {id} is reserved for {}", SPECIALS[id])));
            }
            vocab.push(token.to_owned(), count);
        }
        if vocab.len() < SPECIALS.len() {
            return Err(Error::Validation(format!(
                "{}: vocabulary is missing reserved tokens",
                path.display()
            )));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&read_utf8(path)?, path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub dev_fraction_of_rest: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            dev_fraction_of_rest: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    /// (train, dev, test) sizes for a corpus of `n` pairs; rounding is half-up.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let round = |x: f64| (x + 0.5).floor() as usize;
        let test = round(n as f64 * self.test_fraction);
        let dev = round((n - test) as f64 * self.dev_fraction_of_rest);
        (n - test - dev, dev, test)
    }
}

pub const MIN_SPLIT_PAIRS: usize = 10;

/// Shuffles deterministically by `spec.seed` and partitions into train, dev and test.
/// Each part keeps the original pair ids.
pub fn split_corpus(
    corpus: &ParallelCorpus,
    spec: &SplitSpec,
) -> Result<(ParallelCorpus, ParallelCorpus, ParallelCorpus)> {
    for (name, f) in [
        ("test_fraction", spec.test_fraction),
        ("dev_fraction_of_rest", spec.dev_fraction_of_rest),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} must be in (0, 1), got {f}")));
        }
    }
    if corpus.len() < MIN_SPLIT_PAIRS {
        return Err(Error::CorpusTooSmall {
            actual: corpus.len(),
            required: MIN_SPLIT_PAIRS,
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let (train_n, dev_n, _) = spec.sizes(corpus.len());
    let take = |name: &str, idx: &[usize]| ParallelCorpus {
        name: format!("{}.{name}", corpus.name),
        pairs: idx.iter().map(|&i| corpus.pairs[i].clone()).collect(),
    };
    Ok((
        take("train", &order[..train_n]),
        take("dev", &order[train_n..train_n + dev_n]),
        take("test", &order[train_n + dev_n..]),
    ))
}

/// Fraction of non-special token occurrences whose surface form is not in `vocab`.
pub fn oov_rate<'a, I>(sentences: I, vocab: &Vocabulary) -> Result<f64>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let (mut total, mut unknown) = (0usize, 0usize);
    for token in sentences.into_iter().flatten() {
        if is_special(token) {
            continue;
        }
        total += 1;
        if !vocab.contains(token) {
            unknown += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("oov rate of an empty token sequence"));
    }
    Ok(unknown as f64 / total as f64)
}

/// Writes `text` atomically enough for our purposes: create parent dirs, then write.
pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_whitespace() {
        assert_eq!(tokenize("flu shot ."), vec!["flu", "shot", "."]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
    }

    #[test]
    fn tokenize_split_punct() {
        assert_eq!(tokenize_with("shot.", true), vec!["shot", "."]);
        assert_eq!(tokenize_with("(hello),", true), vec!["(", "hello", ")", ","]);
        assert_eq!(tokenize_with("... ok", true), vec!["...", "ok"]);
        assert_eq!(tokenize_with("shot.", false), vec!["shot."]);
    }

    #[test]
    fn vocabulary_order_and_threshold() {
        let sents = [toks("a b"), toks("a")];
        let v = Vocabulary::build(sents.iter().map(|s| s.as_slice()), 1);
        assert_eq!(v.len(), 6);
        assert_eq!(v.get("a"), Some(4));
        assert_eq!(v.get("b"), Some(5));
        assert_eq!(v.count("a"), 2);

        let v = Vocabulary::build([toks("a b")].iter().map(|s| s.as_slice()), 2);
        assert_eq!(v.len(), 4);
        assert_eq!(v.tokens(), &SPECIALS.map(String::from));
    }

    #[test]
    fn vocabulary_ties_are_lexicographic() {
        let v = Vocabulary::build([toks("c b a")].iter().map(|s| s.as_slice()), 1);
        assert_eq!(&v.tokens()[4..], &["a", "b", "c"]);
    }

    #[test]
    fn encode_sentence_cases() {
        let v = Vocabulary::build([toks("a b"), toks("a")].iter().map(|s| s.as_slice()), 1);
        assert_eq!(v.encode(&toks("a"), true), vec![1, 4, 2]);
        assert_eq!(v.encode(&toks("zzz"), false), vec![UNK]);
        assert_eq!(v.encode(&[], true), vec![BOS, EOS]);
        assert_eq!(v.decode(&v.encode(&toks("b a"), true)), toks("b a"));
    }

    #[test]
    fn vocabulary_tsv_round_trip() {
        let v = Vocabulary::build([toks("x y y z")].iter().map(|s| s.as_slice()), 1);
        let back = Vocabulary::from_tsv(&v.to_tsv(), Path::new("v.tsv")).unwrap();
        assert_eq!(v, back);
        assert!(v.to_tsv().starts_with("<pad>\t0\t0\n<s>\t1\t0\n"));
    }

    #[test]
    fn vocabulary_tsv_rejects_bad_rows() {
        let err = Vocabulary::from_tsv("<pad>\t0\n", Path::new("v.tsv")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
        let err = Vocabulary::from_tsv("a\t0\t1\n", Path::new("v.tsv")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn split_sizes() {
        let spec = SplitSpec::default();
        assert_eq!(spec.sizes(100), (72, 8, 20));
        assert_eq!(spec.sizes(3020), (2174, 242, 604));
    }

    #[test]
    fn split_is_deterministic_partition() {
        let corpus = ParallelCorpus::from_sentences(
            "c",
            (0..37).map(|i| (vec![format!("s{i}")], vec![format!("t{i}")])),
        );
        let spec = SplitSpec {
            seed: 9,
            ..Default::default()
        };
        let (a, b, c) = split_corpus(&corpus, &spec).unwrap();
        let again = split_corpus(&corpus, &spec).unwrap();
        assert_eq!((a.clone(), b.clone(), c.clone()), again);

        let mut ids: Vec<usize> = [&a, &b, &c]
            .iter()
            .flat_map(|p| p.pairs.iter().map(|x| x.id))
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_small_or_bad_spec() {
        let corpus = ParallelCorpus::from_text_pairs("c", &[("a", "b"); 9]);
        assert!(matches!(
            split_corpus(&corpus, &SplitSpec::default()),
            Err(Error::CorpusTooSmall { actual: 9, .. })
        ));
        let corpus = ParallelCorpus::from_text_pairs("c", &[("a", "b"); 10]);
        let spec = SplitSpec {
            test_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(split_corpus(&corpus, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn oov_rate_examples() {
        let v = Vocabulary::build([toks("a b")].iter().map(|s| s.as_slice()), 1);
        let test = [toks("a zzz a q")];
        assert_eq!(oov_rate(test.iter().map(|s| s.as_slice()), &v).unwrap(), 0.5);
        let test = [toks("a b </s>")];
        assert_eq!(oov_rate(test.iter().map(|s| s.as_slice()), &v).unwrap(), 0.0);
        assert!(oov_rate(std::iter::empty(), &v).is_err());
    }
}
