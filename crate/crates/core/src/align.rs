//! Lexicon induction with IBM Model 1 EM, globally over a corpus or locally
//! over the pairs that share a word with the sentence being translated.

use std::collections::{HashMap, HashSet};

use crate::corpus::{is_special, ParallelCorpus};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig {
    pub iterations: usize,
    /// Add-λ smoothing over the targets that co-occur with each source token.
    pub additive_smoothing: f64,
    /// Adds a synthetic NULL source token to every pair.
    pub null_word: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            iterations: 20,
            additive_smoothing: 0.0,
            null_word: true,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("EM needs at least one iteration".into()));
        }
        if !(self.additive_smoothing >= 0.0) {
            return Err(Error::Config("smoothing must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Result of an EM run: the lexicon plus the corpus log-likelihood under the
/// initial parameters and after every iteration (`iterations + 1` values).
#[derive(Clone, Debug)]
pub struct EmRun {
    pub lexicon: Lexicon,
    pub log_likelihood: Vec<f64>,
}

/// Estimates p(target | source) with IBM Model 1.
pub fn ibm1_em(corpus: &ParallelCorpus, cfg: &EmConfig) -> Result<Lexicon> {
    ibm1_em_traced(corpus, cfg).map(|run| run.lexicon)
}

pub fn ibm1_em_traced(corpus: &ParallelCorpus, cfg: &EmConfig) -> Result<EmRun> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("EM over an empty corpus"));
    }
    let pairs: Vec<(&[String], &[String])> = corpus
        .pairs
        .iter()
        .map(|p| (p.source.as_slice(), p.target.as_slice()))
        .collect();
    run_em(&pairs, cfg)
}

const NULL_ID: u32 = 0;

/// Interned corpus: every (source position, target position) link of every
/// pair points at a slot of the translation table.
struct Links {
    sources: Vec<String>,
    targets: Vec<String>,
    /// (source id, target id) of each table slot.
    slots: Vec<(u32, u32)>,
    /// Per pair: (source length incl. NULL, target length, offset into `links`).
    shape: Vec<(usize, usize, usize)>,
    /// Row-major by target position: `links[off + j * l + i]`.
    links: Vec<u32>,
}

impl Links {
    fn build(pairs: &[(&[String], &[String])], null_word: bool) -> Links {
        let mut source_ids: HashMap<&str, u32> = HashMap::new();
        let mut target_ids: HashMap<&str, u32> = HashMap::new();
        let mut sources = Vec::new();
        let mut targets = Vec::new();
        if null_word {
            sources.push(String::new());
        }
        let mut slot_ids: HashMap<(u32, u32), u32> = HashMap::new();
        let mut slots = Vec::new();
        let mut shape = Vec::with_capacity(pairs.len());
        let mut links = Vec::new();

        for (src, tgt) in pairs {
            let mut src_row: Vec<u32> = Vec::with_capacity(src.len() + 1);
            if null_word {
                src_row.push(NULL_ID);
            }
            for s in src.iter() {
                let id = *source_ids.entry(s.as_str()).or_insert_with(|| {
                    sources.push(s.clone());
                    (sources.len() - 1) as u32
                });
                src_row.push(id);
            }
            let offset = links.len();
            for t in tgt.iter() {
                let f = *target_ids.entry(t.as_str()).or_insert_with(|| {
                    targets.push(t.clone());
                    (targets.len() - 1) as u32
                });
                for &e in &src_row {
                    let slot = *slot_ids.entry((e, f)).or_insert_with(|| {
                        slots.push((e, f));
                        (slots.len() - 1) as u32
                    });
                    links.push(slot);
                }
            }
            shape.push((src_row.len(), tgt.len(), offset));
        }
        Links {
            sources,
            targets,
            slots,
            shape,
            links,
        }
    }

    /// Log-likelihood of the corpus under `t`, accumulating expected counts
    /// into `counts` when given.
    fn expectation(&self, t: &[f64], mut counts: Option<&mut [f64]>) -> f64 {
        let mut ll = 0.0;
        for &(l, m, off) in &self.shape {
            let norm = (l as f64).ln();
            for j in 0..m {
                let row = &self.links[off + j * l..off + (j + 1) * l];
                let z: f64 = row.iter().map(|&s| t[s as usize]).sum();
                ll += z.ln() - norm;
                if let Some(counts) = counts.as_deref_mut() {
                    for &s in row {
                        counts[s as usize] += t[s as usize] / z;
                    }
                }
            }
        }
        ll
    }
}

fn run_em(pairs: &[(&[String], &[String])], cfg: &EmConfig) -> Result<EmRun> {
    cfg.validate()?;
    let links = Links::build(pairs, cfg.null_word);
    let n_slots = links.slots.len();

    // Uniform over the target vocabulary.
    let mut t = vec![1.0 / links.targets.len().max(1) as f64; n_slots];
    let mut counts = vec![0.0; n_slots];
    let mut totals = vec![0.0; links.sources.len()];
    let mut support = vec![0usize; links.sources.len()];
    for &(e, _) in &links.slots {
        support[e as usize] += 1;
    }
    let smoothing = cfg.additive_smoothing;

    let mut log_likelihood = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..cfg.iterations {
        counts.iter_mut().for_each(|c| *c = 0.0);
        log_likelihood.push(links.expectation(&t, Some(&mut counts)));

        totals.iter_mut().for_each(|c| *c = 0.0);
        for (slot, &(e, _)) in links.slots.iter().enumerate() {
            totals[e as usize] += counts[slot];
        }
        for (slot, &(e, _)) in links.slots.iter().enumerate() {
            let e = e as usize;
            let denom = totals[e] + smoothing * support[e] as f64;
            t[slot] = if denom > 0.0 {
                (counts[slot] + smoothing) / denom
            } else {
                0.0
            };
        }
    }
    log_likelihood.push(links.expectation(&t, None));

    let mut rows: Vec<Vec<(String, f64)>> = vec![Vec::new(); links.sources.len()];
    for (slot, &(e, f)) in links.slots.iter().enumerate() {
        rows[e as usize].push((links.targets[f as usize].clone(), t[slot]));
    }
    let mut lexicon = Lexicon::new();
    for (e, row) in rows.into_iter().enumerate() {
        if cfg.null_word && e == NULL_ID as usize {
            continue;
        }
        lexicon.insert(links.sources[e].clone(), row);
    }
    Ok(EmRun {
        lexicon,
        log_likelihood,
    })
}

/// Inverted index from source token to the positions of the pairs containing it.
#[derive(Clone, Debug, Default)]
pub struct CooccurrenceIndex {
    postings: HashMap<String, Vec<usize>>,
    pairs: usize,
}

impl CooccurrenceIndex {
    pub fn build(corpus: &ParallelCorpus) -> Self {
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (pos, pair) in corpus.pairs.iter().enumerate() {
            for token in &pair.source {
                let list = postings.entry(token.clone()).or_default();
                if list.last() != Some(&pos) {
                    list.push(pos);
                }
            }
        }
        CooccurrenceIndex {
            postings,
            pairs: corpus.len(),
        }
    }

    pub fn pairs_with(&self, token: &str) -> &[usize] {
        self.postings.get(token).map_or(&[], Vec::as_slice)
    }

    pub fn corpus_len(&self) -> usize {
        self.pairs
    }

    /// Positions of the pairs sharing at least one non-special token with
    /// `src`, capped at `max_pairs` by most shared tokens then smaller position.
    /// Returned in ascending position order.
    pub fn select(&self, src: &[String], max_pairs: usize) -> Vec<usize> {
        let distinct: HashSet<&str> = src
            .iter()
            .map(String::as_str)
            .filter(|t| !is_special(t))
            .collect();
        let mut shared: HashMap<usize, usize> = HashMap::new();
        for token in distinct {
            for &pos in self.pairs_with(token) {
                *shared.entry(pos).or_default() += 1;
            }
        }
        let mut ranked: Vec<(usize, usize)> = shared.into_iter().collect();
        if ranked.len() > max_pairs {
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(max_pairs);
        }
        let mut positions: Vec<usize> = ranked.into_iter().map(|(p, _)| p).collect();
        positions.sort_unstable();
        positions
    }
}

pub const DEFAULT_MAX_PAIRS: usize = 5000;

/// Lexicon estimated on the sub-corpus of pairs that share a word with `src`,
/// restricted to the tokens of `src`. Empty when no pair shares a word.
pub fn context_lexicon(
    src: &[String],
    corpus: &ParallelCorpus,
    idx: &CooccurrenceIndex,
    cfg: &EmConfig,
    max_pairs: usize,
) -> Result<Lexicon> {
    if idx.corpus_len() != corpus.len() {
        return Err(Error::Validation(format!(
            "co-occurrence index covers {} pairs, corpus has {}",
            idx.corpus_len(),
            corpus.len()
        )));
    }
    let selected = idx.select(src, max_pairs);
    if selected.is_empty() {
        return Ok(Lexicon::new());
    }
    let pairs: Vec<(&[String], &[String])> = selected
        .iter()
        .map(|&i| {
            let p = &corpus.pairs[i];
            (p.source.as_slice(), p.target.as_slice())
        })
        .collect();
    Ok(run_em(&pairs, cfg)?.lexicon.restrict(src))
}
