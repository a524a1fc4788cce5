//! Corpus BLEU, length-bucketed BLEU and result tables.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_N: usize = 4;
/// Lower bounds of the default source-length buckets: 1-10, 11-20, 21-30, 31+.
pub const DEFAULT_BUCKETS: [usize; 4] = [1, 11, 21, 31];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// A zero n-gram precision becomes 1 / (2 · candidate n-gram count).
    AddOneForZero,
}

/// Sufficient statistics for corpus BLEU. Adding the statistics of two
/// disjoint sets gives the statistics of their union.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn new(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    /// Adds one hypothesis/reference pair using clipped n-gram counts.
    pub fn add_sentence<S: AsRef<str>>(&mut self, hyp: &[S], reference: &[S]) {
        self.hyp_len += hyp.len() as u64;
        self.ref_len += reference.len() as u64;
        for n in 1..=self.matches.len() {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            let clipped: usize = h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum();
            self.matches[n - 1] += clipped as u64;
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    pub fn report(&self, smoothing: Smoothing) -> BleuReport {
        let precisions: Vec<f64> = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| match (m, smoothing) {
                (0, Smoothing::AddOneForZero) => 1.0 / (2.0 * t.max(1) as f64),
                (_, _) if t == 0 => 0.0,
                _ => m as f64 / t as f64,
            })
            .collect();
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let brevity_penalty = if c == 0.0 {
            0.0
        } else if c >= r {
            1.0
        } else {
            (1.0 - r / c).exp()
        };
        let bleu = if precisions.iter().any(|&p| p == 0.0) || brevity_penalty == 0.0 {
            0.0
        } else {
            let mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / precisions.len() as f64;
            brevity_penalty * mean.exp()
        };
        BleuReport {
            bleu,
            precisions,
            brevity_penalty,
            stats: self.clone(),
        }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// In [0, 1].
    pub bleu: f64,
    /// Modified n-gram precisions p₁..pₙ after smoothing.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub stats: BleuStats,
}

impl BleuReport {
    pub fn hyp_len(&self) -> u64 {
        self.stats.hyp_len
    }

    pub fn ref_len(&self) -> u64 {
        self.stats.ref_len
    }

    /// Two-column TSV (`metric<TAB>value`).
    pub fn to_tsv(&self) -> String {
        let mut out = format!("bleu\t{:.2}\n", 100.0 * self.bleu);
        for (n, p) in self.precisions.iter().enumerate() {
            let _ = writeln!(
                out,
                "p{}\t{:.6}\t{}/{}",
                n + 1,
                p,
                self.stats.matches[n],
                self.stats.totals[n]
            );
        }
        let _ = writeln!(out, "brevity_penalty\t{:.6}", self.brevity_penalty);
        let _ = writeln!(out, "hyp_len\t{}", self.stats.hyp_len);
        let _ = writeln!(out, "ref_len\t{}", self.stats.ref_len);
        out
    }
}

impl std::fmt::Display for BleuReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ps: Vec<String> = self.precisions.iter().map(|p| format!("{:.1}", 100.0 * p)).collect();
        write!(
            f,
            "BLEU = {:.2}, {} (BP={:.3}, hyp_len={}, ref_len={})",
            100.0 * self.bleu,
            ps.join("/"),
            self.brevity_penalty,
            self.stats.hyp_len,
            self.stats.ref_len
        )
    }
}

fn check_aligned(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Alignment {
            source_lines: hyps,
            target_lines: refs,
        });
    }
    if hyps == 0 {
        return Err(Error::EmptyInput("BLEU over an empty corpus"));
    }
    Ok(())
}

fn stats_for<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], max_n: usize) -> BleuStats {
    let mut stats = BleuStats::new(max_n);
    for (h, r) in hyps.iter().zip(refs) {
        stats.add_sentence(h, r);
    }
    stats
}

/// Case-sensitive corpus BLEU over tokenized text with one reference per line.
pub fn bleu_corpus<S: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuReport> {
    check_aligned(hyps.len(), refs.len())?;
    if max_n == 0 {
        return Err(Error::Config("max_n must be positive".into()));
    }
    Ok(stats_for(hyps, refs, max_n).report(smoothing))
}

/// Smoothed BLEU of a single sentence, for diagnostics.
pub fn sentence_bleu<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    let mut stats = BleuStats::new(MAX_N);
    stats.add_sentence(hyp, reference);
    stats.report(Smoothing::AddOneForZero).bleu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    /// Inclusive source-length range; `upper` is `None` for the last bucket.
    pub lower: usize,
    pub upper: Option<usize>,
    pub count: usize,
    /// Omitted for empty buckets.
    pub report: Option<BleuReport>,
}

impl Bucket {
    pub fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("{}-{}", self.lower, u),
            None => format!("{}+", self.lower),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthBucketReport {
    pub boundaries: Vec<usize>,
    pub buckets: Vec<Bucket>,
}

/// BLEU computed separately within source-length buckets. `boundaries` are
/// the inclusive lower bounds, strictly increasing; every source length must
/// be at least the first one.
pub fn length_bucket_report<S: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<S>],
    src_lengths: &[usize],
    boundaries: &[usize],
    smoothing: Smoothing,
) -> Result<LengthBucketReport> {
    check_aligned(hyps.len(), refs.len())?;
    if src_lengths.len() != hyps.len() {
        return Err(Error::Alignment {
            source_lines: src_lengths.len(),
            target_lines: hyps.len(),
        });
    }
    if boundaries.is_empty() || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!(
            "bucket boundaries {boundaries:?} must be non-empty and strictly increasing"
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); boundaries.len()];
    for (i, &len) in src_lengths.iter().enumerate() {
        let Some(b) = boundaries.iter().rposition(|&lo| lo <= len) else {
            return Err(Error::Validation(format!(
                "line {}: source length {len} is below the first bucket boundary {}",
                i + 1,
                boundaries[0]
            )));
        };
        members[b].push(i);
    }
    let buckets = members
        .into_iter()
        .enumerate()
        .map(|(b, idx)| {
            let report = (!idx.is_empty()).then(|| {
                let mut stats = BleuStats::new(MAX_N);
                for &i in &idx {
                    stats.add_sentence(&hyps[i], &refs[i]);
                }
                stats.report(smoothing)
            });
            Bucket {
                lower: boundaries[b],
                upper: boundaries.get(b + 1).map(|u| u - 1),
                count: idx.len(),
                report,
            }
        })
        .collect();
    Ok(LengthBucketReport {
        boundaries: boundaries.to_vec(),
        buckets,
    })
}

impl LengthBucketReport {
    /// Statistics of all buckets pooled together.
    pub fn pooled(&self) -> BleuStats {
        let mut stats = BleuStats::new(MAX_N);
        for r in self.buckets.iter().filter_map(|b| b.report.as_ref()) {
            stats.merge(&r.stats);
        }
        stats
    }

    /// `bucket<TAB>count<TAB>bleu`, BLEU ×100 with two decimals, empty when
    /// the bucket has no sentences.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("bucket\tcount\tbleu\n");
        for b in &self.buckets {
            let bleu = b
                .report
                .as_ref()
                .map(|r| format!("{:.2}", 100.0 * r.bleu))
                .unwrap_or_default();
            let _ = writeln!(out, "{}\t{}\t{}", b.label(), b.count, bleu);
        }
        out
    }

    /// Bar chart of BLEU per bucket.
    pub fn to_svg(&self) -> String {
        let (w, h, pad, bottom) = (480.0, 300.0, 40.0, 40.0);
        let plot_h = h - pad - bottom;
        let n = self.buckets.len().max(1) as f64;
        let slot = (w - 2.0 * pad) / n;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        let _ = writeln!(out, "  <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">BLEU by source length</text>",
            w / 2.0
        );
        let axis_y = h - bottom;
        let _ = writeln!(
            out,
            "  <line x1=\"{pad}\" y1=\"{axis_y}\" x2=\"{}\" y2=\"{axis_y}\" stroke=\"black\"/>",
            w - pad
        );
        for (i, b) in self.buckets.iter().enumerate() {
            let x = pad + slot * i as f64;
            let bleu = b.report.as_ref().map_or(0.0, |r| r.bleu);
            let bar = plot_h * bleu;
            let _ = writeln!(
                out,
                "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\"/>",
                x + slot * 0.15,
                axis_y - bar,
                slot * 0.7,
                bar
            );
            let value = b
                .report
                .as_ref()
                .map_or_else(|| "n/a".to_owned(), |r| format!("{:.2}", 100.0 * r.bleu));
            let _ = writeln!(
                out,
                "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{value}</text>",
                x + slot / 2.0,
                axis_y - bar - 4.0
            );
            let _ = writeln!(
                out,
                "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{} (n={})</text>",
                x + slot / 2.0,
                axis_y + 16.0,
                b.label(),
                b.count
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// A results table rendered both as aligned text and as TSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    pub text: String,
    pub tsv: String,
}

/// Labels × BLEU·100 with two decimals, in the given order.
pub fn experiment_summary(runs: &[(String, BleuReport)]) -> Summary {
    let cells: Vec<(&str, String)> = runs
        .iter()
        .map(|(label, r)| (label.as_str(), format!("{:.2}", 100.0 * r.bleu)))
        .collect();
    let width = cells
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain(["system".len()])
        .max()
        .unwrap_or(0);
    let mut text = format!("{:<width$}  {:>6}\n", "system", "BLEU");
    let mut tsv = String::from("system\tBLEU\n");
    for (label, cell) in &cells {
        let _ = writeln!(text, "{label:<width$}  {cell:>6}");
        let _ = writeln!(tsv, "{label}\t{cell}");
    }
    Summary { text, tsv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn lines(xs: &[&str]) -> Vec<Vec<String>> {
        xs.iter().map(|s| tokenize(s)).collect()
    }

    #[test]
    fn identical_is_one() {
        let refs = lines(&["the cat sat on the mat", "a dog barked loudly today"]);
        let r = bleu_corpus(&refs, &refs, MAX_N, Smoothing::None).unwrap();
        assert_eq!(r.bleu, 1.0);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let h = lines(&["the the the the the the the"]);
        let r = lines(&["the cat is on the mat"]);
        let rep = bleu_corpus(&h, &r, MAX_N, Smoothing::None).unwrap();
        assert_eq!(rep.stats.matches[0], 2);
        assert_eq!(rep.stats.totals[0], 7);
        assert_eq!(rep.precisions[0], 2.0 / 7.0);
        assert_eq!(rep.bleu, 0.0);
    }

    #[test]
    fn no_overlap_is_zero_and_smoothing_applies() {
        let h = lines(&["x y z w"]);
        let r = lines(&["a b c d"]);
        assert_eq!(bleu_corpus(&h, &r, MAX_N, Smoothing::None).unwrap().bleu, 0.0);
        let s = bleu_corpus(&h, &r, MAX_N, Smoothing::AddOneForZero).unwrap();
        assert_eq!(s.precisions[0], 1.0 / 8.0);
        assert_eq!(s.precisions[3], 1.0 / 2.0);
        assert!(s.bleu > 0.0);
    }

    #[test]
    fn brevity_penalty() {
        let h = lines(&["a b c"]);
        let r = lines(&["a b c d e f"]);
        let rep = bleu_corpus(&h, &r, 1, Smoothing::None).unwrap();
        assert!((rep.brevity_penalty - (-1.0f64).exp()).abs() < 1e-15);
        assert!((rep.bleu - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let a = lines(&["a"]);
        assert!(matches!(
            bleu_corpus(&a, &[], MAX_N, Smoothing::None),
            Err(Error::Alignment { .. })
        ));
        let empty: Vec<Vec<String>> = vec![];
        assert!(bleu_corpus(&empty, &empty, MAX_N, Smoothing::None).is_err());
        assert!(length_bucket_report(&a, &a, &[1], &[1, 1], Smoothing::None).is_err());
        assert!(length_bucket_report(&a, &a, &[1], &[2], Smoothing::None).is_err());
    }

    #[test]
    fn buckets_partition_and_pool() {
        let h = lines(&["a b c d", "a b x d", "p q r s t", "m n"]);
        let r = lines(&["a b c d", "a b c d", "p q r s", "m n o"]);
        let src = [3, 12, 15, 40];
        let rep = length_bucket_report(&h, &r, &src, &DEFAULT_BUCKETS, Smoothing::None).unwrap();
        let counts: Vec<usize> = rep.buckets.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![1, 2, 0, 1]);
        assert!(rep.buckets[2].report.is_none());
        assert_eq!(rep.buckets[3].label(), "31+");
        assert_eq!(rep.buckets[0].label(), "1-10");
        let full = bleu_corpus(&h, &r, MAX_N, Smoothing::None).unwrap();
        assert_eq!(rep.pooled(), full.stats);
        assert!(rep.to_tsv().contains("21-30\t0\t\n"));
        assert!(rep.to_svg().starts_with("<svg"));

        let one = length_bucket_report(&h, &r, &src, &[1], Smoothing::None).unwrap();
        assert_eq!(one.buckets[0].report.as_ref().unwrap(), &full);
    }

    #[test]
    fn summary_table() {
        let mut stats = BleuStats::new(MAX_N);
        stats.add_sentence(&["a"], &["a"]);
        let mut report = stats.report(Smoothing::None);
        report.bleu = 0.3518;
        let s = experiment_summary(&[("NOOV/M".to_owned(), report)]);
        assert_eq!(s.tsv, "system\tBLEU\nNOOV/M\t35.18\n");
        assert!(s.text.contains("35.18"));
        let empty = experiment_summary(&[]);
        assert_eq!(empty.tsv, "system\tBLEU\n");
    }
}
