//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! stderr (uncaptured) before asserting, so a plain `cargo test` run shows
//! the verdict of every criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use noov::align::{ibm1_em_traced, EmConfig};
use noov::corpus::{
    is_special, oov_rate, split_corpus, ParallelCorpus, SplitSpec, Vocabulary, BOS, EOS, PAD,
};
use noov::decode::{
    beam_search, greedy_decode, mix_distributions, phrase_substitute, DecodeConfig,
};
use noov::eval::{bleu_corpus, length_bucket_report, BleuStats, Smoothing, DEFAULT_BUCKETS, MAX_N};
use noov::lexicon::Lexicon;
use noov::model::{
    fine_tune, train, train_with, CellObjective, DecoderState, Flow, Model, ModelCheckpoint,
    ModelConfig, PairObjective, Parameters,
};
use noov::neural::gradcheck::{grad_check, DEFAULT_EPSILON};
use noov::phrasebook::PhraseTable;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn report(n: usize, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance {n:>2} {verdict}  {title}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

// 1. Gradient correctness

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);

fn gradcheck_model(seed: u64) -> Model<f64> {
    let src = toks("a b c d e");
    let tgt = toks("v w x y z");
    let config = ModelConfig {
        hidden_size: 4,
        embedding_size: 3,
        seed,
        ..ModelConfig::default()
    };
    Model::new(
        config,
        Vocabulary::build([src.as_slice()], 1),
        Vocabulary::build([tgt.as_slice()], 1),
    )
    .unwrap()
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut cell = CellObjective::random(4, 5, 6, 11);
    let cell_err = grad_check(&mut cell, DEFAULT_EPSILON).max_relative_error;

    let mut step = PairObjective {
        model: gradcheck_model(21),
        source: vec![4, 5, 6],
        target: vec![],
    };
    let step_err = grad_check(&mut step, DEFAULT_EPSILON).max_relative_error;

    let mut pair = PairObjective {
        model: gradcheck_model(22),
        source: vec![4, 6],
        target: vec![5, 7],
    };
    let pair_err = grad_check(&mut pair, DEFAULT_EPSILON).max_relative_error;
    let elapsed = start.elapsed();

    let worst = cell_err.max(step_err).max(pair_err);
    let pass = worst < GRAD_TOLERANCE && elapsed < GRAD_BUDGET;
    report(
        1,
        "gradient correctness",
        pass,
        &format!(
            "max rel err cell {cell_err:.2e}, decode step {step_err:.2e}, 2-token pair {pair_err:.2e} \
             (< {GRAD_TOLERANCE:e}); {:.1}s (< {}s)",
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    );
    assert!(pass);
}

// 2. EM correctness

const EM_TOLERANCE: f64 = 1e-9;
const EM_ITERATIONS: usize = 50;
const EM_BUDGET: Duration = Duration::from_secs(10);
/// Relative slack for log-likelihood comparisons once EM has converged to
/// machine precision.
const LL_SLACK: f64 = 1e-12;

const NULL: &str = "\u{0}NULL";

/// Textbook IBM Model 1 with a NULL source word: nested loops over string
/// keys, uniform start over the target vocabulary. Returns t(f|e) and the
/// log-likelihood before each iteration and after the last one.
fn brute_force_em(
    pairs: &[(Vec<String>, Vec<String>)],
    iterations: usize,
) -> (BTreeMap<(String, String), f64>, Vec<f64>) {
    let targets: BTreeSet<&String> = pairs.iter().flat_map(|p| &p.1).collect();
    let mut sources: BTreeSet<String> = pairs.iter().flat_map(|p| p.0.clone()).collect();
    sources.insert(NULL.to_owned());
    let mut t = BTreeMap::new();
    for e in &sources {
        for f in &targets {
            t.insert((e.clone(), (*f).clone()), 1.0 / targets.len() as f64);
        }
    }
    let with_null = |src: &[String]| {
        let mut v = vec![NULL.to_owned()];
        v.extend_from_slice(src);
        v
    };
    let log_likelihood = |t: &BTreeMap<(String, String), f64>| {
        let mut ll = 0.0;
        for (src, tgt) in pairs {
            let es = with_null(src);
            for f in tgt {
                let z: f64 = es.iter().map(|e| t[&(e.clone(), f.clone())]).sum();
                ll += (z / es.len() as f64).ln();
            }
        }
        ll
    };
    let mut trace = Vec::new();
    for _ in 0..iterations {
        trace.push(log_likelihood(&t));
        let mut count: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut total: BTreeMap<String, f64> = BTreeMap::new();
        for (src, tgt) in pairs {
            let es = with_null(src);
            for f in tgt {
                let z: f64 = es.iter().map(|e| t[&(e.clone(), f.clone())]).sum();
                for e in &es {
                    let c = t[&(e.clone(), f.clone())] / z;
                    *count.entry((e.clone(), f.clone())).or_default() += c;
                    *total.entry(e.clone()).or_default() += c;
                }
            }
        }
        for ((e, f), v) in t.iter_mut() {
            *v = count.get(&(e.clone(), f.clone())).copied().unwrap_or(0.0) / total[e];
        }
    }
    trace.push(log_likelihood(&t));
    (t, trace)
}

fn em_agreement(pairs: &[(Vec<String>, Vec<String>)], iterations: usize) -> (f64, Vec<f64>) {
    let corpus = ParallelCorpus::from_sentences("em", pairs.to_vec());
    let cfg = EmConfig {
        iterations,
        ..EmConfig::default()
    };
    let run = ibm1_em_traced(&corpus, &cfg).unwrap();
    let (oracle, oracle_ll) = brute_force_em(pairs, iterations);
    let mut worst: f64 = 0.0;
    for ((e, f), p) in &oracle {
        if e != NULL {
            worst = worst.max((run.lexicon.prob(e, f) - p).abs());
        }
    }
    for (a, b) in run.log_likelihood.iter().zip(&oracle_ll) {
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    }
    (worst, run.log_likelihood)
}

fn non_decreasing(ll: &[f64]) -> bool {
    ll.windows(2).all(|w| w[1] >= w[0] - LL_SLACK * w[0].abs().max(1.0))
}

#[test]
fn criterion_02_em_correctness() {
    let start = Instant::now();
    let toy: Vec<(Vec<String>, Vec<String>)> = [
        ("the house", "das haus"),
        ("the book", "das buch"),
        ("a book", "ein buch"),
    ]
    .iter()
    .map(|(s, t)| (toks(s), toks(t)))
    .collect();
    let (toy_err, toy_ll) = em_agreement(&toy, EM_ITERATIONS);
    let corpus = ParallelCorpus::from_sentences("toy", toy.clone());
    let lex = ibm1_em_traced(
        &corpus,
        &EmConfig {
            iterations: EM_ITERATIONS,
            ..EmConfig::default()
        },
    )
    .unwrap()
    .lexicon;
    let das_the = lex.prob("the", "das");

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut random_err: f64 = 0.0;
    let mut monotone = non_decreasing(&toy_ll);
    for _ in 0..10 {
        let n = rng.gen_range(1..=20);
        let pairs: Vec<(Vec<String>, Vec<String>)> = (0..n)
            .map(|_| {
                let mut side = |p: &str| -> Vec<String> {
                    (0..rng.gen_range(1..=6))
                        .map(|_| format!("{p}{}", rng.gen_range(0..8)))
                        .collect()
                };
                (side("s"), side("t"))
            })
            .collect();
        let (err, ll) = em_agreement(&pairs, EM_ITERATIONS);
        random_err = random_err.max(err);
        monotone &= non_decreasing(&ll);
    }
    let elapsed = start.elapsed();
    let pass = toy_err < EM_TOLERANCE
        && random_err < EM_TOLERANCE
        && monotone
        && das_the > 0.9
        && elapsed < EM_BUDGET;
    report(
        2,
        "EM correctness",
        pass,
        &format!(
            "toy corpus max |Δ| vs oracle {toy_err:.1e}, 10 random corpora {random_err:.1e} \
             (< {EM_TOLERANCE:e}); t(das|the) = {das_the:.6}; log-likelihood non-decreasing: {monotone}; \
             {:.2}s (< {}s)",
            elapsed.as_secs_f64(),
            EM_BUDGET.as_secs()
        ),
    );
    assert!(pass);
}

// 3. Degeneration equivalence

struct RefHyp {
    ids: Vec<usize>,
    score: f64,
    state: DecoderState<f64>,
    eos: bool,
}

/// Plain length-synchronous beam search over the decoder's own softmax.
fn reference_beam(model: &Model<f64>, src: &[String], k: usize, max_len: usize) -> (Vec<usize>, f64) {
    let enc = model.encode(&model.encode_source(src)).unwrap();
    let mut live = vec![RefHyp {
        ids: vec![],
        score: 0.0,
        state: enc.init.clone(),
        eos: false,
    }];
    let mut finished: Vec<RefHyp> = Vec::new();
    while !live.is_empty() && finished.len() < k {
        let mut cands: Vec<(f64, usize, usize, f64, DecoderState<f64>)> = Vec::new();
        for (parent, h) in live.iter().enumerate() {
            let prev = h.ids.last().copied().unwrap_or(BOS);
            let out = model.decode_step(&h.state, prev, &enc).unwrap();
            for (id, &p) in out.distribution.iter().enumerate() {
                if id == PAD || id == BOS || p == 0.0 {
                    continue;
                }
                let logp = p.ln();
                cands.push((h.score + logp, parent, id, logp, out.state.clone()));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(k - finished.len());
        let mut next = Vec::new();
        for (_, parent, id, logp, state) in cands {
            let mut ids = live[parent].ids.clone();
            let score = live[parent].score + logp;
            if id == EOS {
                finished.push(RefHyp { ids, score, state, eos: true });
                continue;
            }
            ids.push(id);
            let h = RefHyp { ids, score, state, eos: false };
            if h.ids.len() >= max_len {
                finished.push(h);
            } else {
                next.push(h);
            }
        }
        live = next;
    }
    let norm = |h: &RefHyp| h.score / (h.ids.len() + usize::from(h.eos)).max(1) as f64;
    let best = finished
        .iter()
        .fold(None::<&RefHyp>, |best, h| match best {
            Some(b) if norm(b) >= norm(h) => Some(b),
            _ => Some(h),
        })
        .expect("at least one hypothesis");
    (best.ids.clone(), best.score)
}

fn random_model(seed: u64, scale: f64) -> Model<f64> {
    let src: Vec<String> = (0..9).map(|i| format!("s{i}")).collect();
    let tgt: Vec<String> = (0..9).map(|i| format!("t{i}")).collect();
    let config = ModelConfig {
        hidden_size: 8,
        embedding_size: 6,
        seed,
        ..ModelConfig::default()
    };
    let mut m = Model::new(
        config,
        Vocabulary::build([src.as_slice()], 1),
        Vocabulary::build([tgt.as_slice()], 1),
    )
    .unwrap();
    m.params = Parameters::init_with_scale(&m.params.dims(), seed, scale);
    m
}

#[test]
fn criterion_03_degeneration_equivalence() {
    let models = [
        random_model(1, 0.1),
        random_model(2, 0.1),
        random_model(3, 1.0),
        random_model(4, 1.5),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut lex = Lexicon::new();
    lex.insert("s1", vec![("t3".into(), 0.7), ("t5".into(), 0.3)]);
    let table = PhraseTable::from_pairs([(toks("s1 s2"), toks("t3 t4"))]).unwrap();
    let (mut beam_mismatch, mut greedy_mismatch) = (0, 0);
    for i in 0..100 {
        let model = &models[i % models.len()];
        let len = rng.gen_range(1..=8);
        let src: Vec<String> = (0..len)
            .map(|_| match rng.gen_range(0..11) {
                10 => "unseen".to_owned(),
                w => format!("s{}", w.min(8)),
            })
            .collect();
        let k = rng.gen_range(1..=8);
        let cfg = DecodeConfig {
            beam_size: k,
            alpha: 0.0,
            repetition_fix: false,
            ..DecodeConfig::default()
        };
        let out = beam_search(model, &src, &lex, Some(&table), &cfg).unwrap();
        let (ids, score) = reference_beam(model, &src, k, cfg.max_len_for(src.len()));
        let tokens = model.tgt_vocab.decode(&ids);
        if out.best.ids != ids || out.best.tokens != tokens || (out.best.score - score).abs() > 1e-12 {
            beam_mismatch += 1;
        }

        let one = DecodeConfig { beam_size: 1, ..cfg };
        let b1 = beam_search(model, &src, &lex, Some(&table), &one).unwrap().best;
        let g = greedy_decode(model, &src, &lex, Some(&table), &one).unwrap();
        if b1 != g {
            greedy_mismatch += 1;
        }
    }
    let pass = beam_mismatch == 0 && greedy_mismatch == 0;
    report(
        3,
        "degeneration equivalence",
        pass,
        &format!(
            "alpha=0, no repair: {beam_mismatch}/100 differ from the reference beam; \
             beam=1 vs greedy: {greedy_mismatch}/100 differ"
        ),
    );
    assert!(pass);
}

// 4. Mixture arithmetic

const MIX_TOLERANCE: f64 = 1e-15;

#[test]
fn criterion_04_mixture_arithmetic() {
    let m = mix_distributions(&[0.5, 0.5], &[1.0, 0.0], 0.2).unwrap();
    let example = (m[0] - 0.6).abs() <= MIX_TOLERANCE && (m[1] - 0.4).abs() <= MIX_TOLERANCE;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut boundaries = true;
    for _ in 0..100 {
        let n = rng.gen_range(1..20);
        let mut draw = || {
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (d, l) = (draw(), draw());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        boundaries &= bits(&mix_distributions(&d, &l, 0.0).unwrap()) == bits(&d);
        boundaries &= bits(&mix_distributions(&d, &l, 1.0).unwrap()) == bits(&l);
    }
    let rejects = mix_distributions(&[1.0], &[1.0], 1.5).is_err();
    let pass = example && boundaries && rejects;
    report(
        4,
        "mixture arithmetic",
        pass,
        &format!(
            "alpha=0.2 example -> [{:.17}, {:.17}] (±{MIX_TOLERANCE:e}); alpha in {{0,1}} bit-exact on 100 \
             random pairs: {boundaries}; alpha=1.5 rejected: {rejects}",
            m[0], m[1]
        ),
    );
    assert!(pass);
}

// 5. Repetition fix

/// Target-side token ids: specials 0-3, then casa, de, la.
fn rigged_checkpoint() -> ModelCheckpoint {
    let src = toks("the house");
    let tgt = toks("la casa de");
    let sv = Vocabulary::build([src.as_slice()], 1);
    let tv = Vocabulary::build([tgt.as_slice()], 1);
    let config = ModelConfig {
        hidden_size: 4,
        embedding_size: 3,
        ..ModelConfig::default()
    };
    let mut params = Parameters::<f32>::zeros(&config.dims(sv.len(), tv.len()));
    // Every weight is zero, so hidden states stay at zero and the output
    // layer reduces to its bias: "la" dominates at every step.
    params.output.b.as_mut_slice()[tv.id("la")] = 8.0;
    ModelCheckpoint::new(Model::from_parts(config, sv, tv, params).unwrap())
}

/// Next token of a target phrase whose source phrase occurs in `src` and
/// which contains `prev`, preferring the longest source phrase.
fn hand_continuation(entries: &[(&str, &str)], src: &[String], prev: &str) -> Option<String> {
    let mut best: Option<(usize, String)> = None;
    for (s, t) in entries {
        let (sp, tp) = (toks(s), toks(t));
        let occurs = src.windows(sp.len()).any(|w| w == sp.as_slice());
        let pos = tp.iter().position(|w| w == prev);
        if let (true, Some(pos)) = (occurs, pos) {
            if let Some(next) = tp.get(pos + 1) {
                if best.as_ref().map_or(true, |(len, _)| sp.len() > *len) {
                    best = Some((sp.len(), next.clone()));
                }
            }
        }
    }
    best.map(|(_, w)| w)
}

/// Steps the decoder one token at a time, applying the repair rule by hand.
fn hand_decode(model: &Model<f32>, src: &[String], entries: &[(&str, &str)], max_len: usize) -> Vec<String> {
    let enc = model.encode(&model.encode_source(src)).unwrap();
    let mut state = enc.init.clone();
    let (mut prev_id, mut prev): (usize, Option<String>) = (BOS, None);
    let mut out = Vec::new();
    while out.len() < max_len {
        let step = model.decode_step(&state, prev_id, &enc).unwrap();
        let mut top = EOS;
        for (id, p) in step.distribution.iter().enumerate() {
            if id != PAD && id != BOS && *p > step.distribution[top] {
                top = id;
            }
        }
        if top == EOS {
            break;
        }
        let mut word = model.tgt_vocab.token(top).unwrap().to_owned();
        if prev.as_deref() == Some(word.as_str()) {
            if let Some(rep) = hand_continuation(entries, src, &word) {
                word = rep;
            }
        }
        prev_id = model.tgt_vocab.id(&word);
        prev = Some(word.clone());
        out.push(word);
        state = step.state;
    }
    out
}

#[test]
fn criterion_05_repetition_fix() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rigged.ckpt");
    rigged_checkpoint().save(&path).unwrap();
    let model = ModelCheckpoint::load(&path).unwrap().model;

    let entries = [("the house", "la casa")];
    let table = PhraseTable::from_pairs(entries.iter().map(|(s, t)| (toks(s), toks(t)))).unwrap();
    let src = toks("the house");
    let none = Lexicon::new();
    let max_len = DecodeConfig::default().max_len_for(src.len());

    let greedy_cfg = DecodeConfig {
        beam_size: 1,
        alpha: 0.0,
        ..DecodeConfig::default()
    };
    let hand = hand_decode(&model, &src, &entries, max_len);
    let greedy = greedy_decode(&model, &src, &none, Some(&table), &greedy_cfg).unwrap();
    let default = beam_search(&model, &src, &none, Some(&table), &DecodeConfig::default())
        .unwrap()
        .best;
    let off = greedy_decode(
        &model,
        &src,
        &none,
        Some(&table),
        &DecodeConfig {
            repetition_fix: false,
            ..greedy_cfg.clone()
        },
    )
    .unwrap();

    let begins = default.tokens.len() >= 2 && default.tokens[..2] == ["la", "casa"];
    let repeats_only_without_repair = [&greedy.tokens, &default.tokens].iter().all(|t| {
        t.windows(2).all(|w| {
            w[0] != w[1] || is_special(&w[0]) || phrase_substitute(&w[0], &src, &table).is_none()
        })
    });
    let matches_hand = greedy.tokens == hand;
    let control = off.tokens.iter().all(|t| t == "la");
    let pass = begins && repeats_only_without_repair && matches_hand && control;
    report(
        5,
        "repetition fix",
        pass,
        &format!(
            "beam 8, alpha 0.2 -> \"{}\"; greedy equals hand-stepped oracle: {matches_hand}; \
             no repair-able consecutive repeats: {repeats_only_without_repair}; repair off -> \"{}\"",
            default.text(),
            off.text()
        ),
    );
    assert!(pass);
}

// 6. End-to-end learnability

const TOY_PAIRS: usize = 50;
const LEARN_EPOCHS: usize = 200;
const LEARN_BLEU: f64 = 0.90;
const LEARN_BUDGET: Duration = Duration::from_secs(600);

/// Sentences over `words` source words mapped token by token through a
/// fixed bijection onto target words.
fn substitution_corpus(
    name: &str,
    n: usize,
    words: usize,
    seed: u64,
    map: impl Fn(usize) -> usize,
    draw: impl Fn(&mut ChaCha8Rng) -> usize,
) -> ParallelCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n).map(|_| {
        let len = rng.gen_range(3..=6);
        let ids: Vec<usize> = (0..len).map(|_| draw(&mut rng) % words).collect();
        (
            ids.iter().map(|w| format!("s{w}")).collect(),
            ids.iter().map(|&w| format!("t{}", map(w))).collect(),
        )
    });
    ParallelCorpus::from_sentences(name, pairs.collect::<Vec<_>>())
}

fn model_bleu(model: &Model<f32>, corpus: &ParallelCorpus, cfg: &DecodeConfig) -> f64 {
    let none = Lexicon::new();
    let hyps: Vec<Vec<String>> = corpus
        .pairs
        .iter()
        .map(|p| beam_search(model, &p.source, &none, None, cfg).unwrap().best.tokens)
        .collect();
    let refs: Vec<Vec<String>> = corpus.targets().map(<[String]>::to_vec).collect();
    bleu_corpus(&hyps, &refs, MAX_N, Smoothing::None).unwrap().bleu
}

#[test]
fn criterion_06_end_to_end_learnability() {
    const WORDS: usize = 20;
    let corpus = substitution_corpus("toy", TOY_PAIRS, WORDS, 7, |w| (7 * w + 3) % WORDS, |r| r.gen());
    let config = ModelConfig {
        max_epochs: LEARN_EPOCHS,
        patience: LEARN_EPOCHS,
        ..ModelConfig::default()
    };
    let greedy = DecodeConfig {
        beam_size: 1,
        alpha: 0.0,
        repetition_fix: false,
        ..DecodeConfig::default()
    };
    let start = Instant::now();
    let mut reached: Option<(usize, f64)> = None;
    let mut last = 0.0;
    let outcome = train_with(config, &corpus, &corpus, |log, model| {
        last = model_bleu(model, &corpus, &greedy);
        if last >= LEARN_BLEU {
            reached = Some((log.epoch, last));
            Flow::Stop
        } else {
            Flow::Continue
        }
    })
    .unwrap();
    let elapsed = start.elapsed();
    let pass = reached.is_some() && elapsed < LEARN_BUDGET;
    let detail = match reached {
        Some((epoch, bleu)) => format!("train BLEU {bleu:.4} >= {LEARN_BLEU} at epoch {epoch}"),
        None => format!(
            "train BLEU {last:.4} < {LEARN_BLEU} after {} epochs",
            outcome.history.len()
        ),
    };
    report(
        6,
        "end-to-end learnability",
        pass,
        &format!(
            "{detail} (hidden 128, batch 32, lr 0.001, clip 5, dropout 0.2); {:.0}s (< {}s)",
            elapsed.as_secs_f64(),
            LEARN_BUDGET.as_secs()
        ),
    );
    assert!(pass);
}

// 7. Fine-tune workflow

#[test]
fn criterion_07_fine_tune_workflow() {
    const WORDS: usize = 16;
    const SHIFTED: usize = 10;
    let base = |w: usize| (7 * w + 3) % WORDS;
    // B keeps A's vocabulary but rotates the translations of the last six words.
    let shifted = move |w: usize| {
        if w < SHIFTED {
            base(w)
        } else {
            base(SHIFTED + (w - SHIFTED + 1) % (WORDS - SHIFTED))
        }
    };
    // Sentences are two or three two-word phrases from a per-domain inventory;
    // B's phrases all start with a rotated word.
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let inventory = |rng: &mut ChaCha8Rng, n: usize, lo: usize| -> Vec<[usize; 2]> {
        (0..n)
            .map(|_| [rng.gen_range(lo..WORDS), rng.gen_range(0..WORDS)])
            .collect()
    };
    let a_phrases = inventory(&mut rng, 12, 0);
    let b_phrases = inventory(&mut rng, 8, SHIFTED);
    let build = |name: &str, n: usize, phrases: &[[usize; 2]], map: &dyn Fn(usize) -> usize, rng: &mut ChaCha8Rng| {
        let pairs: Vec<(Vec<String>, Vec<String>)> = (0..n)
            .map(|_| {
                let k = rng.gen_range(2..=3);
                let ids: Vec<usize> = (0..k)
                    .flat_map(|_| phrases[rng.gen_range(0..phrases.len())])
                    .collect();
                (
                    ids.iter().map(|w| format!("s{w}")).collect(),
                    ids.iter().map(|&w| format!("t{}", map(w))).collect(),
                )
            })
            .collect();
        ParallelCorpus::from_sentences(name, pairs)
    };
    let a = build("A", 200, &a_phrases, &base, &mut rng);
    let b = build("B", 50, &b_phrases, &shifted, &mut rng);
    let spec = SplitSpec {
        test_fraction: 0.4,
        ..SplitSpec::default()
    };
    let (b_train, b_dev, b_test) = split_corpus(&b, &spec).unwrap();

    let config = ModelConfig {
        hidden_size: 64,
        embedding_size: 64,
        lr: 0.003,
        max_epochs: 200,
        patience: 200,
        ..ModelConfig::default()
    };
    let start = Instant::now();
    let pre = train(config.clone(), &a, &ParallelCorpus::default()).unwrap().checkpoint;
    let tuned = fine_tune(&pre, &config, &b_train, &b_dev).unwrap().checkpoint;
    let elapsed = start.elapsed();

    let cfg = DecodeConfig {
        alpha: 0.0,
        repetition_fix: false,
        ..DecodeConfig::default()
    };
    let a_only = model_bleu(&pre.model, &b_test, &cfg);
    let fine = model_bleu(&tuned.model, &b_test, &cfg);
    let pass = fine > a_only;
    report(
        7,
        "fine-tune workflow",
        pass,
        &format!(
            "BLEU on B test ({} pairs): A-only {:.2}, A then B {:.2} \
             (A: 200 pairs, B: 50 pairs, shared vocabulary; {:.0}s)",
            b_test.len(),
            100.0 * a_only,
            100.0 * fine,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

// 8. BLEU oracle

/// Independent BLEU from raw counts: geometric mean of p_n times the brevity penalty.
fn bleu_from_counts(stats: &BleuStats) -> f64 {
    let mut log_sum = 0.0;
    for (m, t) in stats.matches.iter().zip(&stats.totals) {
        if *m == 0 {
            return 0.0;
        }
        log_sum += (*m as f64 / *t as f64).ln();
    }
    let (c, r) = (stats.hyp_len as f64, stats.ref_len as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / stats.matches.len() as f64).exp()
}

#[test]
fn criterion_08_bleu_oracle() {
    let hyp = toks("the the the the the the the");
    let reference = toks("the cat is on the mat");
    // Clipped count: "the" occurs twice in the reference.
    let ref_the = reference.iter().filter(|w| *w == "the").count();
    let hyp_the = hyp.iter().filter(|w| *w == "the").count();
    let expected_p1 = hyp_the.min(ref_the) as f64 / hyp.len() as f64;
    let r = bleu_corpus(&[hyp.clone()], &[reference.clone()], MAX_N, Smoothing::None).unwrap();
    let p1_ok = r.precisions[0] == expected_p1 && expected_p1 == 2.0 / 7.0;

    let refs: Vec<Vec<String>> = [
        "the patient denies any fever",
        "take one tablet by mouth",
        "flu shot .",
        "he has a history of diabetes and high blood pressure and was seen today in the clinic for a follow up visit after his surgery last month",
    ]
    .iter()
    .map(|s| toks(s))
    .collect();
    let identity = bleu_corpus(&refs, &refs, MAX_N, Smoothing::None).unwrap().bleu == 1.0;

    let hyps: Vec<Vec<String>> = [
        "the patient denies fever",
        "take one tablet by mouth daily",
        "flu vaccine .",
        "he has a history of diabetes and blood pressure and was seen in the clinic for a follow up visit after surgery last month",
    ]
    .iter()
    .map(|s| toks(s))
    .collect();
    let src_lengths = [5, 12, 3, 34];
    let full = bleu_corpus(&hyps, &refs, MAX_N, Smoothing::None).unwrap();
    let buckets = length_bucket_report(&hyps, &refs, &src_lengths, &DEFAULT_BUCKETS, Smoothing::None).unwrap();
    let pooled = buckets.pooled();
    let counts_ok = pooled == full.stats;
    let recomputed = bleu_from_counts(&pooled);
    let bleu_ok = (recomputed - full.bleu).abs() < 1e-12;
    let total: usize = buckets.buckets.iter().map(|b| b.count).sum();

    let pass = p1_ok && identity && counts_ok && bleu_ok && total == hyps.len();
    report(
        8,
        "BLEU oracle",
        pass,
        &format!(
            "p1 = {}/{} = {:.6}; identical corpus BLEU exactly 1: {identity}; pooled bucket counts equal \
             corpus counts: {counts_ok}; BLEU from pooled counts {recomputed:.12} vs {:.12}",
            r.stats.matches[0], r.stats.totals[0], r.precisions[0], full.bleu
        ),
    );
    assert!(pass);
}

// 9. Determinism

fn noov(dir: &Path, threads: &str, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_noov"))
        .current_dir(dir)
        .env("NOOV_THREADS", threads)
        .args(args)
        .args(["--log", "warn"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "noov {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn hash_tree(root: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), hex);
            }
        }
    }
    out
}

fn pipeline(dir: &Path, threads: &str) -> Vec<u8> {
    let corpus = substitution_corpus("all", 60, 12, 9, |w| (5 * w + 1) % 12, |r| r.gen());
    corpus.write_parallel(&dir.join("all.src"), &dir.join("all.tgt")).unwrap();
    std::fs::write(dir.join("table.tsv"), "s1 s2\tt6 t11\ns3\tt4\n").unwrap();

    let mut stdout = Vec::new();
    let mut run = |args: &[&str]| stdout.extend(noov(dir, threads, args));
    run(&["prepare", "--src", "all.src", "--tgt", "all.tgt", "--out-dir", "data"]);
    run(&["align", "--src", "data/train.src", "--tgt", "data/train.tgt", "--out", "lex/lexicon.tsv"]);
    run(&["phrasebook", "validate", "table.tsv"]);
    let small = ["--hidden-size", "16", "--embedding-size", "16", "--max-epochs", "4", "--lr", "0.01"];
    let mut train_args = vec![
        "train", "--train-src", "data/train.src", "--train-tgt", "data/train.tgt", "--dev-src",
        "data/dev.src", "--dev-tgt", "data/dev.tgt", "--out-dir", "model",
    ];
    train_args.extend(small);
    run(&train_args);
    run(&[
        "finetune", "--init-checkpoint", "model/model.ckpt", "--train-src", "data/dev.src",
        "--train-tgt", "data/dev.tgt", "--out-dir", "tuned", "--max-epochs", "2",
    ]);
    let resources = [
        "--checkpoint", "model/model.ckpt", "--lexicon", "lex/lexicon.tsv", "--context-src",
        "data/train.src", "--context-tgt", "data/train.tgt", "--phrase-table", "table.tsv",
    ];
    let mut translate = vec![
        "translate", "--input", "data/test.src", "--output", "out/test.hyp", "--scores",
        "out/test.scores.tsv",
    ];
    translate.extend(resources);
    run(&translate);
    run(&[
        "evaluate", "--hyp", "out/test.hyp", "--ref", "data/test.tgt", "--src", "data/test.src",
        "--out-dir", "eval",
    ]);
    let mut tune = vec!["tune-alpha", "--dev-src", "data/dev.src", "--dev-tgt", "data/dev.tgt", "--out-dir", "tune"];
    tune.extend(resources);
    run(&tune);
    stdout
}

#[test]
fn criterion_09_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = pipeline(a.path(), "1");
    let out_b = pipeline(b.path(), "4");
    let (ha, hb) = (hash_tree(a.path()), hash_tree(b.path()));
    let differing: Vec<String> = ha
        .keys()
        .chain(hb.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| ha.get(*k) != hb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let pass = differing.is_empty() && out_a == out_b && ha.len() > 20;
    report(
        9,
        "determinism",
        pass,
        &format!(
            "prepare/align/phrasebook/train/finetune/translate/evaluate/tune-alpha run twice \
             (1 vs 4 threads): {} files hashed, {} differ {:?}; stdout identical: {}",
            ha.len(),
            differing.len(),
            differing,
            out_a == out_b
        ),
    );
    assert!(pass);
}

// 10. OOV statistic

#[test]
fn criterion_10_oov_statistic() {
    let seen: Vec<String> = (0..744).map(|i| format!("k{i}")).collect();
    let vocab = Vocabulary::build([seen.as_slice()], 1);
    let mut tokens: Vec<String> = seen.clone();
    tokens.extend((0..256).map(|i| format!("u{i}")));
    tokens.shuffle(&mut ChaCha8Rng::seed_from_u64(10));
    let sentences: Vec<Vec<String>> = tokens.chunks(10).map(<[String]>::to_vec).collect();
    let rate = oov_rate(sentences.iter().map(Vec::as_slice), &vocab).unwrap();
    let pass = rate == 0.256;
    report(
        10,
        "OOV statistic",
        pass,
        &format!("{} of {} tokens unseen -> oov_rate {rate}", 256, tokens.len()),
    );
    assert!(pass);
}
