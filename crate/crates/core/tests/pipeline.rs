use std::fs;

use noov::corpus::{load_parallel, tokenize, ParallelCorpus};
use noov::decode::{translate_corpus, DecodeConfig};
use noov::lexicon::Lexicon;
use noov::model::{fine_tune, train, ModelCheckpoint, ModelConfig};
use noov::Error;

fn toy() -> ParallelCorpus {
    ParallelCorpus::from_text_pairs(
        "toy",
        &[
            ("a b", "x y"),
            ("b c", "y z"),
            ("c a", "z x"),
            ("a", "x"),
            ("b a c", "y x z"),
        ],
    )
}

fn small() -> ModelConfig {
    ModelConfig {
        hidden_size: 6,
        embedding_size: 5,
        batch_size: 2,
        max_epochs: 2,
        seed: 3,
        ..ModelConfig::default()
    }
}

#[test]
fn parallel_files_load_and_misalignment_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (s, t) = (dir.path().join("a.src"), dir.path().join("a.tgt"));
    fs::write(&s, "a b\n").unwrap();
    fs::write(&t, "x y z\n").unwrap();
    let c = load_parallel(&s, &t).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!((c.pairs[0].source.len(), c.pairs[0].target.len()), (2, 3));

    fs::write(&s, "a\nb\n").unwrap();
    fs::write(&t, "x\ny\nz\n").unwrap();
    let err = load_parallel(&s, &t).unwrap_err();
    assert!(matches!(err, Error::Alignment { source_lines: 2, target_lines: 3 }));
    assert!(err.to_string().contains("2 ≠ 3"));

    fs::write(&t, "x\n\n").unwrap();
    assert!(matches!(load_parallel(&s, &t), Err(Error::EmptyLine { line: 2, .. })));

    fs::write(&t, b"x\n\xff\n").unwrap();
    assert!(matches!(load_parallel(&s, &t), Err(Error::Decode { offset: 2, .. })));
}

#[test]
fn translate_corpus_keeps_line_count_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = train(small(), &toy(), &ParallelCorpus::default()).unwrap();
    let model = outcome.checkpoint.model;
    let cfg = DecodeConfig::default();
    let lex = Lexicon::new();

    let input = dir.path().join("in.txt");
    let out = dir.path().join("out.txt");
    let scores = dir.path().join("scores.tsv");
    fs::write(&input, "").unwrap();
    let t = translate_corpus(&model, &input, &lex, None, &cfg, &out, Some(&scores)).unwrap();
    assert!(t.is_empty());
    assert_eq!(fs::read_to_string(&out).unwrap(), "");

    fs::write(&input, "a b\nc\n").unwrap();
    translate_corpus(&model, &input, &lex, None, &cfg, &out, Some(&scores)).unwrap();
    let first = (fs::read(&out).unwrap(), fs::read(&scores).unwrap());
    assert_eq!(String::from_utf8_lossy(&first.0).lines().count(), 2);
    let rows: Vec<String> = String::from_utf8_lossy(&first.1).lines().map(str::to_owned).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("2\t"));

    translate_corpus(&model, &input, &lex, None, &cfg, &out, Some(&scores)).unwrap();
    assert_eq!(first, (fs::read(&out).unwrap(), fs::read(&scores).unwrap()));

    let missing = dir.path().join("missing.txt");
    let err = translate_corpus(&model, &missing, &lex, None, &cfg, &out, None).unwrap_err();
    assert!(err.to_string().contains("missing.txt"));
}

#[test]
fn checkpoint_files_round_trip_and_fine_tune_leaves_them_alone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("model.ckpt");
    let ck = train(small(), &toy(), &toy()).unwrap().checkpoint;
    ck.save(&path).unwrap();
    let before = fs::read(&path).unwrap();

    let loaded = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(loaded.meta, ck.meta);
    let probe = loaded.model.encode_source(&tokenize("a b c"));
    let target = loaded.model.encode_target(&tokenize("x y"));
    assert_eq!(
        loaded.model.teacher_forced(&probe, &target).unwrap(),
        ck.model.teacher_forced(&probe, &target).unwrap()
    );

    let more = ParallelCorpus::from_text_pairs("more", &[("a c", "x z"), ("d", "w")]);
    let tuned = fine_tune(&loaded, &small(), &more, &toy()).unwrap();
    assert_eq!(fs::read(&path).unwrap(), before);
    assert!(tuned.checkpoint.meta.dev_loss.unwrap() <= ck.meta.dev_loss.unwrap() + 1e-12);
}

#[test]
fn training_is_bit_reproducible() {
    let a = train(small(), &toy(), &toy()).unwrap().checkpoint.to_bytes();
    let b = train(small(), &toy(), &toy()).unwrap().checkpoint.to_bytes();
    assert_eq!(a, b);
}
