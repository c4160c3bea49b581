use bosc::backdoor::generate_default_triggers;
use bosc::data::{generate, synth_dataset, load_dataset, Preset, SplitCounts, Truth};
use bosc::inference::{classify_dataset, read_score_dump, write_score_dump, Decision, ScoreKind};
use bosc::metrics::summarize;
use bosc::training::{train, AugmentConfig, TrainConfig};
use bosc::{checkpoint, Mode, ModelConfig};

fn toy() -> bosc::data::SynthConfig {
    let mut cfg = Preset::S2Analog.config(11);
    cfg.shape = [3, 12, 12];
    cfg.counts = SplitCounts {
        train: 24,
        val: 6,
        test: 6,
        out_of_set_test: 6,
    };
    cfg
}

fn train_cfg(mode: Mode) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 30,
        base_lr: 3e-3,
        augment: AugmentConfig {
            jpeg_prob: 0.0,
            ..Default::default()
        },
        seed: 4,
        mode,
        ..Default::default()
    }
}

const MODEL: ModelConfig = ModelConfig {
    conv1: 4,
    conv2: 4,
    hidden: 8,
};

#[test]
fn toy_run_is_consistent_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let synth = toy();
    let manifest = synth_dataset(&synth, dir.path()).unwrap();
    let (_, data) = load_dataset(dir.path()).unwrap();
    assert_eq!(data, generate(&synth).unwrap());
    let n = manifest.num_classes();
    let triggers = generate_default_triggers(n, synth.shape, 1);

    let (clf, report) = train(&data, n, &MODEL, &train_cfg(Mode::Bosc), Some(&triggers)).unwrap();
    assert_eq!(report.epochs.len(), 3);
    assert!(report.compliance.is_some());
    assert!(report.epochs.iter().all(|e| e.matched_loss.is_some() && e.clean_loss.is_finite()));

    let path = dir.path().join("model.ckpt");
    checkpoint::save(&path, &clf).unwrap();
    let clf = checkpoint::load(&path).unwrap();
    assert_eq!(clf.trigger_digest.as_deref(), Some(triggers.digest().as_str()));

    let out = classify_dataset(&clf, &triggers, &data.test, ScoreKind::ClsM, 0.0, None).unwrap();
    assert!(out.failures.is_empty());
    let ids: Vec<_> = data.test.iter().map(|s| s.id.clone()).collect();
    assert_eq!(out.records.iter().map(|r| r.sample_id.clone()).collect::<Vec<_>>(), ids);

    let s = summarize(&out.records, n, 0.2, None).unwrap();
    assert!(s.ccr_at_fpr <= s.accuracy + 1e-12);
    assert!(s.au_oscr <= s.au_roc + 1e-12);
    assert!((0.0..=1.0).contains(&s.eer));
    for row in s.confusion.rows.iter().flatten() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    let mut csv = Vec::new();
    write_score_dump(&mut csv, &out.records, &out.decisions).unwrap();
    let back = read_score_dump(csv.as_slice(), n).unwrap();
    assert_eq!(back.len(), out.records.len());
    for ((r, d), (r0, d0)) in back.iter().zip(out.records.iter().zip(&out.decisions)) {
        assert_eq!((r.truth, r.y_star, r.xi), (r0.truth, r0.y_star, r0.xi));
        assert_eq!(d, d0);
    }
    assert!(back.iter().any(|(r, _)| r.truth == Truth::OutOfSet));
    assert!(back.iter().all(|(r, d)| r.xi > 0.0 || *d == Decision::Reject));
}

#[test]
fn training_is_deterministic_and_baseline_ignores_triggers() {
    let synth = toy();
    let data = generate(&synth).unwrap();
    let n = synth.num_in_set();
    let triggers = generate_default_triggers(n, synth.shape, 1);
    let run = |mode, t| {
        let (clf, report) = train(&data, n, &MODEL, &train_cfg(mode), t).unwrap();
        (checkpoint::encode(&clf).unwrap(), report.epochs)
    };
    assert_eq!(run(Mode::Bosc, Some(&triggers)), run(Mode::Bosc, Some(&triggers)));
    let (a, epochs) = run(Mode::Baseline, Some(&triggers));
    assert!(epochs.iter().all(|e| e.matched_loss.is_none() && e.mismatched_loss.is_none()));
    assert_eq!(a, run(Mode::Baseline, None).0);
    assert!(train(&data, n, &MODEL, &train_cfg(Mode::Bosc), None).is_err());
}
