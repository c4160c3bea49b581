//! Command implementations. Runs live under `<output root>/<report.out_dir>/<name>/`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bosc::backdoor::{generate_default_triggers, load_trigger_dir, TriggerSet};
use bosc::data::{load_dataset, read_manifest, synth_dataset, Dataset, Manifest, ProcessingOp, Sample, Truth};
use bosc::inference::{decide, probe_samples, records_from_probes, write_score_dump, Probe, ScoreKind};
use bosc::metrics::{roc_curve, summarize, EvalSummary};
use bosc::training::{train, TrainReport};
use bosc::{checkpoint, Classifier, Mode};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ReportFormat};
use crate::{Cli, CliError, Command, Common};

pub const CONFIG_FILE: &str = "config.toml";
pub const MODEL_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "train_report.toml";
pub const TIMING_FILE: &str = "timing.toml";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const TRIGGER_DIR: &str = "triggers";
pub const SUMMARY_FILE: &str = "summary.csv";

const SUMMARY_HEADER: &str = "score,accuracy,au_roc,au_oscr,eer,target_fpr,nu,fpr_at_nu,tpr_at_fpr,ccr_at_fpr,evaluated,failed";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let root = cli.output_root.unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::GenData { common, preset, out } => {
            let mut cfg = load_config(&common)?;
            if let Some(p) = preset {
                cfg.dataset.preset = p.into();
                cfg.dataset.synth = None;
            }
            if let Some(seed) = common.seed {
                cfg.dataset.seed = seed;
                if let Some(s) = cfg.dataset.synth.as_mut() {
                    s.seed = seed;
                }
            }
            cfg.validate()?;
            let dir = resolve(&root, out.as_deref().unwrap_or(&cfg.dataset.root));
            let manifest = synth_dataset(&cfg.dataset.synth_config(), &dir)?;
            println!("{} ({} in-set classes, digest {})", dir.display(), manifest.num_classes(), &manifest.digest[..12]);
            Ok(())
        }
        Command::Train { common, mode, name } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = mode {
                cfg.train.mode = m.into();
            }
            if let Some(seed) = common.seed {
                cfg.train.seed = seed;
            }
            cfg.validate()?;
            let name = name.unwrap_or_else(|| format!("{}-seed{}", cfg.train.mode, cfg.train.seed));
            if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
                return Err(CliError::Usage(format!("invalid run name {name:?}")));
            }
            let dir = resolve(&root, &cfg.report.out_dir).join(name);
            train_run(&root, &cfg, &dir)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Eval { run, scores, fpr, robustness } => {
            let dir = resolve(&root, &run);
            let mut cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
            if let Some(s) = scores {
                cfg.inference.scores = s.kinds();
            }
            if let Some(f) = fpr {
                cfg.inference.target_fpr = f;
            }
            cfg.validate()?;
            let out = eval_run(&root, &cfg, &dir, robustness)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Report { runs, out } => {
            let runs: Vec<PathBuf> = runs.iter().map(|r| resolve(&root, r)).collect();
            let stem = out.map(|o| resolve(&root, &o)).unwrap_or_else(|| root.join("report"));
            report(&runs, &stem)
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    match &common.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| bosc::Error::io(path, e).into())
}

/// Loads the configured dataset, generating it first when the directory has
/// no manifest. An existing dataset must match the configured generator.
fn dataset(root: &Path, cfg: &ExperimentConfig) -> Result<(Manifest, Dataset), CliError> {
    let dir = resolve(root, &cfg.dataset.root);
    let want = Manifest::new(cfg.dataset.synth_config()).map_err(|e| CliError::Config(e.to_string()))?;
    if dir.join(bosc::data::dataset::MANIFEST_FILE).exists() {
        let have = read_manifest(&dir)?;
        if have.digest != want.digest {
            return Err(CliError::Config(format!(
                "dataset at {} was generated from a different configuration",
                dir.display()
            )));
        }
    } else {
        synth_dataset(&cfg.dataset.synth_config(), &dir)?;
    }
    Ok(load_dataset(&dir)?)
}

fn triggers(cfg: &ExperimentConfig, manifest: &Manifest) -> Result<TriggerSet, CliError> {
    let names = manifest.in_set_names();
    Ok(match &cfg.triggers.dir {
        Some(d) => load_trigger_dir(d, &names, manifest.shape)?,
        None => generate_default_triggers(names.len(), manifest.shape, cfg.triggers.seed),
    })
}

/// The reproducible part of a training report; timing goes to a separate file.
#[derive(Serialize)]
struct ReportFile<'a> {
    mode: Mode,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    compliance: Option<bosc::training::Compliance>,
    epochs: &'a [bosc::training::EpochStats],
}

#[derive(Serialize)]
struct TimingFile {
    threads: usize,
    wall_clock_secs: f64,
}

pub fn train_run(root: &Path, cfg: &ExperimentConfig, dir: &Path) -> Result<TrainReport, CliError> {
    let (manifest, data) = dataset(root, cfg)?;
    let trig = triggers(cfg, &manifest)?;
    let tc = cfg.train.train_config();
    let (clf, report) = train(&data, manifest.num_classes(), &cfg.model, &tc, Some(&trig))?;
    std::fs::create_dir_all(dir).map_err(|e| bosc::Error::io(dir, e))?;
    write(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    checkpoint::save(&dir.join(MODEL_FILE), &clf)?;
    trig.write_dir(&dir.join(TRIGGER_DIR), &manifest.in_set_names())?;
    let file = ReportFile {
        mode: report.mode,
        seed: report.seed,
        compliance: report.compliance,
        epochs: &report.epochs,
    };
    write(&dir.join(REPORT_FILE), &toml::to_string(&file).expect("report serializes"))?;
    let timing = TimingFile {
        threads: report.threads,
        wall_clock_secs: report.wall_clock_secs,
    };
    write(&dir.join(TIMING_FILE), &toml::to_string(&timing).expect("timing serializes"))?;
    write(&dir.join(EPOCHS_FILE), &report.epochs_csv())?;
    Ok(report)
}

fn successful(samples: &[Sample], probes: Vec<bosc::Result<Probe>>) -> (Vec<Sample>, Vec<Probe>, usize) {
    let (mut kept, mut ok, mut failed) = (Vec::new(), Vec::new(), 0);
    for (s, p) in samples.iter().zip(probes) {
        match p {
            Ok(p) => {
                kept.push(s.clone());
                ok.push(p);
            }
            Err(e) => {
                eprintln!("warning: skipping {e}");
                failed += 1;
            }
        }
    }
    (kept, ok, failed)
}

pub fn eval_dir_name(op: Option<ProcessingOp>) -> String {
    match op {
        None => "eval".into(),
        Some(op) => format!("eval-{}", op.to_string().replace('=', "-")),
    }
}

/// Scores the test split with every configured score kind. The threshold is
/// calibrated on the unprocessed validation split.
pub fn eval_run(root: &Path, cfg: &ExperimentConfig, dir: &Path, op: Option<ProcessingOp>) -> Result<PathBuf, CliError> {
    let clf: Classifier = checkpoint::load(&dir.join(MODEL_FILE))?;
    if let Some(a) = cfg.inference.alpha {
        if a != clf.alpha {
            return Err(CliError::Config(format!("inference.alpha {a} differs from the checkpoint's {}", clf.alpha)));
        }
    }
    let (manifest, data) = dataset(root, cfg)?;
    if manifest.num_classes() != clf.num_classes {
        return Err(CliError::Config(format!(
            "dataset has {} in-set classes, model has {}",
            manifest.num_classes(),
            clf.num_classes
        )));
    }
    let trig = load_trigger_dir(&dir.join(TRIGGER_DIR), &manifest.in_set_names(), manifest.shape)?;
    clf.check_triggers(&trig)?;

    let val: Vec<Sample> = data.val.iter().filter(|s| s.truth != Truth::OutOfSet).cloned().collect();
    let (val, val_probes, _) = successful(&val, probe_samples(&clf, &trig, &val, None));
    let (test, test_probes, failed) = successful(&data.test, probe_samples(&clf, &trig, &data.test, op));
    if test.is_empty() {
        return Err(bosc::Error::Evaluation("no test sample could be evaluated".into()).into());
    }

    let out = dir.join(eval_dir_name(op));
    std::fs::create_dir_all(&out).map_err(|e| bosc::Error::io(&out, e))?;
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for &kind in &cfg.inference.scores {
        let cal: Vec<f64> = records_from_probes(&val, &val_probes, kind)?.iter().map(|r| r.xi).collect();
        let records = records_from_probes(&test, &test_probes, kind)?;
        let s = summarize(&records, clf.num_classes, cfg.inference.target_fpr, (!cal.is_empty()).then_some(&cal[..]))?;
        let decisions: Vec<_> = records.iter().map(|r| decide(r.y_star, r.xi, s.nu)).collect();
        let path = out.join(format!("scores_{kind}.csv"));
        let file = std::fs::File::create(&path).map_err(|e| bosc::Error::io(&path, e))?;
        write_score_dump(std::io::BufWriter::new(file), &records, &decisions)?;
        let mut roc = String::from("nu,fpr,tpr,fnr,ccr\n");
        for p in roc_curve(&records)? {
            writeln!(roc, "{},{},{},{},{}", p.nu, p.fpr, p.tpr, p.fnr, p.ccr).unwrap();
        }
        write(&out.join(format!("roc_{kind}.csv")), &roc)?;
        write(&out.join(format!("confusion_{kind}.csv")), &s.confusion.to_csv(&manifest.in_set_names()))?;
        summary.push_str(&summary_row(kind, &s, records.len(), failed));
    }
    write(&out.join(SUMMARY_FILE), &summary)?;
    Ok(out)
}

fn summary_row(kind: ScoreKind, s: &EvalSummary, evaluated: usize, failed: usize) -> String {
    format!(
        "{kind},{},{},{},{},{},{},{},{},{},{evaluated},{failed}\n",
        s.accuracy, s.au_roc, s.au_oscr, s.eer, s.target_fpr, s.nu, s.fpr_at_nu, s.tpr_at_fpr, s.ccr_at_fpr
    )
}

#[derive(Clone, Debug, Deserialize)]
pub struct SummaryRow {
    pub score: ScoreKind,
    pub accuracy: f64,
    pub au_roc: f64,
    pub au_oscr: f64,
    pub eer: f64,
    pub target_fpr: f64,
    pub nu: f64,
    pub fpr_at_nu: f64,
    pub tpr_at_fpr: f64,
    pub ccr_at_fpr: f64,
    pub evaluated: usize,
    pub failed: usize,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| bosc::Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| bosc::Error::format("summary", e.to_string()).in_file(path))?;
    if header.iter().collect::<Vec<_>>().join(",") != SUMMARY_HEADER {
        return Err(bosc::Error::format("summary", "unexpected header").in_file(path).into());
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| bosc::Error::format("summary", e.to_string()).in_file(path).into()))
        .collect()
}

/// One evaluated condition of one run.
struct Entry {
    run: String,
    mode: Mode,
    dataset: String,
    seed: u64,
    condition: String,
    rows: Vec<SummaryRow>,
}

fn collect(runs: &[PathBuf]) -> Vec<Entry> {
    let mut out = Vec::new();
    for dir in runs {
        let cfg = match ExperimentConfig::load(&dir.join(CONFIG_FILE)) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", dir.display());
                continue;
            }
        };
        let dataset = match &cfg.dataset.synth {
            Some(s) => format!("custom-{}", &bosc::data::dataset::config_digest(s)[..8]),
            None => cfg.dataset.preset.name().to_string(),
        };
        let mut evals: Vec<PathBuf> = std::fs::read_dir(dir)
            .map(|it| {
                it.filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("eval")))
                    .collect()
            })
            .unwrap_or_default();
        evals.sort();
        if evals.is_empty() {
            eprintln!("warning: {} has no evaluation", dir.display());
        }
        for e in evals {
            let name = e.file_name().unwrap().to_string_lossy().into_owned();
            match read_summary(&e.join(SUMMARY_FILE)) {
                Ok(rows) => out.push(Entry {
                    run: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    mode: cfg.train.mode,
                    dataset: dataset.clone(),
                    seed: cfg.train.seed,
                    condition: name.strip_prefix("eval-").unwrap_or("clean").to_string(),
                    rows,
                }),
                Err(err) => eprintln!("warning: skipping {}: {err}", e.display()),
            }
        }
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Writes `<stem>.csv` (AU-ROC per method and dataset with an average
/// column), `<stem>.md`, `<stem>_long.csv` and `<stem>_curves.csv`.
pub fn report(runs: &[PathBuf], stem: &Path) -> Result<(), CliError> {
    let entries = collect(runs);
    if entries.is_empty() {
        return Err(bosc::Error::Evaluation("no evaluated runs to report".into()).into());
    }
    if let Some(parent) = stem.parent() {
        std::fs::create_dir_all(parent).map_err(|e| bosc::Error::io(parent, e))?;
    }
    let with_ext = |suffix: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };

    let mut long = format!("run,mode,dataset,seed,condition,{SUMMARY_HEADER}\n");
    // (condition, mode, score) -> dataset -> AU-ROC per seed
    let mut table: BTreeMap<(String, String, String), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut datasets: Vec<String> = Vec::new();
    for e in &entries {
        if !datasets.contains(&e.dataset) {
            datasets.push(e.dataset.clone());
        }
        for r in &e.rows {
            writeln!(
                long,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                e.run,
                e.mode,
                e.dataset,
                e.seed,
                e.condition,
                r.score,
                r.accuracy,
                r.au_roc,
                r.au_oscr,
                r.eer,
                r.target_fpr,
                r.nu,
                r.fpr_at_nu,
                r.tpr_at_fpr,
                r.ccr_at_fpr,
                r.evaluated,
                r.failed
            )
            .unwrap();
            table
                .entry((e.condition.clone(), e.mode.to_string(), r.score.to_string()))
                .or_default()
                .entry(e.dataset.clone())
                .or_default()
                .push(r.au_roc);
        }
    }
    datasets.sort();

    let mut csv_out = format!("condition,method,score,{},average\n", datasets.join(","));
    let mut md = format!("| condition | method | score | {} | average |\n|---|---|---|{}---|\n", datasets.join(" | "), "---|".repeat(datasets.len()));
    for ((condition, mode, score), cells) in &table {
        let values: Vec<Option<f64>> = datasets.iter().map(|d| cells.get(d).map(|v| mean(v))).collect();
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let fmt = |v: Option<f64>, p: usize| v.map(|x| format!("{:.*}", p, x * 100.0)).unwrap_or_default();
        let avg = (present.len() == datasets.len()).then(|| mean(&present));
        let row: Vec<String> = values.iter().map(|&v| fmt(v, 4)).collect();
        writeln!(csv_out, "{condition},{mode},{score},{},{}", row.join(","), fmt(avg, 4)).unwrap();
        let row: Vec<String> = values.iter().map(|&v| fmt(v, 2)).collect();
        writeln!(md, "| {condition} | {mode} | {score} | {} | {} |", row.join(" | "), fmt(avg, 2)).unwrap();
    }

    let mut curves = String::from("run,condition,score,nu,fpr,tpr,fnr,ccr\n");
    for dir in runs {
        let run = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for e in entries.iter().filter(|e| e.run == run) {
            let eval = if e.condition == "clean" { "eval".to_string() } else { format!("eval-{}", e.condition) };
            for r in &e.rows {
                let path = dir.join(&eval).join(format!("roc_{}.csv", r.score));
                match std::fs::read_to_string(&path) {
                    Ok(text) => {
                        for line in text.lines().skip(1) {
                            writeln!(curves, "{run},{},{},{line}", e.condition, r.score).unwrap();
                        }
                    }
                    Err(err) => eprintln!("warning: {}: {err}", path.display()),
                }
            }
        }
    }

    let formats = entries_formats(runs);
    if formats.contains(&ReportFormat::Csv) {
        write(&with_ext(".csv"), &csv_out)?;
        write(&with_ext("_long.csv"), &long)?;
        write(&with_ext("_curves.csv"), &curves)?;
    }
    if formats.contains(&ReportFormat::Markdown) {
        write(&with_ext(".md"), &md)?;
    }
    print!("{md}");
    Ok(())
}

/// Output formats requested by any of the runs' configs (default: all).
fn entries_formats(runs: &[PathBuf]) -> Vec<ReportFormat> {
    let mut out: Vec<ReportFormat> = runs
        .iter()
        .filter_map(|d| ExperimentConfig::load(&d.join(CONFIG_FILE)).ok())
        .flat_map(|c| c.report.formats)
        .collect();
    if out.is_empty() {
        out = vec![ReportFormat::Csv, ReportFormat::Markdown];
    }
    out.dedup();
    out
}
