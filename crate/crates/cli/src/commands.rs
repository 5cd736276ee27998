use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use xdsp::corpus::{
    build_vocabulary, companion_path, domain_statistics, merge_source_domains, parse_domain_file, split_domain,
    Domain, Example, DOMAIN_STATS_CSV_HEADER,
};
use xdsp::embed::{
    embedding_stats, random_embedding, read_text_embeddings, text_embedding_dim, STATS_CSV_HEADER,
};
use xdsp::evaluator::{build_report, EvalReport, Prediction, Ranker, Setting, SweepPoint, SWEEP_CSV_HEADER};
use xdsp::model::ModelParams;
use numcore::Scalar;
use xdsp::trainer::{
    adapt, init_model, load_checkpoint, save_checkpoint, train, Checkpoint, EmbeddingInit, EmbeddingSource,
    EpochRecord, Precision, TrainConfig, TrainObserver,
};
use xdsp::util::derive_seed;
use xdsp::Error;

use crate::manifest::{beside, inside, is_manifest, Recorder};
use crate::{
    AdaptArgs, Command, EmbedStatsArgs, EvaluateArgs, PrepareArgs, ReportArgs, RunArgs, SweepArgs, TrainArgs,
};

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
}

impl Failure {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Failure::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::EmbedStats(a) => embed_stats(a),
        Command::Train(a) => train_cmd(a),
        Command::Adapt(a) => adapt_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    }
}

/// Every `*.tsv` domain file in `dir`, by name.
fn load_domains(dir: &Path, rec: &mut Recorder) -> Result<Vec<Domain>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Failure::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "tsv") && p.is_file() {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!("no .tsv domain files in {}", dir.display())).into());
    }
    let mut domains = Vec::with_capacity(paths.len());
    for p in paths {
        rec.input(&p)?;
        let companion = companion_path(&p);
        if companion.is_file() {
            rec.input(&companion)?;
        }
        domains.push(parse_domain_file(&p)?);
    }
    Ok(domains)
}

/// The named domain, or the merge of several comma-separated names.
fn select(domains: &[Domain], target: &str) -> Result<Domain> {
    let names: Vec<&str> = target.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let mut picked = Vec::with_capacity(names.len());
    for name in &names {
        match domains.iter().find(|d| d.name() == *name) {
            Some(d) => picked.push(d.clone()),
            None => {
                let known: Vec<&str> = domains.iter().map(Domain::name).collect();
                return Err(Failure::Usage(format!(
                    "unknown domain {name:?}; available: {}",
                    known.join(", ")
                )));
            }
        }
    }
    match picked.len() {
        0 => Err(Failure::Usage("--target names no domain".into())),
        1 => Ok(picked.remove(0)),
        _ => Ok(merge_source_domains(&picked)?),
    }
}

/// Reads a configuration file, or the resolved configuration of a manifest.
fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    if value.get("command").is_some() {
        if let Some(config) = value.get_mut("config") {
            value = config.take();
        }
    }
    Ok(serde_json::from_value(value).map_err(Error::from)?)
}

/// Configuration file with command-line overrides applied.
fn resolve(run: &RunArgs, rec: &mut Recorder) -> Result<TrainConfig> {
    rec.input(&run.config)?;
    let mut cfg = load_config(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(path) = &run.embeddings {
        rec.input(path)?;
        cfg.embedding_init = EmbeddingInit::Pretrained;
    }
    if let Some(t) = run.strategy {
        cfg.embedding_transform = t;
    }
    if cfg.embedding_init == EmbeddingInit::Pretrained && run.embeddings.is_none() {
        return Err(Failure::Usage("pretrained initialisation needs --embeddings".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn source(run: &RunArgs) -> EmbeddingSource<'_> {
    run.embeddings
        .as_deref()
        .map_or(EmbeddingSource::None, EmbeddingSource::File)
}

fn config_json(cfg: &TrainConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

struct Progress;

impl TrainObserver for Progress {
    fn on_epoch_end(&mut self, r: &EpochRecord) {
        match r.validation_accuracy {
            Some(v) => eprintln!("phase {} epoch {}: loss {:.4}, validation {:.4}", r.phase, r.epoch, r.loss, v),
            None => eprintln!("phase {} epoch {}: loss {:.4}", r.phase, r.epoch, r.loss),
        }
    }
}

fn examples_tsv(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        let _ = writeln!(out, "{}\t{}\t{}", e.utterance.join(" "), e.canonical.join(" "), e.logical_form);
    }
    out
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let mut rec = Recorder::new("prepare");
    let domains = load_domains(&a.data, &mut rec)?;
    let embedding_vocab = match &a.embeddings {
        Some(p) => {
            rec.input(p)?;
            let table = read_text_embeddings(p, text_embedding_dim(p)?)?;
            Some(table.words().iter().cloned().collect::<HashSet<String>>())
        }
        None => None,
    };
    let mut outputs: Vec<(PathBuf, String)> = Vec::new();
    let mut stats = format!("{DOMAIN_STATS_CSV_HEADER}\n");
    for s in domain_statistics(&domains, embedding_vocab.as_ref()) {
        let _ = writeln!(stats, "{}", s.csv_row());
    }
    outputs.push((a.out.join("domain_stats.csv"), stats));
    for d in &domains {
        let s = split_domain(d, a.seed)?;
        for (part, examples) in [("train", &s.train), ("validation", &s.validation), ("test", &s.test)] {
            outputs.push((a.out.join("splits").join(format!("{}.{part}.tsv", d.name())), examples_tsv(examples)));
        }
    }
    for (path, text) in &outputs {
        rec.output(path, text.as_bytes())?;
    }
    let config = json!({ "seed": a.seed, "embeddings": a.embeddings });
    rec.finish(&inside(&a.out), config, serde_json::Value::Null, a.seed)
}

fn embed_stats(a: EmbedStatsArgs) -> Result<()> {
    let mut rec = Recorder::new("embed-stats");
    let matrix = match (&a.embeddings, a.random) {
        (Some(p), _) => {
            rec.input(p)?;
            read_text_embeddings(p, text_embedding_dim(p)?)?.to_matrix()?
        }
        (None, Some((v, d))) => random_embedding(v, d, a.seed)?,
        (None, None) => return Err(Failure::Usage("give --embeddings or --random".into())),
    };
    let mut csv = format!("{STATS_CSV_HEADER}\n");
    for t in &a.strategy {
        let m = t.apply(&matrix)?;
        let _ = writeln!(csv, "{}", embedding_stats(&m, a.pairs, a.seed)?.csv_row());
    }
    rec.output(&a.out, csv.as_bytes())?;
    let strategies: Vec<&str> = a.strategy.iter().map(|t| t.label()).collect();
    let config = json!({
        "embeddings": a.embeddings,
        "random": a.random.map(|(v, d)| [v, d]),
        "strategy": strategies,
        "pairs": a.pairs,
        "seed": a.seed,
    });
    rec.finish(&beside(&a.out), config, serde_json::Value::Null, a.seed)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut rec = Recorder::new("train");
    let cfg = resolve(&a.run, &mut rec)?;
    let domains = load_domains(&a.run.data, &mut rec)?;
    let domain = select(&domains, &a.run.target)?;
    let vocab = build_vocabulary([&domain]);
    let splits = split_domain(&domain, cfg.seed)?;
    let init = init_model(&cfg, &vocab, source(&a.run))?;
    let ckpt = train(&cfg, &vocab, &splits, &domain, &init, &mut Progress)?;
    write_checkpoint(&mut rec, &ckpt, &a.out)?;
    rec.finish(&beside(&a.out), config_json(&cfg), serde_json::Value::Null, cfg.seed)
}

fn write_checkpoint(rec: &mut Recorder, ckpt: &Checkpoint, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    save_checkpoint(ckpt, out)?;
    rec.record_output(out);
    Ok(())
}

fn adapt_cmd(a: AdaptArgs) -> Result<()> {
    let mut rec = Recorder::new("adapt");
    let cfg = resolve(&a.run, &mut rec)?;
    rec.input(&a.source_ckpt)?;
    let source_ckpt = load_checkpoint(&a.source_ckpt)?;
    let domains = load_domains(&a.run.data, &mut rec)?;
    let domain = select(&domains, &a.run.target)?;
    let splits = split_domain(&domain, cfg.seed)?;
    let ckpt = adapt(&source_ckpt, &domain, &splits, &cfg, source(&a.run), &mut Progress)?;
    write_checkpoint(&mut rec, &ckpt, &a.out)?;
    rec.finish(&beside(&a.out), config_json(&cfg), serde_json::Value::Null, cfg.seed)
}

fn predictions_as<T: Scalar>(params: &ModelParams<T>, ckpt: &Checkpoint, domain: &Domain, examples: &[Example]) -> Result<Vec<Prediction>> {
    Ok(Ranker::new(params, &ckpt.vocab, domain)?.predict_all(examples)?)
}

/// Ranks `examples` at the checkpoint's training precision.
fn predictions(ckpt: &Checkpoint, domain: &Domain, examples: &[Example]) -> Result<Vec<Prediction>> {
    match ckpt.config.precision {
        Precision::F64 => predictions_as(&ckpt.params, ckpt, domain, examples),
        Precision::F32 => predictions_as(&ckpt.params.cast::<f32>(), ckpt, domain, examples),
    }
}

fn accuracy(preds: &[Prediction]) -> f64 {
    preds.iter().filter(|p| p.correct).count() as f64 / preds.len() as f64
}

fn setting(ckpt: &Checkpoint) -> Setting {
    if ckpt.meta.lineage.is_empty() {
        Setting::InDomain
    } else {
        Setting::CrossDomain
    }
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut rec = Recorder::new("evaluate");
    rec.input(&a.ckpt)?;
    let ckpt = load_checkpoint(&a.ckpt)?;
    let domains = load_domains(&a.data, &mut rec)?;
    let domain = select(&domains, &a.target)?;
    let splits = split_domain(&domain, ckpt.config.seed)?;
    let preds = predictions(&ckpt, &domain, &splits.test)?;
    let report = EvalReport {
        domain: domain.name().to_string(),
        setting: setting(&ckpt),
        init_strategy: ckpt.config.init_label(),
        domain_examples: domain.examples().len(),
        domain_vocab: build_vocabulary([&domain]).content_tokens().len(),
        test_examples: splits.test.len(),
        accuracy: accuracy(&preds),
        seed: ckpt.config.seed,
        config_fingerprint: ckpt.config.fingerprint(),
        predictions: preds,
        sweep: vec![],
    };
    eprintln!("{} accuracy {:.4} on {} test examples", report.domain, report.accuracy, report.test_examples);
    let json = serde_json::to_vec_pretty(&report).map_err(Error::from)?;
    rec.output(&a.out, &json)?;
    rec.finish(&beside(&a.out), config_json(&ckpt.config), json!({ "target": a.target }), ckpt.config.seed)
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut rec = Recorder::new("sweep");
    let cfg = resolve(&a.run, &mut rec)?;
    if a.repeats == 0 || a.rates.is_empty() {
        return Err(Failure::Usage("sweep needs at least one rate and one repeat".into()));
    }
    let source_ckpt = match &a.source_ckpt {
        Some(p) => {
            rec.input(p)?;
            Some(load_checkpoint(p)?)
        }
        None => None,
    };
    let domains = load_domains(&a.run.data, &mut rec)?;
    let domain = select(&domains, &a.run.target)?;
    let vocab = build_vocabulary([&domain]);
    let splits = split_domain(&domain, cfg.seed)?;
    let mut points = Vec::new();
    let mut last = None;
    for &rate in &a.rates {
        for repeat in 0..a.repeats {
            let seed = derive_seed(cfg.seed, &[repeat as u64]);
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            let sub = splits.downsampled(rate, seed)?;
            let ckpt = match &source_ckpt {
                Some(src) => adapt(src, &domain, &sub, &run_cfg, source(&a.run), &mut Progress)?,
                None => {
                    let init = init_model(&run_cfg, &vocab, source(&a.run))?;
                    train(&run_cfg, &vocab, &sub, &domain, &init, &mut Progress)?
                }
            };
            let acc = accuracy(&predictions(&ckpt, &domain, &sub.test)?);
            eprintln!("rate {rate} repeat {repeat}: accuracy {acc:.4}");
            points.push(SweepPoint {
                rate,
                repeat,
                seed,
                accuracy: acc,
            });
            last = Some(ckpt);
        }
    }
    let top = a.rates.iter().copied().fold(f64::MIN, f64::max);
    let at_top: Vec<f64> = points.iter().filter(|p| p.rate == top).map(|p| p.accuracy).collect();
    let ckpt = last.expect("at least one run");
    let report = EvalReport {
        domain: domain.name().to_string(),
        setting: setting(&ckpt),
        init_strategy: cfg.init_label(),
        domain_examples: domain.examples().len(),
        domain_vocab: vocab.content_tokens().len(),
        test_examples: splits.test.len(),
        accuracy: at_top.iter().sum::<f64>() / at_top.len() as f64,
        seed: cfg.seed,
        config_fingerprint: cfg.fingerprint(),
        predictions: vec![],
        sweep: points,
    };
    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for p in &report.sweep {
        let _ = writeln!(csv, "{}", p.csv_row());
    }
    let json = serde_json::to_vec_pretty(&report).map_err(Error::from)?;
    rec.output(&a.out.join("sweep.csv"), csv.as_bytes())?;
    rec.output(&a.out.join("report.json"), &json)?;
    let options = json!({ "rates": a.rates, "repeats": a.repeats, "source_ckpt": a.source_ckpt });
    rec.finish(&inside(&a.out), config_json(&cfg), options, cfg.seed)
}

fn report_files(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    for entry in entries {
        let p = entry.map_err(|e| Failure::io(dir, e))?.path();
        if p.is_dir() {
            report_files(&p, found)?;
        } else if p.extension().is_some_and(|x| x == "json") && !is_manifest(&p) {
            found.push(p);
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut rec = Recorder::new("report");
    let mut files = Vec::new();
    report_files(&a.data, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(Error::InsufficientData(format!("no reports under {}", a.data.display())).into());
    }
    let mut reports = Vec::with_capacity(files.len());
    for f in &files {
        rec.input(f)?;
        let text = std::fs::read_to_string(f).map_err(|e| Failure::io(f, e))?;
        let r: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: f.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        reports.push(r);
    }
    let built = build_report(&reports)?;
    let mut table = String::from("domain,init_strategy,abundance,in_domain,cross_domain,improvement\n");
    for r in &built.rows {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            r.domain, r.init_strategy, r.abundance, r.in_domain, r.cross_domain, r.improvement
        );
    }
    rec.output(&a.out.join("report.md"), built.markdown().as_bytes())?;
    rec.output(&a.out.join("table.csv"), table.as_bytes())?;
    rec.output(&a.out.join("correlation.csv"), built.correlation_csv().as_bytes())?;
    rec.output(&a.out.join("curves.csv"), built.curves_csv().as_bytes())?;
    rec.finish(&inside(&a.out), json!({ "reports": files }), serde_json::Value::Null, 0)
}
