//! End-to-end runs: build a model for a task, train it, score the test
//! split and write metrics and the best checkpoint.
//!
//! Output naming is deterministic: `<label>-seed<seed>.csv` for metrics and
//! `<label>-seed<seed>.params` for the checkpoint, where the label encodes
//! task, cell and sizes (see [`ExperimentSpec::label`]).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cells::{default_d_z, CellConfig, CellKind};
use crate::datasets::{self, bptt_windows, har::HarData, HarSample};
use crate::error::{Error, Result};
use crate::models::{Classifier, Regressor, TiedLanguageModel};
use crate::synth::{self, SequenceSample, SynthConfig, SynthDataset};
use crate::train::{
    evaluate, train_epochs, write_csv, EvalReport, Metric, MetricsRecord, Model, RunId, Split,
    TrainConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Synthetic,
    Har,
    LmToy,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Synthetic => "synthetic",
            Task::Har => "har",
            Task::LmToy => "lm-toy",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Task::Synthetic),
            "har" => Ok(Task::Har),
            "lm-toy" => Ok(Task::LmToy),
            _ => Err(Error::Config(format!(
                "unknown task `{s}` (expected synthetic, har or lm-toy)"
            ))),
        }
    }
}

/// Where a synthetic run gets its sequences.
#[derive(Clone, Debug, PartialEq)]
pub enum SynthSource {
    Generate(SynthConfig),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub task: Task,
    pub cell: CellKind,
    pub d_h: usize,
    /// Hypernetwork width; `None` picks half the hidden size.
    pub d_z: Option<usize>,
    pub layers: usize,
    /// Fixed depth `R` (RHN, SRHN).
    pub depth: usize,
    pub r_max: usize,
    pub train: TrainConfig,
    pub output: Option<PathBuf>,
    pub synth: SynthSource,
    /// `(train, val, test)` sizes for synthetic data; `None` means 80/10/10.
    pub split: Option<(usize, usize, usize)>,
    pub har_root: Option<PathBuf>,
    pub bptt: usize,
    /// Toy corpus seed.
    pub corpus_seed: u64,
}

impl ExperimentSpec {
    pub fn new(task: Task, cell: CellKind, d_h: usize) -> Self {
        let mut train = TrainConfig::default();
        let (layers, r_max) = match task {
            Task::Synthetic => (1, 10),
            Task::Har => {
                train.batch_size = 200;
                train.learning_rate = 0.0025;
                (2, 10)
            }
            Task::LmToy => {
                train.clip_norm = Some(10.0);
                train.epochs = 10;
                train.learning_rate = 0.002;
                (1, 4)
            }
        };
        Self {
            task,
            cell,
            d_h,
            d_z: None,
            layers,
            depth: 1,
            r_max,
            train,
            output: None,
            synth: SynthSource::Generate(SynthConfig::default()),
            split: None,
            har_root: None,
            bptt: 35,
            corpus_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cell_config(1).validate()?;
        self.train.validate()?;
        if self.layers == 0 || self.bptt == 0 {
            return Err(Error::Config("layers and bptt must be positive".into()));
        }
        if self.task != Task::Har && self.layers != 1 {
            return Err(Error::Config(format!("task {} uses a single layer", self.task)));
        }
        Ok(())
    }

    pub fn cell_config(&self, d_x: usize) -> CellConfig {
        CellConfig {
            kind: self.cell,
            d_h: self.d_h,
            d_x,
            d_z: self.d_z.unwrap_or_else(|| default_d_z(self.d_h)),
            depth: self.depth,
            r_max: self.r_max,
        }
    }

    /// Run label shared by every seed of this spec.
    pub fn label(&self) -> String {
        let mut s = format!("{}-{}-h{}", self.task, self.cell, self.d_h);
        match self.cell {
            CellKind::Rhn | CellKind::Srhn => s += &format!("-r{}", self.depth),
            CellKind::Srehn => s += &format!("-rmax{}", self.r_max),
            CellKind::Eirehn => {
                s += &format!("-z{}-rmax{}", self.d_z.unwrap_or_else(|| default_d_z(self.d_h)), self.r_max)
            }
            CellKind::Rnn | CellKind::Lstm => {}
        }
        if self.layers > 1 {
            s += &format!("-l{}", self.layers);
        }
        s
    }

    pub fn file_stem(&self) -> String {
        format!("{}-seed{}", self.label(), self.train.seed)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub label: String,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub best_epoch: usize,
    pub test: EvalReport,
    pub parameters: usize,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
}

/// `(depth, count)` pairs for every depth between the smallest and largest seen.
pub fn depth_histogram(depths: &[usize]) -> Vec<(usize, usize)> {
    let (Some(&lo), Some(&hi)) = (depths.iter().min(), depths.iter().max()) else {
        return Vec::new();
    };
    let mut counts = vec![0; hi - lo + 1];
    for &d in depths {
        counts[d - lo] += 1;
    }
    (lo..=hi).zip(counts).collect()
}

pub fn write_histogram(path: &Path, hist: &[(usize, usize)]) -> Result<()> {
    let mut text = String::from("depth,count\n");
    for (d, c) in hist {
        text += &format!("{d},{c}\n");
    }
    std::fs::write(path, text)?;
    Ok(())
}

impl ExperimentResult {
    pub fn test_value(&self, metric: Metric) -> Option<f64> {
        self.test.get(metric)
    }
}

/// Synthetic splits for a spec.
pub fn synthetic_splits(
    spec: &ExperimentSpec,
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>, Vec<SequenceSample>)> {
    let data = match &spec.synth {
        SynthSource::Generate(cfg) => synth::generate(cfg)?,
        SynthSource::File(path) => {
            if !path.is_file() {
                return Err(Error::MissingData {
                    root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
                    missing: vec![path.clone()],
                });
            }
            SynthDataset::load(path)?
        }
    };
    if data.config.t < 2 {
        return Err(Error::Config("next-step regression needs T >= 2".into()));
    }
    let sizes = spec.split.unwrap_or_else(|| synth::default_split_sizes(data.samples.len()));
    synth::split(&data.samples, sizes)
}

/// HAR data root: explicit path, then `EIREHN_HAR_ROOT`, then `data/UCI HAR Dataset`.
pub fn har_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("EIREHN_HAR_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/UCI HAR Dataset"))
}

/// Loads and standardizes HAR, then holds out the last 10% of the training
/// windows for validation.
pub fn har_splits(root: &Path) -> Result<(Vec<HarSample>, Vec<HarSample>, Vec<HarSample>, HarData)> {
    let mut data = datasets::load_har(root)?;
    data.standardize();
    let n_val = data.train.len() / 10;
    let n_train = data.train.len() - n_val;
    let train = data.train[..n_train].to_vec();
    let val = data.train[n_train..].to_vec();
    let test = data.test.clone();
    Ok((train, val, test, data))
}

/// Trains `model` and scores `test`, emitting test records at the best epoch.
pub fn fit_and_test<M: Model>(
    spec: &ExperimentSpec,
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    test: &[M::Sample],
    on_record: &mut dyn FnMut(&MetricsRecord),
    stop: &mut dyn FnMut(usize, &EvalReport) -> bool,
) -> Result<ExperimentResult> {
    let run = RunId {
        name: spec.label(),
        seed: spec.train.seed,
    };
    let out = train_epochs(model, train, val, &spec.train, &run, |r| on_record(r), |e, r| stop(e, r))?;
    let report = evaluate(model, test)?;
    let mut records = out.records;
    let seconds = records.last().map_or(0.0, |r| r.seconds);
    for &(metric, value) in &report.values {
        let r = MetricsRecord {
            run: run.name.clone(),
            seed: run.seed,
            epoch: out.best_epoch,
            split: Split::Test,
            metric,
            value,
            seconds,
        };
        on_record(&r);
        records.push(r);
    }
    let mut result = ExperimentResult {
        label: run.name,
        seed: run.seed,
        records,
        best_epoch: out.best_epoch,
        test: report,
        parameters: model.store().scalar_count(),
        metrics_path: None,
        checkpoint_path: None,
    };
    if let Some(dir) = &spec.output {
        std::fs::create_dir_all(dir)?;
        let stem = spec.file_stem();
        let metrics = dir.join(format!("{stem}.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&metrics)?);
        write_csv(&mut f, &result.records)?;
        let ckpt = dir.join(format!("{stem}.params"));
        model.store().save(&ckpt)?;
        let hist = depth_histogram(&result.test.stats.depths);
        if !hist.is_empty() {
            write_histogram(&dir.join(format!("{stem}.depths.csv")), &hist)?;
        }
        result.metrics_path = Some(metrics);
        result.checkpoint_path = Some(ckpt);
    }
    Ok(result)
}

/// Runs one spec end to end.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    run_experiment_with(spec, &mut |_| {}, &mut |_, _| false)
}

pub fn run_experiment_with(
    spec: &ExperimentSpec,
    on_record: &mut dyn FnMut(&MetricsRecord),
    stop: &mut dyn FnMut(usize, &EvalReport) -> bool,
) -> Result<ExperimentResult> {
    spec.validate()?;
    let seed = spec.train.seed;
    match spec.task {
        Task::Synthetic => {
            let (train, val, test) = synthetic_splits(spec)?;
            let mut model = Regressor::new(&spec.cell_config(Regressor::DIM), seed)?;
            fit_and_test(spec, &mut model, &train, &val, &test, on_record, stop)
        }
        Task::Har => {
            let (train, val, test, data) = har_splits(&har_root(spec.har_root.as_deref()))?;
            let mut model = Classifier::new(&spec.cell_config(data.channels), spec.layers, 6, seed)?;
            fit_and_test(spec, &mut model, &train, &val, &test, on_record, stop)
        }
        Task::LmToy => {
            let corpus = datasets::toy_corpus(spec.corpus_seed);
            let mut model = TiedLanguageModel::new(&spec.cell_config(spec.d_h), corpus.vocab.len(), seed)?;
            let train = bptt_windows(&corpus.train, spec.bptt);
            let val = bptt_windows(&corpus.val, spec.bptt);
            let test = bptt_windows(&corpus.test, spec.bptt);
            fit_and_test(spec, &mut model, &train, &val, &test, on_record, stop)
        }
    }
}

/// Runs specs on up to `jobs` threads. Results keep the input order.
pub fn run_many(specs: &[ExperimentSpec], jobs: usize) -> Vec<Result<ExperimentResult>> {
    let jobs = jobs.max(1).min(specs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<ExperimentResult>>> = (0..specs.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= specs.len() {
                    break;
                }
                let r = run_experiment(&specs[i]);
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every spec ran")).collect()
}
