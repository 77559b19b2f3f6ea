//! `eirehn`: dataset generation, training, evaluation, property checks and
//! result summaries for elastic-depth recurrent networks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eirehn_core::cells::CellKind;
use eirehn_core::datasets::{self, bptt_windows};
use eirehn_core::experiment::{
    depth_histogram, har_root, har_splits, run_many, synthetic_splits, write_histogram,
    ExperimentResult, ExperimentSpec, SynthSource, Task,
};
use eirehn_core::models::{Classifier, Regressor, TiedLanguageModel};
use eirehn_core::synth::{self, SynthConfig};
use eirehn_core::train::{evaluate, mean_std, write_json_lines, EvalReport, Metric, Model};
use eirehn_core::verify::{run_suite, Suite, VerifyOptions};
use eirehn_core::{Error, ParamStore, Result};

#[derive(Parser)]
#[command(name = "eirehn", version, about = "Elastic-depth recurrent network experiments")]
struct Cli {
    /// Read `key = value` defaults for the subcommand's flags from FILE.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic regression dataset.
    #[command(args_override_self = true)]
    SynthGen(SynthGenArgs),
    /// Train one spec over one or more seeds.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Run property suites.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Summarize metric files and emit plot data.
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthGenArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 21)]
    t: usize,
    #[arg(long, default_value_t = 10)]
    r_max: usize,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_6)]
    theta: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SpecArgs {
    #[arg(long, default_value = "synthetic")]
    task: String,
    #[arg(long, default_value = "eirehn")]
    cell: String,
    #[arg(long, default_value_t = 20)]
    d_h: usize,
    /// Hypernetwork width (default: half of D_h, rounded up).
    #[arg(long)]
    d_z: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Fixed recurrence depth for RHN and SRHN.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long)]
    r_max: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
    /// Synthetic dataset file written by `synth-gen`.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Sequences to generate when no --data file is given.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 21)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Synthetic split sizes `train,val,test` (default 80/10/10).
    #[arg(long, value_name = "A,B,C")]
    split: Option<String>,
    #[arg(long, value_name = "DIR")]
    har_root: Option<PathBuf>,
    #[arg(long, default_value_t = 35)]
    bptt: usize,
    #[arg(long, default_value_t = 0)]
    corpus_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "runs", value_name = "DIR")]
    out: PathBuf,
    /// Also write metrics as JSON lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Split to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    eval_split: String,
    /// Write the realized-depth histogram as `depth,count` CSV.
    #[arg(long, value_name = "PATH")]
    depth_histogram: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite to run (repeatable): gradcheck, gate-monotonicity, depth-bound,
    /// pass-through, reduction. Default: all.
    #[arg(long = "suite")]
    suites: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 10)]
    grad_seeds: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_name = "DIR")]
    metrics: PathBuf,
    /// Output directory for summary and plot data (default: the metrics directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated α values for gate curves.
    #[arg(long, default_value = "0.6931471805599453,0.25")]
    alpha: String,
    /// Comma-separated β values for gate curves.
    #[arg(long, default_value = "0.5,0.9")]
    beta: String,
    /// Largest r sampled on the gate curves.
    #[arg(long, default_value_t = 10)]
    curve_depth: usize,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} value `{v}`")))
        })
        .collect()
}

impl SpecArgs {
    fn build(&self) -> Result<ExperimentSpec> {
        let task: Task = self.task.parse()?;
        let cell: CellKind = self.cell.parse()?;
        let mut spec = ExperimentSpec::new(task, cell, self.d_h);
        spec.d_z = self.d_z;
        spec.depth = self.depth;
        if let Some(l) = self.layers {
            spec.layers = l;
        }
        if let Some(r) = self.r_max {
            spec.r_max = r;
        }
        if let Some(b) = self.batch_size {
            spec.train.batch_size = b;
        }
        if let Some(e) = self.epochs {
            spec.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            spec.train.learning_rate = lr;
        }
        if self.clip_norm.is_some() {
            spec.train.clip_norm = self.clip_norm;
        }
        spec.train.seed = self.seed;
        spec.train.eval_every = self.eval_every;
        spec.synth = match &self.data {
            Some(p) => SynthSource::File(p.clone()),
            None => SynthSource::Generate(SynthConfig {
                n: self.n,
                t: self.t,
                seed: self.data_seed,
                ..SynthConfig::default()
            }),
        };
        if let Some(s) = &self.split {
            match parse_list::<usize>(s, "split")?.as_slice() {
                &[a, b, c] => spec.split = Some((a, b, c)),
                _ => return Err(Error::Config("--split needs three sizes".into())),
            }
        }
        spec.har_root = self.har_root.clone();
        spec.bptt = self.bptt;
        spec.corpus_seed = self.corpus_seed;
        spec.validate()?;
        Ok(spec)
    }
}

fn cmd_synth_gen(a: &SynthGenArgs) -> Result<()> {
    let cfg = SynthConfig {
        n: a.n,
        t: a.t,
        r_max: a.r_max,
        theta: a.theta,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
    };
    if cfg.t < 2 {
        return Err(Error::Config("next-step regression needs T >= 2".into()));
    }
    let data = synth::generate(&cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    data.save(&a.out)?;
    println!("wrote {} sequences of length {} to {}", cfg.n, cfg.t, a.out.display());
    Ok(())
}

fn summarize(label: &str, results: &[ExperimentResult]) -> Vec<(Metric, f64, f64)> {
    let mut metrics: Vec<Metric> = results
        .iter()
        .flat_map(|r| r.test.values.iter().map(|(m, _)| *m))
        .collect();
    metrics.sort();
    metrics.dedup();
    let rows: Vec<_> = metrics
        .into_iter()
        .map(|m| {
            let vals: Vec<f64> = results.iter().filter_map(|r| r.test_value(m)).collect();
            let (mean, std) = mean_std(&vals);
            (m, mean, std)
        })
        .collect();
    for (m, mean, std) in &rows {
        println!("{label} test {m}: {mean:.6e} ± {std:.6e} over {} runs", results.len());
    }
    rows
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let base = a.spec.build()?;
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let specs: Vec<ExperimentSpec> = (0..a.seeds)
        .map(|k| {
            let mut s = base.clone();
            s.train.seed = base.train.seed + k;
            s.output = Some(a.out.clone());
            s
        })
        .collect();
    let mut results = Vec::new();
    for (spec, r) in specs.iter().zip(run_many(&specs, a.jobs)) {
        let r = r?;
        let params = r.parameters;
        println!(
            "{} seed {}: best epoch {}, {} parameters, test {}",
            r.label,
            spec.train.seed,
            r.best_epoch,
            params,
            r.test
                .values
                .iter()
                .map(|(m, v)| format!("{m}={v:.6e}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        if a.json {
            let path = a.out.join(format!("{}.jsonl", spec.file_stem()));
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write_json_lines(&mut f, &r.records)?;
        }
        results.push(r);
    }
    let label = base.label();
    let rows = summarize(&label, &results);
    let mut text = String::from("label,metric,mean,std,runs,parameters\n");
    for (m, mean, std) in rows {
        text += &format!("{label},{m},{mean:?},{std:?},{},{}\n", results.len(), results[0].parameters);
    }
    std::fs::write(a.out.join(format!("{label}.summary.csv")), text)?;
    Ok(())
}

fn eval_model<M: Model>(mut model: M, ckpt: &ParamStore, samples: &[M::Sample]) -> Result<EvalReport> {
    model.store_mut().load_values_from(ckpt)?;
    evaluate(&model, samples)
}

fn pick<T>(split: &str, train: T, val: T, test: T) -> Result<T> {
    match split {
        "train" => Ok(train),
        "val" => Ok(val),
        "test" => Ok(test),
        _ => Err(Error::Config(format!("unknown split `{split}`"))),
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let spec = a.spec.build()?;
    if !a.checkpoint.is_file() {
        return Err(Error::MissingData {
            root: a.checkpoint.parent().map(Path::to_path_buf).unwrap_or_default(),
            missing: vec![a.checkpoint.clone()],
        });
    }
    let ckpt = ParamStore::load(&a.checkpoint)?;
    let seed = spec.train.seed;
    let report = match spec.task {
        Task::Synthetic => {
            let (tr, va, te) = synthetic_splits(&spec)?;
            let model = Regressor::new(&spec.cell_config(Regressor::DIM), seed)?;
            eval_model(model, &ckpt, &pick(&a.eval_split, tr, va, te)?)?
        }
        Task::Har => {
            let (tr, va, te, data) = har_splits(&har_root(spec.har_root.as_deref()))?;
            let model = Classifier::new(&spec.cell_config(data.channels), spec.layers, 6, seed)?;
            eval_model(model, &ckpt, &pick(&a.eval_split, tr, va, te)?)?
        }
        Task::LmToy => {
            let c = datasets::toy_corpus(spec.corpus_seed);
            let model = TiedLanguageModel::new(&spec.cell_config(spec.d_h), c.vocab.len(), seed)?;
            let stream = pick(&a.eval_split, &c.train, &c.val, &c.test)?;
            eval_model(model, &ckpt, &bptt_windows(stream, spec.bptt))?
        }
    };
    println!("metric,value");
    for (m, v) in &report.values {
        println!("{m},{v:?}");
    }
    if let Some(path) = &a.depth_histogram {
        write_histogram(path, &depth_histogram(&report.stats.depths))?;
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let suites: Vec<Suite> = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    let opts = VerifyOptions {
        seed: a.seed,
        draws: a.draws,
        grad_seeds: a.grad_seeds,
        ..VerifyOptions::default()
    };
    let mut ok = true;
    for s in suites {
        let r = run_suite(s, &opts)?;
        println!("{r}");
        ok &= r.passed;
    }
    Ok(ok)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_data_error() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let argv = match config::splice(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::SynthGen(a) => cmd_synth_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Verify(a) => match cmd_verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: property verification failed");
                return ExitCode::from(3);
            }
            Err(e) => Err(e),
        },
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::MissingData { .. } = e {
                eprintln!("hint: pass the dataset location with --data or --har-root");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
