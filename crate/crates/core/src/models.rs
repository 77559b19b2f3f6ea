//! Task models: next-step regressor, sequence classifier and a
//! tied-embedding language model.

use crate::cells::{fan_in_scale, unroll, Cell, CellConfig, Stack, StepTrace};
use crate::datasets::HarSample;
use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::synth::{regression_pairs, SequenceSample};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::{cross_entropy, streams, Forward, Metric, Model, Stats};

fn depths(traces: &[StepTrace]) -> Vec<usize> {
    traces.iter().map(|t| t.realized_depth).collect()
}

fn input_leaves(tape: &mut Tape, rows: impl Iterator<Item = Vec<f64>>) -> Vec<Var> {
    rows.map(|r| tape.leaf(Tensor::vector(r))).collect()
}

/// `W h + b` read-out.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        Self {
            w: store.add_uniform(format!("{prefix}.w"), &[d_out, d_in], fan_in_scale(d_in), rng),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[d_out])),
        }
    }

    pub fn apply(&self, tape: &mut Tape, p: &Bound, h: Var) -> Result<Var> {
        let wh = tape.matmul(p.var(self.w), h)?;
        tape.add(wh, p.var(self.b))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

/// Predicts `x_{t+1}` from the hidden state after reading `x_1..x_t`.
#[derive(Clone, Debug)]
pub struct Regressor {
    pub store: ParamStore,
    pub cell: Cell,
    pub head: Linear,
}

impl Regressor {
    pub const DIM: usize = 2;

    pub fn new(cfg: &CellConfig, seed: u64) -> Result<Self> {
        if cfg.d_x != Self::DIM {
            return Err(Error::Config(format!("regression inputs are {}-dimensional", Self::DIM)));
        }
        let mut rng = Rng::derive(seed, streams::INIT);
        let mut store = ParamStore::new();
        let cell = Cell::build(cfg, &mut store, "cell", &mut rng)?;
        let head = Linear::new(&mut store, "out", cfg.d_h, Self::DIM, &mut rng);
        Ok(Self { store, cell, head })
    }

    /// Predictions as a flat `[(T-1) * 2]` vector plus the per-step traces.
    pub fn predict(&self, tape: &mut Tape, p: &Bound, sample: &SequenceSample) -> Result<(Var, Tensor, Vec<StepTrace>)> {
        let (inputs, targets) = regression_pairs(sample)?;
        let xs = input_leaves(tape, inputs.iter().map(|x| x.to_vec()));
        let run = unroll(&self.cell, tape, p, None, &xs)?;
        let preds = run
            .hs
            .iter()
            .map(|&h| self.head.apply(tape, p, h))
            .collect::<Result<Vec<_>>>()?;
        let flat = tape.concat(&preds)?;
        Ok((flat, targets, run.traces))
    }
}

impl Model for Regressor {
    type Sample = SequenceSample;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, sample: &SequenceSample) -> Result<Forward> {
        let (pred, targets, traces) = self.predict(tape, p, sample)?;
        let n = targets.len();
        let target = tape.leaf(targets.reshape(vec![n])?);
        let loss = crate::train::mse_loss(tape, pred, target)?;
        let mse = tape.value(loss).item()?;
        Ok(Forward {
            loss,
            stats: Stats {
                squared_error: mse * n as f64,
                elements: n,
                depths: depths(&traces),
                ..Stats::default()
            },
        })
    }

    fn metrics(&self) -> &'static [Metric] {
        &[Metric::Mse]
    }
}

/// `W_c h_last + b_c`; the softmax lives in the loss.
pub fn classify_head(tape: &mut Tape, h_last: Var, w_c: Var, b_c: Var) -> Result<Var> {
    let wh = tape.matmul(w_c, h_last)?;
    tape.add(wh, b_c)
}

/// Stacked recurrent layers with a softmax read-out on the top layer's last state.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub store: ParamStore,
    pub stack: Stack,
    pub head: Linear,
    pub classes: usize,
}

impl Classifier {
    pub fn new(cfg: &CellConfig, layers: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = Rng::derive(seed, streams::INIT);
        let mut store = ParamStore::new();
        let stack = Stack::build(cfg, layers, &mut store, "layer", &mut rng)?;
        let head = Linear::new(&mut store, "out", cfg.d_h, classes, &mut rng);
        Ok(Self {
            store,
            stack,
            head,
            classes,
        })
    }

    pub fn logits(&self, tape: &mut Tape, p: &Bound, signal: &Tensor) -> Result<(Var, Vec<usize>)> {
        let c = signal.cols();
        let xs = input_leaves(tape, signal.data().chunks(c).map(<[f64]>::to_vec));
        let runs = self.stack.unroll(tape, p, &xs)?;
        let top = runs.last().and_then(|r| r.hs.last().copied()).expect("non-empty run");
        let logits = classify_head(tape, top, p.var(self.head.w), p.var(self.head.b))?;
        let depths = runs.iter().flat_map(|r| depths(&r.traces)).collect();
        Ok((logits, depths))
    }
}

impl Model for Classifier {
    type Sample = HarSample;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, sample: &HarSample) -> Result<Forward> {
        let (logits, depths) = self.logits(tape, p, &sample.signal)?;
        let loss = tape.cross_entropy(logits, sample.label)?;
        let z = tape.value(logits).data();
        Ok(Forward {
            stats: Stats {
                cross_entropy: tape.value(loss).item()?,
                tokens: 1,
                correct: usize::from(crate::train::argmax(z) == sample.label),
                examples: 1,
                depths,
                ..Stats::default()
            },
            loss,
        })
    }

    fn metrics(&self) -> &'static [Metric] {
        &[Metric::Accuracy, Metric::CrossEntropy]
    }
}

/// Recurrent language model whose embedding matrix `U [H, C]` also
/// produces the output logits `Uᵀ h_t`.
#[derive(Clone, Debug)]
pub struct TiedLanguageModel {
    pub store: ParamStore,
    pub embedding: ParamId,
    pub cell: Cell,
    pub vocab: usize,
}

impl TiedLanguageModel {
    /// `cfg.d_x` is ignored; the embedding width equals `cfg.d_h`.
    pub fn new(cfg: &CellConfig, vocab: usize, seed: u64) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let mut rng = Rng::derive(seed, streams::INIT);
        let mut store = ParamStore::new();
        let embedding = store.add_uniform("embedding", &[cfg.d_h, vocab], fan_in_scale(cfg.d_h), &mut rng);
        let cell_cfg = CellConfig { d_x: cfg.d_h, ..*cfg };
        let cell = Cell::build(&cell_cfg, &mut store, "cell", &mut rng)?;
        Ok(Self {
            store,
            embedding,
            cell,
            vocab,
        })
    }

    /// Next-token logits after each of `ids`, from a zero initial state.
    pub fn logits(&self, tape: &mut Tape, p: &Bound, ids: &[usize]) -> Result<(Vec<Var>, Vec<StepTrace>)> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::Domain {
                op: "lm_forward",
                detail: format!("token id {bad} out of range for vocabulary {}", self.vocab),
            });
        }
        let u = p.var(self.embedding);
        let xs = ids
            .iter()
            .map(|&i| tape.column(u, i))
            .collect::<Result<Vec<_>>>()?;
        let run = unroll(&self.cell, tape, p, None, &xs)?;
        let logits = run
            .hs
            .iter()
            .map(|&h| tape.matvec_t(u, h))
            .collect::<Result<Vec<_>>>()?;
        Ok((logits, run.traces))
    }
}

impl Model for TiedLanguageModel {
    /// A window of `L + 1` tokens: inputs `w_1..w_L`, targets `w_2..w_{L+1}`.
    type Sample = Vec<usize>;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, tape: &mut Tape, p: &Bound, window: &Vec<usize>) -> Result<Forward> {
        if window.len() < 2 {
            return Err(Error::Contract("a language-model window needs two tokens".into()));
        }
        let (logits, traces) = self.logits(tape, p, &window[..window.len() - 1])?;
        let mut losses = Vec::with_capacity(logits.len());
        let mut ce = 0.0;
        for (&z, &target) in logits.iter().zip(&window[1..]) {
            ce += cross_entropy(tape.value(z).data(), target)?;
            losses.push(tape.cross_entropy(z, target)?);
        }
        let all = tape.concat(&losses)?;
        let loss = tape.mean(all);
        Ok(Forward {
            loss,
            stats: Stats {
                cross_entropy: ce,
                tokens: logits.len(),
                depths: depths(&traces),
                ..Stats::default()
            },
        })
    }

    fn metrics(&self) -> &'static [Metric] {
        &[Metric::CrossEntropy, Metric::Perplexity]
    }
}
