//! Property suites over the elastic cells, each run on a fixed seed matrix.

use std::fmt;
use std::str::FromStr;

use crate::cells::{EirehnCell, SrehnCell};
use crate::error::{Error, Result};
use crate::gradcheck::{grad_check, DEFAULT_EPS};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    GateMonotonicity,
    DepthBound,
    PassThrough,
    Reduction,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Gradcheck,
        Suite::GateMonotonicity,
        Suite::DepthBound,
        Suite::PassThrough,
        Suite::Reduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradcheck => "gradcheck",
            Suite::GateMonotonicity => "gate-monotonicity",
            Suite::DepthBound => "depth-bound",
            Suite::PassThrough => "pass-through",
            Suite::Reduction => "reduction",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown suite `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    /// Number of individual checks performed.
    pub checks: usize,
    pub violations: usize,
    /// Worst observed value of the suite's statistic (see `statistic`).
    pub worst: f64,
    pub statistic: &'static str,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} checks, {} violations, {} = {:e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.checks,
            self.violations,
            self.statistic,
            self.worst
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random draws for the sampling suites.
    pub draws: usize,
    /// Seeds for the gradient check.
    pub grad_seeds: usize,
    pub grad_tolerance: f64,
    pub reduction_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            draws: 1000,
            grad_seeds: 10,
            grad_tolerance: 1e-4,
            reduction_tolerance: 1e-12,
        }
    }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<SuiteReport> {
    match suite {
        Suite::Gradcheck => gradcheck_suite(opts),
        Suite::GateMonotonicity => monotonicity_suite(opts),
        Suite::DepthBound => depth_bound_suite(opts),
        Suite::PassThrough => pass_through_suite(opts),
        Suite::Reduction => reduction_suite(opts),
    }
}

fn uniform_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_in(-scale, scale)).collect()
}

fn randomize(store: &mut ParamStore, id: ParamId, rng: &mut Rng, scale: f64) {
    let t = store.get_mut(id);
    for v in t.data_mut() {
        *v = rng.uniform_in(-scale, scale);
    }
}

/// A small EI-REHN with randomized elastic-gate parameters.
fn random_cell(rng: &mut Rng, d_h: usize, d_x: usize, r_max: usize) -> (ParamStore, EirehnCell) {
    let mut store = ParamStore::new();
    let d_z = 1 + rng.below(3);
    let cell = EirehnCell::new(&mut store, "ei", d_h, d_x, d_z, r_max, rng);
    randomize(&mut store, cell.gate.alpha_hat, rng, 4.0);
    randomize(&mut store, cell.gate.beta_hat, rng, 4.0);
    randomize(&mut store, cell.gate.w_a, rng, 2.0);
    (store, cell)
}

fn leaf(tape: &mut Tape, v: Vec<f64>) -> Var {
    tape.leaf(Tensor::vector(v))
}

fn gradcheck_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let (d_h, d_x, d_z, r_max, steps) = (4, 2, 2, 3, 3);
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut violations = 0;
    for k in 0..opts.grad_seeds {
        let mut rng = Rng::derive(opts.seed, k as u64);
        let mut store = ParamStore::new();
        let cell = EirehnCell::new(&mut store, "ei", d_h, d_x, d_z, r_max, &mut rng);
        let xs: Vec<Vec<f64>> = (0..steps).map(|_| uniform_vec(&mut rng, d_x, 1.0)).collect();
        let weights: Vec<Vec<f64>> = (0..steps).map(|_| uniform_vec(&mut rng, d_h, 1.0)).collect();
        let report = grad_check(&store, DEFAULT_EPS, |tape, p| {
            let mut h = leaf(tape, vec![0.0; d_h]);
            let mut terms = Vec::with_capacity(steps);
            for (x, w) in xs.iter().zip(&weights) {
                let xv = leaf(tape, x.clone());
                h = cell.step(tape, p, h, xv)?.0;
                let wv = leaf(tape, w.clone());
                let wh = tape.mul(h, wv)?;
                terms.push(tape.sum(wh));
            }
            let all = tape.concat(&terms)?;
            Ok(tape.sum(all))
        })?;
        checks += report.elements;
        if report.max_rel_error >= opts.grad_tolerance {
            violations += 1;
        }
        worst = worst.max(report.max_rel_error);
    }
    Ok(SuiteReport {
        suite: Suite::Gradcheck,
        passed: violations == 0,
        checks,
        violations,
        worst,
        statistic: "max relative error",
    })
}

fn monotonicity_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = Rng::derive(opts.seed, 101);
    let (mut checks, mut violations, mut worst) = (0, 0, f64::NEG_INFINITY);
    for _ in 0..opts.draws {
        let d_h = 1 + rng.below(6);
        let d_x = 1 + rng.below(4);
        let (store, cell) = random_cell(&mut rng, d_h, d_x, 10);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = leaf(&mut tape, uniform_vec(&mut rng, d_h, 1.0));
        let x = leaf(&mut tape, uniform_vec(&mut rng, d_x, 2.0));
        let terms = cell.gate.terms(&mut tape, &p, h, x)?;
        let mut prev = cell.gate.at_depth(&mut tape, terms, 1)?;
        for r in 2..=12 {
            let next = cell.gate.at_depth(&mut tape, terms, r)?;
            for (a, b) in tape.value(next).data().iter().zip(tape.value(prev).data()) {
                checks += 1;
                worst = worst.max(a - b);
                if a > b {
                    violations += 1;
                }
            }
            prev = next;
        }
    }
    Ok(SuiteReport {
        suite: Suite::GateMonotonicity,
        passed: violations == 0,
        checks,
        violations,
        worst,
        statistic: "max d(r+1) - d(r)",
    })
}

fn depth_bound_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = Rng::derive(opts.seed, 102);
    let (mut checks, mut violations, mut worst) = (0, 0, i64::MIN);
    for _ in 0..opts.draws {
        let d_h = 1 + rng.below(5);
        let d_x = 1 + rng.below(3);
        let r_max = 1 + rng.below(10);
        let (store, cell) = random_cell(&mut rng, d_h, d_x, r_max);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = leaf(&mut tape, uniform_vec(&mut rng, d_h, 1.0));
        let x = leaf(&mut tape, uniform_vec(&mut rng, d_x, 2.0));
        let (_, trace) = cell.step(&mut tape, &p, h, x)?;
        let limit = r_max.min(cell.gate.depth_upper_bound(&store));
        checks += 1;
        worst = worst.max(trace.realized_depth as i64 - limit as i64);
        if trace.realized_depth > limit {
            violations += 1;
        }
    }
    Ok(SuiteReport {
        suite: Suite::DepthBound,
        passed: violations == 0,
        checks,
        violations,
        worst: worst as f64,
        statistic: "max R_t - min(R_max, bound)",
    })
}

fn pass_through_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = Rng::derive(opts.seed, 103);
    let (mut checks, mut violations) = (0, 0);
    for _ in 0..opts.draws {
        let d_h = 2 + rng.below(5);
        let d_x = 1 + rng.below(3);
        let r_max = 1 + rng.below(10);
        let (mut store, cell) = random_cell(&mut rng, d_h, d_x, r_max);
        // Close roughly half of the units for every micro-layer.
        for i in 0..d_h {
            if rng.below(2) == 0 {
                store.get_mut(cell.gate.beta_hat).data_mut()[i] = -60.0;
            }
        }
        let h_prev = uniform_vec(&mut rng, d_h, 1.0);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = leaf(&mut tape, h_prev.clone());
        let x = leaf(&mut tape, uniform_vec(&mut rng, d_x, 2.0));
        let (out, trace) = cell.step(&mut tape, &p, h, x)?;
        let out = tape.value(out).data();
        for i in 0..d_h {
            let closed = trace.gates[..trace.realized_depth].iter().all(|g| g[i] == 0.0);
            if closed {
                checks += 1;
                if out[i].to_bits() != h_prev[i].to_bits() {
                    violations += 1;
                }
            }
        }
    }
    Ok(SuiteReport {
        suite: Suite::PassThrough,
        passed: violations == 0 && checks > 0,
        checks,
        violations,
        worst: (checks - violations) as f64,
        statistic: "bit-exact carries",
    })
}

fn reduction_suite(opts: &VerifyOptions) -> Result<SuiteReport> {
    let mut rng = Rng::derive(opts.seed, 104);
    let draws = 100.min(opts.draws.max(1));
    let (mut checks, mut violations, mut worst) = (0, 0, 0.0f64);
    for _ in 0..draws {
        let d_h = 1 + rng.below(6);
        let d_x = 1 + rng.below(4);
        let mut store = ParamStore::new();
        let (d_z, r_max) = (1 + rng.below(3), 1 + rng.below(10));
        let ei = EirehnCell::new(&mut store, "ei", d_h, d_x, d_z, r_max, &mut rng);
        for id in ei.hyper.param_ids() {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape))?;
        }
        for head in [&ei.hyper.s, &ei.hyper.g] {
            store.set(head.gate_bias, Tensor::full(&[d_h], f64::INFINITY))?;
        }
        let sr = SrehnCell {
            s: ei.s.clone(),
            g: ei.g.clone(),
            gate: ei.gate.clone(),
            r_max: ei.r_max,
            d_h,
            d_x,
        };
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = leaf(&mut tape, uniform_vec(&mut rng, d_h, 1.0));
        let x = leaf(&mut tape, uniform_vec(&mut rng, d_x, 2.0));
        let (a, ta) = ei.step(&mut tape, &p, h, x)?;
        let (b, tb) = sr.step(&mut tape, &p, h, x)?;
        let diff = tape
            .value(a)
            .data()
            .iter()
            .zip(tape.value(b).data())
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        checks += 1;
        worst = worst.max(diff);
        if diff > opts.reduction_tolerance || ta.realized_depth != tb.realized_depth {
            violations += 1;
        }
    }
    Ok(SuiteReport {
        suite: Suite::Reduction,
        passed: violations == 0,
        checks,
        violations,
        worst,
        statistic: "max |EI-REHN - SREHN|",
    })
}
