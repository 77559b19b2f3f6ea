//! Recurrent state-transition models.

mod basic;
pub mod elastic;
mod highway;
pub mod hyper;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use basic::{LstmCell, RhnCell, RnnCell};
pub use elastic::{ElasticGate, GateTerms};
pub use highway::{
    gated_residual, Activation, Dynamic, EirehnCell, SrehnCell, SrhnCell, StepTrace, Stream,
};
pub use hyper::{HyperNet, HyperOut};

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub(crate) fn fan_in_scale(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// Hypernetwork width used when none is given: half the hidden size, rounded up.
pub fn default_d_z(d_h: usize) -> usize {
    d_h.div_ceil(2).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Rhn,
    Srhn,
    Srehn,
    Eirehn,
}

impl CellKind {
    pub const ALL: [CellKind; 6] = [
        CellKind::Rnn,
        CellKind::Lstm,
        CellKind::Rhn,
        CellKind::Srhn,
        CellKind::Srehn,
        CellKind::Eirehn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Rhn => "rhn",
            CellKind::Srhn => "srhn",
            CellKind::Srehn => "srehn",
            CellKind::Eirehn => "eirehn",
        }
    }

    pub fn is_elastic(self) -> bool {
        matches!(self, CellKind::Srehn | CellKind::Eirehn)
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown cell `{s}`")))
    }
}

/// Sizes of one recurrent layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub kind: CellKind,
    pub d_h: usize,
    pub d_x: usize,
    /// Hypernetwork width (EI-REHN only).
    pub d_z: usize,
    /// Fixed depth for RHN and SRHN.
    pub depth: usize,
    /// Maximum depth for SREHN and EI-REHN.
    pub r_max: usize,
}

impl CellConfig {
    pub fn new(kind: CellKind, d_h: usize, d_x: usize) -> Self {
        Self {
            kind,
            d_h,
            d_x,
            d_z: default_d_z(d_h),
            depth: 1,
            r_max: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.d_x == 0 {
            return Err(Error::Config("hidden and input sizes must be positive".into()));
        }
        if self.depth == 0 || self.r_max == 0 || self.d_z == 0 {
            return Err(Error::Config("depth, R_max and D_z must be positive".into()));
        }
        Ok(())
    }
}

/// Recurrent state threaded through time. `c` is the LSTM cell vector.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
}

#[derive(Clone, Debug)]
pub enum Cell {
    Rnn(RnnCell),
    Lstm(LstmCell),
    Rhn(RhnCell),
    Srhn(SrhnCell),
    Srehn(SrehnCell),
    Eirehn(EirehnCell),
}

impl Cell {
    pub fn build(cfg: &CellConfig, store: &mut ParamStore, prefix: &str, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (d_h, d_x) = (cfg.d_h, cfg.d_x);
        Ok(match cfg.kind {
            CellKind::Rnn => Cell::Rnn(RnnCell::new(store, prefix, d_h, d_x, rng)),
            CellKind::Lstm => Cell::Lstm(LstmCell::new(store, prefix, d_h, d_x, rng)),
            CellKind::Rhn => Cell::Rhn(RhnCell::new(store, prefix, d_h, d_x, cfg.depth, rng)),
            CellKind::Srhn => Cell::Srhn(SrhnCell::new(store, prefix, d_h, d_x, cfg.depth, rng)),
            CellKind::Srehn => Cell::Srehn(SrehnCell::new(store, prefix, d_h, d_x, cfg.r_max, rng)),
            CellKind::Eirehn => Cell::Eirehn(EirehnCell::new(
                store, prefix, d_h, d_x, cfg.d_z, cfg.r_max, rng,
            )),
        })
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Rnn(_) => CellKind::Rnn,
            Cell::Lstm(_) => CellKind::Lstm,
            Cell::Rhn(_) => CellKind::Rhn,
            Cell::Srhn(_) => CellKind::Srhn,
            Cell::Srehn(_) => CellKind::Srehn,
            Cell::Eirehn(_) => CellKind::Eirehn,
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            Cell::Rnn(c) => c.d_h,
            Cell::Lstm(c) => c.d_h,
            Cell::Rhn(c) => c.d_h,
            Cell::Srhn(c) => c.d_h,
            Cell::Srehn(c) => c.d_h,
            Cell::Eirehn(c) => c.d_h,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Cell::Rnn(c) => c.d_x,
            Cell::Lstm(c) => c.d_x,
            Cell::Rhn(c) => c.d_x,
            Cell::Srhn(c) => c.d_x,
            Cell::Srehn(c) => c.d_x,
            Cell::Eirehn(c) => c.d_x,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Cell::Rnn(c) => c.param_ids(),
            Cell::Lstm(c) => c.param_ids(),
            Cell::Rhn(c) => c.param_ids(),
            Cell::Srhn(c) => c.param_ids(),
            Cell::Srehn(c) => c.param_ids(),
            Cell::Eirehn(c) => c.param_ids(),
        }
    }

    /// Learnable scalars of this cell, biases and gate pre-activations included.
    pub fn count_parameters(&self, store: &ParamStore) -> usize {
        store.count_of(&self.param_ids())
    }

    pub fn elastic_gate(&self) -> Option<&ElasticGate> {
        match self {
            Cell::Srehn(c) => Some(&c.gate),
            Cell::Eirehn(c) => Some(&c.gate),
            _ => None,
        }
    }

    pub fn init_state(&self, tape: &mut Tape) -> CellState {
        let d = self.hidden_size();
        let h = tape.leaf(Tensor::zeros(&[d]));
        let c = matches!(self, Cell::Lstm(_)).then(|| tape.leaf(Tensor::zeros(&[d])));
        CellState { h, c }
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        state: &CellState,
        x: Var,
    ) -> Result<(CellState, Option<StepTrace>)> {
        let x_len = tape.value(x).len();
        if x_len != self.input_size() || tape.value(state.h).len() != self.hidden_size() {
            return Err(Error::shape(
                "cell step",
                &[self.hidden_size(), self.input_size()],
                &[tape.value(state.h).len(), x_len],
            ));
        }
        let hidden = |h| CellState { h, c: None };
        Ok(match self {
            Cell::Rnn(c) => (hidden(c.step(tape, p, state.h, x)?), None),
            Cell::Lstm(c) => (c.step(tape, p, state, x)?, None),
            Cell::Rhn(c) => (hidden(c.step(tape, p, state.h, x)?), None),
            Cell::Srhn(c) => (hidden(c.step(tape, p, state.h, x)?), None),
            Cell::Srehn(c) => {
                let (h, tr) = c.step(tape, p, state.h, x)?;
                (hidden(h), Some(tr))
            }
            Cell::Eirehn(c) => {
                let (h, tr) = c.step(tape, p, state.h, x)?;
                (hidden(h), Some(tr))
            }
        })
    }
}

/// Hidden sequence and per-step traces of an unrolled layer.
#[derive(Clone, Debug, Default)]
pub struct Unrolled {
    pub hs: Vec<Var>,
    pub traces: Vec<StepTrace>,
    pub last: Option<CellState>,
}

/// Threads the state of `cell` through `xs`, starting from `init` or zeros.
pub fn unroll(
    cell: &Cell,
    tape: &mut Tape,
    p: &Bound,
    init: Option<CellState>,
    xs: &[Var],
) -> Result<Unrolled> {
    if xs.is_empty() {
        return Err(Error::Contract("cannot unroll an empty sequence".into()));
    }
    let mut state = init.unwrap_or_else(|| cell.init_state(tape));
    let mut out = Unrolled::default();
    for (t, &x) in xs.iter().enumerate() {
        let (next, trace) = cell.step(tape, p, &state, x).map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!("t={}: {msg}", t + 1)),
            other => other,
        })?;
        state = next;
        out.hs.push(state.h);
        if let Some(tr) = trace {
            out.traces.push(tr);
        }
    }
    out.last = Some(state);
    Ok(out)
}

/// Layers applied bottom-up; layer `l` consumes the hidden sequence of `l - 1`.
#[derive(Clone, Debug)]
pub struct Stack {
    pub layers: Vec<Cell>,
}

impl Stack {
    /// Builds `layers` cells of the same kind. The first reads `cfg.d_x`
    /// inputs, later ones read `cfg.d_h`.
    pub fn build(
        cfg: &CellConfig,
        layers: usize,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut Rng,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("a stack needs at least one layer".into()));
        }
        let layers = (0..layers)
            .map(|l| {
                let mut c = *cfg;
                if l > 0 {
                    c.d_x = cfg.d_h;
                }
                Cell::build(&c, store, &format!("{prefix}{l}"), rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn top_hidden_size(&self) -> usize {
        self.layers.last().map_or(0, Cell::hidden_size)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Cell::param_ids).collect()
    }

    /// Returns the unrolled output of every layer, bottom first.
    pub fn unroll(&self, tape: &mut Tape, p: &Bound, xs: &[Var]) -> Result<Vec<Unrolled>> {
        let mut outputs: Vec<Unrolled> = Vec::with_capacity(self.layers.len());
        for cell in &self.layers {
            let inputs = outputs.last().map_or(xs, |u| u.hs.as_slice()).to_vec();
            outputs.push(unroll(cell, tape, p, None, &inputs)?);
        }
        Ok(outputs)
    }
}
