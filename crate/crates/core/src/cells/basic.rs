//! Baseline transitions: plain RNN, LSTM and fixed-depth highway network.

use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

use super::{fan_in_scale, CellState};

/// `W [h; x; 1]` with the bias folded into the last column.
pub(crate) fn affine_hx(tape: &mut Tape, w: Var, h: Var, x: Option<Var>) -> Result<Var> {
    let one = tape.scalar(1.0);
    let input = match x {
        Some(x) => tape.concat(&[h, x, one])?,
        None => tape.concat(&[h, one])?,
    };
    tape.matmul(w, input)
}

/// `h_t = tanh(W_R [h_{t-1}; x_t; 1])`.
#[derive(Clone, Debug)]
pub struct RnnCell {
    pub w: ParamId,
    pub d_h: usize,
    pub d_x: usize,
}

impl RnnCell {
    pub fn new(store: &mut ParamStore, prefix: &str, d_h: usize, d_x: usize, rng: &mut Rng) -> Self {
        let cols = d_h + d_x + 1;
        let w = store.add_uniform(format!("{prefix}.w_r"), &[d_h, cols], fan_in_scale(cols), rng);
        Self { w, d_h, d_x }
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var) -> Result<Var> {
        let pre = affine_hx(tape, p.var(self.w), h_prev, Some(x))?;
        tape.tanh(pre)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w]
    }
}

/// LSTM with row blocks of `W_L` ordered (proposal, input, forget, output).
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub d_h: usize,
    pub d_x: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, prefix: &str, d_h: usize, d_x: usize, rng: &mut Rng) -> Self {
        let cols = d_h + d_x + 1;
        let w = store.add_uniform(
            format!("{prefix}.w_l"),
            &[4 * d_h, cols],
            fan_in_scale(cols),
            rng,
        );
        Self { w, d_h, d_x }
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, state: &CellState, x: Var) -> Result<CellState> {
        let d = self.d_h;
        let c_prev = state.c.expect("LSTM state carries a cell vector");
        let pre = affine_hx(tape, p.var(self.w), state.h, Some(x))?;
        let a_pre = tape.slice(pre, 0, d)?;
        let i_pre = tape.slice(pre, d, d)?;
        let f_pre = tape.slice(pre, 2 * d, d)?;
        let o_pre = tape.slice(pre, 3 * d, d)?;
        let a = tape.tanh(a_pre)?;
        let i = tape.sigm(i_pre)?;
        let f = tape.sigm(f_pre)?;
        let o = tape.sigm(o_pre)?;
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, a)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok(CellState { h, c: Some(c) })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w]
    }
}

/// Fixed-depth highway transition with independent transform and carry
/// gates. Layer 1 sees `[h; x; 1]`; deeper layers see `[h; 1]` only, since
/// the input enters at the first layer alone.
#[derive(Clone, Debug)]
pub struct RhnCell {
    pub layers: Vec<ParamId>,
    pub d_h: usize,
    pub d_x: usize,
}

impl RhnCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        d_h: usize,
        d_x: usize,
        depth: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(depth >= 1, "highway depth must be at least 1");
        let layers = (1..=depth)
            .map(|r| {
                let cols = if r == 1 { d_h + d_x + 1 } else { d_h + 1 };
                store.add_uniform(
                    format!("{prefix}.w_h{r}"),
                    &[3 * d_h, cols],
                    fan_in_scale(cols),
                    rng,
                )
            })
            .collect();
        Self { layers, d_h, d_x }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var) -> Result<Var> {
        let d = self.d_h;
        let mut h = h_prev;
        for (r, &w) in self.layers.iter().enumerate() {
            let input = if r == 0 { Some(x) } else { None };
            let pre = affine_hx(tape, p.var(w), h, input)?;
            let s_pre = tape.slice(pre, 0, d)?;
            let t_pre = tape.slice(pre, d, d)?;
            let c_pre = tape.slice(pre, 2 * d, d)?;
            let s = tape.tanh(s_pre)?;
            let t = tape.sigm(t_pre)?;
            let c = tape.sigm(c_pre)?;
            let ts = tape.mul(t, s)?;
            let ch = tape.mul(c, h)?;
            h = tape.add(ts, ch)?;
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.clone()
    }
}
