//! Shared-weight highway transitions with coupled gates: SRHN (fixed
//! depth), SREHN (elastic depth) and EI-REHN (elastic depth with
//! hypernetwork-generated weights).
//!
//! Every micro-layer applies
//!
//! ```text
//! h^r = g^r ⊗ s^r + (1 − g^r) ⊗ h^{r−1}
//! ```
//!
//! where `s^r` is the residual component and `g^r` the gate. SRHN uses a
//! sigmoid gate directly; the elastic variants use `g^r = d^r ⊗ ĝ^r` and stop
//! at the first layer whose gate is identically zero.

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

use super::elastic::ElasticGate;
use super::fan_in_scale;
use super::hyper::HyperNet;

/// Weights of one residual stream: dense base hidden-to-hidden matrix,
/// input matrix (first micro-layer only) and bias.
#[derive(Clone, Debug)]
pub struct Stream {
    pub w: ParamId,
    pub w_x: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigm,
}

/// Hypernetwork contribution to one stream at one micro-layer.
#[derive(Clone, Copy, Debug)]
pub struct Dynamic {
    /// Diagonal of the deltas accumulated over earlier micro-layers, `None`
    /// when nothing has accumulated yet.
    pub accum: Option<Var>,
    /// Fresh diagonal delta `w^r`.
    pub delta: Var,
    /// Update gate `ḡ^r`.
    pub gate: Var,
}

impl Stream {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        name: &str,
        d_h: usize,
        d_x: usize,
        rng: &mut Rng,
    ) -> Self {
        let scale = fan_in_scale(d_h + d_x + 1);
        Self {
            w: store.add_uniform(format!("{prefix}.w_{name}"), &[d_h, d_h], scale, rng),
            w_x: store.add_uniform(format!("{prefix}.w_x{name}"), &[d_h, d_x], scale, rng),
            b: store.add_uniform(format!("{prefix}.b_{name}"), &[d_h], scale, rng),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.w_x, self.b]
    }
}

/// Residual component or residual gating for one micro-layer:
///
/// ```text
/// act( ḡ ⊗ (W h + A ⊗ h) + (1 − ḡ) ⊗ (w ⊗ h) + W_x x 𝕀[r = 1] + b )
/// ```
///
/// `W + diag(A)` is the weight reached after the previous micro-layer and
/// `diag(w)` the new delta. Without a dynamic part this is
/// `act(W h + W_x x 𝕀[r = 1] + b)`. `x` is passed only at the first layer.
pub fn gated_residual(
    tape: &mut Tape,
    p: &Bound,
    stream: &Stream,
    act: Activation,
    dynamic: Option<Dynamic>,
    h_in: Var,
    x: Option<Var>,
) -> Result<Var> {
    let base = tape.matmul(p.var(stream.w), h_in)?;
    let mut pre = match dynamic {
        None => base,
        Some(dy) => {
            let carried = match dy.accum {
                Some(a) => {
                    let ah = tape.mul(a, h_in)?;
                    tape.add(base, ah)?
                }
                None => base,
            };
            let kept = tape.mul(dy.gate, carried)?;
            let fresh = tape.mul(dy.delta, h_in)?;
            let open = tape.one_minus(dy.gate)?;
            let fresh = tape.mul(open, fresh)?;
            tape.add(kept, fresh)?
        }
    };
    if let Some(x) = x {
        let xin = tape.matmul(p.var(stream.w_x), x)?;
        pre = tape.add(pre, xin)?;
    }
    pre = tape.add(pre, p.var(stream.b))?;
    match act {
        Activation::Tanh => tape.tanh(pre),
        Activation::Sigm => tape.sigm(pre),
    }
}

/// Per-timestep diagnostics of an elastic transition.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepTrace {
    /// Number of micro-layers applied, `R_t`.
    pub realized_depth: usize,
    /// `g^r` for every evaluated layer, including the halting one.
    pub gates: Vec<Vec<f64>>,
    /// `d^r` for every evaluated layer.
    pub elastic: Vec<Vec<f64>>,
    /// Hypernetwork states `z^r` (empty for SREHN).
    pub hyper_states: Vec<Vec<f64>>,
    /// True when the loop stopped on an all-zero gate rather than `R_max`.
    pub halted_by_gate: bool,
}

fn check_finite(tape: &Tape, v: Var, r: usize) -> Result<()> {
    if tape.value(v).is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite hidden state at micro-layer r={r}")))
    }
}

/// Shared-weight highway cell with fixed depth.
#[derive(Clone, Debug)]
pub struct SrhnCell {
    pub s: Stream,
    pub g: Stream,
    pub depth: usize,
    pub d_h: usize,
    pub d_x: usize,
}

impl SrhnCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        d_h: usize,
        d_x: usize,
        depth: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(depth >= 1, "depth must be at least 1");
        Self {
            s: Stream::new(store, prefix, "s", d_h, d_x, rng),
            g: Stream::new(store, prefix, "g", d_h, d_x, rng),
            depth,
            d_h,
            d_x,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [self.s.param_ids(), self.g.param_ids()].concat()
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var) -> Result<Var> {
        let mut h = h_prev;
        for r in 1..=self.depth {
            let xin = (r == 1).then_some(x);
            let s = gated_residual(tape, p, &self.s, Activation::Tanh, None, h, xin)?;
            let g = gated_residual(tape, p, &self.g, Activation::Sigm, None, h, xin)?;
            h = tape.mix(g, s, h)?;
        }
        Ok(h)
    }
}

/// Shared-weight highway cell whose depth is set by the elastic gate.
#[derive(Clone, Debug)]
pub struct SrehnCell {
    pub s: Stream,
    pub g: Stream,
    pub gate: ElasticGate,
    pub r_max: usize,
    pub d_h: usize,
    pub d_x: usize,
}

impl SrehnCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        d_h: usize,
        d_x: usize,
        r_max: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(r_max >= 1, "R_max must be at least 1");
        Self {
            s: Stream::new(store, prefix, "s", d_h, d_x, rng),
            g: Stream::new(store, prefix, "g", d_h, d_x, rng),
            gate: ElasticGate::new(store, &format!("{prefix}.gate"), d_h, d_x, rng),
            r_max,
            d_h,
            d_x,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [self.s.param_ids(), self.g.param_ids(), self.gate.param_ids()].concat()
    }

    pub fn step(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var) -> Result<(Var, StepTrace)> {
        let terms = self.gate.terms(tape, p, h_prev, x)?;
        let mut trace = StepTrace::default();
        let mut h = h_prev;
        for r in 1..=self.r_max {
            let xin = (r == 1).then_some(x);
            let s = gated_residual(tape, p, &self.s, Activation::Tanh, None, h, xin)?;
            let g_hat = gated_residual(tape, p, &self.g, Activation::Sigm, None, h, xin)?;
            let d = self.gate.at_depth(tape, terms, r)?;
            let g = tape.mul(d, g_hat)?;
            trace.elastic.push(tape.value(d).data().to_vec());
            trace.gates.push(tape.value(g).data().to_vec());
            if tape.value(g).l1_norm() > 0.0 {
                h = tape.mix(g, s, h)?;
                check_finite(tape, h, r)?;
                trace.realized_depth = r;
            } else {
                trace.halted_by_gate = true;
                break;
            }
        }
        Ok((h, trace))
    }
}

/// Elastic-depth highway cell with hypernetwork-generated diagonal weight
/// updates.
#[derive(Clone, Debug)]
pub struct EirehnCell {
    pub s: Stream,
    pub g: Stream,
    pub gate: ElasticGate,
    pub hyper: HyperNet,
    pub r_max: usize,
    pub d_h: usize,
    pub d_x: usize,
    pub d_z: usize,
}

impl EirehnCell {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        d_h: usize,
        d_x: usize,
        d_z: usize,
        r_max: usize,
        rng: &mut Rng,
    ) -> Self {
        assert!(r_max >= 1, "R_max must be at least 1");
        Self {
            s: Stream::new(store, prefix, "s", d_h, d_x, rng),
            g: Stream::new(store, prefix, "g", d_h, d_x, rng),
            gate: ElasticGate::new(store, &format!("{prefix}.gate"), d_h, d_x, rng),
            hyper: HyperNet::new(store, &format!("{prefix}.hyper"), d_h, d_z, rng),
            r_max,
            d_h,
            d_x,
            d_z,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        [
            self.s.param_ids(),
            self.g.param_ids(),
            self.gate.param_ids(),
            self.hyper.param_ids(),
        ]
        .concat()
    }

    /// One timestep with adaptive recurrence depth.
    ///
    /// Per timestep the dynamic weights restart from the learned base
    /// matrices and the hypernetwork from a zero state with zero inputs.
    pub fn step(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var) -> Result<(Var, StepTrace)> {
        let terms = self.gate.terms(tape, p, h_prev, x)?;
        let mut trace = StepTrace::default();
        let mut h = h_prev;
        let (mut s_prev, mut g_prev, mut z_prev) = (None, None, None);
        let (mut acc_s, mut acc_g): (Option<Var>, Option<Var>) = (None, None);

        for r in 1..=self.r_max {
            let hy = self.hyper.step(tape, p, s_prev, g_prev, z_prev)?;
            let xin = (r == 1).then_some(x);
            let dyn_s = Dynamic {
                accum: acc_s,
                delta: hy.w_s,
                gate: hy.gbar_s,
            };
            let dyn_g = Dynamic {
                accum: acc_g,
                delta: hy.w_g,
                gate: hy.gbar_g,
            };
            let s = gated_residual(tape, p, &self.s, Activation::Tanh, Some(dyn_s), h, xin)?;
            let g_hat = gated_residual(tape, p, &self.g, Activation::Sigm, Some(dyn_g), h, xin)?;
            let d = self.gate.at_depth(tape, terms, r)?;
            let g = tape.mul(d, g_hat)?;

            trace.hyper_states.push(tape.value(hy.z).data().to_vec());
            trace.elastic.push(tape.value(d).data().to_vec());
            trace.gates.push(tape.value(g).data().to_vec());

            if tape.value(g).l1_norm() > 0.0 {
                h = tape.mix(g, s, h)?;
                check_finite(tape, h, r)?;
                trace.realized_depth = r;
            } else {
                trace.halted_by_gate = true;
                break;
            }

            acc_s = Some(match acc_s {
                Some(a) => tape.add(a, hy.w_s)?,
                None => hy.w_s,
            });
            acc_g = Some(match acc_g {
                Some(a) => tape.add(a, hy.w_g)?,
                None => hy.w_g,
            });
            s_prev = Some(s);
            g_prev = Some(g_hat);
            z_prev = Some(hy.z);
        }
        Ok((h, trace))
    }
}
