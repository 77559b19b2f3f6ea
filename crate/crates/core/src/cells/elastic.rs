//! Elastic gate: a rectified, exponentially decreasing function of the
//! micro-layer index that decides how deep each timestep recurs.
//!
//! ```text
//! α   = softplus(α̂)                 global decreasing rate, > 0
//! β   = sigm(β̂)                     initial gating bias, in (0, 1)
//! α_t = sigm(W_a [h_{t-1}; x_t; 1])  local rate, fixed for the whole timestep
//! d^r = max(β + e^α − e^{(α + α_t) r}, 0)
//! ```
//!
//! Because `α + α_t > 0`, `d^r` is non-increasing in `r` and, once zero, stays
//! zero. With `α_t = 0` the last positive layer is bounded by
//! `⌊ln(β + e^α) / α⌋`, which therefore bounds the realized depth for any
//! input.

use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{sigmoid, softplus, Tape, Var};
use crate::tensor::Tensor;

use super::basic::affine_hx;
use super::fan_in_scale;

/// Initial pre-activations. With these, `α ≈ 0.127`, `β ≈ 0.881` and
/// `α_t ≈ 0.047`, so an untrained cell recurs about four layers deep.
pub const INIT_ALPHA_HAT: f64 = -2.0;
pub const INIT_BETA_HAT: f64 = 2.0;
pub const INIT_RATE_BIAS: f64 = -3.0;

#[derive(Clone, Debug)]
pub struct ElasticGate {
    pub alpha_hat: ParamId,
    pub beta_hat: ParamId,
    pub w_a: ParamId,
    pub d_h: usize,
    pub d_x: usize,
}

/// Per-timestep quantities shared by every micro-layer.
#[derive(Clone, Copy, Debug)]
pub struct GateTerms {
    /// `β + e^α`
    pub ceiling: Var,
    /// `α + α_t`
    pub rate: Var,
}

impl ElasticGate {
    pub fn new(store: &mut ParamStore, prefix: &str, d_h: usize, d_x: usize, rng: &mut Rng) -> Self {
        let alpha_hat = store.add(
            format!("{prefix}.alpha_hat"),
            Tensor::full(&[d_h], INIT_ALPHA_HAT),
        );
        let beta_hat = store.add(
            format!("{prefix}.beta_hat"),
            Tensor::full(&[d_h], INIT_BETA_HAT),
        );
        let cols = d_h + d_x + 1;
        let w_a = store.add_uniform(format!("{prefix}.w_a"), &[d_h, cols], fan_in_scale(cols), rng);
        let w = store.get_mut(w_a);
        for i in 0..d_h {
            w.data_mut()[i * cols + cols - 1] = INIT_RATE_BIAS;
        }
        Self {
            alpha_hat,
            beta_hat,
            w_a,
            d_h,
            d_x,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.alpha_hat, self.beta_hat, self.w_a]
    }

    /// Computes `β + e^α` and `α + α_t` once for a timestep.
    pub fn terms(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var) -> Result<GateTerms> {
        let alpha = tape.softplus(p.var(self.alpha_hat))?;
        let beta = tape.sigm(p.var(self.beta_hat))?;
        let e_alpha = tape.exp(alpha)?;
        let ceiling = tape.add(beta, e_alpha)?;
        let pre = affine_hx(tape, p.var(self.w_a), h_prev, Some(x))?;
        let local = tape.sigm(pre)?;
        let rate = tape.add(alpha, local)?;
        Ok(GateTerms { ceiling, rate })
    }

    /// `d^r` from precomputed terms.
    pub fn at_depth(&self, tape: &mut Tape, terms: GateTerms, r: usize) -> Result<Var> {
        let scaled = tape.scale(terms.rate, r as f64)?;
        let decay = tape.exp(scaled)?;
        let diff = tape.sub(terms.ceiling, decay)?;
        tape.max0(diff)
    }

    /// `d^r` for a single timestep and micro-layer.
    pub fn eval(&self, tape: &mut Tape, p: &Bound, h_prev: Var, x: Var, r: usize) -> Result<Var> {
        assert!(r >= 1, "micro-layer index starts at 1");
        let terms = self.terms(tape, p, h_prev, x)?;
        self.at_depth(tape, terms, r)
    }

    /// Derived `(α, β)` per unit.
    pub fn rates(&self, store: &ParamStore) -> (Vec<f64>, Vec<f64>) {
        let alpha = store.get(self.alpha_hat).data().iter().map(|&v| softplus(v)).collect();
        let beta = store.get(self.beta_hat).data().iter().map(|&v| sigmoid(v)).collect();
        (alpha, beta)
    }

    /// Input-independent bound on the realized depth.
    pub fn depth_upper_bound(&self, store: &ParamStore) -> usize {
        let (alpha, beta) = self.rates(store);
        alpha
            .iter()
            .zip(&beta)
            .map(|(&a, &b)| unit_depth_bound(a, b))
            .max()
            .unwrap_or(0)
    }
}

/// `⌊ln(β + e^α) / α⌋` for one unit, saturating for vanishing `α`.
pub fn unit_depth_bound(alpha: f64, beta: f64) -> usize {
    let v = ((beta + alpha.exp()).ln() / alpha).floor();
    if v.is_finite() {
        v.max(0.0) as usize
    } else {
        usize::MAX
    }
}

/// Gate value for given `(α, β)`, local rate and depth, on plain numbers.
pub fn gate_value(alpha: f64, beta: f64, local_rate: f64, r: usize) -> f64 {
    (beta + alpha.exp() - ((alpha + local_rate) * r as f64).exp()).max(0.0)
}
