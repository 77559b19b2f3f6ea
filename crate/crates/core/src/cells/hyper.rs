//! Hypernetwork that emits diagonal weight deltas for the micro-layers.
//!
//! A small tanh RNN runs over micro-layers of one timestep. Its state feeds
//! two projection heads per stream (residual `s`, residual gating `g`): one
//! produces the diagonal delta `w = P z`, the other the update gate
//! `ḡ = sigm(P̄ z + b̄)`.

use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::fan_in_scale;

/// Initial `b̄`. Starts the update gate near 1, so an untrained cell leans
/// on its accumulated weights rather than the fresh delta.
pub const INIT_UPDATE_GATE_BIAS: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct StreamHead {
    pub proj: ParamId,
    pub gate_proj: ParamId,
    pub gate_bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct HyperNet {
    pub w_zh: ParamId,
    pub w_zg: ParamId,
    pub w_z: ParamId,
    pub b_z: ParamId,
    pub s: StreamHead,
    pub g: StreamHead,
    pub d_h: usize,
    pub d_z: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct HyperOut {
    pub z: Var,
    pub w_s: Var,
    pub w_g: Var,
    pub gbar_s: Var,
    pub gbar_g: Var,
}

impl HyperNet {
    pub fn new(store: &mut ParamStore, prefix: &str, d_h: usize, d_z: usize, rng: &mut Rng) -> Self {
        assert!(d_z >= 1, "hypernetwork state needs at least one unit");
        let in_scale = fan_in_scale(2 * d_h + d_z);
        let w_zh = store.add_uniform(format!("{prefix}.w_zh"), &[d_z, d_h], in_scale, rng);
        let w_zg = store.add_uniform(format!("{prefix}.w_zg"), &[d_z, d_h], in_scale, rng);
        let w_z = store.add_uniform(format!("{prefix}.w_z"), &[d_z, d_z], in_scale, rng);
        let b_z = store.add_uniform(format!("{prefix}.b_z"), &[d_z], in_scale, rng);
        let mut head = |name: &str, rng: &mut Rng| StreamHead {
            proj: store.add_uniform(
                format!("{prefix}.p_{name}"),
                &[d_h, d_z],
                fan_in_scale(d_z),
                rng,
            ),
            gate_proj: store.add_uniform(
                format!("{prefix}.pbar_{name}"),
                &[d_h, d_z],
                fan_in_scale(d_z),
                rng,
            ),
            gate_bias: store.add(
                format!("{prefix}.bbar_{name}"),
                Tensor::full(&[d_h], INIT_UPDATE_GATE_BIAS),
            ),
        };
        let s = head("s", rng);
        let g = head("g", rng);
        Self {
            w_zh,
            w_zg,
            w_z,
            b_z,
            s,
            g,
            d_h,
            d_z,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.w_zh,
            self.w_zg,
            self.w_z,
            self.b_z,
            self.s.proj,
            self.s.gate_proj,
            self.s.gate_bias,
            self.g.proj,
            self.g.gate_proj,
            self.g.gate_bias,
        ]
    }

    /// One hypernetwork update. `None` inputs stand for zero vectors, which
    /// is how the first micro-layer of every timestep starts.
    pub fn step(
        &self,
        tape: &mut Tape,
        p: &Bound,
        s_prev: Option<Var>,
        g_prev: Option<Var>,
        z_prev: Option<Var>,
    ) -> Result<HyperOut> {
        let mut pre = p.var(self.b_z);
        for (w, input) in [(self.w_zh, s_prev), (self.w_zg, g_prev), (self.w_z, z_prev)] {
            if let Some(v) = input {
                let term = tape.matmul(p.var(w), v)?;
                pre = tape.add(term, pre)?;
            }
        }
        let z = tape.tanh(pre)?;
        let w_s = tape.matmul(p.var(self.s.proj), z)?;
        let w_g = tape.matmul(p.var(self.g.proj), z)?;
        let gbar_s = self.update_gate(tape, p, &self.s, z)?;
        let gbar_g = self.update_gate(tape, p, &self.g, z)?;
        Ok(HyperOut {
            z,
            w_s,
            w_g,
            gbar_s,
            gbar_g,
        })
    }

    fn update_gate(&self, tape: &mut Tape, p: &Bound, head: &StreamHead, z: Var) -> Result<Var> {
        let lin = tape.matmul(p.var(head.gate_proj), z)?;
        let pre = tape.add(lin, p.var(head.gate_bias))?;
        tape.sigm(pre)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed(d_h: usize, d_z: usize) -> (ParamStore, HyperNet) {
        let mut store = ParamStore::new();
        let hyper = HyperNet::new(&mut store, "hy", d_h, d_z, &mut Rng::new(1));
        for id in hyper.param_ids() {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape)).unwrap();
        }
        (store, hyper)
    }

    #[test]
    fn zero_weights_give_neutral_outputs() {
        let (store, hyper) = zeroed(3, 2);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let s = tape.leaf(Tensor::vector(vec![0.4, -0.2, 0.9]));
        let g = tape.leaf(Tensor::vector(vec![0.1, 0.5, 0.7]));
        let z = tape.leaf(Tensor::vector(vec![0.3, -0.3]));
        let out = hyper.step(&mut tape, &p, Some(s), Some(g), Some(z)).unwrap();
        assert_eq!(tape.value(out.z).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(out.w_s).data(), &[0.0; 3]);
        assert_eq!(tape.value(out.w_g).data(), &[0.0; 3]);
        assert_eq!(tape.value(out.gbar_s).data(), &[0.5; 3]);
        assert_eq!(tape.value(out.gbar_g).data(), &[0.5; 3]);
    }

    #[test]
    fn scalar_state_example() {
        let (mut store, hyper) = zeroed(1, 1);
        store.set(hyper.w_zh, Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let s = tape.leaf(Tensor::vector(vec![1.0]));
        let g = tape.leaf(Tensor::vector(vec![0.0]));
        let z = tape.leaf(Tensor::vector(vec![0.0]));
        let out = hyper.step(&mut tape, &p, Some(s), Some(g), Some(z)).unwrap();
        assert!((tape.value(out.z).data()[0] - 0.761594).abs() < 1e-6);
    }

    #[test]
    fn activation_ranges() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(9);
        let hyper = HyperNet::new(&mut store, "hy", 4, 2, &mut rng);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let s = tape.leaf(Tensor::vector((0..4).map(|_| rng.uniform_in(-5.0, 5.0)).collect()));
        let out = hyper.step(&mut tape, &p, Some(s), Some(s), None).unwrap();
        assert!(tape.value(out.z).data().iter().all(|v| v.abs() < 1.0));
        assert!(tape
            .value(out.gbar_g)
            .data()
            .iter()
            .all(|&v| v > 0.0 && v < 1.0));
    }
}
