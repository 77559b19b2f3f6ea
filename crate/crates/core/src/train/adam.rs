use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates mirroring the tensors of one `ParamStore`.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected Adam step. Nothing is modified when any gradient
    /// is non-finite or misshapen.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            let p = store.get(id);
            if g.shape() != p.shape() {
                return Err(Error::shape("adam update", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for parameter {}",
                    store.name(id)
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (((p, g), m), v) in store
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_param(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::vector(values));
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = one_param(vec![0.0]);
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.01));
        adam.update(&mut store, &[Tensor::vector(vec![1.0])]).unwrap();
        let expect = -0.01 / (1.0 + 1e-8);
        assert!((store.tensors()[0].data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = one_param(vec![0.3, -2.0]);
        let before = store.clone();
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.01));
        for _ in 0..5 {
            adam.update(&mut store, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(store, before);
    }

    #[test]
    fn later_steps_follow_reference_recursion() {
        let gs = [0.5, -1.5, 2.0, 0.1];
        let mut store = one_param(vec![1.0]);
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.1));
        let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &g) in gs.iter().enumerate() {
            adam.update(&mut store, &[Tensor::vector(vec![g])]).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let k = (t + 1) as i32;
            p -= 0.1 * (m / (1.0 - 0.9f64.powi(k))) / ((v / (1.0 - 0.999f64.powi(k))).sqrt() + 1e-8);
        }
        assert!((store.tensors()[0].data()[0] - p).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = one_param(vec![0.0]);
        let before = store.clone();
        let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.01));
        let err = adam
            .update(&mut store, &[Tensor::vector(vec![f64::NAN])])
            .unwrap_err();
        assert!(err.to_string().contains("parameter p"), "{err}");
        assert_eq!(store, before);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])];
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
        assert!((g[1].data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(clip_global_norm(&mut g, 10.0), 1.0);
    }

    proptest! {
        #[test]
        fn first_step_sign_opposes_gradient(
            g in prop::collection::vec(-1e3f64..1e3, 1..8),
            scale in 1e-3f64..1e3,
        ) {
            let n = g.len();
            let mut a = one_param(vec![0.0; n]);
            let mut b = one_param(vec![0.0; n]);
            let mut adam_a = AdamState::new(&a, AdamConfig::with_lr(0.01));
            let mut adam_b = AdamState::new(&b, AdamConfig::with_lr(0.01));
            adam_a.update(&mut a, &[Tensor::vector(g.clone())]).unwrap();
            let scaled: Vec<f64> = g.iter().map(|x| x * scale).collect();
            adam_b.update(&mut b, &[Tensor::vector(scaled)]).unwrap();
            for i in 0..n {
                let da = a.tensors()[0].data()[i];
                let db = b.tensors()[0].data()[i];
                if g[i] != 0.0 {
                    prop_assert_eq!(da.signum(), -g[i].signum());
                    prop_assert_eq!(db.signum(), -g[i].signum());
                } else {
                    prop_assert_eq!(da, 0.0);
                }
                prop_assert!(adam_a.v[0].data()[i] >= 0.0);
            }
        }
    }
}
