//! Central finite-difference check of tape gradients.

use crate::error::{Error, Result};
use crate::params::{Bound, ParamStore};
use crate::tape::{Tape, Var};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Max over elements of `|a - n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    /// Tape and finite-difference gradients at the worst element.
    pub worst_pair: (f64, f64),
    pub elements: usize,
    /// `(tape, finite difference)` for every element, in store order.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheckReport {
    /// Mixed test `|a - n| <= abs_tol + rel_tol * max(|a|, |n|)` on every element.
    pub fn within(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.pairs
            .iter()
            .all(|&(a, n)| (a - n).abs() <= abs_tol + rel_tol * a.abs().max(n.abs()))
    }
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences `(f(p + eps) - f(p - eps)) / 2eps` for every parameter entry.
pub fn grad_check<F>(store: &ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    if let Some(id) = store.ids().find(|&id| !store.get(id).is_finite()) {
        return Err(Error::Numerical(format!(
            "parameter {} is not finite",
            store.name(id)
        )));
    }

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    let analytic = store.gradients(&bound, &tape.backward(loss)?);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        tape.value(loss).item()
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_pair: (0.0, 0.0),
        elements: 0,
        pairs: Vec::new(),
    };
    for id in store.ids() {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite objective perturbing {}[{i}]",
                    store.name(id)
                )));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.index()].data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.elements += 1;
            report.pairs.push((a, numeric));
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), i));
                report.worst_pair = (a, numeric);
            }
        }
    }
    Ok(report)
}
