use crate::error::{Error, Result};
use crate::tape::{softmax, Tape, Var};
use crate::tensor::Tensor;

/// Mean over all elements of the squared difference.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse", pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::Contract("mse of empty tensors".into()));
    }
    let sq: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sq / pred.len() as f64)
}

/// `-log softmax(logits)[label]` with max subtraction.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Domain {
            op: "cross_entropy",
            detail: format!("label {label} out of range for {} classes", logits.len()),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Differentiable counterpart of [`mse`].
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

pub fn cross_entropy_loss(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    tape.cross_entropy(logits, label)
}

/// `exp` of the mean per-token cross-entropy in nats.
pub fn perplexity(total_cross_entropy: f64, tokens: usize) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::Contract("perplexity needs at least one token".into()));
    }
    Ok((total_cross_entropy / tokens as f64).exp())
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn probabilities(logits: &[f64]) -> Vec<f64> {
    softmax(logits)
}
