use alloc::format;

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::math;

/// Denominator guard of the relative error.
pub const REL_EPS: f64 = 1e-12;

/// `‖truth − pred‖₂ / (‖truth‖₂ + 1e-12)`.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(shape_err("relative_l2", &[pred.len()], &[truth.len()]));
    }
    if !pred.iter().chain(truth).all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("relative_l2 input")));
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p) * (t - p)).sum();
    let den: f64 = truth.iter().map(|t| t * t).sum();
    Ok(math::sqrt(num) / (math::sqrt(den) + REL_EPS))
}

/// Differentiable [`relative_l2`] of `pred` against a constant `truth`.
pub fn relative_l2_on_tape(tape: &mut Tape, pred: Var, truth: Var) -> Result<Var> {
    let diff = tape.sub(pred, truth)?;
    let sq = tape.square(diff);
    let num = tape.sum(sq);
    let num = tape.sqrt(num);
    let t = tape.value(truth).data();
    let den = math::sqrt(t.iter().map(|v| v * v).sum::<f64>()) + REL_EPS;
    Ok(tape.scale(num, 1.0 / den))
}
