//! Parameter initialisation and the small dense layers shared by every block.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{ParamVars, Tape, Var};
use crate::error::Result;
use crate::math;
use crate::rng::{self, Rng};
use crate::tensor::{ParamStore, Tensor};

/// I.i.d. uniform entries in `±bound`.
pub fn uniform_tensor(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng::uniform(rng, -bound, bound)).collect();
    Tensor::new(shape, data).expect("shape product")
}

/// Registers `{prefix}.w` (`fan_in × fan_out`) and optionally `{prefix}.b`,
/// both uniform in `±1/√fan_in`.
pub fn add_linear(
    store: &mut ParamStore,
    rng: &mut Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    bias: bool,
) -> Result<()> {
    let bound = 1.0 / math::sqrt(fan_in.max(1) as f64);
    store.insert(format!("{prefix}.w"), uniform_tensor(rng, &[fan_in, fan_out], bound))?;
    if bias {
        store.insert(format!("{prefix}.b"), uniform_tensor(rng, &[fan_out], bound))?;
    }
    Ok(())
}

/// `x · W (+ b)`, with the bias applied only if it was registered.
pub fn linear(tape: &mut Tape, p: &ParamVars, prefix: &str, x: Var) -> Result<Var> {
    let y = tape.matmul(x, p.get(&format!("{prefix}.w"))?)?;
    match p.find(&format!("{prefix}.b")) {
        Some(b) => tape.add(y, b),
        None => Ok(y),
    }
}

/// Registers a biased MLP `widths[0] → … → widths[last]` as `{prefix}.l{k}`.
pub fn add_mlp(store: &mut ParamStore, rng: &mut Rng, prefix: &str, widths: &[usize]) -> Result<()> {
    for (k, w) in widths.windows(2).enumerate() {
        add_linear(store, rng, &format!("{prefix}.l{k}"), w[0], w[1], true)?;
    }
    Ok(())
}

/// MLP forward with GELU between layers and a linear output.
pub fn mlp(tape: &mut Tape, p: &ParamVars, prefix: &str, layers: usize, x: Var) -> Result<Var> {
    let mut h = x;
    for k in 0..layers {
        h = linear(tape, p, &format!("{prefix}.l{k}"), h)?;
        if k + 1 < layers {
            h = tape.gelu(h);
        }
    }
    Ok(h)
}

/// Row-major `rows × cols` matrix of a closure, for building constants.
pub fn matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
    let data: Vec<f64> = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
    Tensor::new(&[rows, cols], data).expect("rows x cols")
}
