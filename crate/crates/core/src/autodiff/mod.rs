//! Reverse-mode differentiation over dense tensors.

mod complex;
mod tape;

pub use complex::Complex;
pub use tape::{Gradients, Tape, Var};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

/// Tape handles for every parameter of a [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Records every parameter of `store` on `tape` as a tracked leaf.
    pub fn register(tape: &mut Tape, store: &ParamStore) -> Self {
        let vars = store
            .iter()
            .map(|(name, t)| (name.to_string(), tape.param(t.clone())))
            .collect();
        ParamVars { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn find(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

/// Evaluates `build` once and returns the scalar loss with one gradient per
/// parameter. Parameters the loss does not touch get zero gradients.
pub fn forward_backward<F>(store: &ParamStore, build: F) -> Result<(f64, BTreeMap<String, Tensor>)>
where
    F: FnOnce(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, store);
    let loss = build(&mut tape, &vars)?;
    let value = scalar_of(&tape, loss)?;
    let grads = tape.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, t) in store.iter() {
        let var = vars.get(name)?;
        let g = match grads.get(var) {
            Some(g) => Tensor::new(t.shape(), g.to_vec())?,
            None => Tensor::zeros(t.shape()),
        };
        out.insert(name.to_string(), g);
    }
    Ok((value, out))
}

/// Forward pass only.
pub fn evaluate<F>(store: &ParamStore, build: F) -> Result<Tensor>
where
    F: FnOnce(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, store);
    let out = build(&mut tape, &vars)?;
    Ok(tape.value(out).clone())
}

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.numel() != 1 {
        return Err(crate::error::shape_err("loss", t.shape(), &[1]));
    }
    let value = t.data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss = {value}")));
    }
    Ok(value)
}

/// Largest `|analytic − central difference| / max(1, |central difference|)`
/// over every parameter entry.
pub fn grad_check<F>(loss_fn: F, store: &ParamStore, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    for (name, t) in store.iter() {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("parameter `{name}`")));
        }
    }
    let (_, analytic) = forward_backward(store, &loss_fn)?;
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    let names: alloc::vec::Vec<String> = store.names().map(String::from).collect();
    for name in &names {
        let n = store.get(name)?.numel();
        for k in 0..n {
            let orig = store.get(name)?.data()[k];
            probe.get_mut(name)?.data_mut()[k] = orig + step;
            let plus = loss_only(&probe, &loss_fn)?;
            probe.get_mut(name)?.data_mut()[k] = orig - step;
            let minus = loss_only(&probe, &loss_fn)?;
            probe.get_mut(name)?.data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[name].data()[k];
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn loss_only<F>(store: &ParamStore, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, store);
    let loss = loss_fn(&mut tape, &vars)?;
    scalar_of(&tape, loss)
}
