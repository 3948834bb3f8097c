//! Learnable non-uniform Fourier encoder.
//!
//! Scattered samples `f(x_i)` are projected onto `exp(2πi⟨ω_m, x⟩)` at
//! learnable frequencies, filtered per mode by complex weights and
//! synthesised back at the same points. Complex arrays are real/imaginary
//! pairs on the tape, so gradients reach `f`, `ω` and `W` alike.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Complex, ParamVars, Tape, Var};
use crate::error::{shape_err, Result};
use crate::math;
use crate::nn;
use crate::rng::{self, Rng};
use crate::tensor::{ParamStore, Tensor};

/// The `modes` integer frequencies of smallest magnitude, both signs included,
/// ordered by `(|ω|², ω₁, ω₂)`.
pub fn lattice_frequencies(modes: usize) -> Vec<[f64; 2]> {
    let mut radius = 1i64;
    loop {
        let mut all: Vec<(i64, i64, i64)> = Vec::new();
        for a in -radius..=radius {
            for b in -radius..=radius {
                all.push((a * a + b * b, a, b));
            }
        }
        // Every frequency with |ω|² ≤ radius² is inside the box.
        let complete = all.iter().filter(|t| t.0 <= radius * radius).count();
        if complete >= modes {
            all.sort_unstable();
            return all
                .into_iter()
                .take(modes)
                .map(|(_, a, b)| [a as f64, b as f64])
                .collect();
        }
        radius *= 2;
    }
}

/// Lattice frequencies plus Gaussian jitter of standard deviation `jitter`.
pub fn init_frequencies(rng: &mut Rng, modes: usize, jitter: f64) -> Tensor {
    let data = lattice_frequencies(modes)
        .into_iter()
        .flat_map(|w| w.into_iter())
        .map(|v| v + jitter * rng::normal(rng))
        .collect();
    Tensor::new(&[modes, 2], data).expect("M x 2")
}

/// Registers `{prefix}.omega` (`M × 2`) and `{prefix}.w_re`, `{prefix}.w_im`
/// (`C_in × C_out × M`, uniform in `±1/√(C_in·M)`).
pub fn add_params(
    store: &mut ParamStore,
    rng: &mut Rng,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    modes: usize,
    jitter: f64,
) -> Result<()> {
    store.insert(format!("{prefix}.omega"), init_frequencies(rng, modes, jitter))?;
    let bound = 1.0 / math::sqrt((c_in * modes) as f64);
    let shape = [c_in, c_out, modes];
    store.insert(format!("{prefix}.w_re"), nn::uniform_tensor(rng, &shape, bound))?;
    store.insert(format!("{prefix}.w_im"), nn::uniform_tensor(rng, &shape, bound))?;
    Ok(())
}

/// `Φ_{i,m} = exp(2πi⟨ω_m, x_i⟩)` for `coords: N × 2`, `omega: M × 2`.
pub fn basis(tape: &mut Tape, coords: Var, omega: Var) -> Result<Complex> {
    let (sc, so) = (tape.shape(coords), tape.shape(omega));
    if sc.len() != 2 || so.len() != 2 || sc[1] != 2 || so[1] != 2 {
        return Err(shape_err("basis", sc, so));
    }
    let wt = tape.transpose(omega)?;
    let phase = tape.matmul(coords, wt)?;
    let phase = tape.scale(phase, 2.0 * math::PI);
    Ok(Complex::new(tape.cos(phase), tape.sin(phase)))
}

/// `û_{c,m} = (1/N) Σ_i f_{i,c} · conj(Φ_{i,m})`, returned as `C_in × M`.
pub fn forward_coefficients(tape: &mut Tape, f: Var, basis: Complex) -> Result<Complex> {
    let (sf, sb) = (tape.shape(f).to_vec(), tape.shape(basis.re).to_vec());
    if sf.len() != 2 || sf[0] != sb[0] {
        return Err(shape_err("forward_coefficients", &sf, &sb));
    }
    let n = sf[0] as f64;
    let ft = tape.transpose(f)?;
    let re = tape.matmul(ft, basis.re)?;
    let im = tape.matmul(ft, basis.im)?;
    Ok(Complex::new(tape.scale(re, 1.0 / n), tape.scale(im, -1.0 / n)))
}

/// `v̂_{o,m} = Σ_c û_{c,m} W_{c,o,m}` for `û: C_in × M`, `W: C_in × C_out × M`.
pub fn filter(tape: &mut Tape, u_hat: Complex, weights: Complex) -> Result<Complex> {
    let su = tape.shape(u_hat.re).to_vec();
    let sw = tape.shape(weights.re).to_vec();
    if su.len() != 2 || sw.len() != 3 || sw[0] != su[0] || sw[2] != su[1] {
        return Err(shape_err("filter", &su, &sw));
    }
    let (c_in, c_out, m) = (sw[0], sw[1], sw[2]);
    let lifted = Complex::new(
        tape.reshape(u_hat.re, &[c_in, 1, m])?,
        tape.reshape(u_hat.im, &[c_in, 1, m])?,
    );
    let prod = lifted.mul(tape, weights)?;
    let re = tape.sum_axis(prod.re, 0)?;
    let im = tape.sum_axis(prod.im, 0)?;
    Ok(Complex::new(
        tape.reshape(re, &[c_out, m])?,
        tape.reshape(im, &[c_out, m])?,
    ))
}

/// `h_{i,o} = Re(Σ_m v̂_{o,m} Φ_{i,m})`, returned as `N × C_out`.
pub fn inverse(tape: &mut Tape, v_hat: Complex, basis: Complex) -> Result<Var> {
    let (sv, sb) = (tape.shape(v_hat.re).to_vec(), tape.shape(basis.re).to_vec());
    if sv.len() != 2 || sv[1] != sb[1] {
        return Err(shape_err("inverse", &sv, &sb));
    }
    let vr = tape.transpose(v_hat.re)?;
    let vi = tape.transpose(v_hat.im)?;
    let a = tape.matmul(basis.re, vr)?;
    let b = tape.matmul(basis.im, vi)?;
    tape.sub(a, b)
}

/// Full encoder: basis, projection, filtering and real synthesis.
pub fn encode(tape: &mut Tape, f: Var, coords: Var, omega: Var, weights: Complex) -> Result<Var> {
    let phi = basis(tape, coords, omega)?;
    let u_hat = forward_coefficients(tape, f, phi)?;
    let v_hat = filter(tape, u_hat, weights)?;
    inverse(tape, v_hat, phi)
}

/// [`encode`] with the parameters registered by [`add_params`].
pub fn encode_with(tape: &mut Tape, p: &ParamVars, prefix: &str, f: Var, coords: Var) -> Result<Var> {
    let omega = p.get(&format!("{prefix}.omega"))?;
    let w = Complex::new(
        p.get(&format!("{prefix}.w_re"))?,
        p.get(&format!("{prefix}.w_im"))?,
    );
    encode(tape, f, coords, omega, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn periodic_grid(res: usize) -> Tensor {
        nn::matrix(res * res, 2, |k, a| {
            let idx = if a == 0 { k / res } else { k % res };
            idx as f64 / res as f64
        })
    }

    #[test]
    fn lattice_frequencies_start_at_zero_and_pair_signs() {
        let w = lattice_frequencies(5);
        assert_eq!(w[0], [0.0, 0.0]);
        let mut rest: Vec<[f64; 2]> = w[1..].to_vec();
        rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rest, vec![[-1.0, 0.0], [0.0, -1.0], [0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(lattice_frequencies(64).len(), 64);
    }

    #[test]
    fn zero_frequency_basis_is_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[&[0.1, 0.7], &[0.3, 0.2]]).unwrap());
        let w = tape.constant(Tensor::zeros(&[1, 2]));
        let phi = basis(&mut tape, x, w).unwrap();
        assert_eq!(tape.value(phi.re).data(), &[1.0, 1.0]);
        assert_eq!(tape.value(phi.im).data(), &[0.0, 0.0]);
    }

    #[test]
    fn half_period_basis_is_minus_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[&[0.5, 0.25]]).unwrap());
        let w = tape.constant(Tensor::from_rows(&[&[1.0, 0.0]]).unwrap());
        let phi = basis(&mut tape, x, w).unwrap();
        assert!((tape.value(phi.re).data()[0] + 1.0).abs() < 1e-15);
        assert!(tape.value(phi.im).data()[0].abs() < 1e-15);
    }

    #[test]
    fn constant_input_has_constant_coefficient() {
        let mut tape = Tape::new();
        let x = tape.constant(periodic_grid(8));
        let w = tape.constant(Tensor::zeros(&[1, 2]));
        let f = tape.constant(Tensor::full(&[64, 1], 3.0));
        let phi = basis(&mut tape, x, w).unwrap();
        let u = forward_coefficients(&mut tape, f, phi).unwrap();
        assert!((tape.value(u.re).data()[0] - 3.0).abs() < 1e-14);
        assert!(tape.value(u.im).data()[0].abs() < 1e-14);
    }

    #[test]
    fn identity_and_rotation_filters() {
        let mut tape = Tape::new();
        let ur = tape.constant(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
        let ui = tape.constant(Tensor::from_rows(&[&[0.0, -1.0]]).unwrap());
        let wr = tape.constant(Tensor::new(&[1, 1, 2], vec![1.0, 0.0]).unwrap());
        let wi = tape.constant(Tensor::new(&[1, 1, 2], vec![0.0, 1.0]).unwrap());
        let v = filter(&mut tape, Complex::new(ur, ui), Complex::new(wr, wi)).unwrap();
        // mode 0: identity; mode 1: (2 - i)·i = 1 + 2i
        assert_eq!(tape.value(v.re).data(), &[1.0, 1.0]);
        assert_eq!(tape.value(v.im).data(), &[0.0, 2.0]);
    }

    #[test]
    fn zero_input_encodes_to_zero() {
        let mut rng = rng::seeded(1);
        let mut store = ParamStore::new();
        add_params(&mut store, &mut rng, "enc", 2, 3, 9, 0.01).unwrap();
        let out = crate::autodiff::evaluate(&store, |tape, p| {
            let x = tape.constant(periodic_grid(4));
            let f = tape.constant(Tensor::zeros(&[16, 2]));
            encode_with(tape, p, "enc", f, x)
        })
        .unwrap();
        assert_eq!(out.shape(), &[16, 3]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_channel_count_is_a_shape_error() {
        let mut tape = Tape::new();
        let ur = tape.constant(Tensor::zeros(&[2, 4]));
        let wr = tape.constant(Tensor::zeros(&[3, 1, 4]));
        let u = Complex::new(ur, ur);
        let w = Complex::new(wr, wr);
        assert!(filter(&mut tape, u, w).is_err());
    }
}
