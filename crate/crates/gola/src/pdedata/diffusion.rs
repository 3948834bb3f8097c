//! `u_t = ∇·(D(u)∇u)`, `D(u) = 0.01 + 0.1 u²`, periodic, explicit Heun steps.

use super::GenError;

pub const D0: f64 = 0.01;
pub const D2: f64 = 0.1;
/// Step limit `Δt ≤ CFL · Δx² / max D`.
pub const CFL: f64 = 0.2;

fn diffusivity(u: f64) -> f64 {
    D0 + D2 * u * u
}

/// Conservative flux-form right-hand side on the periodic `n × n` grid.
fn rhs(u: &[f64], n: usize, out: &mut [f64]) {
    let inv_dx2 = (n * n) as f64;
    let d: Vec<f64> = u.iter().map(|&v| diffusivity(v)).collect();
    for a in 0..n {
        let ap = (a + 1) % n;
        let am = (a + n - 1) % n;
        for b in 0..n {
            let bp = (b + 1) % n;
            let bm = (b + n - 1) % n;
            let k = a * n + b;
            let flux = |j: usize| 0.5 * (d[k] + d[j]) * (u[j] - u[k]);
            out[k] = (flux(ap * n + b) + flux(am * n + b) + flux(a * n + bp) + flux(a * n + bm)) * inv_dx2;
        }
    }
}

/// Integrates to `horizon`; `dt_scale ≤ 1` shrinks the stable step further.
pub fn integrate(f: &[f64], n: usize, horizon: f64, dt_scale: f64) -> Result<Vec<f64>, GenError> {
    let dx = 1.0 / n as f64;
    // maximum principle: |u| stays within the initial bound
    let bound = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dt_max = dt_scale * CFL * dx * dx / diffusivity(bound);
    let steps = (horizon / dt_max).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    if !(dt > f64::EPSILON * horizon) {
        return Err(GenError::Solver(format!("step size underflow ({dt:e})")));
    }
    let mut u = f.to_vec();
    let mut k1 = vec![0.0; n * n];
    let mut k2 = vec![0.0; n * n];
    let mut stage = vec![0.0; n * n];
    for step in 0..steps {
        rhs(&u, n, &mut k1);
        for k in 0..n * n {
            stage[k] = u[k] + dt * k1[k];
        }
        rhs(&stage, n, &mut k2);
        for k in 0..n * n {
            u[k] += 0.5 * dt * (k1[k] + k2[k]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(GenError::Solver(format!("non-finite state at step {step}")));
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(n: usize) -> Vec<f64> {
        (0..n * n)
            .map(|k| {
                let (a, b) = ((k / n) as f64 / n as f64, (k % n) as f64 / n as f64);
                (-((a - 0.5).powi(2) + (b - 0.4).powi(2)) * 20.0).exp()
            })
            .collect()
    }

    #[test]
    fn uniform_state_is_fixed() {
        let f = vec![0.7; 16 * 16];
        let u = integrate(&f, 16, 0.2, 1.0).unwrap();
        assert!(u.iter().all(|&v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn mass_is_conserved() {
        let f = bump(24);
        let u = integrate(&f, 24, 0.2, 1.0).unwrap();
        let (a, b): (f64, f64) = (f.iter().sum(), u.iter().sum());
        assert!((a - b).abs() / a < 1e-4);
        assert!(u.iter().cloned().fold(0.0, f64::max) < f.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn halving_the_step_changes_little() {
        let f = bump(24);
        let u1 = integrate(&f, 24, 0.2, 1.0).unwrap();
        let u2 = integrate(&f, 24, 0.2, 0.5).unwrap();
        let num: f64 = u1.iter().zip(&u2).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = u2.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() < 1e-3);
    }
}
