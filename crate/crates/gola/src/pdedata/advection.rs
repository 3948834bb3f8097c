//! `u_t + c·∇u = 0` on the periodic unit square, solved by an exact shift.

/// `u(x, T) = f(x − cT)` with bilinear interpolation on the periodic
/// `n × n` grid (`n` points per period along both axes).
pub fn advect(f: &[f64], n: usize, velocity: [f64; 2], horizon: f64) -> Vec<f64> {
    // displacement in grid cells
    let da = velocity[0] * horizon * n as f64;
    let db = velocity[1] * horizon * n as f64;
    let (ia, fa) = split(da, n);
    let (ib, fb) = split(db, n);
    let mut u = vec![0.0; n * n];
    for a in 0..n {
        // source row positions a - da = (a - ia) - fa
        let a0 = (a + n - ia) % n;
        let a1 = (a0 + n - 1) % n;
        for b in 0..n {
            let b0 = (b + n - ib) % n;
            let b1 = (b0 + n - 1) % n;
            u[a * n + b] = (1.0 - fa) * ((1.0 - fb) * f[a0 * n + b0] + fb * f[a0 * n + b1])
                + fa * ((1.0 - fb) * f[a1 * n + b0] + fb * f[a1 * n + b1]);
        }
    }
    u
}

/// Whole cells mod `n` and the fractional remainder in `[0, 1)`.
fn split(shift: f64, n: usize) -> (usize, f64) {
    let whole = shift.floor();
    let frac = shift - whole;
    let whole = (whole as i64).rem_euclid(n as i64) as usize;
    (whole, frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_velocity_is_identity() {
        let f: Vec<f64> = (0..64).map(|k| (k as f64).sin()).collect();
        assert_eq!(advect(&f, 8, [0.0, 0.0], 0.5), f);
    }

    #[test]
    fn full_period_returns_initial_condition() {
        let n = 32;
        let f: Vec<f64> = (0..n * n).map(|k| (2.0 * PI * (k / n) as f64 / n as f64).sin()).collect();
        let u = advect(&f, n, [1.0, 0.0], 1.0);
        let err = u.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        let n = 24;
        let f: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 97) as f64 / 97.0).collect();
        let u = advect(&f, n, [1.0, 0.5], 0.37);
        let (mf, mu): (f64, f64) = (f.iter().sum(), u.iter().sum());
        assert!((mf - mu).abs() / mf.abs() < 1e-6);
    }
}
