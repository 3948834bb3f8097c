//! `|∇u| = 1/s` with `u = 0` on the boundary of the unit square, by fast sweeping.

use super::GenError;

pub const SWEEP_TOL: f64 = 1e-8;
pub const MAX_ROUNDS: usize = 100;

/// Godunov upwind update from the smaller neighbour in each axis.
fn local_solve(a: f64, b: f64, f: f64) -> f64 {
    if (a - b).abs() >= f {
        a.min(b) + f
    } else {
        0.5 * (a + b + (2.0 * f * f - (a - b) * (a - b)).sqrt())
    }
}

/// One round of the four sweep orderings; returns the largest change.
pub fn sweep_round(u: &mut [f64], speed: &[f64], n: usize) -> f64 {
    let h = 1.0 / (n - 1) as f64;
    let mut change: f64 = 0.0;
    let fwd: Vec<usize> = (1..n - 1).collect();
    let bwd: Vec<usize> = (1..n - 1).rev().collect();
    for (rows, cols) in [(&fwd, &fwd), (&fwd, &bwd), (&bwd, &fwd), (&bwd, &bwd)] {
        for &i in rows.iter() {
            for &j in cols.iter() {
                let a = u[(i - 1) * n + j].min(u[(i + 1) * n + j]);
                let b = u[i * n + j - 1].min(u[i * n + j + 1]);
                let cand = local_solve(a, b, h / speed[i * n + j]);
                let cur = &mut u[i * n + j];
                if cand < *cur {
                    if cur.is_finite() {
                        change = change.max(*cur - cand);
                    } else {
                        change = f64::INFINITY;
                    }
                    *cur = cand;
                }
            }
        }
    }
    change
}

/// Travel time from the boundary on an `n × n` node grid with spacing `1/(n−1)`.
pub fn solve(speed: &[f64], n: usize) -> Result<Vec<f64>, GenError> {
    if n < 3 || speed.len() != n * n || speed.iter().any(|&s| !(s > 0.0)) {
        return Err(GenError::InvalidSpec("eikonal needs n ≥ 3 and positive speed".into()));
    }
    let mut u = vec![f64::INFINITY; n * n];
    for k in 0..n {
        u[k] = 0.0;
        u[(n - 1) * n + k] = 0.0;
        u[k * n] = 0.0;
        u[k * n + n - 1] = 0.0;
    }
    for _ in 0..MAX_ROUNDS {
        if sweep_round(&mut u, speed, n) < SWEEP_TOL {
            return Ok(u);
        }
    }
    Err(GenError::Solver(format!(
        "fast sweeping did not settle in {MAX_ROUNDS} rounds"
    )))
}
