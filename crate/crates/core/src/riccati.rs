//! Eigenvalue counting through explosions of the Riccati variable
//! `P = ψ'/ψ`, which solves `dP = (-2λ - P² + P/2)dt + P dW` with the
//! environment as driving noise and the space variable as time.
//!
//! Every zero of `ψ` is a passage of `P` to `-∞`, after which `P` is restarted
//! at `+∞`. Both are represented by `∓cap`.

use crate::env::{Environment, Sign};
use crate::error::{Error, Result};

pub const DEFAULT_CAP: f64 = 1e8;
/// Target number of sampled points in a path record.
const PATH_SAMPLES: usize = 1000;

#[derive(Debug, Clone)]
pub struct RiccatiRun {
    pub lambda: f64,
    pub cap: f64,
    pub explosion_count: usize,
    /// Left node of the segment in which each explosion happened.
    pub explosions: Vec<f64>,
    /// Sparse `(x, P)` record; explosion nodes are always included.
    pub path: Vec<(f64, f64)>,
}

fn check(lambda: f64, cap: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(cap >= 1e6 && cap.is_finite()) {
        return Err(Error::InvalidArgument(format!("cap must be >= 1e6, got {cap}")));
    }
    Ok(())
}

struct Recorder {
    stride: usize,
    path: Vec<(f64, f64)>,
    explosions: Vec<f64>,
}

impl Recorder {
    fn new(env: &Environment) -> Self {
        Recorder {
            stride: (env.segments() / PATH_SAMPLES).max(1),
            path: Vec::new(),
            explosions: Vec::new(),
        }
    }

    fn node(&mut self, i: usize, x: f64, p: f64) {
        if i.is_multiple_of(self.stride) {
            self.path.push((x, p));
        }
    }

    fn explode(&mut self, x_left: f64, x_right: f64, cap: f64) {
        self.explosions.push(x_left);
        self.path.push((x_left, -cap));
        self.path.push((x_right, cap));
    }
}

/// One step over a segment of length `h` with environment increment `dw`.
/// Returns `None` when `P` passes `-∞`.
fn riccati_step(p: f64, lambda: f64, h: f64, dw: f64, cap: f64) -> Option<f64> {
    // Itô left point for the linear part P/2 dt + P dW.
    let p = p * (1.0 + 0.5 * h + dw);
    let p = if p.abs() * h >= 0.5 || p.abs() > cap / 10.0 {
        // exact flow of P' = -P²
        let inv = 1.0 / p + h;
        if p < 0.0 && inv >= 0.0 {
            return None;
        }
        1.0 / inv
    } else {
        p - p * p * h
    };
    Some(p - 2.0 * lambda * h)
}

/// Euler–Maruyama integration of the Riccati SDE over the environment grid,
/// started at `+cap`, counting passages below `-cap`.
pub fn riccati_path(env: &Environment, lambda: f64, cap: f64) -> Result<RiccatiRun> {
    check(lambda, cap)?;
    let grid = env.grid();
    let w = env.w();
    let mut rec = Recorder::new(env);
    let mut p = cap;
    rec.node(0, grid[0], p);
    for i in 0..env.segments() {
        let h = grid[i + 1] - grid[i];
        p = match riccati_step(p, lambda, h, w[i + 1] - w[i], cap) {
            Some(next) if next > -cap => next,
            _ => {
                rec.explode(grid[i], grid[i + 1], cap);
                cap
            }
        };
        if !p.is_finite() {
            return Err(Error::GridTooCoarse(format!(
                "Riccati variable left the representable range at x = {}",
                grid[i + 1]
            )));
        }
        rec.node(i + 1, grid[i + 1], p);
    }
    Ok(RiccatiRun {
        lambda,
        cap,
        explosion_count: rec.explosions.len(),
        explosions: rec.explosions,
        path: rec.path,
    })
}

/// Noise-free companion `Q = e^{-W}ψ'/ψ`, which solves
/// `Q' = -2λe^{-W} - e^{W}Q²`. On each segment the coefficients are frozen at
/// their segment averages and the resulting constant-coefficient equation is
/// solved exactly through `Q = r·tan θ`, `θ' = -√(αβ)`.
pub fn quasi_riccati_path(env: &Environment, lambda: f64) -> Result<RiccatiRun> {
    quasi_riccati_path_with(env, lambda, DEFAULT_CAP)
}

pub fn quasi_riccati_path_with(env: &Environment, lambda: f64, cap: f64) -> Result<RiccatiRun> {
    check(lambda, cap)?;
    use std::f64::consts::{FRAC_PI_2, PI};
    let grid = env.grid();
    let mut rec = Recorder::new(env);
    let mut q = cap;
    rec.node(0, grid[0], q);
    for i in 0..env.segments() {
        let h = grid[i + 1] - grid[i];
        let alpha = 2.0 * lambda * env.segment_integral(i, Sign::Minus) / h;
        let beta = env.segment_integral(i, Sign::Plus) / h;
        let r = (alpha / beta).sqrt();
        let theta0 = (q / r).atan();
        let theta1 = theta0 - (alpha * beta).sqrt() * h;
        let mut passes = if theta1 <= -FRAC_PI_2 {
            ((-FRAC_PI_2 - theta1) / PI).floor() as usize + 1
        } else {
            0
        };
        // reduce into (-π/2, π/2]
        let reduced = theta1 + passes as f64 * PI;
        q = if reduced >= FRAC_PI_2 { cap } else { r * reduced.tan() };
        if q <= -cap {
            passes += 1;
            q = cap;
        }
        for _ in 0..passes {
            rec.explode(grid[i], grid[i + 1], cap);
        }
        rec.node(i + 1, grid[i + 1], q);
    }
    Ok(RiccatiRun {
        lambda,
        cap,
        explosion_count: rec.explosions.len(),
        explosions: rec.explosions,
        path: rec.path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::eigenvalue_count;
    use crate::env::sample_environment;
    use crate::shooting::pruefer_phase;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn flat_medium_explodes_at_cotangent_poles() {
        let env = Environment::flat(0.0, 1.0, 10_000).unwrap();
        let run = riccati_path(&env, PI * PI / 2.0 + 0.1, DEFAULT_CAP).unwrap();
        assert_eq!(run.explosion_count, 1);
        assert_eq!(riccati_path(&env, 1.0, DEFAULT_CAP).unwrap().explosion_count, 0);
        for lambda in [1.0, 10.0, 50.0] {
            let p = riccati_path(&env, lambda, DEFAULT_CAP).unwrap().explosion_count;
            let q = quasi_riccati_path(&env, lambda).unwrap().explosion_count;
            assert_eq!(p, q);
        }
    }

    #[test]
    fn below_ground_state_no_explosions() {
        let env = sample_environment(0.0, 1.0, 4000, 42).unwrap();
        let run = riccati_path(&env, 0.5, DEFAULT_CAP).unwrap();
        assert_eq!(run.explosion_count, 0);
        assert_eq!(quasi_riccati_path(&env, 0.5).unwrap().explosion_count, 0);
    }

    #[test]
    fn counters_agree_on_random_medium() {
        let env = sample_environment(0.0, 1.0, 10_000, 42).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let lambda = rng.random_range(0.5..200.0);
            let n = eigenvalue_count(&env, lambda).unwrap();
            let q = quasi_riccati_path(&env, lambda).unwrap().explosion_count;
            assert_eq!(q, n, "lambda = {lambda}");
            let phase = pruefer_phase(&env, lambda).unwrap();
            assert_eq!((phase[env.len() - 1] / PI).floor() as usize, n);
        }
        assert_eq!(riccati_path(&env, 100.0, DEFAULT_CAP).unwrap().explosion_count, eigenvalue_count(&env, 100.0).unwrap());
    }

    #[test]
    fn monotone_and_cap_insensitive() {
        let env = sample_environment(0.0, 1.0, 5000, 7).unwrap();
        let mut prev = 0;
        for k in 1..=40 {
            let lambda = 5.0 * k as f64 + 0.37;
            let c = riccati_path(&env, lambda, 1e6).unwrap().explosion_count;
            assert!(c >= prev);
            prev = c;
            for cap in [1e8, 1e10] {
                assert_eq!(riccati_path(&env, lambda, cap).unwrap().explosion_count, c);
            }
        }
    }

    #[test]
    fn path_record_is_sparse() {
        let env = sample_environment(0.0, 1.0, 10_000, 1).unwrap();
        let run = riccati_path(&env, 150.0, DEFAULT_CAP).unwrap();
        assert!(run.path.len() <= PATH_SAMPLES + 2 + 2 * run.explosion_count);
        assert_eq!(run.explosions.len(), run.explosion_count);
        assert!(run.explosions.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn rejects_bad_arguments() {
        let env = Environment::flat(0.0, 1.0, 100).unwrap();
        assert!(riccati_path(&env, 0.0, DEFAULT_CAP).is_err());
        assert!(riccati_path(&env, 1.0, 1e5).is_err());
        assert!(quasi_riccati_path(&env, -1.0).is_err());
    }
}
