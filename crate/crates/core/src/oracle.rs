//! Brute-force reference spectrum: finite-volume discretization of
//! `-(e^{-W} f')' = 2λ e^{-W} f` with Dirichlet ends, as the generalized
//! symmetric-definite tridiagonal problem `A f = λ D f`.
//!
//! Eigenvalues are counted from the inertia of `A - λD` (signed LDLᵀ pivots)
//! and eigenvectors come from inverse iteration. Nothing here is shared with
//! the shooting integrator except the environment itself.

use crate::env::{Environment, GridFunction, Sign};
use crate::error::{Error, Result};

const INVERSE_ITERATION_CAP: usize = 100;
const BISECTION_CAP: usize = 200;

/// Pencil `(A, D)` on the interior nodes `x_1 .. x_{N-1}`.
#[derive(Debug, Clone)]
pub struct TridiagSystem {
    /// Diagonal of `A`.
    pub diag: Vec<f64>,
    /// Sub/super-diagonal of `A` (length `m - 1`).
    pub off: Vec<f64>,
    /// Lumped masses `2e^{-W(x_i)} (x_{i+1} - x_{i-1}) / 2`.
    pub mass: Vec<f64>,
}

impl TridiagSystem {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin bound on the largest generalized eigenvalue.
    pub fn upper_bound(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let mut r = self.diag[i].abs();
                if i > 0 {
                    r += self.off[i - 1].abs();
                }
                if i + 1 < self.dim() {
                    r += self.off[i].abs();
                }
                r / self.mass[i]
            })
            .fold(0.0, f64::max)
    }
}

/// Assemble `A` from segment conductances `1/∫_seg e^{W}` and the lumped mass.
pub fn discretize(env: &Environment) -> TridiagSystem {
    let n = env.segments();
    let grid = env.grid();
    let e = env.exp_neg_w();
    let cond: Vec<f64> = (0..n)
        .map(|j| 1.0 / env.segment_integral(j, Sign::Plus))
        .collect();
    let m = n - 1;
    let mut diag = Vec::with_capacity(m);
    let mut mass = Vec::with_capacity(m);
    for i in 1..n {
        diag.push(cond[i - 1] + cond[i]);
        mass.push(2.0 * e[i] * 0.5 * (grid[i + 1] - grid[i - 1]));
    }
    let off = (1..m).map(|i| -cond[i]).collect();
    TridiagSystem { diag, off, mass }
}

/// Negative pivots of the LDLᵀ factorization of `A - λD`, or `None` on an
/// exactly zero pivot.
fn negative_pivots(sys: &TridiagSystem, lambda: f64) -> Option<usize> {
    let mut count = 0;
    let mut d = 0.0f64;
    for i in 0..sys.dim() {
        let t = sys.diag[i] - lambda * sys.mass[i];
        d = if i == 0 {
            t
        } else {
            t - sys.off[i - 1] * sys.off[i - 1] / d
        };
        if d == 0.0 {
            return None;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    Some(count)
}

/// Number of generalized eigenvalues strictly below `lambda`.
pub fn oracle_count(sys: &TridiagSystem, lambda: f64) -> usize {
    let mut shift = lambda;
    loop {
        if let Some(c) = negative_pivots(sys, shift) {
            return c;
        }
        shift = if shift == 0.0 {
            f64::MIN_POSITIVE
        } else {
            shift * (1.0 + 1e-12)
        };
    }
}

#[derive(Debug, Clone)]
pub struct OracleEigenpair {
    pub lambda: f64,
    /// Eigenvector on the full grid (zero at both ends), `D`-normalized and
    /// positive at the first interior node.
    pub vector: GridFunction,
}

/// Solve `(A - σD) x = rhs` by the Thomas algorithm.
fn solve_shifted(sys: &TridiagSystem, sigma: f64, rhs: &[f64]) -> Vec<f64> {
    let m = sys.dim();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let guard = |v: f64| if v == 0.0 { f64::EPSILON } else { v };
    let mut beta = guard(sys.diag[0] - sigma * sys.mass[0]);
    d[0] = rhs[0] / beta;
    for i in 1..m {
        c[i - 1] = sys.off[i - 1] / beta;
        beta = guard(sys.diag[i] - sigma * sys.mass[i] - sys.off[i - 1] * c[i - 1]);
        d[i] = (rhs[i] - sys.off[i - 1] * d[i - 1]) / beta;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

fn d_norm(sys: &TridiagSystem, x: &[f64]) -> f64 {
    x.iter()
        .zip(&sys.mass)
        .map(|(v, w)| v * v * w)
        .sum::<f64>()
        .sqrt()
}

/// Generalized eigenvalue `n` (1-based) by bisection on the inertia count.
pub fn oracle_eigenvalue(sys: &TridiagSystem, n: usize) -> Result<f64> {
    if n == 0 || n > sys.dim() {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue index {n} outside 1..={}",
            sys.dim()
        )));
    }
    let (mut lo, mut hi) = (0.0f64, sys.upper_bound() * (1.0 + 1e-12) + 1.0);
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            break;
        }
        if oracle_count(sys, mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `n`-th eigenpair: bisection on the inertia count, then inverse iteration.
pub fn oracle_eigenpair(sys: &TridiagSystem, n: usize) -> Result<OracleEigenpair> {
    let lambda = oracle_eigenvalue(sys, n)?;
    let m = sys.dim();
    let sigma = lambda;
    let mut x: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let norm = d_norm(sys, &x);
    x.iter_mut().for_each(|v| *v /= norm);
    let mut converged = false;
    for _ in 0..INVERSE_ITERATION_CAP {
        let rhs: Vec<f64> = x.iter().zip(&sys.mass).map(|(v, w)| v * w).collect();
        let mut y = solve_shifted(sys, sigma, &rhs);
        let norm = d_norm(sys, &y);
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        let sign = if y[0] < 0.0 { -1.0 } else { 1.0 };
        y.iter_mut().for_each(|v| *v *= sign / norm);
        let change = y
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        x = y;
        if change < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: format!("inverse iteration for oracle eigenpair {n}"),
            iterations: INVERSE_ITERATION_CAP,
        });
    }
    let mut full = Vec::with_capacity(m + 2);
    full.push(0.0);
    full.extend_from_slice(&x);
    full.push(0.0);
    Ok(OracleEigenpair {
        lambda,
        vector: GridFunction::from_vec(full),
    })
}
