//! Discrete generator `L f = (e^W/2)(e^{-W} f')'` in quasi-derivative form.
//!
//! The quasi-derivative `e^{-W} f'` is formed on each segment as
//! `(f_{i+1} - f_i) / ∫_seg e^{W}`, i.e. with the harmonic mean of `e^{-W}`.
//! This is exact for the scale function, so `L s = 0` and `L 1 = 0` hold to
//! rounding, and `W` is never differentiated.

use crate::env::{speed_inner, trapezoid, Environment, GridFunction, Sign};
use crate::error::{Error, Result};

fn check_grid(env: &Environment) -> Result<()> {
    if env.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "operator needs at least 3 grid points, got {}",
            env.len()
        )));
    }
    Ok(())
}

/// Segment quasi-derivatives `e^{-W} f'` (one value per segment).
pub fn quasi_derivative(env: &Environment, f: &[f64]) -> Vec<f64> {
    (0..env.segments())
        .map(|i| (f[i + 1] - f[i]) / env.segment_integral(i, Sign::Plus))
        .collect()
}

/// Dual-cell width `(x_{i+1} - x_{i-1}) / 2` at interior node `i`.
fn dual_width(grid: &[f64], i: usize) -> f64 {
    0.5 * (grid[i + 1] - grid[i - 1])
}

/// Apply the generator at interior nodes.
///
/// The two endpoint values are not defined by the stencil; they are filled by
/// linear extrapolation of the two neighbouring interior values and should be
/// treated as flagged (use [`GridFunction::interior_sup_norm`] for residuals).
pub fn apply_l(env: &Environment, f: &GridFunction) -> Result<GridFunction> {
    check_grid(env)?;
    f.check(env)?;
    let grid = env.grid();
    let ew = env.exp_w();
    let flux = quasi_derivative(env, f);
    let n = env.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = 0.5 * ew[i] * (flux[i] - flux[i - 1]) / dual_width(grid, i);
    }
    if n == 3 {
        out[0] = out[1];
        out[2] = out[1];
    } else {
        let extrapolate = |out: &[f64], i0: usize, i1: usize, at: usize| {
            let t = (grid[at] - grid[i0]) / (grid[i1] - grid[i0]);
            out[i0] + t * (out[i1] - out[i0])
        };
        out[0] = extrapolate(&out, 1, 2, 0);
        out[n - 1] = extrapolate(&out, n - 3, n - 2, n - 1);
    }
    Ok(GridFunction::from_vec(out))
}

/// Three-point derivative on a nonuniform grid; one-sided at the ends.
pub fn node_derivative(grid: &[f64], f: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = grid[i] - grid[i - 1];
        let h1 = grid[i + 1] - grid[i];
        d[i] = (-h1 / (h0 * (h0 + h1))) * f[i - 1]
            + ((h1 - h0) / (h0 * h1)) * f[i]
            + (h0 / (h1 * (h0 + h1))) * f[i + 1];
    }
    // second-order one-sided stencils
    let (h0, h1) = (grid[1] - grid[0], grid[2] - grid[1]);
    d[0] = -(2.0 * h0 + h1) / (h0 * (h0 + h1)) * f[0] + (h0 + h1) / (h0 * h1) * f[1]
        - h0 / (h1 * (h0 + h1)) * f[2];
    let (h0, h1) = (grid[n - 2] - grid[n - 3], grid[n - 1] - grid[n - 2]);
    d[n - 1] = h1 / (h0 * (h0 + h1)) * f[n - 3] - (h0 + h1) / (h0 * h1) * f[n - 2]
        + (2.0 * h1 + h0) / (h1 * (h0 + h1)) * f[n - 1];
    d
}

/// Weighted Wronskian `e^{-W}(f' g - f g')` at the nodes.
pub fn wronskian(env: &Environment, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    check_grid(env)?;
    f.check(env)?;
    g.check(env)?;
    let df = node_derivative(env.grid(), f);
    let dg = node_derivative(env.grid(), g);
    let e = env.exp_neg_w();
    Ok(GridFunction::from_vec(
        (0..env.len())
            .map(|i| e[i] * (df[i] * g[i] - f[i] * dg[i]))
            .collect(),
    ))
}

/// Residual of the Lagrange identity
/// `2e^{-W}(g Lf - f Lg) = [e^{-W}(f'g - fg')]'` at interior nodes.
///
/// The right-hand side is the divided difference of the Wronskian formed at
/// segment midpoints; endpoint residuals are reported as zero.
pub fn lagrange_residual(
    env: &Environment,
    f: &GridFunction,
    g: &GridFunction,
) -> Result<GridFunction> {
    let lf = apply_l(env, f)?;
    let lg = apply_l(env, g)?;
    g.check(env)?;
    let grid = env.grid();
    let e = env.exp_neg_w();
    let ff = quasi_derivative(env, f);
    let fg = quasi_derivative(env, g);
    let wr: Vec<f64> = (0..env.segments())
        .map(|i| {
            let fm = 0.5 * (f[i] + f[i + 1]);
            let gm = 0.5 * (g[i] + g[i + 1]);
            ff[i] * gm - fm * fg[i]
        })
        .collect();
    let n = env.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let lhs = 2.0 * e[i] * (g[i] * lf[i] - f[i] * lg[i]);
        let rhs = (wr[i] - wr[i - 1]) / dual_width(grid, i);
        out[i] = lhs - rhs;
    }
    Ok(GridFunction::from_vec(out))
}

/// Rayleigh quotient `∫ e^{-W}(f')² / ∫ 2e^{-W} f²` for `f(a) = f(b) = 0`.
pub fn rayleigh(env: &Environment, f: &GridFunction) -> Result<f64> {
    check_grid(env)?;
    f.check(env)?;
    let scale = f.sup_norm();
    let n = f.len();
    if f[0].abs() > 1e-10 * scale || f[n - 1].abs() > 1e-10 * scale {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient needs f(a) = f(b) = 0".into(),
        ));
    }
    // ∫ e^{-W}(f')² over a segment = (Δf)² / ∫_seg e^{W} for the flux form.
    let num: f64 = (0..env.segments())
        .map(|i| (f[i + 1] - f[i]).powi(2) / env.segment_integral(i, Sign::Plus))
        .sum();
    let den = speed_inner(env, f, f);
    if !(den > 0.0) {
        return Err(Error::InvalidArgument(
            "Rayleigh quotient of the zero function".into(),
        ));
    }
    Ok(num / den)
}

/// `⟨f, g⟩ = ∫ f g 2e^{-W}` (trapezoid).
pub fn speed_product(env: &Environment, f: &GridFunction, g: &GridFunction) -> f64 {
    speed_inner(env, f, g)
}

/// Trapezoid integral of a grid function.
pub fn integrate(env: &Environment, f: &GridFunction) -> f64 {
    trapezoid(env, f)
}
