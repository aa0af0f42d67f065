//! Initial-value solutions of `Lψ + λψ = 0`, `ψ(a) = 0`, `ψ'(a) = 1`.
//!
//! The equation is integrated as the first-order quasi-derivative system
//!
//! ```text
//! ψ' = e^{W} η,    η' = -2λ e^{-W} ψ,    η = e^{-W} ψ'
//! ```
//!
//! with one explicit midpoint step per segment (optionally `K` substeps),
//! using the exact segment integrals of `e^{±W}` as coefficients.

use std::f64::consts::PI;

use crate::env::{Environment, GridFunction, Sign};
use crate::error::{Error, Result};

/// Values with `|ψ| < ZERO_TOL·max|ψ|` at a node count as a zero of ψ.
pub const ZERO_TOL: f64 = 1e-14;

const OVERFLOW_LIMIT: f64 = 1e290;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    /// Midpoint substeps per environment segment.
    pub substeps: usize,
    /// Initial slope `ψ'(a)`.
    pub slope: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        ShootConfig {
            substeps: 1,
            slope: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingSolution {
    pub lambda: f64,
    pub psi: GridFunction,
    /// Quasi-derivative `e^{-W} ψ'`.
    pub eta: GridFunction,
    /// Zeros of ψ on `(a, b]`, reconciled between sign and phase counting.
    pub zero_count: usize,
    /// Sign changes of ψ on `(a, b]` with the node tie-break rule.
    pub sign_changes: usize,
    pub psi_b: f64,
    /// Continuous angle of `(ψ, η)`, starting at 0.
    pub phase: GridFunction,
    /// Interpolated locations of the interior sign changes.
    pub zeros: Vec<f64>,
}

impl ShootingSolution {
    /// Count of zeros implied by the phase at `b`.
    pub fn phase_count(&self) -> usize {
        phase_to_count(self.phase[self.phase.len() - 1], self.psi_is_zero_at_b())
    }

    fn psi_is_zero_at_b(&self) -> bool {
        self.psi_b.abs() < ZERO_TOL * self.psi.sup_norm()
    }
}

fn phase_to_count(phase_b: f64, zero_at_b: bool) -> usize {
    let turns = phase_b / PI;
    let c = if zero_at_b { turns.round() } else { turns.floor() };
    c.max(0.0) as usize
}

/// Exact integrals of `e^{W}` and `e^{-W}` over `[x_i + t0·h, x_i + t1·h]`.
fn sub_integrals(env: &Environment, i: usize, t0: f64, t1: f64) -> (f64, f64) {
    if t0 == 0.0 && t1 == 1.0 {
        return (
            env.segment_integral(i, Sign::Plus),
            env.segment_integral(i, Sign::Minus),
        );
    }
    let g = env.grid();
    let h = g[i + 1] - g[i];
    let (x0, x1) = (g[i] + t0 * h, g[i] + t1 * h);
    let x1 = x1.min(g[i + 1]);
    (
        env.integrate_exp_w(x0, x1, Sign::Plus).unwrap_or(0.0),
        env.integrate_exp_w(x0, x1, Sign::Minus).unwrap_or(0.0),
    )
}

/// One explicit midpoint step of the quasi-derivative system.
#[inline]
fn midpoint_step(psi: f64, eta: f64, lambda: f64, ip: f64, im: f64) -> (f64, f64) {
    let psi_m = psi + 0.5 * ip * eta;
    let eta_m = eta - lambda * im * psi;
    (psi + ip * eta_m, eta - 2.0 * lambda * im * psi_m)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Integrate `(ψ, η)` only, returning node values. Shared by [`shoot_with`]
/// and the lightweight counters used inside bisection.
pub(crate) fn integrate(
    env: &Environment,
    lambda: f64,
    cfg: &ShootConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lambda(lambda)?;
    if cfg.substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let n = env.len();
    let mut psi = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let (mut p, mut e) = (0.0, cfg.slope * env.exp_neg_w()[0]);
    psi.push(p);
    eta.push(e);
    let k = cfg.substeps;
    for i in 0..n - 1 {
        if k == 1 {
            let (ip, im) = sub_integrals(env, i, 0.0, 1.0);
            (p, e) = midpoint_step(p, e, lambda, ip, im);
        } else {
            for j in 0..k {
                let (ip, im) =
                    sub_integrals(env, i, j as f64 / k as f64, (j + 1) as f64 / k as f64);
                (p, e) = midpoint_step(p, e, lambda, ip, im);
            }
        }
        if !(p.abs() < OVERFLOW_LIMIT && e.abs() < OVERFLOW_LIMIT) {
            return Err(Error::Overflow { segment: i, lambda });
        }
        psi.push(p);
        eta.push(e);
    }
    Ok((psi, eta))
}

/// Sign changes of ψ over `(a, b]` with the node tie-break rule, plus the
/// interpolated interior crossing locations.
fn sign_changes(grid: &[f64], psi: &[f64]) -> (usize, Vec<f64>) {
    let scale = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = ZERO_TOL * scale;
    let n = psi.len();
    let mut count = 0;
    let mut zeros = Vec::new();
    // ψ'(a) > 0, so ψ is positive just after a.
    let mut last_sign = 1.0;
    let mut pending = false;
    for i in 1..n {
        let v = psi[i];
        if v.abs() < tiny {
            if !pending {
                count += 1;
                if i < n - 1 {
                    zeros.push(grid[i]);
                }
                pending = true;
            }
            continue;
        }
        let s = v.signum();
        if pending {
            pending = false;
        } else if s != last_sign {
            count += 1;
            let (x0, x1, y0, y1) = (grid[i - 1], grid[i], psi[i - 1], v);
            zeros.push(x0 + (x1 - x0) * y0 / (y0 - y1));
        }
        last_sign = s;
    }
    (count, zeros)
}

/// Continuous angle of `(ψ, η)` along the grid.
fn unwrapped_phase(psi: &[f64], eta: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(psi.len());
    let mut prev = psi[0].atan2(eta[0]);
    let mut acc = 0.0;
    out.push(acc);
    for (p, e) in psi.iter().zip(eta).skip(1) {
        let cur = p.atan2(*e);
        let mut d = cur - prev;
        if d > PI {
            d -= 2.0 * PI;
        } else if d <= -PI {
            d += 2.0 * PI;
        }
        acc += d;
        out.push(acc);
        prev = cur;
    }
    out
}

/// Reconcile sign counting with the phase counter.
fn reconcile(lambda: f64, sign_count: usize, phase_count: usize) -> Result<usize> {
    match sign_count.abs_diff(phase_count) {
        0 => Ok(sign_count),
        1 => Ok(phase_count),
        _ => Err(Error::CounterDisagreement {
            lambda,
            sign_count,
            phase_count,
        }),
    }
}

pub fn shoot(env: &Environment, lambda: f64) -> Result<ShootingSolution> {
    shoot_with(env, lambda, &ShootConfig::default())
}

pub fn shoot_with(env: &Environment, lambda: f64, cfg: &ShootConfig) -> Result<ShootingSolution> {
    let (psi, eta) = integrate(env, lambda, cfg)?;
    let (sign_count, zeros) = sign_changes(env.grid(), &psi);
    let phase = unwrapped_phase(&psi, &eta);
    let psi_b = psi[psi.len() - 1];
    let scale = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let phase_count = phase_to_count(phase[phase.len() - 1], psi_b.abs() < ZERO_TOL * scale);
    let zero_count = reconcile(lambda, sign_count, phase_count)?;
    Ok(ShootingSolution {
        lambda,
        psi: GridFunction::from_vec(psi),
        eta: GridFunction::from_vec(eta),
        zero_count,
        sign_changes: sign_count,
        psi_b,
        phase: GridFunction::from_vec(phase),
        zeros,
    })
}

/// Zero count of ψ on `(a, b]` and `ψ(b)`.
pub(crate) fn count_and_terminal(
    env: &Environment,
    lambda: f64,
    cfg: &ShootConfig,
) -> Result<(usize, f64)> {
    let sol = shoot_with(env, lambda, cfg)?;
    Ok((sol.zero_count, sol.psi_b))
}

/// Number of zeros of ψ on `(a, b]`, a terminal zero at `b` included.
pub fn count_zeros(sol: &ShootingSolution) -> usize {
    sol.zero_count
}

/// Prüfer phase `w' = e^{W} cos²w + 2λ e^{-W} sin²w`, `w(a) = 0`.
pub fn pruefer_phase(env: &Environment, lambda: f64) -> Result<GridFunction> {
    pruefer_phase_with(env, lambda, 1)
}

/// Phase integration with `substeps` midpoint steps per segment. A step that
/// advances the phase by more than `π/2` is rejected as too coarse.
pub fn pruefer_phase_with(env: &Environment, lambda: f64, substeps: usize) -> Result<GridFunction> {
    check_lambda(lambda)?;
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "Prüfer phase needs lambda >= 0, got {lambda}"
        )));
    }
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be >= 1".into()));
    }
    let grid = env.grid();
    let n = env.len();
    let mut out = Vec::with_capacity(n);
    let mut w = 0.0f64;
    out.push(w);
    let rate = |w: f64, a: f64, c: f64| {
        let (s, co) = w.sin_cos();
        a * co * co + c * s * s
    };
    for i in 0..n - 1 {
        let h = (grid[i + 1] - grid[i]) / substeps as f64;
        for j in 0..substeps {
            let (ip, im) = sub_integrals(
                env,
                i,
                j as f64 / substeps as f64,
                (j + 1) as f64 / substeps as f64,
            );
            // segment averages of e^{W} and 2λe^{-W}
            let a = ip / h;
            let c = 2.0 * lambda * im / h;
            // a priori bound on the advance over this step
            let bound = a.max(c) * h;
            if bound > 0.5 * PI {
                return Err(Error::GridTooCoarse(format!(
                    "phase may advance {bound:.3} > π/2 on segment {i} at lambda = {lambda}"
                )));
            }
            let k1 = rate(w, a, c);
            let k2 = rate(w + 0.5 * h * k1, a, c);
            w += h * k2;
        }
        out.push(w);
    }
    Ok(GridFunction::from_vec(out))
}

/// Sup-norm residual of ψ against the fixed-point form
/// `ψ(x) = -2λ∫_a^x∫_a^y ψ e^{-W(z)} e^{W(y)} dz dy + e^{-W(a)}∫_a^x e^{W}`.
///
/// The inner integral is a trapezoid prefix sum with nodal `e^{-W}`; the outer
/// one uses the exact segment integrals of `e^{W}` against the mean of the
/// inner integral.
pub fn integral_residual(env: &Environment, sol: &ShootingSolution) -> Result<f64> {
    sol.psi.check(env)?;
    let grid = env.grid();
    let e = env.exp_neg_w();
    let psi = &sol.psi;
    let n = env.len();
    let slope = sol.eta[0] * env.exp_w()[0];
    let mut inner = 0.0;
    let mut outer = 0.0;
    let mut worst = 0.0f64;
    for i in 0..n - 1 {
        let h = grid[i + 1] - grid[i];
        let inner_next = inner + 0.5 * h * (psi[i] * e[i] + psi[i + 1] * e[i + 1]);
        let ip = env.segment_integral(i, Sign::Plus);
        outer += ip * (-2.0 * sol.lambda * 0.5 * (inner + inner_next) + slope * e[0]);
        inner = inner_next;
        worst = worst.max((psi[i + 1] - outer).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::sample_environment;

    #[test]
    fn flat_first_mode() {
        let env = Environment::flat(0.0, 1.0, 10_000).unwrap();
        let lambda = PI * PI / 2.0;
        let sol = shoot(&env, lambda).unwrap();
        assert!(sol.psi_b.abs() <= 1e-6, "psi_b = {}", sol.psi_b);
        let expected = GridFunction::from_fn(&env, |x| (PI * x).sin() / PI);
        assert!(sol.psi.sub(&expected).sup_norm() < 1e-6);
        // a terminal zero at b can go either way by rounding; both counters agree
        assert!(sol.zero_count == 1 || sol.zero_count == 0);
        let just_above = shoot(&env, lambda * (1.0 + 1e-6)).unwrap();
        assert_eq!(just_above.zero_count, 1);
    }

    #[test]
    fn zero_lambda_is_scale_function() {
        let env = sample_environment(0.0, 1.0, 500, 42).unwrap();
        let sol = shoot(&env, 0.0).unwrap();
        let cum = env.cumulative(Sign::Plus);
        let e0 = env.exp_neg_w()[0];
        for i in 0..env.len() {
            assert!((sol.psi[i] - e0 * cum[i]).abs() < 1e-14);
        }
        assert!(sol.psi.windows(2).all(|p| p[1] > p[0]));
        assert_eq!(count_zeros(&sol), 0);
    }

    #[test]
    fn initial_conditions() {
        let env = sample_environment(-1.0, 1.0, 300, 3).unwrap();
        let sol = shoot(&env, 17.0).unwrap();
        assert_eq!(sol.psi[0], 0.0);
        assert_eq!(sol.eta[0], env.exp_neg_w()[0]);
        assert_eq!(sol.phase[0], 0.0);
        for i in 0..env.len() {
            assert!(sol.psi[i] != 0.0 || sol.eta[i] != 0.0);
        }
    }

    #[test]
    fn flat_zero_count_formula() {
        let env = Environment::flat(0.0, 1.0, 4000).unwrap();
        let lambda = (2.5 * PI).powi(2) / 2.0;
        let sol = shoot(&env, lambda).unwrap();
        assert_eq!(count_zeros(&sol), 2);
        assert_eq!(sol.zeros.len(), 2);
        assert!((sol.zeros[0] - 0.4).abs() < 1e-6);
        assert!((sol.zeros[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite_lambda() {
        let env = Environment::flat(0.0, 1.0, 10).unwrap();
        assert!(shoot(&env, f64::NAN).is_err());
        assert!(shoot(&env, f64::INFINITY).is_err());
    }

    #[test]
    fn overflow_reports_segment() {
        let env = Environment::flat(0.0, 1.0, 1000).unwrap();
        match shoot(&env, -1e6) {
            Err(Error::Overflow { segment, .. }) => assert!(segment < 1000),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn count_is_monotone_unit_staircase() {
        let env = sample_environment(0.0, 1.0, 2000, 42).unwrap();
        let mut prev = 0;
        for l in 1..=200 {
            let c = count_zeros(&shoot(&env, l as f64).unwrap());
            assert!(c >= prev && c - prev <= 1, "lambda {l}: {prev} -> {c}");
            prev = c;
        }
        assert!(prev >= 2);
    }

    #[test]
    fn flat_phase_at_first_eigenvalue() {
        let env = Environment::flat(0.0, 1.0, 10_000).unwrap();
        let w = pruefer_phase(&env, PI * PI / 2.0).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w[env.len() - 1] - PI).abs() < 1e-4);
    }

    #[test]
    fn phase_counter_matches_shooting() {
        let env = sample_environment(0.0, 1.0, 4000, 42).unwrap();
        let w = pruefer_phase(&env, 75.0).unwrap();
        let sol = shoot(&env, 75.0).unwrap();
        assert_eq!((w[env.len() - 1] / PI).floor() as usize, count_zeros(&sol));
        assert!(w.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn coarse_phase_step_is_rejected() {
        let env = Environment::flat(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            pruefer_phase(&env, 1e3),
            Err(Error::GridTooCoarse(_))
        ));
        assert!(pruefer_phase_with(&env, 1e3, 256).is_ok());
    }

    #[test]
    fn proportional_solutions() {
        let env = sample_environment(0.0, 1.0, 2000, 42).unwrap();
        let one = shoot(&env, 40.0).unwrap();
        let two = shoot_with(
            &env,
            40.0,
            &ShootConfig {
                slope: 2.0,
                ..Default::default()
            },
        )
        .unwrap();
        let diff = two.psi.sub(&one.psi.map(|v| 2.0 * v)).sup_norm();
        assert!(diff <= 1e-12 * one.psi.sup_norm());
    }

    #[test]
    fn integral_residual_behaviour() {
        let env = sample_environment(0.0, 1.0, 1000, 42).unwrap();
        let r0 = integral_residual(&env, &shoot(&env, 0.0).unwrap()).unwrap();
        assert!(r0 < 1e-13, "{r0}");

        let flat = Environment::flat(0.0, 1.0, 200).unwrap();
        let flat2 = Environment::flat(0.0, 1.0, 400).unwrap();
        let lam = PI * PI / 2.0;
        let a = integral_residual(&flat, &shoot(&flat, lam).unwrap()).unwrap();
        let b = integral_residual(&flat2, &shoot(&flat2, lam).unwrap()).unwrap();
        assert!(b < 0.3 * a, "{a} -> {b}");

        let fine = env.refine().unwrap();
        let c1 = integral_residual(&env, &shoot(&env, 50.0).unwrap()).unwrap();
        let c2 = integral_residual(&fine, &shoot(&fine, 50.0).unwrap()).unwrap();
        assert!(c2 <= 0.5 * c1 * 1.2, "{c1} -> {c2}");
    }
}
