//! Dirichlet eigenpairs of the generator located by oscillation counting.
//!
//! Each eigenvalue is first isolated by bisection on the zero count of the
//! shooting solution, which equals the number of eigenvalues `≤ λ`; only then
//! is it refined by bisection on the sign of `ψ(b, λ)`. Ordering and
//! multiplicity errors are therefore impossible by construction.

use rayon::prelude::*;

use crate::env::{speed_inner, Environment, GridFunction};
use crate::error::{Error, Result};
use crate::shooting::{self, ShootConfig};

/// Normalization applied to every eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormConvention {
    /// `∫ φ² 2e^{-W} dx = 1` (trapezoid) and `φ'(a) > 0`.
    SpeedMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenConfig {
    /// Relative bracket width: refinement stops at `rel_tol·max(1, λ)`.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub shoot: ShootConfig,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            rel_tol: 1e-8,
            max_iter: 200,
            shoot: ShootConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub phi: GridFunction,
    /// Normalized quasi-derivative `e^{-W} φ'`.
    pub eta: GridFunction,
    pub zeros_interior: usize,
    /// Interpolated interior zero locations of `φ`.
    pub zeros: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    env: Environment,
    pub pairs: Vec<EigenPair>,
    pub norm: NormConvention,
    pub config: EigenConfig,
}

impl Spectrum {
    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// The first `n` pairs.
    pub fn truncated(&self, n: usize) -> Spectrum {
        Spectrum {
            pairs: self.pairs[..n.min(self.pairs.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Eigenpair `n`, 1-based.
    pub fn pair(&self, n: usize) -> Option<&EigenPair> {
        n.checked_sub(1).and_then(|i| self.pairs.get(i))
    }
}

/// Number of eigenvalues `≤ λ`, read off the zeros of `ψ(·, λ)` on `(a, b]`.
pub fn eigenvalue_count(env: &Environment, lambda: f64) -> Result<usize> {
    eigenvalue_count_with(env, lambda, &ShootConfig::default())
}

pub fn eigenvalue_count_with(env: &Environment, lambda: f64, cfg: &ShootConfig) -> Result<usize> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue count needs lambda >= 0, got {lambda}"
        )));
    }
    Ok(shooting::count_and_terminal(env, lambda, cfg)?.0)
}

/// Probes of the counting function, kept sorted by `λ`.
struct CountCache<'a> {
    env: &'a Environment,
    cfg: ShootConfig,
    probes: Vec<(f64, usize)>,
}

impl<'a> CountCache<'a> {
    fn count(&mut self, lambda: f64) -> Result<usize> {
        if let Ok(i) = self
            .probes
            .binary_search_by(|p| p.0.partial_cmp(&lambda).expect("finite lambda"))
        {
            return Ok(self.probes[i].1);
        }
        let c = shooting::count_and_terminal(self.env, lambda, &self.cfg)?.0;
        let pos = self.probes.partition_point(|p| p.0 < lambda);
        self.probes.insert(pos, (lambda, c));
        Ok(c)
    }

    /// Smallest probed `λ` whose count is at least `n`.
    fn first_reaching(&self, n: usize) -> Option<f64> {
        self.probes.iter().find(|p| p.1 >= n).map(|p| p.0)
    }

    /// Largest probed `λ` whose count is below `n`.
    fn last_below(&self, n: usize) -> Option<f64> {
        self.probes.iter().rev().find(|p| p.1 < n).map(|p| p.0)
    }
}

/// Bracket `[lo, hi]` with `count(lo) = n - 1` and `count(hi) = n`.
fn isolate(cache: &mut CountCache, n: usize, cfg: &EigenConfig) -> Result<(f64, f64)> {
    let mut lo = cache.last_below(n).unwrap_or(0.0);
    let mut hi = match cache.first_reaching(n) {
        Some(h) => h,
        None => {
            let mut h = if lo > 0.0 { 2.0 * lo } else { 1.0 };
            let mut steps = 0;
            while cache.count(h)? < n {
                lo = h;
                h *= 2.0;
                steps += 1;
                if steps > cfg.max_iter || !h.is_finite() {
                    return Err(Error::BracketFailure {
                        n,
                        reason: format!("count stays below {n} up to lambda = {h}"),
                    });
                }
            }
            h
        }
    };
    for _ in 0..cfg.max_iter {
        let (clo, chi) = (cache.count(lo)?, cache.count(hi)?);
        if clo == n - 1 && chi == n {
            return Ok((lo, hi));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::BracketFailure {
                n,
                reason: format!(
                    "count jumps from {clo} to {chi} inside [{lo}, {hi}]: multiple eigenvalue or grid too coarse"
                ),
            });
        }
        if cache.count(mid)? >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::NonConvergence {
        what: format!("isolating eigenvalue {n}"),
        iterations: cfg.max_iter,
    })
}

/// Bisection on the sign of `ψ(b, λ)` inside an isolating bracket.
fn refine(env: &Environment, n: usize, lo: f64, hi: f64, cfg: &EigenConfig) -> Result<f64> {
    let terminal = |l: f64| shooting::count_and_terminal(env, l, &cfg.shoot).map(|r| r.1);
    let (mut lo, mut hi) = (lo, hi);
    let s_lo = terminal(lo)?.signum();
    for _ in 0..cfg.max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= cfg.rel_tol * mid.max(1.0) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let v = terminal(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        what: format!("refining eigenvalue {n}"),
        iterations: cfg.max_iter,
    })
}

/// Interior sign changes of `φ` on `(a, b)` and their interpolated locations.
pub fn interior_sign_changes(grid: &[f64], phi: &[f64]) -> (usize, Vec<f64>) {
    let n = phi.len();
    let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = shooting::ZERO_TOL * scale;
    let mut zeros = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for i in 1..n - 1 {
        if phi[i].abs() < tiny {
            continue;
        }
        if let Some((j, s)) = last {
            if phi[i].signum() != s {
                let (x0, x1, y0, y1) = (grid[j], grid[i], phi[j], phi[i]);
                zeros.push(x0 + (x1 - x0) * y0 / (y0 - y1));
            }
        }
        last = Some((i, phi[i].signum()));
    }
    (zeros.len(), zeros)
}

fn eigenpair(env: &Environment, n: usize, lambda: f64, cfg: &EigenConfig) -> Result<EigenPair> {
    let sol = shooting::shoot_with(env, lambda, &cfg.shoot)?;
    let mut psi = sol.psi.into_values();
    let last = psi.len() - 1;
    psi[last] = 0.0;
    let norm = speed_inner(env, &psi, &psi).sqrt();
    let phi: Vec<f64> = psi.iter().map(|v| v / norm).collect();
    let eta: Vec<f64> = sol.eta.iter().map(|v| v / norm).collect();
    let (zeros_interior, zeros) = interior_sign_changes(env.grid(), &phi);
    if zeros_interior != n - 1 {
        return Err(Error::BracketFailure {
            n,
            reason: format!(
                "eigenfunction has {zeros_interior} interior zeros, expected {}",
                n - 1
            ),
        });
    }
    Ok(EigenPair {
        lambda,
        phi: GridFunction::from_vec(phi),
        eta: GridFunction::from_vec(eta),
        zeros_interior,
        zeros,
    })
}

/// First `n_max` eigenpairs with the default configuration.
pub fn find_eigenvalues(env: &Environment, n_max: usize) -> Result<Spectrum> {
    find_eigenvalues_with(env, n_max, &EigenConfig::default())
}

pub fn find_eigenvalues_with(env: &Environment, n_max: usize, cfg: &EigenConfig) -> Result<Spectrum> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("need n_max >= 1".into()));
    }
    if !(cfg.rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            cfg.rel_tol
        )));
    }
    let mut cache = CountCache {
        env,
        cfg: cfg.shoot,
        probes: Vec::new(),
    };
    let mut brackets = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        brackets.push(isolate(&mut cache, n, cfg)?);
    }
    let pairs = brackets
        .par_iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let lambda = refine(env, i + 1, lo, hi, cfg)?;
            eigenpair(env, i + 1, lambda, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        env: env.clone(),
        pairs,
        norm: NormConvention::SpeedMeasure,
        config: *cfg,
    })
}

/// Relative sup-norm residual of the integrated eigenfunction SDE
/// `φ'(t) - φ'(a) = ∫_a^t (-2λφ + φ'/2) ds + ∫_a^t φ' dW` (Itô, left point),
/// with `φ' = e^{W} η`. The residual is divided by `sup|φ'|`, which makes it
/// independent of the additive gauge of `W`.
pub fn sde_residual(spectrum: &Spectrum, n: usize) -> Result<f64> {
    residual(spectrum, n, 0.5)
}

/// Residual with the `φ'/2` drift term dropped, the reduced identity for a
/// smooth (non-Brownian) `W`.
pub fn reduced_residual(spectrum: &Spectrum, n: usize) -> Result<f64> {
    residual(spectrum, n, 0.0)
}

fn residual(spectrum: &Spectrum, n: usize, ito: f64) -> Result<f64> {
    let pair = spectrum.pair(n).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "eigenpair {n} not in spectrum of size {}",
            spectrum.len()
        ))
    })?;
    let env = spectrum.env();
    let grid = env.grid();
    let w = env.w();
    let ew = env.exp_w();
    let dphi: Vec<f64> = pair.eta.iter().zip(ew).map(|(e, x)| e * x).collect();
    let mut drift = 0.0;
    let mut noise = 0.0;
    let mut worst = 0.0f64;
    for i in 0..grid.len() - 1 {
        let h = grid[i + 1] - grid[i];
        drift += (-2.0 * pair.lambda * pair.phi[i] + ito * dphi[i]) * h;
        noise += dphi[i] * (w[i + 1] - w[i]);
        let r = dphi[i + 1] - dphi[0] - drift - noise;
        worst = worst.max(r.abs());
    }
    let scale = dphi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(worst / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::sample_environment;
    use crate::green::build_kernel;
    use crate::operator::rayleigh;
    use crate::oracle;
    use std::f64::consts::PI;

    #[test]
    fn counts_on_flat_medium() {
        let env = Environment::flat(0.0, 1.0, 2000).unwrap();
        assert_eq!(eigenvalue_count(&env, 0.0).unwrap(), 0);
        assert_eq!(eigenvalue_count(&env, 30.0).unwrap(), 2);
        assert!(eigenvalue_count(&env, -1.0).is_err());
    }

    #[test]
    fn flat_spectrum() {
        let env = Environment::flat(0.0, 1.0, 10_000).unwrap();
        let spec = find_eigenvalues(&env, 5).unwrap();
        for (i, pair) in spec.pairs.iter().enumerate() {
            let n = (i + 1) as f64;
            let exact = n * n * PI * PI / 2.0;
            assert!(((pair.lambda - exact) / exact).abs() < 1e-6, "{} vs {exact}", pair.lambda);
            let expected = GridFunction::from_fn(&env, |x| (n * PI * x).sin());
            assert!(pair.phi.sub(&expected).sup_norm() < 1e-4);
            assert_eq!(pair.zeros_interior, i);
        }
    }

    #[test]
    fn spectrum_invariants_on_rough_medium() {
        let env = sample_environment(0.0, 1.0, 4000, 42).unwrap();
        let spec = find_eigenvalues(&env, 6).unwrap();
        let h = env.max_step();
        let l = spec.lambdas();
        assert!(l[0] > 0.0);
        assert!(l.windows(2).all(|p| p[1] > p[0]));
        for (i, p) in spec.pairs.iter().enumerate() {
            let norm = speed_inner(&env, &p.phi, &p.phi);
            assert!((norm - 1.0).abs() < 1e-8);
            assert_eq!(p.phi[0], 0.0);
            assert_eq!(p.phi[env.len() - 1], 0.0);
            assert!(p.phi[1] > 0.0);
            assert_eq!(p.zeros_interior, i);
            for q in &spec.pairs[..i] {
                assert!(speed_inner(&env, &p.phi, &q.phi).abs() <= 10.0 * h);
            }
        }
    }

    #[test]
    fn interlacing_of_consecutive_modes() {
        let env = sample_environment(0.0, 1.0, 3000, 7).unwrap();
        let spec = find_eigenvalues(&env, 6).unwrap();
        for w in spec.pairs.windows(2) {
            let (lower, upper) = (&w[0].zeros, &w[1].zeros);
            // between consecutive zeros (and endpoints) of φ_n lies a zero of φ_{n+1}
            let mut fences = vec![env.a()];
            fences.extend_from_slice(lower);
            fences.push(env.b());
            for pair in fences.windows(2) {
                assert!(upper.iter().any(|&z| z > pair[0] && z < pair[1]));
            }
        }
    }

    #[test]
    fn count_jumps_by_one_at_each_eigenvalue() {
        let env = sample_environment(0.0, 1.0, 2000, 1).unwrap();
        let spec = find_eigenvalues(&env, 5).unwrap();
        for p in &spec.pairs {
            let tol = 1e-6 * p.lambda;
            let up = eigenvalue_count(&env, p.lambda + tol).unwrap();
            let down = eigenvalue_count(&env, p.lambda - tol).unwrap();
            assert_eq!(up - down, 1);
        }
    }

    #[test]
    fn agrees_with_oracle() {
        let env = sample_environment(0.0, 1.0, 10_000, 42).unwrap();
        let spec = find_eigenvalues(&env, 8).unwrap();
        let sys = oracle::discretize(&env);
        for (i, p) in spec.pairs.iter().enumerate() {
            let o = oracle::oracle_eigenvalue(&sys, i + 1).unwrap();
            assert!(((p.lambda - o) / o).abs() < 1e-3, "n = {}: {} vs {o}", i + 1, p.lambda);
        }
    }

    #[test]
    fn rayleigh_of_ground_state_and_green_consistency() {
        let env = sample_environment(0.0, 1.0, 4000, 42).unwrap();
        let spec = find_eigenvalues(&env, 4).unwrap();
        let l1 = spec.pairs[0].lambda;
        let r = rayleigh(&env, &spec.pairs[0].phi).unwrap();
        assert!(((r - l1) / l1).abs() < 1e-3);
        let k = build_kernel(&env);
        for p in &spec.pairs {
            let tphi = k.apply(&p.phi).unwrap();
            let resid = p.phi.sub(&tphi.map(|v| -p.lambda * v)).sup_norm();
            assert!(resid < 10.0 * env.max_step() * p.lambda, "{resid}");
        }
    }

    #[test]
    fn sde_residual_properties() {
        let flat = Environment::flat(0.0, 1.0, 2000).unwrap();
        let spec = find_eigenvalues(&flat, 2).unwrap();
        assert!(reduced_residual(&spec, 1).unwrap() < 10.0 * flat.max_step());

        let env = sample_environment(0.0, 1.0, 1000, 42).unwrap();
        let fine = env.refine().unwrap().refine().unwrap();
        let r_coarse = sde_residual(&find_eigenvalues(&env, 1).unwrap(), 1).unwrap();
        let r_fine = sde_residual(&find_eigenvalues(&fine, 1).unwrap(), 1).unwrap();
        assert!(r_fine < r_coarse, "{r_coarse} -> {r_fine}");

        let up = env.shifted(1.0).unwrap();
        let r_up = sde_residual(&find_eigenvalues(&up, 1).unwrap(), 1).unwrap();
        assert!((r_up - r_coarse).abs() < 1e-8 * r_coarse.max(1e-12));
        assert!(sde_residual(&spec, 3).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let env = Environment::flat(0.0, 1.0, 100).unwrap();
        assert!(find_eigenvalues(&env, 0).is_err());
        let cfg = EigenConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(find_eigenvalues_with(&env, 1, &cfg).is_err());
    }
}
