//! Quenched transition density of the killed diffusion from its spectrum,
//! `p(t, x, y) = 2e^{-W(y)} Σ_n e^{-λ_n t} φ_n(x) φ_n(y)`.

use rayon::prelude::*;

use crate::eigen::Spectrum;
use crate::env::{trapezoid, Environment};
use crate::error::{Error, Result};

/// A point of `[a, b]` resolved against the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub segment: usize,
    /// Fraction along the segment; `0` for a grid node.
    pub frac: f64,
    /// True when the point is not a grid node and values are interpolated.
    pub interpolated: bool,
}

pub fn locate(env: &Environment, x: f64) -> Result<Location> {
    if !(x >= env.a() && x <= env.b()) {
        return Err(Error::OutOfRange {
            what: "x",
            value: x,
            lo: env.a(),
            hi: env.b(),
        });
    }
    let grid = env.grid();
    if let Ok(i) = grid.binary_search_by(|g| g.partial_cmp(&x).expect("finite grid")) {
        let (segment, frac) = if i == grid.len() - 1 { (i - 1, 1.0) } else { (i, 0.0) };
        return Ok(Location {
            segment,
            frac,
            interpolated: false,
        });
    }
    let i = env.segment_of(x);
    Ok(Location {
        segment: i,
        frac: (x - grid[i]) / (grid[i + 1] - grid[i]),
        interpolated: true,
    })
}

impl Location {
    fn sample(&self, f: &[f64]) -> f64 {
        let i = self.segment;
        if self.frac == 0.0 {
            f[i]
        } else if self.frac == 1.0 {
            f[i + 1]
        } else {
            f[i] * (1.0 - self.frac) + f[i + 1] * self.frac
        }
    }

    fn exp_neg_w(&self, env: &Environment) -> f64 {
        let w = env.w();
        let i = self.segment;
        if self.frac == 0.0 {
            env.exp_neg_w()[i]
        } else if self.frac == 1.0 {
            env.exp_neg_w()[i + 1]
        } else {
            (-(w[i] * (1.0 - self.frac) + w[i + 1] * self.frac)).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityValue {
    pub value: f64,
    pub tail_estimate: f64,
    pub interpolated: bool,
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    Ok(())
}

fn check_trunc(spectrum: &Spectrum, n_trunc: usize) -> Result<()> {
    if n_trunc == 0 || n_trunc > spectrum.len() {
        return Err(Error::InvalidArgument(format!(
            "truncation {n_trunc} outside 1..={}",
            spectrum.len()
        )));
    }
    Ok(())
}

/// Smallest `n` with `e^{-λ_n t} < 1e-12·e^{-λ_1 t}`, capped by the spectrum size.
pub fn default_truncation(spectrum: &Spectrum, t: f64) -> usize {
    let l = spectrum.lambdas();
    l.iter()
        .position(|&ln| (ln - l[0]) * t > 12.0 * std::f64::consts::LN_10)
        .map_or(l.len(), |i| i + 1)
}

/// `M² Σ_{k≥1} e^{-(λ_N + k·g) t}` with `g = λ_N - λ_{N-1}`: a geometric bound
/// on the dropped modes, since the gaps grow and `|φ_n| ≤ M` is assumed.
fn tail_factor(spectrum: &Spectrum, t: f64, n_trunc: usize) -> f64 {
    let l = spectrum.lambdas();
    let ln = l[n_trunc - 1];
    let gap = if n_trunc >= 2 { ln - l[n_trunc - 2] } else { ln };
    let m = spectrum.pairs[..n_trunc]
        .iter()
        .map(|p| p.phi.sup_norm())
        .fold(0.0, f64::max);
    let r = (-gap * t).exp();
    m * m * (-ln * t).exp() * r / (1.0 - r)
}

fn mode_sum(spectrum: &Spectrum, t: f64, n_trunc: usize, fx: impl Fn(&[f64]) -> f64, fy: impl Fn(&[f64]) -> f64) -> f64 {
    spectrum.pairs[..n_trunc]
        .iter()
        .map(|p| (-p.lambda * t).exp() * fx(&p.phi) * fy(&p.phi))
        .sum()
}

/// Truncated spectral sum at `(t, x, y)`. Off-grid points are resolved by
/// linear interpolation and flagged in the result.
pub fn transition_density(
    spectrum: &Spectrum,
    t: f64,
    x: f64,
    y: f64,
    n_trunc: usize,
) -> Result<DensityValue> {
    check_time(t)?;
    check_trunc(spectrum, n_trunc)?;
    let env = spectrum.env();
    let lx = locate(env, x)?;
    let ly = locate(env, y)?;
    let ey = ly.exp_neg_w(env);
    let sum = mode_sum(spectrum, t, n_trunc, |f| lx.sample(f), |f| ly.sample(f));
    Ok(DensityValue {
        value: 2.0 * ey * sum,
        tail_estimate: 2.0 * ey * tail_factor(spectrum, t, n_trunc),
        interpolated: lx.interpolated || ly.interpolated,
    })
}

/// `∫ p(t, x, y) dy` by the trapezoid rule over the grid.
pub fn survival_probability(spectrum: &Spectrum, t: f64, x: f64, n_trunc: usize) -> Result<f64> {
    check_time(t)?;
    check_trunc(spectrum, n_trunc)?;
    let env = spectrum.env();
    let lx = locate(env, x)?;
    let e = env.exp_neg_w();
    Ok(spectrum.pairs[..n_trunc]
        .iter()
        .map(|p| {
            let weighted: Vec<f64> = p.phi.iter().zip(e).map(|(f, w)| 2.0 * f * w).collect();
            (-p.lambda * t).exp() * lx.sample(&p.phi) * trapezoid(env, &weighted)
        })
        .sum())
}

/// `∫_{e_k}^{e_{k+1}} p(t, x, y) dy` for consecutive edges, integrating the
/// piecewise-linear interpolant of the density row exactly.
pub fn bin_probabilities(
    spectrum: &Spectrum,
    t: f64,
    x: f64,
    n_trunc: usize,
    edges: &[f64],
) -> Result<Vec<f64>> {
    check_time(t)?;
    check_trunc(spectrum, n_trunc)?;
    let env = spectrum.env();
    let lx = locate(env, x)?;
    if edges.len() < 2 || edges.windows(2).any(|e| !(e[1] > e[0])) {
        return Err(Error::InvalidArgument("bin edges must increase".into()));
    }
    for &e in edges {
        locate(env, e)?;
    }
    let row = density_row(spectrum, t, &lx, n_trunc);
    let grid = env.grid();
    let value_at = |y: f64| {
        let i = env.segment_of(y);
        let f = ((y - grid[i]) / (grid[i + 1] - grid[i])).clamp(0.0, 1.0);
        row[i] * (1.0 - f) + row[i + 1] * f
    };
    let cumulative = |y: f64| {
        // ∫_a^y of the interpolant
        let i = env.segment_of(y);
        let head: f64 = (0..i)
            .map(|j| 0.5 * (grid[j + 1] - grid[j]) * (row[j] + row[j + 1]))
            .sum();
        head + 0.5 * (y - grid[i]) * (row[i] + value_at(y))
    };
    let cum: Vec<f64> = edges.iter().map(|&y| cumulative(y)).collect();
    Ok(cum.windows(2).map(|c| c[1] - c[0]).collect())
}

/// Density row `y ↦ p(t, x, y)` on the grid.
fn density_row(spectrum: &Spectrum, t: f64, x: &Location, n_trunc: usize) -> Vec<f64> {
    let env = spectrum.env();
    let e = env.exp_neg_w();
    let mut row = vec![0.0; env.len()];
    for p in &spectrum.pairs[..n_trunc] {
        let c = (-p.lambda * t).exp() * x.sample(&p.phi);
        for (r, f) in row.iter_mut().zip(p.phi.iter()) {
            *r += c * f;
        }
    }
    for (r, w) in row.iter_mut().zip(e) {
        *r *= 2.0 * w;
    }
    row
}

impl Location {
    fn node(env: &Environment, i: usize) -> Self {
        let last = env.len() - 1;
        Location {
            segment: i.min(last - 1),
            frac: if i == last { 1.0 } else { 0.0 },
            interpolated: false,
        }
    }
}

/// `|∫ p(s, x, z) p(t, z, y) dz - p(s + t, x, y)|`, trapezoid in `z`.
pub fn chapman_kolmogorov_residual(
    spectrum: &Spectrum,
    s: f64,
    t: f64,
    x: f64,
    y: f64,
    n_trunc: usize,
) -> Result<f64> {
    check_time(s)?;
    check_time(t)?;
    check_trunc(spectrum, n_trunc)?;
    let env = spectrum.env();
    let lx = locate(env, x)?;
    let ly = locate(env, y)?;
    let ey = ly.exp_neg_w(env);
    let e = env.exp_neg_w();
    let n = env.len();
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    for p in &spectrum.pairs[..n_trunc] {
        let cx = (-p.lambda * s).exp() * lx.sample(&p.phi);
        let cy = (-p.lambda * t).exp() * ly.sample(&p.phi);
        for k in 0..n {
            first[k] += cx * p.phi[k];
            second[k] += cy * p.phi[k];
        }
    }
    let integrand: Vec<f64> = (0..n)
        .map(|k| 2.0 * e[k] * first[k] * 2.0 * ey * second[k])
        .collect();
    let composed = trapezoid(env, &integrand);
    let direct = transition_density(spectrum, s + t, x, y, n_trunc)?.value;
    Ok((composed - direct).abs())
}

/// `p(t, x_i, y_j)` for grid nodes `x_i, y_j` taken with a fixed stride
/// (the last node is always included).
#[derive(Debug, Clone)]
pub struct DensityField {
    spectrum: Spectrum,
    pub t: f64,
    pub truncation_n: usize,
    /// Largest per-point tail estimate over the grid.
    pub tail_estimate: f64,
    nodes: Vec<usize>,
    values: Vec<f64>,
}

/// Field on every grid node.
pub fn density_field(spectrum: &Spectrum, t: f64, n_trunc: usize) -> Result<DensityField> {
    density_field_strided(spectrum, t, n_trunc, 1)
}

pub fn density_field_strided(
    spectrum: &Spectrum,
    t: f64,
    n_trunc: usize,
    stride: usize,
) -> Result<DensityField> {
    check_time(t)?;
    check_trunc(spectrum, n_trunc)?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let env = spectrum.env();
    let last = env.len() - 1;
    let mut nodes: Vec<usize> = (0..=last).step_by(stride).collect();
    if nodes.last() != Some(&last) {
        nodes.push(last);
    }
    let values: Vec<f64> = nodes
        .par_iter()
        .flat_map_iter(|&i| {
            let row = density_row(spectrum, t, &Location::node(env, i), n_trunc);
            nodes.iter().map(move |&j| row[j]).collect::<Vec<_>>()
        })
        .collect();
    let e_max = env.exp_neg_w().iter().copied().fold(0.0, f64::max);
    Ok(DensityField {
        spectrum: spectrum.clone(),
        t,
        truncation_n: n_trunc,
        tail_estimate: 2.0 * e_max * tail_factor(spectrum, t, n_trunc),
        nodes,
        values,
    })
}

impl DensityField {
    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Grid indices of the rows and columns.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Value at row `i`, column `j` (positions in [`DensityField::nodes`]).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trapezoid mass `∫ p(t, x_i, y) dy` of every row over the field nodes.
    pub fn row_masses(&self) -> Vec<f64> {
        let grid = self.spectrum.env().grid();
        (0..self.dim())
            .map(|i| {
                let row = self.row(i);
                self.nodes
                    .windows(2)
                    .enumerate()
                    .map(|(k, n)| 0.5 * (grid[n[1]] - grid[n[0]]) * (row[k] + row[k + 1]))
                    .sum()
            })
            .collect()
    }

    /// Largest `|p(x,y)m'(x) - p(y,x)m'(y)|` over node pairs, relative to the
    /// largest `|p·m'|`, with speed density `m' = 2e^{-W}`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let e = self.spectrum.env().exp_neg_w();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (i, &ni) in self.nodes.iter().enumerate() {
            for (j, &nj) in self.nodes.iter().enumerate() {
                let lhs = self.get(i, j) * 2.0 * e[ni];
                let rhs = self.get(j, i) * 2.0 * e[nj];
                worst = worst.max((lhs - rhs).abs());
                scale = scale.max(lhs.abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::find_eigenvalues;
    use crate::env::sample_environment;
    use std::f64::consts::PI;

    fn flat_spectrum(n: usize, n_max: usize) -> Spectrum {
        find_eigenvalues(&Environment::flat(0.0, 1.0, n).unwrap(), n_max).unwrap()
    }

    fn series(t: f64, x: f64, y: f64, terms: usize) -> f64 {
        (1..=terms)
            .map(|n| {
                let k = n as f64 * PI;
                2.0 * (-k * k * t / 2.0).exp() * (k * x).sin() * (k * y).sin()
            })
            .sum()
    }

    #[test]
    fn flat_medium_matches_series() {
        let spec = flat_spectrum(10_000, 20);
        let d = transition_density(&spec, 0.1, 0.5, 0.5, 20).unwrap();
        assert!((d.value - series(0.1, 0.5, 0.5, 200)).abs() < 1e-4);
        assert!(!d.interpolated);
        let off = transition_density(&spec, 0.1, 0.50005, 0.3, 20).unwrap();
        assert!(off.interpolated);
        for y in [0.0, 0.3, 1.0] {
            assert_eq!(transition_density(&spec, 0.1, 0.0, y, 20).unwrap().value, 0.0);
            assert_eq!(transition_density(&spec, 0.1, 1.0, y, 20).unwrap().value, 0.0);
        }
    }

    #[test]
    fn argument_errors() {
        let spec = flat_spectrum(200, 3);
        assert!(transition_density(&spec, 0.0, 0.5, 0.5, 3).is_err());
        assert!(transition_density(&spec, 0.1, 1.5, 0.5, 3).is_err());
        assert!(transition_density(&spec, 0.1, 0.5, 0.5, 4).is_err());
        assert!(transition_density(&spec, 0.1, 0.5, 0.5, 0).is_err());
        assert!(chapman_kolmogorov_residual(&spec, -1.0, 0.1, 0.5, 0.5, 3).is_err());
    }

    #[test]
    fn survival_limits() {
        let spec = flat_spectrum(4000, 200);
        assert!(survival_probability(&spec, 1e-4, 0.5, 200).unwrap() >= 0.99);

        let env = sample_environment(0.0, 1.0, 2000, 42).unwrap();
        let spec = find_eigenvalues(&env, 4).unwrap();
        let p1 = &spec.pairs[0];
        let t = 10.0 / p1.lambda;
        let x = 0.3;
        let loc = locate(&env, x).unwrap();
        let weighted: Vec<f64> = p1.phi.iter().zip(env.exp_neg_w()).map(|(f, w)| 2.0 * f * w).collect();
        let leading = (-p1.lambda * t).exp() * loc.sample(&p1.phi) * trapezoid(&env, &weighted);
        let full = survival_probability(&spec, t, x, 4).unwrap();
        assert!(((full - leading) / leading).abs() < 1e-3);
    }

    #[test]
    fn flat_chapman_kolmogorov() {
        let spec = flat_spectrum(4000, 20);
        let r = chapman_kolmogorov_residual(&spec, 0.1, 0.1, 0.3, 0.6, 20).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn field_invariants() {
        let env = sample_environment(0.0, 1.0, 400, 42).unwrap();
        let spec = find_eigenvalues(&env, 30).unwrap();
        let t = 0.05;
        let n = default_truncation(&spec, t);
        let field = density_field(&spec, t, n).unwrap();
        assert!(field.detailed_balance_residual() < 1e-12);
        assert!(field.min() >= -field.tail_estimate - 1e-12);
        let h = env.max_step();
        assert!(field.row_masses().iter().all(|&m| m <= 1.0 + 10.0 * h));
        let direct = transition_density(&spec, t, env.grid()[37], env.grid()[211], n).unwrap();
        assert!((field.get(37, 211) - direct.value).abs() < 1e-12 * field.max());

        let coarse = density_field_strided(&spec, t, n, 7).unwrap();
        assert_eq!(coarse.nodes().last(), Some(&400));
        assert_eq!(coarse.get(3, 5), field.get(21, 35));
        assert!(coarse.detailed_balance_residual() < 1e-12);
    }

    #[test]
    fn diagonal_partial_sums_increase() {
        let env = sample_environment(0.0, 1.0, 1000, 7).unwrap();
        let spec = find_eigenvalues(&env, 10).unwrap();
        let mut prev = 0.0;
        for n in 1..=10 {
            let v = transition_density(&spec, 0.02, 0.4, 0.4, n).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn gauge_invariance() {
        let env = sample_environment(0.0, 1.0, 1000, 42).unwrap();
        let up = env.shifted(1.0).unwrap();
        let s0 = find_eigenvalues(&env, 8).unwrap();
        let s1 = find_eigenvalues(&up, 8).unwrap();
        for (p, q) in s0.pairs.iter().zip(&s1.pairs) {
            assert!(((p.lambda - q.lambda) / p.lambda).abs() < 1e-10);
        }
        for (x, y) in [(0.3, 0.3), (0.2, 0.7), (0.55, 0.1)] {
            let a = transition_density(&s0, 0.05, x, y, 8).unwrap().value;
            let b = transition_density(&s1, 0.05, x, y, 8).unwrap().value;
            assert!(((a - b) / a).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn bins_sum_to_survival() {
        let env = sample_environment(0.0, 1.0, 1000, 42).unwrap();
        let spec = find_eigenvalues(&env, 10).unwrap();
        let edges: Vec<f64> = (0..=7).map(|k| k as f64 / 7.0).collect();
        let bins = bin_probabilities(&spec, 0.05, 0.3, 10, &edges).unwrap();
        let total: f64 = bins.iter().sum();
        let surv = survival_probability(&spec, 0.05, 0.3, 10).unwrap();
        assert!((total - surv).abs() < 1e-12);
        assert!(bin_probabilities(&spec, 0.05, 0.3, 10, &[0.5, 0.2]).is_err());
    }

    #[test]
    fn truncation_rule() {
        let spec = flat_spectrum(1000, 30);
        let n = default_truncation(&spec, 0.1);
        let l = spec.lambdas();
        assert!((l[n - 1] - l[0]) * 0.1 > 12.0 * std::f64::consts::LN_10);
        assert!((l[n - 2] - l[0]) * 0.1 <= 12.0 * std::f64::consts::LN_10);
        assert_eq!(default_truncation(&spec, 1e-6), 30);
    }
}
