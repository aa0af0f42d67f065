//! Monte Carlo simulation of the killed diffusion by time change of a
//! Brownian motion in natural scale:
//! `X_t = s^{-1}(B_{γ_t})`, `γ = T^{-1}`, `T_u = ∫_0^u e^{-2W(s^{-1}(B_r))} dr`,
//! killed when `B` leaves `[s(a), s(b)]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::env::Environment;
use crate::error::{Error, Result};

/// Divisor of `(s(b) - s(a))²` giving the default Brownian step.
pub const DEFAULT_DT_DIVISOR: f64 = 1e5;

/// Median of `|N(0, 1)|`; a step with `√dt` above `(s(b)-s(a))/2` divided by
/// this exits from the midpoint with probability over one half.
const HALF_EXIT_QUANTILE: f64 = 0.674_489_750_196_081_7;

/// Bridge exit probabilities below this are treated as zero and cost no draw.
const NEGLIGIBLE_EXIT: f64 = 1e-18;
/// `-ln(NEGLIGIBLE_EXIT)`.
const NEGLIGIBLE_EXPONENT: f64 = 41.446_531_673_892_82;

pub fn default_dt(env: &Environment) -> f64 {
    let (lo, hi) = env.scale_range();
    (hi - lo).powi(2) / DEFAULT_DT_DIVISOR
}

#[derive(Debug, Clone)]
pub struct McResult {
    env: Environment,
    pub x0: f64,
    pub t: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    /// Positions at time `t` of the surviving paths, in path order.
    pub alive_positions: Vec<f64>,
    pub killed_count: usize,
    /// Brownian steps taken over all paths.
    pub total_steps: u64,
}

impl McResult {
    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn survival_fraction(&self) -> f64 {
        self.alive_positions.len() as f64 / self.n_paths as f64
    }

    /// Binomial standard error of the survival fraction.
    pub fn survival_stderr(&self) -> f64 {
        let p = self.survival_fraction();
        (p * (1.0 - p) / self.n_paths as f64).sqrt()
    }
}

enum Fate {
    Alive(f64),
    Killed,
}

/// Probability that a Brownian bridge of duration `d` from `y0` to `y1`
/// touches `lo` or `hi`, both endpoints being inside.
fn bridge_exit_probability(y0: f64, y1: f64, d: f64, lo: f64, hi: f64) -> f64 {
    let exponent = |u: f64, v: f64| {
        let e = 2.0 * u * v / d;
        if e > NEGLIGIBLE_EXPONENT {
            0.0
        } else {
            (-e).exp()
        }
    };
    (exponent(y0 - lo, y1 - lo) + exponent(hi - y0, hi - y1)).min(1.0)
}

fn run_path(env: &Environment, y0: f64, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> (Fate, u64) {
    let (lo, hi) = env.scale_range();
    let mut y = y0;
    let mut clock = 0.0;
    let mut steps = 0u64;
    let mut hint = 0;
    loop {
        let rate = env.exp_w_at_scale_near(y, &mut hint).powi(-2);
        let (d, last) = if clock + rate * dt >= t {
            ((t - clock) / rate, true)
        } else {
            (dt, false)
        };
        let z: f64 = rng.sample(StandardNormal);
        let next = y + d.sqrt() * z;
        steps += 1;
        if next <= lo || next >= hi {
            return (Fate::Killed, steps);
        }
        let p = bridge_exit_probability(y, next, d, lo, hi);
        if p > NEGLIGIBLE_EXIT && rng.random::<f64>() < p {
            return (Fate::Killed, steps);
        }
        y = next;
        if last {
            return (Fate::Alive(env.scale_inverse_near(y, &mut hint).0), steps);
        }
        clock += rate * dt;
    }
}

/// Simulate `n_paths` independent paths started at `x0` up to time `t`.
/// Path `k` draws from the ChaCha8 stream `k` of `seed`, so the result does
/// not depend on the number of worker threads.
pub fn simulate_paths(
    env: &Environment,
    x0: f64,
    t: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<McResult> {
    if !(x0 > env.a() && x0 < env.b()) {
        return Err(Error::OutOfRange {
            what: "x0",
            value: x0,
            lo: env.a(),
            hi: env.b(),
        });
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if n_paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let (lo, hi) = env.scale_range();
    let limit = ((hi - lo) / (2.0 * HALF_EXIT_QUANTILE)).powi(2);
    if dt > limit {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} exceeds {limit}: a single step would exit with probability above 1/2"
        )));
    }
    let y0 = env.scale(x0)?;
    let outcomes: Vec<(Fate, u64)> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            run_path(env, y0, t, dt, &mut rng)
        })
        .collect();
    let mut alive_positions = Vec::new();
    let mut killed_count = 0;
    let mut total_steps = 0;
    for (fate, steps) in outcomes {
        total_steps += steps;
        match fate {
            Fate::Alive(x) => alive_positions.push(x),
            Fate::Killed => killed_count += 1,
        }
    }
    Ok(McResult {
        env: env.clone(),
        x0,
        t,
        n_paths,
        dt,
        seed,
        alive_positions,
        killed_count,
        total_steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `counts / (n_paths · width)`; integrates to the survival fraction.
    pub density: Vec<f64>,
    pub n_paths: usize,
}

impl Histogram {
    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, e)| d * (e[1] - e[0]))
            .sum()
    }

    /// Binomial standard error of each bin of `density`.
    pub fn density_stderr(&self) -> Vec<f64> {
        let n = self.n_paths as f64;
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(&c, e)| {
                let p = c as f64 / n;
                (p * (1.0 - p) / n).sqrt() / (e[1] - e[0])
            })
            .collect()
    }
}

/// Equal-width histogram of the surviving positions over `[a, b]`.
pub fn empirical_density(result: &McResult, bin_count: usize) -> Result<Histogram> {
    if bin_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {bin_count}"
        )));
    }
    let (a, b) = (result.env.a(), result.env.b());
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| if i == bin_count { b } else { a + (b - a) * i as f64 / bin_count as f64 })
        .collect();
    let mut counts = vec![0usize; bin_count];
    for &x in &result.alive_positions {
        let k = (edges.partition_point(|&e| e <= x)).saturating_sub(1).min(bin_count - 1);
        counts[k] += 1;
    }
    let n = result.n_paths as f64;
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, e)| c as f64 / (n * (e[1] - e[0])))
        .collect();
    Ok(Histogram {
        edges,
        counts,
        density,
        n_paths: result.n_paths,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of the bin counts plus the killed count against
/// model bin probabilities; the killed cell gets the complementary mass, so
/// the cells follow one multinomial and there are `bins` degrees of freedom.
pub fn chi_square_test(hist: &Histogram, bin_probabilities: &[f64]) -> Result<ChiSquare> {
    if bin_probabilities.len() != hist.counts.len() {
        return Err(Error::GridMismatch {
            expected: hist.counts.len(),
            got: bin_probabilities.len(),
        });
    }
    let n = hist.n_paths as f64;
    let alive: usize = hist.counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = hist
        .counts
        .iter()
        .zip(bin_probabilities)
        .map(|(&c, &p)| (c as f64, n * p.max(0.0)))
        .collect();
    let p_killed = 1.0 - bin_probabilities.iter().map(|p| p.max(0.0)).sum::<f64>();
    cells.push(((hist.n_paths - alive) as f64, n * p_killed.max(0.0)));
    let mut statistic = 0.0;
    for (o, e) in cells {
        if e <= 0.0 {
            if o > 0.0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        statistic += (o - e).powi(2) / e;
    }
    let dof = hist.counts.len();
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-square distribution: {e}")))?;
    let p_value = if statistic.is_finite() { dist.sf(statistic) } else { 0.0 };
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
    })
}
