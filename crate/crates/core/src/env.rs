//! Frozen Brownian environment on a bounded interval.
//!
//! The medium is a Brownian path `W` sampled on a grid `a = x_0 < ... < x_N = b`
//! and interpolated piecewise-linearly between nodes. Under that interpolation
//! every segment integral of `e^{±W}` has a closed form, so the scale function
//! `s(x) = ∫ e^{W}` and the speed density `2e^{-W}` carry no quadrature error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Deref;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FILE_VERSION: u32 = 1;

/// Below this value of `|slope·Δx|` segment integrals switch to a series.
const SERIES_THRESHOLD: f64 = 1e-8;

/// Sign of the exponent in `∫ e^{±W}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug)]
struct EnvData {
    a: f64,
    b: f64,
    grid: Vec<f64>,
    w: Vec<f64>,
    seed: u64,
    anchor_index: usize,
    /// Value of `W` at the anchor node; zero for sampled media.
    gauge_shift: f64,
    exp_pos: Vec<f64>,
    exp_neg: Vec<f64>,
    seg_pos: Vec<f64>,
    seg_neg: Vec<f64>,
    cum_pos: Vec<f64>,
    cum_neg: Vec<f64>,
    /// `∫_a^{base} e^{W}`, so that `s(x) = cum(x) - scale_offset`.
    scale_offset: f64,
    uniform: bool,
}

/// Immutable, cheaply clonable handle to a sampled environment.
#[derive(Debug, Clone)]
pub struct Environment {
    inner: Arc<EnvData>,
}

impl PartialEq for Environment {
    fn eq(&self, other: &Self) -> bool {
        let (l, r) = (&*self.inner, &*other.inner);
        l.a.to_bits() == r.a.to_bits()
            && l.b.to_bits() == r.b.to_bits()
            && l.seed == r.seed
            && l.anchor_index == r.anchor_index
            && l.gauge_shift.to_bits() == r.gauge_shift.to_bits()
            && bits_eq(&l.grid, &r.grid)
            && bits_eq(&l.w, &r.w)
    }
}

fn bits_eq(x: &[f64], y: &[f64]) -> bool {
    x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
}

/// `∫_0^{dx} e^{sign·(w0 + k·u)} du` for a linear exponent.
fn linear_exp_integral(w0: f64, k: f64, dx: f64, sign: f64) -> f64 {
    let z = sign * k * dx;
    let base = (sign * w0).exp() * dx;
    if z.abs() < SERIES_THRESHOLD {
        base * (1.0 + z / 2.0 + z * z / 6.0)
    } else {
        base * z.exp_m1() / z
    }
}

/// Uniform grid with exact endpoints.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=n)
        .map(|i| a + (b - a) * (i as f64) / (n as f64))
        .collect();
    grid[n] = b;
    grid
}

/// Grid point closest to 0 once 0 is clamped into `[a, b]`; ties go left.
pub fn anchor_index_for(grid: &[f64]) -> usize {
    let target = 0f64.clamp(grid[0], grid[grid.len() - 1]);
    let mut best = 0;
    for (i, &x) in grid.iter().enumerate() {
        if (x - target).abs() < (grid[best] - target).abs() {
            best = i;
        }
    }
    best
}

fn validate_bounds(a: f64, b: f64) -> Result<()> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "interval bounds must be finite, got [{a}, {b}]"
        )));
    }
    if b <= a {
        return Err(Error::InvalidArgument(format!(
            "need b > a, got [{a}, {b}]"
        )));
    }
    Ok(())
}

/// Sample a Brownian environment on a uniform `n`-segment grid of `[a, b]`.
///
/// Increments are independent `N(0, Δx)`; the path is then shifted so that
/// `W` vanishes at the anchor node.
pub fn sample_environment(a: f64, b: f64, n: usize, seed: u64) -> Result<Environment> {
    validate_bounds(a, b)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 segments, got {n}")));
    }
    let grid = uniform_grid(a, b, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(n + 1);
    w.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        acc += (grid[i + 1] - grid[i]).sqrt() * z;
        w.push(acc);
    }
    let anchor = anchor_index_for(&grid);
    let offset = w[anchor];
    for v in &mut w {
        *v -= offset;
    }
    Environment::build(a, b, grid, w, seed, anchor, 0.0)
}

impl Environment {
    /// Environment with prescribed node values on a uniform grid.
    ///
    /// The gauge shift is taken from the anchor value, so arbitrary (for
    /// instance linear or constant) media are admissible.
    pub fn from_values(a: f64, b: f64, w: Vec<f64>) -> Result<Self> {
        validate_bounds(a, b)?;
        if w.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 nodes, got {}",
                w.len()
            )));
        }
        let grid = uniform_grid(a, b, w.len() - 1);
        let anchor = anchor_index_for(&grid);
        let shift = w[anchor];
        Self::build(a, b, grid, w, 0, anchor, shift)
    }

    /// Environment with `W(x_i) = f(x_i)` on a uniform `n`-segment grid.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        validate_bounds(a, b)?;
        let w = uniform_grid(a, b, n).into_iter().map(f).collect();
        Self::from_values(a, b, w)
    }

    /// Flat medium `W ≡ 0`.
    pub fn flat(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::from_fn(a, b, n, |_| 0.0)
    }

    /// General constructor; validates every invariant and fills the caches.
    pub fn from_parts(
        a: f64,
        b: f64,
        grid: Vec<f64>,
        w: Vec<f64>,
        seed: u64,
        anchor_index: usize,
        gauge_shift: f64,
    ) -> Result<Self> {
        validate_bounds(a, b)?;
        Self::build(a, b, grid, w, seed, anchor_index, gauge_shift)
    }

    fn build(
        a: f64,
        b: f64,
        grid: Vec<f64>,
        w: Vec<f64>,
        seed: u64,
        anchor_index: usize,
        gauge_shift: f64,
    ) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::Invariant(format!(
                "grid needs at least 3 points, got {}",
                grid.len()
            )));
        }
        if grid.len() != w.len() {
            return Err(Error::Invariant(format!(
                "grid has {} points but w has {} values",
                grid.len(),
                w.len()
            )));
        }
        if grid[0] != a || grid[grid.len() - 1] != b {
            return Err(Error::Invariant(format!(
                "grid must start at a = {a} and end at b = {b}"
            )));
        }
        if let Some(i) = grid.windows(2).position(|p| !(p[1] > p[0])) {
            return Err(Error::Invariant(format!(
                "grid not strictly increasing at index {i}"
            )));
        }
        if let Some(i) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite W at index {i}")));
        }
        let expected_anchor = anchor_index_for(&grid);
        if anchor_index != expected_anchor {
            return Err(Error::Invariant(format!(
                "anchor index {anchor_index} differs from nearest-to-zero node {expected_anchor}"
            )));
        }
        if w[anchor_index] != gauge_shift {
            return Err(Error::Invariant(format!(
                "W at anchor is {} but gauge shift is {gauge_shift}",
                w[anchor_index]
            )));
        }

        let n = grid.len() - 1;
        let exp_pos: Vec<f64> = w.iter().map(|v| v.exp()).collect();
        let exp_neg: Vec<f64> = w.iter().map(|v| (-v).exp()).collect();
        let mut seg_pos = Vec::with_capacity(n);
        let mut seg_neg = Vec::with_capacity(n);
        for i in 0..n {
            let h = grid[i + 1] - grid[i];
            let k = (w[i + 1] - w[i]) / h;
            seg_pos.push(linear_exp_integral(w[i], k, h, 1.0));
            seg_neg.push(linear_exp_integral(w[i], k, h, -1.0));
        }
        let prefix = |seg: &[f64]| {
            let mut cum = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            cum.push(0.0);
            for v in seg {
                acc += v;
                cum.push(acc);
            }
            cum
        };
        let cum_pos = prefix(&seg_pos);
        let cum_neg = prefix(&seg_neg);
        let uniform = bits_eq(&grid, &uniform_grid(a, b, n));
        let base = 0f64.clamp(a, b);
        let j = grid.partition_point(|&g| g <= base).saturating_sub(1).min(n - 1);
        let dx = base - grid[j];
        let scale_offset = cum_pos[j]
            + if dx > 0.0 {
                linear_exp_integral(w[j], (w[j + 1] - w[j]) / (grid[j + 1] - grid[j]), dx, 1.0)
            } else {
                0.0
            };

        Ok(Environment {
            inner: Arc::new(EnvData {
                a,
                b,
                grid,
                w,
                seed,
                anchor_index,
                gauge_shift,
                exp_pos,
                exp_neg,
                seg_pos,
                seg_neg,
                cum_pos,
                cum_neg,
                scale_offset,
                uniform,
            }),
        })
    }

    pub fn a(&self) -> f64 {
        self.inner.a
    }

    pub fn b(&self) -> f64 {
        self.inner.b
    }

    pub fn seed(&self) -> u64 {
        self.inner.seed
    }

    pub fn anchor_index(&self) -> usize {
        self.inner.anchor_index
    }

    pub fn gauge_shift(&self) -> f64 {
        self.inner.gauge_shift
    }

    pub fn grid(&self) -> &[f64] {
        &self.inner.grid
    }

    pub fn w(&self) -> &[f64] {
        &self.inner.w
    }

    /// `e^{W(x_i)}` at every node.
    pub fn exp_w(&self) -> &[f64] {
        &self.inner.exp_pos
    }

    /// `e^{-W(x_i)}` at every node.
    pub fn exp_neg_w(&self) -> &[f64] {
        &self.inner.exp_neg
    }

    /// Number of grid points (`N + 1`).
    pub fn len(&self) -> usize {
        self.inner.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of segments `N`.
    pub fn segments(&self) -> usize {
        self.inner.grid.len() - 1
    }

    pub fn is_uniform(&self) -> bool {
        self.inner.uniform
    }

    /// Width of segment `i`.
    pub fn step(&self, i: usize) -> f64 {
        self.inner.grid[i + 1] - self.inner.grid[i]
    }

    /// Largest segment width.
    pub fn max_step(&self) -> f64 {
        self.inner
            .grid
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(0.0, f64::max)
    }

    /// Exact `∫ e^{sign·W}` over segment `i`.
    pub fn segment_integral(&self, i: usize, sign: Sign) -> f64 {
        match sign {
            Sign::Plus => self.inner.seg_pos[i],
            Sign::Minus => self.inner.seg_neg[i],
        }
    }

    /// Cumulative `∫_a^{x_i} e^{sign·W}` at every node.
    pub fn cumulative(&self, sign: Sign) -> &[f64] {
        match sign {
            Sign::Plus => &self.inner.cum_pos,
            Sign::Minus => &self.inner.cum_neg,
        }
    }

    fn check_in_range(&self, what: &'static str, x: f64) -> Result<()> {
        if !(x >= self.a() && x <= self.b()) {
            return Err(Error::OutOfRange {
                what,
                value: x,
                lo: self.a(),
                hi: self.b(),
            });
        }
        Ok(())
    }

    /// Index `i` of the segment `[x_i, x_{i+1}]` containing `x` (clamped).
    pub fn segment_of(&self, x: f64) -> usize {
        let grid = &self.inner.grid;
        let i = grid.partition_point(|&g| g <= x);
        i.saturating_sub(1).min(grid.len() - 2)
    }

    /// Slope of `W` on segment `i`.
    fn slope(&self, i: usize) -> f64 {
        (self.inner.w[i + 1] - self.inner.w[i]) / self.step(i)
    }

    /// Linear interpolation of `W` at `x ∈ [a, b]`.
    pub fn w_at(&self, x: f64) -> f64 {
        let i = self.segment_of(x);
        self.inner.w[i] + self.slope(i) * (x - self.inner.grid[i])
    }

    /// `∫_{x_i}^{x} e^{sign·W}` inside segment `i`.
    fn partial(&self, i: usize, x: f64, sign: f64) -> f64 {
        let dx = x - self.inner.grid[i];
        if dx <= 0.0 {
            return 0.0;
        }
        linear_exp_integral(self.inner.w[i], self.slope(i), dx, sign)
    }

    /// `∫_a^x e^{sign·W}`.
    fn cumulative_at(&self, x: f64, sign: Sign) -> f64 {
        let i = self.segment_of(x);
        self.cumulative(sign)[i] + self.partial(i, x, sign.as_f64())
    }

    /// Exact `∫_{x1}^{x2} e^{sign·W(y)} dy` under piecewise-linear `W`.
    pub fn integrate_exp_w(&self, x1: f64, x2: f64, sign: Sign) -> Result<f64> {
        self.check_in_range("x1", x1)?;
        self.check_in_range("x2", x2)?;
        if x2 < x1 {
            return Err(Error::InvalidArgument(format!(
                "need x1 <= x2, got {x1} > {x2}"
            )));
        }
        let (i1, i2) = (self.segment_of(x1), self.segment_of(x2));
        let s = sign.as_f64();
        if i1 == i2 {
            return Ok(self.partial(i1, x2, s) - self.partial(i1, x1, s));
        }
        let cum = self.cumulative(sign);
        let head = self.segment_integral(i1, sign) - self.partial(i1, x1, s);
        let body = cum[i2] - cum[i1 + 1];
        let tail = self.partial(i2, x2, s);
        Ok(head + body + tail)
    }

    /// Base point of the scale function: 0 clamped into `[a, b]`.
    pub fn scale_base(&self) -> f64 {
        0f64.clamp(self.a(), self.b())
    }

    /// Scale function `s(x) = ∫_{base}^x e^{W}`.
    pub fn scale(&self, x: f64) -> Result<f64> {
        self.check_in_range("x", x)?;
        Ok(self.cumulative_at(x, Sign::Plus) - self.inner.scale_offset)
    }

    /// `(s(a), s(b))`.
    pub fn scale_range(&self) -> (f64, f64) {
        let base = self.inner.scale_offset;
        let total = self.inner.cum_pos[self.segments()];
        (-base, total - base)
    }

    /// Inverse scale function, solved exactly inside the bracketing segment.
    pub fn scale_inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.scale_range();
        if !(y >= lo && y <= hi) {
            return Err(Error::OutOfRange {
                what: "y",
                value: y,
                lo,
                hi,
            });
        }
        Ok(self.scale_inverse_with_w(y).0)
    }

    /// `(s^{-1}(y), W(s^{-1}(y)))` without range checks; `y` is clamped.
    pub fn scale_inverse_with_w(&self, y: f64) -> (f64, f64) {
        let target = self.scale_target(y);
        let i = self
            .inner
            .cum_pos
            .partition_point(|&c| c <= target)
            .saturating_sub(1)
            .min(self.segments() - 1);
        self.invert_in_segment(i, target)
    }

    /// As [`Environment::scale_inverse_with_w`], locating the segment by a
    /// walk from `hint`, which is updated. Cheap for slowly moving `y`.
    pub fn scale_inverse_near(&self, y: f64, hint: &mut usize) -> (f64, f64) {
        let target = self.scale_target(y);
        let i = self.walk(target, *hint);
        *hint = i;
        self.invert_in_segment(i, target)
    }

    /// `e^{W(s^{-1}(y))}` with a segment walk from `hint`. On a segment
    /// `e^{W}` is affine in the scale variable, so no logarithm is needed.
    pub fn exp_w_at_scale_near(&self, y: f64, hint: &mut usize) -> f64 {
        let target = self.scale_target(y);
        let i = self.walk(target, *hint);
        *hint = i;
        self.inner.exp_pos[i] + self.slope(i) * (target - self.inner.cum_pos[i])
    }

    fn walk(&self, target: f64, from: usize) -> usize {
        let cum = &self.inner.cum_pos;
        let last = self.segments() - 1;
        let mut i = from.min(last);
        while i > 0 && cum[i] > target {
            i -= 1;
        }
        while i < last && cum[i + 1] <= target {
            i += 1;
        }
        i
    }

    fn scale_target(&self, y: f64) -> f64 {
        let cum = &self.inner.cum_pos;
        (y + self.inner.scale_offset).clamp(0.0, cum[cum.len() - 1])
    }

    fn invert_in_segment(&self, i: usize, target: f64) -> (f64, f64) {
        let rem = target - self.inner.cum_pos[i];
        let h = self.step(i);
        let k = self.slope(i);
        let w0 = self.inner.w[i];
        // Solve e^{w0}·expm1(k·dx)/k = rem for dx.
        let q = rem * k * self.inner.exp_neg[i];
        let dx = if q.abs() < 1e-12 {
            rem * self.inner.exp_neg[i] * (1.0 - q / 2.0)
        } else {
            q.ln_1p() / k
        };
        let dx = dx.clamp(0.0, h);
        (self.inner.grid[i] + dx, w0 + k * dx)
    }

    /// Same medium with `W → W + c`; every spectral quantity is invariant.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let d = &*self.inner;
        let w = d.w.iter().map(|v| v + c).collect();
        Self::build(d.a, d.b, d.grid.clone(), w, d.seed, d.anchor_index, d.gauge_shift + c)
    }

    /// Brownian-bridge midpoint refinement: every segment is split in two.
    ///
    /// The midpoint draw for segment `i` is keyed by `(seed, N, i)`, so the
    /// refinement chain of a given medium is reproducible. Existing node values
    /// are kept; the result is re-anchored if the anchor node moves.
    pub fn refine(&self) -> Result<Self> {
        let d = &*self.inner;
        let n = self.segments();
        let mut grid = Vec::with_capacity(2 * n + 1);
        let mut w = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            let h = self.step(i);
            let mut rng = ChaCha8Rng::from_seed(refine_key(d.seed, n as u64, i as u64));
            let z: f64 = StandardNormal.sample(&mut rng);
            grid.push(d.grid[i]);
            w.push(d.w[i]);
            grid.push(d.grid[i] + 0.5 * h);
            w.push(0.5 * (d.w[i] + d.w[i + 1]) + 0.5 * h.sqrt() * z);
        }
        grid.push(d.b);
        w.push(d.w[n]);
        let anchor = anchor_index_for(&grid);
        let offset = w[anchor] - d.gauge_shift;
        if offset != 0.0 {
            for v in &mut w {
                *v -= offset;
            }
            w[anchor] = d.gauge_shift;
        }
        Self::build(d.a, d.b, grid, w, d.seed, anchor, d.gauge_shift)
    }

    /// Write the environment as versioned JSON.
    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &self.to_file())
            .map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: EnvFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        Self::from_file(parsed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("environment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: EnvFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_file(parsed)
    }

    fn to_file(&self) -> EnvFile {
        let d = &*self.inner;
        EnvFile {
            version: FILE_VERSION,
            a: d.a,
            b: d.b,
            n: self.segments(),
            seed: d.seed,
            anchor_index: d.anchor_index,
            gauge_shift: (d.gauge_shift != 0.0).then_some(d.gauge_shift),
            grid: (!d.uniform).then(|| d.grid.clone()),
            w: d.w.clone(),
            checksum: Some(checksum(d.a, d.b, d.seed, d.anchor_index, &d.grid, &d.w)),
        }
    }

    fn from_file(f: EnvFile) -> Result<Self> {
        if f.version != FILE_VERSION {
            return Err(Error::Schema(format!(
                "unsupported version {} (expected {FILE_VERSION})",
                f.version
            )));
        }
        validate_bounds(f.a, f.b).map_err(|e| Error::Schema(e.to_string()))?;
        if f.w.len() != f.n + 1 {
            return Err(Error::Schema(format!(
                "n = {} requires {} w values, found {}",
                f.n,
                f.n + 1,
                f.w.len()
            )));
        }
        let grid = match f.grid {
            Some(g) => {
                if g.len() != f.n + 1 {
                    return Err(Error::Schema(format!(
                        "grid has {} points, expected {}",
                        g.len(),
                        f.n + 1
                    )));
                }
                g
            }
            None => uniform_grid(f.a, f.b, f.n),
        };
        if let Some(stored) = f.checksum {
            let computed = checksum(f.a, f.b, f.seed, f.anchor_index, &grid, &f.w);
            if stored != computed {
                return Err(Error::Checksum { stored, computed });
            }
        }
        Self::build(
            f.a,
            f.b,
            grid,
            f.w,
            f.seed,
            f.anchor_index,
            f.gauge_shift.unwrap_or(0.0),
        )
    }
}

fn refine_key(seed: u64, n: u64, i: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&n.to_le_bytes());
    key[16..24].copy_from_slice(&i.to_le_bytes());
    key[24..].copy_from_slice(b"bbridge\0");
    key
}

fn checksum(a: f64, b: f64, seed: u64, anchor: usize, grid: &[f64], w: &[f64]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(a.to_le_bytes());
    hasher.update(b.to_le_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.update((anchor as u64).to_le_bytes());
    for x in grid.iter().chain(w) {
        hasher.update(x.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// On-disk layout of an environment.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    version: u32,
    a: f64,
    b: f64,
    n: usize,
    seed: u64,
    anchor_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gauge_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<f64>>,
    w: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    checksum: Option<String>,
}

/// Values of a scalar function at the nodes of an environment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(env: &Environment, values: Vec<f64>) -> Result<Self> {
        if values.len() != env.len() {
            return Err(Error::GridMismatch {
                expected: env.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid function value at node {i} is not finite"
            )));
        }
        Ok(GridFunction { values })
    }

    /// Unchecked constructor for values produced internally.
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        GridFunction { values }
    }

    pub fn from_fn(env: &Environment, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            values: env.grid().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zeros(env: &Environment) -> Self {
        GridFunction {
            values: vec![0.0; env.len()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup norm over interior nodes only.
    pub fn interior_sup_norm(&self) -> f64 {
        let n = self.values.len();
        self.values[1..n - 1].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        GridFunction {
            values: self.values.iter().zip(&other.values).map(|(x, y)| x - y).collect(),
        }
    }

    /// Linear interpolation at `x` on the given environment grid.
    pub fn interpolate(&self, env: &Environment, x: f64) -> f64 {
        let i = env.segment_of(x);
        let g = env.grid();
        let t = ((x - g[i]) / (g[i + 1] - g[i])).clamp(0.0, 1.0);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    pub(crate) fn check(&self, env: &Environment) -> Result<()> {
        if self.values.len() != env.len() {
            return Err(Error::GridMismatch {
                expected: env.len(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

impl Deref for GridFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Trapezoid rule `∫ f` for node values on the environment grid.
pub fn trapezoid(env: &Environment, f: &[f64]) -> f64 {
    env.grid()
        .windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Trapezoid `∫ f g 2e^{-W}`: the speed-measure inner product.
pub fn speed_inner(env: &Environment, f: &[f64], g: &[f64]) -> f64 {
    let e = env.exp_neg_w();
    let prod: Vec<f64> = (0..env.len()).map(|i| 2.0 * e[i] * f[i] * g[i]).collect();
    trapezoid(env, &prod)
}
