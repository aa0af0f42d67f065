//! Green kernel `g(x, ξ) = -C u(x∧ξ) v(x∨ξ)` and the Green operator `T = L^{-1}`.

use crate::env::{Environment, GridFunction, Sign};
use crate::error::{Error, Result};

/// Precomputed `C = ∫_a^b e^{W}`, `u = s̃/C`, `v = 1 - u` on the grid.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    env: Environment,
    c: f64,
    u: GridFunction,
    v: GridFunction,
}

pub fn build_kernel(env: &Environment) -> GreenKernel {
    let cum = env.cumulative(Sign::Plus);
    let c = cum[cum.len() - 1];
    let u: Vec<f64> = cum.iter().map(|s| s / c).collect();
    let v: Vec<f64> = cum.iter().map(|s| (c - s) / c).collect();
    GreenKernel {
        env: env.clone(),
        c,
        u: GridFunction::from_vec(u),
        v: GridFunction::from_vec(v),
    }
}

impl GreenKernel {
    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn u(&self) -> &GridFunction {
        &self.u
    }

    pub fn v(&self) -> &GridFunction {
        &self.v
    }

    fn u_at(&self, x: f64) -> Result<f64> {
        Ok(self.env.integrate_exp_w(self.env.a(), x, Sign::Plus)? / self.c)
    }

    /// `g(x, ξ)`; non-positive and symmetric.
    pub fn eval(&self, x: f64, xi: f64) -> Result<f64> {
        let (lo, hi) = if x <= xi { (x, xi) } else { (xi, x) };
        let u = self.u_at(lo)?;
        let v = 1.0 - self.u_at(hi)?;
        Ok(-self.c * u * v)
    }

    /// Trapezoid quadrature of the split form
    /// `Th(x) = -2C v(x) ∫_a^x e^{-W} u h - 2C u(x) ∫_x^b e^{-W} v h`.
    ///
    /// Prefix and suffix sums are built once, so the cost is `O(N)`.
    pub fn apply(&self, h: &GridFunction) -> Result<GridFunction> {
        h.check(&self.env)?;
        let grid = self.env.grid();
        let e = self.env.exp_neg_w();
        let n = grid.len();
        let left: Vec<f64> = (0..n).map(|i| e[i] * self.u[i] * h[i]).collect();
        let right: Vec<f64> = (0..n).map(|i| e[i] * self.v[i] * h[i]).collect();

        let mut prefix = vec![0.0; n];
        for i in 1..n {
            prefix[i] = prefix[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (left[i - 1] + left[i]);
        }
        let mut suffix = vec![0.0; n];
        for i in (0..n - 1).rev() {
            suffix[i] = suffix[i + 1] + 0.5 * (grid[i + 1] - grid[i]) * (right[i] + right[i + 1]);
        }
        let mut out: Vec<f64> = (0..n)
            .map(|i| -2.0 * self.c * (self.v[i] * prefix[i] + self.u[i] * suffix[i]))
            .collect();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        Ok(GridFunction::from_vec(out))
    }
}

pub fn kernel_eval(k: &GreenKernel, x: f64, xi: f64) -> Result<f64> {
    k.eval(x, xi)
}

pub fn apply_t(k: &GreenKernel, h: &GridFunction) -> Result<GridFunction> {
    k.apply(h)
}

const GL_NODES: [f64; 8] = [
    -0.9602898564975362,
    -0.7966664774136267,
    -0.525532409916329,
    -0.18343464249564978,
    0.18343464249564978,
    0.525532409916329,
    0.7966664774136267,
    0.9602898564975362,
];
const GL_WEIGHTS: [f64; 8] = [
    0.10122853629037669,
    0.22238103445337434,
    0.31370664587788705,
    0.36268378337836177,
    0.36268378337836177,
    0.31370664587788705,
    0.22238103445337434,
    0.10122853629037669,
];

fn gauss(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(t, w)| w * f(mid + half * t))
        .sum::<f64>()
        * half
}

/// A member `f` of the killed domain together with `h = Lf`.
#[derive(Debug, Clone)]
pub struct DomainMember {
    pub f: GridFunction,
    pub h: GridFunction,
}

/// Build `f` from `h` through the double-integral representation
/// `f(x) = 2∫_a^x e^{W(y)} ∫_a^y h(z) e^{-W(z)} dz dy + c·∫_a^x e^{W}`,
/// with `c` chosen so that `f(b) = 0`.
///
/// Both integrals are evaluated by nested 8-point Gauss–Legendre inside each
/// segment, where the interpolated `W` is linear and the integrands are
/// analytic; the result is the continuum solution of `Lf = h` up to rounding.
pub fn domain_member(env: &Environment, h: impl Fn(f64) -> f64) -> Result<DomainMember> {
    let grid = env.grid();
    let w = env.w();
    let n = grid.len();
    let mut part = vec![0.0; n];
    let mut inner_acc = 0.0;
    for i in 0..n - 1 {
        let (x0, x1) = (grid[i], grid[i + 1]);
        let k = (w[i + 1] - w[i]) / (x1 - x0);
        let w_at = |x: f64| w[i] + k * (x - x0);
        let inner = |y: f64| gauss(x0, y, |z| h(z) * (-w_at(z)).exp());
        let outer = gauss(x0, x1, |y| w_at(y).exp() * (inner_acc + inner(y)));
        part[i + 1] = part[i] + 2.0 * outer;
        inner_acc += inner(x1);
    }
    let cum = env.cumulative(Sign::Plus);
    let c = -part[n - 1] / cum[n - 1];
    let mut f: Vec<f64> = (0..n).map(|i| part[i] + c * cum[i]).collect();
    f[0] = 0.0;
    f[n - 1] = 0.0;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "domain member is not finite".into(),
        ));
    }
    Ok(DomainMember {
        f: GridFunction::from_vec(f),
        h: GridFunction::from_fn(env, h),
    })
}
