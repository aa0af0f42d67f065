//! `verify`: cross-module residuals checked against fixed tolerances.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::commands::{load_env, spectrum_for, Context};
use super::output::{env_summary, write_sidecar, Table};
use super::{CliResult, Failure, VerifyArgs};
use crate::density::{
    chapman_kolmogorov_residual, default_truncation, density_field_strided, transition_density,
};
use crate::eigen::{eigenvalue_count, find_eigenvalues, sde_residual, Spectrum};
use crate::env::{speed_inner, Environment};
use crate::green::{build_kernel, domain_member};
use crate::operator::apply_l;
use crate::oracle::{discretize, oracle_count, oracle_eigenvalue};
use crate::riccati::{quasi_riccati_path, riccati_path, DEFAULT_CAP};
use crate::shooting;

/// Eigenvalues within this relative distance of a sampled lambda are skipped
/// by the counting checks, where the counters may legitimately differ by one.
pub const COUNT_EXCLUSION: f64 = 1e-3;
const SWEEP_POINTS: usize = 50;
const SWEEP_MAX: f64 = 200.0;
const DENSITY_TIME: f64 = 0.05;
/// Nodes per axis of the detailed-balance field.
const FIELD_POINTS: usize = 400;

struct Check {
    name: String,
    value: f64,
    /// `None` for reported-only quantities.
    tolerance: Option<f64>,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: Option<f64>) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
        }
    }

    fn passes(&self) -> bool {
        self.tolerance.is_none_or(|t| self.value <= t)
    }
}

fn green_checks(env: &Environment, out: &mut Vec<Check>) -> CliResult<()> {
    let k = build_kernel(env);
    let member = domain_member(env, |x| (3.0 * x).cos() + x)?;
    let tl = k.apply(&member.h)?.sub(&member.f).sup_norm();
    out.push(Check::new("green_T_of_Lf", tl, Some(1e-2)));
    let lt = apply_l(env, &k.apply(&member.h)?)?.sub(&member.h).interior_sup_norm();
    out.push(Check::new("green_L_of_Th", lt, Some(1e-6)));
    Ok(())
}

fn oracle_checks(env: &Environment, spec: &Spectrum, out: &mut Vec<Check>) -> CliResult<()> {
    let sys = discretize(env);
    for (i, p) in spec.pairs.iter().enumerate() {
        let o = oracle_eigenvalue(&sys, i + 1)?;
        out.push(Check::new(
            format!("oracle_rel_diff_{}", i + 1),
            ((p.lambda - o) / o).abs(),
            Some(1e-3),
        ));
    }
    Ok(())
}

/// Mismatch counts of the four counters over a fixed lambda sweep.
fn counting_checks(env: &Environment, spec: &Spectrum, out: &mut Vec<Check>) -> CliResult<()> {
    let lambdas = spec.lambdas();
    let sys = discretize(env);
    let mut rng = ChaCha8Rng::seed_from_u64(env.seed());
    let mut mismatches = [0usize; 4];
    let mut used = 0;
    for _ in 0..SWEEP_POINTS {
        let lambda = rng.random_range(0.0..SWEEP_MAX);
        if lambda == 0.0
            || lambdas
                .iter()
                .any(|&l| (l - lambda).abs() <= COUNT_EXCLUSION * l)
        {
            continue;
        }
        used += 1;
        let n = eigenvalue_count(env, lambda)?;
        let phase = shooting::pruefer_phase(env, lambda)?;
        let by_phase = (phase[env.len() - 1] / std::f64::consts::PI).floor() as usize;
        let counts = [
            by_phase,
            oracle_count(&sys, lambda),
            riccati_path(env, lambda, DEFAULT_CAP)?.explosion_count,
            quasi_riccati_path(env, lambda)?.explosion_count,
        ];
        for (m, c) in mismatches.iter_mut().zip(counts) {
            *m += usize::from(c != n);
        }
    }
    for (name, m) in ["pruefer", "oracle", "riccati", "quasi_riccati"].iter().zip(mismatches) {
        out.push(Check::new(format!("count_mismatch_{name}"), m as f64, Some(0.0)));
    }
    out.push(Check::new("count_sweep_points", used as f64, None));
    Ok(())
}

fn spectrum_checks(env: &Environment, spec: &Spectrum, out: &mut Vec<Check>) -> CliResult<()> {
    let h = env.max_step();
    let mut norm_dev = 0.0f64;
    let mut ortho = 0.0f64;
    let mut zero_dev = 0usize;
    for (i, p) in spec.pairs.iter().enumerate() {
        norm_dev = norm_dev.max((speed_inner(env, &p.phi, &p.phi) - 1.0).abs());
        zero_dev += usize::from(p.zeros_interior != i);
        for q in &spec.pairs[..i] {
            ortho = ortho.max(speed_inner(env, &p.phi, &q.phi).abs());
        }
    }
    out.push(Check::new("normalization", norm_dev, Some(1e-8)));
    out.push(Check::new("orthogonality", ortho, Some(10.0 * h)));
    out.push(Check::new("zero_certificate_failures", zero_dev as f64, Some(0.0)));
    out.push(Check::new("sde_residual_1", sde_residual(spec, 1)?, None));
    Ok(())
}

fn density_checks(env: &Environment, spec: &Spectrum, out: &mut Vec<Check>) -> CliResult<()> {
    let t = DENSITY_TIME;
    let n = default_truncation(spec, t);
    let (x, y) = (env.a() + 0.3 * (env.b() - env.a()), env.a() + 0.6 * (env.b() - env.a()));
    let ck = chapman_kolmogorov_residual(spec, t, t, x, y, n)?;
    let tail = transition_density(spec, t, x, y, n)?.tail_estimate;
    out.push(Check::new(
        "chapman_kolmogorov",
        ck,
        Some((10.0 * env.max_step()).max(tail)),
    ));
    let stride = (env.segments() / FIELD_POINTS).max(1);
    let field = density_field_strided(spec, t, n, stride)?;
    out.push(Check::new(
        "detailed_balance",
        field.detailed_balance_residual(),
        Some(1e-12),
    ));
    Ok(())
}

pub(crate) fn verify(ctx: &Context, args: VerifyArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let (env_path, env) = load_env(ctx, args.env)?;
    let n: usize = s.get(args.n, "n", 8)?;
    let out: Option<PathBuf> = s.opt(args.out, "out")?;
    let mut green = s.switch(args.green, "green")?;
    let mut oracle = s.switch(args.oracle, "oracle")?;
    let all = s.switch(args.all, "all")? || !(green || oracle);
    if all {
        green = true;
        oracle = true;
    }

    let mut checks = Vec::new();
    if green {
        green_checks(&env, &mut checks)?;
    }
    if oracle || all {
        // the density checks need modes up to the truncation order
        let spec = if all {
            let (spec, _) = spectrum_for(&env, DENSITY_TIME, None)?;
            if spec.len() >= n {
                spec
            } else {
                find_eigenvalues(&env, n)?
            }
        } else {
            find_eigenvalues(&env, n)?
        };
        let head = spec.truncated(n);
        oracle_checks(&env, &head, &mut checks)?;
        if all {
            counting_checks(&env, &spec, &mut checks)?;
            spectrum_checks(&env, &head, &mut checks)?;
            density_checks(&env, &spec, &mut checks)?;
        }
    }

    let failed = checks.iter().filter(|c| !c.passes()).count();
    let label = out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut table = Table::in_memory(&label, &["check", "value", "tolerance", "pass"])?;
    for c in &checks {
        table.row((&c.name, c.value, c.tolerance, c.passes()))?;
    }
    let bytes = table.into_bytes()?;
    print!("{}", String::from_utf8_lossy(&bytes));
    if let Some(path) = &out {
        std::fs::write(path, &bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    }
    let sidecar_base = out.clone().unwrap_or_else(|| {
        let mut p = env_path.as_os_str().to_os_string();
        p.push(".verify");
        PathBuf::from(p)
    });
    let config = json!({
        "env": env_summary(&env, &env_path),
        "n": n, "all": all, "green": green, "oracle": oracle,
        "out": out,
        "count_exclusion": COUNT_EXCLUSION,
        "config_file": s.source().map(|p| p.display().to_string()),
        "threads": ctx.threads,
    });
    let results: serde_json::Map<String, serde_json::Value> = checks
        .iter()
        .map(|c| (c.name.clone(), json!({"value": c.value, "tolerance": c.tolerance, "pass": c.passes()})))
        .collect();
    write_sidecar(&sidecar_base, "verify", config, serde_json::Value::Object(results))?;
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} check(s) above tolerance")));
    }
    Ok(())
}

