use std::path::{Path, PathBuf};

use serde_json::json;

use super::output::{env_summary, write_sidecar, Table};
use super::plot::{plot, PlotKind};
use super::{
    CliResult, DensityArgs, EigenArgs, Failure, GenEnvArgs, PlotArgs, PlotKindArg, RiccatiArgs,
    Settings, ShootArgs, SimulateArgs,
};
use crate::density::{self, bin_probabilities, default_truncation};
use crate::eigen::{find_eigenvalues_with, EigenConfig, Spectrum};
use crate::env::{sample_environment, Environment};
use crate::mc::{self, chi_square_test, empirical_density, simulate_paths};
use crate::riccati::{self, quasi_riccati_path_with, riccati_path};
use crate::shooting::{self, ShootConfig};

/// Largest spectrum computed when the truncation order is chosen automatically.
pub const MAX_AUTO_MODES: usize = 512;
/// Nodes per axis of an exported density field with the default stride.
const FIELD_POINTS: usize = 200;

pub(crate) struct Context {
    pub settings: Settings,
    pub threads: Option<usize>,
}

impl Context {
    fn base_config(&self) -> serde_json::Value {
        json!({
            "config_file": self.settings.source().map(|p| p.display().to_string()),
            "threads": self.threads,
        })
    }
}

fn merge(mut base: serde_json::Value, extra: serde_json::Value) -> serde_json::Value {
    if let (Some(b), serde_json::Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

pub(crate) fn load_env(ctx: &Context, flag: Option<PathBuf>) -> CliResult<(PathBuf, Environment)> {
    let path: PathBuf = ctx.settings.require(flag, "env")?;
    let env = Environment::load(&path)?;
    Ok((path, env))
}

pub(crate) fn gen_env(ctx: &Context, args: GenEnvArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let a = s.get(args.a, "a", 0.0)?;
    let b = s.get(args.b, "b", 1.0)?;
    let n = s.get(args.n, "n", 10_000)?;
    let seed = s.get(args.seed, "seed", 42)?;
    let out: PathBuf = s.require(args.out, "out")?;
    let env = sample_environment(a, b, n, seed)?;
    env.store(&out)?;
    let config = merge(ctx.base_config(), json!({"a": a, "b": b, "n": n, "seed": seed, "out": out}));
    write_sidecar(&out, "gen-env", config, json!({"nodes": env.len()}))?;
    println!("wrote {} ({} nodes, seed {seed})", out.display(), env.len());
    Ok(())
}

pub(crate) fn shoot(ctx: &Context, args: ShootArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let (env_path, env) = load_env(ctx, args.env)?;
    let lambda: f64 = s.require(args.lambda, "lambda")?;
    let substeps = s.get(args.substeps, "substeps", ShootConfig::default().substeps)?;
    let out: PathBuf = s.require(args.out, "out")?;
    let cfg = ShootConfig {
        substeps,
        ..ShootConfig::default()
    };
    let sol = shooting::shoot_with(&env, lambda, &cfg)?;
    let mut table = Table::create(&out, &["x", "psi", "eta"])?;
    for i in 0..env.len() {
        table.row((env.grid()[i], sol.psi[i], sol.eta[i]))?;
    }
    table.finish()?;
    let zeros = shooting::count_zeros(&sol);
    let config = merge(
        ctx.base_config(),
        json!({"env": env_summary(&env, &env_path), "lambda": lambda, "substeps": substeps, "out": out}),
    );
    let results = json!({
        "zero_count": zeros,
        "phase_count": sol.phase_count(),
        "psi_b": sol.psi_b,
    });
    write_sidecar(&out, "shoot", config, results)?;
    println!("lambda {lambda}: {zeros} zeros on (a, b], psi(b) = {}", sol.psi_b);
    Ok(())
}

fn derived_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

pub(crate) fn eigen(ctx: &Context, args: EigenArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let (env_path, env) = load_env(ctx, args.env)?;
    let defaults = EigenConfig::default();
    let n: usize = s.get(args.n, "n", 8)?;
    let tol = s.get(args.tol, "tol", defaults.rel_tol)?;
    let max_iter = s.get(args.max_iter, "max-iter", defaults.max_iter)?;
    let out: PathBuf = s.require(args.out, "out")?;
    let phi_out = s
        .opt(args.phi_out, "phi-out")?
        .unwrap_or_else(|| derived_path(&out, ".phi.csv"));
    let cfg = EigenConfig {
        rel_tol: tol,
        max_iter,
        ..defaults
    };
    let spec = find_eigenvalues_with(&env, n, &cfg)?;

    let mut table = Table::create(&out, &["n", "lambda", "zeros_interior"])?;
    for (k, p) in spec.pairs.iter().enumerate() {
        table.row((k + 1, p.lambda, p.zeros_interior))?;
    }
    table.finish()?;
    write_eigenfunctions(&phi_out, &spec)?;

    let config = merge(
        ctx.base_config(),
        json!({
            "env": env_summary(&env, &env_path),
            "n": n, "tol": tol, "max_iter": max_iter,
            "out": out, "phi_out": phi_out,
        }),
    );
    write_sidecar(&out, "eigen", config, json!({"lambda": spec.lambdas()}))?;
    for (k, p) in spec.pairs.iter().enumerate() {
        println!("lambda_{} = {}", k + 1, p.lambda);
    }
    Ok(())
}

fn write_eigenfunctions(path: &Path, spec: &Spectrum) -> CliResult<()> {
    let mut header = vec!["x".to_string()];
    header.extend((1..=spec.len()).map(|k| format!("phi_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::create(path, &header)?;
    let env = spec.env();
    for i in 0..env.len() {
        let mut row = Vec::with_capacity(spec.len() + 1);
        row.push(env.grid()[i]);
        row.extend(spec.pairs.iter().map(|p| p.phi[i]));
        table.row(row)?;
    }
    table.finish()
}

/// Spectrum large enough for the default truncation rule at time `t`, or
/// exactly `n_trunc` modes when given.
pub(crate) fn spectrum_for(env: &Environment, t: f64, n_trunc: Option<usize>) -> CliResult<(Spectrum, usize)> {
    if let Some(n) = n_trunc {
        if n == 0 {
            return Err(Failure::Usage("--n-trunc must be at least 1".into()));
        }
        let spec = find_eigenvalues_with(env, n, &EigenConfig::default())?;
        return Ok((spec, n));
    }
    if !(t > 0.0) {
        return Err(Failure::Usage(format!("time must be positive, got {t}")));
    }
    let mut modes = 16;
    loop {
        let spec = find_eigenvalues_with(env, modes, &EigenConfig::default())?;
        let k = default_truncation(&spec, t);
        if k < modes || modes >= MAX_AUTO_MODES {
            return Ok((spec, k));
        }
        modes = (2 * modes).min(MAX_AUTO_MODES);
    }
}

pub(crate) fn density(ctx: &Context, args: DensityArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let (env_path, env) = load_env(ctx, args.env)?;
    let t: f64 = s.require(args.t, "t")?;
    let n_flag: Option<usize> = s.opt(args.n_trunc, "n-trunc")?;
    let field = s.switch(args.field, "field")?;
    let out: PathBuf = s.require(args.out, "out")?;
    let (spec, n_trunc) = spectrum_for(&env, t, n_flag)?;
    let mut config = json!({
        "env": env_summary(&env, &env_path),
        "t": t, "n_trunc": n_trunc, "field": field, "out": out,
    });

    let results = if field {
        let stride: usize = s.get(args.stride, "stride", (env.segments() / FIELD_POINTS).max(1))?;
        if stride == 0 {
            return Err(Failure::Usage("--stride must be at least 1".into()));
        }
        config["stride"] = json!(stride);
        let dens = density::density_field_strided(&spec, t, n_trunc, stride)?;
        let grid = env.grid();
        let mut table = Table::create(&out, &["x", "y", "p"])?;
        let mut clamped = 0usize;
        for (i, &ni) in dens.nodes().iter().enumerate() {
            for (j, &nj) in dens.nodes().iter().enumerate() {
                let p = dens.get(i, j);
                clamped += usize::from(p < 0.0);
                table.row((grid[ni], grid[nj], p.max(0.0)))?;
            }
        }
        table.finish()?;
        json!({
            "tail_estimate": dens.tail_estimate,
            "detailed_balance_residual": dens.detailed_balance_residual(),
            "clamped_negative": clamped,
        })
    } else {
        let x0: f64 = s.require(args.x0, "x0")?;
        config["x0"] = json!(x0);
        let mut table = Table::create(&out, &["y", "p"])?;
        let mut tail = 0.0f64;
        let mut clamped = 0usize;
        for &y in env.grid() {
            let d = density::transition_density(&spec, t, x0, y, n_trunc)?;
            tail = tail.max(d.tail_estimate);
            clamped += usize::from(d.value < 0.0);
            table.row((y, d.value.max(0.0)))?;
        }
        table.finish()?;
        let survival = density::survival_probability(&spec, t, x0, n_trunc)?;
        let interpolated = density::locate(&env, x0)?.interpolated;
        println!("survival {survival}, n_trunc {n_trunc}, tail estimate {tail:e}");
        json!({
            "t": t, "x0": x0, "n_trunc": n_trunc,
            "tail_estimate": tail,
            "survival": survival,
            "x0_interpolated": interpolated,
            "clamped_negative": clamped,
        })
    };
    write_sidecar(&out, "density", merge(ctx.base_config(), config), results)?;
    Ok(())
}

pub(crate) fn riccati(ctx: &Context, args: RiccatiArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let (env_path, env) = load_env(ctx, args.env)?;
    let lambda: f64 = s.require(args.lambda, "lambda")?;
    let cap = s.get(args.cap, "cap", riccati::DEFAULT_CAP)?;
    let quasi = s.switch(args.quasi, "quasi")?;
    let out: PathBuf = s.require(args.out, "out")?;
    let run = if quasi {
        quasi_riccati_path_with(&env, lambda, cap)?
    } else {
        riccati_path(&env, lambda, cap)?
    };
    let mut table = Table::create(&out, &["x", if quasi { "Q" } else { "P" }])?;
    for &(x, p) in &run.path {
        table.row((x, p))?;
    }
    table.finish()?;
    let config = merge(
        ctx.base_config(),
        json!({"env": env_summary(&env, &env_path), "lambda": lambda, "cap": cap, "quasi": quasi, "out": out}),
    );
    write_sidecar(
        &out,
        "riccati",
        config,
        json!({"explosion_count": run.explosion_count, "explosions": run.explosions}),
    )?;
    println!("{}", run.explosion_count);
    Ok(())
}

pub(crate) fn simulate(ctx: &Context, args: SimulateArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let (env_path, env) = load_env(ctx, args.env)?;
    let x0: f64 = s.require(args.x0, "x0")?;
    let t: f64 = s.require(args.t, "t")?;
    let paths = s.get(args.paths, "paths", 100_000)?;
    let dt = s.get(args.dt, "dt", mc::default_dt(&env))?;
    let seed = s.get(args.seed, "seed", 42)?;
    let bins = s.get(args.bins, "bins", 20)?;
    let spectral = s.switch(args.spectral, "spectral")?;
    let out: PathBuf = s.require(args.out, "out")?;

    let res = simulate_paths(&env, x0, t, paths, dt, seed)?;
    let hist = empirical_density(&res, bins)?;
    let stderr = hist.density_stderr();
    let mut results = json!({
        "survival": res.survival_fraction(),
        "stderr": res.survival_stderr(),
        "killed_count": res.killed_count,
        "total_steps": res.total_steps,
    });
    let model = if spectral {
        let (spec, n_trunc) = spectrum_for(&env, t, None)?;
        let probs = bin_probabilities(&spec, t, x0, n_trunc, &hist.edges)?;
        let chi = chi_square_test(&hist, &probs)?;
        results["spectral_survival"] = json!(density::survival_probability(&spec, t, x0, n_trunc)?);
        results["n_trunc"] = json!(n_trunc);
        results["chi_square"] = json!({"statistic": chi.statistic, "dof": chi.dof, "p_value": chi.p_value});
        Some(probs)
    } else {
        None
    };

    let mut header = vec!["bin_lo", "bin_hi", "count", "density", "stderr"];
    if model.is_some() {
        header.push("spectral");
    }
    let mut table = Table::create(&out, &header)?;
    for k in 0..bins {
        let (lo, hi) = (hist.edges[k], hist.edges[k + 1]);
        let base = (lo, hi, hist.counts[k], hist.density[k], stderr[k]);
        match &model {
            Some(p) => table.row((base.0, base.1, base.2, base.3, base.4, p[k] / (hi - lo)))?,
            None => table.row(base)?,
        }
    }
    table.finish()?;
    let config = merge(
        ctx.base_config(),
        json!({
            "env": env_summary(&env, &env_path),
            "x0": x0, "t": t, "paths": paths, "dt": dt, "seed": seed,
            "bins": bins, "spectral": spectral, "out": out,
        }),
    );
    println!(
        "survival {} +/- {} ({} killed)",
        res.survival_fraction(),
        res.survival_stderr(),
        res.killed_count
    );
    write_sidecar(&out, "simulate", config, results)?;
    Ok(())
}

pub(crate) fn plot_cmd(ctx: &Context, args: PlotArgs) -> CliResult<()> {
    let s = &ctx.settings;
    let input: PathBuf = s.require(args.input, "in")?;
    let out: PathBuf = s.require(args.out, "out")?;
    let kind = match s.require(args.kind, "kind")? {
        PlotKindArg::Env => PlotKind::Env,
        PlotKindArg::Eigenfunctions => PlotKind::Eigenfunctions,
        PlotKindArg::Density => PlotKind::Density,
        PlotKindArg::HistogramOverlay => PlotKind::HistogramOverlay,
    };
    plot(&input, &out, kind)?;
    let config = merge(
        ctx.base_config(),
        json!({"in": input, "out": out, "kind": kind.name()}),
    );
    write_sidecar(&out, "plot", config, json!({}))?;
    Ok(())
}
