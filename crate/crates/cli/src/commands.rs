use std::fs;
use std::path::{Path, PathBuf};

use qmkz::analysis::{
    check_c1_bounds, check_uniform_bound, dimension_experiment, lp_error_check, lp_table_csv, monotone_sequence_check,
    ConvergenceReport, DerivativeBound, UniformBound,
};
use qmkz::constraints::{dominance_bounds, one_sided_bounds, positivity_bounds, validate_alpha};
use qmkz::muntz::{density_csv, density_experiment, DensityRow, LambdaSequence, Schedule};
use qmkz::{lp_contraction_factor, solve_fixed_point, FractalSpec, GridFunction, ScalingVector, Solution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BoundConfig, ConstrainMode, ExperimentConfig, LambdaConfig};
use crate::plot::Plot;
use crate::CliError;

/// Slack for the sign checks on solved functions.
const SIGN_SLACK: f64 = 1e-6;

pub struct Ctx {
    pub config: ExperimentConfig,
    /// Directory relative paths inside the config resolve against.
    pub config_dir: PathBuf,
    pub out: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn plot(&self, stem: &str, plot: &Plot) -> Result<(), CliError> {
        self.write(&format!("{stem}.csv"), &plot.to_csv())?;
        self.write(&format!("{stem}.svg"), &plot.to_svg())
    }

    fn spec(&self) -> Result<FractalSpec, CliError> {
        let germ = self.config.germ.to_germ(&self.config_dir)?;
        self.config.spec_for(germ)
    }

    fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }
}

fn solve(spec: &FractalSpec, step: &str) -> Result<Solution, CliError> {
    solve_fixed_point(spec).map_err(|e| CliError::from_core(step, e))
}

fn nodes(g: &GridFunction) -> Vec<f64> {
    g.nodes().collect()
}

pub fn cmd_solve(ctx: &Ctx) -> Result<(), CliError> {
    let spec = ctx.spec()?;
    ctx.prepare()?;
    let sol = solve(&spec, "solve")?;
    ctx.write("germ.csv", &sol.germ.to_csv())?;
    ctx.write("base.csv", &sol.base.to_csv())?;
    let plot = Plot::new(&format!("fractal of {}", spec.germ.name()), "x", nodes(&sol.values))
        .with("value", sol.values.values().to_vec());
    ctx.plot("fractal", &plot)?;
    println!(
        "solve: {} iterations, residual {:e}, sup |f^a - f| = {}",
        sol.iterations,
        sol.residual,
        sol.sup_error()
    );
    Ok(())
}

pub fn cmd_constrain(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let mode = cfg.constrain.mode;
    let spec = ctx.spec()?;
    let f = spec.germ_grid().map_err(|e| CliError::config("germ", e))?;
    let g_spec = match (&cfg.g, mode) {
        (_, ConstrainMode::Positivity) => None,
        (Some(g), _) => Some(spec.with_germ(g.to_germ(&ctx.config_dir)?)),
        (None, _) => return Err(CliError::Config("g: required for the one_sided and dominance modes".into())),
    };
    let g = match &g_spec {
        Some(s) => Some(s.germ_grid().map_err(|e| CliError::config("g", e))?),
        None => None,
    };
    let bounds = match (mode, &g) {
        (ConstrainMode::Positivity, _) => positivity_bounds(&f, &spec, None),
        (ConstrainMode::OneSided, Some(g)) => one_sided_bounds(&f, g, &spec),
        (ConstrainMode::Dominance, Some(g)) => dominance_bounds(&f, g, &spec),
        _ => unreachable!("g resolved above"),
    }
    .map_err(|e| CliError::from_core("bounds", e))?;
    let report = validate_alpha(&spec.alpha, &bounds, spec.grid_size).map_err(|e| CliError::from_core("validate", e))?;
    ctx.prepare()?;
    ctx.write("bounds.csv", &bounds.to_csv())?;
    ctx.write("validation.csv", &report.to_csv())?;

    // The quantity whose sign the constraint controls.
    let gap = |s: &FractalSpec| -> Result<(GridFunction, Option<GridFunction>), CliError> {
        let fa = solve(s, "solve f")?.values;
        let ga = match (mode, &g_spec) {
            (ConstrainMode::Dominance, Some(gs)) => Some(solve(&gs.with_alpha(s.alpha.clone()), "solve g")?.values),
            _ => None,
        };
        Ok((fa, ga))
    };
    let margin = |fa: &GridFunction, ga: &Option<GridFunction>| -> Result<f64, CliError> {
        let other = ga.as_ref().or(g.as_ref());
        Ok(match other {
            Some(o) => fa.sub(o).map_err(|e| CliError::from_core("difference", e))?.min(),
            None => fa.min(),
        })
    };

    let (fa, ga) = gap(&spec)?;
    let min = margin(&fa, &ga)?;
    let mut plot = Plot::new(&format!("{mode:?} constraint"), "x", nodes(&f)).with("f", f.values().to_vec());
    if let Some(g) = &g {
        plot = plot.with("g", g.values().to_vec());
    }
    plot = plot.with("f_alpha", fa.values().to_vec());
    if let Some(ga) = &ga {
        plot = plot.with("g_alpha", ga.values().to_vec());
    }
    ctx.plot("solution", &plot)?;
    println!(
        "constrain: admissible {}, failed intervals {:?}, constrained minimum {min}",
        report.admissible(),
        report.failed_intervals()
    );

    let mut random_fail = Vec::new();
    if cfg.constrain.random_samples > 0 {
        let inner = bounds.shrink(cfg.constrain.margin);
        if !inner.all_feasible() {
            return Err(CliError::Config(format!(
                "constrain.margin: brackets shrunk by {} are empty",
                cfg.constrain.margin
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let draws: Vec<Vec<f64>> = (0..cfg.constrain.random_samples)
            .map(|_| (0..inner.len()).map(|i| rng.random_range(inner.lo[i]..=inner.hi[i])).collect())
            .collect();
        let mut header: Vec<String> = vec!["sample".into()];
        header.extend((1..=inner.len()).map(|i| format!("alpha_{i}")));
        header.push("minimum".into());
        let mut out = header.join(",") + "\n";
        for (k, c) in draws.iter().enumerate() {
            let alpha = ScalingVector::constants(c, spec.interval()).map_err(|e| CliError::config("alpha", e))?;
            let (fa, ga) = gap(&spec.with_alpha(alpha))?;
            let m = margin(&fa, &ga)?;
            let cols: Vec<String> = c.iter().map(f64::to_string).collect();
            out.push_str(&format!("{k},{},{m}\n", cols.join(",")));
            if m < -SIGN_SLACK {
                random_fail.push(k);
            }
        }
        ctx.write("random.csv", &out)?;
    }

    if !report.admissible() {
        return Err(CliError::Validation(format!(
            "alpha fails the computed brackets on intervals {:?} (worst violation {})",
            report.failed_intervals(),
            report.worst_violation()
        )));
    }
    if min < -SIGN_SLACK || !random_fail.is_empty() {
        return Err(CliError::Bound(format!(
            "admissible alpha violates the ordering: minimum {min}, failing random samples {random_fail:?}"
        )));
    }
    Ok(())
}

fn convergence_plot(rep: &ConvergenceReport, title: &str) -> Plot {
    let x = rep.rows.iter().map(|r| r.n as f64).collect();
    Plot::new(title, "n", x)
        .with("sup_error", rep.rows.iter().map(|r| r.sup_error).collect())
        .with("bound", rep.rows.iter().map(|r| r.bound).collect())
}

pub fn cmd_converge(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let spec = ctx.spec()?;
    let bound = cfg.converge.bound;
    if bound == BoundConfig::Monotone {
        let ns = cfg.n_values(1)?;
        let rep = monotone_sequence_check(&spec, &ns).map_err(|e| CliError::from_core("monotone", e))?;
        ctx.prepare()?;
        ctx.write("monotone.csv", &rep.to_csv())?;
        let x = rep.steps.iter().map(|s| s.n as f64).collect();
        let plot = Plot::new("f_(n+1) - f_n", "n", x)
            .with("max_increase", rep.steps.iter().map(|s| s.max_increase).collect())
            .with("max_decrease", rep.steps.iter().map(|s| s.max_decrease).collect());
        ctx.plot("monotone_plot", &plot)?;
        println!(
            "converge: non-increasing {}, non-decreasing {}, envelope below germ {}",
            rep.non_increasing(),
            rep.non_decreasing(),
            rep.envelope_below_germ()
        );
        if !rep.non_increasing() || !rep.envelope_below_germ() {
            return Err(CliError::Bound(format!(
                "monotone sequence: non-increasing {}, envelope below germ {}",
                rep.non_increasing(),
                rep.envelope_below_germ()
            )));
        }
        return Ok(());
    }
    let rep = match bound {
        BoundConfig::Quantum => check_uniform_bound(&spec, UniformBound::Quantum(cfg.q_rule()?), &cfg.n_values(3)?),
        BoundConfig::Classical => check_uniform_bound(&spec, UniformBound::Classical, &cfg.n_values(1)?),
        BoundConfig::C1 => check_c1_bounds(&spec, DerivativeBound::Modulus, &cfg.n_values(1)?),
        BoundConfig::Holder { beta, a } => check_c1_bounds(&spec, DerivativeBound::Holder { beta, a }, &cfg.n_values(1)?),
        BoundConfig::Monotone => unreachable!("handled above"),
    }
    .map_err(|e| CliError::from_core("converge", e))?;
    ctx.prepare()?;
    ctx.write("convergence.csv", &rep.to_csv())?;
    ctx.plot("convergence_plot", &convergence_plot(&rep, &format!("{bound:?} bound")))?;
    println!(
        "converge: {} rows, failures {:?}, decreasing trend {}, rate exponent {:.3}",
        rep.rows.len(),
        rep.failures(),
        rep.decreasing_trend(),
        rep.rate_exponent()
    );
    if !rep.all_satisfied() {
        return Err(CliError::Bound(format!("bound fails at n = {:?}", rep.failures())));
    }
    Ok(())
}

pub fn cmd_dimension(ctx: &Ctx) -> Result<(), CliError> {
    let d = ctx.config.dimension;
    let spec = ctx.spec()?;
    let est = dimension_experiment(&spec, d.beta, d.min_points).map_err(|e| CliError::from_core("dimension", e))?;
    ctx.prepare()?;
    ctx.write("dimension.csv", &est.to_csv())?;
    let x = est.scales.iter().map(|e| -e.log2()).collect();
    let plot = Plot::new(&format!("box counting, slope {:.4}", est.slope), "log2(1/epsilon)", x)
        .with("log2(count)", est.counts.iter().map(|&c| (c as f64).log2()).collect());
    ctx.plot("dimension_plot", &plot)?;
    println!("dimension: slope {:.4}, theorem bounds {:?}", est.slope, est.theorem_bounds);
    if est.within_bounds(d.slack) == Some(false) {
        return Err(CliError::Bound(format!(
            "slope {} outside theorem bounds {:?} widened by {}",
            est.slope, est.theorem_bounds, d.slack
        )));
    }
    Ok(())
}

fn lambda_label(l: &LambdaConfig) -> String {
    match l {
        LambdaConfig::Harmonic => "harmonic".into(),
        LambdaConfig::Geometric { ratio } => format!("geometric_{ratio}"),
    }
}

pub fn cmd_muntz(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let mz = &cfg.muntz;
    if mz.lambdas.is_empty() || mz.m_max == 0 {
        return Err(CliError::Config("muntz: need at least one lambda sequence and m_max >= 1".into()));
    }
    let template = ctx.spec()?;
    let target = template.germ_grid().map_err(|e| CliError::config("germ", e))?;
    let schedule = Schedule {
        n_per_m: mz.n_per_m,
        q_rule: cfg.q_rule()?,
    };
    let ms: Vec<usize> = (1..=mz.m_max).collect();
    let mut runs: Vec<(String, Vec<DensityRow>)> = Vec::new();
    for l in &mz.lambdas {
        let seq = match *l {
            LambdaConfig::Harmonic => LambdaSequence::harmonic(mz.m_max),
            LambdaConfig::Geometric { ratio } => {
                LambdaSequence::geometric(ratio, mz.m_max).map_err(|e| CliError::config("muntz.lambdas", e))?
            }
        };
        let rows = density_experiment(&target, &seq, &ms, schedule, &template, cfg.p)
            .map_err(|e| CliError::from_core("muntz", e))?;
        runs.push((lambda_label(l), rows));
    }
    ctx.prepare()?;
    let mut plot = Plot::new("Muntz residual", "m", ms.iter().map(|&m| m as f64).collect());
    for (label, rows) in &runs {
        ctx.write(&format!("density_{label}.csv"), &density_csv(rows))?;
        plot = plot.with(label, rows.iter().map(|r| r.residual_sup).collect());
        let last = rows.last().map_or(f64::NAN, |r| r.residual_sup);
        println!("muntz: {label} ({}), residual at m = {} is {last:e}", rows[0].class, mz.m_max);
    }
    ctx.plot("muntz_plot", &plot)
}

pub fn cmd_lp(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let spec = ctx.spec()?;
    let lambda = lp_contraction_factor(&spec, cfg.p).map_err(|e| CliError::from_core("lp", e))?;
    let rows = lp_error_check(&spec, cfg.p, &cfg.n_values(1)?).map_err(|e| CliError::from_core("lp", e))?;
    ctx.prepare()?;
    ctx.write("lp.csv", &lp_table_csv(&rows))?;
    let plot = Plot::new(&format!("L^{} error", cfg.p), "n", rows.iter().map(|r| r.n as f64).collect())
        .with("lp_error", rows.iter().map(|r| r.lp_error).collect())
        .with("rhs_bound", rows.iter().map(|r| r.rhs_bound).collect());
    ctx.plot("lp_plot", &plot)?;
    let failures: Vec<u32> = rows.iter().filter(|r| !r.satisfied).map(|r| r.n).collect();
    println!("lp: Lambda = {lambda}, {} rows, failures {failures:?}", rows.len());
    if !failures.is_empty() {
        return Err(CliError::Bound(format!("L^p bound fails at n = {failures:?}")));
    }
    Ok(())
}

pub fn resolve_out(cli_out: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
