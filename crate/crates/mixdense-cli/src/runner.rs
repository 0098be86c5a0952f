//! Pipeline dispatch, proxy metrics, and suite aggregation.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use mixdense::analysis::{
    lp_distance_values, sample_mixture, QuadratureGrid,
};
use mixdense::classes;
use mixdense::constructive::{
    compact_uniform_approximate, l1_approximate, uniform_approximate, ConstructionTrace,
    PipelineOutput,
};
use mixdense::greedy::{
    greedy_convex_fit, log_log_slope, rate_bound_check, target_smoothing, DictionarySpec,
};
use mixdense::mixture::Density;
use mixdense::Error as CoreError;

use crate::config::{Mode, RunConfig, SuiteConfig};
use crate::report::{
    json_path_for, opt_cell, write_text, ApproxReport, RunOutcome, SuiteOutcome, CLASSES_HEADER,
    CONSTRUCTION_HEADER, GREEDY_HEADER, SUITE_HEADER,
};

/// Wall-clock budget per run; entries past it record failure rows instead
/// of executing.
pub const RUN_WALL_BUDGET_MS: u128 = 120_000;

/// Node threshold used by the pointwise-exceedance proxy metric.
pub const PROXY_THRESHOLD: f64 = 0.05;

/// Number of seeded pseudo-random probe points for the pointwise proxy.
pub const PROXY_POINTS: usize = 100;

/// Errors that abort a run before any row is produced (exit 2).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Executes one run config: runs the pipeline per schedule entry, writes
/// the CSV and JSON summary, and returns the outcome.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    execute(None, config)
}

/// Executes every run in a suite file, writes per-run outputs plus a
/// combined summary CSV/JSON next to the suite file.
pub fn run_suite(path: &Path) -> Result<SuiteOutcome, CliError> {
    let suite = SuiteConfig::from_file(path)?;
    let mut runs = Vec::with_capacity(suite.run.len());
    for named in &suite.run {
        runs.push(execute(Some(named.name.clone()), &named.config)?);
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("suite")
        .to_string();
    let dir = path.parent().unwrap_or(Path::new("."));
    let summary_csv = dir.join(format!("{stem}-summary.csv"));
    let summary_json = dir.join(format!("{stem}-summary.json"));

    let mut csv = String::from(SUITE_HEADER);
    csv.push('\n');
    for r in &runs {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name.as_deref().unwrap_or(""),
            r.report.mode.as_str(),
            r.report.csv_rows.len(),
            r.report.passes,
            r.report.failures,
            r.wall_ms
        ));
    }
    write_text(&summary_csv, &csv)?;
    let outcome = SuiteOutcome {
        summary_csv: summary_csv.clone(),
        summary_json: summary_json.clone(),
        runs,
    };
    let summary = json!({
        "suite": stem,
        "runs": outcome.runs.iter().map(|r| json!({
            "name": r.name,
            "mode": r.report.mode.as_str(),
            "passes": r.report.passes,
            "failures": r.report.failures,
            "csv": r.csv_path.display().to_string(),
        })).collect::<Vec<_>>(),
        "passes": outcome.passes(),
        "failures": outcome.failures(),
    });
    write_text(&summary_json, &serde_json::to_string_pretty(&summary).expect("json"))?;
    Ok(outcome)
}

fn execute(name: Option<String>, config: &RunConfig) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let report = match config.mode {
        Mode::Uniform | Mode::Compact | Mode::L1 => construction_report(config, &started)?,
        Mode::Lp => greedy_report(config, &started)?,
        Mode::Classes => classes_report(config)?,
    };
    let wall_ms = started.elapsed().as_millis();
    let csv_path = config.output.clone();
    let json_path = json_path_for(&csv_path);
    write_text(&csv_path, &report.csv_text())?;
    write_text(
        &json_path,
        &serde_json::to_string_pretty(&report.summary).expect("json"),
    )?;
    Ok(RunOutcome {
        name,
        report,
        wall_ms,
        csv_path,
        json_path,
    })
}

fn construction_row(
    target: &str,
    kernel: &str,
    mode: Mode,
    trace: &ConstructionTrace,
    wall_ms: u128,
    pass: bool,
) -> String {
    let (l1, l2, linf, kl) = match &trace.errors {
        Some(e) => (Some(e.l1), Some(e.l2), Some(e.linf), e.kl),
        None => (None, None, None, None),
    };
    format!(
        "{target},{kernel},{mode},{eps},{r},{k},{delta},{m},{rem},{l1},{l2},{linf},{kl},{wall_ms},{pass}",
        mode = mode.as_str(),
        eps = trace.epsilon,
        r = trace.truncation_radius,
        k = trace.dilation,
        delta = trace.cell_diameter,
        m = trace.component_count,
        rem = trace.remainder_weight,
        l1 = opt_cell(l1),
        l2 = opt_cell(l2),
        linf = opt_cell(linf),
        kl = opt_cell(kl),
    )
}

/// Max pointwise error at seeded probe points and the fraction of grid
/// nodes where the error reaches [`PROXY_THRESHOLD`].
fn proxy_metrics(
    f: &Density,
    output: &PipelineOutput,
    grid: &QuadratureGrid,
    seed: u64,
) -> Result<(f64, f64), CoreError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.dim();
    let eval = output.mixture.evaluator();
    let mut max_err: f64 = 0.0;
    let mut x = vec![0.0; n];
    for _ in 0..PROXY_POINTS {
        for j in 0..n {
            x[j] = rng.gen_range(grid.bounds().lower[j]..grid.bounds().upper[j]);
        }
        max_err = max_err.max((f.eval(&x) - eval.value(&x)).abs());
    }
    let f_vals = grid.sample_density(f)?;
    let mix_vals = sample_mixture(&output.mixture, grid)?;
    let exceed = f_vals
        .iter()
        .zip(&mix_vals)
        .filter(|(a, b)| (**a - **b).abs() >= PROXY_THRESHOLD)
        .count();
    Ok((max_err, exceed as f64 / f_vals.len() as f64))
}

fn construction_report(config: &RunConfig, started: &Instant) -> Result<ApproxReport, CliError> {
    let target = config.resolve_target()?;
    let kernel = config.resolve_kernel()?;
    let grid = config.grid.build()?;
    let k_box = config.k_box.as_ref().map(|b| b.build()).transpose()?;

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut passes = 0usize;
    let mut failures = 0usize;

    for &epsilon in &config.epsilon_schedule {
        let entry_start = Instant::now();
        if started.elapsed().as_millis() > RUN_WALL_BUDGET_MS {
            let trace = ConstructionTrace {
                epsilon,
                truncation_radius: 0.0,
                dilation: 0.0,
                cell_diameter: 0.0,
                component_count: 0,
                remainder_weight: 0.0,
                errors: None,
                gate_error: f64::NAN,
            };
            rows.push(construction_row(
                target.name(),
                kernel.name(),
                config.mode,
                &trace,
                0,
                false,
            ));
            entries.push(json!({"epsilon": epsilon, "error": "wall budget exceeded"}));
            failures += 1;
            continue;
        }
        let result = match config.mode {
            Mode::Uniform => uniform_approximate(&target, &kernel, epsilon, &grid),
            Mode::Compact => compact_uniform_approximate(
                &target,
                &kernel,
                k_box.as_ref().expect("validated"),
                epsilon,
                &grid,
            ),
            Mode::L1 => l1_approximate(&target, &kernel, epsilon, config.gamma_or_default(), &grid),
            _ => unreachable!("construction_report handles construction modes only"),
        };
        let entry_ms = entry_start.elapsed().as_millis();
        match result {
            Ok(output) => {
                let violations = output.mixture.validate();
                let pass = output.trace.gate_error <= epsilon && violations.is_empty();
                let mut entry = json!({
                    "epsilon": epsilon,
                    "trace": serde_json::to_value(&output.trace).expect("trace json"),
                    "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    "wall_ms": entry_ms as u64,
                });
                if matches!(config.mode, Mode::Uniform) {
                    let (max_pointwise, exceed_fraction) =
                        proxy_metrics(&target, &output, &grid, config.seed)
                            .map_err(|e| CliError::Usage(e.to_string()))?;
                    entry["pointwise_proxy"] = json!({
                        "seed": config.seed,
                        "points": PROXY_POINTS,
                        "max_error": max_pointwise,
                        "exceed_threshold": PROXY_THRESHOLD,
                        "exceed_fraction": exceed_fraction,
                    });
                }
                if matches!(config.mode, Mode::L1) {
                    // kernel tail-leak bound at the chosen dilation level
                    let vp = kernel.v_params().expect("validated");
                    let a_n = sphere_area(grid.dim());
                    let leak = vp.beta * a_n
                        * output
                            .trace
                            .dilation
                            .powf(vp.theta * (config.gamma_or_default() - 1.0))
                        / vp.theta;
                    entry["tail_leak_bound"] = json!(leak);
                }
                rows.push(construction_row(
                    target.name(),
                    kernel.name(),
                    config.mode,
                    &output.trace,
                    entry_ms,
                    pass,
                ));
                entries.push(entry);
                if pass {
                    passes += 1;
                } else {
                    failures += 1;
                }
            }
            Err(CoreError::NonConvergence { context, trace }) => {
                let trace = trace.map(|b| *b).unwrap_or(ConstructionTrace {
                    epsilon,
                    truncation_radius: 0.0,
                    dilation: 0.0,
                    cell_diameter: 0.0,
                    component_count: 0,
                    remainder_weight: 0.0,
                    errors: None,
                    gate_error: f64::NAN,
                });
                rows.push(construction_row(
                    target.name(),
                    kernel.name(),
                    config.mode,
                    &trace,
                    entry_ms,
                    false,
                ));
                entries.push(json!({"epsilon": epsilon, "error": context}));
                failures += 1;
            }
            Err(other) => return Err(CliError::Usage(other.to_string())),
        }
    }

    let summary = json!({
        "mode": config.mode.as_str(),
        "target": target.name(),
        "kernel": kernel.name(),
        "grid": grid.descriptor(),
        "seed": config.seed,
        "entries": entries,
        "passes": passes,
        "failures": failures,
    });
    Ok(ApproxReport {
        mode: config.mode,
        csv_header: CONSTRUCTION_HEADER.to_string(),
        csv_rows: rows,
        summary,
        passes,
        failures,
    })
}

fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        n => {
            // 2 π^{n/2} / Γ(n/2), via the half-integer recurrence
            let mut gamma = if n % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
            let mut x = if n % 2 == 0 { 1.0 } else { 0.5 };
            while x < n as f64 / 2.0 {
                gamma *= x;
                x += 1.0;
            }
            2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma
        }
    }
}

fn greedy_entry(
    config: &RunConfig,
    target: &Density,
    kernel: &Density,
    grid: &QuadratureGrid,
    p: f64,
    m_max: usize,
    epsilon: Option<f64>,
) -> Result<(Vec<String>, Value, bool), CliError> {
    let to_usage = |e: CoreError| CliError::Usage(e.to_string());
    let dict_cfg = config.dict.as_ref().expect("validated");

    // Smooth the target at the run's dilation level; an epsilon entry
    // searches for the level, an m entry uses the configured one.
    let (k, smoothed_values, smoothing_error) = match epsilon {
        Some(eps) => {
            let s = target_smoothing(target, kernel, eps, p, grid).map_err(to_usage)?;
            (s.dilation, s.values, s.smoothing_error)
        }
        None => {
            let conv = mixdense::analysis::convolve_dilated_on_grid(kernel, dict_cfg.k, target, grid)
                .map_err(to_usage)?;
            let f_vals = grid.sample_density(target).map_err(to_usage)?;
            let err = lp_distance_values(&f_vals, &conv, p, grid).map_err(to_usage)?;
            (dict_cfg.k, conv, err)
        }
    };
    let dict = DictionarySpec::grid_locations(
        kernel.clone(),
        k,
        &dict_cfg.lower,
        &dict_cfg.upper,
        dict_cfg.count,
    )
    .map_err(to_usage)?;
    let smoothed = SmoothedValues {
        grid: grid.clone(),
        values: smoothed_values,
    };
    let fit = greedy_convex_fit(&smoothed.as_density(), &dict, p, m_max, grid).map_err(to_usage)?;
    let rate = rate_bound_check(&fit.trace, p);
    let slope = log_log_slope(&fit.trace, 4, m_max);
    let final_error = fit.trace.steps.last().map(|s| s.error).unwrap_or(f64::NAN);
    let violations = fit.mixture.validate();

    let mut pass = rate.holds && violations.is_empty();
    if let Some(eps) = epsilon {
        pass = pass && smoothing_error + final_error <= eps;
    }
    let entry = json!({
        "epsilon": epsilon,
        "m_max": m_max,
        "p": p,
        "k": k,
        "smoothing_error": smoothing_error,
        "final_greedy_error": final_error,
        "total_error_bound": smoothing_error + final_error,
        "k_bound": fit.trace.k_bound,
        "rate_constant": fit.trace.rate_constant,
        "alpha": fit.trace.alpha,
        "rate_holds": rate.holds,
        "worst_ratio": rate.worst_ratio,
        "log_log_slope": slope,
        "steps": fit.trace.steps.len(),
        "components": fit.mixture.len(),
        "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    });
    Ok((fit.trace.csv_rows(), entry, pass))
}

struct SmoothedValues {
    grid: QuadratureGrid,
    values: Vec<f64>,
}

impl SmoothedValues {
    /// Density view exact at grid nodes (nearest node elsewhere).
    fn as_density(&self) -> Density {
        let grid = self.grid.clone();
        let values = self.values.clone();
        Density::new("smoothed-target", grid.dim(), move |x: &[f64]| {
            let ppa = grid.points_per_axis();
            let mut idx = 0usize;
            for j in 0..grid.dim() {
                let rel = (x[j] - grid.bounds().lower[j]) / grid.spacing()[j] - 0.5;
                let i = rel.round().clamp(0.0, (ppa - 1) as f64) as usize;
                idx = idx * ppa + i;
            }
            values[idx]
        })
    }
}

fn greedy_report(config: &RunConfig, started: &Instant) -> Result<ApproxReport, CliError> {
    let target = config.resolve_target()?;
    let kernel = config.resolve_kernel()?;
    let grid = config.grid.build()?;
    let p = config.p.expect("validated");

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut passes = 0usize;
    let mut failures = 0usize;

    let schedule: Vec<(Option<f64>, usize)> = if config.m_schedule.is_empty() {
        config.epsilon_schedule.iter().map(|&e| (Some(e), 64)).collect()
    } else {
        config.m_schedule.iter().map(|&m| (None, m)).collect()
    };
    for (epsilon, m_max) in schedule {
        if started.elapsed().as_millis() > RUN_WALL_BUDGET_MS {
            entries.push(json!({"epsilon": epsilon, "m_max": m_max, "error": "wall budget exceeded"}));
            failures += 1;
            continue;
        }
        let (entry_rows, entry, pass) =
            greedy_entry(config, &target, &kernel, &grid, p, m_max, epsilon)?;
        rows.extend(entry_rows);
        entries.push(entry);
        if pass {
            passes += 1;
        } else {
            failures += 1;
        }
    }
    let summary = json!({
        "mode": "lp",
        "target": target.name(),
        "kernel": kernel.name(),
        "grid": grid.descriptor(),
        "p": p,
        "entries": entries,
        "passes": passes,
        "failures": failures,
    });
    Ok(ApproxReport {
        mode: Mode::Lp,
        csv_header: GREEDY_HEADER.to_string(),
        csv_rows: rows,
        summary,
        passes,
        failures,
    })
}

fn classes_report(config: &RunConfig) -> Result<ApproxReport, CliError> {
    let mut rows = Vec::new();
    let mut passes = 0usize;
    let mut failures = 0usize;
    let mut push = |metric: &str, value: f64, reference: f64, pass: bool| {
        rows.push(format!("{metric},{value},{reference},{pass}"));
        if pass {
            passes += 1;
        } else {
            failures += 1;
        }
    };

    // Exact bump masses against the closed form, first ten bumps.
    let mass_exact = (1..=10u64).all(|i| {
        let i_f = i as f64;
        classes::counterexample_bump_mass(i) == 1.0 / (2.0 * i_f * i_f + i_f)
    });
    push("bump_masses_exact_i_le_10", mass_exact as u64 as f64, 1.0, mass_exact);

    // Series total against the telescoped closed form.
    let series = classes::counterexample_l1(1e-5).map_err(|e| CliError::Usage(e.to_string()))?;
    let series_ref = 2.0 * (1.0 - std::f64::consts::LN_2);
    let series_pass = (series.partial_sum - series_ref).abs() < 1e-4;
    push("l1_partial_sum", series.partial_sum, series_ref, series_pass);

    // Peak values, first hundred bumps.
    let peaks_exact = (1..=100u64).all(|i| {
        let (x, peak) = classes::counterexample_peak(i);
        classes::counterexample_eval(x) == peak
    });
    push("peaks_exact_i_le_100", peaks_exact as u64 as f64, 1.0, peaks_exact);

    // Divergence witness: harmonic-sum growth against log.
    let n = 100_000u64;
    let ratio = classes::counterexample_wiener_sum(n) / (n as f64).ln();
    let wiener_pass = (ratio - 1.0).abs() < 0.05;
    push("wiener_ratio_1e5", ratio, 1.0, wiener_pass);

    // Tail-domination sweep: every combo must find a violating peak.
    let betas = [0.5, 1.0, 2.0, 4.0, 10.0];
    let thetas = [0.25, 0.5, 1.0, 2.0];
    let g = classes::counterexample_density();
    let mut rejected = 0u32;
    let mut v_rows = Vec::new();
    for &beta in &betas {
        for &theta in &thetas {
            let out = classes::check_class_v(&g, beta, theta, &[200_000.0])
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if !out.holds_on_samples {
                rejected += 1;
            }
            v_rows.push(out);
        }
    }
    push("v_reject_count", rejected as f64, 20.0, rejected == 20);

    // Continuity residuals at the half-integer knots.
    let mut max_residual: f64 = 0.0;
    let mut knot = 0.0;
    while knot <= 20.0 {
        let left = classes::counterexample_eval(knot - 1e-7);
        let right = classes::counterexample_eval(knot + 1e-7);
        max_residual = max_residual.max((left - right).abs());
        knot += 0.5;
    }
    push("continuity_max_residual", max_residual, 1e-9, max_residual < 1e-9);

    // Peaks table alongside the metric rows.
    let peaks_path = {
        let stem = config
            .output
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("classes");
        config.output.with_file_name(format!("{stem}-peaks.csv"))
    };
    let mut peaks_csv = String::from("i,x,peak\n");
    for i in 1..=100u64 {
        let (x, peak) = classes::counterexample_peak(i);
        peaks_csv.push_str(&format!("{i},{x},{peak}\n"));
    }
    write_text(&peaks_path, &peaks_csv)?;

    let report = classes::ClassReport {
        density: "counterexample".to_string(),
        c0_tail: classes::check_c0_tail(&g, &[2.0, 4.0, 8.0, 16.0]),
        v_check: v_rows,
        wiener_partial_sums: [10u64, 100, 1000, 10_000, 100_000]
            .iter()
            .map(|&n| classes::counterexample_wiener_sum(n))
            .collect(),
    };
    let summary = json!({
        "mode": "classes",
        "report": serde_json::to_value(&report).expect("report json"),
        "peaks_csv": peaks_path.display().to_string(),
        "passes": passes,
        "failures": failures,
    });
    Ok(ApproxReport {
        mode: Mode::Classes,
        csv_header: CLASSES_HEADER.to_string(),
        csv_rows: rows,
        summary,
        passes,
        failures,
    })
}

/// Catalog listing for `mixdense catalog`.
pub fn catalog_listing() -> String {
    let mut out = String::from("name,dim,is_pdf,in_c0,in_cc,in_cb,support_radius,sup_bound,v_params\n");
    for d in classes::catalog() {
        let f = d.flags();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            d.name(),
            d.dim(),
            f.is_pdf,
            f.in_c0,
            f.in_cc,
            f.in_cb,
            opt_cell(d.support_radius()),
            opt_cell(d.sup_bound()),
            d.v_params()
                .map(|v| format!("beta={};theta={}", v.beta, v.theta))
                .unwrap_or_default(),
        ));
    }
    out
}
