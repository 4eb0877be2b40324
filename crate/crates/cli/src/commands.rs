use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rdprune_core::io::{
    grid_from_curves, load_calib, load_model, output_path, read_curves, read_plan, save_model,
    write_additivity, write_curves, write_dp_trace, write_oracle_audit, write_plan, OracleAuditRow,
};
use rdprune_core::oracle::{approximation_error_sweep, mean_residuals, pearson, SWEEP_SPARSITIES};
use rdprune_core::{
    apply_plan, brute_force_allocate, filter_outliers, iterative_schedule, model_curves, solve,
    white_noise, Aggregation, AllocationPlan, CalibrationSet, CurveGenerator, DistortionMeter,
    ModelGraph, PlanOptions, RDCurve, SparsityGrid,
};

use crate::{Cli, Command, Common};

const DEFAULT_NOISE_SAMPLES: usize = 256;
const VERIFY_STEPS: usize = 10;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let c = &cli.common;
    if let Some(r) = c.ratio {
        if !(0.0..=1.0).contains(&r) {
            bail!(rdprune_core::Error::InvalidArgument(format!(
                "--ratio {r} outside [0, 1]"
            )));
        }
    }
    match &cli.command {
        Command::Curves => curves(c),
        Command::Allocate { curves, trace } => allocate(c, curves.as_deref(), *trace),
        Command::Prune { plan } => prune(c, plan),
        Command::Eval { pruned } => eval(c, pruned.as_deref()),
        Command::Verify => verify(c),
        Command::Iterate { rounds, fraction } => iterate(c, *rounds, *fraction),
    }
}

impl Common {
    fn options(&self, default_steps: usize) -> PlanOptions {
        PlanOptions {
            steps: self.grid.unwrap_or(default_steps),
            mode: self.mode.into(),
            filter: !self.no_filter,
            solver: self.solver.into(),
            unit: self.unit,
            bins: self.bins,
            threads: self.threads,
        }
    }

    fn load_model(&self) -> Result<ModelGraph> {
        let path = self
            .model
            .as_ref()
            .ok_or_else(|| anyhow!("--model is required"))?;
        Ok(load_model(path)?)
    }

    fn ratio(&self) -> Result<f64> {
        self.ratio.ok_or_else(|| anyhow!("--ratio is required"))
    }

    fn calibration(&self, model: &ModelGraph) -> Result<CalibrationSet> {
        if let Some(path) = &self.calib {
            return Ok(load_calib(path)?);
        }
        let (shape, count, seed) = match &self.white_noise {
            Some(spec) => parse_noise(spec)?,
            None => {
                log::warn!(
                    "no calibration source given; using {DEFAULT_NOISE_SAMPLES} white-noise samples with seed {}",
                    self.seed
                );
                (
                    model.input_shape().to_vec(),
                    DEFAULT_NOISE_SAMPLES,
                    self.seed,
                )
            }
        };
        Ok(white_noise(&shape, count, seed)?)
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        Ok(output_path(&self.out, name)?)
    }
}

/// `SHAPE,COUNT,SEED` with `SHAPE` written as `AxBxC`.
pub fn parse_noise(spec: &str) -> Result<(Vec<usize>, usize, u64)> {
    let bad = || anyhow!("--white-noise expects SHAPE,COUNT,SEED (e.g. 1x8x8,256,7), got `{spec}`");
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [shape, count, seed] = parts[..] else {
        return Err(bad());
    };
    let shape = shape
        .split('x')
        .map(|d| d.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    Ok((
        shape,
        count.parse().map_err(|_| bad())?,
        seed.parse().map_err(|_| bad())?,
    ))
}

fn curves(c: &Common) -> Result<ExitCode> {
    let model = c.load_model()?;
    let calib = c.calibration(&model)?;
    let opts = c.options(rdprune_core::curve::DEFAULT_STEPS);
    let start = Instant::now();
    let grid = SparsityGrid::over_remaining(&model, opts.steps)?;
    let generator = CurveGenerator::new(&model, &calib, opts.mode)?;
    let mut curves = generator.all(&grid, opts.threads)?;
    if opts.filter {
        curves = curves.iter().map(filter_outliers).collect();
    }
    let path = c.path("curves.csv")?;
    write_curves(&curves, &path)?;
    let invalid: usize = curves.iter().map(RDCurve::invalid_count).sum();
    eprintln!(
        "{} layers, S={}, mode={}, {} samples, {} points filtered, {} forward passes, {:.2}s",
        curves.len(),
        opts.steps,
        opts.mode.as_str(),
        calib.len(),
        invalid,
        generator.forward_pairs(),
        start.elapsed().as_secs_f64()
    );
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn allocate(c: &Common, curves_path: Option<&Path>, trace: bool) -> Result<ExitCode> {
    let ratio = c.ratio()?;
    let opts = c.options(rdprune_core::curve::DEFAULT_STEPS);
    let (grid, curves) = match curves_path {
        Some(path) => {
            let mut curves = read_curves(path)?;
            if opts.filter {
                curves = curves.iter().map(filter_outliers).collect();
            }
            (grid_from_curves(&curves)?, curves)
        }
        None => {
            let model = c.load_model()?;
            let calib = c.calibration(&model)?;
            model_curves(&model, &calib, &opts)?
        }
    };
    let budget = opts.budget(ratio, &grid)?;
    let alloc = solve(&curves, &grid, &budget, opts.solver)?;
    let path = c.path("plan.json")?;
    write_plan(&alloc.plan, &path)?;
    if trace {
        write_dp_trace(&alloc.table, &c.path("dp_trace.csv")?)?;
    }
    print_plan(&alloc.plan);
    eprintln!(
        "allocation time: {:.3}s ({} bins of {} weights, {} inner evaluations)",
        alloc.stats.elapsed.as_secs_f64(),
        budget.bins,
        budget.unit,
        alloc.stats.inner_evals
    );
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn print_plan(plan: &AllocationPlan) {
    eprintln!(
        "{:>6} {:>10} {:>10} {:>9}",
        "layer", "size", "pruned", "sparsity"
    );
    for e in &plan.layers {
        eprintln!(
            "{:>6} {:>10} {:>10} {:>9.4}",
            e.layer_index,
            e.size,
            e.pruned,
            e.pruned as f64 / e.size as f64
        );
    }
    eprintln!(
        "pruned {} of {} requested, sparsity {:.4}, objective {:.6e}",
        plan.achieved_total,
        plan.requested_total,
        plan.sparsity(),
        plan.objective
    );
}

fn prune(c: &Common, plan_path: &Path) -> Result<ExitCode> {
    let model = c.load_model()?;
    let plan = read_plan(plan_path)?;
    let pruned = apply_plan(&model, &plan)?;
    let path = c.path("model.json")?;
    if c.model.as_deref() == Some(path.as_path()) {
        bail!("refusing to overwrite the input model; choose another --out");
    }
    save_model(&pruned, &path)?;
    eprintln!(
        "sparsity {:.4} ({} of {} prunable weights are zero)",
        pruned.sparsity(),
        pruned.total_zeros(),
        pruned.total_prunable()
    );
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(c: &Common, pruned_path: Option<&Path>) -> Result<ExitCode> {
    let reference = c.load_model()?;
    let pruned = match pruned_path {
        Some(p) => load_model(p)?,
        None => reference.clone(),
    };
    reference.check_same_structure(&pruned)?;
    let calib = c.calibration(&reference)?;
    let errors =
        DistortionMeter::new(&reference, &calib, Aggregation::Mean)?.sample_errors(&pruned)?;
    let mean = Aggregation::Mean.aggregate(&errors);
    let worst = Aggregation::WorstCase.aggregate(&errors);
    let report = serde_json::json!({
        "samples": errors.len(),
        "mean": mean,
        "worst": worst,
        "sparsity": pruned.sparsity(),
    });
    let path = c.path("eval.json")?;
    write_text(
        &path,
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;
    eprintln!(
        "distortion mean {mean:.6e}, worst {worst:.6e} over {} samples, sparsity {:.4}",
        errors.len(),
        pruned.sparsity()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(c: &Common) -> Result<ExitCode> {
    let model = c.load_model()?;
    let calib = c.calibration(&model)?;
    let opts = c.options(VERIFY_STEPS);
    let (grid, curves) = model_curves(&model, &calib, &opts)?;

    let ratios: Vec<f64> = match c.ratio {
        Some(r) => vec![r],
        None => (1..=9).map(|k| k as f64 / 10.0).collect(),
    };
    let mut rows = Vec::new();
    for ratio in ratios {
        let budget = opts.budget(ratio, &grid)?;
        let oracle = brute_force_allocate(&curves, &grid, &budget)?;
        let dp = solve(&curves, &grid, &budget, opts.solver)?.plan;
        rows.push(OracleAuditRow {
            ratio,
            dp_objective: dp.objective,
            oracle_objective: oracle.objective,
            dp_plan: dp.pruned_counts(),
            oracle_plan: oracle.pruned_counts(),
        });
    }
    write_oracle_audit(&rows, &c.path("oracle_audit.csv")?)?;
    let matched = rows.iter().all(OracleAuditRow::matches);

    let sweep = approximation_error_sweep(&model, &calib, opts.mode, &SWEEP_SPARSITIES)?;
    write_additivity(&sweep, &c.path("additivity.csv")?)?;
    let (sums, joints): (Vec<f64>, Vec<f64>) = sweep
        .iter()
        .filter(|r| r.sparsity == SWEEP_SPARSITIES[0])
        .map(|r| (r.record.sum_individual, r.record.joint))
        .unzip();
    match pearson(&sums, &joints) {
        Some(r) => eprintln!(
            "additivity: pearson {r:.4} at sparsity {}",
            SWEEP_SPARSITIES[0]
        ),
        None => eprintln!("additivity: pearson undefined (fewer than two layer pairs)"),
    }
    for (s, m) in mean_residuals(&sweep) {
        eprintln!("  sparsity {s:.1}: mean relative residual {m:.4}");
    }
    println!("oracle match: {}", if matched { "PASS" } else { "FAIL" });
    Ok(if matched {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn iterate(c: &Common, rounds: usize, fraction: f64) -> Result<ExitCode> {
    let model = c.load_model()?;
    let calib = c.calibration(&model)?;
    let opts = c.options(rdprune_core::curve::DEFAULT_STEPS);
    let (pruned, results) = iterative_schedule(&model, &calib, rounds, fraction, &opts)?;
    let mut table =
        String::from("round,sparsity,expected,requested_total,achieved_total,objective\n");
    for r in &results {
        let dir = c.out.join(format!("round_{}", r.round));
        write_curves(&r.curves, &output_path(&dir, "curves.csv")?)?;
        write_plan(&r.plan, &output_path(&dir, "plan.json")?)?;
        let expected = 1.0 - (1.0 - fraction).powi(r.round as i32);
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.round,
            r.sparsity,
            expected,
            r.plan.requested_total,
            r.plan.achieved_total,
            r.plan.objective
        ));
        eprintln!(
            "round {}: sparsity {:.4} (expected {:.4}), allocation time {:.3}s",
            r.round, r.sparsity, expected, r.allocation_seconds
        );
    }
    let path = c.path("schedule.csv")?;
    write_text(&path, &table)?;
    save_model(&pruned, &c.path("model.json")?)?;
    eprintln!(
        "wrote {} and {}",
        path.display(),
        c.out.join("model.json").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| rdprune_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}
