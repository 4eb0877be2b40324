//! Curves → allocation → pruning, one-shot or in rounds.

use crate::alloc::{solve, Allocation, AllocationPlan, BudgetSpec, Solver};
use crate::calib::CalibrationSet;
use crate::curve::{filter_outliers, Aggregation, CurveGenerator, RDCurve, SparsityGrid};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::prune::apply_plan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub steps: usize,
    pub mode: Aggregation,
    pub filter: bool,
    pub solver: Solver,
    /// Weights per DP bin; `None` picks the default.
    pub unit: Option<usize>,
    /// Fixed bin count; overrides `unit`.
    pub bins: Option<usize>,
    pub threads: Option<usize>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            steps: crate::curve::DEFAULT_STEPS,
            mode: Aggregation::Mean,
            filter: true,
            solver: Solver::Exhaustive,
            unit: None,
            bins: None,
            threads: None,
        }
    }
}

impl PlanOptions {
    pub fn budget(&self, ratio: f64, grid: &SparsityGrid) -> Result<BudgetSpec> {
        match self.bins {
            Some(b) => BudgetSpec::with_bins(ratio, grid, b),
            None => BudgetSpec::from_ratio(ratio, grid, self.unit),
        }
    }
}

/// Curves for every prunable layer over the model's remaining weights,
/// filtered if requested.
pub fn model_curves(
    model: &ModelGraph,
    calib: &CalibrationSet,
    opts: &PlanOptions,
) -> Result<(SparsityGrid, Vec<RDCurve>)> {
    let grid = SparsityGrid::over_remaining(model, opts.steps)?;
    let raw = CurveGenerator::new(model, calib, opts.mode)?.all(&grid, opts.threads)?;
    let curves = if opts.filter {
        raw.iter().map(filter_outliers).collect()
    } else {
        raw
    };
    Ok((grid, curves))
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub round: usize,
    /// Global sparsity after this round's plan is applied.
    pub sparsity: f64,
    pub plan: AllocationPlan,
    pub curves: Vec<RDCurve>,
    pub allocation_seconds: f64,
}

/// Repeatedly prunes `fraction` of the remaining prunable weights: each round
/// regenerates curves on the current model, allocates, and applies the plan.
/// No retraining happens between rounds.
pub fn iterative_schedule(
    model: &ModelGraph,
    calib: &CalibrationSet,
    rounds: usize,
    fraction: f64,
    opts: &PlanOptions,
) -> Result<(ModelGraph, Vec<RoundResult>)> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "per-round fraction {fraction} outside (0, 1)"
        )));
    }
    let mut current = model.clone();
    let mut results = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let wrap = |e: Error| Error::Round {
            round,
            source: Box::new(e),
        };
        let (grid, curves) = model_curves(&current, calib, opts).map_err(wrap)?;
        let budget = opts.budget(fraction, &grid).map_err(wrap)?;
        let Allocation { plan, stats, .. } =
            solve(&curves, &grid, &budget, opts.solver).map_err(wrap)?;
        current = apply_plan(&current, &plan).map_err(wrap)?;
        log::info!(
            "round {round}: pruned {} of {} requested, sparsity {:.4}",
            plan.achieved_total,
            plan.requested_total,
            current.sparsity()
        );
        results.push(RoundResult {
            round,
            sparsity: current.sparsity(),
            plan,
            curves,
            allocation_seconds: stats.elapsed.as_secs_f64(),
        });
    }
    Ok((current, results))
}
