//! Independent checks: exhaustive allocation and empirical additivity.

use std::collections::BTreeMap;

use crate::alloc::{layer_choices, select_target, AllocationPlan, BudgetSpec, PlanEntry};
use crate::calib::CalibrationSet;
use crate::curve::{Aggregation, DistortionMeter, RDCurve, SparsityGrid};
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::prune::prune_layers;

pub const MAX_ORACLE_LAYERS: usize = 6;
pub const MAX_ORACLE_STEPS: usize = 10;

/// Floor on the denominator of the relative residual.
pub const RESIDUAL_EPS: f64 = 1e-12;

/// Enumerates every tuple of valid levels and returns the cheapest one whose
/// bin total hits the budget target (nearest reachable total otherwise, same
/// rule as the DP). Ties go to the tuple that is smallest when compared from
/// the last layer backwards, which is the order the DP backtrack resolves.
pub fn brute_force_allocate(
    curves: &[RDCurve],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
) -> Result<AllocationPlan> {
    if grid.num_layers() > MAX_ORACLE_LAYERS || grid.steps() > MAX_ORACLE_STEPS {
        return Err(Error::GuardExceeded {
            layers: grid.num_layers(),
            steps: grid.steps(),
            max_layers: MAX_ORACLE_LAYERS,
            max_steps: MAX_ORACLE_STEPS,
        });
    }
    let choices = layer_choices(curves, grid, budget.unit)?;
    let available: usize = choices
        .iter()
        .enumerate()
        .map(|(pos, cs)| cs.last().map_or(0, |c| grid.added(pos, c.grid_index)))
        .sum();
    if available < budget.total {
        return Err(Error::Infeasible {
            requested: budget.total,
            available,
        });
    }

    // best tuple (as indices into `choices`) per reachable bin total
    let mut best: BTreeMap<usize, (f64, Vec<usize>)> = BTreeMap::new();
    let mut idx = vec![0usize; choices.len()];
    loop {
        let bins: usize = idx.iter().zip(&choices).map(|(&i, cs)| cs[i].bins).sum();
        let value = idx
            .iter()
            .zip(&choices)
            .fold(0.0, |acc, (&i, cs)| acc + cs[i].distortion);
        let better = match best.get(&bins) {
            None => true,
            Some((v, t)) => value < *v || (value == *v && idx.iter().rev().lt(t.iter().rev())),
        };
        if better {
            best.insert(bins, (value, idx.clone()));
        }
        // odometer over the tuple
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return finish(best, &choices, grid, budget);
            }
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn finish(
    best: BTreeMap<usize, (f64, Vec<usize>)>,
    choices: &[Vec<crate::alloc::Choice>],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
) -> Result<AllocationPlan> {
    let target = select_target(best.keys().copied(), budget.bins).ok_or(Error::Infeasible {
        requested: budget.total,
        available: 0,
    })?;
    let (objective, tuple) = &best[&target];
    let layers: Vec<PlanEntry> = tuple
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let gl = grid.layers()[pos];
            let j = choices[pos][i].grid_index;
            PlanEntry {
                layer_index: gl.layer_index,
                size: gl.size,
                base: gl.base,
                grid_index: j,
                pruned: grid.count(pos, j),
            }
        })
        .collect();
    Ok(AllocationPlan {
        achieved_total: layers.iter().map(|e| e.pruned - e.base).sum(),
        layers,
        requested_total: budget.total,
        objective: *objective,
        ratio: budget.ratio,
        unit: budget.unit,
        target_bins: budget.bins,
        achieved_bins: target,
    })
}

/// Joint versus summed single-layer distortion for one set of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditivityRecord {
    pub layers: Vec<usize>,
    pub counts: Vec<usize>,
    /// Distortion with each layer pruned alone, in `layers` order.
    pub individual: Vec<f64>,
    pub sum_individual: f64,
    pub joint: f64,
    pub relative_residual: f64,
}

/// Prunes each `(layer, count)` alone and all of them together and compares
/// the aggregated distortions.
pub fn measure_additivity(
    model: &ModelGraph,
    prunes: &[(usize, usize)],
    calib: &CalibrationSet,
    mode: Aggregation,
) -> Result<AdditivityRecord> {
    let meter = DistortionMeter::new(model, calib, mode)?;
    measure_with(&meter, model, prunes)
}

fn measure_with(
    meter: &DistortionMeter<'_>,
    model: &ModelGraph,
    prunes: &[(usize, usize)],
) -> Result<AdditivityRecord> {
    for (i, (layer, _)) in prunes.iter().enumerate() {
        if prunes[..i].iter().any(|(l, _)| l == layer) {
            return Err(Error::InvalidArgument(format!(
                "layer {layer} listed twice"
            )));
        }
    }
    let individual = prunes
        .iter()
        .map(|&p| meter.distortion(&prune_layers(model, &[p])?))
        .collect::<Result<Vec<_>>>()?;
    let sum_individual = individual.iter().sum::<f64>();
    let joint = meter.distortion(&prune_layers(model, prunes)?)?;
    Ok(AdditivityRecord {
        layers: prunes.iter().map(|p| p.0).collect(),
        counts: prunes.iter().map(|p| p.1).collect(),
        individual,
        sum_individual,
        joint,
        relative_residual: (joint - sum_individual).abs() / joint.max(RESIDUAL_EPS),
    })
}

/// Pruned count for a fraction of a layer, `round(sparsity · n)`.
pub fn count_at(model: &ModelGraph, layer: usize, sparsity: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::InvalidArgument(format!(
            "sparsity {sparsity} outside [0, 1]"
        )));
    }
    Ok((sparsity * model.layer_size(layer)? as f64).round() as usize)
}

/// [`measure_additivity`] with every listed layer pruned to the same fraction.
pub fn measure_additivity_at(
    model: &ModelGraph,
    layers: &[usize],
    sparsity: f64,
    calib: &CalibrationSet,
    mode: Aggregation,
) -> Result<AdditivityRecord> {
    let prunes = layers
        .iter()
        .map(|&l| Ok((l, count_at(model, l, sparsity)?)))
        .collect::<Result<Vec<_>>>()?;
    measure_additivity(model, &prunes, calib, mode)
}

/// Sparsities visited by [`approximation_error_sweep`] by default.
pub const SWEEP_SPARSITIES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sparsity: f64,
    pub record: AdditivityRecord,
}

/// Additivity of every adjacent pair of prunable layers at each sparsity.
/// Rows are ordered by sparsity, then by pair.
pub fn approximation_error_sweep(
    model: &ModelGraph,
    calib: &CalibrationSet,
    mode: Aggregation,
    sparsities: &[f64],
) -> Result<Vec<SweepRow>> {
    let meter = DistortionMeter::new(model, calib, mode)?;
    let prunable = model.prunable_layers();
    let mut rows = Vec::with_capacity(sparsities.len() * prunable.len().saturating_sub(1));
    for &s in sparsities {
        for pair in prunable.windows(2) {
            let prunes = [
                (pair[0], count_at(model, pair[0], s)?),
                (pair[1], count_at(model, pair[1], s)?),
            ];
            rows.push(SweepRow {
                sparsity: s,
                record: measure_with(&meter, model, &prunes)?,
            });
        }
    }
    Ok(rows)
}

/// Mean relative residual per sparsity, in first-seen order.
pub fn mean_residuals(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for row in rows {
        match out.iter_mut().find(|(s, _, _)| *s == row.sparsity) {
            Some(entry) => {
                entry.1 += row.record.relative_residual;
                entry.2 += 1;
            }
            None => out.push((row.sparsity, row.record.relative_residual, 1)),
        }
    }
    out.into_iter()
        .map(|(s, sum, n)| (s, sum / n as f64))
        .collect()
}

/// Pearson correlation of paired samples; `None` with fewer than two points or
/// zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
