//! Global sparsity allocation by dynamic programming.
//!
//! Minimizes `Σ δ_i(k_i)` over one valid grid level `k_i` per layer subject
//! to the levels consuming the budget. The budget axis is quantized into bins
//! of `unit` weights; a level consuming `c` newly pruned weights takes
//! `round(c / unit)` bins.
//!
//! State `g[i][b]` is the least distortion of the first `i` layers using
//! exactly `b` bins and `s[i][b]` the level chosen for layer `i` there:
//!
//! ```text
//! g[0][0] = 0, g[0][b>0] = +inf
//! g[i][b] = min_k { g[i-1][b - bins_i(k)] + δ_i(k) }
//! ```
//!
//! Ties go to the smallest level `k`. The plan is read back from the final
//! row by walking `b ← b − bins_i(s[i][b])` from the last layer to the first.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::curve::{round_div, RDCurve, SparsityGrid};
use crate::error::{Error, Result};

/// Upper bound on bins per layer-level used to pick the default unit.
pub const BINS_PER_LEVEL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSpec {
    /// Requested fraction of the prunable (remaining) weights.
    pub ratio: f64,
    /// Weights to prune, `round(ratio · remaining)`.
    pub total: usize,
    /// Weights per bin.
    pub unit: usize,
    /// `ceil(total / unit)`.
    pub bins: usize,
}

impl BudgetSpec {
    /// Budget for a fraction of `grid`'s remaining weights. Without an explicit
    /// unit, the smallest unit keeping `bins ≤ 10 · layers · S` is used.
    pub fn from_ratio(ratio: f64, grid: &SparsityGrid, unit: Option<usize>) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::InvalidArgument(format!(
                "ratio {ratio} outside [0, 1]"
            )));
        }
        let total = (ratio * grid.remaining() as f64).round() as usize;
        let mut spec = Self::from_total(total, grid, unit)?;
        spec.ratio = ratio;
        Ok(spec)
    }

    pub fn from_total(total: usize, grid: &SparsityGrid, unit: Option<usize>) -> Result<Self> {
        let unit = match unit {
            Some(0) => return Err(Error::InvalidArgument("unit must be at least 1".into())),
            Some(u) => u,
            None => default_unit(total, grid),
        };
        let remaining = grid.remaining();
        if total > remaining {
            return Err(Error::Infeasible {
                requested: total,
                available: remaining,
            });
        }
        Ok(BudgetSpec {
            ratio: if remaining == 0 {
                0.0
            } else {
                total as f64 / remaining as f64
            },
            total,
            unit,
            bins: total.div_ceil(unit),
        })
    }

    /// Budget with the bin count fixed instead of the unit.
    pub fn with_bins(ratio: f64, grid: &SparsityGrid, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument(
                "bin count must be at least 1".into(),
            ));
        }
        let total = (ratio.clamp(0.0, 1.0) * grid.remaining() as f64).round() as usize;
        Self::from_ratio(ratio, grid, Some(total.div_ceil(bins).max(1)))
    }
}

fn default_unit(total: usize, grid: &SparsityGrid) -> usize {
    let cap = BINS_PER_LEVEL * grid.num_layers().max(1) * grid.steps();
    total.div_ceil(cap).max(1)
}

/// A selectable level of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Choice {
    pub grid_index: usize,
    pub bins: usize,
    pub distortion: f64,
}

/// Valid levels of each curve with their bin cost, in grid order.
pub(crate) fn layer_choices(
    curves: &[RDCurve],
    grid: &SparsityGrid,
    unit: usize,
) -> Result<Vec<Vec<Choice>>> {
    if curves.is_empty() {
        return Err(Error::EmptyCurves);
    }
    if curves.len() != grid.num_layers() {
        return Err(Error::InvalidArgument(format!(
            "{} curves for a grid over {} layers",
            curves.len(),
            grid.num_layers()
        )));
    }
    curves
        .iter()
        .enumerate()
        .map(|(pos, curve)| {
            curve.check()?;
            let bad = |detail: String| Error::BadCurve {
                layer: curve.layer_index,
                detail,
            };
            if curve.layer_index != grid.layers()[pos].layer_index {
                return Err(bad(format!(
                    "expected layer {} at position {pos}",
                    grid.layers()[pos].layer_index
                )));
            }
            if curve.points.len() != grid.steps() + 1 {
                return Err(bad(format!(
                    "{} points for a grid of {} steps",
                    curve.points.len(),
                    grid.steps()
                )));
            }
            Ok(curve
                .points
                .iter()
                .filter(|p| p.valid)
                .map(|p| Choice {
                    grid_index: p.grid_index,
                    bins: round_div(grid.added(pos, p.grid_index), unit),
                    distortion: p.distortion,
                })
                .collect())
        })
        .collect()
}

/// Picks the final bin count: `target` if reachable, otherwise the nearest
/// reachable count, preferring the larger one on a tie.
pub(crate) fn select_target(
    reachable: impl IntoIterator<Item = usize>,
    target: usize,
) -> Option<usize> {
    reachable
        .into_iter()
        .min_by_key(|&b| (b.abs_diff(target), std::cmp::Reverse(b)))
}

fn check_feasible(choices: &[Vec<Choice>], grid: &SparsityGrid, budget: &BudgetSpec) -> Result<()> {
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
    Ok(())
}

/// DP state values and decisions, row-major over `(layers + 1) × (cols + 1)`.
#[derive(Debug, Clone)]
pub struct DPTable {
    cols: usize,
    g: Vec<f64>,
    s: Vec<i32>,
}

impl DPTable {
    fn new(layers: usize, cols: usize) -> Self {
        let width = cols + 1;
        let mut g = vec![f64::INFINITY; (layers + 1) * width];
        g[0] = 0.0;
        DPTable {
            cols,
            g,
            s: vec![-1; (layers + 1) * width],
        }
    }

    /// Largest bin index held by the table.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.g.len() / (self.cols + 1)
    }

    /// Least distortion of the first `i` layers using exactly `b` bins
    /// (`+inf` if unreachable).
    pub fn g(&self, i: usize, b: usize) -> f64 {
        self.g[i * (self.cols + 1) + b]
    }

    /// Level chosen for layer `i` at `b` bins, `-1` if unreachable.
    pub fn s(&self, i: usize, b: usize) -> i32 {
        self.s[i * (self.cols + 1) + b]
    }

    pub fn row_g(&self, i: usize) -> &[f64] {
        &self.g[i * (self.cols + 1)..(i + 1) * (self.cols + 1)]
    }

    pub fn row_s(&self, i: usize) -> &[i32] {
        &self.s[i * (self.cols + 1)..(i + 1) * (self.cols + 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub layer_index: usize,
    pub size: usize,
    /// Weights that were already zero before this plan.
    pub base: usize,
    pub grid_index: usize,
    /// Absolute pruned count `p_i` after the plan is applied.
    pub pruned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub layers: Vec<PlanEntry>,
    pub requested_total: usize,
    /// Newly pruned weights, `Σ (p_i − base_i)`.
    pub achieved_total: usize,
    /// Curve-sum distortion `Σ δ_i`, summed in layer order.
    pub objective: f64,
    pub ratio: f64,
    pub unit: usize,
    pub target_bins: usize,
    pub achieved_bins: usize,
}

impl AllocationPlan {
    pub fn pruned_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.pruned).collect()
    }

    pub fn grid_indices(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.grid_index).collect()
    }

    /// Fraction of all prunable weights that are zero after the plan.
    pub fn sparsity(&self) -> f64 {
        let size: usize = self.layers.iter().map(|l| l.size).sum();
        if size == 0 {
            return 0.0;
        }
        self.layers.iter().map(|l| l.pruned).sum::<usize>() as f64 / size as f64
    }

    /// Deviation from the requested total that the bin quantization allows:
    /// half a unit per layer of rounding, one unit for `ceil`, plus any bins
    /// the target had to move because the exact count was unreachable.
    pub fn budget_slack(&self) -> usize {
        let layers = self.layers.len();
        ((layers + 2) * self.unit).div_ceil(2)
            + self.achieved_bins.abs_diff(self.target_bins) * self.unit
    }

    /// Checks the plan against the curves and grid it was built from and
    /// returns every violated property.
    pub fn violations(&self, curves: &[RDCurve], grid: &SparsityGrid) -> Vec<String> {
        let mut out = Vec::new();
        if self.layers.len() != grid.num_layers() || curves.len() != grid.num_layers() {
            out.push(format!(
                "{} plan entries, {} curves, {} grid layers",
                self.layers.len(),
                curves.len(),
                grid.num_layers()
            ));
            return out;
        }
        let mut achieved = 0;
        let mut objective = 0.0;
        for (pos, (entry, curve)) in self.layers.iter().zip(curves).enumerate() {
            let gl = grid.layers()[pos];
            if entry.pruned > gl.size || entry.pruned < gl.base {
                out.push(format!(
                    "layer {}: pruned {} outside [{}, {}]",
                    entry.layer_index, entry.pruned, gl.base, gl.size
                ));
            }
            match curve.points.get(entry.grid_index) {
                Some(p) if p.valid && p.pruned_count == entry.pruned => {
                    objective += p.distortion;
                }
                Some(p) => out.push(format!(
                    "layer {}: level {} (count {}, valid {}) does not match pruned {}",
                    entry.layer_index, entry.grid_index, p.pruned_count, p.valid, entry.pruned
                )),
                None => out.push(format!(
                    "layer {}: no level {}",
                    entry.layer_index, entry.grid_index
                )),
            }
            achieved += entry.pruned.saturating_sub(gl.base);
        }
        if achieved != self.achieved_total {
            out.push(format!(
                "achieved_total {} but entries sum to {achieved}",
                self.achieved_total
            ));
        }
        if objective != self.objective {
            out.push(format!(
                "objective {} but curve sum is {objective}",
                self.objective
            ));
        }
        let dev = achieved.abs_diff(self.requested_total);
        if dev > self.budget_slack() {
            out.push(format!(
                "achieved {achieved} deviates from requested {} by more than {}",
                self.requested_total,
                self.budget_slack()
            ));
        }
        out
    }
}

/// Work and timing of one allocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AllocStats {
    /// Inner-loop candidate evaluations.
    pub inner_evals: u64,
    /// DP columns (bins) per row, `cols + 1`.
    pub width: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Allocation {
    pub plan: AllocationPlan,
    pub table: DPTable,
    pub stats: AllocStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    Exhaustive,
    Ternary,
}

/// Exhaustive DP allocation.
pub fn allocate(
    curves: &[RDCurve],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
) -> Result<Allocation> {
    solve(curves, grid, budget, Solver::Exhaustive)
}

/// DP allocation with the inner minimum found by ternary search. Matches
/// [`allocate`] whenever each inner objective is unimodal over the levels.
pub fn allocate_ternary(
    curves: &[RDCurve],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
) -> Result<Allocation> {
    solve(curves, grid, budget, Solver::Ternary)
}

pub fn solve(
    curves: &[RDCurve],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
    solver: Solver,
) -> Result<Allocation> {
    let start = Instant::now();
    let choices = layer_choices(curves, grid, budget.unit)?;
    check_feasible(&choices, grid, budget)?;

    // Columns past the target are only needed to fall back to the nearest
    // reachable count when the target itself is unreachable.
    let max_bins: usize = choices
        .iter()
        .map(|cs| cs.last().map_or(0, |c| c.bins))
        .sum();
    let max_gap = choices
        .iter()
        .flat_map(|cs| cs.windows(2).map(|w| w[1].bins - w[0].bins))
        .max()
        .unwrap_or(0);
    let cols = max_bins.min(budget.bins + max_gap);

    let layers = choices.len();
    let mut table = DPTable::new(layers, cols);
    let width = cols + 1;
    let mut evals = 0u64;
    let mut reach = 0usize;
    for (i, cs) in choices.iter().enumerate() {
        let (prev, cur) = table.g.split_at_mut((i + 1) * width);
        let prev = &prev[i * width..];
        let cur = &mut cur[..width];
        let dec = &mut table.s[(i + 1) * width..(i + 2) * width];
        let mut row_reach = 0;
        for b in 0..width {
            let (best, arg) = match solver {
                Solver::Exhaustive => inner_exhaustive(prev, cs, b, &mut evals),
                Solver::Ternary => inner_ternary(prev, cs, b, reach, &mut evals),
            };
            cur[b] = best;
            dec[b] = arg;
            if arg >= 0 {
                row_reach = b;
            }
        }
        reach = row_reach;
    }

    let last = table.row_g(layers);
    let target = select_target((0..width).filter(|&b| last[b].is_finite()), budget.bins).ok_or(
        Error::Infeasible {
            requested: budget.total,
            available: 0,
        },
    )?;
    let plan = backtrack(&table, &choices, grid, budget, target)?;
    Ok(Allocation {
        plan,
        table,
        stats: AllocStats {
            inner_evals: evals,
            width,
            elapsed: start.elapsed(),
        },
    })
}

fn inner_exhaustive(prev: &[f64], cs: &[Choice], b: usize, evals: &mut u64) -> (f64, i32) {
    let mut best = f64::INFINITY;
    let mut arg = -1;
    for c in cs {
        if c.bins > b {
            break;
        }
        *evals += 1;
        let before = prev[b - c.bins];
        if before.is_infinite() {
            continue;
        }
        let v = before + c.distortion;
        if v < best {
            best = v;
            arg = c.grid_index as i32;
        }
    }
    (best, arg)
}

fn inner_ternary(
    prev: &[f64],
    cs: &[Choice],
    b: usize,
    reach: usize,
    evals: &mut u64,
) -> (f64, i32) {
    // Candidates whose remainder lies inside the reachable part of `prev`.
    let hi = cs.partition_point(|c| c.bins <= b);
    let lo = cs.partition_point(|c| c.bins + reach < b);
    if lo >= hi {
        return (f64::INFINITY, -1);
    }
    let mut h = |idx: usize| {
        *evals += 1;
        let c = &cs[idx];
        let before = prev[b - c.bins];
        if before.is_infinite() {
            f64::INFINITY
        } else {
            before + c.distortion
        }
    };
    let (mut l, mut r) = (lo, hi - 1);
    while r - l > 2 {
        let m1 = l + (r - l) / 3;
        let m2 = r - (r - l) / 3;
        if h(m1) <= h(m2) {
            r = m2 - 1;
        } else {
            l = m1 + 1;
        }
    }
    let mut best = f64::INFINITY;
    let mut arg = -1;
    for idx in l..=r {
        let v = h(idx);
        if v < best {
            best = v;
            arg = cs[idx].grid_index as i32;
        }
    }
    if arg < 0 {
        // Unreachable cells inside the range break unimodality; fall back so
        // reachable states are never lost.
        for (idx, c) in cs.iter().enumerate().take(hi).skip(lo) {
            let v = h(idx);
            if v < best {
                best = v;
                arg = c.grid_index as i32;
            }
        }
    }
    (best, arg)
}

fn backtrack(
    table: &DPTable,
    choices: &[Vec<Choice>],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
    target: usize,
) -> Result<AllocationPlan> {
    let layers = choices.len();
    let mut entries = Vec::with_capacity(layers);
    let mut b = target;
    for i in (1..=layers).rev() {
        let k = table.s(i, b);
        let choice = choices[i - 1]
            .iter()
            .find(|c| c.grid_index as i32 == k)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("no decision stored for layer {i} at bin {b}"))
            })?;
        let gl = grid.layers()[i - 1];
        entries.push(PlanEntry {
            layer_index: gl.layer_index,
            size: gl.size,
            base: gl.base,
            grid_index: choice.grid_index,
            pruned: grid.count(i - 1, choice.grid_index),
        });
        b -= choice.bins;
    }
    debug_assert_eq!(b, 0);
    entries.reverse();
    let achieved_total = entries.iter().map(|e| e.pruned - e.base).sum();
    Ok(AllocationPlan {
        layers: entries,
        requested_total: budget.total,
        achieved_total,
        objective: table.g(layers, target),
        ratio: budget.ratio,
        unit: budget.unit,
        target_bins: budget.bins,
        achieved_bins: target,
    })
}

/// Same level for every layer, picked so the pruned total is closest to the
/// budget (smaller level on a tie). Validity flags are ignored.
pub fn uniform_plan(
    curves: &[RDCurve],
    grid: &SparsityGrid,
    budget: &BudgetSpec,
) -> Result<AllocationPlan> {
    if curves.is_empty() {
        return Err(Error::EmptyCurves);
    }
    let layers = grid.num_layers();
    let added = |j: usize| (0..layers).map(|pos| grid.added(pos, j)).sum::<usize>();
    let j = (0..=grid.steps())
        .min_by_key(|&j| added(j).abs_diff(budget.total))
        .expect("grid has at least one level");
    let mut objective = 0.0;
    let entries = curves
        .iter()
        .enumerate()
        .map(|(pos, c)| {
            let p = c.points.get(j).ok_or_else(|| Error::BadCurve {
                layer: c.layer_index,
                detail: format!("missing level {j}"),
            })?;
            objective += p.distortion;
            let gl = grid.layers()[pos];
            Ok(PlanEntry {
                layer_index: gl.layer_index,
                size: gl.size,
                base: gl.base,
                grid_index: j,
                pruned: grid.count(pos, j),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bins: usize = (0..layers)
        .map(|pos| round_div(grid.added(pos, j), budget.unit))
        .sum();
    Ok(AllocationPlan {
        layers: entries,
        requested_total: budget.total,
        achieved_total: added(j),
        objective,
        ratio: budget.ratio,
        unit: budget.unit,
        target_bins: budget.bins,
        achieved_bins: bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::GridLayer;

    fn grid(sizes: &[usize], steps: usize) -> SparsityGrid {
        SparsityGrid::from_layers(
            steps,
            sizes
                .iter()
                .enumerate()
                .map(|(i, &size)| GridLayer {
                    layer_index: i,
                    size,
                    base: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn curves(grid: &SparsityGrid, values: &[Vec<f64>]) -> Vec<RDCurve> {
        values
            .iter()
            .enumerate()
            .map(|(pos, v)| {
                let counts: Vec<usize> = (0..v.len()).map(|j| grid.count(pos, j)).collect();
                RDCurve::from_values(pos, &counts, v)
            })
            .collect()
    }

    #[test]
    fn two_layer_split() {
        let g = grid(&[4, 4], 4);
        let cs = curves(&g, &[vec![0., 1., 2., 10., 20.], vec![0., 5., 6., 7., 8.]]);
        let budget = BudgetSpec::from_total(4, &g, Some(1)).unwrap();
        let a = allocate(&cs, &g, &budget).unwrap();
        assert_eq!(a.plan.pruned_counts(), vec![2, 2]);
        assert_eq!(a.plan.objective, 8.0);
        assert_eq!(a.plan.achieved_total, 4);
        assert!(a.plan.violations(&cs, &g).is_empty());
        assert_eq!(a.table.g(1, 3), 10.0);
        for i in 0..=2 {
            assert_eq!(a.table.g(i, 0), 0.0);
        }
    }

    #[test]
    fn zero_budget() {
        let g = grid(&[4, 6], 4);
        let cs = curves(&g, &[vec![0., 1., 2., 3., 4.], vec![0., 1., 1., 1., 9.]]);
        let budget = BudgetSpec::from_ratio(0.0, &g, None).unwrap();
        for solver in [Solver::Exhaustive, Solver::Ternary] {
            let a = solve(&cs, &g, &budget, solver).unwrap();
            assert_eq!(a.plan.pruned_counts(), vec![0, 0]);
            assert_eq!(a.plan.objective, 0.0);
        }
    }

    #[test]
    fn single_layer_takes_budget() {
        let g = grid(&[10], 5);
        let cs = curves(&g, &[vec![0., 0.5, 1., 4., 9., 16.]]);
        let budget = BudgetSpec::from_total(6, &g, Some(1)).unwrap();
        let a = allocate(&cs, &g, &budget).unwrap();
        assert_eq!(a.plan.pruned_counts(), vec![6]);
        assert_eq!(a.plan.objective, 4.0);

        // 5 is between levels 4 and 6; the tie goes to the larger count.
        let budget = BudgetSpec::from_total(5, &g, Some(1)).unwrap();
        let a = allocate(&cs, &g, &budget).unwrap();
        assert_eq!(a.plan.pruned_counts(), vec![6]);
        assert_eq!(a.plan.achieved_bins, 6);
    }

    #[test]
    fn invalid_points_are_skipped() {
        let g = grid(&[4, 4], 4);
        let mut cs = curves(&g, &[vec![0., 1., 2., 10., 20.], vec![0., 5., 6., 7., 8.]]);
        cs[0].points[2].valid = false;
        let budget = BudgetSpec::from_total(4, &g, Some(1)).unwrap();
        let a = allocate(&cs, &g, &budget).unwrap();
        assert_ne!(a.plan.grid_indices()[0], 2);
        assert!(a.plan.violations(&cs, &g).is_empty());
    }

    #[test]
    fn infeasible_and_empty() {
        let g = grid(&[4, 4], 4);
        let mut cs = curves(&g, &[vec![0., 1., 2., 3., 4.], vec![0., 1., 2., 3., 4.]]);
        cs[0].points[4].valid = false;
        cs[0].points[3].valid = false;
        let budget = BudgetSpec::from_total(8, &g, Some(1)).unwrap();
        assert!(matches!(
            allocate(&cs, &g, &budget),
            Err(Error::Infeasible {
                requested: 8,
                available: 6
            })
        ));
        assert!(matches!(
            allocate(&[], &g, &budget),
            Err(Error::EmptyCurves)
        ));
        assert!(BudgetSpec::from_total(9, &g, None).is_err());
        assert!(BudgetSpec::from_ratio(1.5, &g, None).is_err());
    }

    #[test]
    fn default_unit_caps_bins() {
        let g = grid(&[100_000, 50_000, 7], 100);
        let b = BudgetSpec::from_ratio(0.9, &g, None).unwrap();
        assert!(b.bins <= BINS_PER_LEVEL * 3 * 100);
        assert!(b.bins * b.unit >= b.total);
        let small = BudgetSpec::from_ratio(0.5, &grid(&[8, 8], 4), None).unwrap();
        assert_eq!(small.unit, 1);
    }

    #[test]
    fn target_selection() {
        assert_eq!(select_target([0, 3, 7], 5), Some(7));
        assert_eq!(select_target([0, 4, 6], 5), Some(6));
        assert_eq!(select_target([0, 5, 6], 5), Some(5));
        assert_eq!(select_target(Vec::<usize>::new(), 5), None);
    }

    #[test]
    fn uniform_is_feasible_point() {
        let g = grid(&[8, 8, 8], 4);
        let cs = curves(
            &g,
            &[
                vec![0., 1., 3., 6., 10.],
                vec![0., 0.1, 0.2, 5., 9.],
                vec![0., 2., 2.5, 3., 3.5],
            ],
        );
        let budget = BudgetSpec::from_total(12, &g, Some(1)).unwrap();
        let u = uniform_plan(&cs, &g, &budget).unwrap();
        assert_eq!(u.grid_indices(), vec![2, 2, 2]);
        let a = allocate(&cs, &g, &budget).unwrap();
        assert!(a.plan.objective <= u.objective);
    }
}
