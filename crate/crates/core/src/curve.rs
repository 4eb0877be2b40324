//! Per-layer rate–distortion curves.
//!
//! A curve records, for each grid level `j`, the network-output distortion
//! measured when only one layer is magnitude-pruned to `c(j)` weights and
//! every other layer keeps its current weights.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::calib::CalibrationSet;
use crate::engine::Trace;
use crate::error::{Error, Result};
use crate::model::ModelGraph;
use crate::prune::magnitude_order;
use crate::tensor::Tensor;

/// Grid level count used when none is given.
pub const DEFAULT_STEPS: usize = 100;

/// Per-layer entry of a [`SparsityGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLayer {
    pub layer_index: usize,
    /// Weight count `n` of the layer.
    pub size: usize,
    /// Weights already pruned before this grid applies (zero for a dense
    /// model). Level 0 prunes exactly these.
    pub base: usize,
}

impl GridLayer {
    /// Weights still available to prune.
    pub fn remaining(&self) -> usize {
        self.size - self.base
    }
}

/// `S + 1` evenly spaced prune levels per layer:
/// `c(j) = base + round(j · (n − base) / S)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityGrid {
    steps: usize,
    layers: Vec<GridLayer>,
}

impl SparsityGrid {
    pub fn from_layers(steps: usize, layers: Vec<GridLayer>) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one step".into(),
            ));
        }
        if let Some(l) = layers.iter().find(|l| l.base > l.size) {
            return Err(Error::InvalidArgument(format!(
                "layer {}: base {} exceeds size {}",
                l.layer_index, l.base, l.size
            )));
        }
        Ok(SparsityGrid { steps, layers })
    }

    /// Grid over every prunable layer of `model`, starting from zero pruned.
    pub fn new(model: &ModelGraph, steps: usize) -> Result<Self> {
        let layers = model
            .prunable_layers()
            .into_iter()
            .map(|i| {
                Ok(GridLayer {
                    layer_index: i,
                    size: model.layer_size(i)?,
                    base: 0,
                })
            })
            .collect::<Result<_>>()?;
        Self::from_layers(steps, layers)
    }

    /// Grid over the weights that are not yet zero; level 0 keeps the current
    /// zeros, level `S` prunes the whole layer.
    pub fn over_remaining(model: &ModelGraph, steps: usize) -> Result<Self> {
        let layers = model
            .prunable_layers()
            .into_iter()
            .map(|i| {
                let w = model.prunable_weight(i)?;
                Ok(GridLayer {
                    layer_index: i,
                    size: w.len(),
                    base: w.count_zeros(),
                })
            })
            .collect::<Result<_>>()?;
        Self::from_layers(steps, layers)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn layers(&self) -> &[GridLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total weights still available to prune across all layers.
    pub fn remaining(&self) -> usize {
        self.layers.iter().map(GridLayer::remaining).sum()
    }

    /// Absolute pruned count of the layer at position `pos` at level `j`.
    pub fn count(&self, pos: usize, j: usize) -> usize {
        let l = &self.layers[pos];
        l.base + round_div(j * l.remaining(), self.steps)
    }

    /// Newly pruned weights (beyond `base`) at level `j`.
    pub fn added(&self, pos: usize, j: usize) -> usize {
        self.count(pos, j) - self.layers[pos].base
    }
}

/// `round(num / den)` with halves rounded up.
pub(crate) fn round_div(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Mean squared output error over the calibration set.
    #[default]
    Mean,
    /// Largest per-sample squared output error.
    WorstCase,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::WorstCase => "worst",
        }
    }

    /// Combines per-sample errors, visiting them in the given order.
    pub fn aggregate(self, errors: &[f64]) -> f64 {
        let max = errors.iter().copied().fold(0.0, f64::max);
        match self {
            Aggregation::WorstCase => max,
            Aggregation::Mean => {
                let sum: f64 = errors.iter().sum();
                // Rounding in the running sum can push sum/N a few ulps
                // past the true maximum.
                (sum / errors.len() as f64).min(max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub grid_index: usize,
    pub pruned_count: usize,
    pub distortion: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RDCurve {
    pub layer_index: usize,
    pub points: Vec<CurvePoint>,
}

impl RDCurve {
    /// Curve over grid indices `0..δ.len()` with the given pruned counts; all
    /// points start valid.
    pub fn from_values(layer_index: usize, counts: &[usize], distortions: &[f64]) -> Self {
        assert_eq!(counts.len(), distortions.len());
        RDCurve {
            layer_index,
            points: counts
                .iter()
                .zip(distortions)
                .enumerate()
                .map(|(j, (&c, &d))| CurvePoint {
                    grid_index: j,
                    pruned_count: c,
                    distortion: d,
                    valid: true,
                })
                .collect(),
        }
    }

    pub fn distortions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.distortion).collect()
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        self.points
            .iter()
            .filter(|p| p.valid)
            .map(|p| p.grid_index)
            .collect()
    }

    pub fn invalid_count(&self) -> usize {
        self.points.iter().filter(|p| !p.valid).count()
    }

    /// Checks the structural invariants every curve must satisfy before it is
    /// handed to an allocator.
    pub fn check(&self) -> Result<()> {
        let bad = |detail: String| Error::BadCurve {
            layer: self.layer_index,
            detail,
        };
        let first = self.points.first().ok_or_else(|| bad("no points".into()))?;
        if first.grid_index != 0 || !first.valid {
            return Err(bad("level 0 must be present and valid".into()));
        }
        if first.distortion != 0.0 {
            return Err(bad(format!("level 0 distortion is {}", first.distortion)));
        }
        for (j, p) in self.points.iter().enumerate() {
            if p.grid_index != j {
                return Err(bad(format!("point {j} has grid index {}", p.grid_index)));
            }
            if !p.distortion.is_finite() || p.distortion < 0.0 {
                return Err(bad(format!("level {j} distortion {}", p.distortion)));
            }
        }
        if self
            .points
            .windows(2)
            .any(|w| w[1].pruned_count < w[0].pruned_count)
        {
            return Err(bad("pruned counts decrease".into()));
        }
        Ok(())
    }
}

/// Marks every point that some later point undercuts as invalid.
///
/// The survivors are the right-anchored non-decreasing subsequence; level 0
/// (distortion 0) always survives. Points are kept in place, flagged.
pub fn filter_outliers(curve: &RDCurve) -> RDCurve {
    let mut out = curve.clone();
    let mut later_min = f64::INFINITY;
    for p in out.points.iter_mut().rev() {
        p.valid = p.distortion <= later_min;
        later_min = later_min.min(p.distortion);
    }
    out
}

/// Curve generation bound to one model and calibration set.
///
/// Counts every (pruned model, sample) forward evaluation so callers can
/// audit the `layers × (S + 1) × samples` cost.
pub struct CurveGenerator<'a> {
    model: &'a ModelGraph,
    calib: &'a CalibrationSet,
    mode: Aggregation,
    forward_pairs: AtomicU64,
}

impl<'a> CurveGenerator<'a> {
    pub fn new(
        model: &'a ModelGraph,
        calib: &'a CalibrationSet,
        mode: Aggregation,
    ) -> Result<Self> {
        if calib.shape() != model.input_shape() {
            return Err(Error::InputShape {
                expected: model.input_shape().to_vec(),
                got: calib.shape().to_vec(),
            });
        }
        Ok(CurveGenerator {
            model,
            calib,
            mode,
            forward_pairs: AtomicU64::new(0),
        })
    }

    pub fn forward_pairs(&self) -> u64 {
        self.forward_pairs.load(Ordering::Relaxed)
    }

    /// Curve for the layer at position `pos` of `grid`.
    pub fn curve(&self, grid: &SparsityGrid, pos: usize) -> Result<RDCurve> {
        let entry = grid
            .layers()
            .get(pos)
            .ok_or_else(|| Error::InvalidArgument(format!("grid has no layer position {pos}")))?;
        let layer = entry.layer_index;
        let size = self.model.layer_size(layer)?;
        if size != entry.size {
            return Err(Error::ShapeInconsistency(format!(
                "grid says layer {layer} has {} weights, model has {size}",
                entry.size
            )));
        }

        let traces: Vec<Trace> = self
            .calib
            .samples()
            .iter()
            .map(|x| self.model.forward_trace(x))
            .collect::<Result<_>>()?;
        let dense: Vec<&Tensor> = traces
            .iter()
            .zip(self.calib.samples())
            .map(|(t, x)| t.output().unwrap_or(x))
            .collect();

        let mut work = self.model.clone();
        let order = magnitude_order(self.model.prunable_weight(layer)?.data());
        let mut zeroed = 0;
        let mut errors = vec![0.0; self.calib.len()];
        let mut points = Vec::with_capacity(grid.steps() + 1);
        for j in 0..=grid.steps() {
            let count = grid.count(pos, j);
            // Masks nest: level j+1 extends the zero set of level j.
            let w = work.prunable_weight_mut(layer)?.data_mut();
            for &i in &order[zeroed..count] {
                w[i] = 0.0;
            }
            zeroed = count;

            for (k, ((x, trace), reference)) in self
                .calib
                .samples()
                .iter()
                .zip(&traces)
                .zip(&dense)
                .enumerate()
            {
                let y = work.forward_from(x, trace, layer)?;
                errors[k] = y.sq_distance(reference)?;
            }
            self.forward_pairs
                .fetch_add(self.calib.len() as u64, Ordering::Relaxed);

            let distortion = self.mode.aggregate(&errors);
            if !distortion.is_finite() {
                return Err(Error::NonFinite {
                    layer,
                    what: "output distortion",
                });
            }
            points.push(CurvePoint {
                grid_index: j,
                pruned_count: count,
                distortion,
                valid: true,
            });
        }
        Ok(RDCurve {
            layer_index: layer,
            points,
        })
    }

    /// One curve per grid layer, ordered by layer. `threads == Some(1)` runs
    /// sequentially; `None` uses the global rayon pool. Results do not depend
    /// on the thread count.
    pub fn all(&self, grid: &SparsityGrid, threads: Option<usize>) -> Result<Vec<RDCurve>> {
        let one = |pos: usize| {
            self.curve(grid, pos).map_err(|e| Error::Curve {
                layer: grid.layers()[pos].layer_index,
                source: Box::new(e),
            })
        };
        match threads {
            Some(1) => (0..grid.num_layers()).map(one).collect(),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
                pool.install(|| (0..grid.num_layers()).into_par_iter().map(one).collect())
            }
            None => (0..grid.num_layers()).into_par_iter().map(one).collect(),
        }
    }
}

/// Aggregated output distortion of arbitrary model variants against one
/// reference model, using full forward passes.
pub struct DistortionMeter<'a> {
    calib: &'a CalibrationSet,
    reference: Vec<Tensor>,
    mode: Aggregation,
}

impl<'a> DistortionMeter<'a> {
    pub fn new(
        reference: &ModelGraph,
        calib: &'a CalibrationSet,
        mode: Aggregation,
    ) -> Result<Self> {
        let reference = calib
            .samples()
            .iter()
            .map(|x| reference.forward(x))
            .collect::<Result<_>>()?;
        Ok(DistortionMeter {
            calib,
            reference,
            mode,
        })
    }

    /// Per-sample squared output errors, in sample order.
    pub fn sample_errors(&self, model: &ModelGraph) -> Result<Vec<f64>> {
        self.calib
            .samples()
            .iter()
            .zip(&self.reference)
            .map(|(x, r)| model.forward(x)?.sq_distance(r))
            .collect()
    }

    pub fn distortion(&self, model: &ModelGraph) -> Result<f64> {
        Ok(self.mode.aggregate(&self.sample_errors(model)?))
    }
}

/// Aggregated `‖f(x; reference) − f(x; model)‖²` over the calibration set.
pub fn measure_distortion(
    reference: &ModelGraph,
    model: &ModelGraph,
    calib: &CalibrationSet,
    mode: Aggregation,
) -> Result<f64> {
    reference.check_same_structure(model)?;
    DistortionMeter::new(reference, calib, mode)?.distortion(model)
}

/// Curve of one layer, measured with all other layers left as they are.
pub fn gen_curve(
    model: &ModelGraph,
    layer: usize,
    grid: &SparsityGrid,
    calib: &CalibrationSet,
    mode: Aggregation,
) -> Result<RDCurve> {
    let pos = grid
        .layers()
        .iter()
        .position(|l| l.layer_index == layer)
        .ok_or(Error::NotPrunable(layer))?;
    CurveGenerator::new(model, calib, mode)?.curve(grid, pos)
}

pub fn gen_all_curves(
    model: &ModelGraph,
    grid: &SparsityGrid,
    calib: &CalibrationSet,
    mode: Aggregation,
    threads: Option<usize>,
) -> Result<Vec<RDCurve>> {
    CurveGenerator::new(model, calib, mode)?.all(grid, threads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_removes_local_maximum() {
        let c = RDCurve::from_values(0, &[0, 1, 2, 3, 4], &[0.0, 1.0, 3.0, 2.0, 5.0]);
        let f = filter_outliers(&c);
        assert_eq!(f.valid_indices(), vec![0, 1, 3, 4]);
        let vals: Vec<f64> = f
            .points
            .iter()
            .filter(|p| p.valid)
            .map(|p| p.distortion)
            .collect();
        assert_eq!(vals, vec![0.0, 1.0, 2.0, 5.0]);
        assert_eq!(f.points.len(), 5, "invalid points stay in place");
    }

    #[test]
    fn filter_keeps_monotone_curve() {
        let c = RDCurve::from_values(0, &[0, 1, 2, 3], &[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(filter_outliers(&c), c);
    }

    #[test]
    fn grid_counts() {
        let g = SparsityGrid::from_layers(
            4,
            vec![
                GridLayer {
                    layer_index: 0,
                    size: 10,
                    base: 0,
                },
                GridLayer {
                    layer_index: 2,
                    size: 10,
                    base: 4,
                },
            ],
        )
        .unwrap();
        let first: Vec<usize> = (0..=4).map(|j| g.count(0, j)).collect();
        assert_eq!(first, vec![0, 3, 5, 8, 10]);
        let second: Vec<usize> = (0..=4).map(|j| g.count(1, j)).collect();
        assert_eq!(second, vec![4, 6, 7, 9, 10]);
        assert_eq!(g.remaining(), 16);
    }

    #[test]
    fn mean_never_exceeds_max() {
        let errors = vec![0.1; 3];
        assert!(Aggregation::Mean.aggregate(&errors) <= Aggregation::WorstCase.aggregate(&errors));
        assert_eq!(Aggregation::WorstCase.aggregate(&[1.0, 4.0, 2.0]), 4.0);
        assert_eq!(Aggregation::Mean.aggregate(&[1.0, 4.0, 1.0]), 2.0);
    }

    #[test]
    fn check_rejects_nonzero_origin() {
        let c = RDCurve::from_values(3, &[0, 1], &[0.5, 1.0]);
        assert!(matches!(c.check(), Err(Error::BadCurve { layer: 3, .. })));
        let ok = RDCurve::from_values(3, &[0, 1], &[0.0, 1.0]);
        ok.check().unwrap();
    }
}
