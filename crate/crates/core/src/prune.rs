//! Magnitude pruning of individual layers.
//!
//! Weights are ranked by `|w|` with ties broken by flat index, so the set of
//! pruned positions for `k` weights is always a prefix of one fixed order.

use crate::alloc::AllocationPlan;
use crate::error::{Error, Result};
use crate::model::ModelGraph;

/// Flat indices of `weights` from smallest to largest magnitude.
pub fn magnitude_order(weights: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // sort_by is stable: equal magnitudes keep ascending index order.
    order.sort_by(|&a, &b| weights[a].abs().total_cmp(&weights[b].abs()));
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    pub layer_index: usize,
    pub kept: Vec<bool>,
}

impl PruneMask {
    /// Mask removing the `count` smallest-magnitude weights of `layer`.
    pub fn smallest(model: &ModelGraph, layer: usize, count: usize) -> Result<Self> {
        let weight = model.prunable_weight(layer)?;
        check_count(layer, count, weight.len())?;
        let mut kept = vec![true; weight.len()];
        for &i in &magnitude_order(weight.data())[..count] {
            kept[i] = false;
        }
        Ok(PruneMask {
            layer_index: layer,
            kept,
        })
    }

    pub fn pruned(&self) -> usize {
        self.kept.iter().filter(|k| !**k).count()
    }

    /// `true` if every position pruned by `self` is also pruned by `other`.
    pub fn is_subset_of(&self, other: &PruneMask) -> bool {
        self.kept.len() == other.kept.len()
            && self.kept.iter().zip(&other.kept).all(|(a, b)| *a || !*b)
    }
}

fn check_count(layer: usize, count: usize, size: usize) -> Result<()> {
    if count > size {
        return Err(Error::PruneOutOfRange { layer, count, size });
    }
    Ok(())
}

/// Zeroes the `count` smallest-magnitude weights of one layer in place.
pub(crate) fn prune_in_place(model: &mut ModelGraph, layer: usize, count: usize) -> Result<()> {
    let weight = model.prunable_weight_mut(layer)?;
    check_count(layer, count, weight.len())?;
    if count == 0 {
        return Ok(());
    }
    let order = magnitude_order(weight.data());
    let data = weight.data_mut();
    for &i in &order[..count] {
        data[i] = 0.0;
    }
    Ok(())
}

/// Copy of `model` with the `count` smallest-magnitude weights of `layer`
/// set to zero. Biases and other layers are untouched.
pub fn prune_layer(model: &ModelGraph, layer: usize, count: usize) -> Result<ModelGraph> {
    let mut pruned = model.clone();
    prune_in_place(&mut pruned, layer, count)?;
    Ok(pruned)
}

/// Prunes several layers at once; `counts` pairs a layer index with the
/// number of weights to remove from it.
pub fn prune_layers(model: &ModelGraph, counts: &[(usize, usize)]) -> Result<ModelGraph> {
    let mut pruned = model.clone();
    for &(layer, count) in counts {
        prune_in_place(&mut pruned, layer, count)?;
    }
    Ok(pruned)
}

/// Applies an allocation plan: each prunable layer ends with its planned
/// number of smallest-magnitude weights zeroed.
pub fn apply_plan(model: &ModelGraph, plan: &AllocationPlan) -> Result<ModelGraph> {
    let prunable = model.prunable_layers();
    if prunable.len() != plan.layers.len() {
        return Err(Error::PlanMismatch {
            expected: prunable.len(),
            got: plan.layers.len(),
        });
    }
    let mut counts = Vec::with_capacity(prunable.len());
    for (&layer, entry) in prunable.iter().zip(&plan.layers) {
        if entry.layer_index != layer {
            return Err(Error::StructureMismatch(format!(
                "plan entry for layer {} where the model's next prunable layer is {layer}",
                entry.layer_index
            )));
        }
        counts.push((layer, entry.pruned));
    }
    prune_layers(model, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LayerSpec;
    use crate::tensor::Tensor;

    fn single(weights: Vec<f32>) -> ModelGraph {
        let n = weights.len();
        ModelGraph::new(
            "p",
            vec![n],
            vec![LayerSpec::Dense {
                weight: Tensor::new(vec![1, n], weights).unwrap(),
                bias: None,
            }],
        )
        .unwrap()
    }

    fn weights(m: &ModelGraph) -> Vec<f32> {
        m.layers()[0].weight().unwrap().data().to_vec()
    }

    #[test]
    fn prunes_two_smallest() {
        let m = single(vec![0.5, -2.0, 0.1, 1.0]);
        let p = prune_layer(&m, 0, 2).unwrap();
        assert_eq!(weights(&p), vec![0.0, -2.0, 0.0, 1.0]);
        assert_eq!(weights(&m), vec![0.5, -2.0, 0.1, 1.0], "original untouched");
    }

    #[test]
    fn zero_and_full() {
        let m = single(vec![0.5, -2.0, 0.1, 1.0]);
        let none = prune_layer(&m, 0, 0).unwrap();
        assert_eq!(
            weights(&none)
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            weights(&m).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(weights(&prune_layer(&m, 0, 4).unwrap())
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn ties_break_by_index() {
        let m = single(vec![1.0, -1.0, 1.0, 0.0]);
        assert_eq!(
            weights(&prune_layer(&m, 0, 1).unwrap()),
            vec![1.0, -1.0, 1.0, 0.0]
        );
        assert_eq!(
            weights(&prune_layer(&m, 0, 2).unwrap()),
            vec![0.0, -1.0, 1.0, 0.0]
        );
        assert_eq!(
            weights(&prune_layer(&m, 0, 3).unwrap()),
            vec![0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn errors() {
        let m = ModelGraph::new(
            "p",
            vec![2],
            vec![
                LayerSpec::Dense {
                    weight: Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap(),
                    bias: None,
                },
                LayerSpec::Relu,
            ],
        )
        .unwrap();
        assert!(matches!(
            prune_layer(&m, 0, 5),
            Err(Error::PruneOutOfRange {
                layer: 0,
                count: 5,
                size: 4
            })
        ));
        assert!(matches!(prune_layer(&m, 1, 0), Err(Error::NotPrunable(1))));
    }

    #[test]
    fn masks_nest() {
        let m = single(vec![0.3, -0.1, 0.7, 0.0, -0.5, 0.2]);
        let masks: Vec<_> = (0..=6)
            .map(|k| PruneMask::smallest(&m, 0, k).unwrap())
            .collect();
        for (k, mask) in masks.iter().enumerate() {
            assert_eq!(mask.pruned(), k);
        }
        for w in masks.windows(2) {
            assert!(w[0].is_subset_of(&w[1]));
        }
    }
}
