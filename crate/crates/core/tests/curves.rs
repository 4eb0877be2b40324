mod common;

use common::{fixture, Rng};
use proptest::prelude::*;
use rdprune_core::{
    filter_outliers, gen_curve, measure_distortion, prune_layer, white_noise, Aggregation,
    CurveGenerator, LayerSpec, ModelGraph, RDCurve, SparsityGrid, Tensor,
};

#[test]
fn forward_pair_count_is_layers_by_levels_by_samples() {
    let (model, calib) = fixture("mlp_toy");
    let calib = calib.truncated(32).unwrap();
    let grid = SparsityGrid::new(&model, 10).unwrap();
    let generator = CurveGenerator::new(&model, &calib, Aggregation::Mean).unwrap();
    let curves = generator.all(&grid, Some(1)).unwrap();
    assert_eq!(curves.len(), 6);
    assert_eq!(generator.forward_pairs(), 6 * 11 * 32);
}

#[test]
fn curve_points_match_full_forward_distortion() {
    let (model, calib) = fixture("cnn_toy");
    let calib = calib.truncated(32).unwrap();
    let grid = SparsityGrid::new(&model, 20).unwrap();
    let curves = CurveGenerator::new(&model, &calib, Aggregation::Mean)
        .unwrap()
        .all(&grid, Some(1))
        .unwrap();
    let mut rng = Rng::new(10);
    for _ in 0..10 {
        let pos = rng.range(0, grid.num_layers() - 1);
        let j = rng.range(0, 20);
        let layer = grid.layers()[pos].layer_index;
        let pruned = prune_layer(&model, layer, grid.count(pos, j)).unwrap();
        let direct = measure_distortion(&model, &pruned, &calib, Aggregation::Mean).unwrap();
        let curve = curves[pos].points[j].distortion;
        assert!(
            (curve - direct).abs() <= 1e-6 * direct.max(1e-12),
            "layer {layer} j={j}: {curve} vs {direct}"
        );
    }
}

#[test]
fn fully_pruned_last_layer_with_zero_bias_gives_output_energy() {
    let (model, calib) = fixture("mlp_toy");
    let calib = calib.truncated(64).unwrap();
    let mut layers = model.layers().to_vec();
    let last = layers.len() - 1;
    if let LayerSpec::Dense { bias, .. } = &mut layers[last] {
        *bias = Some(Tensor::vector(vec![0.0; 10]));
    }
    let model = ModelGraph::new("zero-bias", model.input_shape().to_vec(), layers).unwrap();
    let grid = SparsityGrid::new(&model, 5).unwrap();
    let curve = gen_curve(&model, last, &grid, &calib, Aggregation::Mean).unwrap();
    let energy = calib
        .samples()
        .iter()
        .map(|x| model.forward(x).unwrap().sq_norm())
        .sum::<f64>()
        / calib.len() as f64;
    let end = curve.points[5].distortion;
    assert_eq!(
        curve.points[5].pruned_count,
        model.layer_size(last).unwrap()
    );
    assert!((end - energy).abs() <= 1e-9 * energy, "{end} vs {energy}");
}

#[test]
fn single_sample_mean_equals_worst() {
    let (model, calib) = fixture("cnn_toy");
    let one = calib.truncated(1).unwrap();
    let grid = SparsityGrid::new(&model, 8).unwrap();
    let mean = CurveGenerator::new(&model, &one, Aggregation::Mean)
        .unwrap()
        .all(&grid, Some(1))
        .unwrap();
    let worst = CurveGenerator::new(&model, &one, Aggregation::WorstCase)
        .unwrap()
        .all(&grid, Some(1))
        .unwrap();
    assert_eq!(mean, worst);
}

#[test]
fn white_noise_curves_start_at_zero_and_are_reproducible() {
    let (model, _) = fixture("cnn_toy");
    let grid = SparsityGrid::new(&model, 6).unwrap();
    let run = |seed| {
        let calib = white_noise(model.input_shape(), 16, seed).unwrap();
        CurveGenerator::new(&model, &calib, Aggregation::Mean)
            .unwrap()
            .all(&grid, None)
            .unwrap()
    };
    let a = run(4);
    assert_eq!(a, run(4));
    assert_ne!(a, run(5));
    for c in &a {
        assert_eq!(c.points[0].distortion, 0.0);
        c.check().unwrap();
    }
}

#[test]
fn wrong_calibration_shape_is_rejected() {
    let (model, _) = fixture("mlp_toy");
    let calib = white_noise(&[31], 4, 1).unwrap();
    assert!(CurveGenerator::new(&model, &calib, Aggregation::Mean).is_err());
}

/// A point survives iff no later point is smaller.
fn filter_oracle(values: &[f64]) -> Vec<bool> {
    (0..values.len())
        .map(|j| values[j + 1..].iter().all(|&v| v >= values[j]))
        .collect()
}

fn curve_of(values: &[f64]) -> RDCurve {
    let counts: Vec<usize> = (0..values.len()).map(|j| 3 * j).collect();
    RDCurve::from_values(4, &counts, values)
}

#[test]
fn filter_matches_quadratic_scan() {
    let mut rng = Rng::new(100);
    for _ in 0..100 {
        let steps = rng.range(1, 40);
        let mut values = vec![0.0];
        values.extend((0..steps).map(|_| (rng.range(0, 20) as f64) * 0.5));
        let filtered = filter_outliers(&curve_of(&values));
        let valid: Vec<bool> = filtered.points.iter().map(|p| p.valid).collect();
        assert_eq!(valid, filter_oracle(&values), "{values:?}");
        assert_eq!(filtered.distortions(), values);
        assert!(filtered.points[0].valid);
        filtered.check().unwrap();
    }
}

proptest! {
    #[test]
    fn filter_is_idempotent_and_leaves_monotone_curves(
        tail in proptest::collection::vec(0.0f64..100.0, 1..30)
    ) {
        let mut values = vec![0.0];
        values.extend(tail);
        let once = filter_outliers(&curve_of(&values));
        prop_assert_eq!(&filter_outliers(&once), &once);
        let kept: Vec<f64> = once.points.iter().filter(|p| p.valid).map(|p| p.distortion).collect();
        prop_assert!(kept.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*kept.last().unwrap(), *values.last().unwrap());

        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let monotone = curve_of(&sorted);
        prop_assert_eq!(filter_outliers(&monotone), monotone);
    }
}
