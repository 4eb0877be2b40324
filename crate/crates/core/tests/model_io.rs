mod common;

use std::fs;

use common::{fixture, fixture_dir, Rng, FIXTURES};
use rdprune_core::io::{
    load_calib, load_model, read_curves, read_plan, save_calib, save_model, write_curves,
    write_plan,
};
use rdprune_core::{
    allocate, filter_outliers, white_noise, Aggregation, BudgetSpec, CalibSource, CalibrationSet,
    CurveGenerator, Error, LayerSpec, ModelGraph, SparsityGrid, Tensor,
};
use serde_json::Value;

fn bits(t: &Tensor) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn fixtures_match_framework_outputs() {
    for name in FIXTURES {
        let (model, calib) = fixture(name);
        let text = fs::read_to_string(fixture_dir(name).join("reference.json")).unwrap();
        let reference: Value = serde_json::from_str(&text).unwrap();
        let outputs = reference["outputs"].as_array().unwrap();
        assert_eq!(
            outputs.len(),
            reference["samples"].as_u64().unwrap() as usize
        );
        for (x, expected) in calib.samples().iter().zip(outputs) {
            let expected: Vec<f64> = expected
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect();
            let got = model.forward(x).unwrap();
            assert_eq!(got.len(), expected.len());
            let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = got
                .data()
                .iter()
                .zip(&expected)
                .fold(0.0f64, |m, (a, b)| m.max((*a as f64 - b).abs()));
            assert!(
                err <= 1e-4 * scale,
                "{name}: max error {err} vs scale {scale}"
            );
        }
    }
}

#[test]
fn total_prunable_matches_manifest_shapes() {
    for name in FIXTURES {
        let text = fs::read_to_string(fixture_dir(name).join("model.json")).unwrap();
        let manifest: Value = serde_json::from_str(&text).unwrap();
        let counted: u64 = manifest["layers"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|l| matches!(l["kind"].as_str(), Some("dense" | "conv2d")))
            .map(|l| {
                l["weight"]["shape"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|d| d.as_u64().unwrap())
                    .product::<u64>()
            })
            .sum();
        let (model, _) = fixture(name);
        assert_eq!(model.total_prunable() as u64, counted, "{name}");
        assert_eq!(manifest["total_prunable"].as_u64(), Some(counted), "{name}");
    }
}

#[test]
fn model_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for name in FIXTURES {
        let (model, calib) = fixture(name);
        let path = dir.path().join(format!("{name}.json"));
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, model);
        for x in calib.samples().iter().take(4) {
            assert_eq!(
                bits(&back.forward(x).unwrap()),
                bits(&model.forward(x).unwrap())
            );
        }
    }
}

#[test]
fn calibration_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (_, calib) = fixture("cnn_toy");
    let path = dir.path().join("calib.bin");
    save_calib(&calib, &path).unwrap();
    assert_eq!(
        fs::read(&path).unwrap(),
        fs::read(fixture_dir("cnn_toy").join("calib.bin")).unwrap()
    );
    let back = load_calib(&path).unwrap();
    assert_eq!(back.len(), calib.len());
    for (a, b) in back.samples().iter().zip(calib.samples()) {
        assert_eq!(bits(a), bits(b));
    }

    let noise = white_noise(&[3, 4, 4], 17, 9).unwrap();
    save_calib(&noise, &path).unwrap();
    let back = load_calib(&path).unwrap();
    assert_eq!(back.source(), CalibSource::Real);
    assert_eq!(back.shape(), &[3, 4, 4]);
    for (a, b) in back.samples().iter().zip(noise.samples()) {
        assert_eq!(bits(a), bits(b));
    }
}

fn write_dense_manifest(dir: &std::path::Path, shape: &[usize], floats: usize, total: usize) {
    use sha2::Digest;
    let blob: Vec<u8> = (0..floats).flat_map(|i| (i as f32).to_le_bytes()).collect();
    let sha = hex::encode(sha2::Sha256::digest(&blob));
    let manifest = serde_json::json!({
        "format": "rdprune-model",
        "version": 1,
        "name": "bad",
        "input_shape": [shape[1]],
        "blob": "model.bin",
        "total_prunable": total,
        "layers": [{"kind": "dense", "weight": {"shape": shape, "offset": 0, "length": floats, "sha256": sha}}]
    });
    fs::write(dir.join("model.bin"), blob).unwrap();
    fs::write(dir.join("model.json"), manifest.to_string()).unwrap();
}

#[test]
fn manifest_shape_must_match_blob_length() {
    let dir = tempfile::tempdir().unwrap();
    write_dense_manifest(dir.path(), &[3, 4], 10, 12);
    let err = load_model(&dir.path().join("model.json")).unwrap_err();
    assert!(matches!(err, Error::ShapeInconsistency(_)), "{err}");

    write_dense_manifest(dir.path(), &[3, 4], 12, 12);
    assert_eq!(
        load_model(&dir.path().join("model.json"))
            .unwrap()
            .total_prunable(),
        12
    );

    write_dense_manifest(dir.path(), &[3, 4], 12, 11);
    let err = load_model(&dir.path().join("model.json")).unwrap_err();
    assert!(matches!(err, Error::ShapeInconsistency(_)), "{err}");
}

#[test]
fn corrupted_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (model, calib) = fixture("mlp_toy");
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let blob_path = dir.path().join("model.bin");
    let mut blob = fs::read(&blob_path).unwrap();
    blob[100] ^= 0x01;
    fs::write(&blob_path, &blob).unwrap();
    let err = load_model(&path).unwrap_err();
    assert!(matches!(err, Error::ChecksumMismatch { .. }), "{err}");

    save_model(&model, &path).unwrap();
    let text = fs::read_to_string(&path)
        .unwrap()
        .replacen("\"relu\"", "\"gelu\"", 1);
    fs::write(&path, text).unwrap();
    let err = load_model(&path).unwrap_err();
    assert!(matches!(err, Error::UnknownLayerKind(_)), "{err}");

    let cpath = dir.path().join("calib.bin");
    save_calib(&calib, &cpath).unwrap();
    let mut bytes = fs::read(&cpath).unwrap();
    bytes[40] ^= 0x80;
    fs::write(&cpath, &bytes).unwrap();
    let err = load_calib(&cpath).unwrap_err();
    assert!(matches!(err, Error::ChecksumMismatch { .. }), "{err}");

    fs::write(&cpath, b"RDPCALIB").unwrap();
    assert!(load_calib(&cpath).unwrap_err().is_format());
    assert!(matches!(
        load_model(&dir.path().join("missing.json")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn curves_and_plan_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (model, calib) = fixture("mlp_toy");
    let calib = calib.truncated(16).unwrap();
    let grid = SparsityGrid::new(&model, 20).unwrap();
    let curves: Vec<_> = CurveGenerator::new(&model, &calib, Aggregation::Mean)
        .unwrap()
        .all(&grid, Some(1))
        .unwrap()
        .iter()
        .map(filter_outliers)
        .collect();
    let cpath = dir.path().join("curves.csv");
    write_curves(&curves, &cpath).unwrap();
    let back = read_curves(&cpath).unwrap();
    assert_eq!(back, curves);
    for (a, b) in back.iter().zip(&curves) {
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_eq!(p.distortion.to_bits(), q.distortion.to_bits());
        }
    }
    let rebuilt = rdprune_core::io::grid_from_curves(&back).unwrap();
    assert_eq!(rebuilt.steps(), 20);
    assert_eq!(rebuilt.remaining(), grid.remaining());

    let budget = BudgetSpec::from_ratio(0.4, &grid, None).unwrap();
    let plan = allocate(&curves, &grid, &budget).unwrap().plan;
    let ppath = dir.path().join("plan.json");
    write_plan(&plan, &ppath).unwrap();
    let read = read_plan(&ppath).unwrap();
    assert_eq!(read, plan);
    assert_eq!(read.objective.to_bits(), plan.objective.to_bits());
}

/// Direct definition over an explicitly zero-padded input.
fn naive_conv(
    w: &[f32],
    wshape: [usize; 4],
    b: &[f32],
    x: &[f32],
    xshape: [usize; 3],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let [oc, ic, kh, kw] = wshape;
    let [_, h, wd] = xshape;
    let (ph, pw) = (h + 2 * pad, wd + 2 * pad);
    let mut padded = vec![0.0f64; ic * ph * pw];
    for c in 0..ic {
        for y in 0..h {
            for z in 0..wd {
                padded[(c * ph + y + pad) * pw + z + pad] = x[(c * h + y) * wd + z] as f64;
            }
        }
    }
    let (oh, ow) = ((ph - kh) / stride + 1, (pw - kw) / stride + 1);
    let mut out = Vec::new();
    for o in 0..oc {
        for y in 0..oh {
            for z in 0..ow {
                let mut acc = b[o] as f64;
                for c in 0..ic {
                    for i in 0..kh {
                        for j in 0..kw {
                            acc += w[((o * ic + c) * kh + i) * kw + j] as f64
                                * padded[(c * ph + y * stride + i) * pw + z * stride + j];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

#[test]
fn conv_matches_naive_definition() {
    let mut rng = Rng::new(50);
    for case in 0..50 {
        let (oc, ic) = (rng.range(1, 4), rng.range(1, 3));
        let (kh, kw) = (rng.range(1, 3), rng.range(1, 3));
        let (stride, pad) = (rng.range(1, 2), rng.range(0, 1));
        let (h, w) = (rng.range(kh, 7), rng.range(kw, 7));
        let wdata = rng.f32s(oc * ic * kh * kw, 1.0);
        let bdata = rng.f32s(oc, 0.5);
        let xdata = rng.f32s(ic * h * w, 2.0);
        let layer = LayerSpec::Conv2d {
            weight: Tensor::new(vec![oc, ic, kh, kw], wdata.clone()).unwrap(),
            bias: Some(Tensor::vector(bdata.clone())),
            stride,
            padding: pad,
        };
        let model = ModelGraph::new("conv", vec![ic, h, w], vec![layer]).unwrap();
        let got = model
            .forward(&Tensor::new(vec![ic, h, w], xdata.clone()).unwrap())
            .unwrap();
        let want = naive_conv(
            &wdata,
            [oc, ic, kh, kw],
            &bdata,
            &xdata,
            [ic, h, w],
            stride,
            pad,
        );
        assert_eq!(got.len(), want.len(), "case {case}");
        for (a, b) in got.data().iter().zip(&want) {
            assert!(
                (*a as f64 - b).abs() <= 1e-5 * b.abs().max(1.0),
                "case {case}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn bias_free_linear_model_is_linear() {
    let mut rng = Rng::new(7);
    let layers = vec![
        LayerSpec::Conv2d {
            weight: Tensor::new(vec![3, 2, 3, 3], rng.f32s(54, 0.5)).unwrap(),
            bias: None,
            stride: 1,
            padding: 1,
        },
        LayerSpec::AvgPool2d {
            kernel: 2,
            stride: 2,
        },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            weight: Tensor::new(vec![5, 12], rng.f32s(60, 0.5)).unwrap(),
            bias: None,
        },
    ];
    let model = ModelGraph::new("linear", vec![2, 4, 4], layers).unwrap();
    for _ in 0..20 {
        let x = rng.f32s(32, 1.0);
        let y = rng.f32s(32, 1.0);
        let (a, b) = (rng.unit() as f32 * 2.0 - 1.0, rng.unit() as f32 * 2.0 - 1.0);
        let mix: Vec<f32> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let t = |v: Vec<f32>| Tensor::new(vec![2, 4, 4], v).unwrap();
        let fx = model.forward(&t(x)).unwrap();
        let fy = model.forward(&t(y)).unwrap();
        let fm = model.forward(&t(mix)).unwrap();
        for ((m, p), q) in fm.data().iter().zip(fx.data()).zip(fy.data()) {
            let want = a * p + b * q;
            assert!(
                (m - want).abs() <= 1e-5 * want.abs().max(1.0),
                "{m} vs {want}"
            );
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let (model, calib) = fixture("cnn_toy");
    let x = &calib.samples()[3];
    let first = bits(&model.forward(x).unwrap());
    for _ in 0..3 {
        assert_eq!(bits(&model.forward(x).unwrap()), first);
    }
    let empty: Result<CalibrationSet, _> = CalibrationSet::new(vec![], CalibSource::Real);
    assert!(empty.is_err());
}
