//! On-disk artifacts.
//!
//! Models are a JSON manifest plus one blob of little-endian `f32`; every
//! tensor in the manifest records its byte offset, element count and the
//! SHA-256 of its bytes. Calibration sets are a single binary file with a
//! header and a SHA-256 trailer. Curves and audit tables are CSV; plans are
//! JSON. See `docs/FORMAT.md` for the byte layouts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alloc::{AllocationPlan, DPTable};
use crate::calib::{CalibSource, CalibrationSet};
use crate::curve::{CurvePoint, GridLayer, RDCurve, SparsityGrid};
use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec, ModelGraph};
use crate::oracle::SweepRow;
use crate::tensor::Tensor;

pub const MODEL_FORMAT: &str = "rdprune-model";
pub const MODEL_VERSION: u32 = 1;
pub const CALIB_MAGIC: &[u8; 8] = b"RDPCALIB";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRef {
    pub shape: Vec<usize>,
    /// Byte offset into the blob file.
    pub offset: usize,
    /// Number of `f32` elements.
    pub length: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub input_shape: Vec<usize>,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub total_prunable: usize,
    pub layers: Vec<LayerEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn f32_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `path` (manifest) and its blob next to it with a `.bin` extension.
pub fn save_model(model: &ModelGraph, path: &Path) -> Result<()> {
    let blob_path = path.with_extension("bin");
    let blob_name = blob_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::format(path, "manifest path has no file name"))?
        .to_string();
    let mut blob: Vec<u8> = Vec::new();
    let mut push = |t: &Tensor| {
        let bytes = f32_bytes(t.data());
        let r = BlobRef {
            shape: t.shape().to_vec(),
            offset: blob.len(),
            length: t.len(),
            sha256: sha256_hex(&bytes),
        };
        blob.extend_from_slice(&bytes);
        r
    };
    let layers = model
        .layers()
        .iter()
        .map(|layer| {
            let mut e = LayerEntry {
                kind: layer.kind().as_str().to_string(),
                weight: None,
                bias: None,
                stride: None,
                padding: None,
                kernel: None,
                source: None,
            };
            match layer {
                LayerSpec::Dense { weight, bias } => {
                    e.weight = Some(push(weight));
                    e.bias = bias.as_ref().map(&mut push);
                }
                LayerSpec::Conv2d {
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    e.weight = Some(push(weight));
                    e.bias = bias.as_ref().map(&mut push);
                    e.stride = Some(*stride);
                    e.padding = Some(*padding);
                }
                LayerSpec::MaxPool2d { kernel, stride }
                | LayerSpec::AvgPool2d { kernel, stride } => {
                    e.kernel = Some(*kernel);
                    e.stride = Some(*stride);
                }
                LayerSpec::AddSkip { source } => e.source = Some(*source),
                LayerSpec::Relu | LayerSpec::Flatten => {}
            }
            e
        })
        .collect();
    let manifest = ModelManifest {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        name: model.name().to_string(),
        input_shape: model.input_shape().to_vec(),
        blob: blob_name,
        total_prunable: model.total_prunable(),
        layers,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write(&blob_path, &blob)?;
    write(path, &json)
}

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    let manifest: ModelManifest =
        serde_json::from_slice(&read(path)?).map_err(|e| Error::format(path, e.to_string()))?;
    if manifest.format != MODEL_FORMAT || manifest.version != MODEL_VERSION {
        return Err(Error::format(
            path,
            format!(
                "unsupported format {} v{}",
                manifest.format, manifest.version
            ),
        ));
    }
    let blob_path = path.parent().unwrap_or(Path::new(".")).join(&manifest.blob);
    let blob = read(&blob_path)?;
    model_from_manifest(&manifest, &blob, path)
}

fn tensor_from(blob: &[u8], r: &BlobRef, what: String, path: &Path) -> Result<Tensor> {
    let expected: usize = r.shape.iter().product();
    if expected != r.length {
        return Err(Error::ShapeInconsistency(format!(
            "{what}: shape {:?} needs {expected} floats, blob entry holds {}",
            r.shape, r.length
        )));
    }
    let end = r
        .length
        .checked_mul(4)
        .and_then(|n| n.checked_add(r.offset))
        .filter(|&end| end <= blob.len())
        .ok_or_else(|| Error::format(path, format!("{what}: range past end of blob")))?;
    let bytes = &blob[r.offset..end];
    let computed = sha256_hex(bytes);
    if !computed.eq_ignore_ascii_case(&r.sha256) {
        return Err(Error::ChecksumMismatch {
            what,
            stored: r.sha256.clone(),
            computed,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(r.shape.clone(), data)
        .map_err(|e| Error::ShapeInconsistency(format!("{what}: {e}")))
}

/// Builds a model from a parsed manifest and its blob bytes.
pub fn model_from_manifest(
    manifest: &ModelManifest,
    blob: &[u8],
    path: &Path,
) -> Result<ModelGraph> {
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, e) in manifest.layers.iter().enumerate() {
        let kind = LayerKind::parse(&e.kind)?;
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| Error::format(path, format!("layer {i} ({}) needs `{name}`", e.kind)))
        };
        let weight = |what: &str| -> Result<Tensor> {
            let r = e.weight.as_ref().ok_or_else(|| {
                Error::format(path, format!("layer {i} ({}) needs `weight`", e.kind))
            })?;
            tensor_from(blob, r, format!("layer {i} {what}"), path)
        };
        let bias = || -> Result<Option<Tensor>> {
            e.bias
                .as_ref()
                .map(|r| tensor_from(blob, r, format!("layer {i} bias"), path))
                .transpose()
        };
        let layer = match kind {
            LayerKind::Dense => {
                let w = weight("weight")?;
                if w.rank() != 2 {
                    return Err(Error::ShapeInconsistency(format!(
                        "layer {i}: dense weight must be 2-D, got {:?}",
                        w.shape()
                    )));
                }
                LayerSpec::Dense {
                    weight: w,
                    bias: bias()?,
                }
            }
            LayerKind::Conv2d => {
                let w = weight("weight")?;
                if w.rank() != 4 {
                    return Err(Error::ShapeInconsistency(format!(
                        "layer {i}: conv2d weight must be 4-D, got {:?}",
                        w.shape()
                    )));
                }
                LayerSpec::Conv2d {
                    weight: w,
                    bias: bias()?,
                    stride: e.stride.unwrap_or(1),
                    padding: e.padding.unwrap_or(0),
                }
            }
            LayerKind::Relu => LayerSpec::Relu,
            LayerKind::Flatten => LayerSpec::Flatten,
            LayerKind::MaxPool2d | LayerKind::AvgPool2d => {
                let kernel = need(e.kernel, "kernel")?;
                let stride = e.stride.unwrap_or(kernel);
                if kind == LayerKind::MaxPool2d {
                    LayerSpec::MaxPool2d { kernel, stride }
                } else {
                    LayerSpec::AvgPool2d { kernel, stride }
                }
            }
            LayerKind::AddSkip => LayerSpec::AddSkip {
                source: need(e.source, "source")?,
            },
        };
        if !kind.is_prunable() && (e.weight.is_some() || e.bias.is_some()) {
            return Err(Error::format(
                path,
                format!("layer {i} ({}) carries parameters", e.kind),
            ));
        }
        layers.push(layer);
    }
    let model = ModelGraph::new(manifest.name.clone(), manifest.input_shape.clone(), layers)?;
    if model.total_prunable() != manifest.total_prunable {
        return Err(Error::ShapeInconsistency(format!(
            "manifest total_prunable {} but weights hold {}",
            manifest.total_prunable,
            model.total_prunable()
        )));
    }
    Ok(model)
}

/// `RDPCALIB`, u32 count, u32 rank, u32 dims, samples as LE f32, then the
/// SHA-256 of everything before it.
pub fn save_calib(set: &CalibrationSet, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CALIB_MAGIC);
    bytes.extend_from_slice(&(set.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(set.shape().len() as u32).to_le_bytes());
    for &d in set.shape() {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in set.samples() {
        bytes.extend(s.data().iter().flat_map(|v| v.to_le_bytes()));
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    write(path, &bytes)
}

pub fn load_calib(path: &Path) -> Result<CalibrationSet> {
    let bytes = read(path)?;
    let bad = |detail: &str| Error::format(path, detail);
    if bytes.len() < CALIB_MAGIC.len() + 8 + 32 || &bytes[..8] != CALIB_MAGIC {
        return Err(bad("missing calibration header"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    let computed = Sha256::digest(body);
    if computed.as_slice() != trailer {
        return Err(Error::ChecksumMismatch {
            what: path.display().to_string(),
            stored: hex::encode(trailer),
            computed: hex::encode(computed),
        });
    }
    let u32_at = |pos: usize| -> Result<usize> {
        body.get(pos..pos + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| bad("truncated header"))
    };
    let count = u32_at(8)?;
    let rank = u32_at(12)?;
    let shape = (0..rank)
        .map(|i| u32_at(16 + 4 * i))
        .collect::<Result<Vec<_>>>()?;
    let header = 16 + 4 * rank;
    let per: usize = shape.iter().product();
    if body.len() != header + count * per * 4 {
        return Err(Error::ShapeInconsistency(format!(
            "{}: {count} samples of {shape:?} need {} data bytes, file has {}",
            path.display(),
            count * per * 4,
            body.len().saturating_sub(header)
        )));
    }
    let samples = body[header..]
        .chunks_exact(per * 4)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Tensor::new(shape.clone(), data)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::ShapeInconsistency(e.to_string()))?;
    CalibrationSet::new(samples, CalibSource::Real)
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    layer_index: usize,
    grid_index: usize,
    pruned_count: usize,
    distortion: f64,
    valid_flag: u8,
}

pub fn write_curves(curves: &[RDCurve], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for c in curves {
        for p in &c.points {
            w.serialize(CurveRow {
                layer_index: c.layer_index,
                grid_index: p.grid_index,
                pruned_count: p.pruned_count,
                distortion: p.distortion,
                valid_flag: p.valid as u8,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Vec<RDCurve>> {
    let mut r = csv::Reader::from_reader(fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let mut curves: Vec<RDCurve> = Vec::new();
    for row in r.deserialize() {
        let row: CurveRow = row.map_err(|e| Error::format(path, e.to_string()))?;
        if curves.last().map(|c| c.layer_index) != Some(row.layer_index) {
            if curves.iter().any(|c| c.layer_index == row.layer_index) {
                return Err(Error::format(
                    path,
                    format!("rows for layer {} are not contiguous", row.layer_index),
                ));
            }
            curves.push(RDCurve {
                layer_index: row.layer_index,
                points: Vec::new(),
            });
        }
        let curve = curves.last_mut().expect("pushed above");
        if row.grid_index != curve.points.len() || row.valid_flag > 1 {
            return Err(Error::format(
                path,
                format!(
                    "layer {} row {} out of order or bad flag",
                    row.layer_index, row.grid_index
                ),
            ));
        }
        curve.points.push(CurvePoint {
            grid_index: row.grid_index,
            pruned_count: row.pruned_count,
            distortion: row.distortion,
            valid: row.valid_flag == 1,
        });
    }
    Ok(curves)
}

/// Recovers the grid a set of curves was generated on: level 0 gives each
/// layer's base, the last level its size.
pub fn grid_from_curves(curves: &[RDCurve]) -> Result<SparsityGrid> {
    let first = curves.first().ok_or(Error::EmptyCurves)?;
    let steps = first
        .points
        .len()
        .checked_sub(1)
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::BadCurve {
            layer: first.layer_index,
            detail: "fewer than two points".into(),
        })?;
    let layers = curves
        .iter()
        .map(|c| {
            if c.points.len() != steps + 1 {
                return Err(Error::BadCurve {
                    layer: c.layer_index,
                    detail: format!("{} points, expected {}", c.points.len(), steps + 1),
                });
            }
            Ok(GridLayer {
                layer_index: c.layer_index,
                size: c.points[steps].pruned_count,
                base: c.points[0].pruned_count,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = SparsityGrid::from_layers(steps, layers)?;
    for (pos, c) in curves.iter().enumerate() {
        if let Some(p) = c
            .points
            .iter()
            .find(|p| p.pruned_count != grid.count(pos, p.grid_index))
        {
            return Err(Error::BadCurve {
                layer: c.layer_index,
                detail: format!(
                    "level {} count {} is off the grid",
                    p.grid_index, p.pruned_count
                ),
            });
        }
    }
    Ok(grid)
}

pub fn write_plan(plan: &AllocationPlan, path: &Path) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(plan)?;
    json.push(b'\n');
    write(path, &json)
}

pub fn read_plan(path: &Path) -> Result<AllocationPlan> {
    serde_json::from_slice(&read(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Dumps every DP row: `row,bin,g,s` with `inf` for unreachable states.
pub fn write_dp_trace(table: &DPTable, path: &Path) -> Result<()> {
    let mut out = String::from("row,bin,g,s\n");
    for i in 0..table.rows() {
        for (b, (g, s)) in table.row_g(i).iter().zip(table.row_s(i)).enumerate() {
            out.push_str(&format!("{i},{b},{g},{s}\n"));
        }
    }
    write(path, out.as_bytes())
}

pub fn write_additivity(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = String::from(
        "sparsity,layer_a,layer_b,count_a,count_b,individual_a,individual_b,sum_individual,joint,relative_residual\n",
    );
    for row in rows {
        let r = &row.record;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.sparsity,
            r.layers[0],
            r.layers[1],
            r.counts[0],
            r.counts[1],
            r.individual[0],
            r.individual[1],
            r.sum_individual,
            r.joint,
            r.relative_residual
        ));
    }
    write(path, out.as_bytes())
}

/// One exhaustive-versus-DP comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAuditRow {
    pub ratio: f64,
    pub dp_objective: f64,
    pub oracle_objective: f64,
    pub dp_plan: Vec<usize>,
    pub oracle_plan: Vec<usize>,
}

impl OracleAuditRow {
    pub fn matches(&self) -> bool {
        self.dp_objective == self.oracle_objective
    }
}

pub fn write_oracle_audit(rows: &[OracleAuditRow], path: &Path) -> Result<()> {
    let join = |v: &[usize]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = String::from("ratio,dp_objective,oracle_objective,match,dp_plan,oracle_plan\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.ratio,
            r.dp_objective,
            r.oracle_objective,
            r.matches() as u8,
            join(&r.dp_plan),
            join(&r.oracle_plan)
        ));
    }
    write(path, out.as_bytes())
}

/// Creates `dir` and returns `dir/name`.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.join(name))
}
