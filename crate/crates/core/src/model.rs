//! Layer specifications and the ordered model graph.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Dense,
    Conv2d,
    Relu,
    MaxPool2d,
    AvgPool2d,
    Flatten,
    AddSkip,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2d => "maxpool2d",
            LayerKind::AvgPool2d => "avgpool2d",
            LayerKind::Flatten => "flatten",
            LayerKind::AddSkip => "add_skip",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dense" => LayerKind::Dense,
            "conv2d" => LayerKind::Conv2d,
            "relu" => LayerKind::Relu,
            "maxpool2d" => LayerKind::MaxPool2d,
            "avgpool2d" => LayerKind::AvgPool2d,
            "flatten" => LayerKind::Flatten,
            "add_skip" => LayerKind::AddSkip,
            other => return Err(Error::UnknownLayerKind(other.to_string())),
        })
    }

    pub fn is_prunable(self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::Conv2d)
    }
}

/// One layer of a feedforward model.
///
/// Dense weights are `[out, in]`; conv weights are `[out_ch, in_ch, kh, kw]`.
/// Biases, when present, have one entry per output unit or channel.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        weight: Tensor,
        bias: Option<Tensor>,
    },
    Conv2d {
        weight: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    AvgPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    /// Adds the output of an earlier layer to the running activation.
    AddSkip {
        source: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Conv2d { .. } => LayerKind::Conv2d,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::MaxPool2d { .. } => LayerKind::MaxPool2d,
            LayerSpec::AvgPool2d { .. } => LayerKind::AvgPool2d,
            LayerSpec::Flatten => LayerKind::Flatten,
            LayerSpec::AddSkip { .. } => LayerKind::AddSkip,
        }
    }

    pub fn weight(&self) -> Option<&Tensor> {
        match self {
            LayerSpec::Dense { weight, .. } | LayerSpec::Conv2d { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn weight_mut(&mut self) -> Option<&mut Tensor> {
        match self {
            LayerSpec::Dense { weight, .. } | LayerSpec::Conv2d { weight, .. } => Some(weight),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&Tensor> {
        match self {
            LayerSpec::Dense { bias, .. } | LayerSpec::Conv2d { bias, .. } => bias.as_ref(),
            _ => None,
        }
    }

    /// Output shape for a given input shape, or a description of why the
    /// input does not fit.
    pub(crate) fn output_shape(
        &self,
        input: &[usize],
        skip_shape: Option<&[usize]>,
    ) -> std::result::Result<Vec<usize>, String> {
        match self {
            LayerSpec::Dense { weight, bias } => {
                let ws = weight.shape();
                if ws.len() != 2 {
                    return Err(format!("dense weight must be 2-D, got {ws:?}"));
                }
                if input.len() != 1 || input[0] != ws[1] {
                    return Err(format!(
                        "dense expects a vector of length {}, got {input:?}",
                        ws[1]
                    ));
                }
                check_bias(bias.as_ref(), ws[0])?;
                Ok(vec![ws[0]])
            }
            LayerSpec::Conv2d {
                weight,
                bias,
                stride,
                padding,
            } => {
                let ws = weight.shape();
                if ws.len() != 4 {
                    return Err(format!("conv2d weight must be 4-D, got {ws:?}"));
                }
                if *stride == 0 {
                    return Err("conv2d stride must be positive".into());
                }
                if input.len() != 3 || input[0] != ws[1] {
                    return Err(format!(
                        "conv2d expects [{}, H, W] input, got {input:?}",
                        ws[1]
                    ));
                }
                check_bias(bias.as_ref(), ws[0])?;
                let h = input[1] + 2 * padding;
                let w = input[2] + 2 * padding;
                if h < ws[2] || w < ws[3] {
                    return Err(format!(
                        "kernel {}x{} larger than padded input {h}x{w}",
                        ws[2], ws[3]
                    ));
                }
                Ok(vec![
                    ws[0],
                    (h - ws[2]) / stride + 1,
                    (w - ws[3]) / stride + 1,
                ])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::MaxPool2d { kernel, stride } | LayerSpec::AvgPool2d { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err("pool kernel and stride must be positive".into());
                }
                if input.len() != 3 || input[1] < *kernel || input[2] < *kernel {
                    return Err(format!(
                        "pool with kernel {kernel} needs [C, H>={kernel}, W>={kernel}], got {input:?}"
                    ));
                }
                Ok(vec![
                    input[0],
                    (input[1] - kernel) / stride + 1,
                    (input[2] - kernel) / stride + 1,
                ])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::AddSkip { source } => match skip_shape {
                Some(s) if s == input => Ok(input.to_vec()),
                Some(s) => Err(format!(
                    "skip source {source} has shape {s:?}, running activation has {input:?}"
                )),
                None => Err(format!("skip source {source} is not an earlier layer")),
            },
        }
    }
}

fn check_bias(bias: Option<&Tensor>, outputs: usize) -> std::result::Result<(), String> {
    match bias {
        Some(b) if b.shape() != [outputs] => {
            Err(format!("bias shape {:?}, expected [{outputs}]", b.shape()))
        }
        _ => Ok(()),
    }
}

/// An ordered, topologically sorted list of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    output_shape: Vec<usize>,
}

impl ModelGraph {
    /// Builds a model and checks that every layer accepts its predecessor's
    /// output.
    pub fn new(
        name: impl Into<String>,
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "invalid input shape {input_shape:?}"
            )));
        }
        let shapes = infer_shapes(&input_shape, &layers)?;
        let output_shape = shapes
            .last()
            .cloned()
            .unwrap_or_else(|| input_shape.clone());
        Ok(ModelGraph {
            name: name.into(),
            input_shape,
            layers,
            output_shape,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Option<&LayerSpec> {
        self.layers.get(index)
    }

    /// Indices of dense and conv2d layers, in order.
    pub fn prunable_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind().is_prunable())
            .map(|(i, _)| i)
            .collect()
    }

    /// Weight count of a prunable layer.
    pub fn layer_size(&self, index: usize) -> Result<usize> {
        self.prunable_weight(index).map(Tensor::len)
    }

    /// Total weight count over prunable layers; biases are excluded.
    pub fn total_prunable(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerSpec::weight)
            .map(Tensor::len)
            .sum()
    }

    /// Zero count over prunable weights.
    pub fn total_zeros(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerSpec::weight)
            .map(Tensor::count_zeros)
            .sum()
    }

    pub fn sparsity(&self) -> f64 {
        let total = self.total_prunable();
        if total == 0 {
            0.0
        } else {
            self.total_zeros() as f64 / total as f64
        }
    }

    pub(crate) fn prunable_weight(&self, index: usize) -> Result<&Tensor> {
        self.layers
            .get(index)
            .and_then(LayerSpec::weight)
            .ok_or(Error::NotPrunable(index))
    }

    pub(crate) fn prunable_weight_mut(&mut self, index: usize) -> Result<&mut Tensor> {
        self.layers
            .get_mut(index)
            .and_then(LayerSpec::weight_mut)
            .ok_or(Error::NotPrunable(index))
    }

    /// Checks that `other` differs from `self` at most in weight and bias
    /// values.
    pub fn check_same_structure(&self, other: &ModelGraph) -> Result<()> {
        if self.input_shape != other.input_shape {
            return Err(Error::StructureMismatch(format!(
                "input shapes {:?} and {:?}",
                self.input_shape, other.input_shape
            )));
        }
        if self.layers.len() != other.layers.len() {
            return Err(Error::StructureMismatch(format!(
                "{} layers vs {} layers",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            let same = match (a, b) {
                (
                    LayerSpec::Dense {
                        weight: wa,
                        bias: ba,
                    },
                    LayerSpec::Dense {
                        weight: wb,
                        bias: bb,
                    },
                ) => wa.shape() == wb.shape() && ba.is_some() == bb.is_some(),
                (
                    LayerSpec::Conv2d {
                        weight: wa,
                        bias: ba,
                        stride: sa,
                        padding: pa,
                    },
                    LayerSpec::Conv2d {
                        weight: wb,
                        bias: bb,
                        stride: sb,
                        padding: pb,
                    },
                ) => {
                    wa.shape() == wb.shape() && ba.is_some() == bb.is_some() && sa == sb && pa == pb
                }
                _ => a == b,
            };
            if !same {
                return Err(Error::StructureMismatch(format!("layer {i} differs")));
            }
        }
        Ok(())
    }
}

/// Output shape of every layer, in order.
pub(crate) fn infer_shapes(input: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let current = shapes.last().map(Vec::as_slice).unwrap_or(input);
        let skip = match layer {
            LayerSpec::AddSkip { source } if *source < i => Some(shapes[*source].as_slice()),
            _ => None,
        };
        let out = layer
            .output_shape(current, skip)
            .map_err(|detail| Error::ShapeMismatch { layer: i, detail })?;
        shapes.push(out);
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(out: usize, inp: usize) -> LayerSpec {
        LayerSpec::Dense {
            weight: Tensor::new(vec![out, inp], vec![0.5; out * inp]).unwrap(),
            bias: Some(Tensor::zeros(vec![out])),
        }
    }

    #[test]
    fn total_prunable_excludes_bias() {
        let m = ModelGraph::new(
            "m",
            vec![4],
            vec![dense(3, 4), LayerSpec::Relu, dense(2, 3)],
        )
        .unwrap();
        assert_eq!(m.total_prunable(), 12 + 6);
        assert_eq!(m.prunable_layers(), vec![0, 2]);
        assert_eq!(m.output_shape(), &[2]);
    }

    #[test]
    fn mismatch_names_layer() {
        let err = ModelGraph::new("m", vec![4], vec![dense(3, 4), dense(2, 5)]).unwrap_err();
        match err {
            Error::ShapeMismatch { layer, .. } => assert_eq!(layer, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn skip_must_reference_earlier_layer() {
        let err = ModelGraph::new(
            "m",
            vec![4],
            vec![dense(4, 4), LayerSpec::AddSkip { source: 1 }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { layer: 1, .. }));
        ModelGraph::new(
            "m",
            vec![4],
            vec![dense(4, 4), dense(4, 4), LayerSpec::AddSkip { source: 0 }],
        )
        .unwrap();
    }

    #[test]
    fn parameter_free_layers_not_prunable() {
        let m = ModelGraph::new("m", vec![4], vec![dense(4, 4), LayerSpec::Relu]).unwrap();
        assert!(matches!(m.layer_size(1), Err(Error::NotPrunable(1))));
        assert!(matches!(m.layer_size(7), Err(Error::NotPrunable(7))));
    }
}
