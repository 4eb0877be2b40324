//! Layer-adaptive unstructured pruning.
//!
//! Each prunable layer gets a rate–distortion curve: the network-output
//! distortion on a calibration set as a function of how many of its
//! smallest-magnitude weights are removed, with every other layer left
//! intact. Because these distortions add up across layers, the per-layer
//! prune counts that minimize total distortion for a global budget can be
//! found with a dynamic program over the curves.
//!
//! The crate covers the inference engine used to measure distortion, the
//! artifact formats, magnitude pruning, curve generation and filtering, the
//! allocator, and the exhaustive/additivity checks used to validate it.

pub mod alloc;
pub mod calib;
pub mod curve;
pub mod engine;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod prune;
pub mod tensor;

pub use alloc::{
    allocate, allocate_ternary, solve, uniform_plan, AllocStats, Allocation, AllocationPlan,
    BudgetSpec, DPTable, PlanEntry, Solver,
};
pub use calib::{white_noise, CalibSource, CalibrationSet};
pub use curve::{
    filter_outliers, gen_all_curves, gen_curve, measure_distortion, Aggregation, CurveGenerator,
    CurvePoint, DistortionMeter, GridLayer, RDCurve, SparsityGrid,
};
pub use engine::Trace;
pub use error::{Error, Result};
pub use model::{LayerKind, LayerSpec, ModelGraph};
pub use oracle::{
    approximation_error_sweep, brute_force_allocate, measure_additivity, measure_additivity_at,
    AdditivityRecord,
};
pub use pipeline::{iterative_schedule, model_curves, PlanOptions, RoundResult};
pub use prune::{apply_plan, prune_layer, prune_layers, PruneMask};
pub use tensor::Tensor;
