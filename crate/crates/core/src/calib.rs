//! Calibration inputs: real samples loaded from disk or synthetic white noise.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibSource {
    /// Samples taken from data (or read back from a file).
    Real,
    /// I.i.d. standard-normal samples from [`white_noise`].
    WhiteNoise { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    samples: Vec<Tensor>,
    source: CalibSource,
}

impl CalibrationSet {
    pub fn new(samples: Vec<Tensor>, source: CalibSource) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("calibration set is empty".into()))?;
        if let Some(bad) = samples.iter().find(|s| s.shape() != first.shape()) {
            return Err(Error::ShapeInconsistency(format!(
                "calibration samples have shapes {:?} and {:?}",
                first.shape(),
                bad.shape()
            )));
        }
        Ok(CalibrationSet { samples, source })
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        self.samples[0].shape()
    }

    pub fn source(&self) -> CalibSource {
        self.source
    }

    /// First `count` samples.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        CalibrationSet::new(
            self.samples[..count.min(self.samples.len())].to_vec(),
            self.source,
        )
    }
}

/// Standard-normal stream used for zero-data calibration.
///
/// The generator is xoshiro256** seeded through SplitMix64. Each pair of
/// 64-bit draws `(a, b)` becomes `u1 = 1 - (a >> 11)·2⁻⁵³` and
/// `u2 = (b >> 11)·2⁻⁵³`, then Box–Muller yields
/// `r·cos(2πu2)` followed by `r·sin(2πu2)` with `r = sqrt(-2 ln u1)`.
/// Values are rounded to `f32` and consumed in row-major sample order.
pub struct NormalStream {
    rng: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: Xoshiro256StarStar::seed_from_u64(seed),
            spare: None,
        }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_f64(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn next_f32(&mut self) -> f32 {
        self.next_f64() as f32
    }
}

/// `count` tensors of shape `shape` filled with i.i.d. N(0, 1) values.
pub fn white_noise(shape: &[usize], count: usize, seed: u64) -> Result<CalibrationSet> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "white-noise count must be at least 1".into(),
        ));
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "invalid sample shape {shape:?}"
        )));
    }
    let len: usize = shape.iter().product();
    let mut stream = NormalStream::new(seed);
    let samples = (0..count)
        .map(|_| {
            let data = (0..len).map(|_| stream.next_f32()).collect();
            Tensor::new(shape.to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationSet::new(samples, CalibSource::WhiteNoise { seed })
}
