//! LMbench-style microbenchmark kernels: arithmetic-operation latency,
//! bogomflops, pointer-chase memory latency with cache-level detection, and
//! stream/stream2 bandwidth+latency kernels.
//!
//! All kernels are single-threaded and run on the [`crate::timing`] harness.

pub mod chase;
pub mod ops;
pub mod stream;
mod suite;

pub use chase::{
    build_chase_ring, default_size_ladder, detect_cache_levels, memory_latency_curve, CacheLevel,
    CacheLevels, ChasePattern, ChaseRing, MemoryLatencyCurve, PointFailure,
};
pub use ops::{bogomflops, op_latency};
pub use stream::{stream2_kernel, stream_kernel, Stream2Kernel, StreamKernel, StreamMeasurement};
pub use suite::{run_full_suite, SuiteConfig};

use crate::timing::{measure_ns_per_iter, Clock, Measured, MeasurePlan, TimerProfile, TimingError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MicrobenchError {
    #[error("invalid combination: {class} has no {kind} benchmark")]
    InvalidCombination { class: String, kind: String },
    #[error("chase ring needs at least 2 slots, got {slots}")]
    SizeTooSmall { slots: u64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("working-set sizes must be strictly increasing")]
    SizesNotIncreasing,
    #[error("latency curve has {points} points, need at least 4")]
    CurveTooShort { points: usize },
    #[error("jump ratio must be > 1, got {0}")]
    BadJumpRatio(f64),
    #[error("vector length {len} is below the minimum {min}")]
    VectorTooShort { len: usize, min: usize },
    #[error("allocation of {bytes} bytes failed")]
    AllocationFailure { bytes: usize },
    #[error("kernel verification failed: {0}")]
    VerificationFailure(String),
    #[error("degenerate timing: measured latency is not positive for {0}")]
    DegenerateTiming(String),
    #[error(transparent)]
    Timing(#[from] TimingError),
}

/// The four numeric classes the operation benchmarks cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumClass {
    Int,
    Int64,
    Float,
    Double,
}

impl NumClass {
    pub const ALL: [NumClass; 4] = [NumClass::Int, NumClass::Int64, NumClass::Float, NumClass::Double];

    pub fn as_str(&self) -> &'static str {
        match self {
            NumClass::Int => "int",
            NumClass::Int64 => "int64",
            NumClass::Float => "float",
            NumClass::Double => "double",
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, NumClass::Int | NumClass::Int64)
    }
}

/// Operation kinds; `mod` is valid only for the integer classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Mul,
    Div,
    Mod,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Add, OpKind::Mul, OpKind::Div, OpKind::Mod];

    pub fn as_str(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Mod => "mod",
        }
    }

    pub fn valid_for(&self, class: NumClass) -> bool {
        !matches!(self, OpKind::Mod) || class.is_integer()
    }
}

/// One latency result plus the repetition metadata that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMeasurement {
    pub name: String,
    pub ns_per_op: f64,
    pub iterations: u64,
    pub repetitions: usize,
    pub clamped_batches: usize,
}

impl LatencyMeasurement {
    fn from_measured(name: String, ns_per_op: f64, m: &Measured) -> Self {
        LatencyMeasurement {
            name,
            ns_per_op,
            iterations: m.iterations,
            repetitions: m.repetitions,
            clamped_batches: m.clamped_batches,
        }
    }
}

/// Clock, plan and profile bundled for kernels.
pub struct Harness<'a> {
    pub clock: &'a dyn Clock,
    pub plan: MeasurePlan,
    pub profile: TimerProfile,
}

impl<'a> Harness<'a> {
    pub fn new(clock: &'a dyn Clock, plan: MeasurePlan, profile: TimerProfile) -> Self {
        Harness { clock, plan, profile }
    }

    pub fn measure(&self, body: &mut dyn FnMut(u64) -> u64) -> Result<Measured, TimingError> {
        measure_ns_per_iter(self.clock, &self.plan, &self.profile, body)
    }
}
