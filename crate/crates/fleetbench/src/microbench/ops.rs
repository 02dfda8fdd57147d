//! Arithmetic-operation latency and bogomflops kernels.
//!
//! Each operation is timed as a dependent chain (every result feeds the next
//! operand) so superscalar overlap cannot hide latency. Chains are unrolled
//! by a fixed factor to amortize loop control. Operands are loaded through
//! `black_box` so the compiler can neither fold the chain nor strength-reduce
//! divisions into multiplies.
//!
//! Operand constants keep every chain trap-free: integer accumulators stay
//! positive and bounded, float multiply/divide chains alternate exact x2/x0.5
//! steps so values never drift toward denormals or infinities, and float add
//! chains grow by 1.0 per step, far from overflow at any feasible batch size.

use std::hint::black_box;
use std::ops::{Add, Div, Mul};

use super::{Harness, LatencyMeasurement, MicrobenchError, NumClass, OpKind};

const UNROLL: u64 = 16;

fn chain<T: Copy>(iters: u64, seed: T, mut step: impl FnMut(T) -> T) -> T {
    let mut acc = seed;
    for _ in 0..iters / UNROLL {
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
        acc = step(acc);
    }
    for _ in 0..iters % UNROLL {
        acc = step(acc);
    }
    acc
}

/// Chain alternating between two operands whose effects cancel pairwise.
fn chain_pair<T: Copy>(iters: u64, seed: T, x: T, y: T, mut op: impl FnMut(T, T) -> T) -> T {
    let mut acc = seed;
    let pairs = iters / 2;
    for _ in 0..pairs / 8 {
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
        acc = op(acc, x);
        acc = op(acc, y);
    }
    for _ in 0..pairs % 8 {
        acc = op(acc, x);
        acc = op(acc, y);
    }
    if iters % 2 == 1 {
        acc = op(acc, x);
    }
    acc
}

fn int_add(iters: u64) -> u64 {
    let c = black_box(0x9E37_79B1u32 as i32);
    chain(iters, black_box(0x1234_5671i32), |a| a.wrapping_add(c)) as u32 as u64
}

fn int_mul(iters: u64) -> u64 {
    let c = black_box(0x0001_9661i32); // odd, so the accumulator keeps cycling
    chain(iters, black_box(0x1234_5671i32), |a| a.wrapping_mul(c)) as u32 as u64
}

fn int_div(iters: u64) -> u64 {
    let d = black_box(3i32);
    let b = black_box(1_000_003i32);
    chain(iters, black_box(1_500_000i32), |a| a / d + b) as u32 as u64
}

fn int_mod(iters: u64) -> u64 {
    let m = black_box(1_000_003i32);
    let b = black_box(12_345i32);
    chain(iters, black_box(777_777_777i32), |a| a % m + b) as u32 as u64
}

fn int64_add(iters: u64) -> u64 {
    let c = black_box(0x9E37_79B9_7F4A_7C15u64 as i64);
    chain(iters, black_box(0x1234_5678_9ABC_DEF1i64), |a| a.wrapping_add(c)) as u64
}

fn int64_mul(iters: u64) -> u64 {
    let c = black_box(0x0000_0001_9660_9E3Bi64);
    chain(iters, black_box(0x1234_5678_9ABC_DEF1i64), |a| a.wrapping_mul(c)) as u64
}

fn int64_div(iters: u64) -> u64 {
    let d = black_box(3i64);
    let b = black_box(1_000_000_000_003i64);
    chain(iters, black_box(1_500_000_000_000i64), |a| a / d + b) as u64
}

fn int64_mod(iters: u64) -> u64 {
    let m = black_box(1_000_000_000_003i64);
    let b = black_box(987_654i64);
    chain(iters, black_box(777_777_777_777_777i64), |a| a % m + b) as u64
}

fn float_add(iters: u64) -> u64 {
    let k = black_box(1.0f32);
    chain(iters, black_box(1.0f32), |a| a + k).to_bits() as u64
}

fn float_mul(iters: u64) -> u64 {
    chain_pair(iters, black_box(1.5f32), black_box(2.0f32), black_box(0.5f32), Mul::mul).to_bits()
        as u64
}

fn float_div(iters: u64) -> u64 {
    chain_pair(iters, black_box(1.5f32), black_box(2.0f32), black_box(0.5f32), Div::div).to_bits()
        as u64
}

fn double_add(iters: u64) -> u64 {
    let k = black_box(1.0f64);
    chain(iters, black_box(1.0f64), |a| a + k).to_bits()
}

fn double_mul(iters: u64) -> u64 {
    chain_pair(iters, black_box(1.5f64), black_box(2.0f64), black_box(0.5f64), Mul::mul).to_bits()
}

fn double_div(iters: u64) -> u64 {
    chain_pair(iters, black_box(1.5f64), black_box(2.0f64), black_box(0.5f64), Div::div).to_bits()
}

/// Time one (class, kind) combination; the result is nanoseconds per single
/// operation of the dependent chain.
pub fn op_latency(
    class: NumClass,
    kind: OpKind,
    harness: &Harness,
) -> Result<LatencyMeasurement, MicrobenchError> {
    if !kind.valid_for(class) {
        return Err(MicrobenchError::InvalidCombination {
            class: class.as_str().to_string(),
            kind: kind.as_str().to_string(),
        });
    }
    let body: fn(u64) -> u64 = match (class, kind) {
        (NumClass::Int, OpKind::Add) => int_add,
        (NumClass::Int, OpKind::Mul) => int_mul,
        (NumClass::Int, OpKind::Div) => int_div,
        (NumClass::Int, OpKind::Mod) => int_mod,
        (NumClass::Int64, OpKind::Add) => int64_add,
        (NumClass::Int64, OpKind::Mul) => int64_mul,
        (NumClass::Int64, OpKind::Div) => int64_div,
        (NumClass::Int64, OpKind::Mod) => int64_mod,
        (NumClass::Float, OpKind::Add) => float_add,
        (NumClass::Float, OpKind::Mul) => float_mul,
        (NumClass::Float, OpKind::Div) => float_div,
        (NumClass::Double, OpKind::Add) => double_add,
        (NumClass::Double, OpKind::Mul) => double_mul,
        (NumClass::Double, OpKind::Div) => double_div,
        (NumClass::Float | NumClass::Double, OpKind::Mod) => unreachable!("rejected above"),
    };
    let m = harness.measure(&mut |iters| body(iters))?;
    Ok(LatencyMeasurement::from_measured(
        format!("{}.{}", class.as_str(), kind.as_str()),
        m.ns_per_iter,
        &m,
    ))
}

/// Bogomflops recurrence coefficients: x' = x*Q + R contracts toward 1.0, so
/// every element stays inside [0.5, 2.0] for any number of passes.
const BOGO_Q: f64 = 0.5;
const BOGO_R: f64 = 0.5;

pub const BOGOMFLOPS_MIN_LEN: usize = 1024;

fn bogo_init(i: usize) -> f64 {
    0.5 + (i % 97) as f64 / 97.0
}

/// Time the per-element multiply-add kernel `x[i] = x[i]*q + r` over a vector
/// and report nanoseconds per element. After timing, the vector is verified
/// element-wise against an independent scalar replay of the recurrence.
pub fn bogomflops(
    class: NumClass,
    vector_length: usize,
    harness: &Harness,
) -> Result<LatencyMeasurement, MicrobenchError> {
    if vector_length < BOGOMFLOPS_MIN_LEN {
        return Err(MicrobenchError::VectorTooShort {
            len: vector_length,
            min: BOGOMFLOPS_MIN_LEN,
        });
    }
    match class {
        NumClass::Float => bogomflops_impl::<f32>(vector_length, harness),
        NumClass::Double => bogomflops_impl::<f64>(vector_length, harness),
        other => Err(MicrobenchError::InvalidCombination {
            class: other.as_str().to_string(),
            kind: "bogomflops".to_string(),
        }),
    }
}

trait BogoElem: Copy + PartialEq + Mul<Output = Self> + Add<Output = Self> {
    const NAME: &'static str;
    fn from_f64(v: f64) -> Self;
    fn bits(self) -> u64;
}

impl BogoElem for f32 {
    const NAME: &'static str = "float";
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn bits(self) -> u64 {
        self.to_bits() as u64
    }
}

impl BogoElem for f64 {
    const NAME: &'static str = "double";
    fn from_f64(v: f64) -> Self {
        v
    }
    fn bits(self) -> u64 {
        self.to_bits()
    }
}

fn bogomflops_impl<T: BogoElem>(
    len: usize,
    harness: &Harness,
) -> Result<LatencyMeasurement, MicrobenchError> {
    let mut x: Vec<T> = Vec::new();
    x.try_reserve_exact(len)
        .map_err(|_| MicrobenchError::AllocationFailure { bytes: len * std::mem::size_of::<T>() })?;
    x.extend((0..len).map(|i| T::from_f64(bogo_init(i))));

    let mut passes = 0u64;
    let m = {
        let x = &mut x;
        harness.measure(&mut |iters| {
            let q = black_box(T::from_f64(BOGO_Q));
            let r = black_box(T::from_f64(BOGO_R));
            for _ in 0..iters {
                for e in x.iter_mut() {
                    *e = *e * q + r;
                }
            }
            passes += iters;
            x[0].bits() ^ x[len - 1].bits()
        })?
    };

    // Independent scalar replay of the recurrence, element-wise exact.
    let q = T::from_f64(BOGO_Q);
    let r = T::from_f64(BOGO_R);
    for (i, &got) in x.iter().enumerate() {
        let mut expect = T::from_f64(bogo_init(i));
        for _ in 0..passes {
            expect = expect * q + r;
        }
        if expect != got {
            return Err(MicrobenchError::VerificationFailure(format!(
                "bogomflops {} element {i} diverged after {passes} passes",
                T::NAME
            )));
        }
    }

    Ok(LatencyMeasurement::from_measured(
        format!("bogomflops.{}", T::NAME),
        m.ns_per_iter / len as f64,
        &m,
    ))
}
