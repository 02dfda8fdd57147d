//! Stream and stream2 vector kernels measuring sustainable memory bandwidth
//! and per-iteration latency.
//!
//! Arrays are initialized to known values, the kernel is timed per full pass,
//! and array contents are verified against the kernel's definition after
//! timing, never inside the timed region. Bandwidth comes from the unit
//! identity `bandwidth_MBps = 1000 * bytes_per_iter / latency_ns`.

use std::hint::black_box;

use super::{Harness, MicrobenchError};

const ELEM_BYTES: u64 = std::mem::size_of::<f64>() as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKernel {
    /// c[i] = a[i]
    Copy,
    /// b[i] = s * a[i]
    Scale,
    /// c[i] = a[i] + b[i]
    Add,
    /// a[i] = b[i] + s * c[i]
    Triad,
}

impl StreamKernel {
    pub const ALL: [StreamKernel; 4] =
        [StreamKernel::Copy, StreamKernel::Scale, StreamKernel::Add, StreamKernel::Triad];

    pub fn as_str(&self) -> &'static str {
        match self {
            StreamKernel::Copy => "copy",
            StreamKernel::Scale => "scale",
            StreamKernel::Add => "add",
            StreamKernel::Triad => "triad",
        }
    }

    /// Arrays referenced per iteration x 8 bytes.
    pub fn bytes_per_iter(&self) -> u64 {
        match self {
            StreamKernel::Copy | StreamKernel::Scale => 2 * ELEM_BYTES,
            StreamKernel::Add | StreamKernel::Triad => 3 * ELEM_BYTES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream2Kernel {
    /// a[i] = q
    Fill,
    /// a[i] = b[i]
    Copy,
    /// a[i] = a[i] + q * b[i]
    Daxpy,
    /// acc += a[i]
    Sum,
}

impl Stream2Kernel {
    pub const ALL: [Stream2Kernel; 4] =
        [Stream2Kernel::Fill, Stream2Kernel::Copy, Stream2Kernel::Daxpy, Stream2Kernel::Sum];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stream2Kernel::Fill => "fill",
            Stream2Kernel::Copy => "copy",
            Stream2Kernel::Daxpy => "daxpy",
            Stream2Kernel::Sum => "sum",
        }
    }

    pub fn bytes_per_iter(&self) -> u64 {
        match self {
            Stream2Kernel::Fill | Stream2Kernel::Sum => ELEM_BYTES,
            Stream2Kernel::Copy => 2 * ELEM_BYTES,
            Stream2Kernel::Daxpy => 3 * ELEM_BYTES,
        }
    }
}

/// Bandwidth and latency of one kernel run. The unit identity
/// `bandwidth_mbps * latency_ns = 1000 * bytes_per_iter` holds within 0.1%.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeasurement {
    pub kernel: String,
    /// MB/s with MB = 10^6 bytes.
    pub bandwidth_mbps: f64,
    /// Nanoseconds per iteration (one element across all referenced arrays).
    pub latency_ns: f64,
    pub repetitions: usize,
    pub clamped_batches: usize,
}

const INIT_A: f64 = 1.0;
const INIT_B: f64 = 2.0;
const INIT_C: f64 = 3.0;

fn alloc(n: usize, init: impl Fn(usize) -> f64) -> Result<Vec<f64>, MicrobenchError> {
    let mut v: Vec<f64> = Vec::new();
    v.try_reserve_exact(n)
        .map_err(|_| MicrobenchError::AllocationFailure { bytes: n * ELEM_BYTES as usize })?;
    v.extend((0..n).map(init));
    Ok(v)
}

fn finish(
    kernel: &str,
    bytes_per_iter: u64,
    n: usize,
    m: &crate::timing::Measured,
) -> Result<StreamMeasurement, MicrobenchError> {
    let latency_ns = m.ns_per_iter / n as f64;
    if !(latency_ns > 0.0) {
        return Err(MicrobenchError::DegenerateTiming(kernel.to_string()));
    }
    Ok(StreamMeasurement {
        kernel: kernel.to_string(),
        bandwidth_mbps: 1000.0 * bytes_per_iter as f64 / latency_ns,
        latency_ns,
        repetitions: m.repetitions,
        clamped_batches: m.clamped_batches,
    })
}

fn verify(kernel: &str, name: &str, array: &[f64], expect: impl Fn(usize) -> f64) -> Result<(), MicrobenchError> {
    for (i, &got) in array.iter().enumerate() {
        let want = expect(i);
        if got != want {
            return Err(MicrobenchError::VerificationFailure(format!(
                "{kernel}: {name}[{i}] = {got}, expected {want}"
            )));
        }
    }
    Ok(())
}

/// Run one stream kernel over arrays of `n` elements with scalar `s`.
pub fn stream_kernel(
    kernel: StreamKernel,
    n: usize,
    s: f64,
    harness: &Harness,
) -> Result<StreamMeasurement, MicrobenchError> {
    if n < 2 {
        return Err(MicrobenchError::InvalidGeometry(format!("stream length {n} is too small")));
    }
    let mut a = alloc(n, |_| INIT_A)?;
    let mut b = alloc(n, |_| INIT_B)?;
    let mut c = alloc(n, |_| INIT_C)?;

    let mut passes = 0u64;
    let m = harness.measure(&mut |iters| {
        let s = black_box(s);
        for _ in 0..iters {
            match kernel {
                StreamKernel::Copy => {
                    for (ci, &ai) in c.iter_mut().zip(a.iter()) {
                        *ci = ai;
                    }
                }
                StreamKernel::Scale => {
                    for (bi, &ai) in b.iter_mut().zip(a.iter()) {
                        *bi = s * ai;
                    }
                }
                StreamKernel::Add => {
                    for ((ci, &ai), &bi) in c.iter_mut().zip(a.iter()).zip(b.iter()) {
                        *ci = ai + bi;
                    }
                }
                StreamKernel::Triad => {
                    for ((ai, &bi), &ci) in a.iter_mut().zip(b.iter()).zip(c.iter()) {
                        *ai = bi + s * ci;
                    }
                }
            }
        }
        passes += iters;
        a[0].to_bits() ^ b[n / 2].to_bits() ^ c[n - 1].to_bits()
    })?;

    let name = kernel.as_str();
    if passes > 0 {
        match kernel {
            StreamKernel::Copy => {
                verify(name, "c", &c, |_| INIT_A)?;
                verify(name, "a", &a, |_| INIT_A)?;
                verify(name, "b", &b, |_| INIT_B)?;
            }
            StreamKernel::Scale => {
                verify(name, "b", &b, |_| s * INIT_A)?;
                verify(name, "a", &a, |_| INIT_A)?;
                verify(name, "c", &c, |_| INIT_C)?;
            }
            StreamKernel::Add => {
                verify(name, "c", &c, |_| INIT_A + INIT_B)?;
                verify(name, "a", &a, |_| INIT_A)?;
                verify(name, "b", &b, |_| INIT_B)?;
            }
            StreamKernel::Triad => {
                verify(name, "a", &a, |_| INIT_B + s * INIT_C)?;
                verify(name, "b", &b, |_| INIT_B)?;
                verify(name, "c", &c, |_| INIT_C)?;
            }
        }
    }
    finish(name, kernel.bytes_per_iter(), n, &m)
}

/// Run one stream2 kernel. `sum` reads an i-valued array and its final-pass
/// accumulator is checked against the closed form n(n-1)/2.
pub fn stream2_kernel(
    kernel: Stream2Kernel,
    n: usize,
    q: f64,
    harness: &Harness,
) -> Result<StreamMeasurement, MicrobenchError> {
    if n < 2 {
        return Err(MicrobenchError::InvalidGeometry(format!("stream2 length {n} is too small")));
    }
    let mut a = match kernel {
        Stream2Kernel::Sum => alloc(n, |i| i as f64)?,
        _ => alloc(n, |_| INIT_A)?,
    };
    let b = alloc(n, |_| INIT_B)?;

    let mut passes = 0u64;
    let mut last_sum = 0.0f64;
    let m = harness.measure(&mut |iters| {
        let q = black_box(q);
        for _ in 0..iters {
            match kernel {
                Stream2Kernel::Fill => {
                    for ai in a.iter_mut() {
                        *ai = q;
                    }
                }
                Stream2Kernel::Copy => {
                    for (ai, &bi) in a.iter_mut().zip(b.iter()) {
                        *ai = bi;
                    }
                }
                Stream2Kernel::Daxpy => {
                    for (ai, &bi) in a.iter_mut().zip(b.iter()) {
                        *ai = *ai + q * bi;
                    }
                }
                Stream2Kernel::Sum => {
                    let mut acc = 0.0f64;
                    for &ai in a.iter() {
                        acc += ai;
                    }
                    last_sum = acc;
                }
            }
        }
        passes += iters;
        a[0].to_bits() ^ a[n - 1].to_bits() ^ last_sum.to_bits()
    })?;

    let name = kernel.as_str();
    if passes > 0 {
        match kernel {
            Stream2Kernel::Fill => verify(name, "a", &a, |_| q)?,
            Stream2Kernel::Copy => verify(name, "a", &a, |_| INIT_B)?,
            Stream2Kernel::Daxpy => {
                // Replay the per-element recurrence exactly as the kernel
                // computed it.
                let mut expect = INIT_A;
                for _ in 0..passes {
                    expect = expect + q * INIT_B;
                }
                verify(name, "a", &a, |_| expect)?;
                verify(name, "b", &b, |_| INIT_B)?;
            }
            Stream2Kernel::Sum => {
                let closed_form = n as f64 * (n as f64 - 1.0) / 2.0;
                if last_sum != closed_form {
                    return Err(MicrobenchError::VerificationFailure(format!(
                        "sum accumulator {last_sum}, expected n(n-1)/2 = {closed_form}"
                    )));
                }
                verify(name, "a", &a, |i| i as f64)?;
            }
        }
    }
    finish(name, kernel.bytes_per_iter(), n, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::{MeasurePlan, MockClock, TimerProfile};
    use proptest::prelude::*;

    fn mock_harness(clock: &MockClock) -> Harness<'_> {
        Harness::new(clock, MeasurePlan::new(100, 3, 1 << 20), TimerProfile::mock())
    }

    #[test]
    fn copy_unit_identity() {
        // latency 4 ns/iter -> 1000 * 16 / 4 = 4000 MB/s
        let clock = MockClock::new(4 * 1000);
        let harness = mock_harness(&clock);
        let m = stream_kernel(StreamKernel::Copy, 1000, 2.0, &harness).unwrap();
        assert_eq!(m.latency_ns, 4.0);
        assert_eq!(m.bandwidth_mbps, 4000.0);
    }

    #[test]
    fn daxpy_unit_identity() {
        // latency 6 ns/iter -> 1000 * 24 / 6 = 4000 MB/s
        let clock = MockClock::new(6 * 1000);
        let harness = mock_harness(&clock);
        let m = stream2_kernel(Stream2Kernel::Daxpy, 1000, 2.0, &harness).unwrap();
        assert_eq!(m.latency_ns, 6.0);
        assert_eq!(m.bandwidth_mbps, 4000.0);
    }

    #[test]
    fn triad_writes_eight_everywhere() {
        let clock = MockClock::new(1000);
        let harness = mock_harness(&clock);
        // a=1, b=2, c=3, s=2 -> a[i] = 2 + 2*3 = 8; internal verify enforces it.
        let m = stream_kernel(StreamKernel::Triad, 512, 2.0, &harness).unwrap();
        assert_eq!(m.kernel, "triad");
    }

    #[test]
    fn fill_writes_q_everywhere() {
        let clock = MockClock::new(1000);
        let harness = mock_harness(&clock);
        let m = stream2_kernel(Stream2Kernel::Fill, 512, 7.0, &harness).unwrap();
        assert_eq!(m.kernel, "fill");
    }

    #[test]
    fn sum_matches_closed_form() {
        let clock = MockClock::new(1000);
        let harness = mock_harness(&clock);
        let m = stream2_kernel(Stream2Kernel::Sum, 4096, 1.0, &harness).unwrap();
        assert_eq!(m.kernel, "sum");
    }

    #[test]
    fn all_eight_kernels_verify_under_mock() {
        let clock = MockClock::new(1000);
        let harness = mock_harness(&clock);
        for k in StreamKernel::ALL {
            stream_kernel(k, 256, 2.0, &harness).unwrap();
        }
        for k in Stream2Kernel::ALL {
            stream2_kernel(k, 256, 2.0, &harness).unwrap();
        }
    }

    #[test]
    fn tiny_length_is_rejected() {
        let clock = MockClock::new(1000);
        let harness = mock_harness(&clock);
        assert!(stream_kernel(StreamKernel::Copy, 1, 2.0, &harness).is_err());
        assert!(stream2_kernel(Stream2Kernel::Sum, 0, 2.0, &harness).is_err());
    }

    #[test]
    fn real_copy_bandwidth_is_plausible() {
        let clock = crate::timing::MonotonicClock::new();
        let profile = crate::timing::calibrate_timer(&clock, 1000).unwrap();
        let plan = MeasurePlan::new((100.0 * profile.resolution_ns).max(2e6) as u64, 3, 1 << 40);
        let harness = Harness::new(&clock, plan, profile);
        let m = stream_kernel(StreamKernel::Copy, 1 << 20, 2.0, &harness).unwrap();
        assert!(
            (100.0..=1e6).contains(&m.bandwidth_mbps),
            "copy bandwidth {} MB/s outside plausible range",
            m.bandwidth_mbps
        );
    }

    proptest! {
        #[test]
        fn unit_identity_holds_for_any_step(
            step in 1u64..100_000,
            n in 2usize..512,
            stream2 in any::<bool>(),
            which in 0usize..4,
        ) {
            let clock = MockClock::new(step * 1000);
            let harness = mock_harness(&clock);
            let (m, bytes) = if stream2 {
                let k = Stream2Kernel::ALL[which];
                (stream2_kernel(k, n, 2.0, &harness).unwrap(), k.bytes_per_iter())
            } else {
                let k = StreamKernel::ALL[which];
                (stream_kernel(k, n, 2.0, &harness).unwrap(), k.bytes_per_iter())
            };
            let ideal = 1000.0 * bytes as f64;
            let err = (m.bandwidth_mbps * m.latency_ns - ideal).abs() / ideal;
            prop_assert!(err <= 0.001, "identity error {err}");
        }
    }
}
