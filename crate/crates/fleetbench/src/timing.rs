//! Measurement harness: injectable nanosecond clock, timer calibration,
//! loop-overhead subtraction and repetition control.
//!
//! Every kernel in `microbench` runs on this harness. Measurement is strictly
//! single-threaded: the harness never spawns work of its own, and a batch is
//! timed as one block with the clock-read overhead subtracted once.

use std::cell::Cell;
use std::hint::black_box;
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("no positive clock delta observed over {samples} read pairs; raise batch sizes")]
    AllDeltasZero { samples: usize },
    #[error(
        "iteration budget exhausted: {iterations} iterations elapsed {elapsed_ns} ns, \
         below the {min_duration_ns} ns batch floor"
    )]
    BudgetExceeded {
        iterations: u64,
        elapsed_ns: u64,
        min_duration_ns: u64,
    },
    #[error("invalid measure plan: {0}")]
    InvalidPlan(String),
    #[error("calibration needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
}

/// Monotonic nanosecond clock. Successive readings never decrease.
pub trait Clock {
    fn now(&self) -> u64;
}

/// Real hardware clock, reported as nanoseconds since construction.
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

/// Deterministic clock advancing a fixed amount per read; tests and
/// deterministic suite runs can also advance it explicitly.
pub struct MockClock {
    t: Cell<u64>,
    step: u64,
}

impl MockClock {
    pub fn new(step_per_read: u64) -> Self {
        MockClock { t: Cell::new(0), step: step_per_read }
    }

    pub fn advance(&self, ns: u64) {
        self.t.set(self.t.get() + ns);
    }
}

impl Clock for MockClock {
    fn now(&self) -> u64 {
        let v = self.t.get();
        self.t.set(v + self.step);
        v
    }
}

/// What calibration learned about a clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimerProfile {
    /// Smallest observed positive delta between consecutive reads.
    pub resolution_ns: f64,
    /// Mean cost of one clock read.
    pub read_overhead_ns: f64,
}

impl TimerProfile {
    /// Profile for a deterministic clock that is driven by the workload
    /// rather than by read cost.
    pub fn mock() -> Self {
        TimerProfile { resolution_ns: 1.0, read_overhead_ns: 0.0 }
    }
}

/// Repetition control for one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurePlan {
    /// A timed batch must run at least this long.
    pub min_duration_ns: u64,
    /// Number of batches; the median is reported. Must be odd and >= 3.
    pub repetitions: usize,
    /// Safety cap on the doubling iteration growth.
    pub max_iterations: u64,
}

impl MeasurePlan {
    pub fn new(min_duration_ns: u64, repetitions: usize, max_iterations: u64) -> Self {
        MeasurePlan { min_duration_ns, repetitions, max_iterations }
    }

    pub fn validate(&self, profile: &TimerProfile) -> Result<(), TimingError> {
        if self.repetitions < 3 || self.repetitions % 2 == 0 {
            return Err(TimingError::InvalidPlan(format!(
                "repetitions must be odd and >= 3, got {}",
                self.repetitions
            )));
        }
        if (self.min_duration_ns as f64) < 100.0 * profile.resolution_ns {
            return Err(TimingError::InvalidPlan(format!(
                "min_duration_ns {} is below 100 x resolution ({} ns)",
                self.min_duration_ns, profile.resolution_ns
            )));
        }
        if self.max_iterations == 0 {
            return Err(TimingError::InvalidPlan("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one harness measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    /// Median across batches of (elapsed - read overhead) / iterations.
    pub ns_per_iter: f64,
    /// Iterations per batch after growth.
    pub iterations: u64,
    pub repetitions: usize,
    /// Batches whose residual was negative and got clamped to zero (noise).
    pub clamped_batches: usize,
}

/// Calibrate resolution and read overhead from `samples` back-to-back read
/// pairs.
pub fn calibrate_timer(clock: &dyn Clock, samples: usize) -> Result<TimerProfile, TimingError> {
    if samples < 100 {
        return Err(TimingError::TooFewSamples(samples));
    }
    // Warm the call path so the first measured pairs are representative.
    for _ in 0..16 {
        black_box(clock.now());
    }
    let mut min_positive = u64::MAX;
    let mut sum = 0u128;
    let mut prev = clock.now();
    for _ in 0..samples {
        let next = clock.now();
        let delta = next - prev;
        sum += delta as u128;
        if delta > 0 && delta < min_positive {
            min_positive = delta;
        }
        prev = next;
    }
    if min_positive == u64::MAX {
        return Err(TimingError::AllDeltasZero { samples });
    }
    Ok(TimerProfile {
        resolution_ns: min_positive as f64,
        read_overhead_ns: sum as f64 / samples as f64,
    })
}

/// Time `body` and report nanoseconds per iteration.
///
/// The iteration count doubles until one batch lasts at least
/// `plan.min_duration_ns`, then `plan.repetitions` batches run at that count
/// and the median per-iteration value is returned. The body receives the
/// iteration count, must perform exactly that many units of work, and returns
/// a value the harness sinks so the workload cannot be elided.
pub fn measure_ns_per_iter(
    clock: &dyn Clock,
    plan: &MeasurePlan,
    profile: &TimerProfile,
    body: &mut dyn FnMut(u64) -> u64,
) -> Result<Measured, TimingError> {
    plan.validate(profile)?;

    let mut iterations = 1u64;
    loop {
        let t0 = clock.now();
        let sink = body(iterations);
        let t1 = clock.now();
        black_box(sink);
        let elapsed = t1 - t0;
        if elapsed >= plan.min_duration_ns {
            break;
        }
        if iterations >= plan.max_iterations {
            return Err(TimingError::BudgetExceeded {
                iterations,
                elapsed_ns: elapsed,
                min_duration_ns: plan.min_duration_ns,
            });
        }
        iterations = (iterations * 2).min(plan.max_iterations);
    }

    let mut values = Vec::with_capacity(plan.repetitions);
    let mut clamped = 0usize;
    for _ in 0..plan.repetitions {
        let t0 = clock.now();
        let sink = body(iterations);
        let t1 = clock.now();
        black_box(sink);
        let residual = (t1 - t0) as f64 - profile.read_overhead_ns;
        if residual < 0.0 {
            clamped += 1;
            values.push(0.0);
        } else {
            values.push(residual / iterations as f64);
        }
    }
    Ok(Measured {
        ns_per_iter: median(&mut values),
        iterations,
        repetitions: plan.repetitions,
        clamped_batches: clamped,
    })
}

/// Median of a non-empty slice of finite values; sorts in place.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    values[values.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn calibrates_fixed_step_mock() {
        let clock = MockClock::new(100);
        let profile = calibrate_timer(&clock, 200).unwrap();
        assert_eq!(profile.resolution_ns, 100.0);
        assert_eq!(profile.read_overhead_ns, 100.0);
    }

    #[test]
    fn stalled_clock_reports_all_deltas_zero() {
        let clock = MockClock::new(0);
        assert!(matches!(
            calibrate_timer(&clock, 100),
            Err(TimingError::AllDeltasZero { samples: 100 })
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let clock = MockClock::new(10);
        assert!(matches!(calibrate_timer(&clock, 99), Err(TimingError::TooFewSamples(99))));
    }

    #[test]
    fn repeated_real_calibrations_agree_within_factor_two() {
        let clock = MonotonicClock::new();
        let a = calibrate_timer(&clock, 2000).unwrap();
        let b = calibrate_timer(&clock, 2000).unwrap();
        let ratio = a.read_overhead_ns / b.read_overhead_ns;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "calibrations disagree: {a:?} vs {b:?}"
        );
    }

    #[test]
    fn workload_driven_mock_measures_exactly() {
        // The workload advances the clock 2 ns per iteration, so a batch of N
        // iterations elapses 2N ns and the result is exactly 2.0.
        let clock = MockClock::new(0);
        let plan = MeasurePlan::new(100, 3, 1 << 20);
        let profile = TimerProfile { resolution_ns: 1.0, read_overhead_ns: 0.0 };
        let measured = measure_ns_per_iter(&clock, &plan, &profile, &mut |iters| {
            clock.advance(2 * iters);
            iters
        })
        .unwrap();
        assert_eq!(measured.ns_per_iter, 2.0);
        assert_eq!(measured.iterations, 64); // first power of two with 2N >= 100
        assert_eq!(measured.clamped_batches, 0);
    }

    #[test]
    fn budget_cap_is_enforced() {
        let clock = MockClock::new(1);
        let plan = MeasurePlan::new(1_000_000, 3, 1);
        let profile = TimerProfile::mock();
        let err = measure_ns_per_iter(&clock, &plan, &profile, &mut |_| 0).unwrap_err();
        assert!(matches!(err, TimingError::BudgetExceeded { iterations: 1, .. }));
    }

    #[test]
    fn negative_residual_clamps_to_zero() {
        // Each batch elapses 200 ns (one inter-read step); the claimed 500 ns
        // read overhead drives every residual negative.
        let clock = MockClock::new(200);
        let plan = MeasurePlan::new(200, 3, 1 << 10);
        let profile = TimerProfile { resolution_ns: 2.0, read_overhead_ns: 500.0 };
        let measured = measure_ns_per_iter(&clock, &plan, &profile, &mut |_| 0).unwrap();
        assert_eq!(measured.ns_per_iter, 0.0);
        assert_eq!(measured.clamped_batches, 3);
    }

    #[test]
    fn empty_body_residual_is_within_resolution_bound() {
        let clock = MonotonicClock::new();
        let profile = calibrate_timer(&clock, 1000).unwrap();
        let plan = MeasurePlan::new(
            (100.0 * profile.resolution_ns).max(1_000_000.0) as u64,
            5,
            1 << 40,
        );
        let measured = measure_ns_per_iter(&clock, &plan, &profile, &mut |iters| {
            let mut s = 0u64;
            for i in 0..iters {
                s = s.wrapping_add(black_box(i));
            }
            s
        })
        .unwrap();
        let bound = 1.0f64.max(2.0 * profile.resolution_ns);
        assert!(
            measured.ns_per_iter <= bound,
            "residual {} ns exceeds {} ns",
            measured.ns_per_iter,
            bound
        );
    }

    #[test]
    fn plan_validation_rejects_bad_shapes() {
        let profile = TimerProfile { resolution_ns: 10.0, read_overhead_ns: 10.0 };
        assert!(MeasurePlan::new(1000, 4, 10).validate(&profile).is_err());
        assert!(MeasurePlan::new(1000, 1, 10).validate(&profile).is_err());
        assert!(MeasurePlan::new(999, 3, 10).validate(&profile).is_err());
        assert!(MeasurePlan::new(1000, 3, 0).validate(&profile).is_err());
        assert!(MeasurePlan::new(1000, 3, 10).validate(&profile).is_ok());
    }

    proptest! {
        #[test]
        fn mock_measurements_are_deterministic(
            step in 1u64..10_000,
            reps in prop::sample::select(vec![3usize, 5, 7]),
        ) {
            let plan = MeasurePlan::new(100, reps, 1 << 20);
            let profile = TimerProfile::mock();
            let run = || {
                let clock = MockClock::new(0);
                measure_ns_per_iter(&clock, &plan, &profile, &mut |iters| {
                    clock.advance(step * iters);
                    0
                })
                .unwrap()
            };
            prop_assert_eq!(run(), run());
        }

        #[test]
        fn result_is_never_negative(
            step in 0u64..1000,
            overhead in 0.0f64..2000.0,
        ) {
            let clock = MockClock::new(0);
            let plan = MeasurePlan::new(100, 3, 1 << 20);
            let profile = TimerProfile { resolution_ns: 1.0, read_overhead_ns: overhead };
            let measured = measure_ns_per_iter(&clock, &plan, &profile, &mut |iters| {
                clock.advance(step * iters + 200);
                0
            });
            if let Ok(m) = measured {
                prop_assert!(m.ns_per_iter >= 0.0);
            }
        }

        #[test]
        fn median_shrugs_off_one_outlier(
            mut values in prop::collection::vec(0.0f64..100.0, 3..10),
            idx in any::<prop::sample::Index>(),
        ) {
            prop_assume!(values.len() % 2 == 1);
            let mut sorted = values.clone();
            let base = median(&mut sorted);
            let lo = sorted[0];
            let hi = sorted[sorted.len() - 1];
            let i = idx.index(values.len());
            values[i] = values[i] * 10.0 + 1000.0;
            let outlier = median(&mut values);
            // The perturbed median stays within the original value range.
            prop_assert!(outlier >= lo.min(base) && outlier <= hi.max(base) + 1e-9);
        }
    }
}
