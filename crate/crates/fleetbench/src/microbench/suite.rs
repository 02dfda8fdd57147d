//! Runs the full metric set sequentially and emits benchmark records.

use super::chase::{detect_cache_levels, memory_latency_curve, ChasePattern};
use super::ops::{bogomflops, op_latency};
use super::stream::{stream2_kernel, stream_kernel, Stream2Kernel, StreamKernel};
use super::{CacheLevels, Harness, LatencyMeasurement, NumClass, OpKind};
use crate::results::{metric, BenchmarkRecord, Unit, UtcTimestamp};

/// Suite parameters. Defaults match a desk-scale run on one machine.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub hostname: String,
    pub site: String,
    pub timestamp: UtcTimestamp,
    /// Working-set ladder for the memory-latency curve; empty skips the
    /// family (flagged missing).
    pub mem_sizes: Vec<u64>,
    pub mem_pattern: ChasePattern,
    pub stride_bytes: u64,
    /// Interleaved sweeps over the ladder; each point reports the median.
    pub mem_sweeps: usize,
    /// Stream array length; raised per kernel when cache levels are known so
    /// the touched bytes overflow the outermost detected cache by >= 4x.
    pub stream_len: usize,
    pub bogomflops_len: usize,
    pub stream_scalar: f64,
    pub seed: u64,
    pub jump_ratio: f64,
}

impl SuiteConfig {
    pub fn new(hostname: &str, site: &str, timestamp: UtcTimestamp) -> Self {
        SuiteConfig {
            hostname: hostname.to_string(),
            site: site.to_string(),
            timestamp,
            mem_sizes: super::chase::default_size_ladder(),
            mem_pattern: ChasePattern::RandomPermutation,
            stride_bytes: 64,
            mem_sweeps: super::chase::DEFAULT_CURVE_SWEEPS,
            stream_len: 1_000_000,
            bogomflops_len: 65_536,
            stream_scalar: 2.0,
            seed: 0,
            jump_ratio: 1.5,
        }
    }
}

/// Run every metric family in a fixed order. Individual metric failures are
/// recorded as missing rows with the reason; the suite continues.
pub fn run_full_suite(config: &SuiteConfig, harness: &Harness) -> Vec<BenchmarkRecord> {
    let mut records = Vec::new();
    let ok = |metric_name: &str, class: &str, kind: &str, value: f64, unit: Unit, note: String| {
        BenchmarkRecord::ok(
            &config.hostname,
            &config.site,
            config.timestamp,
            metric_name,
            class,
            kind,
            value,
            unit,
            note,
        )
    };
    let missing = |metric_name: &str, class: &str, kind: &str, unit: Unit, reason: String| {
        BenchmarkRecord::missing(
            &config.hostname,
            &config.site,
            config.timestamp,
            metric_name,
            class,
            kind,
            unit,
            reason,
        )
    };
    let latency_note = |m: &LatencyMeasurement| {
        let mut note = format!("chained;reps={}", m.repetitions);
        if m.clamped_batches > 0 {
            note.push_str(&format!(";clamped={}", m.clamped_batches));
        }
        note
    };

    // Operation latencies: 4 classes x add/mul/div plus int/int64 mod.
    for class in NumClass::ALL {
        for kind in OpKind::ALL {
            if !kind.valid_for(class) {
                continue;
            }
            match op_latency(class, kind, harness) {
                Ok(m) => records.push(ok(
                    metric::OP_LATENCY,
                    class.as_str(),
                    kind.as_str(),
                    m.ns_per_op,
                    Unit::Ns,
                    latency_note(&m),
                )),
                Err(e) => records.push(missing(
                    metric::OP_LATENCY,
                    class.as_str(),
                    kind.as_str(),
                    Unit::Ns,
                    e.to_string(),
                )),
            }
        }
    }

    for class in [NumClass::Float, NumClass::Double] {
        match bogomflops(class, config.bogomflops_len, harness) {
            Ok(m) => records.push(ok(
                metric::BOGOMFLOPS,
                class.as_str(),
                "",
                m.ns_per_op,
                Unit::Ns,
                format!("madd;reps={};len={}", m.repetitions, config.bogomflops_len),
            )),
            Err(e) => {
                records.push(missing(metric::BOGOMFLOPS, class.as_str(), "", Unit::Ns, e.to_string()))
            }
        }
    }

    // Memory-latency curve, then cache levels detected from it.
    let mut cache_levels: Option<CacheLevels> = None;
    if config.mem_sizes.is_empty() {
        records.push(missing(metric::MEM_LATENCY, "", "", Unit::Ns, "size ladder empty".into()));
        records.push(missing(metric::CACHE_LEVEL, "", "", Unit::Bytes, "no latency curve".into()));
    } else {
        match memory_latency_curve(
            &config.mem_sizes,
            config.mem_pattern,
            config.stride_bytes,
            config.seed,
            config.mem_sweeps,
            harness,
        ) {
            Ok((curve, failures)) => {
                let note = format!("pattern={};seed={}", curve.pattern.as_str(), curve.seed);
                for &(size, ns) in &curve.points {
                    records.push(ok(
                        metric::MEM_LATENCY,
                        "",
                        &size.to_string(),
                        ns,
                        Unit::Ns,
                        note.clone(),
                    ));
                }
                for f in &failures {
                    records.push(missing(
                        metric::MEM_LATENCY,
                        "",
                        &f.working_set_bytes.to_string(),
                        Unit::Ns,
                        f.reason.clone(),
                    ));
                }
                match detect_cache_levels(&curve, config.jump_ratio) {
                    Ok(levels) => {
                        for (i, level) in levels.levels.iter().enumerate() {
                            let kind = format!("{}", i + 1);
                            let lat = crate::results::format_value(level.latency_ns);
                            match level.capacity_bytes {
                                Some(cap) => records.push(ok(
                                    metric::CACHE_LEVEL,
                                    "",
                                    &kind,
                                    cap as f64,
                                    Unit::Bytes,
                                    format!("latency_ns={lat}"),
                                )),
                                None => records.push(BenchmarkRecord {
                                    value: None,
                                    ..ok(
                                        metric::CACHE_LEVEL,
                                        "",
                                        &kind,
                                        0.0,
                                        Unit::Bytes,
                                        format!("unbounded;latency_ns={lat}"),
                                    )
                                }),
                            }
                        }
                        cache_levels = Some(levels);
                    }
                    Err(e) => records.push(missing(
                        metric::CACHE_LEVEL,
                        "",
                        "",
                        Unit::Bytes,
                        e.to_string(),
                    )),
                }
            }
            Err(e) => {
                records.push(missing(metric::MEM_LATENCY, "", "", Unit::Ns, e.to_string()));
                records.push(missing(metric::CACHE_LEVEL, "", "", Unit::Bytes, "no latency curve".into()));
            }
        }
    }

    // Outermost finite cache capacity, if detection produced one.
    let outermost_cache = cache_levels
        .as_ref()
        .and_then(|c| c.levels.iter().rev().find_map(|l| l.capacity_bytes));
    let stream_len = |bytes_per_iter: u64| -> usize {
        let base = config.stream_len;
        match outermost_cache {
            Some(cap) => base.max((4 * cap / bytes_per_iter) as usize),
            None => base,
        }
    };

    for kernel in StreamKernel::ALL {
        let n = stream_len(kernel.bytes_per_iter());
        match stream_kernel(kernel, n, config.stream_scalar, harness) {
            Ok(m) => {
                let note = format!("reps={};n={n}", m.repetitions);
                records.push(ok(
                    metric::STREAM_BW,
                    "",
                    kernel.as_str(),
                    m.bandwidth_mbps,
                    Unit::MBps,
                    note.clone(),
                ));
                records.push(ok(metric::STREAM_LAT, "", kernel.as_str(), m.latency_ns, Unit::Ns, note));
            }
            Err(e) => {
                records.push(missing(metric::STREAM_BW, "", kernel.as_str(), Unit::MBps, e.to_string()));
                records.push(missing(metric::STREAM_LAT, "", kernel.as_str(), Unit::Ns, e.to_string()));
            }
        }
    }
    for kernel in Stream2Kernel::ALL {
        let n = stream_len(kernel.bytes_per_iter());
        match stream2_kernel(kernel, n, config.stream_scalar, harness) {
            Ok(m) => {
                let note = format!("reps={};n={n}", m.repetitions);
                records.push(ok(
                    metric::STREAM2_BW,
                    "",
                    kernel.as_str(),
                    m.bandwidth_mbps,
                    Unit::MBps,
                    note.clone(),
                ));
                records.push(ok(metric::STREAM2_LAT, "", kernel.as_str(), m.latency_ns, Unit::Ns, note));
            }
            Err(e) => {
                records.push(missing(metric::STREAM2_BW, "", kernel.as_str(), Unit::MBps, e.to_string()));
                records.push(missing(metric::STREAM2_LAT, "", kernel.as_str(), Unit::Ns, e.to_string()));
            }
        }
    }
    records
}
