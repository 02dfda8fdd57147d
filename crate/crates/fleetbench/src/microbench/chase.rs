//! Pointer-chase memory latency: ring construction, the latency curve over a
//! working-set ladder, and cache-level detection from the curve.

use std::hint::black_box;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Harness, MicrobenchError};

const LINK_BYTES: u64 = std::mem::size_of::<usize>() as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChasePattern {
    /// Slot i links to slot i+1; prefetch-friendly, kept for comparison runs.
    SequentialStride,
    /// Seeded random single cycle; defeats hardware prefetching.
    RandomPermutation,
}

impl ChasePattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChasePattern::SequentialStride => "sequential_stride",
            ChasePattern::RandomPermutation => "random_permutation",
        }
    }
}

/// A buffer of links forming a single cycle that visits every slot once.
pub struct ChaseRing {
    links: Vec<usize>,
    slots: usize,
}

impl ChaseRing {
    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Follow the chain one step from a link index.
    pub fn next(&self, idx: usize) -> usize {
        self.links[idx]
    }

    /// True when following the chain from slot 0 returns to 0 after exactly
    /// `slots` hops, visiting `slots` distinct link indices.
    pub fn is_single_cycle(&self) -> bool {
        let mut seen = vec![false; self.links.len()];
        let mut p = 0usize;
        for _ in 0..self.slots {
            if seen[p] {
                return false;
            }
            seen[p] = true;
            p = self.links[p];
        }
        p == 0
    }

    /// Dependent chase `p = next(p)` for `steps` loads; returns the final
    /// index so the walk cannot be elided.
    pub fn walk(&self, steps: u64) -> usize {
        walk_links(&self.links, steps)
    }
}

fn walk_links(links: &[usize], steps: u64) -> usize {
    let mut p = black_box(0usize);
    for _ in 0..steps / 16 {
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
        p = links[p];
    }
    for _ in 0..steps % 16 {
        p = links[p];
    }
    p
}

/// Validate chase geometry; returns the slot count.
fn check_geometry(working_set_bytes: u64, stride_bytes: u64) -> Result<usize, MicrobenchError> {
    if stride_bytes < LINK_BYTES || stride_bytes % LINK_BYTES != 0 {
        return Err(MicrobenchError::InvalidGeometry(format!(
            "stride_bytes {stride_bytes} must be a positive multiple of the {LINK_BYTES}-byte link"
        )));
    }
    if working_set_bytes < stride_bytes || working_set_bytes % stride_bytes != 0 {
        return Err(MicrobenchError::InvalidGeometry(format!(
            "working_set_bytes {working_set_bytes} must be a multiple of stride_bytes {stride_bytes}"
        )));
    }
    let slots = working_set_bytes / stride_bytes;
    if slots < 2 {
        return Err(MicrobenchError::SizeTooSmall { slots });
    }
    Ok(slots as usize)
}

/// Allocate a link buffer pinned to base pages. Without the pin the kernel
/// backs some sizes with transparent huge pages and not others, and the
/// differing TLB cost makes larger working sets measure faster than smaller
/// ones.
fn alloc_links(words: usize) -> Result<Vec<usize>, MicrobenchError> {
    let mut links: Vec<usize> = Vec::new();
    links
        .try_reserve_exact(words)
        .map_err(|_| MicrobenchError::AllocationFailure { bytes: words * LINK_BYTES as usize })?;
    // Pin the buffer to base pages before first touch. Transparent huge
    // pages arrive asynchronously and unevenly, and a mid-run promotion
    // shifts the TLB cost underneath the measurement.
    #[cfg(target_os = "linux")]
    unsafe {
        libc::madvise(links.as_mut_ptr().cast(), words * LINK_BYTES as usize, libc::MADV_NOHUGEPAGE);
    }
    links.resize(words, 0);
    Ok(links)
}

/// Write a single cycle over the first `slots` slots of a link buffer.
fn init_links(links: &mut [usize], slots: usize, stride_words: usize, pattern: ChasePattern, seed: u64) {
    match pattern {
        ChasePattern::SequentialStride => {
            for i in 0..slots {
                links[i * stride_words] = ((i + 1) % slots) * stride_words;
            }
        }
        ChasePattern::RandomPermutation => {
            let mut order: Vec<usize> = (0..slots).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for j in 0..slots {
                links[order[j] * stride_words] = order[(j + 1) % slots] * stride_words;
            }
        }
    }
}

/// Build a chase ring covering `working_set_bytes`, one link per
/// `stride_bytes` slot.
pub fn build_chase_ring(
    working_set_bytes: u64,
    pattern: ChasePattern,
    stride_bytes: u64,
    seed: u64,
) -> Result<ChaseRing, MicrobenchError> {
    let slots = check_geometry(working_set_bytes, stride_bytes)?;
    let stride_words = (stride_bytes / LINK_BYTES) as usize;
    let mut links = alloc_links((working_set_bytes / LINK_BYTES) as usize)?;
    init_links(&mut links, slots, stride_words, pattern, seed);
    Ok(ChaseRing { links, slots })
}

/// One point per working-set size: nanoseconds per dependent load.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryLatencyCurve {
    /// (working_set_bytes, ns_per_load), strictly increasing sizes.
    pub points: Vec<(u64, f64)>,
    pub pattern: ChasePattern,
    pub seed: u64,
}

/// A size whose measurement failed; recorded, not fatal.
#[derive(Debug)]
pub struct PointFailure {
    pub working_set_bytes: u64,
    pub reason: String,
}

/// Default working-set ladder: powers of two from 1 KiB to 64 MiB plus 1.5x
/// half-steps for boundary sharpness.
pub fn default_size_ladder() -> Vec<u64> {
    let mut sizes = Vec::new();
    let mut p = 1024u64;
    let top = 64 * 1024 * 1024;
    while p <= top {
        sizes.push(p);
        let half = p + p / 2;
        if half <= top {
            sizes.push(half);
        }
        p *= 2;
    }
    sizes
}

/// Default number of interleaved ladder sweeps per curve.
pub const DEFAULT_CURVE_SWEEPS: usize = 3;

/// Measure ns-per-load across the size ladder.
///
/// Every point's ring lives in the prefix of one shared arena sized to the
/// largest entry, so all sizes are measured on the same physical memory; per
/// point, each timed batch performs whole passes over the ring (after one
/// untimed steady-state pass) so the touched footprint always equals the
/// working-set size. Independent allocations, cold first passes or partial
/// walks would each distort the curve's shape.
///
/// The ladder is swept `sweeps` times and each point reports the median
/// across sweeps, so a transient load burst on the machine can spoil at most
/// one sweep's sample of a point, not the point itself.
pub fn memory_latency_curve(
    sizes: &[u64],
    pattern: ChasePattern,
    stride_bytes: u64,
    seed: u64,
    sweeps: usize,
    harness: &Harness,
) -> Result<(MemoryLatencyCurve, Vec<PointFailure>), MicrobenchError> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MicrobenchError::SizesNotIncreasing);
    }
    if sweeps == 0 {
        return Err(MicrobenchError::InvalidGeometry("sweeps must be >= 1".to_string()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    let mut failures = Vec::new();
    let Some(&max_size) = sizes.last() else {
        return Ok((MemoryLatencyCurve { points, pattern, seed }, failures));
    };
    let mut arena = match check_geometry(max_size, stride_bytes)
        .and_then(|_| alloc_links((max_size / LINK_BYTES) as usize))
    {
        Ok(arena) => arena,
        Err(e) => {
            // No usable arena; record every point as failed.
            for &size in sizes {
                failures.push(PointFailure { working_set_bytes: size, reason: e.to_string() });
            }
            return Ok((MemoryLatencyCurve { points, pattern, seed }, failures));
        }
    };
    let stride_words = (stride_bytes / LINK_BYTES) as usize;

    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    let mut errors: Vec<Option<String>> = vec![None; sizes.len()];
    for _ in 0..sweeps {
        for (i, &size) in sizes.iter().enumerate() {
            let outcome = check_geometry(size, stride_bytes).and_then(|slots| {
                let links = &mut arena[..(size / LINK_BYTES) as usize];
                init_links(links, slots, stride_words, pattern, seed);
                let links = &links[..];
                let slots = slots as u64;
                black_box(walk_links(links, slots));
                let m = harness.measure(&mut |passes| walk_links(links, passes * slots) as u64)?;
                Ok(m.ns_per_iter / slots as f64)
            });
            match outcome {
                Ok(ns_per_load) => samples[i].push(ns_per_load),
                Err(e) => errors[i] = Some(e.to_string()),
            }
        }
    }
    for (i, &size) in sizes.iter().enumerate() {
        if samples[i].is_empty() {
            let reason = errors[i].take().unwrap_or_else(|| "no sweep succeeded".to_string());
            failures.push(PointFailure { working_set_bytes: size, reason });
        } else {
            points.push((size, crate::timing::median(&mut samples[i])));
        }
    }
    Ok((MemoryLatencyCurve { points, pattern, seed }, failures))
}

/// One detected level of the memory hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheLevel {
    /// Last working-set size inside the plateau; `None` for the final
    /// plateau, which extends beyond every measured size (main memory).
    pub capacity_bytes: Option<u64>,
    /// Median latency across the plateau.
    pub latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheLevels {
    pub levels: Vec<CacheLevel>,
    /// Curve indices of the first point after each latency jump.
    pub boundaries: Vec<usize>,
}

/// Split the curve into plateaus wherever latency jumps by `jump_ratio` or
/// more between consecutive points. Plateaus whose median does not strictly
/// increase are merged so levels always satisfy the ordering invariant.
pub fn detect_cache_levels(
    curve: &MemoryLatencyCurve,
    jump_ratio: f64,
) -> Result<CacheLevels, MicrobenchError> {
    if curve.points.len() < 4 {
        return Err(MicrobenchError::CurveTooShort { points: curve.points.len() });
    }
    if !(jump_ratio > 1.0) {
        return Err(MicrobenchError::BadJumpRatio(jump_ratio));
    }

    let mut plateaus: Vec<(usize, usize)> = Vec::new(); // inclusive point ranges
    let mut boundaries = Vec::new();
    let mut start = 0usize;
    for i in 0..curve.points.len() - 1 {
        let (_, prev) = curve.points[i];
        let (_, next) = curve.points[i + 1];
        if prev > 0.0 && next / prev >= jump_ratio {
            plateaus.push((start, i));
            boundaries.push(i + 1);
            start = i + 1;
        }
    }
    plateaus.push((start, curve.points.len() - 1));

    let plateau_median = |range: &(usize, usize)| -> f64 {
        let mut lats: Vec<f64> =
            curve.points[range.0..=range.1].iter().map(|&(_, ns)| ns).collect();
        crate::timing::median(&mut lats)
    };

    // Merge any plateau whose median fails to strictly exceed its
    // predecessor's (possible on noisy, non-monotone curves).
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for range in plateaus {
        match merged.last_mut() {
            Some(prev) if plateau_median(&range) <= plateau_median(prev) => {
                prev.1 = range.1;
                boundaries.retain(|&b| b != range.0);
            }
            _ => merged.push(range),
        }
    }

    let last = merged.len() - 1;
    let levels = merged
        .iter()
        .enumerate()
        .map(|(i, range)| CacheLevel {
            capacity_bytes: if i == last { None } else { Some(curve.points[range.1].0) },
            latency_ns: plateau_median(range),
        })
        .collect();
    Ok(CacheLevels { levels, boundaries })
}
