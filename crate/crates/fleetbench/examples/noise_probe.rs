use fleetbench::microbench::{default_size_ladder, memory_latency_curve, ChasePattern, Harness};
use fleetbench::timing::{calibrate_timer, MeasurePlan, MonotonicClock};

fn main() {
    let sizes: Vec<u64> = default_size_ladder().into_iter().filter(|&s| s >= 4096).collect();
    for run in 0..10u64 {
        let clock = MonotonicClock::new();
        let profile = calibrate_timer(&clock, 1000).unwrap();
        let plan = MeasurePlan::new(2_000_000, 3, 1 << 40);
        let harness = Harness::new(&clock, plan, profile);
        let (curve, _) =
            memory_latency_curve(&sizes, ChasePattern::RandomPermutation, 64, run, 3, &harness).unwrap();
        let dips: Vec<String> = curve
            .points
            .windows(2)
            .filter(|w| w[1].1 < 0.9 * w[0].1)
            .map(|w| format!("{}K: {:.1}->{:.1}", w[0].0 >> 10, w[0].1, w[1].1))
            .collect();
        let mid: Vec<f64> = curve.points.iter().filter(|p| p.0 >= 2<<20 && p.0 <= 16<<20).map(|p| (p.1 * 10.0).round() / 10.0).collect();
        println!("run {run}: 4K={:.2} 64M={:.1} mid(2M..16M)={mid:?} dips={dips:?}", curve.points[0].1, curve.points.last().unwrap().1);
    }
}
