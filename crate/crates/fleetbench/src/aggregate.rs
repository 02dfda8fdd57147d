//! Per-site statistics, the homogeneity check, projection sample sizing, and
//! fleet-wide distributions (per-site and jobslot-weighted per-job).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::results::{
    format_value, metric, BenchmarkRecord, ResultsError, SiteRegistryEntry, Status,
};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no sites qualify for the distribution")]
    EmptyFleet,
    #[error("metric key {0} is present in no site")]
    UnknownMetricKey(String),
    #[error(transparent)]
    Results(#[from] ResultsError),
}

/// Identity of one measured quantity: metric family plus class and kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricKey {
    pub metric: String,
    pub class: String,
    pub kind: String,
}

impl MetricKey {
    pub fn new(metric: &str, class: &str, kind: &str) -> Self {
        MetricKey { metric: metric.to_string(), class: class.to_string(), kind: kind.to_string() }
    }

    pub fn of(record: &BenchmarkRecord) -> Self {
        MetricKey::new(&record.metric, &record.class, &record.kind)
    }

    pub fn label(&self) -> String {
        let mut s = self.metric.clone();
        for part in [&self.class, &self.kind] {
            if !part.is_empty() {
                s.push('/');
                s.push_str(part);
            }
        }
        s
    }
}

impl std::fmt::Display for MetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Summary statistics of one metric key at one site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteStats {
    pub site: String,
    pub key: MetricKey,
    pub count: u64,
    pub mean: f64,
    /// Sample standard deviation (n-1); zero when count == 1.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

/// Per-site report: statistics plus the homogeneity verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteReport {
    pub site: String,
    pub nodes_sampled: u64,
    pub stats: Vec<SiteStats>,
    pub homogeneous: bool,
    /// Largest coefficient of variation over the checked keys.
    pub cv_worst: f64,
}

/// Records grouped by resolved site, with unresolvable records quarantined.
#[derive(Debug, Default)]
pub struct Grouped {
    pub sites: BTreeMap<String, Vec<BenchmarkRecord>>,
    pub quarantine: Vec<BenchmarkRecord>,
}

/// Join records to sites by their site field, falling back to a
/// hostname-to-site mapping. Unknown records go to quarantine, never lost.
pub fn group_by_site(
    records: Vec<BenchmarkRecord>,
    host_map: &BTreeMap<String, String>,
) -> Grouped {
    let mut grouped = Grouped::default();
    for mut record in records {
        if record.site.is_empty() {
            if let Some(site) = host_map.get(&record.hostname) {
                record.site = site.clone();
            }
        }
        if record.site.is_empty() {
            grouped.quarantine.push(record);
        } else {
            grouped.sites.entry(record.site.clone()).or_default().push(record);
        }
    }
    grouped
}

/// Welford running moments; numerically stable one-pass mean/variance.
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Welford {
    fn new() -> Self {
        Welford { count: 0, mean: 0.0, m2: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }

    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    fn stddev(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

/// Compute per-key statistics over one site's ok records.
pub fn site_stats(site: &str, records: &[BenchmarkRecord]) -> Vec<SiteStats> {
    let mut by_key: BTreeMap<MetricKey, Welford> = BTreeMap::new();
    for record in records {
        if record.status != Status::Ok {
            continue;
        }
        let Some(value) = record.value else { continue };
        by_key.entry(MetricKey::of(record)).or_insert_with(Welford::new).push(value);
    }
    by_key
        .into_iter()
        .map(|(key, w)| SiteStats {
            site: site.to_string(),
            key,
            count: w.count,
            mean: w.mean,
            stddev: w.stddev(),
            min: w.min,
            max: w.max,
        })
        .collect()
}

/// Metric families whose spread across a site's nodes decides homogeneity:
/// operation latencies and stream bandwidths.
pub fn homogeneity_relevant(key: &MetricKey) -> bool {
    matches!(key.metric.as_str(), metric::OP_LATENCY | metric::STREAM_BW | metric::STREAM2_BW)
}

/// Worst coefficient of variation over the homogeneity-relevant keys;
/// keys with zero mean are skipped.
pub fn homogeneity_check(stats: &[SiteStats], cv_threshold: f64) -> (bool, f64) {
    let cv_worst = stats
        .iter()
        .filter(|s| homogeneity_relevant(&s.key) && s.mean != 0.0)
        .map(|s| s.stddev / s.mean)
        .fold(0.0f64, f64::max);
    (cv_worst <= cv_threshold, cv_worst)
}

/// Build the full per-site report.
pub fn build_site_report(site: &str, records: &[BenchmarkRecord], cv_threshold: f64) -> SiteReport {
    let stats = site_stats(site, records);
    let (homogeneous, cv_worst) = homogeneity_check(&stats, cv_threshold);
    let nodes: BTreeSet<&str> = records.iter().map(|r| r.hostname.as_str()).collect();
    SiteReport {
        site: site.to_string(),
        nodes_sampled: nodes.len() as u64,
        stats,
        homogeneous,
        cv_worst,
    }
}

/// Number of nodes to sample at a site of the given size:
/// ceil(sqrt(jobslots)) clamped to [3, 10]; zero-slot sites are skipped.
pub fn projection_sample_size(jobslots: u64) -> u64 {
    if jobslots == 0 {
        return 0;
    }
    ((jobslots as f64).sqrt().ceil() as u64).clamp(3, 10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    PerSite,
    PerJob,
}

impl Weighting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Weighting::PerSite => "per_site",
            Weighting::PerJob => "per_job",
        }
    }
}

/// Categorical shares across the fleet for one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetDistribution {
    pub attribute: String,
    pub weighting: Weighting,
    /// Category -> share in [0,1]; shares sum to 1.
    pub shares: BTreeMap<String, f64>,
    /// Sites left out of per-job weighting because the registry lacks them.
    pub excluded_sites: Vec<String>,
}

/// One site's representative attribute value: the modal value across its
/// sampled nodes, ties broken lexicographically and flagged.
pub fn modal_value(values: &[String]) -> Option<(String, bool)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.as_str()).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    let mut winners = counts.iter().filter(|(_, &c)| c == best).map(|(&v, _)| v);
    let winner = winners.next()?.to_string();
    Some((winner, winners.next().is_some()))
}

/// Per-site attribute values from inventory records: one value per hostname
/// (last record wins), then the modal value per site.
pub fn site_attribute(grouped: &Grouped, attribute: &str) -> BTreeMap<String, (String, bool)> {
    let mut out = BTreeMap::new();
    for (site, records) in &grouped.sites {
        let mut per_host: BTreeMap<&str, &str> = BTreeMap::new();
        for r in records {
            if r.metric == metric::INVENTORY && r.kind == attribute && r.status == Status::Ok {
                per_host.insert(r.hostname.as_str(), r.note.as_str());
            }
        }
        let values: Vec<String> = per_host.values().map(|v| v.to_string()).collect();
        if let Some(modal) = modal_value(&values) {
            out.insert(site.clone(), modal);
        }
    }
    out
}

/// Compute categorical shares for one attribute under one weighting.
///
/// Per-site: each measured site counts once. Per-job: sites are weighted by
/// registry jobslots; measured sites absent from the registry are excluded
/// and reported.
pub fn fleet_distribution(
    attribute: &str,
    site_values: &BTreeMap<String, String>,
    registry: &[SiteRegistryEntry],
    weighting: Weighting,
) -> Result<FleetDistribution, AggregateError> {
    let mut shares: BTreeMap<String, f64> = BTreeMap::new();
    let mut excluded_sites = Vec::new();
    match weighting {
        Weighting::PerSite => {
            if site_values.is_empty() {
                return Err(AggregateError::EmptyFleet);
            }
            let total = site_values.len() as f64;
            let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
            for value in site_values.values() {
                *counts.entry(value).or_default() += 1;
            }
            for (value, count) in counts {
                shares.insert(value.to_string(), count as f64 / total);
            }
        }
        Weighting::PerJob => {
            let slots: BTreeMap<&str, u64> =
                registry.iter().map(|e| (e.site.as_str(), e.jobslots)).collect();
            let mut weights: BTreeMap<&str, u64> = BTreeMap::new();
            let mut total = 0u64;
            for (site, value) in site_values {
                match slots.get(site.as_str()) {
                    Some(&n) => {
                        *weights.entry(value).or_default() += n;
                        total += n;
                    }
                    None => excluded_sites.push(site.clone()),
                }
            }
            if total == 0 {
                return Err(AggregateError::EmptyFleet);
            }
            for (value, weight) in weights {
                shares.insert(value.to_string(), weight as f64 / total as f64);
            }
        }
    }
    Ok(FleetDistribution { attribute: attribute.to_string(), weighting, shares, excluded_sites })
}

/// Sort direction for a ranking; smaller is better for latencies, larger for
/// bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascending,
    Descending,
}

/// The appropriate ranking direction for a metric key.
pub fn direction_for(key: &MetricKey) -> Direction {
    match crate::results::expected_unit(&key.metric) {
        Some(crate::results::Unit::MBps) => Direction::Descending,
        _ => Direction::Ascending,
    }
}

/// Order sites by their mean of one key. Sites missing the key rank last;
/// ties break by site name.
pub fn rank_sites(
    stats: &[SiteStats],
    key: &MetricKey,
    direction: Direction,
) -> Result<Vec<String>, AggregateError> {
    let sites: BTreeSet<&str> = stats.iter().map(|s| s.site.as_str()).collect();
    let means: BTreeMap<&str, f64> =
        stats.iter().filter(|s| &s.key == key).map(|s| (s.site.as_str(), s.mean)).collect();
    if means.is_empty() {
        return Err(AggregateError::UnknownMetricKey(key.label()));
    }
    let mut ordered: Vec<&str> = sites.into_iter().collect();
    ordered.sort_by(|a, b| match (means.get(a), means.get(b)) {
        (Some(x), Some(y)) => {
            let cmp = x.partial_cmp(y).expect("finite means");
            let cmp = match direction {
                Direction::Ascending => cmp,
                Direction::Descending => cmp.reverse(),
            };
            cmp.then_with(|| a.cmp(b))
        }
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    });
    Ok(ordered.into_iter().map(String::from).collect())
}

// ---------------------------------------------------------------------------
// CSV forms consumed by the report stage; same codec conventions as the
// record schema (RFC 4180, LF, nine-significant-digit floats).

pub const SITE_STATS_HEADER: [&str; 9] =
    ["site", "metric", "class", "kind", "count", "mean", "stddev", "min", "max"];

pub fn site_stats_to_csv(stats: &[SiteStats]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(SITE_STATS_HEADER).expect("in-memory write");
    for s in stats {
        w.write_record([
            s.site.as_str(),
            s.key.metric.as_str(),
            s.key.class.as_str(),
            s.key.kind.as_str(),
            &s.count.to_string(),
            &format_value(s.mean),
            &format_value(s.stddev),
            &format_value(s.min),
            &format_value(s.max),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn site_stats_from_csv(text: &str) -> Result<Vec<SiteStats>, AggregateError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(ResultsError::from)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| row.get(i).unwrap_or("").to_string();
        let num = |i: usize| -> Result<f64, AggregateError> {
            row.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| ResultsError::Row { line, reason: format!("bad number: {e}") }.into())
        };
        out.push(SiteStats {
            site: get(0),
            key: MetricKey::new(&get(1), &get(2), &get(3)),
            count: num(4)? as u64,
            mean: num(5)?,
            stddev: num(6)?,
            min: num(7)?,
            max: num(8)?,
        });
    }
    Ok(out)
}

pub const SITE_REPORT_HEADER: [&str; 6] =
    ["site", "nodes_sampled", "homogeneous", "cv_worst", "jobslots", "sample_target"];

/// Summary rows for the per-site reports; jobslots and the projected sample
/// size come from the registry when the site is known there.
pub fn site_reports_to_csv(reports: &[SiteReport], registry: &[SiteRegistryEntry]) -> String {
    let slots: BTreeMap<&str, u64> =
        registry.iter().map(|e| (e.site.as_str(), e.jobslots)).collect();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(SITE_REPORT_HEADER).expect("in-memory write");
    for r in reports {
        let (jobslots, target) = match slots.get(r.site.as_str()) {
            Some(&n) => (n.to_string(), projection_sample_size(n).to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.site.as_str(),
            &r.nodes_sampled.to_string(),
            &r.homogeneous.to_string(),
            &format_value(r.cv_worst),
            &jobslots,
            &target,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub const DISTRIBUTION_HEADER: [&str; 4] = ["attribute", "weighting", "category", "share"];

pub fn distributions_to_csv(distributions: &[FleetDistribution]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(DISTRIBUTION_HEADER).expect("in-memory write");
    for d in distributions {
        for (category, share) in &d.shares {
            w.write_record([
                d.attribute.as_str(),
                d.weighting.as_str(),
                category.as_str(),
                &format_value(*share),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn distributions_from_csv(text: &str) -> Result<Vec<FleetDistribution>, AggregateError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut out: Vec<FleetDistribution> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(ResultsError::from)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let attribute = row.get(0).unwrap_or("").to_string();
        let weighting = match row.get(1).unwrap_or("") {
            "per_site" => Weighting::PerSite,
            "per_job" => Weighting::PerJob,
            other => {
                return Err(
                    ResultsError::Row { line, reason: format!("unknown weighting {other:?}") }
                        .into(),
                )
            }
        };
        let category = row.get(2).unwrap_or("").to_string();
        let share: f64 = row
            .get(3)
            .unwrap_or("")
            .parse()
            .map_err(|e| ResultsError::Row { line, reason: format!("bad share: {e}") })?;
        match out.last_mut() {
            Some(d) if d.attribute == attribute && d.weighting == weighting => {
                d.shares.insert(category, share);
            }
            _ => {
                let mut shares = BTreeMap::new();
                shares.insert(category, share);
                out.push(FleetDistribution {
                    attribute,
                    weighting,
                    shares,
                    excluded_sites: Vec::new(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::{Unit, UtcTimestamp};
    use proptest::prelude::*;

    fn rec(
        host: &str,
        site: &str,
        metric_name: &str,
        class: &str,
        kind: &str,
        value: f64,
    ) -> BenchmarkRecord {
        BenchmarkRecord::ok(
            host,
            site,
            UtcTimestamp::fixed(),
            metric_name,
            class,
            kind,
            value,
            crate::results::expected_unit(metric_name).unwrap_or(Unit::None),
            String::new(),
        )
    }

    fn inventory_rec(host: &str, site: &str, kind: &str, note: &str) -> BenchmarkRecord {
        let mut r = rec(host, site, metric::INVENTORY, "", kind, 0.0);
        r.value = None;
        r.note = note.to_string();
        r
    }

    #[test]
    fn groups_by_site_with_quarantine() {
        let records = vec![
            rec("a", "SA", metric::OP_LATENCY, "int", "add", 1.0),
            rec("b", "SB", metric::OP_LATENCY, "int", "add", 2.0),
            rec("c", "", metric::OP_LATENCY, "int", "add", 3.0),
        ];
        let grouped = group_by_site(records, &BTreeMap::new());
        assert_eq!(grouped.sites.len(), 2);
        assert_eq!(grouped.quarantine.len(), 1);
        assert_eq!(grouped.quarantine[0].hostname, "c");
    }

    #[test]
    fn hostname_mapping_resolves_empty_sites() {
        let mut map = BTreeMap::new();
        map.insert("c".to_string(), "SC".to_string());
        let records = vec![rec("c", "", metric::OP_LATENCY, "int", "add", 3.0)];
        let grouped = group_by_site(records, &map);
        assert!(grouped.quarantine.is_empty());
        assert_eq!(grouped.sites["SC"].len(), 1);
    }

    #[test]
    fn stats_of_two_and_four() {
        let records = vec![
            rec("a", "SA", metric::OP_LATENCY, "int", "add", 2.0),
            rec("b", "SA", metric::OP_LATENCY, "int", "add", 4.0),
        ];
        let stats = site_stats("SA", &records);
        assert_eq!(stats.len(), 1);
        let s = &stats[0];
        assert_eq!(s.count, 2);
        assert_eq!(s.mean, 3.0);
        assert!((s.stddev - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.min, 2.0);
        assert_eq!(s.max, 4.0);
    }

    #[test]
    fn single_value_has_zero_stddev() {
        let records = vec![rec("a", "SA", metric::OP_LATENCY, "int", "add", 5.0)];
        let s = &site_stats("SA", &records)[0];
        assert_eq!((s.count, s.mean, s.stddev), (1, 5.0, 0.0));
    }

    #[test]
    fn missing_records_are_ignored_in_stats() {
        let mut missing = rec("a", "SA", metric::OP_LATENCY, "int", "add", 0.0);
        missing.status = Status::Missing;
        missing.value = None;
        let records = vec![missing, rec("b", "SA", metric::OP_LATENCY, "int", "add", 2.0)];
        let s = &site_stats("SA", &records)[0];
        assert_eq!(s.count, 1);
    }

    #[test]
    fn homogeneity_worked_example() {
        let stats = vec![SiteStats {
            site: "SA".into(),
            key: MetricKey::new(metric::OP_LATENCY, "int", "add"),
            count: 3,
            mean: 100.0,
            stddev: 10.0,
            min: 90.0,
            max: 110.0,
        }];
        let (homogeneous, cv) = homogeneity_check(&stats, 0.05);
        assert!(!homogeneous);
        assert!((cv - 0.1).abs() < 1e-15);
    }

    #[test]
    fn all_zero_stddev_is_homogeneous() {
        let stats = vec![SiteStats {
            site: "SA".into(),
            key: MetricKey::new(metric::STREAM_BW, "", "copy"),
            count: 3,
            mean: 4000.0,
            stddev: 0.0,
            min: 4000.0,
            max: 4000.0,
        }];
        assert_eq!(homogeneity_check(&stats, 0.05), (true, 0.0));
    }

    #[test]
    fn two_population_site_is_heterogeneous() {
        let records = vec![
            rec("a", "SA", metric::OP_LATENCY, "int", "add", 1.0),
            rec("b", "SA", metric::OP_LATENCY, "int", "add", 1.0),
            rec("c", "SA", metric::OP_LATENCY, "int", "add", 2.0),
            rec("d", "SA", metric::OP_LATENCY, "int", "add", 2.0),
        ];
        let report = build_site_report("SA", &records, 0.05);
        assert!(!report.homogeneous);
        // Direct CV: mean 1.5, sample stddev sqrt(1/3).
        let expect = (1.0f64 / 3.0).sqrt() / 1.5;
        assert!((report.cv_worst - expect).abs() < 1e-12);
        assert_eq!(report.nodes_sampled, 4);
    }

    #[test]
    fn irrelevant_keys_do_not_decide_homogeneity() {
        let records = vec![
            rec("a", "SA", metric::MEM_LATENCY, "", "1024", 1.0),
            rec("b", "SA", metric::MEM_LATENCY, "", "1024", 100.0),
        ];
        let report = build_site_report("SA", &records, 0.05);
        assert!(report.homogeneous, "memory curve spread should not flag the site");
    }

    #[test]
    fn projection_samples_match_formula() {
        assert_eq!(projection_sample_size(0), 0);
        assert_eq!(projection_sample_size(4), 3);
        assert_eq!(projection_sample_size(49), 7);
        assert_eq!(projection_sample_size(400), 10);
    }

    #[test]
    fn fleet_distribution_worked_example() {
        let registry = vec![
            SiteRegistryEntry { site: "SA".into(), jobslots: 10, middleware: String::new() },
            SiteRegistryEntry { site: "SB".into(), jobslots: 30, middleware: String::new() },
        ];
        let mut values = BTreeMap::new();
        values.insert("SA".to_string(), "A".to_string());
        values.insert("SB".to_string(), "B".to_string());
        let per_job = fleet_distribution("attr", &values, &registry, Weighting::PerJob).unwrap();
        assert_eq!(per_job.shares["A"], 0.25);
        assert_eq!(per_job.shares["B"], 0.75);
        let per_site = fleet_distribution("attr", &values, &registry, Weighting::PerSite).unwrap();
        assert_eq!(per_site.shares["A"], 0.5);
        assert_eq!(per_site.shares["B"], 0.5);
    }

    #[test]
    fn uniform_attribute_is_a_full_share() {
        let registry = vec![
            SiteRegistryEntry { site: "SA".into(), jobslots: 10, middleware: String::new() },
            SiteRegistryEntry { site: "SB".into(), jobslots: 30, middleware: String::new() },
        ];
        let mut values = BTreeMap::new();
        values.insert("SA".to_string(), "X".to_string());
        values.insert("SB".to_string(), "X".to_string());
        for weighting in [Weighting::PerSite, Weighting::PerJob] {
            let d = fleet_distribution("attr", &values, &registry, weighting).unwrap();
            assert_eq!(d.shares.len(), 1);
            assert_eq!(d.shares["X"], 1.0);
        }
    }

    #[test]
    fn unregistered_sites_are_excluded_from_per_job() {
        let registry =
            vec![SiteRegistryEntry { site: "SA".into(), jobslots: 10, middleware: String::new() }];
        let mut values = BTreeMap::new();
        values.insert("SA".to_string(), "A".to_string());
        values.insert("SB".to_string(), "B".to_string());
        let d = fleet_distribution("attr", &values, &registry, Weighting::PerJob).unwrap();
        assert_eq!(d.excluded_sites, vec!["SB".to_string()]);
        assert_eq!(d.shares["A"], 1.0);
        assert!(!d.shares.contains_key("B"));
    }

    #[test]
    fn empty_fleet_is_an_error() {
        let values = BTreeMap::new();
        assert!(matches!(
            fleet_distribution("attr", &values, &[], Weighting::PerSite),
            Err(AggregateError::EmptyFleet)
        ));
        let mut values = BTreeMap::new();
        values.insert("SA".to_string(), "A".to_string());
        assert!(matches!(
            fleet_distribution("attr", &values, &[], Weighting::PerJob),
            Err(AggregateError::EmptyFleet)
        ));
    }

    #[test]
    fn modal_value_breaks_ties_lexicographically() {
        let values: Vec<String> = ["b", "a", "b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(modal_value(&values), Some(("a".to_string(), true)));
        let values: Vec<String> = ["b", "a", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(modal_value(&values), Some(("b".to_string(), false)));
    }

    #[test]
    fn site_attribute_takes_modal_across_hosts() {
        let records = vec![
            inventory_rec("h1", "SA", "kernel_base", "2.4"),
            inventory_rec("h2", "SA", "kernel_base", "2.6"),
            inventory_rec("h3", "SA", "kernel_base", "2.6"),
            inventory_rec("h4", "SB", "kernel_base", "2.4"),
        ];
        let grouped = group_by_site(records, &BTreeMap::new());
        let attrs = site_attribute(&grouped, "kernel_base");
        assert_eq!(attrs["SA"], ("2.6".to_string(), false));
        assert_eq!(attrs["SB"], ("2.4".to_string(), false));
    }

    #[test]
    fn ranks_sites_by_mean() {
        let key = MetricKey::new(metric::OP_LATENCY, "double", "add");
        let stats = vec![
            SiteStats {
                site: "SA".into(),
                key: key.clone(),
                count: 1,
                mean: 2.0,
                stddev: 0.0,
                min: 2.0,
                max: 2.0,
            },
            SiteStats {
                site: "SB".into(),
                key: key.clone(),
                count: 1,
                mean: 1.5,
                stddev: 0.0,
                min: 1.5,
                max: 1.5,
            },
        ];
        assert_eq!(rank_sites(&stats, &key, Direction::Ascending).unwrap(), vec!["SB", "SA"]);
    }

    #[test]
    fn rank_ties_break_by_name_and_missing_keys_sink() {
        let key = MetricKey::new(metric::OP_LATENCY, "double", "add");
        let other = MetricKey::new(metric::OP_LATENCY, "double", "div");
        let stats = vec![
            SiteStats {
                site: "SB".into(),
                key: key.clone(),
                count: 1,
                mean: 2.0,
                stddev: 0.0,
                min: 2.0,
                max: 2.0,
            },
            SiteStats {
                site: "SA".into(),
                key: key.clone(),
                count: 1,
                mean: 2.0,
                stddev: 0.0,
                min: 2.0,
                max: 2.0,
            },
            SiteStats {
                site: "SC".into(),
                key: other,
                count: 1,
                mean: 0.1,
                stddev: 0.0,
                min: 0.1,
                max: 0.1,
            },
        ];
        assert_eq!(
            rank_sites(&stats, &key, Direction::Ascending).unwrap(),
            vec!["SA", "SB", "SC"]
        );
        let unknown = MetricKey::new(metric::OP_LATENCY, "int64", "mul");
        assert!(matches!(
            rank_sites(&stats, &unknown, Direction::Ascending),
            Err(AggregateError::UnknownMetricKey(_))
        ));
    }

    #[test]
    fn aggregate_csv_round_trips() {
        let stats = vec![SiteStats {
            site: "SA".into(),
            key: MetricKey::new(metric::OP_LATENCY, "double", "add"),
            count: 3,
            mean: 2.5,
            stddev: 0.25,
            min: 2.25,
            max: 2.75,
        }];
        let parsed = site_stats_from_csv(&site_stats_to_csv(&stats)).unwrap();
        assert_eq!(parsed, stats);

        let mut shares = BTreeMap::new();
        shares.insert("A".to_string(), 0.25);
        shares.insert("B".to_string(), 0.75);
        let dists = vec![FleetDistribution {
            attribute: "kernel_base".into(),
            weighting: Weighting::PerJob,
            shares,
            excluded_sites: Vec::new(),
        }];
        let parsed = distributions_from_csv(&distributions_to_csv(&dists)).unwrap();
        assert_eq!(parsed, dists);
    }

    /// Brute-force two-pass oracle, textbook formulas.
    fn two_pass(values: &[f64]) -> (f64, f64, f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (mean, var.sqrt(), min, max)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
    }

    proptest! {
        #[test]
        fn partition_law_holds(
            tags in proptest::collection::vec(0usize..5, 1..200),
        ) {
            let sites = ["", "SA", "SB", "SC", "SD"];
            let records: Vec<BenchmarkRecord> = tags
                .iter()
                .enumerate()
                .map(|(i, &t)| rec(&format!("h{i}"), sites[t], metric::OP_LATENCY, "int", "add", 1.0))
                .collect();
            let total = records.len();
            let grouped = group_by_site(records, &BTreeMap::new());
            let regrouped: usize =
                grouped.sites.values().map(Vec::len).sum::<usize>() + grouped.quarantine.len();
            prop_assert_eq!(regrouped, total);
        }

        #[test]
        fn welford_matches_two_pass_oracle(
            values in proptest::collection::vec(0.1f64..1e6, 1..300),
        ) {
            let records: Vec<BenchmarkRecord> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| rec(&format!("h{i}"), "SA", metric::OP_LATENCY, "int", "add", v))
                .collect();
            let s = &site_stats("SA", &records)[0];
            let (mean, stddev, min, max) = two_pass(&values);
            prop_assert!(close(s.mean, mean), "mean {} vs {}", s.mean, mean);
            prop_assert!(close(s.stddev, stddev), "stddev {} vs {}", s.stddev, stddev);
            prop_assert_eq!(s.min, min);
            prop_assert_eq!(s.max, max);
        }

        #[test]
        fn shares_sum_to_one(
            attrs in proptest::collection::vec(0usize..4, 1..20),
            slots in proptest::collection::vec(1u64..500, 20),
        ) {
            let names = ["A", "B", "C", "D"];
            let mut values = BTreeMap::new();
            let mut registry = Vec::new();
            for (i, &a) in attrs.iter().enumerate() {
                let site = format!("S{i:02}");
                values.insert(site.clone(), names[a].to_string());
                registry.push(SiteRegistryEntry { site, jobslots: slots[i], middleware: String::new() });
            }
            for weighting in [Weighting::PerSite, Weighting::PerJob] {
                let d = fleet_distribution("attr", &values, &registry, weighting).unwrap();
                let sum: f64 = d.shares.values().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9, "{:?} shares sum {}", weighting, sum);
            }
        }

        #[test]
        fn per_job_share_is_monotone_in_member_slots(
            base_slots in 1u64..100,
            bump in 1u64..100,
        ) {
            let mut values = BTreeMap::new();
            values.insert("SA".to_string(), "X".to_string());
            values.insert("SB".to_string(), "Y".to_string());
            let registry = |sa: u64| vec![
                SiteRegistryEntry { site: "SA".into(), jobslots: sa, middleware: String::new() },
                SiteRegistryEntry { site: "SB".into(), jobslots: 50, middleware: String::new() },
            ];
            let before =
                fleet_distribution("attr", &values, &registry(base_slots), Weighting::PerJob)
                    .unwrap()
                    .shares["X"];
            let after =
                fleet_distribution("attr", &values, &registry(base_slots + bump), Weighting::PerJob)
                    .unwrap()
                    .shares["X"];
            prop_assert!(after >= before);
        }

        #[test]
        fn rank_is_a_permutation_and_rescale_invariant(
            means in proptest::collection::vec(0.1f64..100.0, 2..10),
            scale in 0.001f64..1000.0,
        ) {
            let key = MetricKey::new(metric::OP_LATENCY, "double", "add");
            let stats: Vec<SiteStats> = means
                .iter()
                .enumerate()
                .map(|(i, &m)| SiteStats {
                    site: format!("S{i:02}"),
                    key: key.clone(),
                    count: 1,
                    mean: m,
                    stddev: 0.0,
                    min: m,
                    max: m,
                })
                .collect();
            let ranked = rank_sites(&stats, &key, Direction::Ascending).unwrap();
            prop_assert_eq!(ranked.len(), means.len());
            let mut sorted = ranked.clone();
            sorted.sort();
            let mut all: Vec<String> = stats.iter().map(|s| s.site.clone()).collect();
            all.sort();
            prop_assert_eq!(sorted, all);

            let scaled: Vec<SiteStats> = stats
                .iter()
                .map(|s| SiteStats { mean: s.mean * scale, ..s.clone() })
                .collect();
            let ranked_scaled = rank_sites(&scaled, &key, Direction::Ascending).unwrap();
            prop_assert_eq!(&ranked[0], &ranked_scaled[0], "argmin must survive rescaling");
        }

        #[test]
        fn sample_size_is_monotone_and_clamped(a in 1u64..100_000, b in 0u64..1000) {
            let n1 = projection_sample_size(a);
            let n2 = projection_sample_size(a + b);
            prop_assert!(n2 >= n1);
            prop_assert!((3..=10).contains(&n1));
        }
    }
}
