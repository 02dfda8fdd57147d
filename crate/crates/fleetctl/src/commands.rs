//! Implementations behind the CLI subcommands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fleetbench::aggregate::{
    build_site_report, direction_for, distributions_from_csv, distributions_to_csv, group_by_site,
    fleet_distribution, rank_sites, site_attribute, site_reports_to_csv, site_stats_from_csv,
    site_stats_to_csv, AggregateError, FleetDistribution, MetricKey, SiteStats, Weighting,
};
use fleetbench::inventory::{
    collect_inventory, inventory_to_records, DirSource, InfoSource, LiveSource,
};
use fleetbench::microbench::{run_full_suite, Harness, SuiteConfig};
use fleetbench::report::{render_histogram, render_pie, render_table, write_artifacts};
use fleetbench::results::{
    decode_csv, encode_csv, load_registry, metric, BenchmarkRecord, DecodeMode,
    SiteRegistryEntry, Status, UtcTimestamp,
};
use fleetbench::timing::{calibrate_timer, Clock, MeasurePlan, MockClock, MonotonicClock, TimerProfile};

use crate::collect::{collect_inbox, IngestReport};
use crate::config::{CampaignConfig, ClockMode};
use crate::plan::{build_job_plan, render_script};
use crate::CliError;

pub const MERGED_FILE: &str = "merged.csv";
pub const SITE_STATS_FILE: &str = "site_stats.csv";
pub const SITE_REPORTS_FILE: &str = "site_reports.csv";
pub const DISTRIBUTIONS_FILE: &str = "distributions.csv";
pub const REPORT_DIR: &str = "report";

/// Attributes distributed across the fleet from inventory records.
pub const DISTRIBUTED_ATTRIBUTES: [&str; 5] =
    ["cpu_model", "cpu_count", "kernel_base", "kernel_smp", "distro"];

/// Metric keys the ranking table and histograms cover when present.
fn default_table_keys() -> Vec<MetricKey> {
    vec![
        MetricKey::new(metric::OP_LATENCY, "double", "add"),
        MetricKey::new(metric::OP_LATENCY, "double", "div"),
        MetricKey::new(metric::OP_LATENCY, "int", "add"),
        MetricKey::new(metric::BOGOMFLOPS, "double", ""),
        MetricKey::new(metric::STREAM_BW, "", "triad"),
        MetricKey::new(metric::STREAM2_BW, "", "daxpy"),
    ]
}

fn default_histogram_keys() -> Vec<MetricKey> {
    vec![
        MetricKey::new(metric::OP_LATENCY, "double", "add"),
        MetricKey::new(metric::STREAM_BW, "", "triad"),
    ]
}

fn probe_source(config: &CampaignConfig) -> Box<dyn InfoSource> {
    match &config.probe_fixtures {
        Some(dir) => Box::new(DirSource::new(dir)),
        None => Box::new(LiveSource::new()),
    }
}

/// Wall timestamp for records: fixed under the mock clock so deterministic
/// runs stay byte-identical.
fn wall_timestamp(config: &CampaignConfig) -> UtcTimestamp {
    match config.clock {
        ClockMode::Real => UtcTimestamp::now(),
        ClockMode::Mock { .. } => UtcTimestamp::fixed(),
    }
}

/// Print the node inventory as CSV records.
pub fn run_probe(config: &CampaignConfig) -> Result<String, CliError> {
    let source = probe_source(config);
    let mut inventory = collect_inventory(source.as_ref(), wall_timestamp(config))?;
    if let Some(host) = &config.hostname_override {
        inventory.hostname = host.clone();
    }
    Ok(encode_csv(&inventory_to_records(&inventory, &config.site)))
}

/// Run probe + suite and write one `<hostname>-<timestamp>.csv`.
pub fn run_bench(config: &CampaignConfig) -> Result<(PathBuf, usize), CliError> {
    let source = probe_source(config);
    let timestamp = wall_timestamp(config);
    let mut inventory = collect_inventory(source.as_ref(), timestamp)?;
    if let Some(host) = &config.hostname_override {
        inventory.hostname = host.clone();
    }
    let hostname = inventory.hostname.clone();
    let mut records = inventory_to_records(&inventory, &config.site);

    let clock: Box<dyn Clock> = match config.clock {
        ClockMode::Real => Box::new(MonotonicClock::new()),
        ClockMode::Mock { step_ns } => Box::new(MockClock::new(step_ns)),
    };
    let profile = match config.clock {
        ClockMode::Real => calibrate_timer(clock.as_ref(), 1000)?,
        ClockMode::Mock { .. } => TimerProfile::mock(),
    };
    let min_duration_ns = match config.clock {
        ClockMode::Real => {
            (config.min_duration_ms * 1_000_000).max((100.0 * profile.resolution_ns).ceil() as u64)
        }
        ClockMode::Mock { .. } => 100,
    };
    let plan = MeasurePlan::new(min_duration_ns, config.repetitions, config.max_iterations);
    let harness = Harness::new(clock.as_ref(), plan, profile);

    let mut suite = SuiteConfig::new(&hostname, &config.site, timestamp);
    suite.mem_sizes = config.mem_sizes.clone();
    suite.mem_pattern = config.mem_pattern;
    suite.stride_bytes = config.stride_bytes;
    suite.stream_len = config.stream_len;
    suite.bogomflops_len = config.bogomflops_len;
    suite.seed = config.seed;
    records.extend(run_full_suite(&suite, &harness));

    std::fs::create_dir_all(&config.output)?;
    let path = config.output.join(format!("{hostname}-{}.csv", timestamp.compact()));
    std::fs::write(&path, encode_csv(&records))?;
    Ok((path, records.len()))
}

/// Emit the job plan as a portable shell script.
pub fn run_plan(config: &CampaignConfig) -> String {
    render_script(&build_job_plan(config))
}

/// Ingest the inbox and write the merged CSV.
pub fn run_collect(config: &CampaignConfig) -> Result<(PathBuf, IngestReport), CliError> {
    if config.inbox == config.output {
        return Err(CliError::Usage(format!(
            "inbox and output must be distinct (both are {}); the merged CSV would be re-ingested",
            config.inbox.display()
        )));
    }
    let (merged, report) = collect_inbox(&config.inbox, config.decode_mode, config)?;
    std::fs::create_dir_all(&config.output)?;
    let path = config.output.join(MERGED_FILE);
    std::fs::write(&path, encode_csv(&merged))?;
    Ok((path, report))
}

fn read_registry(config: &CampaignConfig, warnings: &mut Vec<String>) -> Vec<SiteRegistryEntry> {
    match std::fs::read_to_string(&config.registry) {
        Ok(text) => match load_registry(&text) {
            Ok(entries) => entries,
            Err(e) => {
                warnings.push(format!("registry {}: {e}", config.registry.display()));
                Vec::new()
            }
        },
        Err(e) => {
            warnings.push(format!(
                "registry {} unreadable ({e}); per-job weighting skipped",
                config.registry.display()
            ));
            Vec::new()
        }
    }
}

/// Merged CSV + registry -> site stats/reports and fleet distributions.
pub fn run_aggregate(config: &CampaignConfig) -> Result<Vec<String>, CliError> {
    let merged_path = config.output.join(MERGED_FILE);
    let text = std::fs::read_to_string(&merged_path).map_err(|e| {
        CliError::Data(format!(
            "cannot read {} (run `fleetctl collect` first): {e}",
            merged_path.display()
        ))
    })?;
    let records = decode_csv(&text, DecodeMode::Strict)?.records;

    let mut warnings = Vec::new();
    let registry = read_registry(config, &mut warnings);
    let grouped = group_by_site(records, &config.site_map);
    if !grouped.quarantine.is_empty() {
        warnings.push(format!(
            "{} record(s) with unresolvable site quarantined",
            grouped.quarantine.len()
        ));
    }

    let reports: Vec<_> = grouped
        .sites
        .iter()
        .map(|(site, records)| build_site_report(site, records, config.cv_threshold))
        .collect();
    for report in &reports {
        if !report.homogeneous {
            warnings.push(format!(
                "site {} looks heterogeneous (worst CV {:.4} > {})",
                report.site, report.cv_worst, config.cv_threshold
            ));
        }
    }
    let all_stats: Vec<SiteStats> = reports.iter().flat_map(|r| r.stats.clone()).collect();

    let mut distributions: Vec<FleetDistribution> = Vec::new();
    let mut missing_from_registry: Vec<String> = Vec::new();
    let mut attribute_values: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for attr in DISTRIBUTED_ATTRIBUTES {
        let with_ties = site_attribute(&grouped, attr);
        let mut values = BTreeMap::new();
        for (site, (value, tie)) in with_ties {
            if tie {
                warnings.push(format!(
                    "site {site}: modal {attr} tie broken lexicographically"
                ));
            }
            values.insert(site, value);
        }
        attribute_values.push((attr.to_string(), values));
    }
    // Middleware comes from the registry, restricted to measured sites.
    let middleware: BTreeMap<String, String> = registry
        .iter()
        .filter(|e| grouped.sites.contains_key(&e.site) && !e.middleware.is_empty())
        .map(|e| (e.site.clone(), e.middleware.clone()))
        .collect();
    attribute_values.push(("middleware".to_string(), middleware));

    for (attr, values) in &attribute_values {
        if values.is_empty() {
            continue;
        }
        for weighting in [Weighting::PerSite, Weighting::PerJob] {
            match fleet_distribution(attr, values, &registry, weighting) {
                Ok(d) => {
                    for site in &d.excluded_sites {
                        if !missing_from_registry.contains(site) {
                            missing_from_registry.push(site.clone());
                        }
                    }
                    distributions.push(d);
                }
                Err(AggregateError::EmptyFleet) => warnings.push(format!(
                    "distribution {attr}/{}: no sites qualify",
                    weighting.as_str()
                )),
                Err(e) => return Err(e.into()),
            }
        }
    }
    for site in missing_from_registry {
        warnings.push(format!(
            "site {site} is missing from the registry; excluded from per-job distributions"
        ));
    }

    std::fs::create_dir_all(&config.output)?;
    std::fs::write(config.output.join(SITE_STATS_FILE), site_stats_to_csv(&all_stats))?;
    std::fs::write(
        config.output.join(SITE_REPORTS_FILE),
        site_reports_to_csv(&reports, &registry),
    )?;
    std::fs::write(config.output.join(DISTRIBUTIONS_FILE), distributions_to_csv(&distributions))?;
    Ok(warnings)
}

fn key_filename(prefix: &str, key: &MetricKey, suffix: &str) -> String {
    format!("{prefix}_{}{suffix}", key.label().replace('/', "_"))
}

/// Render tables, pies and histograms from the aggregate outputs.
pub fn run_report(config: &CampaignConfig) -> Result<Vec<String>, CliError> {
    let read = |name: &str| -> Result<String, CliError> {
        let path = config.output.join(name);
        std::fs::read_to_string(&path).map_err(|e| {
            CliError::Data(format!(
                "cannot read {} (run `fleetctl aggregate` first): {e}",
                path.display()
            ))
        })
    };
    let stats = site_stats_from_csv(&read(SITE_STATS_FILE)?)?;
    let distributions = distributions_from_csv(&read(DISTRIBUTIONS_FILE)?)?;
    let merged = decode_csv(&read(MERGED_FILE)?, DecodeMode::Strict)?.records;

    let mut artifacts: Vec<(String, String)> = Vec::new();

    let present: Vec<MetricKey> = default_table_keys()
        .into_iter()
        .filter(|key| stats.iter().any(|s| &s.key == key))
        .collect();
    if !present.is_empty() {
        let table = render_table(&stats, &present)?;
        artifacts.push(("ranking_table.txt".to_string(), table.to_text()));
        artifacts.push(("ranking_table.csv".to_string(), table.to_csv()));
        // One ordered site list per key, best first.
        for key in &present {
            let ranked = rank_sites(&stats, key, direction_for(key))?;
            let name = key_filename("ranking", key, ".txt");
            let mut body = format!("{} (best first)\n", key.label());
            for (i, site) in ranked.iter().enumerate() {
                body.push_str(&format!("{}. {site}\n", i + 1));
            }
            artifacts.push((name, body));
        }
    }

    for d in &distributions {
        let name = format!(
            "pie_{}_{}.svg",
            d.attribute.replace('/', "_"),
            d.weighting.as_str()
        );
        artifacts.push((name, render_pie(d)?));
    }

    for key in default_histogram_keys() {
        let values: Vec<f64> = merged
            .iter()
            .filter(|r| r.status == Status::Ok && MetricKey::of(r) == key)
            .filter_map(|r| r.value)
            .collect();
        if values.is_empty() {
            continue;
        }
        let title = key.label();
        artifacts.push((
            key_filename("hist", &key, ".svg"),
            render_histogram(&title, &values, config.histogram_bins, None)?,
        ));
        artifacts.push((
            key_filename("hist", &key, "_zoom.svg"),
            render_histogram(
                &format!("{title} (zoom)"),
                &values,
                config.histogram_bins,
                Some(config.zoom_percentile),
            )?,
        ));
    }

    let report_dir = config.output.join(REPORT_DIR);
    write_artifacts(&report_dir, &artifacts)?;
    let mut names: Vec<String> = artifacts.into_iter().map(|(n, _)| n).collect();
    names.sort();
    Ok(names)
}

/// Ensure a record list round-trips as one file for tests and tooling.
pub fn write_records(path: &std::path::Path, records: &[BenchmarkRecord]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, encode_csv(records))?;
    Ok(())
}
