//! Inbox ingestion: decode every result file, resolve sites, merge and sort.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use fleetbench::results::{decode_csv, BenchmarkRecord, DecodeMode, DecodeWarning};

use crate::config::CampaignConfig;
use crate::CliError;

/// What happened to one inbox file.
#[derive(Debug)]
pub struct FileOutcome {
    pub file: String,
    pub rows: usize,
    pub skipped: Vec<DecodeWarning>,
}

/// Collection summary the operator reads to judge per-site coverage.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub files: Vec<FileOutcome>,
    /// Row counts per resolved site; unresolved rows count under `(none)`.
    pub per_site: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ingested {} file(s)", self.files.len())?;
        for file in &self.files {
            write!(f, "  {}: {} row(s)", file.file, file.rows)?;
            if file.skipped.is_empty() {
                writeln!(f)?;
            } else {
                writeln!(f, ", {} skipped", file.skipped.len())?;
                for w in &file.skipped {
                    writeln!(f, "    row at line {}: {}", w.line, w.reason)?;
                }
            }
        }
        writeln!(f, "rows per site:")?;
        for (site, count) in &self.per_site {
            let name = if site.is_empty() { "(none)" } else { site };
            writeln!(f, "  {name}: {count}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Decode every `*.csv` in the inbox. Strict mode aborts on the first
/// malformed row; lenient mode skips and reports it. Sites are resolved from
/// the record field or the hostname mapping, and the merged output is sorted
/// by (site, hostname, timestamp, metric, class, kind).
pub fn collect_inbox(
    dir: &Path,
    mode: DecodeMode,
    config: &CampaignConfig,
) -> Result<(Vec<BenchmarkRecord>, IngestReport), CliError> {
    let mut report = IngestReport::default();
    let mut merged: Vec<BenchmarkRecord> = Vec::new();

    let mut paths: Vec<_> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
            .collect(),
        Err(e) => {
            return Err(CliError::Data(format!("cannot read inbox {}: {e}", dir.display())))
        }
    };
    paths.sort();
    if paths.is_empty() {
        report.warnings.push(format!("inbox {} contains no CSV files", dir.display()));
    }

    for path in paths {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path)?;
        let decoded = decode_csv(&text, mode)
            .map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        let mut records = decoded.records;
        for record in &mut records {
            if record.site.is_empty() {
                if let Some(site) = config.site_map.get(&record.hostname) {
                    record.site = site.clone();
                }
            }
            *report.per_site.entry(record.site.clone()).or_default() += 1;
        }
        report.files.push(FileOutcome {
            file: name,
            rows: records.len(),
            skipped: decoded
                .warnings
                .into_iter()
                .filter(|w| !w.reason.starts_with("ignoring unknown column"))
                .collect(),
        });
        merged.extend(records);
    }

    merged.sort_by(|a, b| {
        (&a.site, &a.hostname, a.timestamp, &a.metric, &a.class, &a.kind).cmp(&(
            &b.site,
            &b.hostname,
            b.timestamp,
            &b.metric,
            &b.class,
            &b.kind,
        ))
    });
    Ok((merged, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fleetbench::results::{encode_csv, Unit, UtcTimestamp};

    fn record(host: &str, site: &str, metric: &str, kind: &str) -> BenchmarkRecord {
        BenchmarkRecord::ok(
            host,
            site,
            UtcTimestamp::fixed(),
            metric,
            "",
            kind,
            1.0,
            match metric {
                "stream_bw" => Unit::MBps,
                _ => Unit::Ns,
            },
            String::new(),
        )
    }

    fn write_inbox(dir: &Path, files: &[(&str, String)]) {
        std::fs::create_dir_all(dir).unwrap();
        for (name, text) in files {
            std::fs::write(dir.join(name), text).unwrap();
        }
    }

    #[test]
    fn merges_and_sorts_across_files() {
        let tmp = tempfile::tempdir().unwrap();
        let a = encode_csv(&[record("wn02", "SB", "mem_latency", "1024")]);
        let b = encode_csv(&[
            record("wn01", "SA", "mem_latency", "1024"),
            record("wn01", "SA", "bogomflops", ""),
        ]);
        write_inbox(tmp.path(), &[("a.csv", a), ("b.csv", b)]);
        let config = CampaignConfig::default();
        let (merged, report) =
            collect_inbox(tmp.path(), DecodeMode::Lenient, &config).unwrap();
        assert_eq!(merged.len(), 3);
        // Sorted by site first, then metric within the same host/timestamp.
        assert_eq!(merged[0].site, "SA");
        assert_eq!(merged[0].metric, "bogomflops");
        assert_eq!(merged[2].site, "SB");
        assert_eq!(report.per_site["SA"], 2);
        assert_eq!(report.per_site["SB"], 1);
    }

    #[test]
    fn lenient_mode_reports_file_and_line() {
        let tmp = tempfile::tempdir().unwrap();
        let mut text = encode_csv(&[record("wn01", "SA", "mem_latency", "1024")]);
        text.push_str("wn01,SA,bogus-time,mem_latency,,2048,1,ns,ok,\n");
        write_inbox(tmp.path(), &[("bad.csv", text)]);
        let config = CampaignConfig::default();
        let (merged, report) =
            collect_inbox(tmp.path(), DecodeMode::Lenient, &config).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(report.files[0].skipped.len(), 1);
        assert_eq!(report.files[0].skipped[0].line, 3);
    }

    #[test]
    fn strict_mode_aborts_without_output() {
        let tmp = tempfile::tempdir().unwrap();
        let mut text = encode_csv(&[record("wn01", "SA", "mem_latency", "1024")]);
        text.push_str("wn01,SA,bogus-time,mem_latency,,2048,1,ns,ok,\n");
        write_inbox(tmp.path(), &[("bad.csv", text)]);
        let config = CampaignConfig::default();
        let err = collect_inbox(tmp.path(), DecodeMode::Strict, &config).unwrap_err();
        assert!(matches!(err, CliError::Data(_)));
        assert!(err.to_string().contains("bad.csv"));
    }

    #[test]
    fn empty_inbox_warns() {
        let tmp = tempfile::tempdir().unwrap();
        let config = CampaignConfig::default();
        let (merged, report) =
            collect_inbox(tmp.path(), DecodeMode::Lenient, &config).unwrap();
        assert!(merged.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn hostname_map_resolves_sites_at_ingest() {
        let tmp = tempfile::tempdir().unwrap();
        let text = encode_csv(&[record("wn09", "", "mem_latency", "1024")]);
        write_inbox(tmp.path(), &[("x.csv", text)]);
        let mut config = CampaignConfig::default();
        config.site_map.insert("wn09".to_string(), "SC".to_string());
        let (merged, report) =
            collect_inbox(tmp.path(), DecodeMode::Lenient, &config).unwrap();
        assert_eq!(merged[0].site, "SC");
        assert_eq!(report.per_site["SC"], 1);
    }
}
