//! Part one of the probe: the node's hardware and software identity,
//! collected from operating-system information sources.
//!
//! An [`InfoSource`] maps named probe targets to raw text; the live source
//! reads `/proc` and release files, the directory source replays fixture
//! files, which is what makes collection testable offline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use crate::results::{metric, BenchmarkRecord, Status, Unit, UtcTimestamp};

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("{target}: no processor stanza found")]
    NoProcessorStanza { target: ProbeTarget },
    #[error("{target}: no total-memory line found")]
    MissingTotal { target: ProbeTarget },
    #[error("kernel version {0:?} has no leading numeric components")]
    UnparseableKernelVersion(String),
    #[error("required probe target {0} is absent")]
    MissingTarget(ProbeTarget),
    #[error("{target}: {reason}")]
    Parse { target: ProbeTarget, reason: String },
}

/// Named probe targets; the names double as the fixture-file contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProbeTarget {
    Cpuinfo,
    Meminfo,
    Version,
    DistroRelease,
    Environment,
    Disks,
    Packages,
    KernelMessages,
}

impl ProbeTarget {
    pub const ALL: [ProbeTarget; 8] = [
        ProbeTarget::Cpuinfo,
        ProbeTarget::Meminfo,
        ProbeTarget::Version,
        ProbeTarget::DistroRelease,
        ProbeTarget::Environment,
        ProbeTarget::Disks,
        ProbeTarget::Packages,
        ProbeTarget::KernelMessages,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProbeTarget::Cpuinfo => "cpuinfo",
            ProbeTarget::Meminfo => "meminfo",
            ProbeTarget::Version => "version",
            ProbeTarget::DistroRelease => "distro-release",
            ProbeTarget::Environment => "environment",
            ProbeTarget::Disks => "disks",
            ProbeTarget::Packages => "packages",
            ProbeTarget::KernelMessages => "kernel-messages",
        }
    }
}

impl fmt::Display for ProbeTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reader mapping probe targets to raw text. `None` is an explicit absent
/// marker, never to be conflated with empty text.
pub trait InfoSource {
    fn read(&self, target: ProbeTarget) -> Option<String>;

    /// Node hostname, when the source knows it.
    fn hostname(&self) -> Option<String> {
        None
    }
}

/// Replays fixture files named after the probe targets from one directory.
/// An optional `hostname` file supplies the node name.
pub struct DirSource {
    dir: PathBuf,
}

impl DirSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirSource { dir: dir.into() }
    }
}

impl InfoSource for DirSource {
    fn read(&self, target: ProbeTarget) -> Option<String> {
        std::fs::read_to_string(self.dir.join(target.as_str())).ok()
    }

    fn hostname(&self) -> Option<String> {
        std::fs::read_to_string(self.dir.join("hostname"))
            .ok()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    }
}

/// Release files probed in order for the distro identity; the first one that
/// exists answers.
pub const DEFAULT_RELEASE_FILES: [&str; 4] =
    ["/etc/os-release", "/etc/redhat-release", "/etc/lsb-release", "/etc/debian_version"];

/// Reads the live system: `/proc`, release files, the process environment,
/// and best-effort package/kernel-message captures via system tools.
pub struct LiveSource {
    proc_root: PathBuf,
    release_files: Vec<PathBuf>,
    /// Spawn `dpkg`/`rpm`/`dmesg` for the opaque blobs; disable for hermetic runs.
    capture_commands: bool,
}

impl LiveSource {
    pub fn new() -> Self {
        LiveSource {
            proc_root: PathBuf::from("/proc"),
            release_files: DEFAULT_RELEASE_FILES.iter().map(PathBuf::from).collect(),
            capture_commands: true,
        }
    }

    pub fn without_commands(mut self) -> Self {
        self.capture_commands = false;
        self
    }

    fn read_proc(&self, name: &str) -> Option<String> {
        std::fs::read_to_string(self.proc_root.join(name)).ok()
    }

    fn first_release_file(&self) -> Option<String> {
        for path in &self.release_files {
            if let Ok(text) = std::fs::read_to_string(path) {
                return Some(format!("{}\n{}", path.display(), text));
            }
        }
        None
    }

    fn capture(&self, candidates: &[(&str, &[&str])]) -> Option<String> {
        if !self.capture_commands {
            return None;
        }
        for (cmd, args) in candidates {
            if let Ok(out) = Command::new(cmd).args(*args).output() {
                if out.status.success() && !out.stdout.is_empty() {
                    let mut text = String::from_utf8_lossy(&out.stdout).into_owned();
                    // Cap runaway captures; these are opaque context, not data.
                    if text.len() > 256 * 1024 {
                        text.truncate(256 * 1024);
                    }
                    return Some(text);
                }
            }
        }
        None
    }
}

impl Default for LiveSource {
    fn default() -> Self {
        Self::new()
    }
}

impl InfoSource for LiveSource {
    fn read(&self, target: ProbeTarget) -> Option<String> {
        match target {
            ProbeTarget::Cpuinfo => self.read_proc("cpuinfo"),
            ProbeTarget::Meminfo => self.read_proc("meminfo"),
            ProbeTarget::Version => self.read_proc("version"),
            ProbeTarget::DistroRelease => self.first_release_file(),
            ProbeTarget::Environment => {
                let mut lines: Vec<String> =
                    std::env::vars().map(|(k, v)| format!("{k}={v}")).collect();
                lines.sort();
                Some(lines.join("\n"))
            }
            ProbeTarget::Disks => self.read_proc("partitions"),
            ProbeTarget::Packages => self.capture(&[("dpkg-query", &["-W"]), ("rpm", &["-qa"])]),
            ProbeTarget::KernelMessages => std::fs::read_to_string("/var/log/dmesg")
                .ok()
                .or_else(|| self.capture(&[("dmesg", &[])])),
        }
    }

    fn hostname(&self) -> Option<String> {
        std::fs::read_to_string(self.proc_root.join("sys/kernel/hostname"))
            .ok()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .or_else(|| std::env::var("HOSTNAME").ok().filter(|s| !s.is_empty()))
    }
}

/// One machine's hardware/software identity.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInventory {
    pub hostname: String,
    pub timestamp: UtcTimestamp,
    pub cpu_model: String,
    pub cpu_vendor: String,
    pub cpu_mhz: f64,
    pub cpu_count: u64,
    pub memory_kb: u64,
    pub kernel_version: String,
    /// First two dotted components of the kernel version.
    pub kernel_base: String,
    pub kernel_smp: bool,
    pub distro: String,
    /// Which release file answered the distro probe.
    pub distro_source: Option<String>,
    /// Environment capture with credential-looking names removed.
    pub env_capture: Vec<(String, String)>,
    pub packages_blob: Option<String>,
    pub kernel_messages_blob: Option<String>,
    pub disks_blob: Option<String>,
    /// Oddities observed while probing, e.g. heterogeneous CPU stanzas.
    pub warnings: Vec<String>,
}

/// Environment names containing any of these fragments are never captured:
/// grid proxies and credentials live in environment variables.
pub const ENV_DENY_LIST: [&str; 5] = ["PASS", "SECRET", "TOKEN", "KEY", "PROXY"];

fn deny_listed(name: &str) -> bool {
    let upper = name.to_ascii_uppercase();
    ENV_DENY_LIST.iter().any(|frag| upper.contains(frag))
}

/// Parsed fields of one cpuinfo read.
#[derive(Debug, Clone, PartialEq)]
pub struct CpuInfo {
    pub model: String,
    pub vendor: String,
    pub mhz: f64,
    pub count: u64,
    /// Set when stanzas disagree on the model; nodes are expected to be
    /// internally homogeneous.
    pub heterogeneous: bool,
}

fn stanza_value(line: &str) -> String {
    line.split_once(':').map(|(_, v)| v.trim().to_string()).unwrap_or_default()
}

/// Parse `/proc/cpuinfo`-shaped text: count processor stanzas and take
/// model/vendor/MHz from the first one.
pub fn parse_cpuinfo(raw: &str) -> Result<CpuInfo, InventoryError> {
    let mut count = 0u64;
    let mut model = None;
    let mut vendor = None;
    let mut mhz = None;
    let mut models = Vec::new();
    for line in raw.lines() {
        let key = line.split(':').next().unwrap_or("").trim();
        match key {
            "processor" => count += 1,
            "model name" => {
                let v = stanza_value(line);
                if model.is_none() {
                    model = Some(v.clone());
                }
                models.push(v);
            }
            "vendor_id" if vendor.is_none() => vendor = Some(stanza_value(line)),
            "cpu MHz" if mhz.is_none() => {
                let v = stanza_value(line);
                mhz = Some(v.parse::<f64>().map_err(|_| InventoryError::Parse {
                    target: ProbeTarget::Cpuinfo,
                    reason: format!("bad cpu MHz {v:?}"),
                })?);
            }
            _ => {}
        }
    }
    if count == 0 {
        return Err(InventoryError::NoProcessorStanza { target: ProbeTarget::Cpuinfo });
    }
    let first = models.first().cloned().unwrap_or_default();
    Ok(CpuInfo {
        heterogeneous: models.iter().any(|m| *m != first),
        model: normalize_ws(&model.unwrap_or_default()),
        vendor: vendor.unwrap_or_default(),
        mhz: mhz.unwrap_or(0.0),
        count,
    })
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Read the total-memory line of `/proc/meminfo`-shaped text, in kB.
pub fn parse_meminfo(raw: &str) -> Result<u64, InventoryError> {
    for line in raw.lines() {
        if let Some(rest) = line.strip_prefix("MemTotal:") {
            let number = rest.trim().split_whitespace().next().unwrap_or("");
            return number.parse().map_err(|_| InventoryError::Parse {
                target: ProbeTarget::Meminfo,
                reason: format!("bad MemTotal {number:?}"),
            });
        }
    }
    Err(InventoryError::MissingTotal { target: ProbeTarget::Meminfo })
}

/// Classify a kernel version string: base = first two dot-separated numeric
/// components, smp = version contains "smp" case-insensitively.
pub fn classify_kernel(version: &str) -> Result<(String, bool), InventoryError> {
    let mut parts = version.split('.');
    let first = parts.next().unwrap_or("");
    let second = parts.next().unwrap_or("");
    let first_num: String = first.chars().take_while(|c| c.is_ascii_digit()).collect();
    let second_num: String = second.chars().take_while(|c| c.is_ascii_digit()).collect();
    if first_num.is_empty() || first_num != first || second_num.is_empty() {
        return Err(InventoryError::UnparseableKernelVersion(version.to_string()));
    }
    let smp = version.to_ascii_lowercase().contains("smp");
    Ok((format!("{first_num}.{second_num}"), smp))
}

/// Pull the kernel version token out of a `/proc/version` line, or accept a
/// bare version string.
fn version_token(raw: &str) -> String {
    let first_line = raw.lines().next().unwrap_or("").trim();
    if let Some(rest) = first_line.strip_prefix("Linux version ") {
        rest.split_whitespace().next().unwrap_or("").to_string()
    } else {
        first_line.split_whitespace().next().unwrap_or("").to_string()
    }
}

/// Extract a human-readable distro name from a release-file capture. The
/// capture's first line is the answering path when the live source produced
/// it; fixture files may carry the content directly.
fn parse_distro(raw: &str) -> (String, Option<String>) {
    let mut lines = raw.lines();
    let (source, body): (Option<String>, Vec<&str>) = match lines.next() {
        Some(first) if first.starts_with('/') => (Some(first.to_string()), lines.collect()),
        Some(first) => (None, std::iter::once(first).chain(lines).collect()),
        None => (None, Vec::new()),
    };
    // os-release style: prefer PRETTY_NAME, then fall back line formats.
    for key in ["PRETTY_NAME=", "DISTRIB_DESCRIPTION=", "NAME="] {
        for line in &body {
            if let Some(v) = line.strip_prefix(key) {
                return (v.trim_matches('"').to_string(), source);
            }
        }
    }
    let first = body.first().map(|s| s.trim()).unwrap_or("");
    if first.is_empty() {
        ("unknown".to_string(), source)
    } else {
        (first.to_string(), source)
    }
}

fn parse_environment(raw: &str) -> Vec<(String, String)> {
    raw.lines()
        .filter_map(|line| line.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .filter(|(k, _)| !k.is_empty() && !deny_listed(k))
        .collect()
}

/// Assemble a [`NodeInventory`] from a source. Cpuinfo, meminfo and the
/// kernel version are required; everything else degrades to absent markers
/// or "unknown".
pub fn collect_inventory(
    source: &dyn InfoSource,
    timestamp: UtcTimestamp,
) -> Result<NodeInventory, InventoryError> {
    let require =
        |target: ProbeTarget| source.read(target).ok_or(InventoryError::MissingTarget(target));
    let cpu = parse_cpuinfo(&require(ProbeTarget::Cpuinfo)?)?;
    let memory_kb = parse_meminfo(&require(ProbeTarget::Meminfo)?)?;
    let kernel_version = version_token(&require(ProbeTarget::Version)?);
    let (kernel_base, kernel_smp) = classify_kernel(&kernel_version)?;

    let mut warnings = Vec::new();
    if cpu.heterogeneous {
        warnings.push("cpuinfo stanzas disagree on cpu model".to_string());
    }

    let (distro, distro_source) = match source.read(ProbeTarget::DistroRelease) {
        Some(raw) => parse_distro(&raw),
        None => ("unknown".to_string(), None),
    };
    let env_capture = source
        .read(ProbeTarget::Environment)
        .map(|raw| parse_environment(&raw))
        .unwrap_or_default();

    Ok(NodeInventory {
        hostname: source.hostname().unwrap_or_else(|| "unknown-host".to_string()),
        timestamp,
        cpu_model: cpu.model,
        cpu_vendor: cpu.vendor,
        cpu_mhz: cpu.mhz,
        cpu_count: cpu.count,
        memory_kb,
        kernel_version,
        kernel_base,
        kernel_smp,
        distro,
        distro_source,
        env_capture,
        packages_blob: source.read(ProbeTarget::Packages),
        kernel_messages_blob: source.read(ProbeTarget::KernelMessages),
        disks_blob: source.read(ProbeTarget::Disks),
        warnings,
    })
}

/// Serialize an inventory as benchmark records (metric = `inventory`, kind =
/// field name, textual value in `note`) so one codec carries everything.
pub fn inventory_to_records(inv: &NodeInventory, site: &str) -> Vec<BenchmarkRecord> {
    let mut records = Vec::new();
    let mut push = |kind: &str, note: String| {
        records.push(BenchmarkRecord {
            hostname: inv.hostname.clone(),
            site: site.to_string(),
            timestamp: inv.timestamp,
            metric: metric::INVENTORY.to_string(),
            class: String::new(),
            kind: kind.to_string(),
            value: None,
            unit: Unit::None,
            status: Status::Ok,
            note,
        });
    };
    push("hostname", inv.hostname.clone());
    push("cpu_model", inv.cpu_model.clone());
    push("cpu_vendor", inv.cpu_vendor.clone());
    push("cpu_mhz", crate::results::format_value(inv.cpu_mhz));
    push("cpu_count", inv.cpu_count.to_string());
    push("memory_kb", inv.memory_kb.to_string());
    push("kernel_version", inv.kernel_version.clone());
    push("kernel_base", inv.kernel_base.clone());
    push("kernel_smp", inv.kernel_smp.to_string());
    push("distro", inv.distro.clone());
    if let Some(src) = &inv.distro_source {
        push("distro_source", src.clone());
    }
    for (name, value) in &inv.env_capture {
        push(&format!("env:{name}"), value.clone());
    }
    for warning in &inv.warnings {
        push("warning", warning.clone());
    }
    let mut absent = Vec::new();
    for (kind, blob) in [
        ("packages", &inv.packages_blob),
        ("kernel_messages", &inv.kernel_messages_blob),
        ("disks", &inv.disks_blob),
    ] {
        match blob {
            Some(text) => push(kind, text.clone()),
            None => absent.push(BenchmarkRecord::missing(
                &inv.hostname,
                site,
                inv.timestamp,
                metric::INVENTORY,
                "",
                kind,
                Unit::None,
                "target absent".to_string(),
            )),
        }
    }
    drop(push);
    records.extend(absent);
    records
}

/// In-memory source for tests and replay.
pub struct MapSource {
    pub targets: BTreeMap<ProbeTarget, String>,
    pub host: Option<String>,
}

impl MapSource {
    pub fn new() -> Self {
        MapSource { targets: BTreeMap::new(), host: None }
    }

    pub fn with(mut self, target: ProbeTarget, text: &str) -> Self {
        self.targets.insert(target, text.to_string());
        self
    }
}

impl Default for MapSource {
    fn default() -> Self {
        Self::new()
    }
}

impl InfoSource for MapSource {
    fn read(&self, target: ProbeTarget) -> Option<String> {
        self.targets.get(&target).cloned()
    }

    fn hostname(&self) -> Option<String> {
        self.host.clone()
    }
}

/// Write fixture files for a replayable source; the inverse of [`DirSource`].
pub fn write_fixture_dir(dir: &Path, source: &MapSource) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (target, text) in &source.targets {
        std::fs::write(dir.join(target.as_str()), text)?;
    }
    if let Some(host) = &source.host {
        std::fs::write(dir.join("hostname"), host)?;
    }
    Ok(())
}
