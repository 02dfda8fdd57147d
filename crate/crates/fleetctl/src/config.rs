//! Campaign configuration: a sections + key/value text format, resolved
//! against defaults and command-line overrides.
//!
//! The config path comes from `--config`, then the `FLEETBENCH_CONFIG`
//! environment variable, then built-in defaults. See the repository README
//! for the full key reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fleetbench::microbench::{default_size_ladder, ChasePattern};
use fleetbench::results::DecodeMode;

use crate::CliError;

/// Environment variable naming the default config path.
pub const CONFIG_ENV: &str = "FLEETBENCH_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Real,
    /// Deterministic clock advancing a fixed step per read.
    Mock { step_ns: u64 },
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub registry: PathBuf,
    pub inbox: PathBuf,
    pub output: PathBuf,
    pub clock: ClockMode,
    pub seed: u64,
    pub repetitions: usize,
    pub min_duration_ms: u64,
    pub max_iterations: u64,
    pub mem_sizes: Vec<u64>,
    pub mem_pattern: ChasePattern,
    pub stride_bytes: u64,
    pub stream_len: usize,
    pub bogomflops_len: usize,
    pub cv_threshold: f64,
    pub probe_fixtures: Option<PathBuf>,
    pub hostname_override: Option<String>,
    pub site: String,
    pub decode_mode: DecodeMode,
    pub histogram_bins: usize,
    pub zoom_percentile: f64,
    pub site_map: BTreeMap<String, String>,
    /// Where this config was loaded from, for job plans to reference.
    pub config_path: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            registry: PathBuf::from("registry.csv"),
            inbox: PathBuf::from("inbox"),
            output: PathBuf::from("out"),
            clock: ClockMode::Real,
            seed: 0,
            repetitions: 5,
            min_duration_ms: 10,
            max_iterations: 1 << 40,
            mem_sizes: default_size_ladder(),
            mem_pattern: ChasePattern::RandomPermutation,
            stride_bytes: 64,
            stream_len: 1_000_000,
            bogomflops_len: 65_536,
            cv_threshold: 0.05,
            probe_fixtures: None,
            hostname_override: None,
            site: String::new(),
            decode_mode: DecodeMode::Lenient,
            histogram_bins: 10,
            zoom_percentile: 90.0,
            site_map: BTreeMap::new(),
            config_path: None,
        }
    }
}

/// Overrides carried on the command line; they win over the file.
#[derive(Debug, Default, Clone)]
pub struct CliOverrides {
    pub out: Option<PathBuf>,
    pub site: Option<String>,
    pub strict: bool,
    pub seed: Option<u64>,
}

impl CampaignConfig {
    /// Resolve the effective configuration.
    pub fn load(
        cli_path: Option<&Path>,
        overrides: &CliOverrides,
    ) -> Result<(Self, Vec<String>), CliError> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let path = cli_path.map(Path::to_path_buf).or(env_path);
        let (mut config, warnings) = match &path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                parse_config(&text)?
            }
            None => (CampaignConfig::default(), Vec::new()),
        };
        config.config_path = path;

        if let Some(out) = &overrides.out {
            config.output = out.clone();
        }
        if let Some(site) = &overrides.site {
            config.site = site.clone();
        }
        if overrides.strict {
            config.decode_mode = DecodeMode::Strict;
        }
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok((config, warnings))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.repetitions < 3 || self.repetitions % 2 == 0 {
            return Err(CliError::Usage(format!(
                "suite.repetitions must be odd and >= 3, got {}",
                self.repetitions
            )));
        }
        if let ClockMode::Mock { step_ns } = self.clock {
            if step_ns < 100 {
                return Err(CliError::Usage(format!(
                    "suite.mock_step_ns must be >= 100 (one batch must clear the batch floor), got {step_ns}"
                )));
            }
        }
        if !(self.zoom_percentile > 0.0 && self.zoom_percentile <= 100.0) {
            return Err(CliError::Usage(format!(
                "report.zoom_percentile must be in (0, 100], got {}",
                self.zoom_percentile
            )));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::Usage("report.histogram_bins must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Parse the sections + `key = value` format. `#` and `;` start comments.
/// Unknown keys are warnings, not errors, so configs stay forward-compatible.
pub fn parse_config(text: &str) -> Result<(CampaignConfig, Vec<String>), CliError> {
    let mut config = CampaignConfig::default();
    let mut warnings = Vec::new();
    let mut section = String::new();
    let mut mock_clock = false;
    let mut mock_step_ns = 1000u64;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected `key = value`, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        let fail = |what: &str| {
            CliError::Usage(format!("config line {}: bad {what} value {value:?}", lineno + 1))
        };

        match (section.as_str(), key) {
            ("paths", "registry") => config.registry = PathBuf::from(value),
            ("paths", "inbox") => config.inbox = PathBuf::from(value),
            ("paths", "output") => config.output = PathBuf::from(value),
            ("suite", "clock") => match value {
                "real" => mock_clock = false,
                "mock" => mock_clock = true,
                _ => return Err(fail("clock")),
            },
            ("suite", "mock_step_ns") => {
                mock_step_ns = value.parse().map_err(|_| fail("mock_step_ns"))?
            }
            ("suite", "seed") => config.seed = value.parse().map_err(|_| fail("seed"))?,
            ("suite", "repetitions") => {
                config.repetitions = value.parse().map_err(|_| fail("repetitions"))?
            }
            ("suite", "min_duration_ms") => {
                config.min_duration_ms = value.parse().map_err(|_| fail("min_duration_ms"))?
            }
            ("suite", "max_iterations") => {
                config.max_iterations = value.parse().map_err(|_| fail("max_iterations"))?
            }
            ("suite", "mem_sizes") => config.mem_sizes = parse_sizes(value).map_err(|_| fail("mem_sizes"))?,
            ("suite", "mem_pattern") => match value {
                "random" | "random_permutation" => {
                    config.mem_pattern = ChasePattern::RandomPermutation
                }
                "sequential" | "sequential_stride" => {
                    config.mem_pattern = ChasePattern::SequentialStride
                }
                _ => return Err(fail("mem_pattern")),
            },
            ("suite", "stride_bytes") => {
                config.stride_bytes = value.parse().map_err(|_| fail("stride_bytes"))?
            }
            ("suite", "stream_len") => {
                config.stream_len = value.parse().map_err(|_| fail("stream_len"))?
            }
            ("suite", "bogomflops_len") => {
                config.bogomflops_len = value.parse().map_err(|_| fail("bogomflops_len"))?
            }
            ("suite", "cv_threshold") => {
                config.cv_threshold = value.parse().map_err(|_| fail("cv_threshold"))?
            }
            ("probe", "fixtures") => config.probe_fixtures = Some(PathBuf::from(value)),
            ("probe", "hostname") => config.hostname_override = Some(value.to_string()),
            ("probe", "site") => config.site = value.to_string(),
            ("collect", "mode") => match value {
                "strict" => config.decode_mode = DecodeMode::Strict,
                "lenient" => config.decode_mode = DecodeMode::Lenient,
                _ => return Err(fail("mode")),
            },
            ("report", "histogram_bins") => {
                config.histogram_bins = value.parse().map_err(|_| fail("histogram_bins"))?
            }
            ("report", "zoom_percentile") => {
                config.zoom_percentile = value.parse().map_err(|_| fail("zoom_percentile"))?
            }
            ("sites", host) => {
                config.site_map.insert(host.to_string(), value.to_string());
            }
            _ => warnings.push(format!(
                "config line {}: unknown key {key:?} in section [{section}]",
                lineno + 1
            )),
        }
    }
    if mock_clock {
        config.clock = ClockMode::Mock { step_ns: mock_step_ns };
    }
    Ok((config, warnings))
}

/// Size lists accept raw bytes with optional k/m suffixes (KiB/MiB), the
/// word `default` for the built-in ladder, or `none` to skip the family.
fn parse_sizes(value: &str) -> Result<Vec<u64>, ()> {
    match value {
        "default" => return Ok(default_size_ladder()),
        "none" | "" => return Ok(Vec::new()),
        _ => {}
    }
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            let (number, mult) = match item.chars().last() {
                Some('k') | Some('K') => (&item[..item.len() - 1], 1024u64),
                Some('m') | Some('M') => (&item[..item.len() - 1], 1024 * 1024),
                _ => (item, 1),
            };
            number.parse::<u64>().map(|n| n * mult).map_err(|_| ())
        })
        .collect()
}
