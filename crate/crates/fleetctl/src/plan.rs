//! Job plans: the self-contained shell script a worker node runs to probe
//! itself, benchmark itself, and leave exactly one result CSV behind.

use crate::config::CampaignConfig;

/// Ordered command list the remote job executes: probe, then bench, which
/// writes one `<hostname>-<timestamp>.csv` into the job's output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobPlan {
    pub commands: Vec<String>,
}

/// Build the plan for one node run. The probe output goes to the job log;
/// the bench step (which re-runs the probe internally) writes the single
/// result file.
pub fn build_job_plan(config: &CampaignConfig) -> JobPlan {
    let mut common = String::new();
    if let Some(path) = &config.config_path {
        let canonical = std::fs::canonicalize(path).unwrap_or_else(|_| path.clone());
        common.push_str(&format!(" --config {}", shell_quote(&canonical.to_string_lossy())));
    }
    let mut bench = format!("fleetctl bench{common} --out \"$OUT_DIR\"");
    if !config.site.is_empty() {
        bench.push_str(&format!(" --site {}", shell_quote(&config.site)));
    }
    bench.push_str(&format!(" --seed {}", config.seed));
    JobPlan { commands: vec![format!("fleetctl probe{common}"), bench] }
}

/// Render the plan as a portable POSIX shell script. The single argument is
/// the output directory (defaults to the working directory).
pub fn render_script(plan: &JobPlan) -> String {
    let mut script = String::from(
        "#!/bin/sh\n\
         # fleetbench node job: inventory probe + microbenchmark suite.\n\
         # Usage: job.sh [output-dir]; leaves one <hostname>-<timestamp>.csv there.\n\
         set -eu\n\
         OUT_DIR=\"${1:-.}\"\n",
    );
    for command in &plan.commands {
        script.push_str(command);
        script.push('\n');
    }
    script
}

/// Quote a value for POSIX sh when it contains anything unsafe.
fn shell_quote(s: &str) -> String {
    if !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '/' | '.' | '-' | '_' | ':'))
    {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', "'\\''"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_orders_probe_before_bench() {
        let config = CampaignConfig { site: "SA".to_string(), ..Default::default() };
        let plan = build_job_plan(&config);
        assert_eq!(plan.commands.len(), 2);
        assert!(plan.commands[0].starts_with("fleetctl probe"));
        assert!(plan.commands[1].starts_with("fleetctl bench"));
        assert!(plan.commands[1].contains("--site SA"));
        assert!(plan.commands[1].contains("--out \"$OUT_DIR\""));
    }

    #[test]
    fn script_is_posix_with_default_outdir() {
        let plan = build_job_plan(&CampaignConfig::default());
        let script = render_script(&plan);
        assert!(script.starts_with("#!/bin/sh\n"));
        assert!(script.contains("set -eu"));
        assert!(script.contains("OUT_DIR=\"${1:-.}\""));
        assert!(script.ends_with('\n'));
    }

    #[test]
    fn awkward_site_names_are_quoted() {
        let config = CampaignConfig { site: "site with space".to_string(), ..Default::default() };
        let plan = build_job_plan(&config);
        assert!(plan.commands[1].contains("--site 'site with space'"));
    }
}
