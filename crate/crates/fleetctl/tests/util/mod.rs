//! Shared helpers for driving the fleetctl binary in tests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Invocation {
    pub status: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

pub fn fleetctl(args: &[&str], cwd: &Path, envs: &[(&str, &str)]) -> Invocation {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fleetctl"));
    cmd.args(args).current_dir(cwd).env_remove("FLEETBENCH_CONFIG");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let Output { status, stdout, stderr } = cmd.output().expect("spawn fleetctl");
    Invocation {
        status: status.code(),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    }
}

/// A runnable campaign directory: probe fixtures, mock-clock config, registry.
pub fn write_mock_campaign(dir: &Path, site: &str, hostname: &str) -> PathBuf {
    let fixtures = dir.join("fixtures").join(hostname);
    std::fs::create_dir_all(&fixtures).unwrap();
    std::fs::write(
        fixtures.join("cpuinfo"),
        "processor\t: 0\nvendor_id\t: GenuineIntel\nmodel name\t: Intel(R) Xeon(TM) CPU 2.80GHz\ncpu MHz\t\t: 2800.000\n\nprocessor\t: 1\nvendor_id\t: GenuineIntel\nmodel name\t: Intel(R) Xeon(TM) CPU 2.80GHz\ncpu MHz\t\t: 2800.000\n",
    )
    .unwrap();
    std::fs::write(fixtures.join("meminfo"), "MemTotal:      2075088 kB\n").unwrap();
    std::fs::write(fixtures.join("version"), "Linux version 2.4.21-47.EL.cernsmp (gcc)\n").unwrap();
    std::fs::write(fixtures.join("distro-release"), "Scientific Linux CERN Release 3.0.8\n").unwrap();
    std::fs::write(fixtures.join("environment"), "HOME=/home/grid\nPATH=/bin\n").unwrap();
    std::fs::write(fixtures.join("hostname"), hostname).unwrap();

    std::fs::write(
        dir.join("registry.csv"),
        "site,jobslots,middleware\nSA,10,glite-3.0.0\nSB,30,glite-3.0.0\nSC,60,lcg-2.7\n",
    )
    .unwrap();

    let config = dir.join("campaign.conf");
    std::fs::write(
        &config,
        format!(
            "[paths]\nregistry = registry.csv\ninbox = inbox\noutput = out\n\n\
             [suite]\nclock = mock\nmock_step_ns = 1000\nseed = 7\nrepetitions = 3\n\
             mem_sizes = 1k,2k,4k,8k,16k\nstream_len = 256\nbogomflops_len = 1024\n\n\
             [probe]\nfixtures = fixtures/{hostname}\nsite = {site}\n"
        ),
    )
    .unwrap();
    config
}
