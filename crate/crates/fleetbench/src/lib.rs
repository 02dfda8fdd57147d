//! Grid-node characterization toolkit.
//!
//! The crate has two halves. The probe half runs on a worker node: `inventory`
//! collects the machine's hardware/software identity and `microbench` (driven
//! by the `timing` harness) measures arithmetic-operation latency, memory
//! latency and stream bandwidth. The analysis half runs wherever results land:
//! `results` is the CSV interchange layer, `aggregate` computes per-site
//! statistics and fleet-wide distributions, and `report` renders tables, pie
//! charts and histograms from them.

pub mod aggregate;
pub mod inventory;
pub mod microbench;
pub mod report;
pub mod results;
pub mod timing;
