//! Workload generators and measurement helpers shared by the command-line benchmarks
//! and the acceptance tests.

pub mod alloc;
pub mod getters;
pub mod streaming;
pub mod synth;

/// High-water resident set size of this process, read from `/proc/self/status`.
/// `None` where that file is unavailable.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
