//! Resident-memory readings from `/proc/self/status` (zero elsewhere).

/// `(VmRSS, VmHWM)` in bytes.
pub fn rss_and_peak() -> (u64, u64) {
    let Ok(status) = std::fs::read_to_string("/proc/self/status") else {
        return (0, 0);
    };
    (field(&status, "VmRSS:"), field(&status, "VmHWM:"))
}

fn field(status: &str, key: &str) -> u64 {
    status
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|v| v.trim().strip_suffix("kB"))
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map_or(0, |kb| kb * 1024)
}
