//! Thread-parallel drivers. Work is split into a fixed number of shards per
//! setting, so results do not depend on the thread count.

use eled_core::analysis::{self, FssScan, ScanPoint};
use eled_core::cascade::{self, CoincidenceHistogram, SimulationConfig};
use eled_core::quantum::MeasurementSetting;
use eled_core::Result;
use rayon::prelude::*;

/// Shards per setting. Part of the reproducibility contract: changing it
/// changes every simulated histogram.
pub const SHARDS: u32 = 16;

/// Parallel equivalent of `cascade::simulate_with(cfg, settings, n, seed, SHARDS)`.
pub fn simulate(cfg: &SimulationConfig, settings: &[MeasurementSetting], n_pulses: u64, seed: u64) -> Result<Vec<CoincidenceHistogram>> {
    cascade::check_request(cfg, settings, n_pulses)?;
    let jobs: Vec<(usize, u32)> = (0..settings.len()).flat_map(|i| (0..SHARDS).map(move |s| (i, s))).collect();
    let parts = jobs
        .par_iter()
        .map(|&(i, shard)| {
            let (a, b) = cascade::shard_range(n_pulses, SHARDS, shard);
            let mut rng = cascade::shard_stream(seed, settings[i], shard);
            cascade::simulate_pulses(cfg, settings[i], a, b, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<CoincidenceHistogram> =
        settings.iter().map(|&s| CoincidenceHistogram::empty(s, &cfg.histogram, cfg.drive.period())).collect();
    for (&(i, _), h) in jobs.iter().zip(&parts) {
        out[i].merge(h)?;
    }
    Ok(out)
}

/// Scan points in grid order, one parallel job per point.
pub fn scan_points(cfg: &SimulationConfig, grid: &[f64], n_pulses: u64, seed: u64, gate_width: Option<f64>) -> Result<Vec<ScanPoint>> {
    analysis::check_scan_grid(grid)?;
    cfg.validate()?;
    grid.par_iter()
        .enumerate()
        .map(|(i, &s)| analysis::scan_point(cfg, s, n_pulses, analysis::scan_point_seed(seed, i), gate_width, 1))
        .collect()
}

/// Parallel equivalent of `analysis::fidelity_vs_fss_scan`.
pub fn fss_scan(cfg: &SimulationConfig, grid: &[f64], n_pulses: u64, seed: u64, gate_width: Option<f64>) -> Result<FssScan> {
    analysis::finish_scan(scan_points(cfg, grid, n_pulses, seed, gate_width)?)
}

/// Run `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            f()
        }
    }
}
