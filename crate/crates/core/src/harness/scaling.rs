//! Per-cycle timing across grid and block sizes.

use std::fmt::Write as _;

use super::{run_case, CaseConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow {
    pub dim: usize,
    /// Cells per axis on the finest level.
    pub size: usize,
    pub block_size: usize,
    pub cells: usize,
    pub cycles: usize,
    pub seconds_per_cycle: f64,
    /// Time and cell-count ratios to the previous size with the same block size.
    pub time_ratio: Option<f64>,
    pub cell_ratio: Option<f64>,
}

pub const SCALING_HEADER: &str = "dim,size,block_size,cells,cycles,seconds_per_cycle,time_ratio,cell_ratio";

/// Refinement level whose uniform grid has `size` cells per axis.
pub fn level_for_size(size: usize, block_size: usize) -> Result<usize> {
    if block_size == 0 || size % block_size != 0 || !(size / block_size).is_power_of_two() {
        return Err(Error::Config(format!(
            "grid size {size} is not a power-of-two multiple of block size {block_size}"
        )));
    }
    Ok((size / block_size).trailing_zeros() as usize + 1)
}

/// Runs `base` on uniform grids of every size for every block size and
/// averages the time per cycle.
pub fn scaling_probe(base: &CaseConfig, sizes: &[usize], blocks: &[usize]) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &n in blocks {
        let mut prev: Option<ScalingRow> = None;
        for &size in sizes {
            let mut cfg = base.clone();
            cfg.block_size = n;
            cfg.max_level = level_for_size(size, n)?;
            cfg.dump = false;
            let run = run_case(&cfg, |_| {})?;
            let r = &run.report;
            let row = ScalingRow {
                dim: cfg.dim,
                size,
                block_size: n,
                cells: r.stats.leaf_cells,
                cycles: r.history.len(),
                seconds_per_cycle: r.mean_seconds(),
                time_ratio: prev.map(|p| r.mean_seconds() / p.seconds_per_cycle),
                cell_ratio: prev.map(|p| r.stats.leaf_cells as f64 / p.cells as f64),
            };
            rows.push(row);
            prev = Some(row);
        }
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    let mut s = format!("{SCALING_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{},{}",
            r.dim,
            r.size,
            r.block_size,
            r.cells,
            r.cycles,
            r.seconds_per_cycle,
            opt(r.time_ratio),
            opt(r.cell_ratio)
        );
    }
    s
}
