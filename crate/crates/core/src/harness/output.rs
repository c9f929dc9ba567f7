//! Files written after a run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::CaseRun;
use crate::error::{Error, Result};
use crate::mesh::write_dump;

pub const RESIDUALS_HEADER: &str = "cycle,max_resid,l2_resid,seconds";
pub const ERRORS_HEADER: &str = "cycle,l_inf,l2,l2_volume";

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `residuals.csv`, `errors.csv` (when an exact solution exists),
/// `mesh_stats.txt`, `config.txt` and, if enabled, the solution dump.
pub fn write_outputs(run: &CaseRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = &run.report;

    let mut csv = format!("{RESIDUALS_HEADER}\n");
    for h in &r.history {
        let _ = writeln!(csv, "{},{:e},{:e},{:e}", h.cycle, h.max_resid, h.l2_resid, h.seconds);
    }
    write(&dir.join("residuals.csv"), &csv)?;

    if let Some(errors) = &r.errors {
        let mut csv = format!("{ERRORS_HEADER}\n");
        for (h, e) in r.history.iter().zip(errors) {
            let _ = writeln!(csv, "{},{:e},{:e},{:e}", h.cycle, e.l_inf, e.l2, e.l2_volume);
        }
        write(&dir.join("errors.csv"), &csv)?;
    }

    let s = &r.stats;
    let mut stats = String::new();
    let _ = writeln!(stats, "dim {}", s.dim);
    let _ = writeln!(stats, "block_size {}", s.block_size);
    let _ = writeln!(stats, "levels {}", s.levels);
    let _ = writeln!(stats, "blocks {}", s.blocks);
    let _ = writeln!(stats, "leaf_blocks {}", s.leaf_blocks);
    let _ = writeln!(stats, "leaf_cells {}", s.leaf_cells);
    let _ = writeln!(stats, "boundary_blocks {}", s.boundary_blocks);
    let _ = writeln!(stats, "inside_cells {}", s.inside_cells);
    let _ = writeln!(stats, "dx_min {:e}", s.dx_min);
    let _ = writeln!(stats, "initial_max_resid {:e}", r.initial_resid.0);
    let _ = writeln!(stats, "cycles_run {}", r.history.len());
    let _ = writeln!(stats, "converged {}", r.converged);
    if let Some(f) = &r.failure {
        let _ = writeln!(stats, "failure {f}");
    }
    write(&dir.join("mesh_stats.txt"), &stats)?;

    write(&dir.join("config.txt"), &run.config.to_text())?;

    if run.config.dump {
        let mg = &run.solver;
        write_dump(mg.mesh(), mg.phi(), dir, "phi")?;
        for (name, data) in &run.extra_fields {
            write_dump(mg.mesh(), data, dir, name)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{config, run_case, CaseConfig};
    use super::*;

    #[test]
    fn zero_cycles_give_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = config::parse_pairs("case = sphere_uniform\nmax_level = 2\ncycles = 0\ndump = false").unwrap();
        let cfg = CaseConfig::from_pairs(&pairs).unwrap();
        let run = run_case(&cfg, |_| {}).unwrap();
        write_outputs(&run, dir.path()).unwrap();
        let res = fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
        assert_eq!(res, format!("{RESIDUALS_HEADER}\n"));
        let err = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
        assert_eq!(err, format!("{ERRORS_HEADER}\n"));
        assert!(!dir.path().join("phi.txt").exists());
    }
}
