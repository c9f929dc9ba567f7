//! Experiment driver behind the command-line tool.

pub mod cases;
pub mod config;
pub mod output;
pub mod scaling;

use std::time::Instant;

pub use cases::{build_problem, stencil_config, Problem};
pub use config::{CaseConfig, CaseId};
pub use output::write_outputs;
pub use scaling::{scaling_probe, ScalingRow};

use crate::error::{Error, Result};
use crate::fields::{self, ErrorNorms};
use crate::multigrid::{CycleRecord, Multigrid};
use crate::stencil::Stencils;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeshStats {
    pub dim: usize,
    pub block_size: usize,
    pub levels: usize,
    pub blocks: usize,
    pub leaf_blocks: usize,
    pub leaf_cells: usize,
    /// Blocks whose stencil is modified by an irregular boundary.
    pub boundary_blocks: usize,
    /// Leaf cells pinned inside objects.
    pub inside_cells: usize,
    pub dx_min: f64,
}

impl MeshStats {
    pub fn collect(mg: &Multigrid) -> Self {
        let mesh = mg.mesh();
        let st = mg.stencils();
        let leaves: Vec<usize> = mesh.leaves().collect();
        let inside_cells = leaves
            .iter()
            .filter_map(|&id| st.block(id).as_boundary())
            .map(|b| b.num_inside())
            .sum();
        MeshStats {
            dim: mesh.dim(),
            block_size: mesh.block_size(),
            levels: mesh.num_levels(),
            blocks: mesh.num_blocks(),
            leaf_blocks: leaves.len(),
            leaf_cells: mesh.num_leaf_cells(),
            boundary_blocks: st.num_boundary_blocks(),
            inside_cells,
            dx_min: mesh.dx(mesh.num_levels()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CaseReport {
    /// Max and RMS leaf residual of the initial guess.
    pub initial_resid: (f64, f64),
    pub history: Vec<CycleRecord>,
    /// Error after each cycle, when the case has an exact solution.
    pub errors: Option<Vec<ErrorNorms>>,
    pub stats: MeshStats,
    /// Whether the stop criterion was met. Without one, whether all cycles ran.
    pub converged: bool,
    /// Solver failure that ended the run early.
    pub failure: Option<String>,
    pub setup_seconds: f64,
}

impl CaseReport {
    /// Residual reduction of each cycle; the first is relative to the
    /// initial guess.
    pub fn reduction_factors(&self) -> Vec<f64> {
        let mut prev = self.initial_resid.0;
        self.history
            .iter()
            .map(|r| {
                let f = prev / r.max_resid;
                prev = r.max_resid;
                f
            })
            .collect()
    }

    /// Geometric mean of the reduction factors of cycles `first..=last`
    /// (1-based).
    pub fn mean_reduction(&self, first: usize, last: usize) -> Option<f64> {
        if first == 0 || first > last || last > self.history.len() {
            return None;
        }
        let f = self.reduction_factors();
        let logs: f64 = f[first - 1..last].iter().map(|v| v.ln()).sum();
        Some((logs / (last + 1 - first) as f64).exp())
    }

    pub fn mean_seconds(&self) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        self.history.iter().map(|r| r.seconds).sum::<f64>() / self.history.len() as f64
    }
}

/// A finished (or aborted) run with the solver state kept for output.
pub struct CaseRun {
    pub config: CaseConfig,
    pub report: CaseReport,
    pub solver: Multigrid,
    /// Extra cell fields written next to the solution dump.
    pub extra_fields: Vec<(String, Vec<f64>)>,
}

/// Builds the case, runs the configured cycles and collects diagnostics.
/// `on_cycle` sees every cycle record as it completes.
pub fn run_case(cfg: &CaseConfig, on_cycle: impl FnMut(&CycleRecord) + Send) -> Result<CaseRun> {
    cfg.validate()?;
    if cfg.threads == 0 {
        return run_case_inner(cfg, on_cycle);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} threads: {e}", cfg.threads)))?;
    pool.install(|| run_case_inner(cfg, on_cycle))
}

fn run_case_inner(cfg: &CaseConfig, mut on_cycle: impl FnMut(&CycleRecord)) -> Result<CaseRun> {
    let t0 = Instant::now();
    let problem = build_problem(cfg)?;
    let values = problem.lsf.boundary_values();
    let stencils = Stencils::build(&problem.mesh, &problem.lsf, &values, &stencil_config(cfg));
    let mut mg = Multigrid::new(problem.mesh, stencils, cfg.mg_config())?;
    if let Some(g) = &problem.rhs {
        mg.set_rhs(|x| g(x));
    }
    let initial_resid = mg.leaf_residual();
    let target = cfg.target_resid.max(cfg.rel_tol * initial_resid.0);
    mg.set_target_resid(target);
    let setup_seconds = t0.elapsed().as_secs_f64();

    let mut history = Vec::new();
    let mut errors = problem.exact.as_ref().map(|_| Vec::new());
    let outcome = mg.solve(|rec, mg| {
        history.push(*rec);
        if let (Some(errs), Some(exact)) = (errors.as_mut(), problem.exact.as_ref()) {
            errs.push(fields::error_norms(mg.mesh(), mg.stencils(), mg.phi(), |x| exact(x)));
        }
        on_cycle(rec);
    });
    let (converged, failure) = match outcome {
        Ok(met) => (met || (target == 0.0 && history.len() == cfg.cycles), None),
        Err(e @ Error::CoarseSolve { .. }) => (false, Some(e.to_string())),
        Err(e) => return Err(e),
    };

    let mut extra_fields = Vec::new();
    if cfg.case == CaseId::TwoElectrodes {
        mg.fill_all_ghosts();
        let faces = fields::face_gradient(mg.mesh(), mg.stencils(), mg.phi());
        let mag = fields::gradient_magnitude(mg.mesh(), mg.stencils(), &faces);
        extra_fields.push(("grad_norm".to_owned(), mag));
    }

    let report = CaseReport {
        initial_resid,
        history,
        errors,
        stats: MeshStats::collect(&mg),
        converged,
        failure,
        setup_seconds,
    };
    Ok(CaseRun {
        config: cfg.clone(),
        report,
        solver: mg,
        extra_fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(case: &str, extra: &str) -> CaseConfig {
        let text = format!("case = {case}\nthreads = 1\n{extra}");
        CaseConfig::from_pairs(&config::parse_pairs(&text).unwrap()).unwrap()
    }

    #[test]
    fn sphere_run_records_every_cycle() {
        let cfg = small("sphere_uniform", "max_level = 4\ncycles = 4");
        let run = run_case(&cfg, |_| {}).unwrap();
        let r = &run.report;
        assert_eq!(r.history.len(), 4);
        assert_eq!(r.errors.as_ref().unwrap().len(), 4);
        assert!(r.converged);
        assert!(r.mean_reduction(2, 4).unwrap() > 10.0);
        assert_eq!(r.stats.leaf_cells, 64 * 64);
    }

    #[test]
    fn relative_target_stops_early() {
        let cfg = small("manufactured", "max_level = 4\ncycles = 30\nrel_tol = 1e-6");
        let run = run_case(&cfg, |_| {}).unwrap();
        assert!(run.report.converged);
        assert!(run.report.history.len() < 30);
        let last = run.report.history.last().unwrap().max_resid;
        assert!(last <= 1e-6 * run.report.initial_resid.0);
    }

    #[test]
    fn unreachable_target_is_not_converged() {
        let cfg = small("sphere_uniform", "max_level = 3\ncycles = 1\ntarget_resid = 1e-300");
        let run = run_case(&cfg, |_| {}).unwrap();
        assert!(!run.report.converged);
    }
}
