//! Full approximation scheme (FAS) multigrid on a [`TreeMesh`].
//!
//! Every level stores a full approximation of the solution. Smoothing is
//! red-black Gauss-Seidel on all blocks of a level, restriction averages
//! children, and corrections `phi - old` are interpolated bi/trilinearly.
//! Level 1 (a single block) is solved with [`CoarseSolver`].

mod coarse;

pub use coarse::{bicgstab, CoarseSolver, CoarseStats, Csr};

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TreeMesh;
use crate::point::Point;
use crate::stencil::Stencils;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleKind {
    V,
    Fmg,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgConfig {
    /// Smoothing steps after prolongation, going up.
    pub n_up: usize,
    /// Smoothing steps before restriction, going down.
    pub n_down: usize,
    pub cycle: CycleKind,
    pub coarse_rel_tol: f64,
    pub max_cycles: usize,
    /// Stop once the max-norm leaf residual falls below this.
    pub target_resid: f64,
}

impl Default for MgConfig {
    fn default() -> Self {
        MgConfig {
            n_up: 2,
            n_down: 2,
            cycle: CycleKind::Fmg,
            coarse_rel_tol: 1e-6,
            max_cycles: 10,
            target_resid: 0.0,
        }
    }
}

impl MgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_up < 1 || self.n_down < 1 {
            return Err(Error::Config("n_up and n_down must be at least 1".into()));
        }
        if !(self.coarse_rel_tol > 0.0 && self.coarse_rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "coarse_rel_tol must lie in (0, 1), got {}",
                self.coarse_rel_tol
            )));
        }
        if !(self.target_resid >= 0.0) {
            return Err(Error::Config("target_resid must be non-negative".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub max_resid: f64,
    pub l2_resid: f64,
    pub seconds: f64,
}

/// Solver state: mesh, stencils and the per-level fields.
#[derive(Clone, Debug)]
pub struct Multigrid {
    mesh: TreeMesh,
    stencils: Stencils,
    cfg: MgConfig,
    coarse: CoarseSolver,
    phi: Vec<f64>,
    rhs: Vec<f64>,
    old: Vec<f64>,
    res: Vec<f64>,
    /// False until a cycle has run or the caller supplied `phi`; the first
    /// FMG pass then interpolates whole solutions instead of corrections.
    has_guess: bool,
    /// Ghost self-dependence per block face, for the smoother.
    self_weights: Vec<[f64; 6]>,
}

impl Multigrid {
    pub fn new(mesh: TreeMesh, stencils: Stencils, cfg: MgConfig) -> Result<Self> {
        cfg.validate()?;
        if stencils.blocks().len() != mesh.num_blocks() {
            return Err(Error::Structure("stencils do not match the mesh".into()));
        }
        if mesh.level_range(1).len() != 1 {
            return Err(Error::Structure("level 1 must consist of one block".into()));
        }
        let coarse = CoarseSolver::new(&mesh, &stencils);
        let phi = mesh.new_field();
        let self_weights = (0..mesh.num_blocks()).map(|id| mesh.ghost_self_weights(id)).collect();
        let mut mg = Multigrid {
            rhs: phi.clone(),
            old: phi.clone(),
            res: phi.clone(),
            phi,
            mesh,
            stencils,
            cfg,
            coarse,
            has_guess: false,
            self_weights,
        };
        mg.pin_all();
        Ok(mg)
    }

    pub fn mesh(&self) -> &TreeMesh {
        &self.mesh
    }

    pub fn stencils(&self) -> &Stencils {
        &self.stencils
    }

    pub fn config(&self) -> &MgConfig {
        &self.cfg
    }

    pub fn set_target_resid(&mut self, target: f64) {
        self.cfg.target_resid = target;
    }

    pub fn coarse(&self) -> &CoarseSolver {
        &self.coarse
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Mutable access to the solution; whatever is written counts as an
    /// initial guess.
    pub fn phi_mut(&mut self) -> &mut [f64] {
        self.has_guess = true;
        &mut self.phi
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn rhs_mut(&mut self) -> &mut [f64] {
        &mut self.rhs
    }

    /// Residual array as left by the last residual evaluation.
    pub fn residual_field(&self) -> &[f64] {
        &self.res
    }

    /// Sets the right-hand side on every cell from a function of position.
    pub fn set_rhs(&mut self, f: impl Fn(&Point) -> f64) {
        self.mesh.set_field(&mut self.rhs, f);
    }

    /// Changes the boundary values of all objects and re-pins inside cells.
    pub fn set_boundary_values(&mut self, values: &[f64]) {
        self.stencils.set_boundary_values(values);
        self.pin_all();
    }

    fn top(&self) -> usize {
        self.mesh.num_levels()
    }

    pub fn pin_all(&mut self) {
        for level in 1..=self.top() {
            self.pin(level);
        }
    }

    fn pin(&mut self, level: usize) {
        let l = *self.mesh.layout();
        let ids = self.mesh.level_range(level);
        let range = self.mesh.level_slice(level);
        let st = &self.stencils.blocks()[ids];
        self.phi[range]
            .par_chunks_mut(l.size)
            .zip(st)
            .for_each(|(p, s)| s.pin(&l, p));
    }

    /// Refills ghosts on all levels from coarse to fine.
    pub fn fill_all_ghosts(&mut self) {
        for level in 1..=self.top() {
            self.mesh.fill_ghosts(level, &mut self.phi);
        }
    }

    /// `sweeps` red-black sweeps on `level`. Face ghosts must be valid on
    /// entry and are valid on exit.
    pub fn smooth(&mut self, level: usize, sweeps: usize) {
        let l = *self.mesh.layout();
        let ids = self.mesh.level_range(level);
        let range = self.mesh.level_slice(level);
        for _ in 0..sweeps {
            for parity in 0..2 {
                let st = &self.stencils.blocks()[ids.clone()];
                let weights = &self.self_weights[ids.clone()];
                self.phi[range.clone()]
                    .par_chunks_mut(l.size)
                    .zip(self.rhs[range.clone()].par_chunks(l.size))
                    .zip(st)
                    .zip(weights)
                    .for_each(|(((p, g), s), w)| s.gsrb(&l, p, g, parity, w));
                self.mesh.fill_face_ghosts(level, &mut self.phi);
            }
        }
    }

    /// `res = g - L(phi)` on `level`; face ghosts must be valid.
    pub fn compute_residual(&mut self, level: usize) {
        let l = *self.mesh.layout();
        let ids = self.mesh.level_range(level);
        let range = self.mesh.level_slice(level);
        let st = &self.stencils.blocks()[ids];
        self.res[range.clone()]
            .par_chunks_mut(l.size)
            .zip(self.phi[range.clone()].par_chunks(l.size))
            .zip(self.rhs[range].par_chunks(l.size))
            .zip(st)
            .for_each(|(((r, p), g), s)| s.residual(&l, p, g, r));
    }

    /// Restricts `phi` and the residual from `level` to `level - 1`, stores
    /// the coarse approximation in `old`, and sets the FAS right-hand side
    /// `g_c = L_c(R phi) + R r` on refined coarse blocks.
    fn update_coarse(&mut self, level: usize) {
        let c = level - 1;
        self.mesh.restrict_level(level, &mut self.phi);
        self.mesh.restrict_level(level, &mut self.res);
        self.pin(c);
        self.mesh.fill_ghosts(c, &mut self.phi);
        let range = self.mesh.level_slice(c);
        self.old[range.clone()].copy_from_slice(&self.phi[range.clone()]);

        let l = *self.mesh.layout();
        let ids = self.mesh.level_range(c);
        let mesh = &self.mesh;
        let st = &self.stencils.blocks()[ids.clone()];
        self.rhs[range.clone()]
            .par_chunks_mut(l.size)
            .zip(self.phi[range.clone()].par_chunks(l.size))
            .zip(self.res[range].par_chunks(l.size))
            .zip(st)
            .zip(ids)
            .for_each(|((((g, p), r), s), id)| {
                if mesh.block(id).is_leaf() {
                    return;
                }
                s.apply(&l, p, g);
                for (_, li, _) in l.interior() {
                    g[li] += r[li];
                }
            });
    }

    /// Adds the interpolated coarse correction to `level` and refills its
    /// face ghosts.
    fn correct_children(&mut self, level: usize) {
        self.mesh.fill_ghosts(level - 1, &mut self.phi);
        self.mesh.prolong_correction(level, &mut self.phi, &self.old);
        self.pin(level);
        self.mesh.fill_face_ghosts(level, &mut self.phi);
    }

    pub fn coarse_solve(&mut self) -> Result<CoarseStats> {
        let stats = self
            .coarse
            .solve(&self.mesh, &self.stencils, &mut self.phi, &self.rhs, self.cfg.coarse_rel_tol)?;
        self.pin(1);
        self.mesh.fill_face_ghosts(1, &mut self.phi);
        Ok(stats)
    }

    /// V-cycle over levels `1..=top`; face ghosts at `top` must be valid.
    fn vcycle_to(&mut self, top: usize) -> Result<()> {
        for level in (2..=top).rev() {
            self.smooth(level, self.cfg.n_down);
            self.compute_residual(level);
            self.update_coarse(level);
        }
        self.coarse_solve()?;
        for level in 2..=top {
            self.correct_children(level);
            self.smooth(level, self.cfg.n_up);
        }
        Ok(())
    }

    pub fn v_cycle(&mut self) -> Result<()> {
        self.fill_all_ghosts();
        self.vcycle_to(self.top())?;
        self.has_guess = true;
        Ok(())
    }

    pub fn fmg_cycle(&mut self) -> Result<()> {
        let top = self.top();
        self.fill_all_ghosts();
        for level in (2..=top).rev() {
            if self.has_guess {
                self.compute_residual(level);
                self.update_coarse(level);
            } else {
                // Without a guess the coarse levels solve their own
                // discretization of the restricted source.
                self.mesh.restrict_level(level, &mut self.rhs);
            }
        }
        for level in 1..=top {
            if level < top {
                self.mesh.fill_ghosts(level, &mut self.phi);
                let range = self.mesh.level_slice(level);
                self.old[range.clone()].copy_from_slice(&self.phi[range]);
            }
            if level > 1 {
                if self.has_guess {
                    self.correct_children(level);
                } else {
                    self.mesh.fill_ghosts(level - 1, &mut self.phi);
                    self.mesh.prolong_level(level, &mut self.phi);
                    self.pin(level);
                    self.mesh.fill_face_ghosts(level, &mut self.phi);
                }
            }
            self.vcycle_to(level)?;
        }
        self.has_guess = true;
        Ok(())
    }

    pub fn cycle(&mut self) -> Result<()> {
        match self.cfg.cycle {
            CycleKind::V => self.v_cycle(),
            CycleKind::Fmg => self.fmg_cycle(),
        }
    }

    /// Max-norm and root-mean-square residual over solved leaf cells.
    /// Covered cells are first replaced by the restriction of their
    /// children, so coarse leaves see the composite solution.
    pub fn leaf_residual(&mut self) -> (f64, f64) {
        let top = self.top();
        for level in (2..=top).rev() {
            self.mesh.restrict_level(level, &mut self.phi);
            self.pin(level - 1);
        }
        let l = *self.mesh.layout();
        let (mut max, mut sum, mut count) = (0.0f64, 0.0, 0usize);
        for level in 1..=top {
            self.mesh.fill_face_ghosts(level, &mut self.phi);
            self.compute_residual(level);
            for id in self.mesh.level_range(level) {
                if !self.mesh.block(id).is_leaf() {
                    continue;
                }
                let st = self.stencils.block(id);
                let base = id * l.size;
                for (_, li, ci) in l.interior() {
                    if st.is_solved(ci) {
                        let r = self.res[base + li];
                        max = max.max(r.abs());
                        sum += r * r;
                        count += 1;
                    }
                }
            }
        }
        (max, if count > 0 { (sum / count as f64).sqrt() } else { 0.0 })
    }

    /// Runs cycles until the target residual or `max_cycles` is reached,
    /// reporting each cycle. Returns whether the target was met.
    pub fn solve(&mut self, mut on_cycle: impl FnMut(&CycleRecord, &Self)) -> Result<bool> {
        for cycle in 1..=self.cfg.max_cycles {
            let t0 = Instant::now();
            self.cycle()?;
            let (max_resid, l2_resid) = self.leaf_residual();
            let rec = CycleRecord {
                cycle,
                max_resid,
                l2_resid,
                seconds: t0.elapsed().as_secs_f64(),
            };
            on_cycle(&rec, self);
            if max_resid <= self.cfg.target_resid {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{LevelSetSpec, Shape};
    use crate::mesh::{BcValue, Domain, FaceBc};
    use crate::stencil::StencilConfig;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn manufactured(dim: usize, n: usize, levels: usize, cfg: MgConfig) -> Multigrid {
        let mesh = TreeMesh::uniform(dim, Domain::unit(), n, levels, std::array::from_fn(|_| FaceBc::zero())).unwrap();
        let st = Stencils::uniform(&mesh);
        let mut mg = Multigrid::new(mesh, st, cfg).unwrap();
        let d = dim as f64;
        mg.set_rhs(move |x| {
            let mut v = -d * PI * PI;
            for a in 0..dim {
                v *= (PI * x[a]).sin();
            }
            v
        });
        mg
    }

    #[test]
    fn v_cycle_reduces_residual_tenfold() {
        let cfg = MgConfig {
            cycle: CycleKind::V,
            ..Default::default()
        };
        // 128^2; the first cycle from a zero guess is excluded.
        let mut mg = manufactured(2, 8, 5, cfg);
        mg.v_cycle().unwrap();
        let (mut prev, _) = mg.leaf_residual();
        for _ in 0..4 {
            mg.v_cycle().unwrap();
            let (r, _) = mg.leaf_residual();
            assert!(r * 10.0 <= prev, "{prev} -> {r}");
            prev = r;
        }
    }

    /// FMG on an adaptively refined 3D mesh keeps its uniform-grid rate,
    /// which needs the smoother to account for refinement-boundary ghosts.
    #[test]
    fn fmg_rate_survives_refinement_boundaries() {
        let mut mesh = TreeMesh::uniform(3, Domain::unit(), 8, 2, std::array::from_fn(|_| FaceBc::zero())).unwrap();
        mesh.set_max_level(4);
        mesh.refine_until(|m, id| {
            let o = m.block_origin(id);
            m.block(id).level < 4 && o[0] < 0.3 && o[1] < 0.3
        })
        .unwrap();
        assert!(mesh.leaves().any(|id| mesh.refinement_faces(id) != 0));
        let st = Stencils::uniform(&mesh);
        let mut mg = Multigrid::new(mesh, st, MgConfig::default()).unwrap();
        mg.set_rhs(|x| -3.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin());
        mg.fmg_cycle().unwrap();
        let (mut prev, _) = mg.leaf_residual();
        for _ in 0..4 {
            mg.fmg_cycle().unwrap();
            let (r, _) = mg.leaf_residual();
            assert!(r * 25.0 <= prev, "{prev} -> {r}");
            prev = r;
        }
    }

    #[test]
    fn coarse_only_mesh() {
        let mut mg = manufactured(2, 8, 1, MgConfig::default());
        mg.v_cycle().unwrap();
        let (r, _) = mg.leaf_residual();
        let (r0, _) = manufactured(2, 8, 1, MgConfig::default()).leaf_residual();
        assert!(r <= 1e-6 * r0 * 1.01);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let mut mg = manufactured(2, 8, 3, MgConfig::default());
        for _ in 0..30 {
            mg.fmg_cycle().unwrap();
        }
        let before = mg.phi().to_vec();
        let (r, _) = mg.leaf_residual();
        mg.fmg_cycle().unwrap();
        let l = *mg.mesh().layout();
        let scale = before.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for id in mg.mesh().level_range(3) {
            for (_, li, _) in l.interior() {
                let i = id * l.size + li;
                assert!((mg.phi()[i] - before[i]).abs() <= 1e-12 * scale, "r = {r}");
            }
        }
    }

    #[test]
    fn zero_problem_stays_zero() {
        let mesh = TreeMesh::uniform(3, Domain::unit(), 4, 3, std::array::from_fn(|_| FaceBc::zero())).unwrap();
        let st = Stencils::uniform(&mesh);
        let mut mg = Multigrid::new(mesh, st, MgConfig::default()).unwrap();
        mg.fmg_cycle().unwrap();
        assert!(mg.phi().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sphere_residual_is_monotone() {
        let bc: [FaceBc; 6] = std::array::from_fn(|_| {
            FaceBc::Dirichlet(BcValue::Function(Arc::new(|x: &Point| {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                (r / 0.25).ln()
            })))
        });
        let mesh = TreeMesh::uniform(2, Domain::centered_unit(2), 8, 5, bc).unwrap();
        let lsf = LevelSetSpec::single(
            Shape::Sphere {
                center: [0.0; 3],
                radius: 0.25,
            },
            0.0,
        );
        let st = Stencils::build(&mesh, &lsf, &[0.0], &StencilConfig::default());
        let cfg = MgConfig {
            cycle: CycleKind::V,
            ..Default::default()
        };
        let mut mg = Multigrid::new(mesh, st, cfg).unwrap();
        let (mut prev, _) = mg.leaf_residual();
        for _ in 0..8 {
            mg.v_cycle().unwrap();
            let (r, _) = mg.leaf_residual();
            assert!(r < prev, "{prev} -> {r}");
            prev = r;
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = MgConfig {
            n_up: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MgConfig {
            coarse_rel_tol: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
