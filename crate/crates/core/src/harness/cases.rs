//! Geometry, boundary data and meshes of the named experiments.

use std::sync::Arc;

use super::config::{CaseConfig, CaseId};
use crate::error::Result;
use crate::fields::AnalyticSolution;
use crate::levelset::{LevelSetObject, LevelSetSpec, ProfileMap, Shape};
use crate::mesh::{BcValue, Domain, FaceBc, TreeMesh};
use crate::point::{self, Point};
use crate::stencil::StencilConfig;

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Everything needed to set up a solve.
pub struct Problem {
    pub mesh: TreeMesh,
    pub lsf: LevelSetSpec,
    /// Source term `g` in `Lphi = g`; zero when absent.
    pub rhs: Option<ScalarFn>,
    /// Exact solution, when one is known.
    pub exact: Option<ScalarFn>,
}

pub fn stencil_config(cfg: &CaseConfig) -> StencilConfig {
    StencilConfig {
        root: cfg.root_config(),
        safety: cfg.safety,
        w_min: cfg.thin_search.then_some(cfg.w_min),
    }
}

pub fn build_problem(cfg: &CaseConfig) -> Result<Problem> {
    match cfg.case {
        CaseId::SphereUniform => sphere(cfg, false),
        CaseId::SphereRefined => sphere(cfg, true),
        CaseId::Shape2d | CaseId::Shape3dCyl => sharp_shape(cfg),
        CaseId::TwoElectrodes => two_electrodes(cfg),
        CaseId::Manufactured => manufactured(cfg),
    }
}

/// Cell center of block `id` closest to `target`.
pub fn nearest_cell_center(mesh: &TreeMesh, id: usize, target: &Point) -> Point {
    let dx = mesh.dx(mesh.block(id).level);
    let o = mesh.block_origin(id);
    let n = mesh.block_size() as f64;
    let mut p = *target;
    for a in 0..mesh.dim() {
        p[a] = p[a].clamp(o[a] + 0.5 * dx, o[a] + (n - 0.5) * dx);
    }
    p
}

/// Refinement criterion for a small sphere at the origin: refine while
/// `dx > dx_min max(1, r / R)` holds anywhere in the block.
pub fn sphere_criterion(radius: f64, max_level: usize) -> impl Fn(&TreeMesh, usize) -> bool {
    move |m, id| {
        let level = m.block(id).level;
        let dx_min = m.dx(max_level);
        let r = point::norm(&nearest_cell_center(m, id, &[0.0; 3]));
        level < max_level && m.dx(level) > dx_min * (r / radius).max(1.0)
    }
}

fn sphere(cfg: &CaseConfig, refined: bool) -> Result<Problem> {
    let sol = AnalyticSolution {
        dim: cfg.dim,
        center: [0.0; 3],
        radius: cfg.radius,
        phi_b: cfg.phi_b,
        a: cfg.a,
    };
    let exact: ScalarFn = Arc::new(move |x| sol.eval_or_boundary(x));
    let bc = std::array::from_fn(|_| FaceBc::Dirichlet(BcValue::Function(exact.clone())));
    let domain = Domain::centered_unit(cfg.dim);
    let mesh = if refined {
        let mut m = TreeMesh::uniform(cfg.dim, domain, cfg.block_size, 1, bc)?;
        m.set_max_level(cfg.max_level);
        m.refine_until(sphere_criterion(cfg.radius, cfg.max_level))?;
        m
    } else {
        TreeMesh::uniform(cfg.dim, domain, cfg.block_size, cfg.max_level, bc)?
    };
    let lsf = LevelSetSpec::single(
        Shape::Sphere {
            center: [0.0; 3],
            radius: cfg.radius,
        },
        cfg.phi_b,
    );
    Ok(Problem {
        mesh,
        lsf,
        rhs: None,
        exact: Some(exact),
    })
}

/// The transformed-coordinate shapes with `phi = 1` on the object and zero
/// on the domain boundary.
fn sharp_shape(cfg: &CaseConfig) -> Result<Problem> {
    let map = if cfg.dim == 2 {
        ProfileMap::Planar {
            center: [0.5 + cfg.offset[0], 0.5 + cfg.offset[1]],
            scale: 4.0,
        }
    } else {
        ProfileMap::Cylindrical {
            radius: 0.5 + cfg.offset[0],
            z0: 0.5 + cfg.offset[1],
            scale: 4.0,
        }
    };
    let mesh = TreeMesh::uniform(
        cfg.dim,
        Domain::unit(),
        cfg.block_size,
        cfg.max_level,
        std::array::from_fn(|_| FaceBc::zero()),
    )?;
    let lsf = LevelSetSpec::single(
        Shape::Sharp {
            profile: cfg.shape,
            map,
        },
        1.0,
    );
    Ok(Problem {
        mesh,
        lsf,
        rhs: None,
        exact: None,
    })
}

pub const ROD_TOP: Point = [0.5, 0.5, 1.0];
pub const ROD_TIP: Point = [0.5, 0.5, 0.8];
pub const ROD_RADIUS: f64 = 0.05;
pub const BASE_CENTER: Point = [0.5, 0.5, 0.0];
pub const BASE_RADIUS: f64 = 0.25;

/// Rod at `phi = 1` hanging from the top face over a grounded semi-sphere.
fn two_electrodes(cfg: &CaseConfig) -> Result<Problem> {
    let mut bc: [FaceBc; 6] = std::array::from_fn(|_| FaceBc::Neumann);
    bc[4] = FaceBc::Dirichlet(BcValue::Constant(0.0));
    bc[5] = FaceBc::Dirichlet(BcValue::Constant(1.0));
    let mut mesh = TreeMesh::uniform(3, Domain::unit(), cfg.block_size, cfg.base_level, bc)?;
    mesh.set_max_level(cfg.max_level);
    let (max_level, radius) = (cfg.max_level, cfg.tip_refine_radius);
    mesh.refine_until(|m, id| {
        let c = nearest_cell_center(m, id, &ROD_TIP);
        m.block(id).level < max_level && point::dist(&c, &ROD_TIP) < radius
    })?;
    let lsf = LevelSetSpec::union(vec![
        LevelSetObject {
            shape: Shape::Rod {
                start: ROD_TOP,
                end: ROD_TIP,
                radius: ROD_RADIUS,
            },
            boundary_value: 1.0,
        },
        LevelSetObject {
            shape: Shape::Sphere {
                center: BASE_CENTER,
                radius: BASE_RADIUS,
            },
            boundary_value: 0.0,
        },
    ]);
    Ok(Problem {
        mesh,
        lsf,
        rhs: None,
        exact: None,
    })
}

/// `phi = (|x - c|^2 - R^2) exp(x)`, zero on a sphere of radius `R` at the
/// domain center, with the matching source term.
fn manufactured(cfg: &CaseConfig) -> Result<Problem> {
    let dim = cfg.dim;
    let c: Point = if dim == 2 { [0.5, 0.5, 0.0] } else { [0.5; 3] };
    let r2 = cfg.radius * cfg.radius;
    let exact: ScalarFn = Arc::new(move |x| {
        let d = point::dist(x, &c);
        (d * d - r2) * x[0].exp()
    });
    let rhs: ScalarFn = Arc::new(move |x| {
        let d = point::dist(x, &c);
        x[0].exp() * (2.0 * dim as f64 + 4.0 * (x[0] - c[0]) + d * d - r2)
    });
    let bc = std::array::from_fn(|_| FaceBc::Dirichlet(BcValue::Function(exact.clone())));
    let mesh = TreeMesh::uniform(dim, Domain::unit(), cfg.block_size, cfg.max_level, bc)?;
    let lsf = LevelSetSpec::single(
        Shape::Sphere {
            center: c,
            radius: cfg.radius,
        },
        0.0,
    );
    Ok(Problem {
        mesh,
        lsf,
        rhs: Some(rhs),
        exact: Some(exact),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::LevelSet;

    fn cfg(case: &str, extra: &str) -> CaseConfig {
        let text = format!("case = {case}\n{extra}");
        CaseConfig::from_pairs(&super::super::config::parse_pairs(&text).unwrap()).unwrap()
    }

    #[test]
    fn manufactured_source_matches_laplacian() {
        let p = build_problem(&cfg("manufactured", "dim = 3\nmax_level = 2")).unwrap();
        let (u, g) = (p.exact.unwrap(), p.rhs.unwrap());
        let x = [0.3, 0.7, 0.55];
        let h = 1e-3;
        let mut lap = -6.0 * u(&x);
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            lap += u(&xp) + u(&xm);
        }
        lap /= h * h;
        assert!((lap - g(&x)).abs() < 1e-5 * g(&x).abs().max(1.0));
    }

    #[test]
    fn shapes_leave_domain_boundary_outside() {
        for shape in ["spheroid", "rhombus", "heart", "astroid"] {
            let p = build_problem(&cfg("shape2d", &format!("shape = {shape}\nmax_level = 2"))).unwrap();
            assert!(p.lsf.eval(&[0.5, 0.5, 0.0]) < 0.0, "{shape} center");
            for x in [[0.0, 0.5, 0.0], [1.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.5, 1.0, 0.0]] {
                assert!(p.lsf.eval(&x) > 0.0, "{shape} at {x:?}");
            }
        }
    }

    #[test]
    fn electrode_mesh_is_graded_toward_tip() {
        let p = build_problem(&cfg("two_electrodes", "max_level = 5\nbase_level = 3")).unwrap();
        let m = &p.mesh;
        assert_eq!(m.num_levels(), 5);
        assert!(m.is_balanced());
        for id in m.level_range(5) {
            let c = nearest_cell_center(m, id, &ROD_TIP);
            assert!(point::dist(&c, &ROD_TIP) < 0.1 + 8.0 * m.dx(4) * 3f64.sqrt());
        }
        assert_eq!(p.lsf.boundary_value_at(&[0.5, 0.5, 0.9]), 1.0);
        assert_eq!(p.lsf.boundary_value_at(&[0.5, 0.5, 0.1]), 0.0);
    }

    #[test]
    fn refined_sphere_reaches_max_level_only_near_origin() {
        let p = build_problem(&cfg("sphere_refined", "max_level = 6")).unwrap();
        let m = &p.mesh;
        assert_eq!(m.num_levels(), 6);
        assert!(m.num_leaf_cells() < 256 * 256 * 256 / 20);
    }
}
