//! Post-processing: face-centered gradients, reference solutions and error norms.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TreeMesh;
use crate::point::{self, Point};
use crate::stencil::{CellKind, Stencils};

/// Normal derivatives on the faces of every block. For each block and axis
/// the faces form a dense array with extent `n + 1` along that axis and `n`
/// (or 1 for z in 2D) along the others, first index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    dim: usize,
    n: usize,
    blocks: Vec<[Vec<f64>; 3]>,
}

impl FaceField {
    fn extents(&self, axis: usize) -> [usize; 3] {
        let mut e = [self.n, self.n, if self.dim == 3 { self.n } else { 1 }];
        e[axis] += 1;
        e
    }

    /// Derivative along `axis` on face `c` (with `c[axis]` in `0..=n`; face
    /// `i` lies between cells `i - 1` and `i`).
    pub fn get(&self, block: usize, axis: usize, c: [usize; 3]) -> f64 {
        let e = self.extents(axis);
        self.blocks[block][axis][c[0] + e[0] * (c[1] + e[1] * c[2])]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Boundary information of one cell as seen by the gradient rule.
#[derive(Clone, Copy)]
struct CellInfo {
    inside: bool,
    /// `(d, phi_b)` toward the lower and upper neighbor along the axis.
    cut_lo: Option<(f64, f64)>,
    cut_hi: Option<(f64, f64)>,
}

const PLAIN: CellInfo = CellInfo {
    inside: false,
    cut_lo: None,
    cut_hi: None,
};

fn cell_info(stencils: &Stencils, block: usize, compact: usize, axis: usize) -> CellInfo {
    let Some(bs) = stencils.block(block).as_boundary() else {
        return PLAIN;
    };
    if let CellKind::Inside(_) = bs.kind(compact) {
        return CellInfo {
            inside: true,
            cut_lo: None,
            cut_hi: None,
        };
    }
    let dd = bs.distances(compact);
    let values = stencils.boundary_values();
    let cut = |dir: usize| (dd.d[dir] < 1.0).then(|| (dd.d[dir], values[dd.object[dir] as usize]));
    CellInfo {
        inside: false,
        cut_lo: cut(2 * axis),
        cut_hi: cut(2 * axis + 1),
    }
}

/// Derivative across one face from its two cells.
fn face_value(lo: (f64, CellInfo), hi: (f64, CellInfo), dx: f64) -> f64 {
    let ((pl, il), (ph, ih)) = (lo, hi);
    if il.inside && ih.inside {
        return 0.0;
    }
    if !il.inside {
        if let Some((d, b)) = il.cut_hi {
            return (b - pl) / (d * dx);
        }
    }
    if !ih.inside {
        if let Some((d, b)) = ih.cut_lo {
            return (ph - b) / (d * dx);
        }
    }
    (ph - pl) / dx
}

/// Face gradients of `phi` on every block. Face ghosts of `phi` must be
/// filled. A cut face uses `(phi_b - phi) / (d dx)` from the solved side;
/// faces between two inside cells are 0. Faces shared by two same-level
/// blocks are evaluated from identical data on both sides.
pub fn face_gradient(mesh: &TreeMesh, stencils: &Stencils, phi: &[f64]) -> FaceField {
    let l = *mesh.layout();
    let dim = mesh.dim();
    let n = l.n as i64;
    let blocks = (0..mesh.num_blocks())
        .into_par_iter()
        .map(|id| {
            let dx = mesh.dx(mesh.block(id).level);
            let base = id * l.size;
            let mut out: [Vec<f64>; 3] = Default::default();
            for (axis, out_axis) in out.iter_mut().enumerate().take(dim) {
                let mut e = [l.n, l.n, l.nz()];
                e[axis] += 1;
                out_axis.reserve(e[0] * e[1] * e[2]);
                for k in 0..e[2] as i64 {
                    for j in 0..e[1] as i64 {
                        for i in 0..e[0] as i64 {
                            let hi = [i, j, k];
                            let mut lo = hi;
                            lo[axis] -= 1;
                            let side = |c: [i64; 3]| -> (f64, CellInfo) {
                                let v = phi[base + l.idx3(c)];
                                if c[axis] >= 0 && c[axis] < n {
                                    let ci = l.compact(c[0] as usize, c[1] as usize, c[2] as usize);
                                    return (v, cell_info(stencils, id, ci, axis));
                                }
                                let dir = 2 * axis + usize::from(c[axis] >= n);
                                match mesh.block(id).face_neighbor(dir) {
                                    Some(nb) => {
                                        let mut m = c;
                                        m[axis] = if c[axis] < 0 { n - 1 } else { 0 };
                                        let ci = l.compact(m[0] as usize, m[1] as usize, m[2] as usize);
                                        (v, cell_info(stencils, nb, ci, axis))
                                    }
                                    None => (v, PLAIN),
                                }
                            };
                            out_axis.push(face_value(side(lo), side(hi), dx));
                        }
                    }
                }
            }
            out
        })
        .collect();
    FaceField { dim, n: l.n, blocks }
}

/// Cell-centered `|grad phi|` from the average of the two faces per axis,
/// zero inside objects. Returned as a field array (interior cells only).
pub fn gradient_magnitude(mesh: &TreeMesh, stencils: &Stencils, faces: &FaceField) -> Vec<f64> {
    let l = *mesh.layout();
    let mut out = mesh.new_field();
    out.par_chunks_mut(l.size).enumerate().for_each(|(id, blk)| {
        let st = stencils.block(id);
        for (c, li, ci) in l.interior() {
            if !st.is_solved(ci) {
                blk[li] = 0.0;
                continue;
            }
            let cu = [c[0] as usize, c[1] as usize, c[2] as usize];
            let mut s = 0.0;
            for axis in 0..mesh.dim() {
                let mut up = cu;
                up[axis] += 1;
                let g = 0.5 * (faces.get(id, axis, cu) + faces.get(id, axis, up));
                s += g * g;
            }
            blk[li] = s.sqrt();
        }
    });
    out
}

/// Potential of a charged sphere (3D) or line (2D) with `phi = phi_b` on
/// the sphere of radius `r` around `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticSolution {
    pub dim: usize,
    pub center: Point,
    pub radius: f64,
    pub phi_b: f64,
    pub a: f64,
}

impl AnalyticSolution {
    pub fn sphere(dim: usize, radius: f64) -> Self {
        AnalyticSolution {
            dim,
            center: [0.0; 3],
            radius,
            phi_b: 0.0,
            a: 1.0,
        }
    }

    /// Value at `x`; fails inside the sphere.
    pub fn eval(&self, x: &Point) -> Result<f64> {
        let r = point::dist(x, &self.center);
        if r < self.radius {
            return Err(Error::OutsideDomainOfSolution {
                distance: r,
                radius: self.radius,
            });
        }
        Ok(self.value_unchecked(r))
    }

    fn value_unchecked(&self, r: f64) -> f64 {
        if self.dim == 2 {
            self.phi_b + self.a * (r / self.radius).ln()
        } else {
            self.phi_b + self.a * (1.0 - self.radius / r)
        }
    }

    /// Value extended to the whole space (used for domain boundary data).
    pub fn eval_or_boundary(&self, x: &Point) -> f64 {
        let r = point::dist(x, &self.center);
        if r < self.radius {
            self.phi_b
        } else {
            self.value_unchecked(r)
        }
    }

    /// Radial derivative at distance `r`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        if self.dim == 2 {
            self.a / r
        } else {
            self.a * self.radius / (r * r)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l_inf: f64,
    /// Root-mean-square with equal weight per cell.
    pub l2: f64,
    /// Root-mean-square weighted by cell volume.
    pub l2_volume: f64,
    pub cells: usize,
}

/// Error of `phi` against `exact` over solved leaf cells.
pub fn error_norms(
    mesh: &TreeMesh,
    stencils: &Stencils,
    phi: &[f64],
    exact: impl Fn(&Point) -> f64 + Sync,
) -> ErrorNorms {
    let l = *mesh.layout();
    let leaves: Vec<usize> = mesh.leaves().collect();
    let parts: Vec<(f64, f64, f64, f64, usize)> = leaves
        .par_iter()
        .map(|&id| {
            let st = stencils.block(id);
            let vol = mesh.dx(mesh.block(id).level).powi(mesh.dim() as i32);
            let (mut m, mut s, mut sv, mut v, mut c) = (0.0f64, 0.0, 0.0, 0.0, 0);
            for (cc, li, ci) in l.interior() {
                if !st.is_solved(ci) {
                    continue;
                }
                let e = phi[id * l.size + li] - exact(&mesh.cell_center(id, cc));
                m = m.max(e.abs());
                s += e * e;
                sv += vol * e * e;
                v += vol;
                c += 1;
            }
            (m, s, sv, v, c)
        })
        .collect();
    let (mut m, mut s, mut sv, mut v, mut c) = (0.0f64, 0.0, 0.0, 0.0, 0);
    for p in parts {
        m = m.max(p.0);
        s += p.1;
        sv += p.2;
        v += p.3;
        c += p.4;
    }
    if c == 0 {
        return ErrorNorms::default();
    }
    ErrorNorms {
        l_inf: m,
        l2: (s / c as f64).sqrt(),
        l2_volume: (sv / v).sqrt(),
        cells: c,
    }
}
