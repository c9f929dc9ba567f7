//! Direct assembly of the coarsest level and a Jacobi-preconditioned
//! BiCGStab solve, with red-black smoothing as fallback on small grids.

use crate::error::{Error, Result};
use crate::mesh::{FaceBc, TreeMesh};
use crate::stencil::{BlockStencil, CellKind, Stencils};

/// Compressed sparse rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csr {
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *yr = s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .find(|&k| self.col[k] == r)
                    .map_or(0.0, |k| self.val[k])
            })
            .collect()
    }
}

/// Outcome of one coarse solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarseStats {
    pub iterations: usize,
    pub initial: f64,
    pub residual: f64,
    pub used_fallback: bool,
}

/// Assembled system of the single level-1 block. Unknowns are its interior
/// cells in compact order; inside cells get identity rows.
#[derive(Clone, Debug)]
pub struct CoarseSolver {
    matrix: Csr,
    inv_diag: Vec<f64>,
    /// Constant part of each row from physical Dirichlet ghosts.
    shift: Vec<f64>,
    /// Ghosted index of each unknown.
    ghosted: Vec<usize>,
    pinned: Vec<bool>,
    max_iter: usize,
}

impl CoarseSolver {
    pub fn new(mesh: &TreeMesh, stencils: &Stencils) -> Self {
        let l = *mesh.layout();
        let dim = mesh.dim();
        let n = l.n as i64;
        let id = mesh.level_range(1).start;
        let st = stencils.block(id);
        let dx = mesh.dx(1);
        let cells = l.interior_cells();

        let mut row_ptr = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut shift = vec![0.0; cells];
        let mut ghosted = vec![0; cells];
        let mut pinned = vec![false; cells];

        for (c, li, ci) in l.interior() {
            ghosted[ci] = li;
            let row: [f64; 7] = match st {
                BlockStencil::Uniform { dx } => {
                    let w = 1.0 / (dx * dx);
                    let mut r = [w; 7];
                    r[0] = -2.0 * dim as f64 * w;
                    r
                }
                BlockStencil::Boundary(b) => {
                    if let CellKind::Inside(_) = b.kind(ci) {
                        pinned[ci] = true;
                        col.push(ci);
                        val.push(1.0);
                        row_ptr.push(col.len());
                        continue;
                    }
                    *b.coef(ci)
                }
            };
            let mut entries: Vec<(usize, f64)> = vec![(ci, row[0])];
            for dir in 0..2 * dim {
                let w = row[1 + dir];
                if w == 0.0 {
                    continue;
                }
                let axis = dir / 2;
                let mut nc = c;
                nc[axis] += if dir % 2 == 0 { -1 } else { 1 };
                if nc[axis] >= 0 && nc[axis] < n {
                    let k = l.compact(nc[0] as usize, nc[1] as usize, nc[2] as usize);
                    entries.push((k, w));
                    continue;
                }
                match &mesh.bc()[dir] {
                    FaceBc::Neumann => entries[0].1 += w,
                    FaceBc::Dirichlet(v) => {
                        let mut x = mesh.cell_center(id, c);
                        x[axis] += if dir % 2 == 0 { -0.5 * dx } else { 0.5 * dx };
                        entries[0].1 -= w;
                        shift[ci] += 2.0 * w * v.at(&x);
                    }
                }
            }
            entries.sort_by_key(|e| e.0);
            for (k, w) in entries {
                col.push(k);
                val.push(w);
            }
            row_ptr.push(col.len());
        }
        let matrix = Csr { row_ptr, col, val };
        let inv_diag = matrix.diag().iter().map(|&d| 1.0 / d).collect();
        CoarseSolver {
            matrix,
            inv_diag,
            shift,
            ghosted,
            pinned,
            max_iter: 20 * cells + 200,
        }
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    /// Right-hand side of the assembled system for the current `g` and
    /// boundary values.
    pub fn rhs(&self, stencils: &Stencils, block: usize, g: &[f64]) -> Vec<f64> {
        let st = stencils.block(block);
        (0..self.ghosted.len())
            .map(|ci| match st.as_boundary() {
                Some(b) if self.pinned[ci] => b.pinned_value(ci).unwrap_or(0.0),
                Some(b) => g[self.ghosted[ci]] - b.beta(ci) - self.shift[ci],
                None => g[self.ghosted[ci]] - self.shift[ci],
            })
            .collect()
    }

    /// Solves the level-1 equations in place. `phi` and `g` are the
    /// block-sized slices of the single level-1 block.
    pub fn solve(
        &self,
        mesh: &TreeMesh,
        stencils: &Stencils,
        phi_field: &mut [f64],
        g_field: &[f64],
        rel_tol: f64,
    ) -> Result<CoarseStats> {
        let id = mesh.level_range(1).start;
        let range = mesh.block_slice(id);
        let b = self.rhs(stencils, id, &g_field[range.clone()]);
        let mut x: Vec<f64> = self.ghosted.iter().map(|&li| phi_field[range.start + li]).collect();

        let mut stats = bicgstab(&self.matrix, &self.inv_diag, &b, &mut x, rel_tol, self.max_iter);
        let ok = stats.residual <= target(&stats, rel_tol, &b, &x, &self.inv_diag);
        for (ci, &li) in self.ghosted.iter().enumerate() {
            phi_field[range.start + li] = x[ci];
        }
        if ok {
            return Ok(stats);
        }

        // Small grids: fall back to plain smoothing.
        let l = mesh.layout();
        if l.interior_cells() > 8usize.pow(mesh.dim() as u32) {
            return Err(Error::CoarseSolve {
                residual: stats.residual,
                initial: stats.initial,
                iterations: stats.iterations,
            });
        }
        let st = stencils.block(id);
        let weights = mesh.ghost_self_weights(id);
        let mut r = vec![0.0; b.len()];
        for sweep in 1..=20_000 {
            for parity in 0..2 {
                mesh.fill_face_ghosts(1, phi_field);
                st.gsrb(l, &mut phi_field[range.clone()], &g_field[range.clone()], parity, &weights);
            }
            if sweep % 10 == 0 {
                let x: Vec<f64> = self.ghosted.iter().map(|&li| phi_field[range.start + li]).collect();
                self.matrix.mul(&x, &mut r);
                let res = norm_diff(&b, &r);
                stats.iterations += 10;
                stats.residual = res;
                stats.used_fallback = true;
                if res <= target(&stats, rel_tol, &b, &x, &self.inv_diag) {
                    mesh.fill_face_ghosts(1, phi_field);
                    return Ok(stats);
                }
            }
        }
        Err(Error::CoarseSolve {
            residual: stats.residual,
            initial: stats.initial,
            iterations: stats.iterations,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Relative target, floored at round-off of the terms in the equations.
fn target(stats: &CoarseStats, rel_tol: f64, b: &[f64], x: &[f64], inv_diag: &[f64]) -> f64 {
    let ax: f64 = x.iter().zip(inv_diag).map(|(x, d)| (x / d) * (x / d)).sum::<f64>().sqrt();
    (rel_tol * stats.initial).max(1e-13 * (norm(b) + ax))
}

/// Right-preconditioned BiCGStab with restarts on breakdown.
pub fn bicgstab(a: &Csr, inv_diag: &[f64], b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> CoarseStats {
    let n = b.len();
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let initial = norm(&r);
    let mut stats = CoarseStats {
        iterations: 0,
        initial,
        residual: initial,
        used_fallback: false,
    };
    let tol = target(&stats, rel_tol, b, x, inv_diag);
    if initial <= tol {
        return stats;
    }

    let (mut p, mut v, mut y, mut z, mut s, mut t) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut restarts = 0;
    'outer: while stats.iterations < max_iter && restarts < 20 {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|v| *v = 0.0);
        v.iter_mut().for_each(|v| *v = 0.0);
        while stats.iterations < max_iter {
            stats.iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                restarts += 1;
                continue 'outer;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = inv_diag[i] * p[i];
            }
            a.mul(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                restarts += 1;
                continue 'outer;
            }
            alpha = rho / rv;
            for i in 0..n {
                x[i] += alpha * y[i];
                s[i] = r[i] - alpha * v[i];
            }
            let sn = norm(&s);
            if sn <= tol {
                r.copy_from_slice(&s);
                break 'outer;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * s[i];
            }
            a.mul(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= tol {
                break 'outer;
            }
        }
    }
    // True residual.
    a.mul(x, &mut r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    stats.residual = norm(&r);
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> Csr {
        let mut m = Csr {
            row_ptr: vec![0],
            ..Default::default()
        };
        for i in 0..n {
            if i > 0 {
                m.col.push(i - 1);
                m.val.push(1.0);
            }
            m.col.push(i);
            m.val.push(-2.0 - 0.1 * (i % 3) as f64);
            if i + 1 < n {
                m.col.push(i + 1);
                m.val.push(1.3);
            }
            m.row_ptr.push(m.col.len());
        }
        m
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = laplace_1d(50);
        let inv: Vec<f64> = a.diag().iter().map(|d| 1.0 / d).collect();
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.mul(&xs, &mut b);
        let mut x = vec![0.0; 50];
        let st = bicgstab(&a, &inv, &b, &mut x, 1e-12, 1000);
        assert!(st.residual <= 1e-12 * st.initial * 10.0);
        for i in 0..50 {
            assert!((x[i] - xs[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_stays_zero() {
        let a = laplace_1d(10);
        let inv: Vec<f64> = a.diag().iter().map(|d| 1.0 / d).collect();
        let mut x = vec![0.0; 10];
        let st = bicgstab(&a, &inv, &[0.0; 10], &mut x, 1e-6, 100);
        assert_eq!(st.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
