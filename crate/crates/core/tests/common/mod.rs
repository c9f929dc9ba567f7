//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use octree_poisson::harness::config::parse_pairs;
use octree_poisson::harness::CaseConfig;
use octree_poisson::mesh::FaceBc;
use octree_poisson::multigrid::Multigrid;
use octree_poisson::stencil::BlockStencil;

pub fn config(text: &str) -> CaseConfig {
    CaseConfig::from_pairs(&parse_pairs(text).unwrap()).unwrap()
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fit_slope(h: &[f64], err: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Banded matrix with `bw` sub- and super-diagonals, factored in place
/// without pivoting (the systems here are diagonally dominant).
pub struct Banded {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl Banded {
    pub fn new(n: usize, bw: usize) -> Self {
        Banded {
            n,
            bw,
            a: vec![0.0; n * (2 * bw + 1)],
        }
    }

    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r.abs_diff(c) <= self.bw);
        &mut self.a[r * (2 * self.bw + 1) + (c + self.bw - r)]
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        *self.at(r, c) += v;
    }

    pub fn solve(mut self, mut b: Vec<f64>) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let piv = *self.at(k, k);
            assert!(piv.abs() > 0.0, "zero pivot at row {k}");
            for r in k + 1..(k + bw + 1).min(n) {
                let f = *self.at(r, k) / piv;
                if f == 0.0 {
                    continue;
                }
                for c in k..(k + bw + 1).min(n) {
                    let v = *self.at(k, c);
                    *self.at(r, c) -= f * v;
                }
                b[r] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for c in k + 1..(k + bw + 1).min(n) {
                s -= *self.at(k, c) * b[c];
            }
            b[k] = s / *self.at(k, k);
        }
        b
    }
}

/// One finest-level cell: block, ghosted index, and whether it is solved.
pub struct CellRef {
    pub block: usize,
    pub li: usize,
    pub solved: bool,
}

/// Assembles the finest level of a uniform mesh from the per-cell stencil
/// rows and the domain boundary conditions, then solves it directly.
/// Returns the cells in global lexicographic order with their values.
pub fn direct_solve(mg: &Multigrid) -> Vec<(CellRef, f64)> {
    let mesh = mg.mesh();
    let dim = mesh.dim();
    let top = mesh.num_levels();
    assert!(mesh.leaves().all(|id| mesh.block(id).level == top), "mesh must be uniform");
    let l = *mesh.layout();
    let n = l.n;
    let cells_per_axis = n * mesh.blocks_per_axis(top) as usize;
    let total = cells_per_axis.pow(dim as u32);
    let bw = cells_per_axis.pow(dim as u32 - 1);
    let stride = [1, cells_per_axis, cells_per_axis * cells_per_axis];
    let dx = mesh.dx(top);

    let mut a = Banded::new(total, bw);
    let mut rhs = vec![0.0; total];
    let mut cells: Vec<Option<CellRef>> = (0..total).map(|_| None).collect();
    let g = mg.rhs();

    for id in mesh.level_range(top) {
        let b = mesh.block(id);
        let st = mg.stencils().block(id);
        for k in 0..l.nz() {
            for j in 0..n {
                for i in 0..n {
                    let c = [i, j, k];
                    let li = l.idx(i as i64, j as i64, k as i64);
                    let ci = l.compact(i, j, k);
                    let mut gc = [0usize; 3];
                    for ax in 0..dim {
                        gc[ax] = b.coord[ax] as usize * n + c[ax];
                    }
                    let row = gc[0] * stride[0] + gc[1] * stride[1] + gc[2] * stride[2];
                    let (coef, beta, pinned) = match st {
                        BlockStencil::Uniform { dx } => {
                            let w = 1.0 / (dx * dx);
                            let mut co = [w; 7];
                            co[0] = -2.0 * dim as f64 * w;
                            (co, 0.0, None)
                        }
                        BlockStencil::Boundary(bs) => (*bs.coef(ci), bs.beta(ci), bs.pinned_value(ci)),
                    };
                    cells[row] = Some(CellRef {
                        block: id,
                        li,
                        solved: pinned.is_none(),
                    });
                    if let Some(v) = pinned {
                        a.add(row, row, 1.0);
                        rhs[row] = v;
                        continue;
                    }
                    a.add(row, row, coef[0]);
                    rhs[row] += g[id * l.size + li] - beta;
                    for dir in 0..2 * dim {
                        let w = coef[1 + dir];
                        if w == 0.0 {
                            continue;
                        }
                        let ax = dir / 2;
                        let up = dir % 2 == 1;
                        let inside = if up { gc[ax] + 1 < cells_per_axis } else { gc[ax] > 0 };
                        if inside {
                            let col = if up { row + stride[ax] } else { row - stride[ax] };
                            a.add(row, col, w);
                            continue;
                        }
                        match &mesh.bc()[dir] {
                            FaceBc::Neumann => a.add(row, row, w),
                            FaceBc::Dirichlet(v) => {
                                let mut x = mesh.cell_center(id, [i as i64, j as i64, k as i64]);
                                x[ax] += if up { 0.5 * dx } else { -0.5 * dx };
                                a.add(row, row, -w);
                                rhs[row] -= 2.0 * w * v.at(&x);
                            }
                        }
                    }
                }
            }
        }
    }
    let x = a.solve(rhs);
    cells.into_iter().map(Option::unwrap).zip(x).collect()
}

/// Max relative difference between the multigrid solution and the direct
/// one over solved cells.
pub fn oracle_gap(mg: &Multigrid, direct: &[(CellRef, f64)]) -> f64 {
    let size = mg.mesh().layout().size;
    let scale = direct.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    direct
        .iter()
        .filter(|(c, _)| c.solved)
        .map(|(c, v)| (mg.phi()[c.block * size + c.li] - v).abs())
        .fold(0.0, f64::max)
        / scale
}
