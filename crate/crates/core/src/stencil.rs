//! Per-block discrete Laplacians.
//!
//! Blocks away from any boundary use the constant 5/7-point stencil.
//! Blocks touched by the zero contour store one row per cell: a center
//! coefficient, one coefficient per neighbor direction, and the terms moved
//! to the right-hand side where the segment toward a neighbor crosses the
//! boundary. The discrete operator is affine,
//!
//! `L(phi)_c = coef_c phi_c + sum_n coef_n phi_n + beta_c`,
//!
//! with `beta_c = sum over cut directions of weight * phi_b(object)`, and the
//! equation solved is `L(phi) = g`. Cells whose center is inside an object
//! (`f <= 0`) are not unknowns; they hold the object's boundary value.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::levelset::{
    candidate_test, cell_distances, resolve_thin_boundary, DirectionalDistances, LevelSet,
    RootSearchConfig, DEFAULT_SAFETY_FACTOR,
};
use crate::mesh::{BlockLayout, TreeMesh};

/// Options for stencil construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilConfig {
    pub root: RootSearchConfig,
    /// Factor in the boundary-candidate test.
    pub safety: f64,
    /// Threshold for the thin-object search; `None` disables it.
    pub w_min: Option<f64>,
}

impl Default for StencilConfig {
    fn default() -> Self {
        StencilConfig {
            root: RootSearchConfig::default(),
            safety: DEFAULT_SAFETY_FACTOR,
            w_min: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Solved,
    /// Pinned to the boundary value of the given object.
    Inside(u8),
}

/// A neighbor direction whose segment crosses the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cut {
    /// Compact interior index of the cell.
    pub cell: u32,
    pub dir: u8,
    pub object: u8,
    /// Relative distance to the boundary.
    pub d: f64,
    /// Coefficient moved to the right-hand side.
    pub weight: f64,
}

/// Center coefficient and the six directional weights of the
/// boundary-modified Laplacian for relative distances `d` (unused axes
/// ignored). Weights of directions with `d < 1` multiply the boundary
/// value instead of the neighbor.
pub fn row_weights(d: &[f64; 6], dx: f64, dim: usize) -> (f64, [f64; 6]) {
    let mut center = 0.0;
    let mut w = [0.0; 6];
    for axis in 0..dim {
        let (dm, dp) = (d[2 * axis], d[2 * axis + 1]);
        let pref = 2.0 / ((dm + dp) * dx);
        w[2 * axis] = pref / (dm * dx);
        w[2 * axis + 1] = pref / (dp * dx);
        center -= w[2 * axis] + w[2 * axis + 1];
    }
    (center, w)
}

/// Per-cell rows of a block crossed by the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryStencil {
    /// `[center, -x, +x, -y, +y, -z, +z]`; cut directions are zero.
    coef: Vec<[f64; 7]>,
    kind: Vec<CellKind>,
    /// Sorted by cell, then direction.
    cuts: Vec<Cut>,
    /// Sum of the weights moved to the right-hand side, per cell.
    b_sum: Vec<f64>,
    beta: Vec<f64>,
    values: Vec<f64>,
}

impl BoundaryStencil {
    pub fn coef(&self, cell: usize) -> &[f64; 7] {
        &self.coef[cell]
    }

    pub fn kind(&self, cell: usize) -> CellKind {
        self.kind[cell]
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn b_sum(&self, cell: usize) -> f64 {
        self.b_sum[cell]
    }

    /// Boundary contribution moved out of the row of `cell`.
    pub fn beta(&self, cell: usize) -> f64 {
        self.beta[cell]
    }

    /// Relative distances of one cell (all 1 when it has no cut).
    pub fn distances(&self, cell: usize) -> DirectionalDistances {
        let mut dd = DirectionalDistances::default();
        let start = self.cuts.partition_point(|c| (c.cell as usize) < cell);
        for c in self.cuts[start..].iter().take_while(|c| c.cell as usize == cell) {
            dd.d[c.dir as usize] = c.d;
            dd.object[c.dir as usize] = c.object;
        }
        dd
    }

    pub fn pinned_value(&self, cell: usize) -> Option<f64> {
        match self.kind[cell] {
            CellKind::Solved => None,
            CellKind::Inside(o) => Some(self.values[o as usize]),
        }
    }

    pub fn num_inside(&self) -> usize {
        self.kind.iter().filter(|k| matches!(k, CellKind::Inside(_))).count()
    }

    fn set_boundary_values(&mut self, values: &[f64]) {
        self.values = values.to_vec();
        self.beta.iter_mut().for_each(|b| *b = 0.0);
        for c in &self.cuts {
            self.beta[c.cell as usize] += c.weight * values[c.object as usize];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockStencil {
    Uniform { dx: f64 },
    Boundary(Box<BoundaryStencil>),
}

#[inline]
fn dir_offset(l: &BlockLayout, dir: usize) -> isize {
    let s = l.stride[dir / 2] as isize;
    if dir % 2 == 0 {
        -s
    } else {
        s
    }
}

/// Sum over the block faces touching cell `c` of `weight(dir) * w[dir]`.
#[inline]
fn face_lag(l: &BlockLayout, w: &[f64; 6], c: [usize; 3], weight: impl Fn(usize) -> f64) -> f64 {
    let mut lag = 0.0;
    for axis in 0..l.dim {
        if c[axis] == 0 && w[2 * axis] != 0.0 {
            lag += w[2 * axis] * weight(2 * axis);
        }
        if c[axis] == l.n - 1 && w[2 * axis + 1] != 0.0 {
            lag += w[2 * axis + 1] * weight(2 * axis + 1);
        }
    }
    lag
}

impl BlockStencil {
    pub fn is_uniform(&self) -> bool {
        matches!(self, BlockStencil::Uniform { .. })
    }

    pub fn as_boundary(&self) -> Option<&BoundaryStencil> {
        match self {
            BlockStencil::Boundary(b) => Some(b),
            BlockStencil::Uniform { .. } => None,
        }
    }

    /// Whether `cell` (compact index) is an unknown.
    #[inline]
    pub fn is_solved(&self, cell: usize) -> bool {
        match self {
            BlockStencil::Uniform { .. } => true,
            BlockStencil::Boundary(b) => b.kind[cell] == CellKind::Solved,
        }
    }

    /// `L(phi)` on every interior cell of the block (0 on inside cells).
    /// Face ghosts of `phi` must be filled.
    pub fn apply(&self, l: &BlockLayout, phi: &[f64], out: &mut [f64]) {
        self.rows(l, phi, |li, lphi| out[li] = lphi.unwrap_or(0.0));
    }

    /// `r = g - L(phi)` on every interior cell (0 on inside cells).
    pub fn residual(&self, l: &BlockLayout, phi: &[f64], g: &[f64], r: &mut [f64]) {
        self.rows(l, phi, |li, lphi| r[li] = lphi.map_or(0.0, |v| g[li] - v));
    }

    /// Calls `put` with `L(phi)` for every interior cell, `None` on inside cells.
    fn rows(&self, l: &BlockLayout, phi: &[f64], mut put: impl FnMut(usize, Option<f64>)) {
        let (sy, sz) = (l.stride[1], l.stride[2]);
        match self {
            BlockStencil::Uniform { dx } => {
                let inv = 1.0 / (dx * dx);
                let n = l.n;
                for k in 0..l.nz() {
                    for j in 0..n {
                        let row = l.idx(0, j as i64, k as i64);
                        for c in row..row + n {
                            let mut s = phi[c - 1] + phi[c + 1] + phi[c - sy] + phi[c + sy];
                            let mut nn = 4.0;
                            if l.dim == 3 {
                                s += phi[c - sz] + phi[c + sz];
                                nn = 6.0;
                            }
                            put(c, Some((s - nn * phi[c]) * inv));
                        }
                    }
                }
            }
            BlockStencil::Boundary(b) => {
                let offs: [isize; 6] = std::array::from_fn(|d| dir_offset(l, d));
                for (_, li, ci) in l.interior() {
                    if b.kind[ci] != CellKind::Solved {
                        put(li, None);
                        continue;
                    }
                    let co = &b.coef[ci];
                    let mut s = co[0] * phi[li] + b.beta[ci];
                    for d in 0..2 * l.dim {
                        s += co[1 + d] * phi[li.wrapping_add_signed(offs[d])];
                    }
                    put(li, Some(s));
                }
            }
        }
    }

    /// One red-black half sweep: every solved cell with
    /// `(i + j + k) % 2 == parity` solves its own row with frozen neighbors.
    /// `self_weights[dir]` is how strongly the ghosts behind face `dir`
    /// depend on the cell next to them (see
    /// [`TreeMesh::ghost_self_weights`]); updates fold that dependence into
    /// the diagonal so each swept row holds exactly once ghosts are refilled.
    pub fn gsrb(&self, l: &BlockLayout, phi: &mut [f64], g: &[f64], parity: usize, self_weights: &[f64; 6]) {
        let (sy, sz) = (l.stride[1], l.stride[2]);
        let n = l.n;
        match self {
            BlockStencil::Uniform { dx } if self_weights.iter().all(|&w| w == 0.0) => {
                let h2 = dx * dx;
                for k in 0..l.nz() {
                    for j in 0..n {
                        let row = l.idx(0, j as i64, k as i64);
                        let start = (parity + j + k) % 2;
                        if l.dim == 2 {
                            for c in (row + start..row + n).step_by(2) {
                                phi[c] = 0.25 * (phi[c - 1] + phi[c + 1] + phi[c - sy] + phi[c + sy] - h2 * g[c]);
                            }
                        } else {
                            for c in (row + start..row + n).step_by(2) {
                                phi[c] = (phi[c - 1] + phi[c + 1] + phi[c - sy] + phi[c + sy] + phi[c - sz] + phi[c + sz]
                                    - h2 * g[c])
                                    / 6.0;
                            }
                        }
                    }
                }
            }
            BlockStencil::Uniform { dx } => {
                let inv = 1.0 / (dx * dx);
                let offs: [isize; 6] = std::array::from_fn(|d| dir_offset(l, d));
                let nn = 2 * l.dim;
                for k in 0..l.nz() {
                    for j in 0..n {
                        let start = (parity + j + k) % 2;
                        for i in (start..n).step_by(2) {
                            let li = l.idx(i as i64, j as i64, k as i64);
                            let mut s = g[li];
                            for &o in &offs[..nn] {
                                s -= inv * phi[li.wrapping_add_signed(o)];
                            }
                            let lag = inv * face_lag(l, self_weights, [i, j, k], |_| 1.0);
                            phi[li] = (s + lag * phi[li]) / (lag - nn as f64 * inv);
                        }
                    }
                }
            }
            BlockStencil::Boundary(b) => {
                let offs: [isize; 6] = std::array::from_fn(|d| dir_offset(l, d));
                for k in 0..l.nz() {
                    for j in 0..n {
                        let start = (parity + j + k) % 2;
                        for i in (start..n).step_by(2) {
                            let ci = l.compact(i, j, k);
                            if b.kind[ci] != CellKind::Solved {
                                continue;
                            }
                            let li = l.idx(i as i64, j as i64, k as i64);
                            let co = &b.coef[ci];
                            let mut s = g[li] - b.beta[ci];
                            for d in 0..2 * l.dim {
                                s -= co[1 + d] * phi[li.wrapping_add_signed(offs[d])];
                            }
                            let lag = face_lag(l, self_weights, [i, j, k], |d| co[1 + d]);
                            debug_assert!(co[0] + lag < 0.0);
                            phi[li] = (s + lag * phi[li]) / (co[0] + lag);
                        }
                    }
                }
            }
        }
    }

    /// Writes boundary values into inside cells.
    pub fn pin(&self, l: &BlockLayout, phi: &mut [f64]) {
        if let BlockStencil::Boundary(b) = self {
            for (_, li, ci) in l.interior() {
                if let CellKind::Inside(o) = b.kind[ci] {
                    phi[li] = b.values[o as usize];
                }
            }
        }
    }
}

/// Builds the stencil of block `id`. `values` holds the boundary value of
/// each object of `lsf`.
pub fn build_block_stencil<L: LevelSet + ?Sized>(
    mesh: &TreeMesh,
    id: usize,
    lsf: &L,
    values: &[f64],
    cfg: &StencilConfig,
) -> BlockStencil {
    let l = mesh.layout();
    let dim = mesh.dim();
    let n = l.n as i64;
    let dx = mesh.dx(mesh.block(id).level);

    // Level set on the interior plus two rings, enough for the candidate
    // test on the first ghost ring.
    let pad = 2i64;
    let w = (n + 2 * pad) as usize;
    let (wz, kpad) = if dim == 3 { (w, pad) } else { (1, 0) };
    let fidx = |i: i64, j: i64, k: i64| ((i + pad) as usize) + w * ((j + pad) as usize + w * (k + kpad) as usize);
    let mut f = vec![0.0; w * w * wz];
    for k in -kpad..(wz as i64 - kpad) {
        for j in -pad..n + pad {
            for i in -pad..n + pad {
                f[fidx(i, j, k)] = lsf.eval(&mesh.cell_center(id, [i, j, k]));
            }
        }
    }
    let step = |axis: usize| -> [i64; 3] {
        let mut s = [0; 3];
        s[axis] = 1;
        s
    };
    let candidate = |c: [i64; 3]| {
        let mut g2 = 0.0;
        for a in 0..dim {
            let s = step(a);
            let gp = f[fidx(c[0] + s[0], c[1] + s[1], c[2] + s[2])];
            let gm = f[fidx(c[0] - s[0], c[1] - s[1], c[2] - s[2])];
            let g = (gp - gm) / (2.0 * dx);
            g2 += g * g;
        }
        candidate_test(f[fidx(c[0], c[1], c[2])], g2.sqrt(), dx, dim, cfg.safety)
    };

    let kr = if dim == 3 { -1..n + 1 } else { 0..1 };
    let mut any = false;
    'scan: for k in kr {
        for j in -1..=n {
            for i in -1..=n {
                let c = [i, j, k];
                let interior = (0..dim).all(|a| c[a] >= 0 && c[a] < n);
                if candidate(c) || (interior && f[fidx(i, j, k)] <= 0.0) {
                    any = true;
                    break 'scan;
                }
            }
        }
    }
    if !any {
        return BlockStencil::Uniform { dx };
    }

    let cells = l.interior_cells();
    let (uc, uw) = row_weights(&[1.0; 6], dx, dim);
    let mut uniform_row = [0.0; 7];
    uniform_row[0] = uc;
    uniform_row[1..].copy_from_slice(&uw);
    let mut bs = BoundaryStencil {
        coef: vec![uniform_row; cells],
        kind: vec![CellKind::Solved; cells],
        cuts: Vec::new(),
        b_sum: vec![0.0; cells],
        beta: vec![0.0; cells],
        values: values.to_vec(),
    };
    for (c, _, ci) in l.interior() {
        let fc = f[fidx(c[0], c[1], c[2])];
        let center = mesh.cell_center(id, c);
        if fc <= 0.0 {
            bs.kind[ci] = CellKind::Inside(lsf.object_at(&center) as u8);
            continue;
        }
        let is_candidate = candidate(c);
        let inside_neighbor = (0..2 * dim).any(|dir| {
            let mut nc = c;
            nc[dir / 2] += if dir % 2 == 0 { -1 } else { 1 };
            f[fidx(nc[0], nc[1], nc[2])] <= 0.0
        });
        if !is_candidate && !inside_neighbor {
            continue;
        }
        let mut dd = cell_distances(lsf, &center, dx, dim, &cfg.root);
        if !dd.any_boundary(dim) && is_candidate {
            if let Some(w_min) = cfg.w_min {
                if dx > w_min {
                    if let Some(tb) = resolve_thin_boundary(lsf, &center, dx, dim, w_min, &cfg.root) {
                        dd.d[tb.direction] = tb.d;
                        dd.object[tb.direction] = tb.object as u8;
                    }
                }
            }
        }
        if !dd.any_boundary(dim) {
            continue;
        }
        let (center_coef, wts) = row_weights(&dd.d, dx, dim);
        let row = &mut bs.coef[ci];
        row[0] = center_coef;
        for dir in 0..2 * dim {
            if dd.d[dir] < 1.0 {
                row[1 + dir] = 0.0;
                bs.b_sum[ci] += wts[dir];
                bs.cuts.push(Cut {
                    cell: ci as u32,
                    dir: dir as u8,
                    object: dd.object[dir],
                    d: dd.d[dir],
                    weight: wts[dir],
                });
            } else {
                row[1 + dir] = wts[dir];
            }
        }
    }
    bs.cuts.sort_by_key(|c| (c.cell, c.dir));
    bs.set_boundary_values(values);
    BlockStencil::Boundary(Box::new(bs))
}

/// Stencils of every block of a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencils {
    blocks: Vec<BlockStencil>,
    values: Vec<f64>,
}

impl Stencils {
    /// Constant stencils everywhere (no embedded boundary).
    pub fn uniform(mesh: &TreeMesh) -> Self {
        Stencils {
            blocks: mesh
                .blocks()
                .iter()
                .map(|b| BlockStencil::Uniform { dx: mesh.dx(b.level) })
                .collect(),
            values: Vec::new(),
        }
    }

    pub fn build<L: LevelSet + ?Sized>(mesh: &TreeMesh, lsf: &L, values: &[f64], cfg: &StencilConfig) -> Self {
        let blocks = (0..mesh.num_blocks())
            .into_par_iter()
            .map(|id| build_block_stencil(mesh, id, lsf, values, cfg))
            .collect();
        Stencils {
            blocks,
            values: values.to_vec(),
        }
    }

    #[inline]
    pub fn block(&self, id: usize) -> &BlockStencil {
        &self.blocks[id]
    }

    pub fn blocks(&self) -> &[BlockStencil] {
        &self.blocks
    }

    pub fn boundary_values(&self) -> &[f64] {
        &self.values
    }

    /// Changes the boundary values without repeating any root search.
    pub fn set_boundary_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.values.len(), "one value per object");
        self.values = values.to_vec();
        for b in &mut self.blocks {
            if let BlockStencil::Boundary(bs) = b {
                bs.set_boundary_values(values);
            }
        }
    }

    pub fn num_boundary_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| !b.is_uniform()).count()
    }

    /// Text listing of every boundary-modified row:
    /// `block level i j k kind center c0..c5 b_sum beta`.
    pub fn write_debug(&self, mesh: &TreeMesh, mut w: impl Write) -> io::Result<()> {
        let l = mesh.layout();
        writeln!(w, "# block level i j k kind center c_mx c_px c_my c_py c_mz c_pz b_sum beta")?;
        for (id, b) in self.blocks.iter().enumerate() {
            let Some(bs) = b.as_boundary() else { continue };
            let level = mesh.block(id).level;
            for (c, _, ci) in l.interior() {
                let kind = match bs.kind[ci] {
                    CellKind::Solved => "solved".to_string(),
                    CellKind::Inside(o) => format!("inside{o}"),
                };
                let co = &bs.coef[ci];
                write!(w, "{id} {level} {} {} {} {kind}", c[0], c[1], c[2])?;
                for v in co {
                    write!(w, " {v:.17e}")?;
                }
                writeln!(w, " {:.17e} {:.17e}", bs.b_sum[ci], bs.beta[ci])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{LevelSetSpec, Shape};
    use crate::mesh::{Domain, FaceBc};
    use crate::point::Point;

    fn circle(r: f64, phi_b: f64) -> LevelSetSpec {
        sphere(2, r, phi_b)
    }

    fn sphere(dim: usize, r: f64, phi_b: f64) -> LevelSetSpec {
        LevelSetSpec::single(
            Shape::Sphere {
                center: [0.5, 0.5, if dim == 3 { 0.5 } else { 0.0 }],
                radius: r,
            },
            phi_b,
        )
    }

    fn mesh(dim: usize, n: usize, levels: usize) -> TreeMesh {
        TreeMesh::uniform(dim, Domain::unit(), n, levels, std::array::from_fn(|_| FaceBc::zero())).unwrap()
    }

    #[test]
    fn far_block_is_uniform() {
        let m = mesh(2, 8, 3);
        let s = circle(0.05, 1.0);
        let id = m.find_block(3, [0, 0, 0]).unwrap();
        let st = build_block_stencil(&m, id, &s, &[1.0], &StencilConfig::default());
        let dx = m.dx(3);
        assert_eq!(st, BlockStencil::Uniform { dx });
        let (c, w) = row_weights(&[1.0; 6], dx, 2);
        assert!((c + 4.0 / (dx * dx)).abs() < 1e-9 / (dx * dx));
        assert!(w[..4].iter().all(|&v| (v - 1.0 / (dx * dx)).abs() < 1e-12 / (dx * dx)));
    }

    #[test]
    fn one_sided_row_weights() {
        // 1D-style row with the boundary halfway toward +x.
        let dx = 0.1;
        let (c, w) = row_weights(&[1.0, 0.5, 1.0, 1.0, 1.0, 1.0], dx, 1);
        // Direct substitution into 2/((d+ + d-) dx) * (.../(d dx)).
        let oracle = |dm: f64, dp: f64| {
            let pref = 2.0 / ((dp + dm) * dx);
            (pref / (dm * dx), pref / (dp * dx))
        };
        let (om, op) = oracle(1.0, 0.5);
        assert!((w[0] - om).abs() < 1e-12 && (w[1] - op).abs() < 1e-12);
        let h2 = dx * dx;
        assert!((w[0] - 4.0 / (3.0 * h2)).abs() < 1e-10);
        assert!((w[1] - 8.0 / (3.0 * h2)).abs() < 1e-10);
        assert!((c + 4.0 / h2).abs() < 1e-10);
    }

    #[test]
    fn midpoint_boundary_weights() {
        let dx = 0.5;
        let (c, w) = row_weights(&[0.5, 0.5, 1.0, 1.0, 1.0, 1.0], dx, 2);
        let h2 = dx * dx;
        assert!((w[0] - 4.0 / h2).abs() < 1e-12);
        assert!((w[1] - 4.0 / h2).abs() < 1e-12);
        assert!((w[2] - 1.0 / h2).abs() < 1e-12);
        assert!((c + 10.0 / h2).abs() < 1e-12);
    }

    fn filled(m: &TreeMesh, level: usize, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        let mut data = m.new_field();
        m.set_field(&mut data, &f);
        // Extend the analytic profile into the ghosts directly.
        let l = *m.layout();
        for id in m.level_range(level) {
            let n = l.n as i64;
            let kr: Vec<i64> = if m.dim() == 3 { (-1..=n).collect() } else { vec![0] };
            for &k in &kr {
                for j in -1..=n {
                    for i in -1..=n {
                        data[id * l.size + l.idx(i, j, k)] = f(&m.cell_center(id, [i, j, k]));
                    }
                }
            }
        }
        data
    }

    #[test]
    fn uniform_apply_is_exact_for_quadratics() {
        for dim in [2, 3] {
            let m = mesh(dim, 8, 2);
            let l = *m.layout();
            let st = Stencils::uniform(&m);
            let data = filled(&m, 2, |x| x[0] * x[0]);
            let cst = filled(&m, 2, |_| 3.5);
            let mut out = vec![0.0; l.size];
            for id in m.level_range(2) {
                st.block(id).apply(&l, &data[m.block_slice(id)], &mut out);
                for (_, li, _) in l.interior() {
                    assert!((out[li] - 2.0).abs() < 1e-9);
                }
                st.block(id).apply(&l, &cst[m.block_slice(id)], &mut out);
                for (_, li, _) in l.interior() {
                    assert!(out[li].abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn residual_of_zero_guess() {
        let m = mesh(2, 8, 1);
        let l = *m.layout();
        let st = Stencils::uniform(&m);
        let phi = m.new_field();
        let g = vec![1.0; l.size];
        let mut r = vec![0.0; l.size];
        st.block(0).residual(&l, &phi, &g, &mut r);
        for (_, li, _) in l.interior() {
            assert_eq!(r[li], 1.0);
        }
    }

    #[test]
    fn boundary_rows_sum_to_zero() {
        for dim in [2, 3] {
            let m = mesh(dim, 8, 3);
            let l = *m.layout();
            let s = sphere(dim, 0.27, 2.5);
            let st = Stencils::build(&m, &s, &[2.5], &StencilConfig::default());
            assert!(st.num_boundary_blocks() > 0);
            let cst = filled(&m, 3, |_| 2.5);
            let mut out = vec![0.0; l.size];
            let mut cuts = 0;
            for id in m.level_range(3) {
                let Some(bs) = st.block(id).as_boundary() else { continue };
                cuts += bs.cuts().len();
                for (_, _, ci) in l.interior() {
                    if bs.kind(ci) != CellKind::Solved {
                        continue;
                    }
                    let co = bs.coef(ci);
                    let sum: f64 = co[..1 + 2 * dim].iter().sum::<f64>() + bs.b_sum(ci);
                    assert!(sum.abs() <= 1e-9 * co[0].abs(), "row sum {sum}");
                    assert!(co[0] < 0.0);
                    assert!(co[1..].iter().all(|&c| c >= 0.0));
                }
                st.block(id).apply(&l, &cst[m.block_slice(id)], &mut out);
                for (_, li, ci) in l.interior() {
                    assert!(out[li].abs() <= 1e-12 * bs.coef(ci)[0].abs(), "{}", out[li]);
                }
            }
            assert!(cuts > 0);
        }
    }

    #[test]
    fn boundary_value_is_linear_and_reusable() {
        let m = mesh(2, 8, 3);
        let cfg = StencilConfig::default();
        let a = Stencils::build(&m, &circle(0.2, 1.0), &[1.0], &cfg);
        let mut b = a.clone();
        b.set_boundary_values(&[2.0]);
        let mut z = a.clone();
        z.set_boundary_values(&[0.0]);
        let fresh = Stencils::build(&m, &circle(0.2, 2.0), &[2.0], &cfg);
        assert_eq!(b, fresh);
        for id in 0..m.num_blocks() {
            if let (Some(x), Some(y), Some(o)) = (
                a.block(id).as_boundary(),
                b.block(id).as_boundary(),
                z.block(id).as_boundary(),
            ) {
                for ci in 0..m.layout().interior_cells() {
                    assert_eq!(2.0 * x.beta(ci), y.beta(ci));
                    assert_eq!(o.beta(ci), 0.0);
                }
            }
        }
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let m = mesh(3, 4, 3);
        let cfg = StencilConfig::default();
        let s = sphere(3, 0.3, 1.0);
        assert_eq!(Stencils::build(&m, &s, &[1.0], &cfg), Stencils::build(&m, &s, &[1.0], &cfg));
    }

    #[test]
    fn inside_cells_are_pinned() {
        let m = mesh(2, 8, 2);
        let l = *m.layout();
        let st = Stencils::build(&m, &circle(0.3, 4.0), &[4.0], &StencilConfig::default());
        let mut phi = m.new_field();
        let mut inside = 0;
        for id in m.level_range(2) {
            let blk = &mut phi[m.block_slice(id)];
            st.block(id).pin(&l, blk);
            if let Some(bs) = st.block(id).as_boundary() {
                inside += bs.num_inside();
                for (c, li, ci) in l.interior() {
                    let r = crate::point::dist(&m.cell_center(id, c), &[0.5, 0.5, 0.0]);
                    assert_eq!(bs.kind(ci) != CellKind::Solved, r <= 0.3);
                    if r <= 0.3 {
                        assert_eq!(blk[li], 4.0);
                    }
                }
            }
        }
        assert!(inside > 0);
    }

    #[test]
    fn inside_cells_carry_no_residual() {
        let m = mesh(2, 8, 2);
        let l = *m.layout();
        let st = Stencils::build(&m, &circle(0.3, 4.0), &[4.0], &StencilConfig::default());
        let phi = m.new_field();
        let g = vec![7.0; phi.len()];
        let mut r = m.new_field();
        for id in m.level_range(2) {
            let s = m.block_slice(id);
            st.block(id).residual(&l, &phi[s.clone()], &g[s.clone()], &mut r[s.clone()]);
            for (_, li, ci) in l.interior() {
                if !st.block(id).is_solved(ci) {
                    assert_eq!(r[s.start + li], 0.0);
                }
            }
        }
    }

    #[test]
    fn distances_match_circle_geometry() {
        let m = mesh(2, 8, 3);
        let r0 = 0.2;
        let s = circle(r0, 0.0);
        let st = Stencils::build(&m, &s, &[0.0], &StencilConfig::default());
        let l = *m.layout();
        let dx = m.dx(3);
        for id in m.level_range(3) {
            let Some(bs) = st.block(id).as_boundary() else { continue };
            for cut in bs.cuts() {
                let (i, j) = (cut.cell as usize % l.n, cut.cell as usize / l.n);
                let x = m.cell_center(id, [i as i64, j as i64, 0]);
                let dir = cut.dir as usize;
                let mut p = x;
                p[dir / 2] += if dir % 2 == 0 { -cut.d * dx } else { cut.d * dx };
                let rr = ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
                assert!((rr - r0).abs() < 1e-7 * dx.max(1.0), "{rr}");
            }
        }
    }

    #[test]
    fn debug_dump_lists_boundary_rows() {
        let m = mesh(2, 8, 2);
        let st = Stencils::build(&m, &circle(0.3, 1.0), &[1.0], &StencilConfig::default());
        let mut buf = Vec::new();
        st.write_debug(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, st.num_boundary_blocks() * 64);
        assert!(text.contains("inside0"));
    }
}
