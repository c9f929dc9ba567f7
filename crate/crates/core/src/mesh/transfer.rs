//! Restriction (cell averaging) and bi/trilinear prolongation between a
//! block and its parent.

use super::TreeMesh;

impl TreeMesh {
    /// Averages the interior of `child` (from `src`, a block-sized slice)
    /// into the matching quadrant/octant of its parent (`dst`, block-sized).
    pub fn restrict_block(&self, child: usize, src: &[f64], dst: &mut [f64]) {
        let l = &self.layout;
        let h = (l.n / 2) as i64;
        let off = self.blocks[child].child_offset();
        let o = [off[0] as i64 * h, off[1] as i64 * h, off[2] as i64 * h];
        let (sx, sy, sz) = (l.stride[0], l.stride[1], l.stride[2]);
        let kz = if self.dim == 3 { h } else { 1 };
        let w = 1.0 / (1usize << self.dim) as f64;
        for k in 0..kz {
            for j in 0..h {
                for i in 0..h {
                    let f = l.idx(2 * i, 2 * j, 2 * k);
                    let mut s = src[f] + src[f + sx] + src[f + sy] + src[f + sx + sy];
                    if self.dim == 3 {
                        let g = f + sz;
                        s += src[g] + src[g + sx] + src[g + sy] + src[g + sx + sy];
                    }
                    let ck = if self.dim == 3 { o[2] + k } else { 0 };
                    dst[l.idx(o[0] + i, o[1] + j, ck)] = s * w;
                }
            }
        }
    }

    /// Restricts every block at `level` into its parent within one array.
    pub fn restrict_level(&self, level: usize, data: &mut [f64]) {
        if level < 2 {
            return;
        }
        let size = self.layout.size;
        let split = self.level_slice(level).start;
        let (coarse, fine) = data.split_at_mut(split);
        for id in self.level_range(level) {
            let p = self.blocks[id].parent.expect("fine block has a parent");
            let src = &fine[(id * size - split)..][..size];
            self.restrict_block(id, src, &mut coarse[p * size..(p + 1) * size]);
        }
    }

    /// Restricts every block at `level` of `src` into the parents in `dst`.
    pub fn restrict_level_into(&self, level: usize, src: &[f64], dst: &mut [f64]) {
        let size = self.layout.size;
        for id in self.level_range(level) {
            let p = self.blocks[id].parent.expect("fine block has a parent");
            self.restrict_block(id, &src[self.block_slice(id)], &mut dst[p * size..(p + 1) * size]);
        }
    }

    /// Bi/trilinear interpolation from the parent of `child`. `coarse` reads
    /// a value of the parent block by ghosted index (edge and corner ghosts
    /// must be valid); `apply` receives each fine interior cell.
    pub fn prolong_block(
        &self,
        child: usize,
        coarse: impl Fn(usize) -> f64,
        mut apply: impl FnMut(usize, f64),
    ) {
        let l = &self.layout;
        let n = l.n as i64;
        let off = self.blocks[child].child_offset();
        let kz = if self.dim == 3 { n } else { 1 };
        for k in 0..kz {
            for j in 0..n {
                for i in 0..n {
                    let fi = [off[0] as i64 * n + i, off[1] as i64 * n + j, off[2] as i64 * n + k];
                    let mut c = [0i64; 3];
                    let mut s = [0i64; 3];
                    for a in 0..self.dim {
                        c[a] = fi[a] / 2;
                        s[a] = if fi[a] % 2 == 0 { -1 } else { 1 };
                    }
                    let base = l.idx3(c);
                    let dx = (s[0] * l.stride[0] as i64) as isize;
                    let dy = (s[1] * l.stride[1] as i64) as isize;
                    let v = if self.dim == 2 {
                        let at = |d: isize| coarse(base.wrapping_add_signed(d));
                        (9.0 * at(0) + 3.0 * at(dx) + 3.0 * at(dy) + at(dx + dy)) / 16.0
                    } else {
                        let dz = (s[2] * l.stride[2] as i64) as isize;
                        let at = |d: isize| coarse(base.wrapping_add_signed(d));
                        (27.0 * at(0)
                            + 9.0 * (at(dx) + at(dy) + at(dz))
                            + 3.0 * (at(dx + dy) + at(dx + dz) + at(dy + dz))
                            + at(dx + dy + dz))
                            / 64.0
                    };
                    apply(l.idx(i, j, k), v);
                }
            }
        }
    }

    /// Overwrites the interior of every block at `level` with the
    /// interpolation of its parent. Ghosts at `level - 1` must be filled.
    pub fn prolong_level(&self, level: usize, data: &mut [f64]) {
        let size = self.layout.size;
        let split = self.level_slice(level).start;
        let (coarse, fine) = data.split_at_mut(split);
        for id in self.level_range(level) {
            let p = self.blocks[id].parent.expect("fine block has a parent");
            let pb = &coarse[p * size..(p + 1) * size];
            let fb = &mut fine[(id * size - split)..][..size];
            self.prolong_block(id, |i| pb[i], |i, v| fb[i] = v);
        }
    }

    /// Adds the interpolated coarse correction `data - old` at `level - 1`
    /// to every block at `level`. Ghosts of both arrays at `level - 1` must
    /// be filled.
    pub fn prolong_correction(&self, level: usize, data: &mut [f64], old: &[f64]) {
        let size = self.layout.size;
        let split = self.level_slice(level).start;
        let (coarse, fine) = data.split_at_mut(split);
        for id in self.level_range(level) {
            let p = self.blocks[id].parent.expect("fine block has a parent");
            let pb = &coarse[p * size..(p + 1) * size];
            let ob = &old[p * size..(p + 1) * size];
            let fb = &mut fine[(id * size - split)..][..size];
            self.prolong_block(id, |i| pb[i] - ob[i], |i, v| fb[i] += v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{BcValue, Domain, FaceBc, TreeMesh};
    use crate::point::Point;
    use std::sync::Arc;

    fn linear_bc(f: fn(&Point) -> f64) -> [FaceBc; 6] {
        std::array::from_fn(|_| FaceBc::Dirichlet(BcValue::Function(Arc::new(f))))
    }

    fn lin(x: &Point) -> f64 {
        1.0 + 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2]
    }

    #[test]
    fn restriction_preserves_linear() {
        for dim in [2, 3] {
            let mesh = TreeMesh::uniform(dim, Domain::unit(), 4, 3, linear_bc(lin)).unwrap();
            let mut data = mesh.new_field();
            let lvl3 = mesh.level_slice(3);
            let mut fine = mesh.new_field();
            mesh.set_field(&mut fine, lin);
            data[lvl3.clone()].copy_from_slice(&fine[lvl3]);
            mesh.restrict_level(3, &mut data);
            mesh.restrict_level(2, &mut data);
            let l = *mesh.layout();
            for id in mesh.level_range(1).chain(mesh.level_range(2)) {
                for (c, li, _) in l.interior() {
                    let x = mesh.cell_center(id, c);
                    assert!((data[id * l.size + li] - lin(&x)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn restriction_preserves_mean() {
        let mesh = TreeMesh::uniform(2, Domain::unit(), 8, 2, linear_bc(lin)).unwrap();
        let mut data = mesh.new_field();
        mesh.set_field(&mut data, |x| (9.0 * x[0]).sin() * (4.0 * x[1]).cos());
        let l = *mesh.layout();
        let fine_mean: f64 = mesh
            .level_range(2)
            .flat_map(|id| l.interior().map(move |(_, li, _)| id * l.size + li))
            .map(|i| data[i])
            .sum::<f64>()
            / 256.0;
        mesh.restrict_level(2, &mut data);
        let coarse_mean: f64 = l.interior().map(|(_, li, _)| data[li]).sum::<f64>() / 64.0;
        assert!((fine_mean - coarse_mean).abs() < 1e-14);
    }

    #[test]
    fn prolongation_exact_for_linear() {
        for dim in [2, 3] {
            let mesh = TreeMesh::uniform(dim, Domain::unit(), 4, 2, linear_bc(lin)).unwrap();
            let mut data = mesh.new_field();
            mesh.set_field(&mut data, lin);
            mesh.fill_ghosts(1, &mut data);
            let l = *mesh.layout();
            for id in mesh.level_range(2) {
                for (_, li, _) in l.interior() {
                    data[id * l.size + li] = f64::NAN;
                }
            }
            mesh.prolong_level(2, &mut data);
            for id in mesh.level_range(2) {
                for (c, li, _) in l.interior() {
                    let x = mesh.cell_center(id, c);
                    assert!((data[id * l.size + li] - lin(&x)).abs() < 1e-12, "dim {dim}");
                }
            }
        }
    }

    #[test]
    fn correction_adds_difference() {
        let mesh = TreeMesh::uniform(2, Domain::unit(), 4, 2, std::array::from_fn(|_| FaceBc::Neumann)).unwrap();
        let mut data = mesh.new_field();
        let mut old = mesh.new_field();
        mesh.set_field(&mut data, |_| 5.0);
        mesh.set_field(&mut old, |_| 3.0);
        mesh.fill_ghosts(1, &mut data);
        mesh.fill_ghosts(1, &mut old);
        let l = *mesh.layout();
        for id in mesh.level_range(2) {
            for (_, li, _) in l.interior() {
                data[id * l.size + li] = 1.0;
            }
        }
        mesh.prolong_correction(2, &mut data, &old);
        for id in mesh.level_range(2) {
            for (_, li, _) in l.interior() {
                assert!((data[id * l.size + li] - 3.0).abs() < 1e-14);
            }
        }
    }
}
