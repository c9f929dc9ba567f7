use super::{FaceBc, TreeMesh};

/// Weight of the adjacent fine cell in a refinement-boundary ghost. A
/// smoother must fold it into the diagonal of that cell.
pub const GHOST_SELF_WEIGHT: f64 = 0.75;

/// Which axes are transverse to `axis`, with their extents. In 2D the second
/// transverse axis is the degenerate z axis of extent 1.
#[inline]
fn transverse(dim: usize, n: usize, axis: usize) -> ([usize; 2], [i64; 2]) {
    let t = match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let ext = |a: usize| if a < dim { n as i64 } else { 1 };
    (t, [ext(t[0]), ext(t[1])])
}

impl TreeMesh {
    /// Fills all ghost cells (faces, then edges and corners) of the blocks at
    /// `level`. Refinement boundaries read the current values at `level - 1`.
    pub fn fill_ghosts(&self, level: usize, data: &mut [f64]) {
        for id in self.level_range(level) {
            for dir in 0..2 * self.dim {
                self.fill_face(id, dir, data);
            }
            self.fill_edges(id, data);
        }
    }

    /// Fills only face ghosts, which is all the 5/7-point stencils read.
    pub fn fill_face_ghosts(&self, level: usize, data: &mut [f64]) {
        for id in self.level_range(level) {
            for dir in 0..2 * self.dim {
                self.fill_face(id, dir, data);
            }
        }
    }

    fn fill_face(&self, id: usize, dir: usize, data: &mut [f64]) {
        let l = &self.layout;
        let n = l.n as i64;
        let axis = dir / 2;
        let low = dir % 2 == 0;
        let (t, ext) = transverse(self.dim, l.n, axis);
        let ghost_n = if low { -1 } else { n };
        let inner_n = if low { 0 } else { n - 1 };
        let cell = |na: i64, u: i64, v: i64| {
            let mut c = [0i64; 3];
            c[axis] = na;
            c[t[0]] = u;
            c[t[1]] = v;
            l.idx3(c)
        };
        let base = id * l.size;
        let block = &self.blocks[id];

        if let Some(nb) = block.face_neighbor(dir) {
            let nb_base = nb * l.size;
            let src_n = if low { n - 1 } else { 0 };
            for v in 0..ext[1] {
                for u in 0..ext[0] {
                    data[base + cell(ghost_n, u, v)] = data[nb_base + cell(src_n, u, v)];
                }
            }
        } else if self.is_physical_face(id, dir) {
            match &self.bc[dir] {
                FaceBc::Neumann => {
                    for v in 0..ext[1] {
                        for u in 0..ext[0] {
                            data[base + cell(ghost_n, u, v)] = data[base + cell(inner_n, u, v)];
                        }
                    }
                }
                FaceBc::Dirichlet(value) => {
                    let half = if low { -0.5 } else { 0.5 };
                    for v in 0..ext[1] {
                        for u in 0..ext[0] {
                            let mut c = [0i64; 3];
                            c[axis] = inner_n;
                            c[t[0]] = u;
                            c[t[1]] = v;
                            let mut x = self.cell_center(id, c);
                            x[axis] += half * self.dx(block.level);
                            let inner = data[base + l.idx3(c)];
                            data[base + cell(ghost_n, u, v)] = 2.0 * value.at(&x) - inner;
                        }
                    }
                }
            }
        } else {
            // Refinement boundary: the coarse neighbor of the parent covers
            // this face. Fine ghosts are chosen so the averaged fine flux
            // through the face equals the coarse flux.
            let parent = block.parent.unwrap_or_else(|| {
                panic!("block {id} has an open face {dir} at the coarsest level")
            });
            let coarse = self.blocks[parent].face_neighbor(dir).unwrap_or_else(|| {
                panic!("block {id}: no coarse neighbor across face {dir} (mesh not 2:1 balanced)")
            });
            let c_base = coarse * l.size;
            let c_n = if low { n - 1 } else { 0 };
            let inward = if low { 1 } else { -1 };
            let off = [block.coord[t[0]] & 1, block.coord[t[1]] & 1];
            let diag = |u: i64, e: i64| if e == 1 { u } else if u % 2 == 0 { u + 1 } else { u - 1 };
            for v in 0..ext[1] {
                let vc = (off[1] * n + v) / 2;
                for u in 0..ext[0] {
                    let uc = (off[0] * n + u) / 2;
                    let c_val = data[c_base + cell(c_n, uc, vc)];
                    let f0 = data[base + cell(inner_n, u, v)];
                    let fd = data[base + cell(inner_n + inward, diag(u, ext[0]), diag(v, ext[1]))];
                    data[base + cell(ghost_n, u, v)] = 0.5 * c_val + GHOST_SELF_WEIGHT * f0 - 0.25 * fd;
                }
            }
        }
    }

    /// Edge and corner ghosts: copied from a same-level diagonal neighbor
    /// when one exists, otherwise extrapolated linearly from the face ghosts.
    fn fill_edges(&self, id: usize, data: &mut [f64]) {
        let size = self.layout.size;
        let base = id * size;
        let block = &self.blocks[id];
        for e in &self.edge_ghosts {
            let nb = block.nbr[e.slot];
            data[base + e.dst] = if nb != super::NO_BLOCK {
                data[nb as usize * size + e.src]
            } else {
                let s: f64 = e.faces[..e.n_faces].iter().map(|&f| data[base + f]).sum();
                s - (e.n_faces as f64 - 1.0) * data[base + e.interior]
            };
        }
    }
}
