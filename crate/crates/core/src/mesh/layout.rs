/// Index arithmetic for one block: `n^dim` interior cells surrounded by a
/// single ghost layer. Cell `(i, j, k)` with `-1 <= i <= n` maps to
/// `base + i + j * stride[1] + k * stride[2]`; in 2D `stride[2]` is zero and
/// `k` is always 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub dim: usize,
    pub n: usize,
    pub stride: [usize; 3],
    /// Number of values per block, ghosts included.
    pub size: usize,
    base: usize,
}

impl BlockLayout {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim == 2 || dim == 3, "dimension must be 2 or 3");
        let w = n + 2;
        let stride = if dim == 2 { [1, w, 0] } else { [1, w, w * w] };
        let size = w.pow(dim as u32);
        BlockLayout {
            dim,
            n,
            stride,
            size,
            base: 1 + stride[1] + stride[2],
        }
    }

    #[inline]
    pub fn idx(&self, i: i64, j: i64, k: i64) -> usize {
        (self.base as i64 + i + j * self.stride[1] as i64 + k * self.stride[2] as i64) as usize
    }

    #[inline]
    pub fn idx3(&self, c: [i64; 3]) -> usize {
        self.idx(c[0], c[1], c[2])
    }

    /// Number of interior cells along z (1 in 2D).
    #[inline]
    pub fn nz(&self) -> usize {
        if self.dim == 3 {
            self.n
        } else {
            1
        }
    }

    pub fn interior_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Compact index of an interior cell (x fastest).
    #[inline]
    pub fn compact(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Offset between neighboring cells along `axis`.
    #[inline]
    pub fn offset(&self, axis: usize) -> usize {
        self.stride[axis]
    }

    /// Interior cells as `(cell, ghosted index, compact index)`, x fastest.
    pub fn interior(&self) -> impl Iterator<Item = ([i64; 3], usize, usize)> + '_ {
        let n = self.n;
        (0..self.nz()).flat_map(move |k| {
            (0..n).flat_map(move |j| {
                (0..n).map(move |i| {
                    let c = [i as i64, j as i64, k as i64];
                    (c, self.idx3(c), self.compact(i, j, k))
                })
            })
        })
    }

    /// Ghost cells touching the block in two or three axes (edges and
    /// corners), ordered by the number of out-of-range axes.
    pub fn edge_ghosts(&self) -> Vec<[i64; 3]> {
        let n = self.n as i64;
        let krange: Vec<i64> = if self.dim == 3 { (-1..=n).collect() } else { vec![0] };
        let mut out = Vec::new();
        for &k in &krange {
            for j in -1..=n {
                for i in -1..=n {
                    let c = [i, j, k];
                    let outside = (0..self.dim).filter(|&a| c[a] < 0 || c[a] >= n).count();
                    if outside >= 2 {
                        out.push(c);
                    }
                }
            }
        }
        out.sort_by_key(|c| (0..self.dim).filter(|&a| c[a] < 0 || c[a] >= n).count());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_2d() {
        let l = BlockLayout::new(2, 8);
        assert_eq!(l.size, 100);
        assert_eq!(l.idx(-1, -1, 0), 0);
        assert_eq!(l.idx(8, 8, 0), 99);
        assert_eq!(l.interior().count(), 64);
        assert_eq!(l.edge_ghosts().len(), 4);
    }

    #[test]
    fn indices_3d() {
        let l = BlockLayout::new(3, 4);
        assert_eq!(l.size, 216);
        assert_eq!(l.idx(-1, -1, -1), 0);
        assert_eq!(l.idx(4, 4, 4), 215);
        let e = l.edge_ghosts();
        assert_eq!(e.len(), 12 * 4 + 8);
        let n = 4;
        let count = |c: &[i64; 3]| c.iter().filter(|&&x| x < 0 || x >= n).count();
        assert_eq!(count(e.last().unwrap()), 3);
        assert_eq!(count(&e[0]), 2);
    }
}
