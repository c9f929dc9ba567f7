//! Block-structured quadtree/octree mesh.
//!
//! The tree is stored level by level. Every refined block keeps its own
//! storage, so each level is a complete grid over the region it covers
//! (what the FAS cycle needs). Blocks are numbered level-major, then by
//! lexicographic block coordinate; the blocks of one level therefore occupy
//! a contiguous range of ids and of every field array.

mod adapt;
mod dump;
mod ghost;
mod layout;
mod transfer;

pub use adapt::{FieldInit, RefineFlag, RefinementFlags};
pub use dump::{read_dump, write_dump, DumpBlock, DumpHeader};
pub use ghost::GHOST_SELF_WEIGHT;
pub use layout::BlockLayout;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::point::Point;

const NO_BLOCK: u32 = u32::MAX;

/// Default hard cap on the refinement level.
pub const DEFAULT_MAX_LEVEL: usize = 16;

/// Square (2D) or cubic (3D) domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub lo: Point,
    pub size: f64,
}

impl Domain {
    pub fn unit() -> Self {
        Domain {
            lo: [0.0; 3],
            size: 1.0,
        }
    }

    /// Unit domain centered at the origin.
    pub fn centered_unit(dim: usize) -> Self {
        let mut lo = [-0.5; 3];
        if dim == 2 {
            lo[2] = 0.0;
        }
        Domain { lo, size: 1.0 }
    }

    pub fn hi(&self) -> Point {
        [self.lo[0] + self.size, self.lo[1] + self.size, self.lo[2] + self.size]
    }
}

/// Value of a Dirichlet condition on a domain face, evaluated at face centers.
#[derive(Clone)]
pub enum BcValue {
    Constant(f64),
    Function(Arc<dyn Fn(&Point) -> f64 + Send + Sync>),
}

impl BcValue {
    #[inline]
    pub fn at(&self, x: &Point) -> f64 {
        match self {
            BcValue::Constant(v) => *v,
            BcValue::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for BcValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BcValue::Constant(v) => write!(f, "Constant({v})"),
            BcValue::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Condition on one face of the domain.
#[derive(Clone, Debug)]
pub enum FaceBc {
    Dirichlet(BcValue),
    /// Zero normal derivative.
    Neumann,
}

impl FaceBc {
    pub fn zero() -> Self {
        FaceBc::Dirichlet(BcValue::Constant(0.0))
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub level: usize,
    /// Block coordinate within its level, in units of the block width.
    pub coord: [i64; 3],
    pub parent: Option<usize>,
    /// Children ordered by `x + 2 y + 4 z` offset bits; only the first
    /// `2^dim` entries are used.
    pub children: Option<[usize; 8]>,
    nbr: [u32; 27],
}

#[inline]
fn nbr_slot(off: [i64; 3]) -> usize {
    ((off[0] + 1) + 3 * (off[1] + 1) + 9 * (off[2] + 1)) as usize
}

/// Offset of the face neighbor in direction `dir = 2 * axis + side`.
#[inline]
pub fn face_offset(dir: usize) -> [i64; 3] {
    let mut off = [0; 3];
    off[dir / 2] = if dir % 2 == 0 { -1 } else { 1 };
    off
}

impl Block {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Same-level neighbor at block offset `off` (each component in -1..=1).
    #[inline]
    pub fn neighbor(&self, off: [i64; 3]) -> Option<usize> {
        let id = self.nbr[nbr_slot(off)];
        (id != NO_BLOCK).then_some(id as usize)
    }

    #[inline]
    pub fn face_neighbor(&self, dir: usize) -> Option<usize> {
        self.neighbor(face_offset(dir))
    }

    /// Offset bits of this block within its parent.
    pub fn child_offset(&self) -> [usize; 3] {
        [
            (self.coord[0] & 1) as usize,
            (self.coord[1] & 1) as usize,
            (self.coord[2] & 1) as usize,
        ]
    }
}

/// Ghost cell touching a block in two or three axes.
#[derive(Clone, Debug)]
struct EdgeGhost {
    dst: usize,
    slot: usize,
    /// Source index inside the diagonal neighbor.
    src: usize,
    /// Face ghosts used for extrapolation when the diagonal neighbor is absent.
    faces: [usize; 3],
    n_faces: usize,
    interior: usize,
}

#[derive(Clone, Debug)]
pub struct TreeMesh {
    dim: usize,
    layout: BlockLayout,
    domain: Domain,
    max_level: usize,
    blocks: Vec<Block>,
    levels: Vec<Range<usize>>,
    lookup: HashMap<(usize, [i64; 3]), usize>,
    bc: [FaceBc; 6],
    edge_ghosts: Vec<EdgeGhost>,
}

impl TreeMesh {
    /// Full tree with `levels` levels; level `l` holds `(2^(l-1))^dim` blocks
    /// and only the last level has leaves.
    pub fn uniform(dim: usize, domain: Domain, n: usize, levels: usize, bc: [FaceBc; 6]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::BlockSize(n));
        }
        if levels < 1 {
            return Err(Error::Config("a mesh needs at least one level".into()));
        }
        let mut keys = BTreeSet::new();
        for level in 1..=levels {
            let m = 1i64 << (level - 1);
            let mz = if dim == 3 { m } else { 1 };
            for i in 0..m {
                for j in 0..m {
                    for k in 0..mz {
                        keys.insert((level, [i, j, k]));
                    }
                }
            }
        }
        let mut mesh = TreeMesh {
            dim,
            layout: BlockLayout::new(dim, n),
            domain,
            max_level: DEFAULT_MAX_LEVEL.max(levels),
            blocks: Vec::new(),
            levels: Vec::new(),
            lookup: HashMap::new(),
            bc,
            edge_ghosts: Vec::new(),
        };
        mesh.edge_ghosts = mesh.build_edge_ghosts();
        mesh.rebuild(keys)?;
        Ok(mesh)
    }

    /// Rebuilds the block table from a set of `(level, coord)` keys.
    fn rebuild(&mut self, keys: BTreeSet<(usize, [i64; 3])>) -> Result<()> {
        let mut blocks = Vec::with_capacity(keys.len());
        let mut lookup = HashMap::with_capacity(keys.len());
        let mut levels: Vec<Range<usize>> = Vec::new();
        for (id, &(level, coord)) in keys.iter().enumerate() {
            while levels.len() < level {
                levels.push(id..id);
            }
            levels[level - 1].end = id + 1;
            lookup.insert((level, coord), id);
            blocks.push(Block {
                level,
                coord,
                parent: None,
                children: None,
                nbr: [NO_BLOCK; 27],
            });
        }
        if levels.first().map_or(true, |r| r.is_empty()) {
            return Err(Error::Structure("mesh has no level-1 blocks".into()));
        }
        let nchild = 1usize << self.dim;
        let zr: Range<i64> = if self.dim == 3 { -1..2 } else { 0..1 };
        for id in 0..blocks.len() {
            let (level, coord) = (blocks[id].level, blocks[id].coord);
            if level > 1 {
                let pc = [coord[0] >> 1, coord[1] >> 1, coord[2] >> 1];
                let parent = *lookup.get(&(level - 1, pc)).ok_or_else(|| {
                    Error::Structure(format!("block {coord:?} at level {level} has no parent"))
                })?;
                blocks[id].parent = Some(parent);
            }
            let child0 = [2 * coord[0], 2 * coord[1], 2 * coord[2]];
            if lookup.contains_key(&(level + 1, child0)) {
                let mut children = [usize::MAX; 8];
                for (c, slot) in children.iter_mut().enumerate().take(nchild) {
                    let cc = [
                        child0[0] + (c & 1) as i64,
                        child0[1] + ((c >> 1) & 1) as i64,
                        child0[2] + ((c >> 2) & 1) as i64,
                    ];
                    *slot = *lookup.get(&(level + 1, cc)).ok_or_else(|| {
                        Error::Structure(format!("block {coord:?} at level {level} is partially refined"))
                    })?;
                }
                blocks[id].children = Some(children);
            }
            for dz in zr.clone() {
                for dy in -1..2 {
                    for dx in -1..2 {
                        let off = [dx, dy, dz];
                        if off == [0, 0, 0] {
                            continue;
                        }
                        let nc = [coord[0] + dx, coord[1] + dy, coord[2] + dz];
                        if let Some(&nb) = lookup.get(&(level, nc)) {
                            blocks[id].nbr[nbr_slot(off)] = nb as u32;
                        }
                    }
                }
            }
        }
        self.blocks = blocks;
        self.levels = levels;
        self.lookup = lookup;
        Ok(())
    }

    fn build_edge_ghosts(&self) -> Vec<EdgeGhost> {
        let l = self.layout;
        let n = l.n as i64;
        l.edge_ghosts()
            .into_iter()
            .map(|c| {
                let mut off = [0i64; 3];
                let mut clamped = c;
                for a in 0..self.dim {
                    if c[a] < 0 {
                        off[a] = -1;
                        clamped[a] = 0;
                    } else if c[a] >= n {
                        off[a] = 1;
                        clamped[a] = n - 1;
                    }
                }
                let src = [c[0] - off[0] * n, c[1] - off[1] * n, c[2] - off[2] * n];
                let mut faces = [0; 3];
                let mut n_faces = 0;
                for a in 0..self.dim {
                    if off[a] != 0 {
                        let mut f = clamped;
                        f[a] = c[a];
                        faces[n_faces] = l.idx3(f);
                        n_faces += 1;
                    }
                }
                EdgeGhost {
                    dst: l.idx3(c),
                    slot: nbr_slot(off),
                    src: l.idx3(src),
                    faces,
                    n_faces,
                    interior: l.idx3(clamped),
                }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_size(&self) -> usize {
        self.layout.n
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn bc(&self) -> &[FaceBc; 6] {
        &self.bc
    }

    pub fn set_bc(&mut self, bc: [FaceBc; 6]) {
        self.bc = bc;
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Hard cap on refinement; `adapt` fails beyond it.
    pub fn set_max_level(&mut self, max_level: usize) {
        self.max_level = max_level;
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: usize) -> &Block {
        &self.blocks[id]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Highest level present.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_range(&self, level: usize) -> Range<usize> {
        self.levels[level - 1].clone()
    }

    pub fn find_block(&self, level: usize, coord: [i64; 3]) -> Option<usize> {
        self.lookup.get(&(level, coord)).copied()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.blocks.len()).filter(move |&b| self.blocks[b].is_leaf())
    }

    pub fn num_leaf_cells(&self) -> usize {
        self.leaves().count() * self.layout.interior_cells()
    }

    /// Grid spacing at `level`.
    pub fn dx(&self, level: usize) -> f64 {
        self.domain.size / (self.layout.n as f64 * (1u64 << (level - 1)) as f64)
    }

    /// Number of blocks per axis at `level` for a fully refined level.
    pub fn blocks_per_axis(&self, level: usize) -> i64 {
        1i64 << (level - 1)
    }

    pub fn block_origin(&self, id: usize) -> Point {
        let b = &self.blocks[id];
        let w = self.dx(b.level) * self.layout.n as f64;
        let mut o = self.domain.lo;
        for a in 0..self.dim {
            o[a] += b.coord[a] as f64 * w;
        }
        o
    }

    /// Center of cell `idx` of a block (ghost indices allowed).
    pub fn cell_center(&self, id: usize, idx: [i64; 3]) -> Point {
        let dx = self.dx(self.blocks[id].level);
        let mut x = self.block_origin(id);
        for a in 0..self.dim {
            x[a] += (idx[a] as f64 + 0.5) * dx;
        }
        x
    }

    /// Range of a block inside a field array.
    #[inline]
    pub fn block_slice(&self, id: usize) -> Range<usize> {
        id * self.layout.size..(id + 1) * self.layout.size
    }

    /// Range of a whole level inside a field array.
    pub fn level_slice(&self, level: usize) -> Range<usize> {
        let r = self.level_range(level);
        r.start * self.layout.size..r.end * self.layout.size
    }

    pub fn new_field(&self) -> Vec<f64> {
        vec![0.0; self.blocks.len() * self.layout.size]
    }

    /// Does face `dir` of block `id` lie on the domain boundary?
    /// Bit `dir` is set when face `dir` of block `id` borders a coarser
    /// leaf, so its ghosts come from the refinement-boundary interpolation.
    pub fn refinement_faces(&self, id: usize) -> u8 {
        let b = &self.blocks[id];
        (0..2 * self.dim)
            .filter(|&dir| b.face_neighbor(dir).is_none() && !self.is_physical_face(id, dir))
            .fold(0, |m, dir| m | 1 << dir)
    }

    /// Per face of block `id`, the weight with which each face ghost
    /// depends on the interior cell next to it: zero across same-level
    /// neighbors, otherwise fixed by the ghost rule of the face.
    pub fn ghost_self_weights(&self, id: usize) -> [f64; 6] {
        let b = &self.blocks[id];
        std::array::from_fn(|dir| {
            if dir >= 2 * self.dim || b.face_neighbor(dir).is_some() {
                0.0
            } else if !self.is_physical_face(id, dir) {
                GHOST_SELF_WEIGHT
            } else {
                match self.bc[dir] {
                    FaceBc::Dirichlet(_) => -1.0,
                    FaceBc::Neumann => 1.0,
                }
            }
        })
    }

    pub fn is_physical_face(&self, id: usize, dir: usize) -> bool {
        let b = &self.blocks[id];
        let a = dir / 2;
        if dir % 2 == 0 {
            b.coord[a] == 0
        } else {
            b.coord[a] == self.blocks_per_axis(b.level) - 1
        }
    }

    /// Sets every interior cell of every block from a function of the cell center.
    pub fn set_field(&self, data: &mut [f64], f: impl Fn(&Point) -> f64) {
        for id in 0..self.blocks.len() {
            let base = id * self.layout.size;
            for (c, li, _) in self.layout.interior() {
                data[base + li] = f(&self.cell_center(id, c));
            }
        }
    }

    /// Checks that adjacent leaves (including diagonal neighbors) differ by
    /// at most one level.
    pub fn is_balanced(&self) -> bool {
        for b in &self.blocks {
            if !b.is_leaf() || b.level < 3 {
                continue;
            }
            // A leaf at level l needs every neighbor position at level l-1
            // to exist (be covered at level >= l-1).
            let parent = b.parent.expect("non-root block has a parent");
            let pb = &self.blocks[parent];
            let m = self.blocks_per_axis(pb.level);
            let zr: Range<i64> = if self.dim == 3 { -1..2 } else { 0..1 };
            for dz in zr {
                for dy in -1..2 {
                    for dx in -1..2 {
                        let nc = [pb.coord[0] + dx, pb.coord[1] + dy, pb.coord[2] + dz];
                        let inside = (0..self.dim).all(|a| nc[a] >= 0 && nc[a] < m);
                        if inside && self.find_block(pb.level, nc).is_none() {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}
