//! Refinement and coarsening with forced 2:1 balance.

use std::collections::BTreeSet;

use super::TreeMesh;
use crate::error::{Error, Result};
use crate::point::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineFlag {
    Refine,
    Keep,
    Coarsen,
}

/// One flag per block of the mesh it was created for. Flags on non-leaf
/// blocks are ignored.
#[derive(Clone, Debug)]
pub struct RefinementFlags {
    flags: Vec<RefineFlag>,
}

impl RefinementFlags {
    pub fn new(mesh: &TreeMesh) -> Self {
        RefinementFlags {
            flags: vec![RefineFlag::Keep; mesh.num_blocks()],
        }
    }

    pub fn set(&mut self, id: usize, flag: RefineFlag) {
        self.flags[id] = flag;
    }

    pub fn get(&self, id: usize) -> RefineFlag {
        self.flags[id]
    }

    pub fn any_refine(&self) -> bool {
        self.flags.contains(&RefineFlag::Refine)
    }
}

/// How a field is initialized on blocks created by refinement.
pub enum FieldInit<'a> {
    /// Bi/trilinear interpolation from the parent.
    Prolong,
    /// Sampled from a function of the cell center.
    Analytic(&'a dyn Fn(&Point) -> f64),
    Zero,
}

type Key = (usize, [i64; 3]);

impl TreeMesh {
    fn neighbor_offsets(&self) -> Vec<[i64; 3]> {
        let zr: Vec<i64> = if self.dim == 3 { vec![-1, 0, 1] } else { vec![0] };
        let mut out = Vec::new();
        for &dz in &zr {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if [dx, dy, dz] != [0, 0, 0] {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    fn in_domain(&self, level: usize, c: [i64; 3]) -> bool {
        let m = self.blocks_per_axis(level);
        (0..self.dim).all(|a| c[a] >= 0 && c[a] < m)
    }

    fn children_keys(&self, (level, c): Key) -> impl Iterator<Item = Key> + '_ {
        (0..1usize << self.dim).map(move |b| {
            (
                level + 1,
                [
                    2 * c[0] + (b & 1) as i64,
                    2 * c[1] + ((b >> 1) & 1) as i64,
                    2 * c[2] + ((b >> 2) & 1) as i64,
                ],
            )
        })
    }

    /// Applies `flags`, refining extra blocks as needed for 2:1 balance.
    /// Each entry of `fields` is remapped onto the new block numbering;
    /// blocks created by refinement are initialized per its `FieldInit`,
    /// and parents of removed children receive their restriction.
    /// Returns whether the mesh changed.
    pub fn adapt(
        &mut self,
        flags: &RefinementFlags,
        fields: &mut [(&mut Vec<f64>, FieldInit<'_>)],
    ) -> Result<bool> {
        let mut keys: BTreeSet<Key> = self.blocks.iter().map(|b| (b.level, b.coord)).collect();
        let offsets = self.neighbor_offsets();

        // Refinement with balance propagation.
        let mut work: Vec<Key> = self
            .leaves()
            .filter(|&id| flags.get(id) == RefineFlag::Refine)
            .map(|id| (self.blocks[id].level, self.blocks[id].coord))
            .collect();
        let mut refined: BTreeSet<Key> = BTreeSet::new();
        while let Some(key) = work.pop() {
            let (level, c) = key;
            if refined.contains(&key) || keys.contains(&(level + 1, [2 * c[0], 2 * c[1], 2 * c[2]])) {
                continue;
            }
            if level + 1 > self.max_level {
                return Err(Error::MaxLevelExceeded {
                    level: level + 1,
                    max_level: self.max_level,
                });
            }
            refined.insert(key);
            for ck in self.children_keys(key).collect::<Vec<_>>() {
                keys.insert(ck);
            }
            if level < 2 {
                continue;
            }
            for off in &offsets {
                let nc = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                if !self.in_domain(level, nc) || keys.contains(&(level, nc)) {
                    continue;
                }
                work.push((level - 1, [nc[0] >> 1, nc[1] >> 1, nc[2] >> 1]));
            }
        }

        // Coarsening of complete sibling groups.
        let mut coarsened: Vec<Key> = Vec::new();
        for p in &self.blocks {
            let Some(children) = p.children else { continue };
            let kids = &children[..1 << self.dim];
            let all = kids
                .iter()
                .all(|&k| self.blocks[k].is_leaf() && flags.get(k) == RefineFlag::Coarsen);
            if !all || kids.iter().any(|&k| refined.contains(&(self.blocks[k].level, self.blocks[k].coord))) {
                continue;
            }
            // After removal `p` is a leaf at level l; same-level neighbors
            // must not have grandchildren.
            let (level, c) = (p.level, p.coord);
            let blocked = offsets.iter().any(|off| {
                let nc = [c[0] + off[0], c[1] + off[1], c[2] + off[2]];
                self.children_keys((level, nc))
                    .any(|ck| keys.contains(&(ck.0 + 1, [2 * ck.1[0], 2 * ck.1[1], 2 * ck.1[2]])))
            });
            if blocked {
                continue;
            }
            for ck in self.children_keys((level, c)).collect::<Vec<_>>() {
                keys.remove(&ck);
            }
            coarsened.push((level, c));
        }

        if refined.is_empty() && coarsened.is_empty() {
            return Ok(false);
        }

        let old = self.clone();
        self.rebuild(keys)?;
        let size = self.layout.size;

        for (data, init) in fields.iter_mut() {
            let mut src: Vec<f64> = std::mem::take(*data);
            if matches!(init, FieldInit::Prolong) {
                for level in 1..=old.num_levels() {
                    old.fill_ghosts(level, &mut src);
                }
            }
            let mut dst = self.new_field();
            for id in 0..self.blocks.len() {
                let b = &self.blocks[id];
                let out = &mut dst[id * size..(id + 1) * size];
                if let Some(oid) = old.find_block(b.level, b.coord) {
                    out.copy_from_slice(&src[old.block_slice(oid)]);
                    continue;
                }
                let parent_old = old
                    .find_block(b.level - 1, [b.coord[0] >> 1, b.coord[1] >> 1, b.coord[2] >> 1])
                    .expect("new block has a pre-existing parent");
                match init {
                    FieldInit::Prolong => {
                        let pb = &src[old.block_slice(parent_old)];
                        self.prolong_block(id, |i| pb[i], |i, v| out[i] = v);
                    }
                    FieldInit::Analytic(f) => {
                        for (c, li, _) in self.layout.interior() {
                            out[li] = f(&self.cell_center(id, c));
                        }
                    }
                    FieldInit::Zero => {}
                }
            }
            for &(level, c) in &coarsened {
                let p_new = self.find_block(level, c).expect("coarsened parent survives");
                let p_old = old.find_block(level, c).expect("coarsened parent existed");
                let kids = old.blocks[p_old].children.expect("coarsened parent had children");
                for &k in &kids[..1 << self.dim] {
                    old.restrict_block(k, &src[old.block_slice(k)], &mut dst[p_new * size..(p_new + 1) * size]);
                }
            }
            **data = dst;
        }
        Ok(true)
    }

    /// Refines leaves flagged by `criterion` until no leaf is flagged.
    pub fn refine_until(&mut self, criterion: impl Fn(&TreeMesh, usize) -> bool) -> Result<()> {
        loop {
            let mut flags = RefinementFlags::new(self);
            for id in self.leaves().collect::<Vec<_>>() {
                if criterion(self, id) {
                    flags.set(id, RefineFlag::Refine);
                }
            }
            if !flags.any_refine() {
                return Ok(());
            }
            self.adapt(&flags, &mut [])?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Domain, FaceBc};

    fn zero_bc() -> [FaceBc; 6] {
        std::array::from_fn(|_| FaceBc::zero())
    }

    #[test]
    fn forced_refinement_keeps_balance() {
        for dim in [2, 3] {
            let mut mesh = TreeMesh::uniform(dim, Domain::unit(), 4, 2, zero_bc()).unwrap();
            // Refine a corner twice; the second step must force neighbors.
            for _ in 0..3 {
                let corner = mesh.find_block(mesh.num_levels(), [0, 0, 0]).unwrap();
                let mut flags = RefinementFlags::new(&mesh);
                flags.set(corner, RefineFlag::Refine);
                assert!(mesh.adapt(&flags, &mut []).unwrap());
                assert!(mesh.is_balanced(), "dim {dim}");
            }
            assert_eq!(mesh.num_levels(), 5);
        }
    }

    #[test]
    fn keep_flags_are_idempotent() {
        let mut mesh = TreeMesh::uniform(2, Domain::unit(), 8, 3, zero_bc()).unwrap();
        let before = mesh.num_blocks();
        let flags = RefinementFlags::new(&mesh);
        assert!(!mesh.adapt(&flags, &mut []).unwrap());
        assert_eq!(mesh.num_blocks(), before);
    }

    #[test]
    fn max_level_is_enforced() {
        let mut mesh = TreeMesh::uniform(2, Domain::unit(), 4, 2, zero_bc()).unwrap();
        mesh.set_max_level(2);
        let mut flags = RefinementFlags::new(&mesh);
        flags.set(mesh.leaves().next().unwrap(), RefineFlag::Refine);
        assert!(matches!(
            mesh.adapt(&flags, &mut []),
            Err(Error::MaxLevelExceeded { level: 3, max_level: 2 })
        ));
    }

    #[test]
    fn coarsening_restores_parent_average() {
        let mut mesh = TreeMesh::uniform(2, Domain::unit(), 4, 2, zero_bc()).unwrap();
        let mut data = mesh.new_field();
        mesh.set_field(&mut data, |x| x[0] + 2.0 * x[1]);
        let mut flags = RefinementFlags::new(&mesh);
        for id in mesh.level_range(2) {
            flags.set(id, RefineFlag::Coarsen);
        }
        assert!(mesh.adapt(&flags, &mut [(&mut data, FieldInit::Prolong)]).unwrap());
        assert_eq!(mesh.num_blocks(), 1);
        let l = *mesh.layout();
        for (c, li, _) in l.interior() {
            let x = mesh.cell_center(0, c);
            assert!((data[li] - (x[0] + 2.0 * x[1])).abs() < 1e-14);
        }
    }

    #[test]
    fn coarsening_refused_when_unbalanced() {
        let mut mesh = TreeMesh::uniform(2, Domain::unit(), 4, 2, zero_bc()).unwrap();
        let mut flags = RefinementFlags::new(&mesh);
        flags.set(mesh.find_block(2, [0, 0, 0]).unwrap(), RefineFlag::Refine);
        mesh.adapt(&flags, &mut []).unwrap();
        // Try to coarsen level 2 into level 1 while level 3 exists.
        let mut flags = RefinementFlags::new(&mesh);
        for id in mesh.level_range(2) {
            flags.set(id, RefineFlag::Coarsen);
        }
        mesh.adapt(&flags, &mut []).unwrap();
        assert!(mesh.is_balanced());
        assert_eq!(mesh.num_levels(), 3);
    }

    #[test]
    fn new_blocks_initialized() {
        let mut mesh = TreeMesh::uniform(3, Domain::unit(), 4, 2, zero_bc()).unwrap();
        let lin = |x: &Point| 1.0 + x[0] - x[2];
        let mut phi = mesh.new_field();
        let mut g = mesh.new_field();
        mesh.set_field(&mut phi, lin);
        let rhs = |x: &Point| x[1];
        let mut flags = RefinementFlags::new(&mesh);
        flags.set(mesh.find_block(2, [1, 1, 1]).unwrap(), RefineFlag::Refine);
        mesh.set_bc(std::array::from_fn(|_| {
            FaceBc::Dirichlet(crate::mesh::BcValue::Function(std::sync::Arc::new(lin)))
        }));
        mesh.adapt(
            &flags,
            &mut [(&mut phi, FieldInit::Prolong), (&mut g, FieldInit::Analytic(&rhs))],
        )
        .unwrap();
        let l = *mesh.layout();
        for id in mesh.level_range(3) {
            for (c, li, _) in l.interior() {
                let x = mesh.cell_center(id, c);
                assert!((phi[id * l.size + li] - lin(&x)).abs() < 1e-12);
                assert_eq!(g[id * l.size + li], x[1]);
            }
        }
    }

    #[test]
    fn sphere_criterion_grades_toward_origin() {
        let mut mesh = TreeMesh::uniform(2, Domain::centered_unit(2), 8, 1, zero_bc()).unwrap();
        let r_obj = 5e-3;
        let dx_min = 1.0 / 1024.0;
        mesh.refine_until(|m, id| {
            let dx = m.dx(m.block(id).level);
            let l = m.layout();
            l.interior().any(|(c, _, _)| {
                let x = m.cell_center(id, c);
                let r = crate::point::norm(&x);
                dx > dx_min * (r / r_obj).max(1.0)
            })
        })
        .unwrap();
        assert!(mesh.is_balanced());
        assert_eq!(mesh.num_levels(), 8);
        let finest = mesh.level_range(8);
        for id in finest {
            let o = mesh.block_origin(id);
            let w = 8.0 * mesh.dx(8);
            assert!(o[0].abs() < 0.1 + w && o[1].abs() < 0.1 + w);
        }
        assert!(mesh.num_leaf_cells() < 1024 * 1024 / 10);
    }
}
