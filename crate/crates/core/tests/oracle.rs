//! Multigrid solutions against direct solves of the same discrete system.

mod common;

use common::{config, direct_solve, oracle_gap};
use octree_poisson::harness::run_case;

fn gap(text: &str) -> f64 {
    let run = run_case(&config(text), |_| {}).unwrap();
    let direct = direct_solve(&run.solver);
    oracle_gap(&run.solver, &direct)
}

#[test]
fn circle_on_16x16_matches_direct_solve() {
    let g = gap("case = sphere_uniform\ndim = 2\nmax_level = 2\ncycles = 25\ndump = false");
    assert!(g <= 1e-9, "relative gap {g:e}");
}

#[test]
fn sphere_on_8_cubed_matches_direct_solve() {
    let g = gap("case = sphere_uniform\ndim = 3\nmax_level = 1\ncycles = 3\ndump = false");
    assert!(g <= 1e-6, "relative gap {g:e}");
}

#[test]
fn manufactured_source_matches_direct_solve() {
    let g = gap("case = manufactured\ndim = 2\nmax_level = 3\ncycles = 25\ndump = false");
    assert!(g <= 1e-9, "relative gap {g:e}");
}

#[test]
fn sharp_shape_with_thin_search_matches_direct_solve() {
    let g = gap("case = shape2d\nshape = astroid\nmax_level = 3\ncycles = 40\ndump = false");
    assert!(g <= 1e-9, "relative gap {g:e}");
}
