//! Level set geometry: analytic shapes, sub-cell root location along
//! segments, detection of cells near a boundary, and the coarse-grid search
//! for objects too thin to be seen by axis-aligned line searches.
//!
//! Sign convention: `f < 0` inside an object, `f > 0` outside. Directions
//! are numbered `2 * axis + side`, with side 0 pointing to the lower
//! neighbor.

use crate::error::{Error, Result};
use crate::point::{self, Point};

/// Smallest relative distance handed to the stencil builder.
pub const D_MIN: f64 = 1e-4;

/// Default safety factor in `|f| < factor * sqrt(D) * dx * |grad f|`.
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;

const INV_GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Anything that can be evaluated as a level set function.
pub trait LevelSet: Sync {
    fn eval(&self, x: &Point) -> f64;

    /// Index of the object whose surface is closest to `x`, used to pick the
    /// Dirichlet value of a located boundary.
    fn object_at(&self, _x: &Point) -> usize {
        0
    }
}

impl<F> LevelSet for F
where
    F: Fn(&Point) -> f64 + Sync,
{
    fn eval(&self, x: &Point) -> f64 {
        self(x)
    }
}

/// Profiles of the sharp-featured test shapes, in transformed coordinates `(p, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SharpProfile {
    Spheroid,
    Rhombus,
    Heart,
    Astroid,
}

impl SharpProfile {
    pub fn eval(self, p: f64, q: f64) -> f64 {
        match self {
            SharpProfile::Spheroid => (8.0 * p * p + q * q).sqrt() - 1.0,
            SharpProfile::Rhombus => 8.0 * p.abs() + q.abs() - 1.5,
            SharpProfile::Heart => {
                let s = q - p.abs().powf(2.0 / 3.0);
                p * p + s * s - 1.0
            }
            SharpProfile::Astroid => {
                p.abs().powf(2.0 / 3.0) / 0.8 + q.abs().powf(2.0 / 3.0) / 1.5 - 0.8
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SharpProfile::Spheroid => "spheroid",
            SharpProfile::Rhombus => "rhombus",
            SharpProfile::Heart => "heart",
            SharpProfile::Astroid => "astroid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spheroid" => Some(SharpProfile::Spheroid),
            "rhombus" => Some(SharpProfile::Rhombus),
            "heart" => Some(SharpProfile::Heart),
            "astroid" => Some(SharpProfile::Astroid),
            _ => None,
        }
    }

    pub const ALL: [SharpProfile; 4] = [
        SharpProfile::Spheroid,
        SharpProfile::Rhombus,
        SharpProfile::Heart,
        SharpProfile::Astroid,
    ];
}

/// Maps physical coordinates to the `(p, q)` plane of a [`SharpProfile`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProfileMap {
    /// `p = scale (x - center_x)`, `q = scale (y - center_y)`.
    Planar { center: [f64; 2], scale: f64 },
    /// Axisymmetric about the z axis:
    /// `p = scale (sqrt(x^2 + y^2) - radius)`, `q = scale (z - z0)`.
    Cylindrical { radius: f64, z0: f64, scale: f64 },
}

impl ProfileMap {
    #[inline]
    pub fn map(&self, x: &Point) -> (f64, f64) {
        match *self {
            ProfileMap::Planar { center, scale } => {
                (scale * (x[0] - center[0]), scale * (x[1] - center[1]))
            }
            ProfileMap::Cylindrical { radius, z0, scale } => {
                let rho = x[0].hypot(x[1]);
                (scale * (rho - radius), scale * (x[2] - z0))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `|x - center| - radius`
    Sphere { center: Point, radius: f64 },
    Sharp { profile: SharpProfile, map: ProfileMap },
    /// Distance to the segment `start..end` minus `radius`.
    Rod { start: Point, end: Point, radius: f64 },
    /// `normal . x + offset`
    Affine { normal: Point, offset: f64 },
}

impl Shape {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Shape::Sphere { center, radius } => point::dist(x, center) - radius,
            Shape::Sharp { profile, map } => {
                let (p, q) = map.map(x);
                profile.eval(p, q)
            }
            Shape::Rod { start, end, radius } => {
                let axis = point::sub(end, start);
                let len2 = point::dot(&axis, &axis);
                let t = if len2 > 0.0 {
                    (point::dot(&point::sub(x, start), &axis) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                point::dist(x, &point::lerp(start, end, t)) - radius
            }
            Shape::Affine { normal, offset } => point::dot(normal, x) + offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetObject {
    pub shape: Shape,
    /// Dirichlet value imposed on this object's surface.
    pub boundary_value: f64,
}

/// A union of objects: the level set is the minimum over the objects.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSetSpec {
    pub objects: Vec<LevelSetObject>,
}

impl LevelSetSpec {
    pub fn single(shape: Shape, boundary_value: f64) -> Self {
        LevelSetSpec {
            objects: vec![LevelSetObject {
                shape,
                boundary_value,
            }],
        }
    }

    pub fn union(objects: Vec<LevelSetObject>) -> Self {
        assert!(!objects.is_empty(), "a level set needs at least one object");
        LevelSetSpec { objects }
    }

    pub fn boundary_values(&self) -> Vec<f64> {
        self.objects.iter().map(|o| o.boundary_value).collect()
    }

    pub fn boundary_value_at(&self, x: &Point) -> f64 {
        self.objects[self.object_at(x)].boundary_value
    }
}

impl LevelSet for LevelSetSpec {
    fn eval(&self, x: &Point) -> f64 {
        self.objects
            .iter()
            .map(|o| o.shape.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    fn object_at(&self, x: &Point) -> usize {
        let mut best = 0;
        let mut best_f = f64::INFINITY;
        for (i, o) in self.objects.iter().enumerate() {
            let f = o.shape.eval(x);
            if f < best_f {
                best_f = f;
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootSearchConfig {
    /// Bisection stops once the bracket is narrower than `eps_tol` times
    /// the segment length.
    pub eps_tol: f64,
    /// Golden-section iterations spent looking for a sign change.
    pub max_bracket_iters: usize,
}

impl Default for RootSearchConfig {
    fn default() -> Self {
        RootSearchConfig {
            eps_tol: 1e-8,
            max_bracket_iters: 45,
        }
    }
}

impl RootSearchConfig {
    /// Golden-section iterations needed to shrink the search interval to `eps_tol`.
    pub fn min_bracket_iters(eps_tol: f64) -> usize {
        (eps_tol.ln() / INV_GOLDEN.ln()).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tol > 0.0 && self.eps_tol < 1.0) {
            return Err(Error::Config(format!(
                "eps_tol must lie in (0, 1), got {}",
                self.eps_tol
            )));
        }
        let need = Self::min_bracket_iters(self.eps_tol);
        if self.max_bracket_iters < need {
            return Err(Error::Config(format!(
                "max_bracket_iters = {} cannot reach eps_tol = {} (needs {})",
                self.max_bracket_iters, self.eps_tol, need
            )));
        }
        Ok(())
    }
}

/// Final bisection bracket, in segment parameter `t` (0 at `a`, 1 at `b`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootBracket {
    pub lo: f64,
    pub hi: f64,
}

impl RootBracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Locates a root of `lsf` on the segment `a..b`, searching for the one
/// closest to `a`. Returns `None` when no sign change was found.
pub fn locate_root<L: LevelSet + ?Sized>(
    lsf: &L,
    a: &Point,
    b: &Point,
    cfg: &RootSearchConfig,
) -> Option<RootBracket> {
    let fa = lsf.eval(a);
    let at = |t: f64| lsf.eval(&point::lerp(a, b, t));

    if fa * lsf.eval(b) <= 0.0 {
        return Some(bisect(&at, fa, 1.0, cfg.eps_tol));
    }

    // Minimize g(t) = f(t) f(a) until it becomes non-positive.
    let g = |t: f64| at(t) * fa;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut t1 = hi - INV_GOLDEN * (hi - lo);
    let mut t2 = lo + INV_GOLDEN * (hi - lo);
    let mut g1 = g(t1);
    if g1 <= 0.0 {
        return Some(bisect(&at, fa, t1, cfg.eps_tol));
    }
    let mut g2 = g(t2);
    if g2 <= 0.0 {
        return Some(bisect(&at, fa, t2, cfg.eps_tol));
    }

    for _ in 0..cfg.max_bracket_iters {
        if g1 < g2 {
            hi = t2;
            t2 = t1;
            g2 = g1;
            t1 = hi - INV_GOLDEN * (hi - lo);
            g1 = g(t1);
            if g1 <= 0.0 {
                return Some(bisect(&at, fa, t1, cfg.eps_tol));
            }
        } else {
            lo = t1;
            t1 = t2;
            g1 = g2;
            t2 = lo + INV_GOLDEN * (hi - lo);
            g2 = g(t2);
            if g2 <= 0.0 {
                return Some(bisect(&at, fa, t2, cfg.eps_tol));
            }
        }
    }
    None
}

/// Bisection on `[0, t_hi]`, where `f(0) = fa` and `f(t_hi) fa <= 0`.
fn bisect(at: &impl Fn(f64) -> f64, fa: f64, t_hi: f64, eps_tol: f64) -> RootBracket {
    let (mut lo, mut hi) = (0.0, t_hi);
    while hi - lo > eps_tol {
        let mid = 0.5 * (lo + hi);
        if at(mid) * fa > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    RootBracket { lo, hi }
}

/// Relative distance `|x0 - a| / |b - a|` to the root nearest `a`, or 1 when
/// there is no boundary between `a` and `b`.
pub fn find_root<L: LevelSet + ?Sized>(
    lsf: &L,
    a: &Point,
    b: &Point,
    cfg: &RootSearchConfig,
) -> f64 {
    locate_root(lsf, a, b, cfg).map_or(1.0, |r| r.mid())
}

/// Central-difference gradient of `lsf` with step `h` over the first `dim` axes.
pub fn gradient<L: LevelSet + ?Sized>(lsf: &L, x: &Point, h: f64, dim: usize) -> Point {
    let mut g = [0.0; 3];
    for (axis, ga) in g.iter_mut().enumerate().take(dim) {
        let e = point::axis_vec(axis, h);
        *ga = (lsf.eval(&point::add(x, &e)) - lsf.eval(&point::sub(x, &e))) / (2.0 * h);
    }
    g
}

/// `|f(x)| < safety * sqrt(dim) * dx * |grad f(x)|`, with the gradient taken by
/// central differences of step `dx`.
pub fn boundary_candidate_with<L: LevelSet + ?Sized>(
    lsf: &L,
    x: &Point,
    dx: f64,
    dim: usize,
    safety: f64,
) -> bool {
    let grad = gradient(lsf, x, dx, dim);
    candidate_test(lsf.eval(x), point::norm(&grad), dx, dim, safety)
}

pub fn boundary_candidate<L: LevelSet + ?Sized>(lsf: &L, x: &Point, dx: f64, dim: usize) -> bool {
    boundary_candidate_with(lsf, x, dx, dim, DEFAULT_SAFETY_FACTOR)
}

#[inline]
pub(crate) fn candidate_test(f: f64, grad_norm: f64, dx: f64, dim: usize, safety: f64) -> bool {
    let width = safety * (dim as f64).sqrt() * dx;
    f.abs() < width * grad_norm
}

/// Relative boundary distances toward each neighboring cell center, with the
/// object that owns each located boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionalDistances {
    pub d: [f64; 6],
    pub object: [u8; 6],
}

impl Default for DirectionalDistances {
    fn default() -> Self {
        DirectionalDistances {
            d: [1.0; 6],
            object: [0; 6],
        }
    }
}

impl DirectionalDistances {
    pub fn any_boundary(&self, dim: usize) -> bool {
        self.d[..2 * dim].iter().any(|&d| d < 1.0)
    }
}

#[inline]
pub fn direction(axis: usize, positive: bool) -> usize {
    2 * axis + positive as usize
}

#[inline]
pub fn neighbor_center(center: &Point, dir: usize, dx: f64) -> Point {
    let s = if dir % 2 == 0 { -dx } else { dx };
    point::add(center, &point::axis_vec(dir / 2, s))
}

fn clamp_d(d: f64) -> f64 {
    d.clamp(D_MIN, 1.0)
}

/// Runs [`locate_root`] from `center` toward each of the `2 dim` neighboring
/// cell centers. Located distances are clamped to `[D_MIN, 1]`.
pub fn cell_distances<L: LevelSet + ?Sized>(
    lsf: &L,
    center: &Point,
    dx: f64,
    dim: usize,
    cfg: &RootSearchConfig,
) -> DirectionalDistances {
    let mut out = DirectionalDistances::default();
    for dir in 0..2 * dim {
        let b = neighbor_center(center, dir, dx);
        if let Some(root) = locate_root(lsf, center, &b, cfg) {
            let t = root.mid();
            out.d[dir] = clamp_d(t);
            out.object[dir] = lsf.object_at(&point::lerp(center, &b, t)) as u8;
        }
    }
    out
}

/// Boundary assigned to one direction by the thin-object search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThinBoundary {
    pub direction: usize,
    pub d: f64,
    pub object: usize,
}

/// Gradient descent from `center` toward the zero contour, in at most
/// `dx / w_min` steps of length `w_min`. On crossing the boundary the root is
/// located between `center` and the crossing point, its distance normalized
/// by `dx`, and assigned to the neighbor direction closest to the crossing
/// point (ties: lowest axis, negative side first).
pub fn resolve_thin_boundary<L: LevelSet + ?Sized>(
    lsf: &L,
    center: &Point,
    dx: f64,
    dim: usize,
    w_min: f64,
    cfg: &RootSearchConfig,
) -> Option<ThinBoundary> {
    if !(w_min > 0.0) || dx <= w_min {
        return None;
    }
    let fa = lsf.eval(center);
    if fa == 0.0 {
        return None;
    }
    let steps = ((dx / w_min).floor() as usize).max(1);
    let toward_zero = -fa.signum();
    let mut x = *center;

    for _ in 0..steps {
        let g = gradient(lsf, &x, dx, dim);
        let gn = point::norm(&g);
        if gn == 0.0 || !gn.is_finite() {
            return None;
        }
        x = point::add(&x, &point::scale(&g, toward_zero * w_min / gn));
        if fa * lsf.eval(&x) <= 0.0 {
            let root = locate_root(lsf, center, &x, cfg)?;
            let t = root.mid();
            let dist = t * point::dist(&x, center);
            let x0 = point::lerp(center, &x, t);

            let mut best = 0;
            let mut best_d2 = f64::INFINITY;
            for dir in 0..2 * dim {
                let nb = neighbor_center(center, dir, dx);
                let d2 = point::dot(&point::sub(&x, &nb), &point::sub(&x, &nb));
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = dir;
                }
            }
            return Some(ThinBoundary {
                direction: best,
                d: clamp_d(dist / dx),
                object: lsf.object_at(&x0),
            });
        }
    }
    None
}
