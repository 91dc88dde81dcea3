//! Finite-difference and integration-by-parts oracles for `Λf`, shared
//! by the extension tests and the acceptance suite.

use uniform_ext::covering::CoveringFamily;
use uniform_ext::extension::{collar_cuts, sample_points, ExtensionField};
use uniform_ext::fields::{graded, MultiIndex};
use uniform_ext::geometry::{Aabb, Point};
use uniform_ext::quadrature::GaussRule;

pub fn component(ef: &ExtensionField<2>, x: &Point<2>, a: &MultiIndex<2>, order: usize) -> f64 {
    let idx = graded::<2>(order);
    let v = ef.eval_all(x, order).unwrap();
    v[idx.iter().position(|g| g == a).unwrap()]
}

/// Central differences of `D^{α − e_a}` against `D^α` at `pts`, relative
/// to the largest `|D^α|` seen on the sample, worst over `1 ≤ |α| ≤ k`.
pub fn finite_difference_error(ef: &ExtensionField<2>, pts: &[Point<2>]) -> f64 {
    let mut worst: f64 = 0.0;
    for alpha in graded::<2>(ef.k).into_iter().filter(|a| a[0] + a[1] >= 1) {
        let a = if alpha[0] > 0 { 0 } else { 1 };
        let mut lower = alpha;
        lower[a] -= 1;
        let order = alpha[0] + alpha[1];
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for x in pts {
            let l = ef.fam.w2.get(ef.fam.w2.locate(x).unwrap()).side();
            let h = 1e-4 * l;
            let mut xp = *x;
            let mut xm = *x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (component(ef, &xp, &lower, order - 1) - component(ef, &xm, &lower, order - 1)) / (2.0 * h);
            let exact = component(ef, x, &alpha, order);
            scale = scale.max(exact.abs());
            err = err.max((fd - exact).abs());
        }
        worst = worst.max(err / scale);
    }
    worst
}

pub fn w3_points(fam: &CoveringFamily<2>, n: usize, seed: u64) -> Vec<Point<2>> {
    let cubes: Vec<_> = fam.w3.iter().map(|&i| fam.w2.get(i)).collect();
    sample_points(&cubes, n, seed)
}

/// `(1 − s²)^4` on each axis of `b`, with `s ∈ [−1, 1]` across the box.
pub struct Bump {
    pub b: Aabb<2>,
}

impl Bump {
    pub fn eval(&self, x: &Point<2>, d: [usize; 2]) -> f64 {
        (0..2)
            .map(|a| {
                let half = 0.5 * self.b.extent(a);
                let s = (x[a] - self.b.center()[a]) / half;
                if s.abs() >= 1.0 {
                    return 0.0;
                }
                match d[a] {
                    0 => (1.0 - s * s).powi(4),
                    _ => -8.0 * s * (1.0 - s * s).powi(3) / half,
                }
            })
            .product()
    }
}

/// Coordinates where `Λf` changes formula inside `b`: cube faces and collar cuts.
pub fn breakpoints(fam: &CoveringFamily<2>, b: &Aabb<2>) -> [Vec<f64>; 2] {
    let mut out: [Vec<f64>; 2] = [vec![b.lo[0], b.hi[0]], vec![b.lo[1], b.hi[1]]];
    for i in fam.w2.meeting_box(b) {
        let q = fam.w2.get(i);
        let cuts = collar_cuts(fam, &q);
        for a in 0..2 {
            out[a].push(q.bbox().lo[a]);
            out[a].push(q.bbox().hi[a]);
            out[a].extend(&cuts[a]);
        }
    }
    for (a, v) in out.iter_mut().enumerate() {
        v.retain(|&t| t >= b.lo[a] && t <= b.hi[a]);
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    out
}

/// Exterior boxes around the unit square, straddling many cube faces and
/// collar transitions, from next to the symmetrized layer out to where
/// `Λf` fades.
pub fn square_exterior_boxes() -> [Aabb<2>; 5] {
    [
        Aabb::new([1.05, 0.3], [1.3, 0.55]),
        Aabb::new([1.1, 1.1], [1.45, 1.4]),
        Aabb::new([1.3, -0.2], [1.9, 0.6]),
        Aabb::new([-0.6, 0.2], [-0.08, 0.7]),
        Aabb::new([0.2, -1.3], [0.9, -0.15]),
    ]
}

/// `(∫ Λf ∂_a φ, −∫ ∂_a Λf φ, ∫ |Λf ∂_a φ|)` for the bump on `b`,
/// integrated piecewise between breakpoints with a 10-point rule.
pub fn integration_by_parts(ef: &ExtensionField<2>, b: &Aabb<2>, a: usize) -> (f64, f64, f64) {
    let rule = GaussRule::new(10);
    let phi = Bump { b: *b };
    let cuts = breakpoints(&ef.fam, b);
    let mut e = [0usize; 2];
    e[a] = 1;
    let (mut lhs, mut rhs, mut mag) = (0.0, 0.0, 0.0);
    for wx in cuts[0].windows(2) {
        for wy in cuts[1].windows(2) {
            let cell = Aabb::new([wx[0], wy[0]], [wx[1], wy[1]]);
            if cell.volume() == 0.0 {
                continue;
            }
            for (x, w) in rule.tensor(&cell) {
                let u = component(ef, &x, &[0, 0], 0);
                let du = component(ef, &x, &e, 1);
                lhs += w * u * phi.eval(&x, e);
                rhs -= w * du * phi.eval(&x, [0, 0]);
                mag += w * (u * phi.eval(&x, e)).abs();
            }
        }
    }
    (lhs, rhs, mag)
}
