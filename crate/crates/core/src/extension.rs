//! Smooth partition of unity on the exterior cover and the extension
//! operator `Λ_k f = f χ_Ω + Σ_{Q ∈ W3} ψ_Q P^k_{Q*} f`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::CoveringFamily;
use crate::error::{Error, Result};
use crate::fields::{
    factorial, graded, leq, mi_binomial, order, sub, FieldFunction, MultiIndex, SharedField,
};
use crate::geometry::{DyadicCube, Point};
use crate::polynomials::{project, PolyCoeffs, DEFAULT_NODES};

/// Support of each bump is `(1 + 2·COLLAR)Q = (11/10)Q`.
pub const COLLAR: f64 = 0.05;
/// Points this close to the boundary are rejected.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// `S(t) = ∫_0^t s^r(1−s)^r ds / B(r+1, r+1)`: 0 on `t ≤ 0`, 1 on `t ≥ 1`,
/// with `r` derivatives vanishing at both ends.
#[derive(Clone, Debug, PartialEq)]
pub struct Smoothstep {
    pub order: usize,
    /// Monomial coefficients of the polynomial piece, in `t`.
    coeffs: Vec<f64>,
}

impl Smoothstep {
    pub fn new(order: usize) -> Self {
        let r = order;
        let mut coeffs = vec![0.0; 2 * r + 2];
        let mut binom = 1.0;
        for i in 0..=r {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[r + i + 1] = sign * binom / (r + i + 1) as f64;
            binom = binom * (r - i) as f64 / (i + 1) as f64;
        }
        // 1 / B(r+1, r+1) = (2r+1)! / (r!)²
        let inv_beta = factorial(2 * r + 1) / (factorial(r) * factorial(r));
        for c in &mut coeffs {
            *c *= inv_beta;
        }
        Self { order, coeffs }
    }

    /// `S^{(n)}(t)`.
    pub fn deriv(&self, t: f64, n: usize) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        if t > 0.5 {
            // S(t) = 1 − S(1 − t) keeps the alternating sum small
            let v = self.deriv(1.0 - t, n);
            return match n {
                0 => 1.0 - v,
                _ if n % 2 == 1 => v,
                _ => -v,
            };
        }
        let mut acc = 0.0;
        for e in (n..self.coeffs.len()).rev() {
            let fall: f64 = ((e - n + 1)..=e).map(|v| v as f64).product();
            acc = acc * t + self.coeffs[e] * fall;
        }
        acc
    }
}

/// Bumps `φ_Q` on every exterior cube, normalised by `Φ = Σ_P φ_P`.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    pub smooth_order: usize,
    step: Smoothstep,
}

impl PartitionOfUnity {
    /// 1-D factor of `φ_Q` on `[lo, lo + side]` and its first `n_max` derivatives.
    fn axis_derivs(&self, x: f64, lo: f64, side: f64, n_max: usize, out: &mut [f64]) {
        let c = COLLAR * side;
        let hi = lo + side;
        if x <= lo - c || x >= hi + c {
            out[..=n_max].fill(0.0);
        } else if x < lo {
            let t = (x - (lo - c)) / c;
            for (n, o) in out.iter_mut().enumerate().take(n_max + 1) {
                *o = self.step.deriv(t, n) / c.powi(n as i32);
            }
        } else if x > hi {
            let t = ((hi + c) - x) / c;
            for (n, o) in out.iter_mut().enumerate().take(n_max + 1) {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                *o = sign * self.step.deriv(t, n) / c.powi(n as i32);
            }
        } else {
            out[0] = 1.0;
            out[1..=n_max].fill(0.0);
        }
    }

    /// `D^γ φ_Q(x)` for every `γ` in `idx`.
    pub fn phi_derivs<const D: usize>(
        &self,
        q: &DyadicCube<D>,
        x: &Point<D>,
        idx: &[MultiIndex<D>],
        k: usize,
    ) -> Vec<f64> {
        let lo = q.lower();
        let side = q.side();
        let mut axes = vec![[0.0f64; 16]; D];
        for a in 0..D {
            self.axis_derivs(x[a], lo[a], side, k, &mut axes[a]);
        }
        idx.iter()
            .map(|g| (0..D).map(|a| axes[a][g[a]]).product())
            .collect()
    }

    /// `(w2 id, D^γ ψ_Q(x) for γ ∈ graded(k))` over the bumps active at `x`;
    /// empty where no bump is active.
    pub fn psi_derivs<const D: usize>(
        &self,
        fam: &CoveringFamily<D>,
        x: &Point<D>,
        k: usize,
    ) -> Vec<(usize, Vec<f64>)> {
        let idx = graded::<D>(k);
        let active = fam.w2.containing_dilated(x, 1.0 + 2.0 * COLLAR);
        let phis: Vec<(usize, Vec<f64>)> = active
            .into_iter()
            .map(|i| (i, self.phi_derivs(&fam.w2.get(i), x, &idx, k)))
            .filter(|(_, d)| d[0] > 0.0)
            .collect();
        if phis.is_empty() {
            return phis;
        }
        let n = idx.len();
        let big_phi: Vec<f64> = (0..n)
            .map(|c| phis.iter().map(|(_, d)| d[c]).sum())
            .collect();
        // u = 1/Φ from D^γ(Φ u) = 0 for γ ≠ 0
        let mut u = vec![0.0; n];
        u[0] = 1.0 / big_phi[0];
        for c in 1..n {
            let g = idx[c];
            let mut acc = 0.0;
            for (b, beta) in idx.iter().enumerate().take(c) {
                if leq(beta, &g) {
                    let pos = position(&idx, &sub(&g, beta));
                    acc += mi_binomial(&g, beta) * big_phi[pos] * u[b];
                }
            }
            u[c] = -acc * u[0];
        }
        phis.into_iter()
            .map(|(i, d)| (i, leibniz(&idx, &d, &u)))
            .collect()
    }
}

fn position<const D: usize>(idx: &[MultiIndex<D>], g: &MultiIndex<D>) -> usize {
    idx.iter()
        .position(|h| h == g)
        .expect("multi-index outside the graded list")
}

/// `D^γ(a·b)` for all `γ` in `idx`, given the derivatives of `a` and `b`.
fn leibniz<const D: usize>(idx: &[MultiIndex<D>], a: &[f64], b: &[f64]) -> Vec<f64> {
    idx.iter()
        .map(|g| {
            idx.iter()
                .enumerate()
                .filter(|(_, beta)| leq(beta, g))
                .map(|(p, beta)| mi_binomial(g, beta) * a[position(idx, &sub(g, beta))] * b[p])
                .sum()
        })
        .collect()
}

/// Requires `smooth_order ≥ 1`; derivatives are continuous up to that order.
pub fn build_pou(smooth_order: usize) -> Result<PartitionOfUnity> {
    if smooth_order == 0 || smooth_order > 12 {
        return Err(Error::param("smooth_order", "must lie in 1..=12"));
    }
    Ok(PartitionOfUnity {
        smooth_order,
        step: Smoothstep::new(smooth_order),
    })
}

/// Coordinates inside `cube` where some bump's collar starts or ends,
/// per axis. Between consecutive cuts every `ψ` is a single polynomial
/// piece of the smoothstep.
pub fn collar_cuts<const D: usize>(fam: &CoveringFamily<D>, cube: &DyadicCube<D>) -> [Vec<f64>; D] {
    let b = cube.bbox();
    let mut cuts: [Vec<f64>; D] = std::array::from_fn(|_| Vec::new());
    // neighbours of a Whitney cube are at most a few generations apart
    for j in fam.w2.meeting_box(&b.dilate(3.0)) {
        let n = fam.w2.get(j);
        let nb = n.bbox();
        if !nb.dilate(1.0 + 2.0 * COLLAR).intersects(&b) {
            continue;
        }
        let c = COLLAR * n.side();
        for (a, axis) in cuts.iter_mut().enumerate() {
            for t in [nb.lo[a] - c, nb.lo[a], nb.hi[a], nb.hi[a] + c] {
                if t > b.lo[a] && t < b.hi[a] {
                    axis.push(t);
                }
            }
        }
    }
    for axis in &mut cuts {
        axis.sort_by(f64::total_cmp);
        axis.dedup();
    }
    cuts
}

/// `Λ_k f` with cached projections on the symmetrized cubes.
#[derive(Clone)]
pub struct ExtensionField<const D: usize> {
    pub f: SharedField<D>,
    pub fam: Arc<CoveringFamily<D>>,
    pub pou: PartitionOfUnity,
    pub k: usize,
    /// `w2` id → `P^k_{Q*} f`, on `w3 ∪ w3p` (the latter through the convenient neighbour).
    polys: Vec<Option<Arc<PolyCoeffs<D>>>>,
}

impl<const D: usize> std::fmt::Debug for ExtensionField<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExtensionField")
            .field("f", &self.f.label())
            .field("k", &self.k)
            .field("fam", &self.fam)
            .finish()
    }
}

pub fn extend<const D: usize>(
    f: SharedField<D>,
    fam: Arc<CoveringFamily<D>>,
    pou: PartitionOfUnity,
    k: usize,
) -> Result<ExtensionField<D>> {
    extend_with_nodes(f, fam, pou, k, DEFAULT_NODES)
}

pub fn extend_with_nodes<const D: usize>(
    f: SharedField<D>,
    fam: Arc<CoveringFamily<D>>,
    pou: PartitionOfUnity,
    k: usize,
    nodes: usize,
) -> Result<ExtensionField<D>> {
    if k > f.k_max() {
        return Err(Error::OrderTooHigh {
            requested: k,
            available: f.k_max(),
        });
    }
    if pou.smooth_order < k + 1 {
        return Err(Error::param(
            "smooth_order",
            format!("must be at least k + 1 = {}", k + 1),
        ));
    }
    let targets: Vec<usize> = fam
        .sym
        .iter()
        .flatten()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let projected: Vec<(usize, Arc<PolyCoeffs<D>>)> = targets
        .par_iter()
        .map(|&s| project(&fam.w1.get(s), f.as_ref(), k, nodes).map(|p| (s, Arc::new(p))))
        .collect::<Result<_>>()?;
    let by_target: BTreeMap<usize, Arc<PolyCoeffs<D>>> = projected.into_iter().collect();
    let polys = fam
        .sym
        .iter()
        .map(|s| s.map(|s| by_target[&s].clone()))
        .collect();
    Ok(ExtensionField {
        f,
        fam,
        pou,
        k,
        polys,
    })
}

impl<const D: usize> ExtensionField<D> {
    /// The polynomial attached to a `w3 ∪ w3p` cube.
    pub fn polynomial(&self, w2_id: usize) -> Option<&PolyCoeffs<D>> {
        self.polys.get(w2_id).and_then(|p| p.as_deref())
    }

    /// `D^α Λ_k f(x)` for all `|α| ≤ order`, aligned with `graded(order)`.
    pub fn eval_all(&self, x: &Point<D>, order_req: usize) -> Result<Vec<f64>> {
        if order_req > self.k {
            return Err(Error::OrderTooHigh {
                requested: order_req,
                available: self.k,
            });
        }
        let dom = &self.fam.domain;
        if dom.boundary_distance(x) <= BOUNDARY_TOLERANCE {
            return Err(Error::BoundaryEvaluation(x.to_vec()));
        }
        if dom.contains(x) {
            Ok(self.eval_interior(x, order_req))
        } else {
            Ok(self.eval_exterior(x, order_req))
        }
    }

    /// `D^α f(x)`; the caller guarantees `x ∈ Ω`.
    pub fn eval_interior(&self, x: &Point<D>, order_req: usize) -> Vec<f64> {
        graded::<D>(order_req)
            .iter()
            .map(|a| self.f.eval(x, a))
            .collect()
    }

    /// Leibniz sum over the active `W3` bumps; the caller guarantees `x ∉ Ω̄`.
    ///
    /// Written relative to one reference polynomial `P_r`:
    /// `Σ_{W3} D^γψ_Q P_Q = (Σ_{W3} D^γψ_Q) P_r + Σ_{W3} D^γψ_Q (P_Q − P_r)`,
    /// with `Σ_{W3} D^γψ_Q` taken from the complement (`δ_{γ0} − Σ_{W2∖W3}`),
    /// so the large collar derivatives cancel exactly where all bumps are in `W3`.
    pub fn eval_exterior(&self, x: &Point<D>, order_req: usize) -> Vec<f64> {
        let idx = graded::<D>(order_req);
        let psi = self.pou.psi_derivs(&self.fam, x, order_req);
        let (inside, outside): (Vec<_>, Vec<_>) =
            psi.into_iter().partition(|(q, _)| self.fam.in_w3[*q]);
        let Some(reference) = inside
            .iter()
            .max_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(b.0.cmp(&a.0)))
            .map(|(q, _)| *q)
        else {
            return vec![0.0; idx.len()];
        };
        let values = |q: usize| -> Vec<f64> {
            let p = self.polys[q]
                .as_ref()
                .expect("W3 cube without a projection");
            idx.iter().map(|b| p.eval(x, b)).collect()
        };
        let pr = values(reference);
        let mut weight: Vec<f64> = (0..idx.len())
            .map(|c| -outside.iter().map(|(_, d)| d[c]).sum::<f64>())
            .collect();
        weight[0] += 1.0;
        let mut out = leibniz(&idx, &weight, &pr);
        for (q, d) in &inside {
            if *q == reference {
                continue;
            }
            let diff: Vec<f64> = values(*q).iter().zip(&pr).map(|(a, b)| a - b).collect();
            for (o, v) in out.iter_mut().zip(leibniz(&idx, d, &diff)) {
                *o += v;
            }
        }
        out
    }

    /// `Σ_{Q ∈ W3} ψ_Q(x)`.
    pub fn w3_weight(&self, x: &Point<D>) -> f64 {
        self.pou
            .psi_derivs(&self.fam, x, 0)
            .into_iter()
            .filter(|(q, _)| self.fam.in_w3[*q])
            .map(|(_, d)| d[0])
            .sum()
    }
}

impl<const D: usize> FieldFunction<D> for ExtensionField<D> {
    /// Boundary points evaluate to NaN.
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        eval_extension(self, x, alpha).unwrap_or(f64::NAN)
    }
    fn k_max(&self) -> usize {
        self.k
    }
    fn label(&self) -> String {
        format!("Lambda_{}[{}]", self.k, self.f.label())
    }
}

pub fn eval_extension<const D: usize>(
    ef: &ExtensionField<D>,
    x: &Point<D>,
    alpha: &MultiIndex<D>,
) -> Result<f64> {
    let o = order(alpha);
    let v = ef.eval_all(x, o)?;
    Ok(v[position(&graded::<D>(o), alpha)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PouReport {
    pub samples: usize,
    /// `max |Σ_Q ψ_Q − 1|`.
    pub max_sum_error: f64,
    /// `max |Σ_Q D^γ ψ_Q|` over `1 ≤ |γ| ≤ order`.
    pub max_derivative_sum: f64,
    pub max_support_violation: f64,
    /// `C_j = max ℓ(Q)^j |∇^j ψ_Q|`, `j = 0..=order`.
    pub derivative_constants: Vec<f64>,
}

/// Uniform samples from randomly chosen cubes of `set`.
pub fn sample_points<const D: usize>(
    cubes: &[DyadicCube<D>],
    n: usize,
    seed: u64,
) -> Vec<Point<D>> {
    if cubes.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let q = cubes[rng.gen_range(0..cubes.len())];
            let lo = q.lower();
            std::array::from_fn(|a| lo[a] + rng.gen::<f64>() * q.side())
        })
        .collect()
}

/// Partition identities and derivative bounds at `samples` points of `W2`.
pub fn check_pou<const D: usize>(
    fam: &CoveringFamily<D>,
    pou: &PartitionOfUnity,
    order_req: usize,
    samples: usize,
    seed: u64,
) -> PouReport {
    let idx = graded::<D>(order_req);
    let pts = sample_points(fam.w2.cubes(), samples, seed);
    let mut rep = PouReport {
        samples: pts.len(),
        max_sum_error: 0.0,
        max_derivative_sum: 0.0,
        max_support_violation: 0.0,
        derivative_constants: vec![0.0; order_req + 1],
    };
    for x in &pts {
        let psi = pou.psi_derivs(fam, x, order_req);
        let mut sums = vec![0.0; idx.len()];
        for (q, d) in &psi {
            let cube = fam.w2.get(*q);
            if !cube.bbox().dilate(1.0 + 2.0 * COLLAR).contains_point(x) {
                rep.max_support_violation = rep.max_support_violation.max(d[0].abs());
            }
            let mut norms2 = vec![0.0; order_req + 1];
            for (c, g) in idx.iter().enumerate() {
                sums[c] += d[c];
                norms2[order(g)] += d[c] * d[c];
            }
            for (j, n2) in norms2.iter().enumerate() {
                let cj = n2.sqrt() * cube.side().powi(j as i32);
                rep.derivative_constants[j] = rep.derivative_constants[j].max(cj);
            }
        }
        rep.max_sum_error = rep.max_sum_error.max((sums[0] - 1.0).abs());
        for s in &sums[1..] {
            rep.max_derivative_sum = rep.max_derivative_sum.max(s.abs());
        }
    }
    rep
}

/// Regular `nx × ny` grid over `[lo, hi]` written as CSV `x,y,value`;
/// boundary points are written as `nan`.
pub fn export_grid<W: Write>(
    ef: &ExtensionField<2>,
    lo: [f64; 2],
    hi: [f64; 2],
    n: [usize; 2],
    alpha: &MultiIndex<2>,
    out: W,
) -> Result<()> {
    if n[0] < 2 || n[1] < 2 {
        return Err(Error::param("grid", "needs at least 2 points per axis"));
    }
    let rows: Vec<(f64, f64, f64)> = (0..n[1])
        .into_par_iter()
        .flat_map_iter(|j| {
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / (n[1] - 1) as f64;
            (0..n[0]).map(move |i| {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (n[0] - 1) as f64;
                (x, y, eval_extension(ef, &[x, y], alpha).unwrap_or(f64::NAN))
            })
        })
        .collect();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for (x, y, v) in rows {
        w.write_record([
            format!("{x:.16e}"),
            format!("{y:.16e}"),
            format!("{v:.16e}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{build_families, WhitneyParams};
    use crate::domain::BoxDomain;
    use crate::fields::{Constant, Polynomial, TrigProduct};

    fn square_family(depth: i32) -> Arc<CoveringFamily<2>> {
        Arc::new(
            build_families(
                Arc::new(BoxDomain::<2>::unit()),
                &WhitneyParams::with_depth(depth),
            )
            .unwrap(),
        )
    }

    #[test]
    fn smoothstep_endpoints() {
        for r in 1..6 {
            let s = Smoothstep::new(r);
            assert!(
                (s.deriv(0.5, 0) - 0.5).abs() < 1e-14,
                "r={r} {}",
                s.deriv(0.5, 0)
            );
            assert!(s.deriv(1e-9, 0) < 1e-8);
            assert!((s.deriv(1.0 - 1e-9, 0) - 1.0).abs() < 1e-8);
            for n in 1..=r {
                assert!(s.deriv(1e-9, n).abs() < 1e-3, "r={r} n={n}");
                assert!(s.deriv(1.0 - 1e-9, n).abs() < 1e-3, "r={r} n={n}");
            }
            let h = 1e-6;
            for t in [0.2, 0.5, 0.77] {
                for n in 0..r {
                    let fd = (s.deriv(t + h, n) - s.deriv(t - h, n)) / (2.0 * h);
                    assert!((fd - s.deriv(t, n + 1)).abs() < 1e-5 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn partition_identities() {
        let fam = square_family(5);
        let pou = build_pou(3).unwrap();
        let rep = check_pou(&fam, &pou, 2, 400, 3);
        assert!(rep.max_sum_error < 1e-12, "{rep:?}");
        assert!(
            rep.max_derivative_sum < 1e-10 * 4f64.powi(5) * 1e2,
            "{rep:?}"
        );
        assert_eq!(rep.max_support_violation, 0.0);
        assert!(rep.derivative_constants.iter().all(|c| c.is_finite()));
        assert!(rep.derivative_constants[0] <= 1.0 + 1e-12);
    }

    #[test]
    fn single_bump_away_from_collars() {
        let fam = square_family(4);
        let pou = build_pou(2).unwrap();
        let q = fam.w2.get(fam.w3[0]);
        let c = q.center();
        let psi = pou.psi_derivs(&fam, &c, 1);
        let on: Vec<_> = psi.iter().filter(|(_, d)| d[0] > 0.0).collect();
        assert_eq!(on.len(), 1);
        assert_eq!(fam.w2.get(on[0].0), q);
        assert_eq!(on[0].1[0], 1.0);
    }

    #[test]
    fn restriction_and_far_field() {
        let fam = square_family(5);
        let f: SharedField<2> = Arc::new(TrigProduct {
            freq: [2.0, 3.0],
            phase: [0.3, 1.2],
        });
        let ef = extend(f.clone(), fam.clone(), build_pou(2).unwrap(), 1).unwrap();
        for x in [[0.3, 0.4], [0.01, 0.99]] {
            for a in graded::<2>(1) {
                assert_eq!(eval_extension(&ef, &x, &a).unwrap(), f.eval(&x, &a));
            }
        }
        assert!(matches!(
            eval_extension(&ef, &[0.0, 0.5], &[0, 0]),
            Err(Error::BoundaryEvaluation(_))
        ));
        // well outside every W3 collar
        let far = [fam.computation_box.lo[0] + 1e-3, 0.5];
        assert_eq!(eval_extension(&ef, &far, &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn reproduces_constants_and_polynomials_on_w4() {
        let fam = square_family(5);
        assert!(!fam.w4.is_empty());
        let one = extend(
            Arc::new(Constant { value: 1.0 }),
            fam.clone(),
            build_pou(1).unwrap(),
            0,
        )
        .unwrap();
        let poly: SharedField<2> = Arc::new(Polynomial {
            terms: vec![([1, 1], 2.0), ([0, 2], -1.0), ([1, 0], 0.5), ([0, 0], 0.25)],
        });
        let ef = extend(poly.clone(), fam.clone(), build_pou(3).unwrap(), 2).unwrap();
        let cubes: Vec<_> = fam.w4.iter().map(|&i| fam.w2.get(i)).collect();
        for x in sample_points(&cubes, 200, 11) {
            assert!((eval_extension(&one, &x, &[0, 0]).unwrap() - 1.0).abs() < 1e-12);
            for a in graded::<2>(2) {
                let v = eval_extension(&ef, &x, &a).unwrap();
                // one ulp of P, amplified by the collar derivatives of ψ, is ~ℓ^{-|α|}·1e-16
                let l = fam.w2.get(fam.w2.locate(&x).unwrap()).side();
                let tol = 1e-10 * l.powi(-(order(&a) as i32));
                assert!((v - poly.eval(&x, &a)).abs() < tol, "{x:?} {a:?}");
            }
        }
        let one1 = extend(
            Arc::new(Constant { value: 1.0 }),
            fam.clone(),
            build_pou(2).unwrap(),
            1,
        )
        .unwrap();
        for x in sample_points(&cubes, 50, 12) {
            assert!(eval_extension(&one1, &x, &[1, 0]).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn grid_export_shape() {
        let fam = square_family(4);
        let ef = extend(
            Arc::new(Constant { value: 1.0 }),
            fam,
            build_pou(1).unwrap(),
            0,
        )
        .unwrap();
        let mut buf = Vec::new();
        export_grid(&ef, [-0.5, -0.5], [1.5, 1.5], [5, 4], &[0, 0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("-5.0000000000000000e-1,"));
    }
}
