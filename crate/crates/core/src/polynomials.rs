//! Moment-matched polynomial projections `P^k_Q f` and checks of their
//! approximation properties.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::ChainBuilder;
use crate::covering::{sample_pairs, CoveringFamily};
use crate::error::{Error, Result};
use crate::fields::{factorial, graded, leq, mi_factorial, order, sub, FieldFunction, MultiIndex};
use crate::geometry::{long_distance, DyadicCube, Point};
use crate::quadrature::{gauss_rule, pairwise_sum};

pub const DEFAULT_NODES: usize = 8;

/// Taylor coefficients at the cube centre: `P(y) = Σ m_γ (y − x_Q)^γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyCoeffs<const D: usize> {
    pub cube: DyadicCube<D>,
    pub center: Point<D>,
    pub degree: usize,
    /// All `|γ| ≤ degree`, by increasing order.
    pub indices: Vec<MultiIndex<D>>,
    pub coeffs: Vec<f64>,
}

impl<const D: usize> PolyCoeffs<D> {
    pub fn zero(cube: DyadicCube<D>, degree: usize) -> Self {
        let indices = graded::<D>(degree);
        let n = indices.len();
        Self {
            cube,
            center: cube.center(),
            degree,
            indices,
            coeffs: vec![0.0; n],
        }
    }

    pub fn coeff(&self, g: &MultiIndex<D>) -> f64 {
        self.indices
            .iter()
            .position(|i| i == g)
            .map_or(0.0, |p| self.coeffs[p])
    }

    /// `D^β P(x)`; zero once `|β|` exceeds the degree.
    pub fn eval(&self, x: &Point<D>, beta: &MultiIndex<D>) -> f64 {
        if order(beta) > self.degree {
            return 0.0;
        }
        let k = self.degree;
        let mut pw = vec![1.0f64; D * (k + 1)];
        for i in 0..D {
            let t = x[i] - self.center[i];
            for e in 1..=k {
                pw[i * (k + 1) + e] = pw[i * (k + 1) + e - 1] * t;
            }
        }
        let mut acc = 0.0;
        for (g, &m) in self.indices.iter().zip(&self.coeffs) {
            if m == 0.0 || !leq(beta, g) {
                continue;
            }
            let mut v = m;
            for i in 0..D {
                let e = g[i] - beta[i];
                v *= factorial(g[i]) / factorial(e) * pw[i * (k + 1) + e];
            }
            acc += v;
        }
        acc
    }

    /// Coefficients of `D^β P`, a polynomial of degree `k − |β|` at the same centre.
    pub fn derivative(&self, beta: &MultiIndex<D>) -> PolyCoeffs<D> {
        let deg = self.degree.saturating_sub(order(beta));
        let mut out = PolyCoeffs::zero(self.cube, deg);
        if order(beta) > self.degree {
            return out;
        }
        for (p, g) in out.indices.clone().iter().enumerate() {
            let full: MultiIndex<D> = std::array::from_fn(|i| g[i] + beta[i]);
            let scale: f64 = (0..D)
                .map(|i| factorial(full[i]) / factorial(g[i]))
                .product();
            out.coeffs[p] = scale * self.coeff(&full);
        }
        out
    }

    /// `self − other`; both must share the cube.
    pub fn minus(&self, other: &PolyCoeffs<D>) -> PolyCoeffs<D> {
        assert_eq!(
            self.cube, other.cube,
            "polynomials centred on different cubes"
        );
        let deg = self.degree.max(other.degree);
        let mut out = PolyCoeffs::zero(self.cube, deg);
        for (p, g) in out.indices.clone().iter().enumerate() {
            out.coeffs[p] = self.coeff(g) - other.coeff(g);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &PolyCoeffs<D>) -> f64 {
        self.minus(other)
            .coeffs
            .iter()
            .fold(0.0, |a, c| a.max(c.abs()))
    }

    /// `{"cube": …, "k": k, "m": [[γ, value], …]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let m: Vec<serde_json::Value> = self
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(g, c)| serde_json::json!([g.to_vec(), c]))
            .collect();
        serde_json::json!({ "cube": self.cube, "k": self.degree, "m": m })
    }
}

impl<const D: usize> FieldFunction<D> for PolyCoeffs<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        PolyCoeffs::eval(self, x, alpha)
    }
    fn k_max(&self) -> usize {
        crate::fields::ANALYTIC_ORDER
    }
    fn label(&self) -> String {
        format!("P^{}_{}", self.degree, self.cube)
    }
}

/// `avg_Q (y − x_Q)^δ` in closed form.
fn centered_moment<const D: usize>(delta: &MultiIndex<D>, side: f64) -> f64 {
    let mut v = 1.0;
    for &e in delta {
        if e % 2 == 1 {
            return 0.0;
        }
        v *= (0.5 * side).powi(e as i32) / (e as f64 + 1.0);
    }
    v
}

/// `avg_Q D^β f` for every `|β| ≤ k`, aligned with `graded(k)`.
pub fn derivative_averages<const D: usize>(
    q: &DyadicCube<D>,
    f: &dyn FieldFunction<D>,
    k: usize,
    nodes: usize,
) -> Vec<f64> {
    let idx = graded::<D>(k);
    let pts = gauss_rule(nodes).tensor(&q.bbox());
    let vol = q.volume();
    idx.iter()
        .map(|b| {
            let terms: Vec<f64> = pts.iter().map(|(x, w)| w * f.eval(x, b)).collect();
            pairwise_sum(&terms) / vol
        })
        .collect()
}

/// Solves the moment system from the top order down, given the averages.
pub fn solve_moments<const D: usize>(
    q: &DyadicCube<D>,
    k: usize,
    averages: &[f64],
) -> PolyCoeffs<D> {
    let mut out = PolyCoeffs::zero(*q, k);
    let l = q.side();
    let n = out.indices.len();
    debug_assert_eq!(averages.len(), n);
    for p in (0..n).rev() {
        let beta = out.indices[p];
        let mut rhs = averages[p];
        for r in p + 1..n {
            let g = out.indices[r];
            if g == beta || !leq(&beta, &g) {
                continue;
            }
            let delta = sub(&g, &beta);
            let fall: f64 = (0..D)
                .map(|i| factorial(g[i]) / factorial(delta[i]))
                .product();
            rhs -= out.coeffs[r] * fall * centered_moment(&delta, l);
        }
        out.coeffs[p] = rhs / mi_factorial(&beta);
    }
    out
}

/// `P^k_Q f` from `avg_Q D^β P = avg_Q D^β f` for all `|β| ≤ k`.
pub fn project<const D: usize>(
    q: &DyadicCube<D>,
    f: &dyn FieldFunction<D>,
    k: usize,
    nodes: usize,
) -> Result<PolyCoeffs<D>> {
    if k > f.k_max() {
        return Err(Error::OrderTooHigh {
            requested: k,
            available: f.k_max(),
        });
    }
    if nodes < 1 {
        return Err(Error::param("nodes_per_axis", "must be positive"));
    }
    Ok(solve_moments(q, k, &derivative_averages(q, f, k, nodes)))
}

pub fn poly_eval<const D: usize>(p: &PolyCoeffs<D>, x: &Point<D>, deriv: &MultiIndex<D>) -> f64 {
    p.eval(x, deriv)
}

/// `P^k_Q f − P^{k−1}_Q f`.
pub fn ring_diff<const D: usize>(
    q: &DyadicCube<D>,
    f: &dyn FieldFunction<D>,
    k: usize,
    nodes: usize,
) -> Result<PolyCoeffs<D>> {
    if k == 0 {
        return Err(Error::param("k", "the ring difference needs k ≥ 1"));
    }
    Ok(project(q, f, k, nodes)?.minus(&project(q, f, k - 1, nodes)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyLemmaReport {
    pub k: usize,
    pub p: f64,
    pub cubes: usize,
    /// Realized constants: max of LHS / RHS-sum.
    pub p1: f64,
    pub p1_bis: f64,
    pub p2: f64,
    pub p3: f64,
    pub pairs: usize,
    pub skipped_degenerate: usize,
}

/// Per-cube quantities, from one pass over the quadrature nodes.
struct CubeLocal<const D: usize> {
    poly: PolyCoeffs<D>,
    /// `‖∇^j f‖_{L^1(Q)}`, `j = 0..=k`.
    grad_l1: Vec<f64>,
    /// `‖∇^j f‖_{L^p(Q)}`.
    grad_lp: Vec<f64>,
    poly_lp: f64,
    resid_lp: f64,
    /// `‖∇^k f − (∇^k f)_Q‖_{L^p(Q)}`.
    osc_lp: f64,
}

fn lp_root(sum: f64, p: f64) -> f64 {
    sum.max(0.0).powf(1.0 / p)
}

fn cube_local<const D: usize>(
    q: &DyadicCube<D>,
    f: &dyn FieldFunction<D>,
    k: usize,
    p: f64,
    nodes: usize,
) -> CubeLocal<D> {
    let idx = graded::<D>(k);
    let pts = gauss_rule(nodes).tensor(&q.bbox());
    let vals: Vec<Vec<f64>> = pts
        .iter()
        .map(|(x, _)| idx.iter().map(|b| f.eval(x, b)).collect())
        .collect();
    let vol = q.volume();
    let avgs: Vec<f64> = (0..idx.len())
        .map(|c| {
            pairwise_sum(
                &pts.iter()
                    .zip(&vals)
                    .map(|((_, w), v)| w * v[c])
                    .collect::<Vec<_>>(),
            ) / vol
        })
        .collect();
    let poly = solve_moments(q, k, &avgs);
    let mut grad_l1 = vec![0.0; k + 1];
    let mut grad_lp = vec![0.0; k + 1];
    let (mut poly_lp, mut resid_lp, mut osc_lp) = (0.0, 0.0, 0.0);
    for ((x, w), v) in pts.iter().zip(&vals) {
        let mut norms2 = vec![0.0; k + 1];
        let mut osc2 = 0.0;
        for (c, b) in idx.iter().enumerate() {
            let j = order(b);
            norms2[j] += v[c] * v[c];
            if j == k {
                osc2 += (v[c] - avgs[c]).powi(2);
            }
        }
        for j in 0..=k {
            let n = norms2[j].sqrt();
            grad_l1[j] += w * n;
            grad_lp[j] += w * n.powf(p);
        }
        let pv = poly.eval(x, &[0; D]);
        poly_lp += w * pv.abs().powf(p);
        resid_lp += w * (v[0] - pv).abs().powf(p);
        osc_lp += w * osc2.sqrt().powf(p);
    }
    CubeLocal {
        poly,
        grad_l1,
        grad_lp: grad_lp.into_iter().map(|s| lp_root(s, p)).collect(),
        poly_lp: lp_root(poly_lp, p),
        resid_lp: lp_root(resid_lp, p),
        osc_lp: lp_root(osc_lp, p),
    }
}

/// LHS/RHS with roundoff-level left sides counted as exact zeros.
fn realized(lhs: f64, rhs: f64, scale: f64) -> f64 {
    if lhs <= 1e-11 * scale.max(f64::MIN_POSITIVE) {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    }
}

/// Realized constants of the coefficient bound, the `L^p` bound, the
/// approximation bound and the chain telescoping bound over the interior
/// family. Pairs for the chain bound are sampled (`pair_budget`, `seed`).
#[allow(clippy::too_many_arguments)]
pub fn verify_poly_lemma<const D: usize>(
    fam: &CoveringFamily<D>,
    builder: &ChainBuilder<'_, D>,
    f: &dyn FieldFunction<D>,
    k: usize,
    p: f64,
    nodes: usize,
    pair_budget: usize,
    seed: u64,
) -> Result<PolyLemmaReport> {
    if k > f.k_max() {
        return Err(Error::OrderTooHigh {
            requested: k,
            available: f.k_max(),
        });
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::param(
            "p",
            format!("{p} must be a finite number ≥ 1"),
        ));
    }
    let set = &fam.w1;
    let dd = D as f64;
    let locals: Vec<CubeLocal<D>> = (0..set.len())
        .into_par_iter()
        .map(|i| cube_local(&set.get(i), f, k, p, nodes))
        .collect();
    let mut rep = PolyLemmaReport {
        k,
        p,
        cubes: set.len(),
        p1: 0.0,
        p1_bis: 0.0,
        p2: 0.0,
        p3: 0.0,
        pairs: 0,
        skipped_degenerate: 0,
    };
    for (i, loc) in locals.iter().enumerate() {
        let l = set.get(i).side();
        let scale: f64 = (0..=k).map(|j| l.powi(j as i32) * loc.grad_lp[j]).sum();
        for (g, m) in loc.poly.indices.iter().zip(&loc.poly.coeffs) {
            let o = order(g);
            let rhs: f64 = (o..=k)
                .map(|j| loc.grad_l1[j] * l.powf(j as f64 - o as f64 - dd))
                .sum();
            let s = (0..=k)
                .map(|j| loc.grad_l1[j] * l.powf(j as f64 - o as f64 - dd))
                .sum::<f64>();
            rep.p1 = rep.p1.max(realized(m.abs(), rhs, s));
        }
        rep.p1_bis = rep.p1_bis.max(realized(loc.poly_lp, scale, scale));
        rep.p2 = rep
            .p2
            .max(realized(loc.resid_lp, l.powi(k as i32) * loc.osc_lp, scale));
    }
    let n = set.len();
    let pairs: Vec<(usize, usize)> = sample_pairs(n, n, pair_budget, seed);
    let betas = graded::<D>(k);
    let rule = gauss_rule(nodes);
    let per_pair: Vec<(f64, bool)> = pairs
        .par_iter()
        .map(|&(s, q)| -> Result<(f64, bool)> {
            if s == q {
                return Ok((0.0, true));
            }
            let chain = builder.build_ids(s, q)?;
            let sc = set.get(s);
            let pts = rule.tensor(&sc.bbox());
            let mut worst: f64 = 0.0;
            for b in &betas {
                let terms: Vec<f64> = pts
                    .iter()
                    .map(|(x, w)| {
                        let d = locals[s].poly.eval(x, b) - locals[q].poly.eval(x, b);
                        w * d.abs().powf(p)
                    })
                    .collect();
                let lhs = lp_root(pairwise_sum(&terms), p);
                let rhs: f64 = chain
                    .ids
                    .iter()
                    .map(|&pc| {
                        let pcube = set.get(pc);
                        sc.side().powf(dd / p)
                            * long_distance(&pcube, &sc).powi((k - order(b)) as i32)
                            / pcube.side().powf(dd / p)
                            * locals[pc].osc_lp
                    })
                    .sum();
                let scale = locals[s].poly_lp + locals[q].poly_lp;
                worst = worst.max(realized(lhs, rhs, scale));
            }
            Ok((worst, false))
        })
        .collect::<Result<_>>()?;
    for (v, degenerate) in per_pair {
        if degenerate {
            rep.skipped_degenerate += 1;
        } else {
            rep.pairs += 1;
            rep.p3 = rep.p3.max(v);
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Constant, Polynomial};

    #[test]
    fn constant_projects_to_itself() {
        let q = DyadicCube::new(2, [1, 3]);
        for k in 0..4 {
            let p = project(&q, &Constant { value: 2.5 }, k, 8).unwrap();
            assert!((p.coeffs[0] - 2.5).abs() < 1e-14);
            assert!(p.coeffs[1..].iter().all(|c| c.abs() < 1e-14));
        }
    }

    #[test]
    fn one_dimensional_worked_example() {
        // Q = [0,1], f = x², k = 1: P(y) = 1/3 + (y − 1/2)
        let q = DyadicCube::new(0, [0]);
        let f = Polynomial {
            terms: vec![([2], 1.0)],
        };
        let p = project(&q, &f, 1, 8).unwrap();
        assert!((p.coeff(&[0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.coeff(&[1]) - 1.0).abs() < 1e-15);
        assert!((p.eval(&[1.0], &[0]) - 5.0 / 6.0).abs() < 1e-15);
        assert!((p.eval(&[0.5], &[0]) - p.coeff(&[0])).abs() < 1e-15);
        assert_eq!(p.eval(&[0.3], &[2]), 0.0);
    }

    #[test]
    fn ring_difference_of_a_square() {
        // f = x² on [0,1], k = 2: P² f = f, P¹ f = 1/3 + (y − 1/2); the
        // difference is (y − 1/2)² − 1/12, i.e. m_2 = 1, m_1 = 0, m_0 = −1/12
        let q = DyadicCube::new(0, [0]);
        let f = Polynomial {
            terms: vec![([2], 1.0)],
        };
        let r = ring_diff(&q, &f, 2, 8).unwrap();
        assert!((r.coeff(&[2]) - 1.0).abs() < 1e-14);
        assert!(r.coeff(&[1]).abs() < 1e-14);
        assert!((r.coeff(&[0]) + 1.0 / 12.0).abs() < 1e-14);
        let lin = Polynomial {
            terms: vec![([1], 3.0), ([0], 1.0)],
        };
        let r = ring_diff(&q, &lin, 2, 8).unwrap();
        assert!(r.coeffs.iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn order_above_the_field_is_rejected() {
        let q = DyadicCube::new(0, [0, 0]);
        let f = crate::fields::SlitAngle { center: [0.5, 0.5] };
        assert!(matches!(
            project(&q, &f, 2, 8),
            Err(Error::OrderTooHigh { .. })
        ));
    }

    #[test]
    fn derivative_of_coefficients() {
        let q = DyadicCube::new(1, [0, 1]);
        let f = Polynomial {
            terms: vec![([2, 1], 1.0), ([0, 3], -2.0), ([1, 0], 0.5)],
        };
        let p = project(&q, &f, 3, 8).unwrap();
        let d = p.derivative(&[1, 1]);
        assert_eq!(d.degree, 1);
        for x in [[0.1, 0.6], [0.4, 0.9]] {
            assert!((d.eval(&x, &[0, 0]) - f.eval(&x, &[1, 1])).abs() < 1e-12);
            assert!((p.eval(&x, &[0, 2]) - f.eval(&x, &[0, 2])).abs() < 1e-12);
        }
    }

    fn arb_poly() -> impl proptest::strategy::Strategy<Value = Polynomial<2>> {
        use proptest::prelude::*;
        proptest::collection::vec(((0usize..4, 0usize..4), -2.0f64..2.0), 1..6).prop_map(|t| {
            Polynomial {
                terms: t.into_iter().map(|((a, b), c)| ([a, b], c)).collect(),
            }
        })
    }

    proptest::proptest! {
        #[test]
        fn reproduces_polynomials(f in arb_poly(), g in 0i32..4, a in 0i64..4, b in 0i64..4) {
            let q = DyadicCube::new(g, [a, b]);
            let deg = f.terms.iter().map(|(m, _)| order(m)).max().unwrap();
            let p = project(&q, &f, deg, 8).unwrap();
            let c = q.center();
            for x in [c, q.lower(), [c[0] + 0.3 * q.side(), c[1] - 0.4 * q.side()]] {
                proptest::prop_assert!((p.eval(&x, &[0, 0]) - f.eval(&x, &[0, 0])).abs() < 1e-10);
            }
        }

        #[test]
        fn linear_idempotent_and_moment_matched(f in arb_poly(), h in arb_poly(), t in -3.0f64..3.0, k in 0usize..4) {
            let q = DyadicCube::new(1, [1, 0]);
            let pf = project(&q, &f, k, 8).unwrap();
            let ph = project(&q, &h, k, 8).unwrap();
            let mut sum = f.terms.clone();
            sum.extend(h.terms.iter().map(|(m, c)| (*m, t * c)));
            let psum = project(&q, &Polynomial { terms: sum }, k, 8).unwrap();
            for (n, c) in psum.coeffs.iter().enumerate() {
                proptest::prop_assert!((c - pf.coeffs[n] - t * ph.coeffs[n]).abs() < 1e-10);
            }
            let again = project(&q, &pf, k, 8).unwrap();
            proptest::prop_assert!(again.max_abs_diff(&pf) < 1e-10);
            let avg_f = derivative_averages(&q, &f, k, 8);
            let avg_p = derivative_averages(&q, &pf, k, 8);
            for (u, v) in avg_f.iter().zip(&avg_p) {
                proptest::prop_assert!((u - v).abs() < 1e-10 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn commutes_with_derivatives(f in arb_poly(), k in 2usize..5, b0 in 0usize..2, b1 in 0usize..2) {
            let beta = [b0, b1];
            let q = DyadicCube::new(2, [0, 3]);
            let lhs = project(&q, &f, k, 8).unwrap().derivative(&beta);
            let df = crate::fields::DerivativeField { inner: std::sync::Arc::new(f.clone()), beta };
            let rhs = project(&q, &df, k - order(&beta), 8).unwrap();
            proptest::prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }
}
