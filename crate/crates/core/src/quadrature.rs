//! Tensor Gauss–Legendre rules on boxes and order-stable summation.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use crate::geometry::{Aabb, Point};

/// One-dimensional Gauss–Legendre rule mapped to `[0, 1]`; weights sum to 1.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(m: usize) -> Self {
        let m = NonZeroUsize::new(m).expect("quadrature needs at least one node");
        let gl = GaussLegendre::new(m);
        let mut pairs: Vec<(f64, f64)> = gl
            .nodes()
            .zip(gl.weights())
            .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tensor nodes on `b` with weights that sum to `vol(b)`.
    pub fn tensor<const D: usize>(&self, b: &Aabb<D>) -> Vec<(Point<D>, f64)> {
        let m = self.len();
        let total = m.pow(D as u32);
        let vol = b.volume();
        let mut out = Vec::with_capacity(total);
        let mut idx = [0usize; D];
        for _ in 0..total {
            let mut w = vol;
            let x: Point<D> = std::array::from_fn(|i| {
                w *= self.weights[idx[i]];
                b.lo[i] + self.nodes[idx[i]] * b.extent(i)
            });
            out.push((x, w));
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < m {
                    break;
                }
                *slot = 0;
            }
        }
        out
    }

    pub fn integrate<const D: usize>(
        &self,
        b: &Aabb<D>,
        mut f: impl FnMut(&Point<D>) -> f64,
    ) -> f64 {
        let terms: Vec<f64> = self.tensor(b).into_iter().map(|(x, w)| w * f(&x)).collect();
        pairwise_sum(&terms)
    }
}

/// Shared rule for `m` nodes per axis.
pub fn gauss_rule(m: usize) -> &'static GaussRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static GaussRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(m)
        .or_insert_with(|| Box::leak(Box::new(GaussRule::new(m))))
}

/// Fixed-shape pairwise summation; the result depends only on the order of
/// `xs`, never on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_nodes_are_sorted() {
        for m in 1..12 {
            let r = GaussRule::new(m);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(r.nodes.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2m_minus_1() {
        let r = GaussRule::new(4);
        let b = Aabb::new([0.0, -1.0], [2.0, 0.5]);
        // ∫ x^7 y^6 over the box
        let exact = (2f64.powi(8) / 8.0) * ((0.5f64.powi(7) + 1.0) / 7.0);
        let got = r.integrate(&b, |p| p[0].powi(7) * p[1].powi(6));
        assert!((got - exact).abs() < 1e-12 * exact.abs());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_exact_values() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
