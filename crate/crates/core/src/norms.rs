//! Quadrature estimators for `W^{k,p}`, the difference seminorms
//! `Ȧ^σ_{p,q}` (full, shadow, Whitney-ball and 5Q restricted), the
//! composite `A^s_{p,q}` norm, the global norm of an extension and the
//! lemma diagnostics built on the same discrete measure.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covering::{CoveringFamily, CubeSet};
use crate::domain::DomainOracle;
use crate::error::{Error, Result};
use crate::estimator::{seminorm_pass, Mesh, Samples, SeminormValue};
use crate::extension::{collar_cuts, ExtensionField, COLLAR};
use crate::fields::{graded, order, FieldFunction, MultiIndex};
use crate::geometry::{long_distance, DyadicCube};
use crate::quadrature::pairwise_sum;

fn ser_q<S: Serializer>(q: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if q.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*q)
    }
}

fn de_q<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Q {
        Num(f64),
        Text(String),
    }
    match Q::deserialize(d)? {
        Q::Num(v) => Ok(v),
        Q::Text(t) if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") => {
            Ok(f64::INFINITY)
        }
        Q::Text(t) => Err(serde::de::Error::custom(format!(
            "q must be a number or \"inf\", got {t:?}"
        ))),
    }
}

/// `s = k + σ`; `q = ∞` is written `"inf"` in configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormParams {
    pub k: usize,
    pub sigma: f64,
    pub p: f64,
    #[serde(serialize_with = "ser_q", deserialize_with = "de_q")]
    pub q: f64,
}

impl NormParams {
    pub fn new(k: usize, sigma: f64, p: f64, q: f64) -> Self {
        Self { k, sigma, p, q }
    }

    pub fn s(&self) -> f64 {
        self.k as f64 + self.sigma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::param(
                "NormParams.sigma",
                format!("{} is not in (0, 1)", self.sigma),
            ));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::param(
                "NormParams.p",
                format!("{} is not in [1, ∞)", self.p),
            ));
        }
        if !(self.q >= 1.0) {
            return Err(Error::param(
                "NormParams.q",
                format!("{} is not in [1, ∞]", self.q),
            ));
        }
        Ok(())
    }

    /// `σ > d/p − d/q`, the hypothesis of the equivalence theorems.
    pub fn is_valid(&self, d: usize) -> bool {
        let dq = if self.q.is_infinite() {
            0.0
        } else {
            d as f64 / self.q
        };
        self.sigma > d as f64 / self.p - dq
    }

    pub fn q_label(&self) -> String {
        if self.q.is_infinite() {
            "inf".into()
        } else {
            format!("{}", self.q)
        }
    }
}

fn default_nodes() -> usize {
    4
}
fn default_refine() -> usize {
    3
}
fn default_box_factor() -> f64 {
    crate::covering::EXTERIOR_BOX_FACTOR
}
fn default_far() -> f64 {
    4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_nodes")]
    pub nodes_per_axis: usize,
    /// Depth `r` of the near-diagonal subdivision.
    #[serde(default = "default_refine")]
    pub diag_refine_depth: usize,
    #[serde(default = "default_box_factor")]
    pub computation_box_factor: f64,
    /// Clusters with `dist(x, cluster) ≥ ratio·extent` use a multipole
    /// expansion (even integer `q`); 0 disables it.
    #[serde(default = "default_far")]
    pub far_field_ratio: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: default_nodes(),
            diag_refine_depth: default_refine(),
            computation_box_factor: default_box_factor(),
            far_field_ratio: default_far(),
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 2 || self.nodes_per_axis > 16 {
            return Err(Error::param(
                "QuadratureSpec.nodes_per_axis",
                "must lie in 2..=16",
            ));
        }
        if self.diag_refine_depth > 6 {
            return Err(Error::param(
                "QuadratureSpec.diag_refine_depth",
                "must be at most 6",
            ));
        }
        if !(self.computation_box_factor >= 1.0) {
            return Err(Error::param(
                "QuadratureSpec.computation_box_factor",
                "must be at least 1",
            ));
        }
        if !(self.far_field_ratio == 0.0 || self.far_field_ratio >= 1.0) {
            return Err(Error::param(
                "QuadratureSpec.far_field_ratio",
                "must be 0 or at least 1",
            ));
        }
        Ok(())
    }
}

/// Restriction of the inner integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Full,
    /// `y` in the cubes of `SH_ρ(Q)`, `x ∈ Q`.
    Shadow {
        rho: f64,
    },
    /// `y ∈ B(x, ρ δ(x))`, `0 < ρ < 1`.
    Ball {
        rho: f64,
    },
    /// `y ∈ 5Q`, `x ∈ Q`.
    #[serde(rename = "fiveq")]
    FiveQ,
}

impl Region {
    pub fn name(&self) -> &'static str {
        match self {
            Region::Full => "full",
            Region::Shadow { .. } => "shadow",
            Region::Ball { .. } => "ball",
            Region::FiveQ => "fiveq",
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self {
            Region::Shadow { rho } | Region::Ball { rho } => Some(*rho),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::Ball { rho } if !(rho > 0.0 && rho < 1.0) => Err(Error::param(
                "Region.rho",
                format!("ball radius factor {rho} is not in (0, 1)"),
            )),
            Region::Shadow { rho } if !(rho > 0.0) => {
                Err(Error::param("Region.rho", "shadow factor must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Samples `D^γ f` for all `|γ| ≤ k` on the cubes of `set`.
pub fn field_samples<const D: usize>(
    f: &dyn FieldFunction<D>,
    mesh: &Mesh<D>,
    k: usize,
    quad: &QuadratureSpec,
) -> Result<Samples<D>> {
    if k > f.k_max() {
        return Err(Error::OrderTooHigh {
            requested: k,
            available: f.k_max(),
        });
    }
    quad.validate()?;
    let idx = graded::<D>(k);
    Samples::build(
        mesh,
        quad.nodes_per_axis,
        quad.diag_refine_depth,
        idx.len(),
        |_, x| Ok(idx.iter().map(|a| f.eval(x, a)).collect()),
    )
}

/// Positions of the order-`k` components inside `graded(k)`.
pub fn top_components<const D: usize>(k: usize) -> Vec<usize> {
    graded::<D>(k)
        .iter()
        .enumerate()
        .filter(|(_, a)| order(a) == k)
        .map(|(i, _)| i)
        .collect()
}

/// `(‖f‖_{L^p}, ‖f‖_{W^{k,p}})` from level-0 samples holding `graded(k)`.
pub fn lp_and_wkp<const D: usize>(s: &Samples<D>, p: f64) -> (f64, f64) {
    let per_cube: Vec<(f64, f64)> = (0..s.elements())
        .map(|ei| {
            let (mut a, mut b) = (0.0, 0.0);
            for (_, w, v) in s.level0(ei) {
                a += w * v[0].abs().powf(p);
                b += w * v.iter().map(|g| g.abs().powf(p)).sum::<f64>();
            }
            (a, b)
        })
        .collect();
    let a: Vec<f64> = per_cube.iter().map(|t| t.0).collect();
    let b: Vec<f64> = per_cube.iter().map(|t| t.1).collect();
    (
        pairwise_sum(&a).powf(1.0 / p),
        pairwise_sum(&b).powf(1.0 / p),
    )
}

/// `‖D^α f‖_{Ȧ^σ_{p,q}}` over the union of `set`.
#[allow(clippy::too_many_arguments)]
pub fn seminorm_a<const D: usize>(
    f: &dyn FieldFunction<D>,
    alpha: &MultiIndex<D>,
    set: &CubeSet<D>,
    oracle: Option<&dyn DomainOracle<D>>,
    params: &NormParams,
    region: Region,
    quad: &QuadratureSpec,
) -> Result<SeminormValue> {
    quad.validate()?;
    if order(alpha) > f.k_max() {
        return Err(Error::OrderTooHigh {
            requested: order(alpha),
            available: f.k_max(),
        });
    }
    let mesh = Mesh::cubes(set);
    let s = Samples::build(
        &mesh,
        quad.nodes_per_axis,
        quad.diag_refine_depth,
        1,
        |_, x| Ok(vec![f.eval(x, alpha)]),
    )?;
    Ok(seminorm_pass(
        set,
        &mesh,
        &s,
        &[0],
        std::slice::from_ref(params),
        region,
        oracle,
        quad,
    )?[0])
}

/// `(Σ_{|γ|≤k} ∫ |D^γ f|^p)^{1/p}` by per-cube Gauss quadrature.
pub fn norm_wkp<const D: usize>(
    f: &dyn FieldFunction<D>,
    set: &CubeSet<D>,
    k: usize,
    p: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", "must lie in [1, ∞)"));
    }
    let shallow = QuadratureSpec {
        diag_refine_depth: 0,
        ..*quad
    };
    let s = field_samples(f, &Mesh::cubes(set), k, &shallow)?;
    Ok(lp_and_wkp(&s, p).1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionValue {
    pub region: Region,
    pub value: f64,
    pub quad_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub domain: String,
    pub function: String,
    pub params: NormParams,
    /// `σ > d/p − d/q`.
    pub valid: bool,
    pub lp_norm: f64,
    pub wkp_norm: f64,
    /// Restricted seminorms; the first entry is always the full one.
    pub seminorms: Vec<RegionValue>,
    /// `‖f‖_{W^{k,p}} + Σ_{|α|=k} ‖D^α f‖_{Ȧ}` (full region).
    pub composite: f64,
    /// Additive bound for the part of `R^d × R^d` outside the computation box.
    pub tail_bound: Option<f64>,
    pub warnings: Vec<String>,
}

impl NormReport {
    pub fn seminorm(&self, region: &str) -> Option<f64> {
        self.seminorms
            .iter()
            .find(|r| r.region.name() == region)
            .map(|r| r.value)
    }

    pub fn seminorm_full(&self) -> f64 {
        self.seminorms[0].value
    }
}

fn param_warnings<const D: usize>(p: &NormParams, regions: &[Region]) -> Vec<String> {
    let mut w = Vec::new();
    if !p.is_valid(D) {
        w.push(format!(
            "(sigma, p, q) = ({}, {}, {}) violates sigma > d/p - d/q; equivalences are not covered",
            p.sigma,
            p.p,
            p.q_label()
        ));
    }
    if regions.iter().any(|r| matches!(r, Region::Ball { .. })) && p.q > p.p {
        w.push("ball-restricted seminorm needs q <= p; reported without that guarantee".into());
    }
    w
}

/// Norm reports on `Ω` (the interior cover) for several parameter sets.
/// Regions other than `Full` are evaluated in addition to it.
pub fn norm_a_spq_multi<const D: usize>(
    f: &dyn FieldFunction<D>,
    fam: &CoveringFamily<D>,
    params: &[NormParams],
    regions: &[Region],
    quad: &QuadratureSpec,
) -> Result<Vec<NormReport>> {
    let set = &fam.w1;
    let oracle = fam.domain.as_ref();
    let mut reports: Vec<Option<NormReport>> = vec![None; params.len()];
    let mesh = Mesh::cubes(set);
    let mut ks: Vec<usize> = params.iter().map(|p| p.k).collect();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let sel: Vec<usize> = (0..params.len()).filter(|&i| params[i].k == k).collect();
        let ps: Vec<NormParams> = sel.iter().map(|&i| params[i]).collect();
        let samples = field_samples(f, &mesh, k, quad)?;
        let comps = top_components::<D>(k);
        let mut all_regions = vec![Region::Full];
        all_regions.extend(regions.iter().filter(|r| **r != Region::Full));
        let mut per_region = Vec::new();
        for r in &all_regions {
            per_region.push(seminorm_pass(
                set,
                &mesh,
                &samples,
                &comps,
                &ps,
                *r,
                Some(oracle),
                quad,
            )?);
        }
        for (j, &i) in sel.iter().enumerate() {
            let p = ps[j];
            let (lp, wkp) = lp_and_wkp(&samples, p.p);
            let seminorms: Vec<RegionValue> = all_regions
                .iter()
                .zip(&per_region)
                .map(|(r, v)| RegionValue {
                    region: *r,
                    value: v[j].value,
                    quad_error: v[j].error(),
                })
                .collect();
            reports[i] = Some(NormReport {
                domain: oracle.label(),
                function: f.label(),
                params: p,
                valid: p.is_valid(D),
                lp_norm: lp,
                wkp_norm: wkp,
                composite: wkp + seminorms[0].value,
                seminorms,
                tail_bound: None,
                warnings: param_warnings::<D>(&p, regions),
            });
        }
    }
    Ok(reports
        .into_iter()
        .map(|r| r.expect("every parameter set is assigned"))
        .collect())
}

pub fn norm_a_spq<const D: usize>(
    f: &dyn FieldFunction<D>,
    fam: &CoveringFamily<D>,
    params: &NormParams,
    regions: &[Region],
    quad: &QuadratureSpec,
) -> Result<NormReport> {
    Ok(norm_a_spq_multi(f, fam, std::slice::from_ref(params), regions, quad)?.remove(0))
}

/// `W1 ∪ W2` as one set, with a flag telling interior cubes apart.
pub fn global_set<const D: usize>(fam: &CoveringFamily<D>) -> (CubeSet<D>, Vec<bool>) {
    let mut cubes: Vec<DyadicCube<D>> = fam.w1.cubes().to_vec();
    cubes.extend_from_slice(fam.w2.cubes());
    let set = CubeSet::new(cubes);
    let interior = set.cubes().iter().map(|c| fam.w1.contains(c)).collect();
    (set, interior)
}

/// Bound for the part of the global seminorm of one component `g`
/// (`|g| ≤ sup`, supported in a set of measure `support` at distance
/// `margin` from the outside of the box of largest extent `extent`)
/// that the truncation to the box discards.
pub fn truncation_tail(
    d: usize,
    params: &NormParams,
    sup: f64,
    support: f64,
    margin: f64,
    extent: f64,
) -> f64 {
    if sup == 0.0 {
        return 0.0;
    }
    let (sigma, p, dd) = (params.sigma, params.p, d as f64);
    let omega = match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(dd / 2.0) / gamma_half_integer(d),
    };
    // x in the support, y beyond the box
    let near = if params.q.is_infinite() {
        sup * margin.powf(-sigma) * support.powf(1.0 / p)
    } else {
        let q = params.q;
        sup * (omega / (sigma * q)).powf(1.0 / q) * margin.powf(-sigma) * support.powf(1.0 / p)
    };
    // x beyond the box
    let (e, mass) = if params.q.is_infinite() {
        (sigma * p, 1.0)
    } else {
        (
            (sigma * params.q + dd) * p / params.q,
            support.powf(p / params.q),
        )
    };
    if e <= dd {
        return f64::INFINITY;
    }
    let shell = 2.0 * dd * (extent / margin + 2.0).powf(dd - 1.0);
    let far = sup.powf(p) * mass * shell * margin.powf(dd - e) / (e - dd);
    near + far.powf(1.0 / p)
}

/// `Γ(d/2)` for integer `d ≥ 1`.
fn gamma_half_integer(d: usize) -> f64 {
    if d % 2 == 0 {
        (1..d / 2).map(|i| i as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x + 1.0 <= d as f64 / 2.0 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Norms of `Λ_k f` over `W1 ∪ W2` (the computation box), with the
/// discarded far field reported as `tail_bound`.
pub fn norm_extension_global<const D: usize>(
    ef: &ExtensionField<D>,
    params: &[NormParams],
    quad: &QuadratureSpec,
) -> Result<Vec<NormReport>> {
    quad.validate()?;
    let fam = ef.fam.as_ref();
    let (set, interior) = global_set(fam);
    let k = ef.k;
    if let Some(p) = params.iter().find(|p| p.k != k) {
        return Err(Error::param(
            "NormParams.k",
            format!("{} differs from the extension order {k}", p.k),
        ));
    }
    let idx = graded::<D>(k);
    let mesh = Mesh::with_cuts(&set, |ci| {
        if interior[ci] {
            std::array::from_fn(|_| Vec::new())
        } else {
            collar_cuts(fam, &set.get(ci))
        }
    });
    debug_assert_eq!(interior.iter().filter(|&&b| b).count(), fam.w1.len());
    let samples = Samples::build(
        &mesh,
        quad.nodes_per_axis,
        quad.diag_refine_depth,
        idx.len(),
        |ci, x| {
            Ok(if interior[ci] {
                ef.eval_interior(x, k)
            } else {
                ef.eval_exterior(x, k)
            })
        },
    )?;
    let comps = top_components::<D>(k);
    let values = seminorm_pass(
        &set,
        &mesh,
        &samples,
        &comps,
        params,
        Region::Full,
        Some(fam.domain.as_ref()),
        quad,
    )?;
    let support = fam.domain.volume()
        + fam
            .w3
            .iter()
            .map(|&i| (fam.w2.get(i).side() * (1.0 + 2.0 * COLLAR)).powi(D as i32))
            .sum::<f64>();
    let bx = fam.computation_box;
    let inner_boxes = fam
        .w3
        .iter()
        .map(|&i| fam.w2.get(i).bbox().dilate(1.0 + 2.0 * COLLAR))
        .chain(std::iter::once(fam.domain.bounding_box()));
    let margin = inner_boxes
        .map(|b| {
            (0..D)
                .map(|a| (b.lo[a] - bx.lo[a]).min(bx.hi[a] - b.hi[a]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    let extent = bx.max_extent();
    Ok(params
        .iter()
        .zip(values)
        .map(|(p, v)| {
            let (lp, wkp) = lp_and_wkp(&samples, p.p);
            let tail: f64 = comps
                .iter()
                .map(|&c| truncation_tail(D, p, samples.sup(c), support, margin, extent))
                .sum();
            NormReport {
                domain: fam.domain.label(),
                function: ef.label(),
                params: *p,
                valid: p.is_valid(D),
                lp_norm: lp,
                wkp_norm: wkp,
                composite: wkp + v.value,
                seminorms: vec![RegionValue {
                    region: Region::Full,
                    value: v.value,
                    quad_error: v.error(),
                }],
                tail_bound: Some(tail),
                warnings: param_warnings::<D>(p, &[]),
            }
        })
        .collect())
}

/// `LHS / RHS` of one inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
}

impl LemmaRatio {
    fn new(lhs: f64, rhs: f64) -> Self {
        let constant = if lhs == 0.0 {
            0.0
        } else if rhs > 0.0 {
            lhs / rhs
        } else {
            f64::INFINITY
        };
        Self { lhs, rhs, constant }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub params: NormParams,
    /// `Σ_{Q∈W1∪W2} (Σ_{L∈W1} ∫_L |g − g_L|^q / D(Q,L)^{σq+d})^{p/q} ℓ(Q)^d`
    /// against `‖g‖^p_{Ȧ}`, worst over the order-`k` components `g`.
    pub control_total: LemmaRatio,
    /// The weighted `L^1` sum against `‖h‖_{L^p}` for `h = D^α f`,
    /// only for `q < p`.
    pub norm_a: Option<LemmaRatio>,
    /// Shadow-restricted over full seminorm, and its inverse.
    pub shadow_ratio: Option<f64>,
    pub shadow_ratio_inverse: Option<f64>,
}

/// The two covering lemmas and the shadow equivalence for `f` on `Ω`.
pub fn inequality_diagnostics<const D: usize>(
    fam: &CoveringFamily<D>,
    f: &dyn FieldFunction<D>,
    params: &NormParams,
    shadow_rho: Option<f64>,
    quad: &QuadratureSpec,
) -> Result<InequalityReport> {
    params.validate()?;
    let set = &fam.w1;
    let mesh = Mesh::cubes(set);
    let samples = field_samples(f, &mesh, params.k, quad)?;
    let comps = top_components::<D>(params.k);
    let full = seminorm_pass(
        set,
        &mesh,
        &samples,
        &comps,
        std::slice::from_ref(params),
        Region::Full,
        Some(fam.domain.as_ref()),
        quad,
    )?[0];
    let outer: Vec<DyadicCube<D>> = set.cubes().iter().chain(fam.w2.cubes()).copied().collect();
    let (sigma, p, q, dd) = (params.sigma, params.p, params.q, D as f64);
    let mut control = LemmaRatio::new(0.0, 0.0);
    let mut norm_a: Option<LemmaRatio> = None;
    for &c in &comps {
        // per-cube mean, oscillation mass and L^1 norm on the common Gauss measure
        let stats: Vec<(f64, f64, f64)> = (0..set.len())
            .map(|li| {
                let vol = set.get(li).volume();
                let nodes: Vec<(f64, f64)> = samples
                    .cube_level0(&mesh, li)
                    .map(|(_, w, v)| (w, v[c]))
                    .collect();
                let mean = nodes.iter().map(|(w, v)| w * v).sum::<f64>() / vol;
                let osc = if q.is_infinite() {
                    nodes
                        .iter()
                        .fold(0.0f64, |a, (_, v)| a.max((v - mean).abs()))
                } else {
                    nodes
                        .iter()
                        .map(|(w, v)| w * (v - mean).abs().powf(q))
                        .sum::<f64>()
                };
                let l1 = nodes.iter().map(|(w, v)| w * v.abs()).sum::<f64>();
                (mean, osc, l1)
            })
            .collect();
        let lhs_terms: Vec<f64> = outer
            .par_iter()
            .map(|qc| {
                let inner = if q.is_infinite() {
                    (0..set.len()).fold(0.0f64, |a, li| {
                        a.max(stats[li].1 / long_distance(qc, &set.get(li)).powf(sigma))
                    })
                } else {
                    let t: Vec<f64> = (0..set.len())
                        .map(|li| {
                            stats[li].1 / long_distance(qc, &set.get(li)).powf(sigma * q + dd)
                        })
                        .collect();
                    pairwise_sum(&t)
                };
                let e = if q.is_infinite() { p } else { p / q };
                inner.powf(e) * qc.volume()
            })
            .collect();
        let r = LemmaRatio::new(pairwise_sum(&lhs_terms), full.value.powf(p));
        if r.constant >= control.constant {
            control = r;
        }
        if q < p {
            let lhs_terms: Vec<f64> = outer
                .par_iter()
                .map(|qc| {
                    let t: Vec<f64> = (0..set.len())
                        .map(|li| {
                            let l = set.get(li);
                            let w = l.side().powf(sigma + dd / q - dd)
                                / long_distance(qc, &l).powf(sigma + dd / q);
                            (stats[li].2 * w).powf(q)
                        })
                        .collect();
                    pairwise_sum(&t).powf(p / q) * qc.volume()
                })
                .collect();
            let hp: Vec<f64> = (0..set.len())
                .map(|li| {
                    samples
                        .cube_level0(&mesh, li)
                        .map(|(_, w, v)| w * v[c].abs().powf(p))
                        .sum()
                })
                .collect();
            let r = LemmaRatio::new(
                pairwise_sum(&lhs_terms).powf(1.0 / p),
                pairwise_sum(&hp).powf(1.0 / p),
            );
            if norm_a.map_or(true, |o| r.constant >= o.constant) {
                norm_a = Some(r);
            }
        }
    }
    let (shadow_ratio, shadow_ratio_inverse) = match shadow_rho {
        Some(rho) => {
            let sh = seminorm_pass(
                set,
                &mesh,
                &samples,
                &comps,
                std::slice::from_ref(params),
                Region::Shadow { rho },
                None,
                quad,
            )?[0];
            let r = if full.value > 0.0 {
                sh.value / full.value
            } else {
                1.0
            };
            (Some(r), Some(if r > 0.0 { 1.0 / r } else { f64::INFINITY }))
        }
        None => (None, None),
    };
    Ok(InequalityReport {
        params: *params,
        control_total: control,
        norm_a,
        shadow_ratio,
        shadow_ratio_inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Constant, Polynomial};

    fn unit_interval() -> CubeSet<1> {
        CubeSet::new(vec![DyadicCube::new(0, [0])])
    }

    #[test]
    fn identity_on_the_unit_interval() {
        // |x − y|² / |x − y|^{1 + 1} ≡ 1 on (0,1)², so the seminorm is 1
        let f = Polynomial {
            terms: vec![([1], 1.0)],
        };
        let quad = QuadratureSpec {
            diag_refine_depth: 4,
            ..Default::default()
        };
        let v = seminorm_a(
            &f,
            &[0],
            &unit_interval(),
            None,
            &NormParams::new(0, 0.5, 2.0, 2.0),
            Region::Full,
            &quad,
        )
        .unwrap();
        assert!((v.value - 1.0).abs() < 1e-3, "{v:?}");
    }

    #[test]
    fn wkp_closed_form() {
        let f = Polynomial {
            terms: vec![([1], 1.0)],
        };
        let v = norm_wkp(&f, &unit_interval(), 1, 2.0, &QuadratureSpec::default()).unwrap();
        assert!((v - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let c = norm_wkp(
            &Constant { value: 3.0 },
            &unit_interval(),
            0,
            2.0,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((c - 3.0).abs() < 1e-12);
        // splitting the cover once leaves the integral unchanged
        let split = CubeSet::new(vec![DyadicCube::new(1, [0]), DyadicCube::new(1, [1])]);
        let w = norm_wkp(&f, &split, 1, 2.0, &QuadratureSpec::default()).unwrap();
        assert!((v - w).abs() < 1e-12);
    }

    #[test]
    fn constants_have_zero_seminorm() {
        let set = CubeSet::new(vec![DyadicCube::new(1, [0, 0]), DyadicCube::new(1, [1, 0])]);
        let v = seminorm_a(
            &Constant { value: 2.0 },
            &[0, 0],
            &set,
            None,
            &NormParams::new(0, 0.5, 2.0, 2.0),
            Region::FiveQ,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn parameter_validation_names_the_field() {
        let err = NormParams::new(0, 0.5, 2.0, 0.0).validate().unwrap_err();
        assert!(err.to_string().contains("NormParams.q"), "{err}");
        assert!(NormParams::new(0, 1.0, 2.0, 2.0).validate().is_err());
        let p: NormParams = serde_json::from_str(r#"{"k":0,"sigma":0.5,"p":2,"q":"inf"}"#).unwrap();
        assert!(p.q.is_infinite());
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"k":0,"sigma":0.5,"p":2.0,"q":"inf"}"#
        );
        assert!(!NormParams::new(0, 0.5, 2.0, 4.0).is_valid(2));
        assert!(NormParams::new(0, 0.5, 2.0, 2.0).is_valid(2));
    }

    #[test]
    fn tail_needs_the_validity_condition() {
        assert!(
            truncation_tail(2, &NormParams::new(0, 0.5, 2.0, 2.0), 1.0, 1.0, 1.0, 3.0).is_finite()
        );
        assert!(
            truncation_tail(2, &NormParams::new(0, 0.5, 2.0, 4.0), 1.0, 1.0, 1.0, 3.0)
                .is_infinite()
        );
        assert_eq!(
            truncation_tail(2, &NormParams::new(0, 0.5, 2.0, 2.0), 0.0, 1.0, 1.0, 3.0),
            0.0
        );
        assert!((gamma_half_integer(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
    }
}
