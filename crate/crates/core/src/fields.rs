//! Functions with exact partial derivatives: the inputs of projections,
//! extensions and norm estimates.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Multi-index `α ∈ ℕ^d`.
pub type MultiIndex<const D: usize> = [usize; D];

pub fn order<const D: usize>(a: &MultiIndex<D>) -> usize {
    a.iter().sum()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `α! = Π α_i!`.
pub fn mi_factorial<const D: usize>(a: &MultiIndex<D>) -> f64 {
    a.iter().map(|&v| factorial(v)).product()
}

/// `binom(α, β) = Π binom(α_i, β_i)`, zero unless `β ≤ α`.
pub fn mi_binomial<const D: usize>(a: &MultiIndex<D>, b: &MultiIndex<D>) -> f64 {
    if !leq(b, a) {
        return 0.0;
    }
    (0..D)
        .map(|i| factorial(a[i]) / (factorial(b[i]) * factorial(a[i] - b[i])))
        .product()
}

/// Componentwise `a ≤ b`.
pub fn leq<const D: usize>(a: &MultiIndex<D>, b: &MultiIndex<D>) -> bool {
    (0..D).all(|i| a[i] <= b[i])
}

pub fn add<const D: usize>(a: &MultiIndex<D>, b: &MultiIndex<D>) -> MultiIndex<D> {
    std::array::from_fn(|i| a[i] + b[i])
}

/// `a − b`; requires `b ≤ a`.
pub fn sub<const D: usize>(a: &MultiIndex<D>, b: &MultiIndex<D>) -> MultiIndex<D> {
    std::array::from_fn(|i| a[i] - b[i])
}

/// Multi-indices of order exactly `n`, lexicographically descending
/// (`(n,0,…)` first).
pub fn of_order<const D: usize>(n: usize) -> Vec<MultiIndex<D>> {
    fn rec<const D: usize>(
        axis: usize,
        left: usize,
        cur: &mut [usize; D],
        out: &mut Vec<[usize; D]>,
    ) {
        if axis == D - 1 {
            cur[axis] = left;
            out.push(*cur);
            return;
        }
        for v in (0..=left).rev() {
            cur[axis] = v;
            rec(axis + 1, left - v, cur, out);
        }
    }
    let mut out = Vec::new();
    if D == 0 {
        return out;
    }
    rec(0, n, &mut [0; D], &mut out);
    out
}

/// All multi-indices with `|γ| ≤ k`, by increasing order.
pub fn graded<const D: usize>(k: usize) -> Vec<MultiIndex<D>> {
    (0..=k).flat_map(of_order::<D>).collect()
}

pub trait FieldFunction<const D: usize>: Send + Sync {
    /// `D^α f(x)`; only valid for `|α| ≤ k_max`.
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64;

    fn k_max(&self) -> usize;

    fn label(&self) -> String;

    fn value(&self, x: &Point<D>) -> f64 {
        self.eval(x, &[0; D])
    }
}

pub type SharedField<const D: usize> = Arc<dyn FieldFunction<D>>;

/// Orders above this are treated as unbounded for analytic gallery entries.
pub const ANALYTIC_ORDER: usize = 16;

#[derive(Clone, Debug)]
pub struct Constant {
    pub value: f64,
}

impl<const D: usize> FieldFunction<D> for Constant {
    fn eval(&self, _x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        if order(alpha) == 0 {
            self.value
        } else {
            0.0
        }
    }
    fn k_max(&self) -> usize {
        ANALYTIC_ORDER
    }
    fn label(&self) -> String {
        format!("constant({})", self.value)
    }
}

/// `Σ c_γ x^γ` in the global monomial basis.
#[derive(Clone, Debug)]
pub struct Polynomial<const D: usize> {
    pub terms: Vec<(MultiIndex<D>, f64)>,
}

/// `∂^β x^γ` evaluated at `x`.
pub fn monomial_derivative<const D: usize>(
    x: &Point<D>,
    gamma: &MultiIndex<D>,
    beta: &MultiIndex<D>,
) -> f64 {
    if !leq(beta, gamma) {
        return 0.0;
    }
    let mut v = 1.0;
    for i in 0..D {
        let e = gamma[i] - beta[i];
        v *= factorial(gamma[i]) / factorial(e) * x[i].powi(e as i32);
    }
    v
}

impl<const D: usize> Polynomial<D> {
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(g, _)| order(g)).max().unwrap_or(0)
    }
}

impl<const D: usize> FieldFunction<D> for Polynomial<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        self.terms
            .iter()
            .map(|(g, c)| c * monomial_derivative(x, g, alpha))
            .sum()
    }
    fn k_max(&self) -> usize {
        ANALYTIC_ORDER
    }
    fn label(&self) -> String {
        format!("polynomial(deg {})", self.degree())
    }
}

/// `Π_i sin(ω_i x_i + φ_i)`.
#[derive(Clone, Debug)]
pub struct TrigProduct<const D: usize> {
    pub freq: [f64; D],
    pub phase: [f64; D],
}

impl<const D: usize> FieldFunction<D> for TrigProduct<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        (0..D)
            .map(|i| {
                let n = alpha[i];
                self.freq[i].powi(n as i32)
                    * (self.freq[i] * x[i] + self.phase[i] + n as f64 * std::f64::consts::FRAC_PI_2)
                        .sin()
            })
            .product()
    }
    fn k_max(&self) -> usize {
        ANALYTIC_ORDER
    }
    fn label(&self) -> String {
        "trig".into()
    }
}

/// `exp(a·x)`.
#[derive(Clone, Debug)]
pub struct Exponential<const D: usize> {
    pub rate: [f64; D],
}

impl<const D: usize> FieldFunction<D> for Exponential<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        let mut pre = 1.0;
        let mut arg = 0.0;
        for i in 0..D {
            pre *= self.rate[i].powi(alpha[i] as i32);
            arg += self.rate[i] * x[i];
        }
        pre * arg.exp()
    }
    fn k_max(&self) -> usize {
        ANALYTIC_ORDER
    }
    fn label(&self) -> String {
        "exp".into()
    }
}

/// `|x − x0|^a` with first derivatives (set to 0 at `x0`).
#[derive(Clone, Debug)]
pub struct RadialPower<const D: usize> {
    pub center: Point<D>,
    pub exponent: f64,
}

impl<const D: usize> FieldFunction<D> for RadialPower<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        let d: [f64; D] = std::array::from_fn(|i| x[i] - self.center[i]);
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        match order(alpha) {
            0 => r.powf(self.exponent),
            1 => {
                if r == 0.0 {
                    return 0.0;
                }
                let i = alpha.iter().position(|&v| v == 1).unwrap();
                self.exponent * r.powf(self.exponent - 2.0) * d[i]
            }
            n => panic!("radial power has derivatives up to order 1, asked for {n}"),
        }
    }
    fn k_max(&self) -> usize {
        1
    }
    fn label(&self) -> String {
        format!("cusp({})", self.exponent)
    }
}

/// `atan2(x − cx, y − cy)` in the plane: smooth off the ray below the
/// centre, where it jumps by `2π`.
#[derive(Clone, Debug)]
pub struct SlitAngle {
    pub center: [f64; 2],
}

impl FieldFunction<2> for SlitAngle {
    fn eval(&self, x: &Point<2>, alpha: &MultiIndex<2>) -> f64 {
        let u = x[0] - self.center[0];
        let v = x[1] - self.center[1];
        let r2 = u * u + v * v;
        match *alpha {
            [0, 0] => u.atan2(v),
            [1, 0] => v / r2,
            [0, 1] => -u / r2,
            a => panic!("slit angle has derivatives up to order 1, asked for {a:?}"),
        }
    }
    fn k_max(&self) -> usize {
        1
    }
    fn label(&self) -> String {
        "slit_angle".into()
    }
}

/// `1` right of the line `x = x0` and `0` left of it, times a quintic
/// fade in `y` from `1` (below `fade[0]`) to `0` (above `fade[1]`).
/// With `fade[1]` below the slit tip it jumps across the slit and is
/// `C²` everywhere else in the slit square.
#[derive(Clone, Debug)]
pub struct SlitJump {
    pub x0: f64,
    pub fade: [f64; 2],
}

impl SlitJump {
    fn profile(&self, y: f64, n: usize) -> f64 {
        let w = self.fade[1] - self.fade[0];
        let t = (y - self.fade[0]) / w;
        if !(0.0..1.0).contains(&t) {
            return if n == 0 && t < 0.0 { 1.0 } else { 0.0 };
        }
        match n {
            0 => 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t),
            _ => -30.0 * t * t * (1.0 - t) * (1.0 - t) / w,
        }
    }
}

impl FieldFunction<2> for SlitJump {
    fn eval(&self, x: &Point<2>, alpha: &MultiIndex<2>) -> f64 {
        if x[0] <= self.x0 {
            return 0.0;
        }
        match *alpha {
            [0, 0] => self.profile(x[1], 0),
            [1, 0] => 0.0,
            [0, 1] => self.profile(x[1], 1),
            a => panic!("slit jump has derivatives up to order 1, asked for {a:?}"),
        }
    }
    fn k_max(&self) -> usize {
        1
    }
    fn label(&self) -> String {
        "slit_jump".into()
    }
}

/// `Σ c_i f_i`.
#[derive(Clone)]
pub struct LinearCombination<const D: usize> {
    pub terms: Vec<(f64, SharedField<D>)>,
}

impl<const D: usize> FieldFunction<D> for LinearCombination<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.eval(x, alpha)).sum()
    }
    fn k_max(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, f)| f.k_max())
            .min()
            .unwrap_or(ANALYTIC_ORDER)
    }
    fn label(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(c, f)| format!("{c}*{}", f.label()))
            .collect();
        parts.join("+")
    }
}

/// `D^β f` as a field of its own.
#[derive(Clone)]
pub struct DerivativeField<const D: usize> {
    pub inner: SharedField<D>,
    pub beta: MultiIndex<D>,
}

impl<const D: usize> FieldFunction<D> for DerivativeField<D> {
    fn eval(&self, x: &Point<D>, alpha: &MultiIndex<D>) -> f64 {
        self.inner.eval(x, &add(alpha, &self.beta))
    }
    fn k_max(&self) -> usize {
        self.inner.k_max().saturating_sub(order(&self.beta))
    }
    fn label(&self) -> String {
        format!("D{:?}{}", self.beta, self.inner.label())
    }
}

fn zero() -> f64 {
    0.0
}

fn one() -> f64 {
    1.0
}

fn half_point() -> [f64; 2] {
    [0.5, 0.5]
}

fn half() -> f64 {
    0.5
}

fn slit_fade() -> [f64; 2] {
    [0.25, 0.45]
}

fn cusp_exponent() -> f64 {
    0.6
}

fn trig_freq() -> [f64; 2] {
    [2.0, 3.0]
}

fn trig_phase() -> [f64; 2] {
    [0.3, 1.2]
}

fn exp_rate() -> [f64; 2] {
    [0.7, -0.4]
}

/// Gallery descriptor, `{"kind": ..., params}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// Terms `[[γ1, γ2], c]` of `Σ c x^γ`.
    Polynomial { terms: Vec<([usize; 2], f64)> },
    Trig {
        #[serde(default = "trig_freq")]
        freq: [f64; 2],
        #[serde(default = "trig_phase")]
        phase: [f64; 2],
    },
    Exp {
        #[serde(default = "exp_rate")]
        rate: [f64; 2],
    },
    Cusp {
        #[serde(default = "half_point")]
        center: [f64; 2],
        #[serde(default = "cusp_exponent")]
        exponent: f64,
    },
    SlitAngle {
        #[serde(default = "half_point")]
        center: [f64; 2],
    },
    SlitJump {
        #[serde(default = "half")]
        x0: f64,
        #[serde(default = "slit_fade")]
        fade: [f64; 2],
    },
    Scaled {
        #[serde(default = "zero")]
        offset: f64,
        #[serde(default = "one")]
        factor: f64,
        inner: Box<FieldSpec>,
    },
}

impl FieldSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "constant" | "one" => FieldSpec::Constant { value: 1.0 },
            "trig" => FieldSpec::Trig {
                freq: trig_freq(),
                phase: trig_phase(),
            },
            "exp" => FieldSpec::Exp { rate: exp_rate() },
            "cusp" => FieldSpec::Cusp {
                center: half_point(),
                exponent: cusp_exponent(),
            },
            "slit_angle" => FieldSpec::SlitAngle {
                center: half_point(),
            },
            "slit_jump" => FieldSpec::SlitJump {
                x0: half(),
                fade: slit_fade(),
            },
            "linear" => FieldSpec::Polynomial {
                terms: vec![([1, 0], 1.0), ([0, 1], -0.5), ([0, 0], 0.25)],
            },
            "quadratic" => FieldSpec::Polynomial {
                terms: vec![([2, 0], 1.0), ([1, 1], -0.7), ([0, 2], 0.3), ([1, 0], 0.2)],
            },
            "cubic" => FieldSpec::Polynomial {
                terms: vec![
                    ([3, 0], 0.5),
                    ([1, 2], -1.0),
                    ([0, 3], 0.25),
                    ([0, 1], 1.0),
                    ([0, 0], -0.1),
                ],
            },
            other => return Err(Error::Config(format!("unknown field function `{other}`"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            FieldSpec::Constant { value } => format!("constant({value})"),
            FieldSpec::Polynomial { terms } => {
                let deg = terms.iter().map(|(g, _)| g[0] + g[1]).max().unwrap_or(0);
                format!("polynomial{deg}")
            }
            FieldSpec::Trig { .. } => "trig".into(),
            FieldSpec::Exp { .. } => "exp".into(),
            FieldSpec::Cusp { exponent, .. } => format!("cusp({exponent})"),
            FieldSpec::SlitAngle { .. } => "slit_angle".into(),
            FieldSpec::SlitJump { .. } => "slit_jump".into(),
            FieldSpec::Scaled {
                offset,
                factor,
                inner,
            } => format!("{factor}*{}+{offset}", inner.name()),
        }
    }
}

pub fn make_field(spec: &FieldSpec) -> Result<SharedField<2>> {
    Ok(match spec {
        FieldSpec::Constant { value } => Arc::new(Constant { value: *value }),
        FieldSpec::Polynomial { terms } => Arc::new(Polynomial {
            terms: terms.clone(),
        }),
        FieldSpec::Trig { freq, phase } => Arc::new(TrigProduct {
            freq: *freq,
            phase: *phase,
        }),
        FieldSpec::Exp { rate } => Arc::new(Exponential { rate: *rate }),
        FieldSpec::Cusp { center, exponent } => {
            if !(*exponent > 0.0) {
                return Err(Error::param(
                    "cusp.exponent",
                    format!("{exponent} must be positive"),
                ));
            }
            Arc::new(RadialPower {
                center: *center,
                exponent: *exponent,
            })
        }
        FieldSpec::SlitAngle { center } => Arc::new(SlitAngle { center: *center }),
        FieldSpec::SlitJump { x0, fade } => {
            if !(fade[0] < fade[1]) {
                return Err(Error::param("SlitJump.fade", "needs fade[0] < fade[1]"));
            }
            Arc::new(SlitJump { x0: *x0, fade: *fade })
        }
        FieldSpec::Scaled {
            offset,
            factor,
            inner,
        } => Arc::new(LinearCombination {
            terms: vec![
                (*factor, make_field(inner)?),
                (*offset, Arc::new(Constant { value: 1.0 })),
            ],
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(of_order::<2>(2), vec![[2, 0], [1, 1], [0, 2]]);
        assert_eq!(graded::<2>(3).len(), 10);
        assert_eq!(graded::<3>(2).len(), 10);
        assert_eq!(graded::<1>(4), vec![[0], [1], [2], [3], [4]]);
        assert_eq!(mi_binomial(&[3, 2], &[1, 1]), 6.0);
        assert_eq!(mi_binomial(&[1, 2], &[2, 0]), 0.0);
        assert_eq!(mi_factorial(&[3, 2]), 12.0);
    }

    /// Central differences of order `|α|` of the value map, compared with the
    /// hand-coded derivatives.
    fn fd_check(f: &dyn FieldFunction<2>, x: [f64; 2], k: usize) {
        let h = 1e-4;
        for a in graded::<2>(k).into_iter().filter(|a| order(a) >= 1) {
            // differentiate one order at a time from the exact lower derivative
            let i = if a[0] > 0 { 0 } else { 1 };
            let mut lower = a;
            lower[i] -= 1;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (f.eval(&xp, &lower) - f.eval(&xm, &lower)) / (2.0 * h);
            let exact = f.eval(&x, &a);
            assert!(
                (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                "{} α={a:?}: fd {fd} vs {exact}",
                f.label()
            );
        }
    }

    #[test]
    fn gallery_derivatives_match_finite_differences() {
        for name in ["trig", "exp", "cusp", "slit_angle", "slit_jump", "quadratic", "cubic"] {
            let f = make_field(&FieldSpec::from_name(name).unwrap()).unwrap();
            let k = f.k_max().min(4);
            for x in [[0.2, 0.3], [0.71, 0.13], [0.9, 0.8], [0.6, 0.33]] {
                fd_check(f.as_ref(), x, k);
            }
        }
    }

    #[test]
    fn slit_angle_jumps_across_the_ray() {
        let f = SlitAngle { center: [0.5, 0.5] };
        let l = f.value(&[0.5 - 1e-9, 0.2]);
        let r = f.value(&[0.5 + 1e-9, 0.2]);
        assert!(((l - r).abs() - 2.0 * std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn slit_jump_is_one_sided_and_fades_below_the_tip() {
        let f = make_field(&FieldSpec::from_name("slit_jump").unwrap()).unwrap();
        assert_eq!(f.value(&[0.5 + 1e-9, 0.1]), 1.0);
        assert_eq!(f.value(&[0.5 - 1e-9, 0.1]), 0.0);
        assert_eq!(f.value(&[0.7, 0.45]), 0.0);
        assert!((f.value(&[0.7, 0.35]) - 0.5).abs() < 1e-15);
        // continuous across x = x0 above the fade
        for y in [0.46, 0.5, 0.9] {
            assert_eq!(f.value(&[0.5 + 1e-9, y]), f.value(&[0.5 - 1e-9, y]));
        }
    }

    #[test]
    fn derivative_field_shifts_the_order() {
        let f: SharedField<2> = make_field(&FieldSpec::from_name("cubic").unwrap()).unwrap();
        let g = DerivativeField {
            inner: f.clone(),
            beta: [1, 0],
        };
        let x = [0.3, -0.2];
        assert_eq!(g.eval(&x, &[0, 1]), f.eval(&x, &[1, 1]));
        assert_eq!(g.k_max(), ANALYTIC_ORDER - 1);
    }

    #[test]
    fn specs_parse() {
        let s: FieldSpec = serde_json::from_str(r#"{"kind":"cusp","exponent":0.6}"#).unwrap();
        assert_eq!(s, FieldSpec::from_name("cusp").unwrap());
        assert!(serde_json::from_str::<FieldSpec>(r#"{"kind":"trig","frq":[1,2]}"#).is_err());
        assert!(FieldSpec::from_name("nope").is_err());
    }
}
