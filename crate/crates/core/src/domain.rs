//! Bounded domains given by membership and distance-to-boundary oracles,
//! plus the gallery used in the experiments.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point};

pub trait DomainOracle<const D: usize>: Send + Sync {
    /// Membership in the open set.
    fn contains(&self, x: &Point<D>) -> bool;

    /// `dist(x, ∂Ω)` for any point.
    fn boundary_distance(&self, x: &Point<D>) -> f64;

    /// Set distance from a closed box to `∂Ω`; zero when the box meets the boundary.
    fn box_boundary_distance(&self, b: &Aabb<D>) -> f64;

    fn bounding_box(&self) -> Aabb<D>;

    fn label(&self) -> String;

    /// Lebesgue measure of the domain.
    fn volume(&self) -> f64;
}

/// Open axis-aligned box.
#[derive(Clone, Debug)]
pub struct BoxDomain<const D: usize> {
    pub bounds: Aabb<D>,
}

impl<const D: usize> BoxDomain<D> {
    pub fn new(bounds: Aabb<D>) -> Result<Self> {
        if (0..D).any(|i| !(bounds.extent(i) > 0.0)) {
            return Err(Error::DegenerateDomain(format!(
                "box {bounds:?} has empty interior"
            )));
        }
        Ok(Self { bounds })
    }

    pub fn unit() -> Self {
        Self {
            bounds: Aabb::new([0.0; D], [1.0; D]),
        }
    }
}

impl<const D: usize> DomainOracle<D> for BoxDomain<D> {
    fn contains(&self, x: &Point<D>) -> bool {
        self.bounds.contains_point_strict(x)
    }

    fn boundary_distance(&self, x: &Point<D>) -> f64 {
        if self.bounds.contains_point(x) {
            (0..D)
                .map(|i| (x[i] - self.bounds.lo[i]).min(self.bounds.hi[i] - x[i]))
                .fold(f64::INFINITY, f64::min)
        } else {
            self.bounds.dist_point(x)
        }
    }

    fn box_boundary_distance(&self, b: &Aabb<D>) -> f64 {
        let o = &self.bounds;
        if (0..D).all(|i| o.lo[i] < b.lo[i] && b.hi[i] < o.hi[i]) {
            (0..D)
                .map(|i| (b.lo[i] - o.lo[i]).min(o.hi[i] - b.hi[i]))
                .fold(f64::INFINITY, f64::min)
        } else if !o.intersects(b) {
            o.dist_box(b)
        } else {
            0.0
        }
    }

    fn bounding_box(&self) -> Aabb<D> {
        self.bounds
    }

    fn label(&self) -> String {
        if D == 1 {
            "interval".into()
        } else {
            "square".into()
        }
    }

    fn volume(&self) -> f64 {
        self.bounds.volume()
    }
}

/// Open Euclidean ball.
#[derive(Clone, Debug)]
pub struct BallDomain<const D: usize> {
    pub center: Point<D>,
    pub radius: f64,
}

impl<const D: usize> BallDomain<D> {
    pub fn new(center: Point<D>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::DegenerateDomain(format!(
                "radius {radius} must be positive"
            )));
        }
        Ok(Self { center, radius })
    }
}

fn norm<const D: usize>(a: &Point<D>, b: &Point<D>) -> f64 {
    (0..D).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

impl<const D: usize> DomainOracle<D> for BallDomain<D> {
    fn contains(&self, x: &Point<D>) -> bool {
        norm(x, &self.center) < self.radius
    }

    fn boundary_distance(&self, x: &Point<D>) -> f64 {
        (norm(x, &self.center) - self.radius).abs()
    }

    fn box_boundary_distance(&self, b: &Aabb<D>) -> f64 {
        let far = b.max_dist_point(&self.center);
        let near = b.dist_point(&self.center);
        if far < self.radius {
            self.radius - far
        } else if near > self.radius {
            near - self.radius
        } else {
            0.0
        }
    }

    fn bounding_box(&self) -> Aabb<D> {
        Aabb::new(
            self.center.map(|c| c - self.radius),
            self.center.map(|c| c + self.radius),
        )
    }

    fn label(&self) -> String {
        "disk".into()
    }

    fn volume(&self) -> f64 {
        // ω_d r^d via the recursion ω_d = 2π/d · ω_{d-2}
        let mut omega = if D % 2 == 0 { 1.0 } else { 2.0 };
        let mut k = if D % 2 == 0 { 2 } else { 3 };
        while k <= D {
            omega *= 2.0 * PI / k as f64;
            k += 2;
        }
        omega * self.radius.powi(D as i32)
    }
}

type P2 = [f64; 2];

fn sub(a: P2, b: P2) -> P2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: P2, b: P2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn point_segment_distance(x: P2, a: P2, b: P2) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(x, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = sub(x, c);
    dot(d, d).sqrt()
}

/// Liang–Barsky clip test of the closed segment against the closed box.
fn segment_hits_box(a: P2, b: P2, bx: &Aabb<2>) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    let d = sub(b, a);
    for i in 0..2 {
        for (p, q) in [(-d[i], a[i] - bx.lo[i]), (d[i], bx.hi[i] - a[i])] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
    }
    true
}

fn segment_box_distance(a: P2, b: P2, bx: &Aabb<2>) -> f64 {
    if segment_hits_box(a, b, bx) {
        return 0.0;
    }
    // disjoint convex sets in the plane: the gap is realized at a vertex of one of them
    let mut best = bx.dist_point(&a).min(bx.dist_point(&b));
    for c in bx.corners() {
        best = best.min(point_segment_distance(c, a, b));
    }
    best
}

/// Simple polygon, optionally with slits (segments removed from the interior).
/// Self-intersection of the outer ring is not checked.
#[derive(Clone, Debug)]
pub struct PolygonDomain {
    label: String,
    outer: Vec<P2>,
    slits: Vec<(P2, P2)>,
    segments: Vec<(P2, P2)>,
    bbox: Aabb<2>,
    area: f64,
}

impl PolygonDomain {
    pub fn new(label: impl Into<String>, outer: Vec<P2>, slits: Vec<(P2, P2)>) -> Result<Self> {
        let label = label.into();
        if outer.len() < 3 {
            return Err(Error::DegenerateDomain(format!(
                "{label}: polygon needs at least 3 vertices, got {}",
                outer.len()
            )));
        }
        let n = outer.len();
        let mut twice_area = 0.0;
        for i in 0..n {
            let (a, b) = (outer[i], outer[(i + 1) % n]);
            twice_area += a[0] * b[1] - b[0] * a[1];
        }
        let area = 0.5 * twice_area.abs();
        if !(area > 0.0) || !area.is_finite() {
            return Err(Error::DegenerateDomain(format!(
                "{label}: polygon has zero area"
            )));
        }
        let mut segments: Vec<(P2, P2)> = (0..n).map(|i| (outer[i], outer[(i + 1) % n])).collect();
        segments.extend(slits.iter().copied());
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &outer {
            for i in 0..2 {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        Ok(Self {
            label,
            outer,
            slits,
            segments,
            bbox: Aabb::new(lo, hi),
            area,
        })
    }

    pub fn vertices(&self) -> &[P2] {
        &self.outer
    }

    pub fn slits(&self) -> &[(P2, P2)] {
        &self.slits
    }

    fn inside_ring(&self, x: P2) -> bool {
        let mut inside = false;
        let n = self.outer.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.outer[i], self.outer[j]);
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let t = (x[1] - a[1]) / (b[1] - a[1]);
                if x[0] < a[0] + t * (b[0] - a[0]) {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

impl DomainOracle<2> for PolygonDomain {
    fn contains(&self, x: &P2) -> bool {
        self.inside_ring(*x) && self.boundary_distance(x) > 0.0
    }

    fn boundary_distance(&self, x: &P2) -> f64 {
        self.segments
            .iter()
            .map(|&(a, b)| point_segment_distance(*x, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    fn box_boundary_distance(&self, b: &Aabb<2>) -> f64 {
        let mut best = f64::INFINITY;
        for &(p, q) in &self.segments {
            // cheap reject: the segment's own box is already farther than the best
            let sb = Aabb::new(
                [p[0].min(q[0]), p[1].min(q[1])],
                [p[0].max(q[0]), p[1].max(q[1])],
            );
            if sb.dist_box(b) >= best {
                continue;
            }
            best = best.min(segment_box_distance(p, q, b));
            if best == 0.0 {
                break;
            }
        }
        best
    }

    fn bounding_box(&self) -> Aabb<2> {
        self.bbox
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn volume(&self) -> f64 {
        self.area
    }
}

/// Koch snowflake polygon after `iteration` refinements of an equilateral
/// triangle with circumradius 0.5 centred at (0.5, 0.5).
pub fn koch_snowflake(iteration: u32) -> Result<PolygonDomain> {
    if iteration > 7 {
        return Err(Error::param(
            "snowflake.iteration",
            format!("{iteration} exceeds 7"),
        ));
    }
    let c = [0.5, 0.5];
    let r = 0.5;
    let mut verts: Vec<P2> = (0..3)
        .map(|k| {
            let t = PI / 2.0 + 2.0 * PI * k as f64 / 3.0;
            [c[0] + r * t.cos(), c[1] + r * t.sin()]
        })
        .collect();
    for _ in 0..iteration {
        let n = verts.len();
        let mut next = Vec::with_capacity(4 * n);
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let d = [(b[0] - a[0]) / 3.0, (b[1] - a[1]) / 3.0];
            let p1 = [a[0] + d[0], a[1] + d[1]];
            let p3 = [a[0] + 2.0 * d[0], a[1] + 2.0 * d[1]];
            // counter-clockwise ring: outward normal is to the right of the edge
            let h = 3f64.sqrt() / 2.0;
            let apex = [p1[0] + 0.5 * d[0] + h * d[1], p1[1] + 0.5 * d[1] - h * d[0]];
            next.extend([a, p1, apex, p3]);
        }
        verts = next;
    }
    PolygonDomain::new(format!("snowflake{iteration}"), verts, Vec::new())
}

pub fn l_shape() -> PolygonDomain {
    PolygonDomain::new(
        "lshape",
        vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 0.5],
            [0.5, 0.5],
            [0.5, 1.0],
            [0.0, 1.0],
        ],
        Vec::new(),
    )
    .expect("static polygon")
}

/// Unit square minus the segment {0.5} × [0, 0.5].
pub fn slit_square() -> PolygonDomain {
    PolygonDomain::new(
        "slit",
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![([0.5, 0.0], [0.5, 0.5])],
    )
    .expect("static polygon")
}

/// Unit square with an outward spike along y = 0.5 reaching (2, 0.5); the
/// half-width at distance `s` from the square is `0.25·(1 − s)^exponent`.
pub fn power_cusp(exponent: f64, samples: usize) -> Result<PolygonDomain> {
    if !(exponent > 1.0) {
        return Err(Error::param(
            "cusp.exponent",
            format!("{exponent} must exceed 1"),
        ));
    }
    if samples < 4 {
        return Err(Error::param("cusp.samples", "need at least 4"));
    }
    // parameters clustered towards the tip, where the width changes fastest relative to itself
    let ts: Vec<f64> = (0..=samples)
        .map(|i| {
            let u = i as f64 / samples as f64;
            1.0 - (1.0 - u).powi(2)
        })
        .collect();
    let width = |s: f64| 0.25 * (1.0 - s).max(0.0).powf(exponent);
    let mut verts: Vec<P2> = vec![[0.0, 0.0], [1.0, 0.0]];
    for &s in &ts[..ts.len() - 1] {
        verts.push([1.0 + s, 0.5 - width(s)]);
    }
    verts.push([2.0, 0.5]);
    for &s in ts[..ts.len() - 1].iter().rev() {
        verts.push([1.0 + s, 0.5 + width(s)]);
    }
    verts.extend([[1.0, 1.0], [0.0, 1.0]]);
    verts.dedup();
    PolygonDomain::new("cusp", verts, Vec::new())
}

fn default_center() -> [f64; 2] {
    [0.0, 0.0]
}

fn one() -> f64 {
    1.0
}

fn default_cusp_exponent() -> f64 {
    2.0
}

fn default_cusp_samples() -> usize {
    64
}

fn unit_lo() -> [f64; 2] {
    [0.0, 0.0]
}

fn unit_hi() -> [f64; 2] {
    [1.0, 1.0]
}

/// Gallery descriptor, `{"kind": ..., params}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Square {
        #[serde(default = "unit_lo")]
        lo: [f64; 2],
        #[serde(default = "unit_hi")]
        hi: [f64; 2],
    },
    Disk {
        #[serde(default = "default_center")]
        center: [f64; 2],
        #[serde(default = "one")]
        radius: f64,
    },
    Lshape,
    Snowflake {
        iteration: u32,
    },
    Slit,
    Cusp {
        #[serde(default = "default_cusp_exponent")]
        exponent: f64,
        #[serde(default = "default_cusp_samples")]
        samples: usize,
    },
}

impl DomainSpec {
    pub fn unit_square() -> Self {
        DomainSpec::Square {
            lo: unit_lo(),
            hi: unit_hi(),
        }
    }

    /// Descriptor from a bare gallery name with default parameters
    /// (`snowflake` defaults to iteration 3).
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "square" => Self::unit_square(),
            "disk" => DomainSpec::Disk {
                center: default_center(),
                radius: 1.0,
            },
            "lshape" => DomainSpec::Lshape,
            "snowflake" => DomainSpec::Snowflake { iteration: 3 },
            "slit" => DomainSpec::Slit,
            "cusp" => DomainSpec::Cusp {
                exponent: default_cusp_exponent(),
                samples: default_cusp_samples(),
            },
            other => return Err(Error::UnknownDomain(other.to_string())),
        })
    }

    /// Short name used in tables; includes the snowflake iteration.
    pub fn name(&self) -> String {
        match self {
            DomainSpec::Square { .. } => "square".into(),
            DomainSpec::Disk { .. } => "disk".into(),
            DomainSpec::Lshape => "lshape".into(),
            DomainSpec::Snowflake { iteration } => format!("snowflake{iteration}"),
            DomainSpec::Slit => "slit".into(),
            DomainSpec::Cusp { .. } => "cusp".into(),
        }
    }
}

pub type SharedDomain = Arc<dyn DomainOracle<2>>;

pub fn make_domain(spec: &DomainSpec) -> Result<SharedDomain> {
    Ok(match spec {
        DomainSpec::Square { lo, hi } => Arc::new(BoxDomain::new(Aabb::new(*lo, *hi))?),
        DomainSpec::Disk { center, radius } => Arc::new(BallDomain::new(*center, *radius)?),
        DomainSpec::Lshape => Arc::new(l_shape()),
        DomainSpec::Snowflake { iteration } => Arc::new(koch_snowflake(*iteration)?),
        DomainSpec::Slit => Arc::new(slit_square()),
        DomainSpec::Cusp { exponent, samples } => Arc::new(power_cusp(*exponent, *samples)?),
    })
}
