//! Dyadic cubes, axis-aligned boxes and the long distance between cubes.
//!
//! Cubes are stored as `(generation, integer index)` so that adjacency and
//! containment are decided in integer arithmetic. Floats only appear when a
//! cube is turned into a box for quadrature or distance computations.

use std::cmp::Ordering;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Point<const D: usize> = [f64; D];

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<const D: usize> {
    pub lo: Point<D>,
    pub hi: Point<D>,
}

impl<const D: usize> Aabb<D> {
    pub fn new(lo: Point<D>, hi: Point<D>) -> Self {
        Self { lo, hi }
    }

    pub fn center(&self) -> Point<D> {
        std::array::from_fn(|i| 0.5 * (self.lo[i] + self.hi[i]))
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn max_extent(&self) -> f64 {
        (0..D).map(|i| self.extent(i)).fold(0.0, f64::max)
    }

    pub fn volume(&self) -> f64 {
        (0..D).map(|i| self.extent(i).max(0.0)).product()
    }

    /// Box with the same center scaled by `factor`.
    pub fn dilate(&self, factor: f64) -> Self {
        let c = self.center();
        Self {
            lo: std::array::from_fn(|i| c[i] - 0.5 * factor * self.extent(i)),
            hi: std::array::from_fn(|i| c[i] + 0.5 * factor * self.extent(i)),
        }
    }

    pub fn contains_point(&self, x: &Point<D>) -> bool {
        (0..D).all(|i| self.lo[i] <= x[i] && x[i] <= self.hi[i])
    }

    /// Open-box membership.
    pub fn contains_point_strict(&self, x: &Point<D>) -> bool {
        (0..D).all(|i| self.lo[i] < x[i] && x[i] < self.hi[i])
    }

    pub fn contains_box(&self, other: &Aabb<D>) -> bool {
        (0..D).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn intersects(&self, other: &Aabb<D>) -> bool {
        (0..D).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    pub fn intersection(&self, other: &Aabb<D>) -> Option<Aabb<D>> {
        let lo: Point<D> = std::array::from_fn(|i| self.lo[i].max(other.lo[i]));
        let hi: Point<D> = std::array::from_fn(|i| self.hi[i].min(other.hi[i]));
        (0..D).all(|i| lo[i] < hi[i]).then_some(Aabb { lo, hi })
    }

    /// Euclidean distance from a point to the box (0 inside).
    pub fn dist_point(&self, x: &Point<D>) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            let d = (self.lo[i] - x[i]).max(0.0).max(x[i] - self.hi[i]);
            s += d * d;
        }
        s.sqrt()
    }

    /// Largest distance from `x` to a point of the box (attained at a corner).
    pub fn max_dist_point(&self, x: &Point<D>) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            let d = (x[i] - self.lo[i]).abs().max((self.hi[i] - x[i]).abs());
            s += d * d;
        }
        s.sqrt()
    }

    /// Euclidean set distance between two closed boxes.
    pub fn dist_box(&self, other: &Aabb<D>) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            let d = (other.lo[i] - self.hi[i])
                .max(self.lo[i] - other.hi[i])
                .max(0.0);
            s += d * d;
        }
        s.sqrt()
    }

    pub fn corners(&self) -> impl Iterator<Item = Point<D>> + '_ {
        (0..(1usize << D)).map(move |mask| {
            std::array::from_fn(|i| {
                if mask >> i & 1 == 1 {
                    self.hi[i]
                } else {
                    self.lo[i]
                }
            })
        })
    }
}

/// Dyadic cube of side `2^-generation` with lower corner `index * 2^-generation`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicCube<const D: usize> {
    pub generation: i32,
    pub index: [i64; D],
}

/// Exact `2^-generation`.
pub fn dyadic_side(generation: i32) -> f64 {
    (-(generation as f64)).exp2()
}

impl<const D: usize> DyadicCube<D> {
    pub fn new(generation: i32, index: [i64; D]) -> Self {
        Self { generation, index }
    }

    pub fn side(&self) -> f64 {
        dyadic_side(self.generation)
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(D as i32)
    }

    pub fn lower(&self) -> Point<D> {
        let l = self.side();
        std::array::from_fn(|i| self.index[i] as f64 * l)
    }

    pub fn center(&self) -> Point<D> {
        let l = self.side();
        std::array::from_fn(|i| (self.index[i] as f64 + 0.5) * l)
    }

    pub fn bbox(&self) -> Aabb<D> {
        let l = self.side();
        Aabb {
            lo: std::array::from_fn(|i| self.index[i] as f64 * l),
            hi: std::array::from_fn(|i| (self.index[i] + 1) as f64 * l),
        }
    }

    /// The cube of the given generation containing `x` (half-open cells).
    pub fn containing(generation: i32, x: &Point<D>) -> Self {
        let inv = dyadic_side(-generation);
        Self {
            generation,
            index: std::array::from_fn(|i| (x[i] * inv).floor() as i64),
        }
    }

    pub fn parent(&self) -> Self {
        Self {
            generation: self.generation - 1,
            index: self.index.map(|v| v.div_euclid(2)),
        }
    }

    pub fn children(&self) -> impl Iterator<Item = Self> + '_ {
        (0..(1usize << D)).map(move |mask| Self {
            generation: self.generation + 1,
            index: std::array::from_fn(|i| 2 * self.index[i] + ((mask >> i) & 1) as i64),
        })
    }

    /// Integer corner coordinates `[lo, hi]` at a finer (or equal) generation.
    fn integer_span(&self, generation: i32) -> ([i64; D], [i64; D]) {
        debug_assert!(generation >= self.generation);
        let shift = (generation - self.generation) as u32;
        let lo = self.index.map(|v| v << shift);
        let hi = self.index.map(|v| (v + 1) << shift);
        (lo, hi)
    }

    /// Is `self` contained in (or equal to) `other`?
    pub fn is_within(&self, other: &Self) -> bool {
        if self.generation < other.generation {
            return false;
        }
        let shift = (self.generation - other.generation) as u32;
        (0..D).all(|i| self.index[i] >> shift == other.index[i])
    }
}

impl<const D: usize> PartialOrd for DyadicCube<D> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic by index, then by generation; this is the tie-breaking
/// order used throughout the crate.
impl<const D: usize> Ord for DyadicCube<D> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.index
            .cmp(&other.index)
            .then(self.generation.cmp(&other.generation))
    }
}

impl<const D: usize> fmt::Display for DyadicCube<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(j={}, idx={:?})", self.generation, self.index)
    }
}

#[derive(Serialize, Deserialize)]
struct CubeRepr {
    j: i32,
    idx: Vec<i64>,
}

impl<const D: usize> Serialize for DyadicCube<D> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CubeRepr {
            j: self.generation,
            idx: self.index.to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de, const D: usize> Deserialize<'de> for DyadicCube<D> {
    fn deserialize<De: Deserializer<'de>>(deserializer: De) -> Result<Self, De::Error> {
        let repr = CubeRepr::deserialize(deserializer)?;
        let index: [i64; D] = repr.idx.try_into().map_err(|v: Vec<i64>| {
            De::Error::custom(format!("expected {D} indices, got {}", v.len()))
        })?;
        Ok(Self {
            generation: repr.j,
            index,
        })
    }
}

/// Box of `λQ`: same center as `q`, side `λ ℓ(q)`.
pub fn cube_box<const D: usize>(q: &DyadicCube<D>, lambda: f64) -> Aabb<D> {
    assert!(lambda > 0.0, "dilation factor must be positive");
    q.bbox().dilate(lambda)
}

/// Convention used for the long distance `D(Q, S)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongDistance {
    /// `ℓ(Q) + dist(Q, S) + ℓ(S)`.
    #[default]
    Standard,
    /// Distance between centers; only used to check that conclusions do not
    /// depend on the convention.
    Centers,
}

impl LongDistance {
    pub fn eval<const D: usize>(self, q: &DyadicCube<D>, s: &DyadicCube<D>) -> f64 {
        match self {
            LongDistance::Standard => long_distance(q, s),
            LongDistance::Centers => {
                let (a, b) = (q.center(), s.center());
                (0..D).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
            }
        }
    }
}

pub fn long_distance<const D: usize>(q: &DyadicCube<D>, s: &DyadicCube<D>) -> f64 {
    q.side() + q.bbox().dist_box(&s.bbox()) + s.side()
}

/// Closed boxes intersect (shared faces, edges and corners count).
pub fn neighbors<const D: usize>(q: &DyadicCube<D>, s: &DyadicCube<D>) -> bool {
    let g = q.generation.max(s.generation);
    let (qlo, qhi) = q.integer_span(g);
    let (slo, shi) = s.integer_span(g);
    (0..D).all(|i| qlo[i] <= shi[i] && slo[i] <= qhi[i])
}
