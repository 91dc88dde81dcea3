//! Whitney coverings of a domain and of its exterior, the near-boundary
//! subfamilies W3 ⊂ W3′, W4, and the symmetrization Q ↦ Q*.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainOracle;
use crate::error::{Error, Result};
use crate::geometry::{cube_box, dyadic_side, long_distance, neighbors, Aabb, DyadicCube, Point};

pub const EXTERIOR_BOX_FACTOR: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhitneyParams {
    pub c_w: f64,
    pub max_generation: i32,
    pub ell0: f64,
}

impl Default for WhitneyParams {
    fn default() -> Self {
        Self {
            c_w: 1.0,
            max_generation: 6,
            ell0: 1.0,
        }
    }
}

impl WhitneyParams {
    pub fn with_depth(max_generation: i32) -> Self {
        Self {
            max_generation,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_w >= 1.0) {
            return Err(Error::param(
                "WhitneyParams.c_w",
                format!("{} < 1", self.c_w),
            ));
        }
        if !(self.ell0 > 0.0) {
            return Err(Error::param(
                "WhitneyParams.ell0",
                format!("{} must be positive", self.ell0),
            ));
        }
        if !(0..=24).contains(&self.max_generation) {
            return Err(Error::param(
                "WhitneyParams.max_generation",
                format!("{} outside 0..=24", self.max_generation),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Interior,
    Exterior,
}

/// Cubes of one generation, in index order, for window queries.
#[derive(Clone, Debug)]
struct Level {
    generation: i32,
    ids: Vec<usize>,
}

/// Finite set of dyadic cubes with lookup, adjacency and window queries.
#[derive(Clone, Debug)]
pub struct CubeSet<const D: usize> {
    cubes: Vec<DyadicCube<D>>,
    lookup: HashMap<DyadicCube<D>, usize>,
    levels: Vec<Level>,
    adjacency: Vec<Vec<usize>>,
}

impl<const D: usize> CubeSet<D> {
    pub fn new(mut cubes: Vec<DyadicCube<D>>) -> Self {
        cubes.sort();
        cubes.dedup();
        let lookup = cubes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut by_gen: HashMap<i32, Vec<usize>> = HashMap::new();
        for (i, c) in cubes.iter().enumerate() {
            by_gen.entry(c.generation).or_default().push(i);
        }
        let mut levels: Vec<Level> = by_gen
            .into_iter()
            .map(|(generation, ids)| Level { generation, ids })
            .collect();
        levels.sort_by_key(|l| l.generation);
        let mut set = Self {
            cubes,
            lookup,
            levels,
            adjacency: Vec::new(),
        };
        set.adjacency = (0..set.cubes.len())
            .map(|i| {
                let q = set.cubes[i];
                let mut adj: Vec<usize> = set
                    .meeting_box(&q.bbox())
                    .into_iter()
                    .filter(|&j| j != i && neighbors(&q, &set.cubes[j]))
                    .collect();
                adj.sort_unstable();
                adj
            })
            .collect();
        set
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn cubes(&self) -> &[DyadicCube<D>] {
        &self.cubes
    }

    pub fn get(&self, i: usize) -> DyadicCube<D> {
        self.cubes[i]
    }

    pub fn index_of(&self, c: &DyadicCube<D>) -> Option<usize> {
        self.lookup.get(c).copied()
    }

    pub fn contains(&self, c: &DyadicCube<D>) -> bool {
        self.lookup.contains_key(c)
    }

    /// Neighbours (closed-box contact), excluding the cube itself, ascending.
    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn generations(&self) -> impl Iterator<Item = i32> + '_ {
        self.levels.iter().map(|l| l.generation)
    }

    pub fn total_volume(&self) -> f64 {
        self.cubes.iter().map(|c| c.volume()).sum()
    }

    /// Ids of cubes of one level with index in the closed window `[lo, hi]`.
    fn window(&self, level: &Level, lo: &[i64; D], hi: &[i64; D], out: &mut Vec<usize>) {
        let ids = &level.ids;
        let start = ids.partition_point(|&i| self.cubes[i].index[0] < lo[0]);
        for &i in &ids[start..] {
            let idx = &self.cubes[i].index;
            if idx[0] > hi[0] {
                break;
            }
            if (1..D).all(|a| lo[a] <= idx[a] && idx[a] <= hi[a]) {
                out.push(i);
            }
        }
    }

    /// Ids of cubes whose closed box meets the closed box `b`, ascending.
    pub fn meeting_box(&self, b: &Aabb<D>) -> Vec<usize> {
        let mut out = Vec::new();
        for level in &self.levels {
            let inv = dyadic_side(-level.generation);
            let lo: [i64; D] = std::array::from_fn(|a| (b.lo[a] * inv).floor() as i64 - 1);
            let hi: [i64; D] = std::array::from_fn(|a| (b.hi[a] * inv).floor() as i64);
            let before = out.len();
            self.window(level, &lo, &hi, &mut out);
            let mut k = before;
            while k < out.len() {
                if self.cubes[out[k]].bbox().intersects(b) {
                    k += 1;
                } else {
                    out.swap_remove(k);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Ids of cubes `Q` with `x ∈ λQ` (closed), ascending.
    pub fn containing_dilated(&self, x: &Point<D>, lambda: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for level in &self.levels {
            let side = dyadic_side(level.generation);
            let margin = 0.5 * (lambda - 1.0).max(0.0) * side;
            let lo: [i64; D] = std::array::from_fn(|a| ((x[a] - margin) / side).floor() as i64 - 1);
            let hi: [i64; D] = std::array::from_fn(|a| ((x[a] + margin) / side).floor() as i64);
            let before = out.len();
            self.window(level, &lo, &hi, &mut out);
            let mut k = before;
            while k < out.len() {
                if self.cubes[out[k]].bbox().dilate(lambda).contains_point(x) {
                    k += 1;
                } else {
                    out.swap_remove(k);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Ids of cubes whose closed box lies inside the closed box `b`, ascending.
    pub fn inside_box(&self, b: &Aabb<D>) -> Vec<usize> {
        let mut v = self.meeting_box(b);
        v.retain(|&i| b.contains_box(&self.cubes[i].bbox()));
        v
    }

    /// Cube containing `x` (half-open cells), if any.
    pub fn locate(&self, x: &Point<D>) -> Option<usize> {
        self.levels.iter().find_map(|l| {
            let c = DyadicCube::containing(l.generation, x);
            self.index_of(&c)
        })
    }

    /// Connected components of the adjacency graph: (component id per cube, count).
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut comp = vec![usize::MAX; self.len()];
        let mut count = 0;
        for s in 0..self.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = count;
            while let Some(u) = stack.pop() {
                for &v in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Largest number of boxes `λQ` containing a common sample point.
    /// Samples are cube centres and corners.
    pub fn superposition(&self, lambda: f64) -> usize {
        let mut best = 0;
        for c in &self.cubes {
            let b = c.bbox();
            for x in std::iter::once(b.center()).chain(b.corners()) {
                let mut n = 0;
                for level in &self.levels {
                    let l = dyadic_side(level.generation);
                    let reach = 0.5 * lambda * l;
                    let inv = 1.0 / l;
                    let lo: [i64; D] =
                        std::array::from_fn(|a| ((x[a] - reach) * inv).floor() as i64 - 1);
                    let hi: [i64; D] =
                        std::array::from_fn(|a| ((x[a] + reach) * inv).floor() as i64);
                    let mut ids = Vec::new();
                    self.window(level, &lo, &hi, &mut ids);
                    n += ids
                        .into_iter()
                        .filter(|&i| cube_box(&self.cubes[i], lambda).contains_point(&x))
                        .count();
                }
                best = best.max(n);
            }
        }
        best
    }
}

/// Output of the recursive Whitney refinement.
#[derive(Clone, Debug)]
pub struct WhitneyCover<const D: usize> {
    pub side: Side,
    pub cubes: Vec<DyadicCube<D>>,
    /// Cells at the depth cap that were neither kept nor discarded.
    pub leftovers: Vec<DyadicCube<D>>,
    pub root_generation: i32,
    /// Union of the root cells.
    pub region: Aabb<D>,
    /// Measure of the open set being covered, restricted to `region`.
    pub target_volume: f64,
    pub covered_volume: f64,
    pub uncovered_volume: f64,
    /// Kept cubes with `D(Q, ∂Ω) > 4 c_w ℓ(Q)`; only root cells can end up here.
    pub upper_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverStats {
    pub side: Side,
    pub cubes: usize,
    pub leftovers: usize,
    pub root_generation: i32,
    pub target_volume: f64,
    pub covered_volume: f64,
    pub uncovered_volume: f64,
    pub upper_violations: usize,
}

impl<const D: usize> WhitneyCover<D> {
    pub fn stats(&self) -> CoverStats {
        CoverStats {
            side: self.side,
            cubes: self.cubes.len(),
            leftovers: self.leftovers.len(),
            root_generation: self.root_generation,
            target_volume: self.target_volume,
            covered_volume: self.covered_volume,
            uncovered_volume: self.uncovered_volume,
            upper_violations: self.upper_violations,
        }
    }

    /// True when more than `tol` of the target measure is left uncovered.
    pub fn is_partial(&self, tol: f64) -> bool {
        self.uncovered_volume > tol * self.target_volume
    }
}

/// Coarsest generation whose side is at least `extent`.
fn root_generation(extent: f64) -> i32 {
    let mut g = 0;
    while dyadic_side(g) < extent {
        g -= 1;
    }
    while dyadic_side(g + 1) >= extent {
        g += 1;
    }
    g
}

fn cells_meeting<const D: usize>(generation: i32, b: &Aabb<D>) -> Vec<DyadicCube<D>> {
    let inv = dyadic_side(-generation);
    let lo: [i64; D] = std::array::from_fn(|a| (b.lo[a] * inv).floor() as i64);
    let hi: [i64; D] = std::array::from_fn(|a| (b.hi[a] * inv).ceil() as i64 - 1);
    let mut out = Vec::new();
    let mut cur = lo;
    loop {
        out.push(DyadicCube::new(generation, cur));
        let mut a = 0;
        loop {
            if a == D {
                return out;
            }
            cur[a] += 1;
            if cur[a] <= hi[a] {
                break;
            }
            cur[a] = lo[a];
            a += 1;
        }
    }
}

/// Outcome of the keep test for one cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellFate {
    Keep,
    /// Kept although `D(Q, ∂Ω) > 4 c_w ℓ(Q)`.
    KeepTooSmall,
    Discard,
    Subdivide,
}

/// Keep test of the recursive rule: a cube is kept when its closure avoids
/// `∂Ω`, it lies on the requested side, and `c_w ℓ ≤ ℓ + dist(Q, ∂Ω) ≤ 4 c_w ℓ`.
pub fn cell_fate<const D: usize>(
    oracle: &dyn DomainOracle<D>,
    side: Side,
    c_w: f64,
    q: &DyadicCube<D>,
) -> CellFate {
    let b = q.bbox();
    let dist = oracle.box_boundary_distance(&b);
    if dist <= 0.0 {
        return CellFate::Subdivide;
    }
    let inside = oracle.contains(&b.center());
    if inside != (side == Side::Interior) {
        return CellFate::Discard;
    }
    let l = q.side();
    let big_d = l + dist;
    if big_d < c_w * l {
        CellFate::Subdivide
    } else if big_d <= 4.0 * c_w * l {
        CellFate::Keep
    } else {
        CellFate::KeepTooSmall
    }
}

pub fn whitney_cover<const D: usize>(
    oracle: &dyn DomainOracle<D>,
    side: Side,
    params: &WhitneyParams,
) -> Result<WhitneyCover<D>> {
    whitney_cover_in_box(oracle, side, params, EXTERIOR_BOX_FACTOR)
}

/// Whitney cover; the exterior is truncated to the root cells meeting the
/// bounding box dilated by `box_factor`.
pub fn whitney_cover_in_box<const D: usize>(
    oracle: &dyn DomainOracle<D>,
    side: Side,
    params: &WhitneyParams,
    box_factor: f64,
) -> Result<WhitneyCover<D>> {
    params.validate()?;
    if !(box_factor >= 1.0) {
        return Err(Error::param(
            "computation_box_factor",
            format!("{box_factor} < 1"),
        ));
    }
    let bbox = oracle.bounding_box();
    let extent = bbox.max_extent();
    if !(extent > 0.0) {
        return Err(Error::DegenerateDomain(format!(
            "{} has an empty bounding box",
            oracle.label()
        )));
    }
    let g0 = root_generation(extent);
    let seed_box = match side {
        Side::Interior => bbox,
        Side::Exterior => bbox.dilate(box_factor),
    };
    let roots = cells_meeting(g0, &seed_box);
    let region = Aabb::new(
        std::array::from_fn(|a| {
            roots
                .iter()
                .map(|c| c.bbox().lo[a])
                .fold(f64::INFINITY, f64::min)
        }),
        std::array::from_fn(|a| {
            roots
                .iter()
                .map(|c| c.bbox().hi[a])
                .fold(f64::NEG_INFINITY, f64::max)
        }),
    );
    let target_volume = match side {
        Side::Interior => oracle.volume(),
        Side::Exterior => region.volume() - oracle.volume(),
    };
    let mut cubes = Vec::new();
    let mut leftovers = Vec::new();
    let mut upper_violations = 0;
    let mut stack = roots;
    stack.reverse();
    while let Some(q) = stack.pop() {
        match cell_fate(oracle, side, params.c_w, &q) {
            CellFate::Keep => cubes.push(q),
            CellFate::KeepTooSmall => {
                upper_violations += 1;
                cubes.push(q);
            }
            CellFate::Discard => {}
            CellFate::Subdivide => {
                if q.generation >= params.max_generation {
                    leftovers.push(q);
                } else {
                    stack.extend(q.children());
                }
            }
        }
    }
    cubes.sort();
    leftovers.sort();
    let covered_volume: f64 = cubes.iter().map(|c| c.volume()).sum();
    let uncovered_volume = (target_volume - covered_volume).max(0.0);
    if upper_violations > 0 {
        log::warn!(
            "{} {:?} cover: {upper_violations} root cells exceed the upper Whitney bound",
            oracle.label(),
            side
        );
    }
    Ok(WhitneyCover {
        side,
        cubes,
        leftovers,
        root_generation: g0,
        region,
        target_volume,
        covered_volume,
        uncovered_volume,
        upper_violations,
    })
}

/// Whitney families and the symmetrization map.
#[derive(Clone)]
pub struct CoveringFamily<const D: usize> {
    pub domain: Arc<dyn DomainOracle<D>>,
    pub params: WhitneyParams,
    pub interior: CoverStats,
    pub exterior: CoverStats,
    /// Union of the exterior root cells.
    pub computation_box: Aabb<D>,
    pub w1: CubeSet<D>,
    pub w2: CubeSet<D>,
    /// Ids into `w2`, ascending.
    pub w3: Vec<usize>,
    pub w3p: Vec<usize>,
    pub w4: Vec<usize>,
    pub in_w3: Vec<bool>,
    pub in_w3p: Vec<bool>,
    pub in_w4: Vec<bool>,
    /// `w2` id → `w1` id of `Q*`; set on `w3 ∪ w3p`.
    pub sym: Vec<Option<usize>>,
    /// `w2` id → the `w3` neighbour whose `Q*` was borrowed (`w3p \ w3` only).
    pub convenient: Vec<Option<usize>>,
    pub warnings: Vec<String>,
}

impl<const D: usize> std::fmt::Debug for CoveringFamily<D> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoveringFamily")
            .field("domain", &self.domain.label())
            .field("params", &self.params)
            .field("w1", &self.w1.len())
            .field("w2", &self.w2.len())
            .field("w3", &self.w3.len())
            .field("w3p", &self.w3p.len())
            .field("w4", &self.w4.len())
            .finish()
    }
}

/// Search radii `16ℓ, 32ℓ, 64ℓ` for the symmetrized cube.
const SYM_RADII: [f64; 3] = [16.0, 32.0, 64.0];

fn find_symmetric<const D: usize>(w1: &CubeSet<D>, q: &DyadicCube<D>) -> Option<(usize, f64)> {
    let l = q.side();
    for r in SYM_RADII {
        let reach = (r - 2.0) * l;
        let window = Aabb::new(
            q.bbox().lo.map(|v| v - reach),
            q.bbox().hi.map(|v| v + reach),
        );
        let best = w1
            .meeting_box(&window)
            .into_iter()
            .filter(|&i| w1.get(i).generation == q.generation)
            .map(|i| (long_distance(q, &w1.get(i)), i))
            .filter(|&(d, _)| d <= r * l)
            // ids ascend with the cube order, so the first minimum is the lexicographic one
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((d, i)) = best {
            return Some((i, d));
        }
    }
    None
}

pub fn build_families<const D: usize>(
    oracle: Arc<dyn DomainOracle<D>>,
    params: &WhitneyParams,
) -> Result<CoveringFamily<D>> {
    build_families_in_box(oracle, params, EXTERIOR_BOX_FACTOR)
}

pub fn build_families_in_box<const D: usize>(
    oracle: Arc<dyn DomainOracle<D>>,
    params: &WhitneyParams,
    box_factor: f64,
) -> Result<CoveringFamily<D>> {
    let interior = whitney_cover_in_box(oracle.as_ref(), Side::Interior, params, box_factor)?;
    let exterior = whitney_cover_in_box(oracle.as_ref(), Side::Exterior, params, box_factor)?;
    if interior.cubes.is_empty() {
        return Err(Error::EmptyCover);
    }
    let w1 = CubeSet::new(interior.cubes.clone());
    let w2 = CubeSet::new(exterior.cubes.clone());
    let n2 = w2.len();
    let mut warnings = Vec::new();
    let mut sym = vec![None; n2];
    let mut in_w3 = vec![false; n2];
    for i in 0..n2 {
        let q = w2.get(i);
        if q.side() > params.ell0 {
            continue;
        }
        match find_symmetric(&w1, &q) {
            Some((s, _)) => {
                in_w3[i] = true;
                sym[i] = Some(s);
            }
            None => warnings.push(format!(
                "exterior cube {q} has no interior cube of equal side within D ≤ {}ℓ; left out of W3",
                SYM_RADII[SYM_RADII.len() - 1]
            )),
        }
    }
    let mut in_w3p = in_w3.clone();
    let mut convenient = vec![None; n2];
    for i in 0..n2 {
        if in_w3[i] {
            continue;
        }
        let q = w2.get(i);
        let pick = w2
            .neighbors_of(i)
            .iter()
            .copied()
            .filter(|&j| in_w3[j])
            .map(|j| {
                let star = w1.get(sym[j].expect("w3 cubes carry a symmetrized cube"));
                (long_distance(&q, &star), long_distance(&q, &w2.get(j)), j)
            })
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
        if let Some((_, _, j)) = pick {
            in_w3p[i] = true;
            convenient[i] = Some(j);
            sym[i] = sym[j];
        }
    }
    let in_w4: Vec<bool> = (0..n2)
        .map(|i| in_w3[i] && w2.neighbors_of(i).iter().all(|&j| in_w3[j]))
        .collect();
    let pick = |flags: &[bool]| -> Vec<usize> { (0..n2).filter(|&i| flags[i]).collect() };
    if !warnings.is_empty() {
        log::warn!(
            "{}: {} exterior cubes without a symmetrized cube",
            oracle.label(),
            warnings.len()
        );
    }
    Ok(CoveringFamily {
        params: *params,
        interior: interior.stats(),
        exterior: exterior.stats(),
        computation_box: exterior.region,
        w3: pick(&in_w3),
        w3p: pick(&in_w3p),
        w4: pick(&in_w4),
        in_w3,
        in_w3p,
        in_w4,
        sym,
        convenient,
        warnings,
        w1,
        w2,
        domain: oracle,
    })
}

/// Exact check of the Whitney inequality over one cube set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCheck {
    pub cubes: usize,
    pub violations: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Whitney5 check: pairs with `S ⊂ 5Q` and `ℓ(S) < ℓ(Q)/2`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Whitney5Check {
    pub pairs_checked: usize,
    pub violations: usize,
    pub worst_side_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub domain: String,
    pub params: WhitneyParams,
    pub interior: CoverStats,
    pub exterior: CoverStats,
    pub w1: usize,
    pub w2: usize,
    pub w3: usize,
    pub w3p: usize,
    pub w4: usize,
    pub whitney_w1: WhitneyCheck,
    pub whitney_w2: WhitneyCheck,
    pub whitney5_w1: Whitney5Check,
    pub whitney5_w2: Whitney5Check,
    pub superposition_50_w1: usize,
    pub superposition_50_w2: usize,
    pub sym_constant: f64,
    pub sym_overlap: usize,
    pub warnings: usize,
}

impl<const D: usize> CoveringFamily<D> {
    pub fn sym_of(&self, w2_id: usize) -> Option<DyadicCube<D>> {
        self.sym[w2_id].map(|s| self.w1.get(s))
    }

    pub fn check_whitney(&self, set: &CubeSet<D>) -> WhitneyCheck {
        let c_w = self.params.c_w;
        let mut out = WhitneyCheck {
            cubes: set.len(),
            violations: 0,
            min_ratio: f64::INFINITY,
            max_ratio: 0.0,
        };
        for q in set.cubes() {
            let l = q.side();
            let dist = self.domain.box_boundary_distance(&q.bbox());
            let big_d = l + dist;
            let ratio = big_d / l;
            out.min_ratio = out.min_ratio.min(ratio);
            out.max_ratio = out.max_ratio.max(ratio);
            if !(dist > 0.0 && c_w * l <= big_d && big_d <= 4.0 * c_w * l) {
                out.violations += 1;
            }
        }
        out
    }

    pub fn check_whitney5(&self, set: &CubeSet<D>) -> Whitney5Check {
        let mut out = Whitney5Check {
            worst_side_ratio: f64::INFINITY,
            ..Default::default()
        };
        for q in set.cubes() {
            for s in set.inside_box(&cube_box(q, 5.0)) {
                let s = set.get(s);
                if s == *q {
                    continue;
                }
                out.pairs_checked += 1;
                let r = s.side() / q.side();
                out.worst_side_ratio = out.worst_side_ratio.min(r);
                if r < 0.5 {
                    out.violations += 1;
                }
            }
        }
        out
    }

    /// `max_{Q∈W3} D(Q, Q*)/ℓ(Q)`.
    pub fn sym_constant(&self) -> f64 {
        self.w3
            .iter()
            .map(|&i| {
                let q = self.w2.get(i);
                long_distance(&q, &self.sym_of(i).unwrap()) / q.side()
            })
            .fold(0.0, f64::max)
    }

    /// `max_{S∈W1} #{Q ∈ W3 : Q* = S}`.
    pub fn sym_overlap(&self) -> usize {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &i in &self.w3 {
            *counts.entry(self.sym[i].unwrap()).or_default() += 1;
        }
        counts.values().copied().max().unwrap_or(0)
    }

    pub fn summary(&self) -> FamilySummary {
        FamilySummary {
            domain: self.domain.label(),
            params: self.params,
            interior: self.interior.clone(),
            exterior: self.exterior.clone(),
            w1: self.w1.len(),
            w2: self.w2.len(),
            w3: self.w3.len(),
            w3p: self.w3p.len(),
            w4: self.w4.len(),
            whitney_w1: self.check_whitney(&self.w1),
            whitney_w2: self.check_whitney(&self.w2),
            whitney5_w1: self.check_whitney5(&self.w1),
            whitney5_w2: self.check_whitney5(&self.w2),
            superposition_50_w1: self.w1.superposition(50.0),
            superposition_50_w2: self.w2.superposition(50.0),
            sym_constant: self.sym_constant(),
            sym_overlap: self.sym_overlap(),
            warnings: self.warnings.len(),
        }
    }

    /// Cube lists and the symmetrization map.
    pub fn to_json(&self) -> serde_json::Value {
        let list = |set: &CubeSet<D>, ids: &mut dyn Iterator<Item = usize>| -> serde_json::Value {
            serde_json::Value::Array(
                ids.map(|i| serde_json::to_value(set.get(i)).unwrap())
                    .collect(),
            )
        };
        let sym: Vec<serde_json::Value> = self
            .w3p
            .iter()
            .map(|&i| {
                serde_json::json!({
                    "q": self.w2.get(i),
                    "star": self.sym_of(i).unwrap(),
                    "via": self.convenient[i].map(|j| self.w2.get(j)),
                })
            })
            .collect();
        serde_json::json!({
            "domain": self.domain.label(),
            "params": self.params,
            "w1": list(&self.w1, &mut (0..self.w1.len())),
            "w2": list(&self.w2, &mut (0..self.w2.len())),
            "w3": list(&self.w2, &mut self.w3.iter().copied()),
            "w3p": list(&self.w2, &mut self.w3p.iter().copied()),
            "w4": list(&self.w2, &mut self.w4.iter().copied()),
            "sym": sym,
            "warnings": self.warnings,
        })
    }
}

/// Index pairs from `0..n × 0..m`: all of them when `n·m ≤ budget`, else
/// `budget` pairs drawn with a seeded generator.
pub fn sample_pairs(n: usize, m: usize, budget: usize, seed: u64) -> Vec<(usize, usize)> {
    if n == 0 || m == 0 {
        return Vec::new();
    }
    if n.saturating_mul(m) <= budget {
        return (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..budget)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..m)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationReport {
    pub pairs: usize,
    /// Bracket of `D(Q1*, Q2*)/D(Q1, Q2)` over W3 pairs.
    pub pair_ratio_min: f64,
    pub pair_ratio_max: f64,
    pub interior_pairs: usize,
    /// Bracket of `D(Q1*, S)/D(Q1, S)` over W3 × W1 pairs.
    pub interior_ratio_min: f64,
    pub interior_ratio_max: f64,
    pub neighbor_pairs: usize,
    /// `max D(Q1*, Q2*)/ℓ(Q1)` over neighbouring W3 pairs.
    pub neighbor_ratio_max: f64,
}

pub fn check_symmetrization<const D: usize>(
    fam: &CoveringFamily<D>,
    budget: usize,
    seed: u64,
) -> SymmetrizationReport {
    let star = |i: usize| fam.sym_of(i).unwrap();
    let n3 = fam.w3.len();
    let mut rep = SymmetrizationReport {
        pairs: 0,
        pair_ratio_min: f64::INFINITY,
        pair_ratio_max: 0.0,
        interior_pairs: 0,
        interior_ratio_min: f64::INFINITY,
        interior_ratio_max: 0.0,
        neighbor_pairs: 0,
        neighbor_ratio_max: 0.0,
    };
    for (a, b) in sample_pairs(n3, n3, budget, seed) {
        let (i, j) = (fam.w3[a], fam.w3[b]);
        let r = long_distance(&star(i), &star(j)) / long_distance(&fam.w2.get(i), &fam.w2.get(j));
        rep.pairs += 1;
        rep.pair_ratio_min = rep.pair_ratio_min.min(r);
        rep.pair_ratio_max = rep.pair_ratio_max.max(r);
    }
    for (a, s) in sample_pairs(n3, fam.w1.len(), budget, seed ^ 0x5eed) {
        let i = fam.w3[a];
        let s = fam.w1.get(s);
        let r = long_distance(&star(i), &s) / long_distance(&fam.w2.get(i), &s);
        rep.interior_pairs += 1;
        rep.interior_ratio_min = rep.interior_ratio_min.min(r);
        rep.interior_ratio_max = rep.interior_ratio_max.max(r);
    }
    for &i in &fam.w3 {
        for &j in fam.w2.neighbors_of(i) {
            if fam.in_w3[j] {
                rep.neighbor_pairs += 1;
                let r = long_distance(&star(i), &star(j)) / fam.w2.get(i).side();
                rep.neighbor_ratio_max = rep.neighbor_ratio_max.max(r);
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_domain, BoxDomain, DomainSpec};

    fn square_family(depth: i32) -> CoveringFamily<2> {
        build_families(
            make_domain(&DomainSpec::unit_square()).unwrap(),
            &WhitneyParams::with_depth(depth),
        )
        .unwrap()
    }

    #[test]
    fn central_block_of_the_square() {
        let fam = square_family(4);
        for idx in [[1, 1], [1, 2], [2, 1], [2, 2]] {
            assert!(fam.w1.contains(&DyadicCube::new(2, idx)));
        }
        assert_eq!(
            fam.w1.cubes().iter().filter(|c| c.generation < 2).count(),
            0
        );
    }

    #[test]
    fn families_are_nested_and_checked() {
        let fam = square_family(5);
        for &i in &fam.w4 {
            assert!(fam.in_w3[i]);
        }
        for &i in &fam.w3 {
            assert!(fam.in_w3p[i]);
            let q = fam.w2.get(i);
            let s = fam.sym_of(i).unwrap();
            assert_eq!(q.side(), s.side());
        }
        let s = fam.summary();
        assert_eq!(s.whitney_w1.violations, 0);
        assert_eq!(s.whitney_w2.violations, 0);
        assert!(s.w4 > 0 && s.w3 > 0);
    }

    #[test]
    fn adjacency_and_windows_match_brute_force() {
        let fam = square_family(5);
        let set = &fam.w2;
        for i in 0..set.len() {
            let q = set.get(i);
            let brute: Vec<usize> = (0..set.len())
                .filter(|&j| j != i && neighbors(&q, &set.get(j)))
                .collect();
            assert_eq!(set.neighbors_of(i), &brute[..]);
        }
        let b = Aabb::new([-0.3, 0.2], [0.45, 1.7]);
        let brute: Vec<usize> = (0..set.len())
            .filter(|&j| set.get(j).bbox().intersects(&b))
            .collect();
        assert_eq!(set.meeting_box(&b), brute);
    }

    #[test]
    fn locate_finds_the_containing_cube() {
        let fam = square_family(5);
        for (i, q) in fam.w1.cubes().iter().enumerate() {
            assert_eq!(fam.w1.locate(&q.center()), Some(i));
        }
        assert_eq!(fam.w1.locate(&[5.0, 5.0]), None);
    }

    #[test]
    fn one_dimensional_interval_cover() {
        let dom = BoxDomain::<1>::unit();
        let c = whitney_cover(&dom, Side::Interior, &WhitneyParams::with_depth(8)).unwrap();
        // gaps of width 2^-8 remain at both ends
        assert!((c.uncovered_volume - 2.0 * dyadic_side(8)).abs() < 1e-15);
        assert_eq!(c.upper_violations, 0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let dom = BoxDomain::<2>::unit();
        let bad = WhitneyParams {
            c_w: 0.5,
            ..Default::default()
        };
        assert!(whitney_cover(&dom, Side::Interior, &bad).is_err());
        let bad = WhitneyParams {
            ell0: 0.0,
            ..Default::default()
        };
        assert!(whitney_cover(&dom, Side::Interior, &bad).is_err());
    }

    #[test]
    fn sample_pairs_is_exhaustive_under_budget_and_seeded_above() {
        assert_eq!(sample_pairs(3, 4, 12, 0).len(), 12);
        let a = sample_pairs(100, 100, 50, 9);
        assert_eq!(a, sample_pairs(100, 100, 50, 9));
        assert_eq!(a.len(), 50);
    }
}
