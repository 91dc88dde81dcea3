//! Double-integral estimator for `Σ_x (Σ_y |g(x) − g(y)|^q / |x − y|^{σq+d})^{p/q}`
//! on a union of cubes.
//!
//! Cubes may be split into rectangular panels so that sharp but
//! resolvable features (partition-of-unity collars) fall on panel
//! boundaries. Every panel carries Gauss nodes at refinement levels
//! `0..=r`; near-diagonal pairs are subdivided recursively, pairs of a
//! node with a distant cluster of panels use a second-order multipole
//! expansion for even integer `q` and a pruned exact maximum for
//! `q = ∞`.

use rayon::prelude::*;

use crate::chains::shadow;
use crate::covering::CubeSet;
use crate::domain::DomainOracle;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point};
use crate::norms::{NormParams, QuadratureSpec, Region};
use crate::quadrature::{gauss_rule, pairwise_sum};

/// A rectangular integration element inside cube `cube`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Element<const D: usize> {
    pub cube: usize,
    pub bbox: Aabb<D>,
}

/// Elements grouped by cube; the elements of cube `i` are
/// `first[i]..first[i + 1]`.
#[derive(Clone, Debug)]
pub struct Mesh<const D: usize> {
    pub elements: Vec<Element<D>>,
    first: Vec<usize>,
}

impl<const D: usize> Mesh<D> {
    /// One element per cube.
    pub fn cubes(set: &CubeSet<D>) -> Self {
        Self::with_cuts(set, |_| std::array::from_fn(|_| Vec::new()))
    }

    /// Splits cube `i` along the interior coordinates `cuts(i)[axis]`.
    pub fn with_cuts<F>(set: &CubeSet<D>, cuts: F) -> Self
    where
        F: Fn(usize) -> [Vec<f64>; D],
    {
        let mut elements = Vec::new();
        let mut first = vec![0];
        for ci in 0..set.len() {
            let b = set.get(ci).bbox();
            let tol = 1e-9 * b.max_extent();
            let raw = cuts(ci);
            let breaks: Vec<Vec<f64>> = (0..D)
                .map(|a| {
                    let mut t: Vec<f64> = raw[a]
                        .iter()
                        .copied()
                        .filter(|&t| t > b.lo[a] + tol && t < b.hi[a] - tol)
                        .collect();
                    t.sort_by(f64::total_cmp);
                    t.dedup_by(|x, y| (*x - *y).abs() <= tol);
                    let mut all = vec![b.lo[a]];
                    all.extend(t);
                    all.push(b.hi[a]);
                    all
                })
                .collect();
            let counts: Vec<usize> = breaks.iter().map(|v| v.len() - 1).collect();
            let total: usize = counts.iter().product();
            for n in 0..total {
                let mut rem = n;
                let mut lo = [0.0; D];
                let mut hi = [0.0; D];
                for a in 0..D {
                    let j = rem % counts[a];
                    rem /= counts[a];
                    lo[a] = breaks[a][j];
                    hi[a] = breaks[a][j + 1];
                }
                elements.push(Element {
                    cube: ci,
                    bbox: Aabb::new(lo, hi),
                });
            }
            first.push(elements.len());
        }
        Self { elements, first }
    }

    pub fn cubes_len(&self) -> usize {
        self.first.len() - 1
    }

    pub fn of_cube(&self, ci: usize) -> std::ops::Range<usize> {
        self.first[ci]..self.first[ci + 1]
    }
}

/// Field values on the Gauss nodes of every element and of its
/// sub-boxes down to the refinement depth. Each level halves the axes
/// longer than half the longest one, so thin panels are refined along
/// their long side first.
pub struct Samples<const D: usize> {
    pub ncomp: usize,
    pub m: usize,
    pub depth: usize,
    npb: usize,
    unit_weights: Vec<f64>,
    /// Per element and level: log2 of the divisions per axis, and the first box.
    plans: Vec<Vec<([u8; D], usize)>>,
    pos: Vec<Vec<Point<D>>>,
    vals: Vec<Vec<f64>>,
    vols: Vec<f64>,
}

fn plan<const D: usize>(b: &Aabb<D>, depth: usize) -> Vec<([u8; D], usize)> {
    let mut bits = [0u8; D];
    let mut first = 0;
    let mut out = Vec::with_capacity(depth + 1);
    for l in 0..=depth {
        out.push((bits, first));
        first += 1usize << bits.iter().map(|&v| v as usize).sum::<usize>();
        if l < depth {
            let ext: [f64; D] = std::array::from_fn(|a| b.extent(a) / (1u64 << bits[a]) as f64);
            let longest = ext.iter().fold(0.0f64, |m, &v| m.max(v));
            for a in 0..D {
                if ext[a] > 0.5 * longest {
                    bits[a] += 1;
                }
            }
        }
    }
    out
}

/// Per-axis indices of box `b` at a level with `bits` divisions.
fn box_coords<const D: usize>(b: usize, bits: &[u8; D]) -> [usize; D] {
    let mut shift = 0;
    std::array::from_fn(|a| {
        let j = (b >> shift) & ((1usize << bits[a]) - 1);
        shift += bits[a] as usize;
        j
    })
}

fn box_index<const D: usize>(j: &[usize; D], bits: &[u8; D]) -> usize {
    let mut shift = 0;
    let mut b = 0;
    for a in 0..D {
        b |= j[a] << shift;
        shift += bits[a] as usize;
    }
    b
}

impl<const D: usize> Samples<D> {
    /// `eval(cube id, x)` must return `ncomp` values.
    pub fn build<F>(mesh: &Mesh<D>, m: usize, depth: usize, ncomp: usize, eval: F) -> Result<Self>
    where
        F: Fn(usize, &Point<D>) -> Result<Vec<f64>> + Sync,
    {
        let rule = gauss_rule(m);
        let npb = m.pow(D as u32);
        let unit_weights: Vec<f64> = (0..npb)
            .map(|n| {
                (0..D)
                    .map(|a| rule.weights[(n / m.pow(a as u32)) % m])
                    .product()
            })
            .collect();
        let plans: Vec<Vec<([u8; D], usize)>> =
            mesh.elements.iter().map(|e| plan(&e.bbox, depth)).collect();
        let per_elem: Vec<(Vec<Point<D>>, Vec<f64>)> = mesh
            .elements
            .par_iter()
            .zip(&plans)
            .map(|(e, pl)| {
                let b = &e.bbox;
                let mut pos = Vec::new();
                for (bits, _) in pl {
                    let nbox = 1usize << bits.iter().map(|&v| v as usize).sum::<usize>();
                    for bi in 0..nbox {
                        let j = box_coords(bi, bits);
                        for n in 0..npb {
                            pos.push(std::array::from_fn(|a| {
                                let i = (n / m.pow(a as u32)) % m;
                                b.lo[a]
                                    + (j[a] as f64 + rule.nodes[i]) * b.extent(a)
                                        / (1u64 << bits[a]) as f64
                            }));
                        }
                    }
                }
                let mut vals = Vec::with_capacity(pos.len() * ncomp);
                for x in &pos {
                    let v = eval(e.cube, x)?;
                    debug_assert_eq!(v.len(), ncomp);
                    vals.extend_from_slice(&v);
                }
                Ok((pos, vals))
            })
            .collect::<Result<_>>()?;
        let (pos, vals) = per_elem.into_iter().unzip();
        Ok(Self {
            ncomp,
            m,
            depth,
            npb,
            unit_weights,
            plans,
            pos,
            vals,
            vols: mesh.elements.iter().map(|e| e.bbox.volume()).collect(),
        })
    }

    pub fn total_nodes(&self) -> usize {
        self.pos.iter().map(|p| p.len()).sum()
    }

    pub fn elements(&self) -> usize {
        self.pos.len()
    }

    /// Level-0 nodes of element `ei`: `(x, weight, values)`.
    pub fn level0(&self, ei: usize) -> impl Iterator<Item = (&Point<D>, f64, &[f64])> + '_ {
        let vol = self.vols[ei];
        (0..self.npb).map(move |n| {
            (
                &self.pos[ei][n],
                self.unit_weights[n] * vol,
                &self.vals[ei][n * self.ncomp..(n + 1) * self.ncomp],
            )
        })
    }

    /// Level-0 nodes of all elements of cube `ci`.
    pub fn cube_level0<'s>(
        &'s self,
        mesh: &Mesh<D>,
        ci: usize,
    ) -> impl Iterator<Item = (&'s Point<D>, f64, &'s [f64])> + 's {
        mesh.of_cube(ci).flat_map(move |ei| self.level0(ei))
    }

    /// Largest `|value|` of component `c` over all stored nodes.
    pub fn sup(&self, c: usize) -> f64 {
        self.vals
            .iter()
            .flat_map(|v| v.iter().skip(c).step_by(self.ncomp))
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn values(&self, ei: usize, idx: usize) -> &[f64] {
        &self.vals[ei][idx * self.ncomp..(idx + 1) * self.ncomp]
    }
}

/// `∫ (Σ |g(x) − g(y)|^q …)^{p/q}` summed over components, at depth `r` (`value`) and `r − 1` (`coarse`).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeminormValue {
    pub value: f64,
    pub coarse: f64,
}

impl SeminormValue {
    pub fn error(&self) -> f64 {
        (self.value - self.coarse).abs()
    }
}

#[derive(Clone, Copy)]
struct Kernel {
    sigma: f64,
    p: f64,
    q: f64,
    expo: f64,
    inf: bool,
    /// `q / 2` when `q` is an even integer.
    half_even: Option<usize>,
    /// `|x − y|^{−σ}` for `q = ∞`, else `|x − y|^{−σq−d}`.
    radial: Radial,
}

#[derive(Clone, Copy)]
enum Radial {
    /// `r2^{−n/4}`
    Quarter(i32),
    General(f64),
}

impl Radial {
    fn new(e: f64) -> Self {
        let n = 2.0 * e;
        if n.fract() == 0.0 && n.abs() < 64.0 {
            Radial::Quarter(n as i32)
        } else {
            Radial::General(e)
        }
    }
}

/// Powers of one squared distance, sharing the square roots and the logarithm.
struct Roots {
    r2: f64,
    s1: f64,
    s2: f64,
    lr: f64,
}

impl Roots {
    fn new(r2: f64) -> Self {
        Self {
            r2,
            s1: f64::NAN,
            s2: f64::NAN,
            lr: f64::NAN,
        }
    }

    #[inline]
    fn pow(&mut self, p: Radial) -> f64 {
        match p {
            Radial::Quarter(n) => {
                let mut v = self.r2.powi(-(n / 4));
                let rem = n % 4;
                if rem != 0 {
                    if self.s1.is_nan() {
                        self.s1 = self.r2.sqrt();
                    }
                    if rem & 1 == 1 && self.s2.is_nan() {
                        self.s2 = self.s1.sqrt();
                    }
                    v /= match rem {
                        1 => self.s2,
                        2 => self.s1,
                        _ => self.s1 * self.s2,
                    };
                }
                v
            }
            Radial::General(e) => {
                if self.lr.is_nan() {
                    self.lr = 0.5 * self.r2.ln();
                }
                (-e * self.lr).exp()
            }
        }
    }
}

const HI: u8 = 1;
const LO: u8 = 2;

#[derive(Clone, Copy, PartialEq)]
enum Cls {
    In,
    Out,
    Part,
}

enum RegionAt<const D: usize> {
    All,
    Ball { x: Point<D>, radius: f64 },
    Box(Aabb<D>),
}

impl<const D: usize> RegionAt<D> {
    fn classify(&self, b: &Aabb<D>) -> Cls {
        match self {
            RegionAt::All => Cls::In,
            RegionAt::Ball { x, radius } => {
                if b.max_dist_point(x) <= *radius {
                    Cls::In
                } else if b.dist_point(x) > *radius {
                    Cls::Out
                } else {
                    Cls::Part
                }
            }
            RegionAt::Box(f) => {
                if f.contains_box(b) {
                    Cls::In
                } else if !f.intersects(b) {
                    Cls::Out
                } else {
                    Cls::Part
                }
            }
        }
    }

    fn contains(&self, y: &Point<D>) -> bool {
        match self {
            RegionAt::All => true,
            RegionAt::Ball { x, radius } => dist2(x, y).sqrt() <= *radius,
            RegionAt::Box(f) => f.contains_point(y),
        }
    }
}

fn dist2<const D: usize>(x: &Point<D>, y: &Point<D>) -> f64 {
    (0..D).map(|a| (x[a] - y[a]).powi(2)).sum()
}

/// Binary space partition over elements; the elements of every node
/// are `order[start..end]`.
struct Tree<const D: usize> {
    nodes: Vec<TreeNode<D>>,
    order: Vec<usize>,
    cube_root: Vec<usize>,
    root: usize,
}

struct TreeNode<const D: usize> {
    bbox: Aabb<D>,
    center: Point<D>,
    extent: f64,
    start: usize,
    end: usize,
    kids: Option<(usize, usize)>,
}

impl<const D: usize> Tree<D> {
    fn build(mesh: &Mesh<D>) -> Self {
        let mut t = Tree {
            nodes: Vec::new(),
            order: Vec::with_capacity(mesh.elements.len()),
            cube_root: vec![usize::MAX; mesh.cubes_len()],
            root: 0,
        };
        let mut cubes: Vec<usize> = (0..mesh.cubes_len())
            .filter(|&c| !mesh.of_cube(c).is_empty())
            .collect();
        let centers: Vec<Point<D>> = (0..mesh.cubes_len())
            .map(|c| {
                let r = mesh.of_cube(c);
                if r.is_empty() {
                    [0.0; D]
                } else {
                    union(mesh.elements[r].iter().map(|e| e.bbox)).center()
                }
            })
            .collect();
        t.root = t.split_cubes(mesh, &mut cubes, &centers);
        t
    }

    fn push(
        &mut self,
        mesh: &Mesh<D>,
        start: usize,
        end: usize,
        kids: Option<(usize, usize)>,
    ) -> usize {
        let bbox = union(
            self.order[start..end]
                .iter()
                .map(|&e| mesh.elements[e].bbox),
        );
        self.nodes.push(TreeNode {
            bbox,
            center: bbox.center(),
            extent: bbox.max_extent(),
            start,
            end,
            kids,
        });
        self.nodes.len() - 1
    }

    fn split_cubes(&mut self, mesh: &Mesh<D>, cubes: &mut [usize], centers: &[Point<D>]) -> usize {
        if cubes.len() == 1 {
            let c = cubes[0];
            let mut elems: Vec<usize> = mesh.of_cube(c).collect();
            let id = self.split_elements(mesh, &mut elems);
            self.cube_root[c] = id;
            return id;
        }
        let start = self.order.len();
        let axis = widest_axis(cubes.iter().map(|&c| centers[c]));
        cubes.sort_by(|&a, &b| {
            centers[a][axis]
                .total_cmp(&centers[b][axis])
                .then(a.cmp(&b))
        });
        let mid = cubes.len() / 2;
        let (l, r) = cubes.split_at_mut(mid);
        let a = self.split_cubes(mesh, l, centers);
        let b = self.split_cubes(mesh, r, centers);
        self.push(mesh, start, self.order.len(), Some((a, b)))
    }

    fn split_elements(&mut self, mesh: &Mesh<D>, elems: &mut [usize]) -> usize {
        let start = self.order.len();
        if elems.len() == 1 {
            self.order.push(elems[0]);
            return self.push(mesh, start, start + 1, None);
        }
        let axis = widest_axis(elems.iter().map(|&e| mesh.elements[e].bbox.center()));
        elems.sort_by(|&a, &b| {
            mesh.elements[a].bbox.center()[axis]
                .total_cmp(&mesh.elements[b].bbox.center()[axis])
                .then(a.cmp(&b))
        });
        let mid = elems.len() / 2;
        let (l, r) = elems.split_at_mut(mid);
        let a = self.split_elements(mesh, l);
        let b = self.split_elements(mesh, r);
        self.push(mesh, start, self.order.len(), Some((a, b)))
    }
}

fn union<const D: usize>(boxes: impl Iterator<Item = Aabb<D>>) -> Aabb<D> {
    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for b in boxes {
        for a in 0..D {
            lo[a] = lo[a].min(b.lo[a]);
            hi[a] = hi[a].max(b.hi[a]);
        }
    }
    Aabb::new(lo, hi)
}

fn widest_axis<const D: usize>(pts: impl Iterator<Item = Point<D>>) -> usize {
    let mut lo = [f64::INFINITY; D];
    let mut hi = [f64::NEG_INFINITY; D];
    for p in pts {
        for a in 0..D {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..D).fold(0, |best, a| {
        if hi[a] - lo[a] > hi[best] - lo[best] {
            a
        } else {
            best
        }
    })
}

/// Per-node, per-component statistics: value shift `μ`, range over all
/// stored nodes and the multipole block of `t = g − μ`:
/// `Σ w t^j`, `Σ w t^j δ`, `Σ w t^j δδᵀ` (upper triangle), `δ = y − centre`, `j ≤ J`.
struct Moments {
    order: usize,
    block: usize,
    per_comp: usize,
    data: Vec<f64>,
}

impl Moments {
    fn layout<const D: usize>(order: usize) -> (usize, usize) {
        let block = 1 + D + D * (D + 1) / 2;
        (block, 3 + (order + 1) * block)
    }

    fn slice(&self, node: usize, ci: usize, ncomp: usize) -> &[f64] {
        let s = (node * ncomp + ci) * self.per_comp;
        &self.data[s..s + self.per_comp]
    }
}

struct Pass<'a, const D: usize> {
    set: &'a CubeSet<D>,
    mesh: &'a Mesh<D>,
    s: &'a Samples<D>,
    comps: &'a [usize],
    kern: Vec<Kernel>,
    region: Region,
    oracle: Option<&'a dyn DomainOracle<D>>,
    far: f64,
    tree: Tree<D>,
    mom: Moments,
    binom: Vec<Vec<f64>>,
    shadows: Option<Vec<Vec<usize>>>,
}

struct Acc<'b> {
    hi: &'b mut [f64],
    lo: &'b mut [f64],
    kv: Vec<f64>,
}

impl<'a, const D: usize> Pass<'a, D> {
    fn moments(tree: &Tree<D>, s: &Samples<D>, comps: &[usize], order: usize) -> Moments {
        let (block, per_comp) = Moments::layout::<D>(order);
        let nc = comps.len();
        let per_node: Vec<Vec<f64>> = tree
            .nodes
            .par_iter()
            .map(|nd| {
                let mut out = vec![0.0; nc * per_comp];
                for (ci, &c) in comps.iter().enumerate() {
                    let o = &mut out[ci * per_comp..(ci + 1) * per_comp];
                    let (mut wsum, mut gsum) = (0.0, 0.0);
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &ei in &tree.order[nd.start..nd.end] {
                        for (_, w, g) in s.level0(ei) {
                            wsum += w;
                            gsum += w * g[c];
                        }
                        for v in s.vals[ei].iter().skip(c).step_by(s.ncomp) {
                            lo = lo.min(*v);
                            hi = hi.max(*v);
                        }
                    }
                    let mu = if wsum > 0.0 { gsum / wsum } else { 0.0 };
                    o[0] = mu;
                    o[1] = lo;
                    o[2] = hi;
                    for &ei in &tree.order[nd.start..nd.end] {
                        for (y, w, g) in s.level0(ei) {
                            let t = g[c] - mu;
                            let d: [f64; D] = std::array::from_fn(|a| y[a] - nd.center[a]);
                            let mut tj = w;
                            for j in 0..=order {
                                let b = &mut o[3 + j * block..3 + (j + 1) * block];
                                b[0] += tj;
                                for a in 0..D {
                                    b[1 + a] += tj * d[a];
                                }
                                let mut k = 1 + D;
                                for a in 0..D {
                                    for e in a..D {
                                        b[k] += tj * d[a] * d[e];
                                        k += 1;
                                    }
                                }
                                tj *= t;
                            }
                        }
                    }
                }
                out
            })
            .collect();
        Moments {
            order,
            block,
            per_comp,
            data: per_node.concat(),
        }
    }

    fn region_at(&self, qi: usize, x: &Point<D>) -> RegionAt<D> {
        match self.region {
            Region::Full | Region::Shadow { .. } => RegionAt::All,
            Region::Ball { rho } => RegionAt::Ball {
                x: *x,
                radius: rho
                    * self
                        .oracle
                        .expect("ball mode needs the domain")
                        .boundary_distance(x),
            },
            Region::FiveQ => RegionAt::Box(self.set.get(qi).bbox().dilate(5.0)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn add(
        &self,
        x: &Point<D>,
        gx: &[f64],
        y: &Point<D>,
        w: f64,
        gy: &[f64],
        mask: u8,
        kmask: u64,
        acc: &mut Acc<'_>,
    ) {
        let r2 = dist2(x, y);
        if r2 == 0.0 {
            return;
        }
        let np = self.kern.len();
        let mut roots = Roots::new(r2);
        for (j, k) in self.kern.iter().enumerate() {
            if kmask & (1 << j) != 0 {
                let v = roots.pow(k.radial);
                acc.kv[j] = if k.inf { v } else { w * v };
            }
        }
        for (ci, &c) in self.comps.iter().enumerate() {
            let diff = (gx[c] - gy[c]).abs();
            if diff == 0.0 {
                continue;
            }
            for (j, k) in self.kern.iter().enumerate() {
                if kmask & (1 << j) == 0 {
                    continue;
                }
                let slot = ci * np + j;
                if k.inf {
                    let v = diff * acc.kv[j];
                    if mask & HI != 0 {
                        acc.hi[slot] = acc.hi[slot].max(v);
                    }
                    if mask & LO != 0 {
                        acc.lo[slot] = acc.lo[slot].max(v);
                    }
                } else {
                    let dq = match k.half_even {
                        Some(h) => (diff * diff).powi(h as i32),
                        None => diff.powf(k.q),
                    };
                    let v = dq * acc.kv[j];
                    if mask & HI != 0 {
                        acc.hi[slot] += v;
                    }
                    if mask & LO != 0 {
                        acc.lo[slot] += v;
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn gauss(
        &self,
        ei: usize,
        l: usize,
        b: usize,
        x: &Point<D>,
        gx: &[f64],
        part: Option<&RegionAt<D>>,
        mask: u8,
        kmask: u64,
        acc: &mut Acc<'_>,
    ) {
        let s = self.s;
        let (bits, first) = s.plans[ei][l];
        let scale = s.vols[ei] / (1usize << bits.iter().map(|&v| v as usize).sum::<usize>()) as f64;
        let start = (first + b) * s.npb;
        for n in 0..s.npb {
            let idx = start + n;
            let y = &s.pos[ei][idx];
            if let Some(r) = part {
                if !r.contains(y) {
                    continue;
                }
            }
            self.add(
                x,
                gx,
                y,
                s.unit_weights[n] * scale,
                s.values(ei, idx),
                mask,
                kmask,
                acc,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn visit_box(
        &self,
        ei: usize,
        l: usize,
        b: usize,
        bbox: Aabb<D>,
        x: &Point<D>,
        gx: &[f64],
        reg: &RegionAt<D>,
        mask: u8,
        kmask: u64,
        acc: &mut Acc<'_>,
    ) {
        let cls = reg.classify(&bbox);
        if cls == Cls::Out {
            return;
        }
        let part = (cls == Cls::Part).then_some(reg);
        let r = self.s.depth;
        let far = bbox.dist_point(x) >= bbox.max_extent();
        if (cls == Cls::In && far) || l == r {
            self.gauss(ei, l, b, x, gx, part, mask, kmask, acc);
            return;
        }
        let mut kmask = kmask;
        if cls == Cls::Part && far {
            // sup kernels take the element's own nodes inside the region,
            // a subset of the nodes the full region visits
            let inf = kmask & self.inf_mask();
            if inf != 0 {
                self.gauss(ei, l, b, x, gx, part, mask, inf, acc);
                kmask &= !inf;
                if kmask == 0 {
                    return;
                }
            }
        }
        let child_mask = if l + 1 == r {
            self.gauss(ei, l, b, x, gx, part, LO, kmask, acc);
            HI
        } else {
            mask
        };
        let pl = &self.s.plans[ei];
        let (bits, _) = pl[l];
        let (cbits, _) = pl[l + 1];
        let j = box_coords(b, &bits);
        let split: [bool; D] = std::array::from_fn(|a| cbits[a] > bits[a]);
        for e in 0..(1usize << D) {
            if (0..D).any(|a| !split[a] && (e >> a) & 1 == 1) {
                continue;
            }
            let mut cj = [0usize; D];
            let mut lo = [0.0; D];
            let mut hi = [0.0; D];
            for a in 0..D {
                let bit = (e >> a) & 1;
                if split[a] {
                    cj[a] = 2 * j[a] + bit;
                    let h = 0.5 * bbox.extent(a);
                    lo[a] = bbox.lo[a] + bit as f64 * h;
                    hi[a] = if bit == 1 { bbox.hi[a] } else { lo[a] + h };
                } else {
                    cj[a] = j[a];
                    lo[a] = bbox.lo[a];
                    hi[a] = bbox.hi[a];
                }
            }
            self.visit_box(
                ei,
                l + 1,
                box_index(&cj, &cbits),
                Aabb::new(lo, hi),
                x,
                gx,
                reg,
                child_mask,
                kmask,
                acc,
            );
        }
    }

    /// Adds the multipole approximation of node `ni` for the even-`q`
    /// kernels in `kmask` and returns the kernels it handled.
    fn far_moments(
        &self,
        ni: usize,
        x: &Point<D>,
        gx: &[f64],
        kmask: u64,
        acc: &mut Acc<'_>,
    ) -> u64 {
        let nd = &self.tree.nodes[ni];
        let u: [f64; D] = std::array::from_fn(|a| nd.center[a] - x[a]);
        let r2: f64 = u.iter().map(|v| v * v).sum();
        let lr2 = r2.ln();
        let np = self.kern.len();
        let nc = self.comps.len();
        let blk = self.mom.block;
        let mut done = 0u64;
        let mut t = [0.0f64; 64];
        for (j, k) in self.kern.iter().enumerate() {
            let Some(h) = k.half_even else { continue };
            if kmask & (1 << j) == 0 {
                continue;
            }
            let q = 2 * h;
            let e = k.expo;
            let kk = (-0.5 * e * lr2).exp();
            let g: [f64; D] = std::array::from_fn(|a| -e * kk * u[a] / r2);
            let mut hm = [0.0f64; 16];
            let mut idx = 0;
            for a in 0..D {
                for b in a..D {
                    let diag = if a == b { -e / r2 } else { 0.0 };
                    let v = kk * (diag + e * (e + 2.0) * u[a] * u[b] / (r2 * r2));
                    // off-diagonal entries appear twice in the quadratic form
                    hm[idx] = if a == b { 0.5 * v } else { v };
                    idx += 1;
                }
            }
            for ci in 0..nc {
                let m = self.mom.slice(ni, ci, nc);
                let a = gx[self.comps[ci]] - m[0];
                for (jj, tj) in t.iter_mut().enumerate().take(q + 1) {
                    let b = &m[3 + jj * blk..3 + (jj + 1) * blk];
                    let mut v = kk * b[0];
                    for a2 in 0..D {
                        v += g[a2] * b[1 + a2];
                    }
                    for (i, hv) in hm.iter().enumerate().take(D * (D + 1) / 2) {
                        v += hv * b[1 + D + i];
                    }
                    *tj = v;
                }
                // Σ_j C(q,j) a^{q−j} (−t)^j
                let mut sum = 0.0;
                let mut apow = 1.0;
                for jj in (0..=q).rev() {
                    let sign = if jj % 2 == 0 { 1.0 } else { -1.0 };
                    sum += self.binom[q][jj] * apow * sign * t[jj];
                    apow *= a;
                }
                let slot = ci * np + j;
                acc.hi[slot] += sum;
                acc.lo[slot] += sum;
            }
            done |= 1 << j;
        }
        done
    }

    /// Drops the `q = ∞` kernels whose running maximum already exceeds
    /// every value node `ni` can produce.
    fn inf_mask(&self) -> u64 {
        self.kern
            .iter()
            .enumerate()
            .filter(|(_, k)| k.inf)
            .fold(0, |m, (j, _)| m | (1 << j))
    }

    fn prune_inf(&self, ni: usize, x: &Point<D>, gx: &[f64], kmask: u64, acc: &Acc<'_>) -> u64 {
        let nd = &self.tree.nodes[ni];
        let dmin = nd.bbox.dist_point(x);
        if dmin <= 0.0 {
            return kmask;
        }
        let np = self.kern.len();
        let nc = self.comps.len();
        let mut out = kmask;
        for (j, k) in self.kern.iter().enumerate() {
            if !k.inf || kmask & (1 << j) == 0 {
                continue;
            }
            let scale = dmin.powf(-k.sigma);
            let dominated = (0..nc).all(|ci| {
                let m = self.mom.slice(ni, ci, nc);
                let a = gx[self.comps[ci]];
                let bound = (a - m[1]).abs().max((a - m[2]).abs()) * scale;
                let slot = ci * np + j;
                bound <= acc.hi[slot].min(acc.lo[slot])
            });
            if dominated {
                out &= !(1 << j);
            }
        }
        out
    }

    fn visit_node(
        &self,
        ni: usize,
        x: &Point<D>,
        gx: &[f64],
        reg: &RegionAt<D>,
        mut kmask: u64,
        acc: &mut Acc<'_>,
    ) {
        let nd = &self.tree.nodes[ni];
        let cls = reg.classify(&nd.bbox);
        if cls == Cls::Out {
            return;
        }
        kmask = self.prune_inf(ni, x, gx, kmask, acc);
        if kmask == 0 {
            return;
        }
        if self.far > 0.0 && cls == Cls::In && nd.bbox.dist_point(x) >= self.far * nd.extent {
            kmask &= !self.far_moments(ni, x, gx, kmask, acc);
            if kmask == 0 {
                return;
            }
        }
        match nd.kids {
            Some((a, b)) => {
                self.visit_node(a, x, gx, reg, kmask, acc);
                self.visit_node(b, x, gx, reg, kmask, acc);
            }
            None => {
                let ei = self.tree.order[nd.start];
                self.visit_box(
                    ei,
                    0,
                    0,
                    self.mesh.elements[ei].bbox,
                    x,
                    gx,
                    reg,
                    HI | LO,
                    kmask,
                    acc,
                );
            }
        }
    }

    /// Outer sums of cube `qi` per (component, kernel), at depth `r` and `r − 1`.
    fn cube_outer(&self, qi: usize) -> (Vec<f64>, Vec<f64>) {
        let np = self.kern.len();
        let slots = self.comps.len() * np;
        let mut ohi = vec![0.0; slots];
        let mut olo = vec![0.0; slots];
        let mut ihi = vec![0.0; slots];
        let mut ilo = vec![0.0; slots];
        let roots: Vec<usize> = match &self.shadows {
            Some(sh) => sh[qi]
                .iter()
                .map(|&c| self.tree.cube_root[c])
                .filter(|&r| r != usize::MAX)
                .collect(),
            None => vec![self.tree.root],
        };
        let all = if np == 64 { u64::MAX } else { (1u64 << np) - 1 };
        for (x, w, gx) in self.s.cube_level0(self.mesh, qi) {
            let reg = self.region_at(qi, x);
            ihi.fill(0.0);
            ilo.fill(0.0);
            let mut acc = Acc {
                hi: &mut ihi,
                lo: &mut ilo,
                kv: vec![0.0; np],
            };
            for &r in &roots {
                self.visit_node(r, x, gx, &reg, all, &mut acc);
            }
            for slot in 0..slots {
                let k = self.kern[slot % np];
                let e = if k.inf { k.p } else { k.p / k.q };
                ohi[slot] += w * ihi[slot].max(0.0).powf(e);
                olo[slot] += w * ilo[slot].max(0.0).powf(e);
            }
        }
        (ohi, olo)
    }
}

fn binomials(n: usize) -> Vec<Vec<f64>> {
    let mut b = vec![vec![1.0]];
    for i in 1..=n {
        let prev = &b[i - 1];
        let row: Vec<f64> = (0..=i)
            .map(|j| {
                if j == 0 || j == i {
                    1.0
                } else {
                    prev[j - 1] + prev[j]
                }
            })
            .collect();
        b.push(row);
    }
    b
}

/// Runs the estimator for several `(σ, p, q)` at once; `comps` selects
/// the sampled components, whose seminorms are summed.
#[allow(clippy::too_many_arguments)]
pub fn seminorm_pass<const D: usize>(
    set: &CubeSet<D>,
    mesh: &Mesh<D>,
    samples: &Samples<D>,
    comps: &[usize],
    params: &[NormParams],
    region: Region,
    oracle: Option<&dyn DomainOracle<D>>,
    quad: &QuadratureSpec,
) -> Result<Vec<SeminormValue>> {
    if set.is_empty() || mesh.elements.is_empty() {
        return Err(Error::EmptyCover);
    }
    region.validate()?;
    if matches!(region, Region::Ball { .. }) && oracle.is_none() {
        return Err(Error::param("Region", "ball mode needs the domain"));
    }
    if params.len() > 64 {
        return Err(Error::param(
            "NormParams",
            "at most 64 parameter sets per pass",
        ));
    }
    for p in params {
        p.validate()?;
    }
    let kern: Vec<Kernel> = params
        .iter()
        .map(|p| {
            let half_even =
                (p.q.is_finite() && p.q.fract() == 0.0 && (p.q as usize) % 2 == 0 && p.q <= 32.0)
                    .then_some(p.q as usize / 2);
            let inf = p.q.is_infinite();
            let expo = p.sigma * p.q + D as f64;
            Kernel {
                sigma: p.sigma,
                p: p.p,
                q: p.q,
                expo,
                inf,
                half_even,
                radial: Radial::new(if inf { p.sigma } else { expo }),
            }
        })
        .collect();
    let order = kern
        .iter()
        .filter_map(|k| k.half_even)
        .map(|h| 2 * h)
        .max()
        .unwrap_or(0);
    let shadows = match region {
        Region::Shadow { rho } => Some(
            (0..set.len())
                .into_par_iter()
                .map(|i| shadow(set, i, rho).members)
                .collect(),
        ),
        _ => None,
    };
    let tree = Tree::build(mesh);
    let mom = Pass::moments(&tree, samples, comps, order);
    debug_assert_eq!(mom.order, order);
    let pass = Pass {
        set,
        mesh,
        s: samples,
        comps,
        kern,
        region,
        oracle,
        far: quad.far_field_ratio,
        tree,
        mom,
        binom: binomials(order),
        shadows,
    };
    let per_cube: Vec<(Vec<f64>, Vec<f64>)> = (0..set.len())
        .into_par_iter()
        .map(|qi| pass.cube_outer(qi))
        .collect();
    let np = params.len();
    let total = |slot: usize, hi: bool| -> f64 {
        let terms: Vec<f64> = per_cube
            .iter()
            .map(|(h, l)| if hi { h[slot] } else { l[slot] })
            .collect();
        pairwise_sum(&terms)
    };
    Ok((0..np)
        .map(|j| {
            let p = params[j].p;
            let (mut value, mut coarse) = (0.0, 0.0);
            for ci in 0..comps.len() {
                value += total(ci * np + j, true).powf(1.0 / p);
                coarse += total(ci * np + j, false).powf(1.0 / p);
            }
            SeminormValue { value, coarse }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DyadicCube;

    fn grid(level: i32, n: i64) -> CubeSet<2> {
        let mut cubes = Vec::new();
        for i in 0..n {
            for j in 0..n {
                cubes.push(DyadicCube::new(level, [i, j]));
            }
        }
        CubeSet::new(cubes)
    }

    fn g(x: &Point<2>) -> f64 {
        (3.0 * x[0]).sin() + x[0] * x[1] * x[1]
    }

    fn run(
        set: &CubeSet<2>,
        mesh: &Mesh<2>,
        params: &[NormParams],
        quad: &QuadratureSpec,
    ) -> Vec<SeminormValue> {
        let s = Samples::build(
            mesh,
            quad.nodes_per_axis,
            quad.diag_refine_depth,
            1,
            |_, x| Ok(vec![g(x)]),
        )
        .unwrap();
        seminorm_pass(set, mesh, &s, &[0], params, Region::Full, None, quad).unwrap()
    }

    #[test]
    fn anisotropic_plan_halves_long_axes_first() {
        let b = Aabb::new([0.0, 0.0], [4.0, 1.0]);
        let bits: Vec<[u8; 2]> = plan(&b, 3).iter().map(|p| p.0).collect();
        assert_eq!(bits, vec![[0, 0], [1, 0], [2, 0], [3, 1]]);
        let starts: Vec<usize> = plan(&b, 3).iter().map(|p| p.1).collect();
        assert_eq!(starts, vec![0, 1, 3, 7]);
        for b in 0..16 {
            assert_eq!(box_index(&box_coords(b, &[3, 1]), &[3, 1]), b);
        }
    }

    #[test]
    fn multipole_matches_direct_sums() {
        let set = grid(3, 8);
        let mesh = Mesh::cubes(&set);
        let params = [
            NormParams::new(0, 0.5, 2.0, 2.0),
            NormParams::new(0, 0.3, 3.0, 4.0),
        ];
        let base = QuadratureSpec {
            diag_refine_depth: 2,
            ..Default::default()
        };
        let exact = run(
            &set,
            &mesh,
            &params,
            &QuadratureSpec {
                far_field_ratio: 0.0,
                ..base
            },
        );
        for far in [2.0, 4.0] {
            let approx = run(
                &set,
                &mesh,
                &params,
                &QuadratureSpec {
                    far_field_ratio: far,
                    ..base
                },
            );
            for (a, e) in approx.iter().zip(&exact) {
                assert!(
                    (a.value / e.value - 1.0).abs() < 1e-3,
                    "far {far}: {a:?} vs {e:?}"
                );
            }
        }
    }

    #[test]
    fn sup_kernel_matches_brute_force_at_depth_zero() {
        let set = grid(2, 4);
        let mesh = Mesh::cubes(&set);
        let quad = QuadratureSpec {
            diag_refine_depth: 0,
            ..Default::default()
        };
        let (sigma, p) = (0.4, 2.0);
        let got = run(
            &set,
            &mesh,
            &[NormParams::new(0, sigma, p, f64::INFINITY)],
            &quad,
        )[0]
        .value;
        let s = Samples::build(&mesh, quad.nodes_per_axis, 0, 1, |_, x| Ok(vec![g(x)])).unwrap();
        let nodes: Vec<(Point<2>, f64)> = (0..s.elements())
            .flat_map(|e| s.level0(e).map(|(x, w, _)| (*x, w)).collect::<Vec<_>>())
            .collect();
        let mut outer = 0.0;
        for (x, w) in &nodes {
            let mut best = 0.0f64;
            for (y, _) in &nodes {
                let r = dist2(x, y).sqrt();
                if r > 0.0 {
                    best = best.max((g(x) - g(y)).abs() / r.powf(sigma));
                }
            }
            outer += w * best.powf(p);
        }
        let want = outer.powf(1.0 / p);
        assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn panel_cuts_leave_smooth_integrals_nearly_unchanged() {
        let set = grid(2, 4);
        let params = [NormParams::new(0, 0.5, 2.0, 2.0)];
        let quad = QuadratureSpec {
            diag_refine_depth: 3,
            ..Default::default()
        };
        let plain = run(&set, &Mesh::cubes(&set), &params, &quad)[0];
        let cut = Mesh::with_cuts(&set, |ci| {
            let b = set.get(ci).bbox();
            std::array::from_fn(|a| {
                vec![b.lo[a] + 0.05 * b.extent(a), b.hi[a] - 0.05 * b.extent(a)]
            })
        });
        assert_eq!(cut.elements.len(), 9 * set.len());
        assert_eq!(cut.of_cube(3), 27..36);
        let paneled = run(&set, &cut, &params, &quad)[0];
        assert!(
            (paneled.value / plain.value - 1.0).abs() < 2e-2,
            "{paneled:?} vs {plain:?}"
        );
    }

    #[test]
    fn parameters_are_independent_within_a_pass() {
        let set = grid(2, 4);
        let mesh = Mesh::cubes(&set);
        let quad = QuadratureSpec {
            diag_refine_depth: 2,
            far_field_ratio: 2.0,
            ..Default::default()
        };
        let params = [
            NormParams::new(0, 0.5, 2.0, f64::INFINITY),
            NormParams::new(0, 0.5, 2.0, 2.0),
            NormParams::new(0, 0.2, 2.0, f64::INFINITY),
        ];
        let together = run(&set, &mesh, &params, &quad);
        for (i, p) in params.iter().enumerate() {
            let alone = run(&set, &mesh, std::slice::from_ref(p), &quad)[0];
            assert_eq!(alone.value, together[i].value);
            assert_eq!(alone.coarse, together[i].coarse);
        }
    }
}
