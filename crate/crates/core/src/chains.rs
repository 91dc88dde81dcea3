//! Chains of interior Whitney cubes, admissibility, shadows and the sum
//! diagnostics built on them.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{sample_pairs, CoveringFamily, CubeSet};
use crate::error::{Error, Result};
use crate::geometry::{long_distance, Aabb, DyadicCube, LongDistance};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// Ascent stops once `ℓ ≥ ascent_factor · D(q, s)`.
    pub ascent_factor: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            ascent_factor: 0.25,
        }
    }
}

/// `cubes[central]` is the first largest cube (0-based position).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain<const D: usize> {
    pub cubes: Vec<DyadicCube<D>>,
    #[serde(skip)]
    pub ids: Vec<usize>,
    pub central: usize,
}

impl<const D: usize> Chain<D> {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn first(&self) -> DyadicCube<D> {
        self.cubes[0]
    }

    pub fn last(&self) -> DyadicCube<D> {
        self.cubes[self.cubes.len() - 1]
    }

    pub fn central_cube(&self) -> DyadicCube<D> {
        self.cubes[self.central]
    }

    /// `ℓ([Q,S]) = Σ ℓ(Q_j)`.
    pub fn length(&self) -> f64 {
        self.cubes.iter().map(|c| c.side()).sum()
    }

    fn from_ids(set: &CubeSet<D>, ids: Vec<usize>) -> Self {
        let cubes: Vec<DyadicCube<D>> = ids.iter().map(|&i| set.get(i)).collect();
        let mut central = 0;
        for (j, c) in cubes.iter().enumerate() {
            if c.side() > cubes[central].side() {
                central = j;
            }
        }
        Self {
            cubes,
            ids,
            central,
        }
    }
}

/// Shortest-path tree from one source, edge weight = side of the entered cube.
struct PathTree {
    cost: Vec<f64>,
    parent: Vec<usize>,
}

#[derive(PartialEq)]
struct HeapKey(f64, usize);

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn dijkstra<const D: usize>(set: &CubeSet<D>, source: usize) -> PathTree {
    let n = set.len();
    let mut cost = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    cost[source] = 0.0;
    heap.push(Reverse(HeapKey(0.0, source)));
    while let Some(Reverse(HeapKey(c, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &v in set.neighbors_of(u) {
            if done[v] {
                continue;
            }
            let nc = c + set.get(v).side();
            if nc < cost[v] || (nc == cost[v] && u < parent[v]) {
                cost[v] = nc;
                parent[v] = u;
                heap.push(Reverse(HeapKey(nc, v)));
            }
        }
    }
    PathTree { cost, parent }
}

/// Chain construction over a fixed interior family. Shortest-path trees are
/// cached per source peak (written once, then shared).
pub struct ChainBuilder<'a, const D: usize> {
    set: &'a CubeSet<D>,
    params: ChainParams,
    component: Vec<usize>,
    components: usize,
    trees: Vec<OnceLock<PathTree>>,
}

impl<'a, const D: usize> ChainBuilder<'a, D> {
    pub fn new(fam: &'a CoveringFamily<D>, params: ChainParams) -> Self {
        Self::over(&fam.w1, params)
    }

    pub fn over(set: &'a CubeSet<D>, params: ChainParams) -> Self {
        let (component, components) = set.components();
        Self {
            set,
            params,
            component,
            components,
            trees: (0..set.len()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn set(&self) -> &'a CubeSet<D> {
        self.set
    }

    pub fn components(&self) -> usize {
        self.components
    }

    fn ascend(&self, start: usize, target: f64) -> Vec<usize> {
        let mut path = vec![start];
        let mut cur = start;
        loop {
            let side = self.set.get(cur).side();
            if side >= target {
                return path;
            }
            // ids follow the lexicographic cube order, so the first maximum wins ties
            let mut best: Option<usize> = None;
            for &v in self.set.neighbors_of(cur) {
                if best.map_or(true, |b| self.set.get(v).side() > self.set.get(b).side()) {
                    best = Some(v);
                }
            }
            match best {
                Some(b) if self.set.get(b).side() > side => {
                    path.push(b);
                    cur = b;
                }
                _ => return path,
            }
        }
    }

    fn tree(&self, source: usize) -> &PathTree {
        self.trees[source].get_or_init(|| dijkstra(self.set, source))
    }

    /// Chain between the cubes with ids `q` and `s` in the interior family.
    pub fn build_ids(&self, q: usize, s: usize) -> Result<Chain<D>> {
        if self.component[q] != self.component[s] {
            return Err(Error::NoChain {
                components: self.components,
                source_component: self.component[q],
                target_component: self.component[s],
            });
        }
        if q == s {
            return Ok(Chain::from_ids(self.set, vec![q]));
        }
        let target = self.params.ascent_factor * long_distance(&self.set.get(q), &self.set.get(s));
        let up = self.ascend(q, target);
        let down = self.ascend(s, target);
        let (pq, ps) = (*up.last().unwrap(), *down.last().unwrap());
        let tree = self.tree(pq);
        let mut bridge = vec![ps];
        let mut cur = ps;
        while cur != pq {
            cur = tree.parent[cur];
            bridge.push(cur);
        }
        bridge.reverse();
        let mut walk = up;
        walk.extend_from_slice(&bridge[1..]);
        walk.extend(down.iter().rev().skip(1));
        // splice out loops so that every cube appears once
        let mut out: Vec<usize> = Vec::with_capacity(walk.len());
        let mut pos: HashMap<usize, usize> = HashMap::new();
        for id in walk {
            if let Some(&p) = pos.get(&id) {
                for removed in out.drain(p + 1..) {
                    pos.remove(&removed);
                }
            } else {
                pos.insert(id, out.len());
                out.push(id);
            }
        }
        Ok(Chain::from_ids(self.set, out))
    }

    pub fn build(&self, q: &DyadicCube<D>, s: &DyadicCube<D>) -> Result<Chain<D>> {
        let find = |c: &DyadicCube<D>| {
            self.set
                .index_of(c)
                .ok_or_else(|| Error::NotInFamily(c.to_string()))
        };
        self.build_ids(find(q)?, find(s)?)
    }

    /// Minimal `Σ ℓ` over all chains from `q` to `s` (both endpoints counted).
    pub fn minimal_length(&self, q: usize, s: usize) -> f64 {
        self.tree(q).cost[s] + self.set.get(q).side()
    }
}

pub fn build_chain<const D: usize>(
    fam: &CoveringFamily<D>,
    q: &DyadicCube<D>,
    s: &DyadicCube<D>,
) -> Result<Chain<D>> {
    ChainBuilder::new(fam, ChainParams::default()).build(q, s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// `(D(Q1, QM)/ℓ([Q,S])) / ε`; at least 1 when the length condition holds.
    pub length_margin: f64,
    /// Best ascent margin over all `j0`, realized constant over `ε`.
    pub ascent_margin: f64,
    /// 0-based position of the best `j0`.
    pub j0: usize,
}

fn ascent_profile<const D: usize>(chain: &Chain<D>, dist: LongDistance) -> (f64, usize) {
    let m = chain.len();
    let (a, z) = (chain.first(), chain.last());
    let mut prefix = vec![0.0; m];
    let mut run = f64::INFINITY;
    for (j, c) in chain.cubes.iter().enumerate() {
        run = run.min(c.side() / dist.eval(&a, c));
        prefix[j] = run;
    }
    let mut suffix = vec![0.0; m];
    run = f64::INFINITY;
    for (j, c) in chain.cubes.iter().enumerate().rev() {
        run = run.min(c.side() / dist.eval(c, &z));
        suffix[j] = run;
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for j in 0..m {
        let v = prefix[j].min(suffix[j]);
        if v > best.0 {
            best = (v, j);
        }
    }
    best
}

/// Largest `ε` for which `chain` is ε-admissible, with the `j0` attaining it.
/// `j0` ranges over every position of the chain.
pub fn best_epsilon<const D: usize>(chain: &Chain<D>, dist: LongDistance) -> (f64, usize) {
    let length = dist.eval(&chain.first(), &chain.last()) / chain.length();
    let (ascent, j0) = ascent_profile(chain, dist);
    (length.min(ascent), j0)
}

/// Both inequalities are closed: equality counts as admissible.
pub fn admissibility<const D: usize>(chain: &Chain<D>, eps: f64) -> Admissibility {
    admissibility_with(chain, eps, LongDistance::Standard)
}

pub fn admissibility_with<const D: usize>(
    chain: &Chain<D>,
    eps: f64,
    dist: LongDistance,
) -> Admissibility {
    let big_d = dist.eval(&chain.first(), &chain.last());
    let length_ok = chain.length() * eps <= big_d;
    let (ascent, j0) = ascent_profile(chain, dist);
    let m = chain.len();
    let (a, z) = (chain.first(), chain.last());
    let ascent_ok = chain.cubes[..=j0]
        .iter()
        .all(|c| c.side() >= eps * dist.eval(&a, c))
        && chain.cubes[j0..m]
            .iter()
            .all(|c| c.side() >= eps * dist.eval(c, &z));
    Admissibility {
        admissible: length_ok && ascent_ok,
        length_margin: big_d / chain.length() / eps,
        ascent_margin: ascent / eps,
        j0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniformityOptions {
    pub pair_budget: usize,
    pub seed: u64,
    /// Only pairs with `D(q, s) ≤ max_long_distance`.
    pub max_long_distance: Option<f64>,
    pub distance: LongDistance,
}

impl Default for UniformityOptions {
    fn default() -> Self {
        Self {
            pair_budget: 20_000,
            seed: 7,
            max_long_distance: None,
            distance: LongDistance::Standard,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord<const D: usize> {
    pub q: DyadicCube<D>,
    pub s: DyadicCube<D>,
    pub long_distance: f64,
    pub chain_cubes: usize,
    /// `ℓ([Q,S]) / D(Q,S)`.
    pub length_ratio: f64,
    /// `D(Q,S) / ℓ(Q_S)` with `Q_S` the largest chain cube.
    pub central_ratio: f64,
    pub epsilon: f64,
}

/// `epsilon_hat` is measured on the constructed chains: a lower bound for the
/// best constant of this discretization, not a statement about the continuum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport<const D: usize> {
    pub epsilon_hat: f64,
    pub worst_pair: Option<(DyadicCube<D>, DyadicCube<D>)>,
    pub pairs: usize,
    pub exhaustive: bool,
    pub max_length_ratio: f64,
    pub max_central_ratio: f64,
    pub per_pair: Vec<PairRecord<D>>,
}

/// Unordered pairs `i < j`; all of them within budget, otherwise a seeded
/// sample balanced over the dyadic bands of `D(q, s)`.
fn uniformity_pairs<const D: usize>(
    set: &CubeSet<D>,
    opts: &UniformityOptions,
) -> (Vec<(usize, usize)>, bool) {
    let n = set.len();
    let keep = |i: usize, j: usize| {
        opts.max_long_distance
            .map_or(true, |m| long_distance(&set.get(i), &set.get(j)) <= m)
    };
    let total = n * n.saturating_sub(1) / 2;
    if total <= opts.pair_budget {
        let pairs = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| keep(i, j))
            .collect();
        return (pairs, true);
    }
    let mut bands: BTreeMap<i32, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, j) in sample_pairs(n, n, 8 * opts.pair_budget, opts.seed) {
        if i == j || !keep(i, j) {
            continue;
        }
        let (i, j) = (i.min(j), i.max(j));
        let band = long_distance(&set.get(i), &set.get(j)).log2().floor() as i32;
        bands.entry(band).or_default().push((i, j));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    for v in bands.values_mut() {
        v.sort_unstable();
        v.dedup();
        v.shuffle(&mut rng);
    }
    let mut out = Vec::with_capacity(opts.pair_budget);
    let mut round = 0;
    while out.len() < opts.pair_budget {
        let mut any = false;
        for v in bands.values() {
            if let Some(&p) = v.get(round) {
                out.push(p);
                any = true;
                if out.len() == opts.pair_budget {
                    break;
                }
            }
        }
        if !any {
            break;
        }
        round += 1;
    }
    out.sort_unstable();
    (out, false)
}

pub fn estimate_uniformity<const D: usize>(
    builder: &ChainBuilder<'_, D>,
    opts: &UniformityOptions,
) -> Result<UniformityReport<D>> {
    let set = builder.set();
    if set.is_empty() {
        return Err(Error::EmptyCover);
    }
    let (pairs, exhaustive) = uniformity_pairs(set, opts);
    let records: Vec<PairRecord<D>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let chain = builder.build_ids(i, j)?;
            let d = long_distance(&chain.first(), &chain.last());
            let (eps, _) = best_epsilon(&chain, opts.distance);
            Ok(PairRecord {
                q: chain.first(),
                s: chain.last(),
                long_distance: d,
                chain_cubes: chain.len(),
                length_ratio: chain.length() / d,
                central_ratio: d / chain.central_cube().side(),
                epsilon: eps,
            })
        })
        .collect::<Result<_>>()?;
    let mut rep = UniformityReport {
        epsilon_hat: f64::INFINITY,
        worst_pair: None,
        pairs: records.len(),
        exhaustive,
        max_length_ratio: 0.0,
        max_central_ratio: 0.0,
        per_pair: Vec::new(),
    };
    for r in &records {
        if r.epsilon < rep.epsilon_hat {
            rep.epsilon_hat = r.epsilon;
            rep.worst_pair = Some((r.q, r.s));
        }
        rep.max_length_ratio = rep.max_length_ratio.max(r.length_ratio);
        rep.max_central_ratio = rep.max_central_ratio.max(r.central_ratio);
    }
    if records.is_empty() {
        // a single cube: only the singleton chain, whose best ε is 1/2
        rep.epsilon_hat = 0.5;
    }
    rep.per_pair = records;
    Ok(rep)
}

/// Members of `SH_ρ(P)` (ids in `set`) and the measure of their union.
#[derive(Clone, Debug, PartialEq)]
pub struct Shadow {
    pub members: Vec<usize>,
    pub volume: f64,
}

/// Is the closed box of `q` inside the closed ball `B(x_P, ρ ℓ(P))`?
pub fn in_shadow<const D: usize>(q: &DyadicCube<D>, p: &DyadicCube<D>, rho: f64) -> bool {
    q.bbox().max_dist_point(&p.center()) <= rho * p.side()
}

pub fn shadow<const D: usize>(set: &CubeSet<D>, p: usize, rho: f64) -> Shadow {
    let pc = set.get(p);
    let r = rho * pc.side();
    let c = pc.center();
    let window = Aabb::new(c.map(|v| v - r), c.map(|v| v + r));
    let members: Vec<usize> = set
        .inside_box(&window)
        .into_iter()
        .filter(|&i| in_shadow(&set.get(i), &pc, rho))
        .collect();
    let volume = members.iter().map(|&i| set.get(i).volume()).sum();
    Shadow { members, volume }
}

/// Smallest `ρ` needed by a chain: every `P` between an endpoint and the
/// central cube sees that endpoint in `SH_ρ(P)`, and every cube lies in `SH_ρ(Q_S)`.
pub fn chain_required_rho<const D: usize>(chain: &Chain<D>) -> f64 {
    let need =
        |q: &DyadicCube<D>, p: &DyadicCube<D>| q.bbox().max_dist_point(&p.center()) / p.side();
    let (a, z) = (chain.first(), chain.last());
    let c = chain.central;
    let mut rho: f64 = 0.0;
    for p in &chain.cubes[..=c] {
        rho = rho.max(need(&a, p));
    }
    for p in &chain.cubes[c..] {
        rho = rho.max(need(&z, p));
    }
    let qs = chain.central_cube();
    for p in &chain.cubes {
        rho = rho.max(need(p, &qs));
    }
    rho
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub rho_epsilon: f64,
    pub exact_requirement: f64,
    pub chains_checked: usize,
    pub certified: bool,
}

/// Search grid step for `ρ_ε`.
pub const RHO_GRID: f64 = 1.0 / 16.0;

/// `ρ_ε` on the `1/16` grid (and above 1) certifying both chain–shadow
/// properties for the chains behind `report`.
pub fn rho_epsilon<const D: usize>(
    builder: &ChainBuilder<'_, D>,
    report: &UniformityReport<D>,
) -> Result<RhoReport> {
    let chains: Vec<Chain<D>> = report
        .per_pair
        .par_iter()
        .map(|r| builder.build(&r.q, &r.s))
        .collect::<Result<_>>()?;
    let exact = chains.iter().map(chain_required_rho).fold(0.0, f64::max);
    let mut rho = ((exact / RHO_GRID).ceil() * RHO_GRID).max(1.0 + RHO_GRID);
    // rounding can land exactly on the requirement; step until the check passes
    let check = |rho: f64| {
        chains.iter().all(|ch| {
            let (a, z, qs) = (ch.first(), ch.last(), ch.central_cube());
            ch.cubes[..=ch.central]
                .iter()
                .all(|p| in_shadow(&a, p, rho))
                && ch.cubes[ch.central..].iter().all(|p| in_shadow(&z, p, rho))
                && ch.cubes.iter().all(|p| in_shadow(p, &qs, rho))
        })
    };
    let mut steps = 0;
    while !check(rho) && steps < 4 {
        rho += RHO_GRID;
        steps += 1;
    }
    Ok(RhoReport {
        rho_epsilon: rho,
        exact_requirement: exact,
        chains_checked: chains.len(),
        certified: check(rho),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowSumRow {
    pub s: f64,
    /// `sup_Q ℓ(Q)^s Σ_{L: Q∈SH(L)} ℓ(L)^{-s}`.
    pub ascending_to_glory: f64,
    /// `sup Σ_{L∈[Q,P]} ℓ(L)^s / ℓ(P)^s` over sampled `Q ∈ SH(P)`.
    pub ascending_path_up: f64,
    /// `sup ℓ(Q)^s Σ_{L∈[Q,P]} ℓ(L)^{-s}` over the same pairs.
    pub ascending_path_down: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowSumReport {
    pub rho: f64,
    pub shadow_pairs: usize,
    pub sampled_pairs: usize,
    pub rows: Vec<ShadowSumRow>,
}

/// All `(Q, L)` with `Q ∈ SH_ρ(L)`, ordered by `(L, Q)`.
pub fn shadow_relation<const D: usize>(set: &CubeSet<D>, rho: f64) -> Vec<(usize, usize)> {
    let per: Vec<Vec<(usize, usize)>> = (0..set.len())
        .into_par_iter()
        .map(|l| {
            shadow(set, l, rho)
                .members
                .into_iter()
                .map(|q| (q, l))
                .collect()
        })
        .collect();
    per.into_iter().flatten().collect()
}

pub fn shadow_sum_diagnostics<const D: usize>(
    builder: &ChainBuilder<'_, D>,
    rho: f64,
    s_exponents: &[f64],
    pair_budget: usize,
    seed: u64,
) -> Result<ShadowSumReport> {
    let set = builder.set();
    let rel = shadow_relation(set, rho);
    let mut sampled: Vec<(usize, usize)> = if rel.len() <= pair_budget {
        rel.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = rel.clone();
        v.shuffle(&mut rng);
        v.truncate(pair_budget);
        v.sort_unstable();
        v
    };
    sampled.retain(|&(q, l)| q != l || set.len() == 1);
    let chains: Vec<Chain<D>> = sampled
        .par_iter()
        .map(|&(q, p)| builder.build_ids(q, p))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &s in s_exponents {
        let mut sums = vec![0.0; set.len()];
        for &(q, l) in &rel {
            sums[q] += set.get(l).side().powf(-s);
        }
        let glory = (0..set.len())
            .map(|q| set.get(q).side().powf(s) * sums[q])
            .fold(0.0, f64::max);
        let mut up: f64 = 0.0;
        let mut down: f64 = 0.0;
        for ch in &chains {
            let (q, p) = (ch.first(), ch.last());
            let su: f64 = ch.cubes.iter().map(|c| c.side().powf(s)).sum();
            let sd: f64 = ch.cubes.iter().map(|c| c.side().powf(-s)).sum();
            up = up.max(su / p.side().powf(s));
            down = down.max(sd * q.side().powf(s));
        }
        rows.push(ShadowSumRow {
            s,
            ascending_to_glory: glory,
            ascending_path_up: up,
            ascending_path_down: down,
        });
    }
    Ok(ShadowSumReport {
        rho,
        shadow_pairs: rel.len(),
        sampled_pairs: chains.len(),
        rows,
    })
}

/// Indicator of a closed box, the test function for the maximal-operator checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxIndicator<const D: usize> {
    pub support: Aabb<D>,
}

impl<const D: usize> BoxIndicator<D> {
    /// `∫_B g`, exact.
    pub fn integral(&self, b: &Aabb<D>) -> f64 {
        self.support.intersection(b).map_or(0.0, |i| i.volume())
    }

    /// Brute-force uncentred maximal function over cubes containing `y`:
    /// sides `ℓ·2^{k/2}` for `k ∈ [-6, 16]` and 9 placements per axis.
    pub fn maximal(&self, y: &[f64; D], ell: f64) -> f64 {
        let mut best: f64 = 0.0;
        for k in -6..=16 {
            let h = ell * 2f64.powf(k as f64 / 2.0);
            let vol = h.powi(D as i32);
            let mut shift = [0usize; D];
            loop {
                let lo: [f64; D] = std::array::from_fn(|a| y[a] - h * shift[a] as f64 / 8.0);
                let b = Aabb::new(lo, lo.map(|v| v + h));
                best = best.max(self.integral(&b) / vol);
                let mut a = 0;
                loop {
                    if a == D {
                        break;
                    }
                    shift[a] += 1;
                    if shift[a] <= 8 {
                        break;
                    }
                    shift[a] = 0;
                    a += 1;
                }
                if a == D {
                    break;
                }
            }
        }
        best
    }

    /// `inf_{y∈Q} Mg(y)` over a 3^d grid of points of `Q` (corners, mid-faces, centre).
    pub fn inf_maximal_on(&self, q: &DyadicCube<D>) -> f64 {
        let b = q.bbox();
        let mut best = f64::INFINITY;
        let mut t = [0usize; D];
        loop {
            let y: [f64; D] = std::array::from_fn(|a| b.lo[a] + 0.5 * t[a] as f64 * q.side());
            best = best.min(self.maximal(&y, q.side()));
            let mut a = 0;
            loop {
                if a == D {
                    return best;
                }
                t[a] += 1;
                if t[a] <= 2 {
                    break;
                }
                t[a] = 0;
                a += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalRow {
    pub eta: f64,
    /// `sup_Q ℓ(Q)^η Σ_S ℓ(S)^d / D(Q,S)^{d+η}`.
    pub all_over: f64,
    /// Realized constants of the cube forms of the far and close inequalities,
    /// maximized over the test functions and radii `r ∈ {2ℓ(Q), 8ℓ(Q)}`.
    pub far: f64,
    pub close: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalReport {
    pub rho: f64,
    /// `sup_Q Σ_{S∈SH_ρ(Q)} ℓ(S)^d / ℓ(Q)^d`.
    pub shadow_volume: f64,
    /// `sup_Q Σ_{S∈SH_ρ(Q)} ∫_S g / (inf_Q Mg · ℓ(Q)^d)`.
    pub shadow_mass: f64,
    pub cubes_sampled: usize,
    pub rows: Vec<MaximalRow>,
}

/// Maximal-operator sums on the interior family. The far/close and
/// shadow-mass constants use at most `cube_budget` cubes (seeded sample).
pub fn maximal_diagnostics<const D: usize>(
    set: &CubeSet<D>,
    rho: f64,
    etas: &[f64],
    tests: &[BoxIndicator<D>],
    cube_budget: usize,
    seed: u64,
) -> MaximalReport {
    let n = set.len();
    let dd = D as f64;
    let mut sample: Vec<usize> = (0..n).collect();
    if n > cube_budget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample.shuffle(&mut rng);
        sample.truncate(cube_budget);
        sample.sort_unstable();
    }
    let shadow_volume = (0..n)
        .into_par_iter()
        .map(|q| {
            let sh = shadow(set, q, rho);
            sh.volume / set.get(q).volume()
        })
        .reduce(|| 0.0, f64::max);
    // per sampled cube: inf Mg for each test function
    let infs: Vec<Vec<f64>> = sample
        .par_iter()
        .map(|&q| {
            tests
                .iter()
                .map(|g| g.inf_maximal_on(&set.get(q)))
                .collect()
        })
        .collect();
    let masses: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            tests
                .iter()
                .map(|g| g.integral(&set.get(s).bbox()))
                .collect()
        })
        .collect();
    let shadow_mass = sample
        .par_iter()
        .enumerate()
        .map(|(k, &q)| {
            let sh = shadow(set, q, rho);
            let lq = set.get(q).volume();
            (0..tests.len())
                .filter(|&t| infs[k][t] > 0.0)
                .map(|t| sh.members.iter().map(|&s| masses[s][t]).sum::<f64>() / (infs[k][t] * lq))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let rows = etas
        .iter()
        .map(|&eta| {
            let all_over = (0..n)
                .into_par_iter()
                .map(|q| {
                    let qc = set.get(q);
                    let sum: f64 = set
                        .cubes()
                        .iter()
                        .map(|s| s.volume() / long_distance(&qc, s).powf(dd + eta))
                        .sum();
                    qc.side().powf(eta) * sum
                })
                .reduce(|| 0.0, f64::max);
            let (far, close) = sample
                .par_iter()
                .enumerate()
                .map(|(k, &q)| {
                    let qc = set.get(q);
                    let mut far: f64 = 0.0;
                    let mut close: f64 = 0.0;
                    for r in [2.0 * qc.side(), 8.0 * qc.side()] {
                        for t in 0..tests.len() {
                            let m = infs[k][t];
                            if m <= 0.0 {
                                continue;
                            }
                            let (mut lf, mut lc) = (0.0, 0.0);
                            for (s, sc) in set.cubes().iter().enumerate() {
                                let dqs = long_distance(&qc, sc);
                                if dqs > r {
                                    lf += masses[s][t] / dqs.powf(dd + eta);
                                } else if dqs < r {
                                    lc += masses[s][t] / dqs.powf(dd - eta);
                                }
                            }
                            far = far.max(lf / (m / r.powf(eta)));
                            close = close.max(lc / (m * r.powf(eta)));
                        }
                    }
                    (far, close)
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            MaximalRow {
                eta,
                all_over,
                far,
                close,
            }
        })
        .collect();
    MaximalReport {
        rho,
        shadow_volume,
        shadow_mass,
        cubes_sampled: sample.len(),
        rows,
    }
}
