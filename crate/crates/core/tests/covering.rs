use std::collections::BTreeSet;

use proptest::prelude::*;
use uniform_ext::covering::{whitney_cover, Side, WhitneyParams};
use uniform_ext::domain::{slit_square, BallDomain, BoxDomain};
use uniform_ext::geometry::{Aabb, DyadicCube};

/// Distance from a closed box inside the unit square to its boundary.
fn square_gap(b: &Aabb<2>) -> f64 {
    (0..2)
        .map(|a| b.lo[a].min(1.0 - b.hi[a]))
        .fold(f64::INFINITY, f64::min)
}

fn keeps(gap: f64, l: f64, c_w: f64) -> bool {
    gap > 0.0 && l + gap >= c_w * l
}

/// Every dyadic cube in the unit square whose ancestors all needed
/// subdivision and which itself passes the keep test.
fn brute_force_square(max_generation: i32, c_w: f64) -> BTreeSet<DyadicCube<2>> {
    let mut out = BTreeSet::new();
    for g in 0..=max_generation {
        let n = 1i64 << g;
        for i in 0..n {
            for j in 0..n {
                let q = DyadicCube::new(g, [i, j]);
                let mut anc = q;
                let mut ancestors_subdivide = true;
                while anc.generation > 0 {
                    anc = anc.parent();
                    if keeps(square_gap(&anc.bbox()), anc.side(), c_w) {
                        ancestors_subdivide = false;
                        break;
                    }
                }
                if ancestors_subdivide && keeps(square_gap(&q.bbox()), q.side(), c_w) {
                    out.insert(q);
                }
            }
        }
    }
    out
}

#[test]
fn square_cover_matches_brute_force_enumeration() {
    let sq = BoxDomain::unit();
    for c_w in [1.0, 2.0, 3.0] {
        for depth in [3, 5, 6] {
            let params = WhitneyParams {
                c_w,
                max_generation: depth,
                ..Default::default()
            };
            let cover = whitney_cover(&sq, Side::Interior, &params).unwrap();
            let got: BTreeSet<_> = cover.cubes.iter().copied().collect();
            assert_eq!(
                got,
                brute_force_square(depth, c_w),
                "c_w {c_w} depth {depth}"
            );
        }
    }
}

#[test]
fn disk_cubes_satisfy_the_whitney_inequality_with_an_exact_distance() {
    let disk = BallDomain::new([0.0, 0.0], 1.0).unwrap();
    let cover = whitney_cover(&disk, Side::Interior, &WhitneyParams::with_depth(7)).unwrap();
    let cubes = &cover.cubes;
    assert!(cubes.len() > 100);
    for q in cubes {
        let b = q.bbox();
        // the farthest point of a box from the centre is a corner
        let far = b
            .corners()
            .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
            .fold(0.0, f64::max);
        let gap = 1.0 - far;
        let big_d = q.side() + gap;
        assert!(
            gap > 0.0 && big_d >= q.side() && big_d <= 4.0 * q.side(),
            "{q:?}"
        );
    }
    // pairwise disjoint interiors
    for (i, a) in cubes.iter().enumerate() {
        for b in &cubes[i + 1..] {
            assert!(!a.is_within(b) && !b.is_within(a));
        }
    }
    let covered: f64 = cubes.iter().map(|c| c.volume()).sum();
    assert!((covered + cover.uncovered_volume - std::f64::consts::PI).abs() < 1e-9);
}

#[test]
fn slit_uncovered_volume_shrinks_with_the_boundary_layer() {
    let slit = slit_square();
    let mut prev = f64::INFINITY;
    for depth in [5, 6, 7] {
        let cover =
            whitney_cover(&slit, Side::Interior, &WhitneyParams::with_depth(depth)).unwrap();
        let u = cover.uncovered_volume;
        // the uncovered layer has width below two finest cells along the
        // outer boundary (length 4) and both faces of the slit (2 × 0.5)
        let layer = 2.0 * 2f64.powi(-depth) * (4.0 + 1.0);
        assert!(u > 0.0 && u <= layer, "depth {depth}: {u} vs {layer}");
        assert!(u < prev);
        prev = u;
        // no kept cube straddles the slit
        for q in &cover.cubes {
            let b = q.bbox();
            assert!(!(b.lo[0] < 0.5 && b.hi[0] > 0.5 && b.lo[1] < 0.5), "{q:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_square_point_away_from_the_boundary_is_covered(x in 0.01f64..0.99, y in 0.01f64..0.99) {
        let sq = BoxDomain::unit();
        let cover = whitney_cover(&sq, Side::Interior, &WhitneyParams::with_depth(8)).unwrap();
        let hits = cover.cubes.iter().filter(|q| q.bbox().contains_point(&[x, y])).count();
        prop_assert!(hits >= 1 && hits <= 4);
    }
}
