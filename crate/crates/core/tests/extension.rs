use std::sync::Arc;

use uniform_ext::covering::{build_families, CoveringFamily, WhitneyParams};
use uniform_ext::domain::{koch_snowflake, BoxDomain, DomainOracle};
use uniform_ext::extension::{build_pou, extend, ExtensionField};
use uniform_ext::fields::{Exponential, FieldFunction, TrigProduct};

#[path = "support/extension_checks.rs"]
mod checks;

use checks::{finite_difference_error, integration_by_parts, square_exterior_boxes, w3_points};

fn family(oracle: Arc<dyn DomainOracle<2>>, depth: i32) -> Arc<CoveringFamily<2>> {
    Arc::new(build_families(oracle, &WhitneyParams::with_depth(depth)).unwrap())
}

fn trig() -> Arc<dyn FieldFunction<2>> {
    Arc::new(TrigProduct {
        freq: [1.3, 0.9],
        phase: [0.2, -0.4],
    })
}

fn ext(fam: &Arc<CoveringFamily<2>>, f: Arc<dyn FieldFunction<2>>, k: usize) -> ExtensionField<2> {
    extend(f, fam.clone(), build_pou(k + 1).unwrap(), k).unwrap()
}

#[test]
fn derivatives_match_finite_differences_at_exterior_points() {
    let sq = family(Arc::new(BoxDomain::unit()), 5);
    let flake = family(Arc::new(koch_snowflake(3).unwrap()), 5);
    for (fam, f, k) in [
        (&sq, trig(), 1),
        (&sq, trig(), 2),
        (&flake, Arc::new(Exponential { rate: [0.7, -0.4] }) as Arc<dyn FieldFunction<2>>, 1),
    ] {
        let ef = ext(fam, f, k);
        let pts = w3_points(fam, 50, 11);
        assert_eq!(pts.len(), 50);
        let e = finite_difference_error(&ef, &pts);
        assert!(e <= 1e-4, "{} k={k}: {e}", fam.domain.label());
    }
}

#[test]
fn integration_by_parts_holds_across_cube_and_collar_boundaries() {
    let fam = family(Arc::new(BoxDomain::unit()), 5);
    let ef = ext(&fam, trig(), 1);
    for b in square_exterior_boxes() {
        assert!(fam.domain.box_boundary_distance(&b) > 0.0 && !fam.domain.contains(&b.center()));
        for a in 0..2 {
            let (lhs, rhs, mag) = integration_by_parts(&ef, &b, a);
            assert!(mag > 1e-3, "{b:?}: Λf nearly vanishes on the test box");
            assert!((lhs - rhs).abs() <= 1e-6, "{b:?} axis {a}: {lhs} vs {rhs}");
        }
    }
}
