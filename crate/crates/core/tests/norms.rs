use std::sync::Arc;

use proptest::prelude::*;
use uniform_ext::covering::{build_families, CoveringFamily, WhitneyParams};
use uniform_ext::domain::{make_domain, DomainSpec};
use uniform_ext::fields::{make_field, FieldFunction, FieldSpec, LinearCombination};
use uniform_ext::norms::{norm_a_spq_multi, NormParams, NormReport, QuadratureSpec, Region};

const DOMAINS: [&str; 7] = [
    "square",
    "disk",
    "lshape",
    "snowflake",
    "snowflake2",
    "slit",
    "cusp",
];
const FUNCTIONS: [&str; 6] = ["trig", "exp", "cusp", "slit_angle", "quadratic", "cubic"];

fn family(name: &str, depth: i32) -> Arc<CoveringFamily<2>> {
    let spec = match name {
        "snowflake2" => DomainSpec::Snowflake { iteration: 2 },
        _ => DomainSpec::from_name(name).unwrap(),
    };
    let oracle = make_domain(&spec).unwrap();
    Arc::new(build_families(oracle, &WhitneyParams::with_depth(depth)).unwrap())
}

fn field(name: &str) -> Arc<dyn FieldFunction<2>> {
    make_field(&FieldSpec::from_name(name).unwrap()).unwrap()
}

fn quad() -> QuadratureSpec {
    QuadratureSpec {
        nodes_per_axis: 3,
        diag_refine_depth: 2,
        ..Default::default()
    }
}

fn params() -> Vec<NormParams> {
    vec![
        NormParams::new(0, 0.5, 2.0, 2.0),
        NormParams::new(0, 0.3, 3.0, 1.5),
        NormParams::new(0, 0.5, 2.0, f64::INFINITY),
        NormParams::new(1, 0.7, 3.0, 2.0),
        NormParams::new(1, 0.7, 3.0, f64::INFINITY),
    ]
}

fn reports(
    fam: &CoveringFamily<2>,
    f: &dyn FieldFunction<2>,
    regions: &[Region],
) -> Vec<NormReport> {
    norm_a_spq_multi(f, fam, &params(), regions, &quad()).unwrap()
}

#[test]
fn region_monotonicity_on_the_gallery() {
    let regions = [
        Region::Shadow { rho: 1.5 },
        Region::Shadow { rho: 3.0 },
        Region::Ball { rho: 0.25 },
        Region::Ball { rho: 0.5 },
        Region::FiveQ,
    ];
    for d in DOMAINS {
        for depth in [3, 4] {
            let fam = family(d, depth);
            for f in FUNCTIONS {
                for rep in reports(&fam, field(f).as_ref(), &regions) {
                    let v = |r: &str, i: usize| {
                        rep.seminorms
                            .iter()
                            .filter(|s| s.region.name() == r)
                            .nth(i)
                            .unwrap()
                            .value
                    };
                    let full = rep.seminorm_full();
                    let ctx = format!("{d} depth {depth} {f} {:?}", rep.params);
                    assert!(
                        v("shadow", 0) <= v("shadow", 1) && v("shadow", 1) <= full,
                        "{ctx}"
                    );
                    assert!(
                        v("ball", 0) <= v("ball", 1) && v("ball", 1) <= full,
                        "{ctx}"
                    );
                    assert!(v("fiveq", 0) <= full, "{ctx}");
                    assert!(
                        rep.composite.is_finite() && rep.composite >= rep.wkp_norm,
                        "{ctx}"
                    );
                }
            }
        }
    }
}

#[test]
fn triangle_inequality_on_gallery_pairs() {
    let pairs = [
        ("trig", "exp"),
        ("trig", "cusp"),
        ("exp", "quadratic"),
        ("slit_angle", "cubic"),
    ];
    for d in ["square", "snowflake", "lshape"] {
        let fam = family(d, 4);
        for (a, b) in pairs {
            let (fa, fb) = (field(a), field(b));
            let sum = LinearCombination {
                terms: vec![(1.0, fa.clone()), (1.0, fb.clone())],
            };
            let ra = reports(&fam, fa.as_ref(), &[]);
            let rb = reports(&fam, fb.as_ref(), &[]);
            let rs = reports(&fam, &sum, &[]);
            for i in 0..ra.len() {
                let ctx = format!("{d} {a}+{b} {:?}", ra[i].params);
                assert!(
                    rs[i].seminorm_full() <= ra[i].seminorm_full() + rb[i].seminorm_full() + 1e-10,
                    "{ctx}"
                );
                assert!(
                    rs[i].wkp_norm <= ra[i].wkp_norm + rb[i].wkp_norm + 1e-10,
                    "{ctx}"
                );
                assert!(
                    rs[i].composite <= ra[i].composite + rb[i].composite + 1e-10,
                    "{ctx}"
                );
            }
        }
    }
}

#[test]
fn large_q_approaches_the_sup_form() {
    for d in ["square", "disk"] {
        let fam = family(d, 4);
        for f in ["trig", "exp"] {
            let ps = [
                NormParams::new(0, 0.5, 2.0, 64.0),
                NormParams::new(0, 0.5, 2.0, f64::INFINITY),
            ];
            let r = norm_a_spq_multi(field(f).as_ref(), &fam, &ps, &[], &quad()).unwrap();
            let (a, b) = (r[0].seminorm_full(), r[1].seminorm_full());
            assert!((a / b - 1.0).abs() <= 0.15, "{d} {f}: q=64 {a} vs sup {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn norms_are_homogeneous(c in prop_oneof![-6.0f64..-0.1, 0.1f64..6.0], fi in 0usize..3) {
        let fam = family("square", 3);
        let f = field(["trig", "exp", "cusp"][fi]);
        let scaled = LinearCombination { terms: vec![(c, f.clone())] };
        let regions = [Region::Shadow { rho: 1.5 }, Region::Ball { rho: 0.5 }];
        let base = reports(&fam, f.as_ref(), &regions);
        let got = reports(&fam, &scaled, &regions);
        for (a, b) in base.iter().zip(&got) {
            let close = |x: f64, y: f64| (c.abs() * x - y).abs() <= 1e-12 * y.abs().max(1e-300);
            prop_assert!(close(a.lp_norm, b.lp_norm));
            prop_assert!(close(a.wkp_norm, b.wkp_norm));
            prop_assert!(close(a.composite, b.composite));
            for (s, t) in a.seminorms.iter().zip(&b.seminorms) {
                prop_assert!(close(s.value, t.value), "{:?}: {} vs {}", s.region, c.abs() * s.value, t.value);
            }
        }
    }
}
