//! Experiment runner: norm tables as CSV and diagnostics as JSON.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};
use uniform_ext::chains::{
    estimate_uniformity, maximal_diagnostics, rho_epsilon, shadow_sum_diagnostics, BoxIndicator, ChainBuilder, ChainParams,
    UniformityOptions,
};
use uniform_ext::covering::{build_families_in_box, CoveringFamily};
use uniform_ext::domain::{make_domain, DomainSpec};
use uniform_ext::extension::{build_pou, check_pou, extend};
use uniform_ext::fields::{make_field, FieldSpec};
use uniform_ext::geometry::Aabb;
use uniform_ext::norms::{inequality_diagnostics, norm_a_spq_multi, norm_extension_global, NormParams, Region};
use uniform_ext::Error;

use crate::config::ExperimentConfig;

/// A computation error together with the experiment it came from.
#[derive(Debug)]
pub struct Failure {
    pub experiment: String,
    pub error: Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "experiment `{}` failed: {}", self.experiment, self.error)
    }
}

impl std::error::Error for Failure {}

fn fail(experiment: impl Into<String>) -> impl FnOnce(Error) -> Failure {
    let experiment = experiment.into();
    move |error| Failure { experiment, error }
}

/// One CSV row. `ratio` is full/restricted for restricted regions,
/// global/interior composite for `global`, and 1 for `full`; `drift`
/// compares `ratio` (or `value` for `full`) with the previous depth.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub domain: String,
    pub function: String,
    pub params: NormParams,
    pub region: String,
    pub rho: Option<f64>,
    pub depth: i32,
    pub r: usize,
    pub value: f64,
    pub quad_error: f64,
    pub lp_norm: f64,
    pub wkp_norm: f64,
    pub composite: f64,
    pub ratio: f64,
    pub tail_bound: Option<f64>,
    pub valid: bool,
    pub drift: Option<f64>,
}

impl Row {
    fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{:?}",
            self.domain,
            self.function,
            self.params.k,
            self.params.sigma,
            self.params.p,
            self.params.q_label(),
            self.region,
            self.rho
        )
    }

    fn tracked(&self) -> f64 {
        if self.region == "full" {
            self.value
        } else {
            self.ratio
        }
    }
}

pub const CSV_HEADER: [&str; 19] = [
    "domain", "function", "k", "sigma", "p", "q", "region", "rho", "depth", "r", "value", "quad_error", "lp_norm", "wkp_norm",
    "composite", "ratio", "tail_bound", "valid", "drift",
];

/// Seventeen significant digits, `.` decimal.
pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.domain.clone(),
            r.function.clone(),
            r.params.k.to_string(),
            fmt_f(r.params.sigma),
            fmt_f(r.params.p),
            fmt_f(r.params.q),
            r.region.clone(),
            fmt_opt(r.rho),
            r.depth.to_string(),
            r.r.to_string(),
            fmt_f(r.value),
            fmt_f(r.quad_error),
            fmt_f(r.lp_norm),
            fmt_f(r.wkp_norm),
            fmt_f(r.composite),
            fmt_f(r.ratio),
            fmt_opt(r.tail_bound),
            r.valid.to_string(),
            fmt_opt(r.drift),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn family(cfg: &ExperimentConfig, spec: &DomainSpec, depth: i32) -> Result<Arc<CoveringFamily<2>>, Error> {
    let oracle = make_domain(spec)?;
    Ok(Arc::new(build_families_in_box(oracle, &cfg.whitney_at(depth), cfg.quadrature.computation_box_factor)?))
}

fn rows_for(cfg: &ExperimentConfig, fam: &Arc<CoveringFamily<2>>, dname: &str, fspec: &FieldSpec, depth: i32) -> Result<Vec<Row>, Error> {
    let quad = &cfg.quadrature;
    let field = make_field(fspec)?;
    let fname = fspec.name();
    let reports = norm_a_spq_multi(field.as_ref(), fam, &cfg.params, &cfg.regions, quad)?;
    for r in &reports {
        for w in &r.warnings {
            log::warn!("{dname} {fname}: {w}");
        }
    }
    let mut rows = Vec::new();
    for rep in &reports {
        let full = rep.seminorm_full();
        for sv in &rep.seminorms {
            let ratio = if sv.region == Region::Full {
                1.0
            } else if sv.value > 0.0 {
                full / sv.value
            } else {
                f64::NAN
            };
            rows.push(Row {
                domain: dname.to_string(),
                function: fname.clone(),
                params: rep.params,
                region: sv.region.name().to_string(),
                rho: sv.region.rho(),
                depth,
                r: quad.diag_refine_depth,
                value: sv.value,
                quad_error: sv.quad_error,
                lp_norm: rep.lp_norm,
                wkp_norm: rep.wkp_norm,
                composite: rep.wkp_norm + sv.value,
                ratio,
                tail_bound: None,
                valid: rep.valid,
                drift: None,
            });
        }
    }
    if cfg.extension {
        let mut ks: Vec<usize> = cfg.params.iter().map(|p| p.k).collect();
        ks.sort_unstable();
        ks.dedup();
        for k in ks {
            let sel: Vec<usize> = (0..cfg.params.len()).filter(|&i| cfg.params[i].k == k).collect();
            let ps: Vec<NormParams> = sel.iter().map(|&i| cfg.params[i]).collect();
            let ef = extend(field.clone(), fam.clone(), build_pou(k + 1)?, k)?;
            let globals = norm_extension_global(&ef, &ps, quad)?;
            for (g, &i) in globals.iter().zip(&sel) {
                let inner = &reports[i];
                let sv = &g.seminorms[0];
                rows.push(Row {
                    domain: dname.to_string(),
                    function: fname.clone(),
                    params: g.params,
                    region: "global".into(),
                    rho: None,
                    depth,
                    r: quad.diag_refine_depth,
                    value: sv.value,
                    quad_error: sv.quad_error,
                    lp_norm: g.lp_norm,
                    wkp_norm: g.wkp_norm,
                    composite: g.composite,
                    ratio: g.composite / inner.composite,
                    tail_bound: g.tail_bound,
                    valid: g.valid,
                    drift: None,
                });
            }
        }
    }
    Ok(rows)
}

/// All norm rows, ordered by domain, depth, function, parameters and region,
/// with the drift filled in against the previous depth of the same key.
pub fn norm_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>, Failure> {
    let mut rows = Vec::new();
    for spec in &cfg.domains {
        let dname = spec.name();
        for &depth in &cfg.depths {
            let fam = family(cfg, spec, depth).map_err(fail(format!("{dname} depth {depth}")))?;
            for f in &cfg.functions {
                let label = format!("{dname} depth {depth} {}", f.name());
                log::info!("running {label}");
                rows.extend(rows_for(cfg, &fam, &dname, f, depth).map_err(fail(label))?);
            }
        }
    }
    let mut prev: HashMap<String, f64> = HashMap::new();
    for r in rows.iter_mut() {
        let key = r.key();
        let t = r.tracked();
        if let Some(p) = prev.get(&key) {
            r.drift = Some(if *p != 0.0 { (t / p - 1.0).abs() } else if t == 0.0 { 0.0 } else { f64::INFINITY });
        }
        prev.insert(key, t);
    }
    Ok(rows)
}

/// Box indicators used as maximal-function test functions, placed
/// relative to the domain's bounding box.
pub fn maximal_tests(bb: &Aabb<2>) -> Vec<BoxIndicator<2>> {
    let at = |a: f64, b: f64, c: f64, d: f64| {
        let x = |t: f64| bb.lo[0] + t * bb.extent(0);
        let y = |t: f64| bb.lo[1] + t * bb.extent(1);
        BoxIndicator {
            support: Aabb::new([x(a), y(b)], [x(c), y(d)]),
        }
    };
    vec![at(0.25, 0.25, 0.75, 0.75), at(0.4, 0.45, 0.5, 0.55), at(0.1, 0.1, 0.3, 0.2)]
}

fn diagnose_one(cfg: &ExperimentConfig, spec: &DomainSpec, depth: i32) -> Result<Value, Error> {
    let opts = &cfg.diagnostics;
    let fam = family(cfg, spec, depth)?;
    let mut out = json!({
        "domain": spec.name(),
        "depth": depth,
        "families": fam.summary(),
        "warnings": fam.warnings,
    });
    let kmax = cfg.params.iter().map(|p| p.k).max().unwrap_or(0);
    let pou = build_pou(kmax + 1)?;
    out["partition"] = serde_json::to_value(check_pou(&fam, &pou, kmax + 1, 500, cfg.seed))?;
    if opts.chains {
        let builder = ChainBuilder::new(&fam, ChainParams::default());
        let uni = estimate_uniformity(
            &builder,
            &UniformityOptions {
                pair_budget: opts.pair_budget,
                seed: cfg.seed,
                ..Default::default()
            },
        )?;
        let rho = rho_epsilon(&builder, &uni)?;
        out["uniformity"] = json!({
            "epsilon_hat": uni.epsilon_hat,
            "pairs": uni.pairs,
            "exhaustive": uni.exhaustive,
            "max_length_ratio": uni.max_length_ratio,
            "max_central_ratio": uni.max_central_ratio,
            "worst_pair": uni.worst_pair,
        });
        out["rho_epsilon"] = serde_json::to_value(rho)?;
        out["shadow_sums"] = serde_json::to_value(shadow_sum_diagnostics(&builder, opts.shadow_rho, &opts.s_exponents, opts.pair_budget, cfg.seed)?)?;
    }
    let tests = maximal_tests(&fam.domain.bounding_box());
    out["maximal"] = serde_json::to_value(maximal_diagnostics(&fam.w1, opts.shadow_rho, &opts.etas, &tests, opts.cube_budget, cfg.seed))?;
    let mut lemmas = Vec::new();
    for f in &cfg.functions {
        let field = make_field(f)?;
        for p in &cfg.params {
            let rep = inequality_diagnostics(&fam, field.as_ref(), p, Some(opts.shadow_rho), &cfg.quadrature)?;
            lemmas.push(json!({ "function": f.name(), "report": rep }));
        }
    }
    out["lemmas"] = Value::Array(lemmas);
    Ok(out)
}

/// Covering, chain, shadow and lemma diagnostics per domain and depth.
pub fn diagnostics(cfg: &ExperimentConfig) -> Result<Value, Failure> {
    let mut all = Vec::new();
    for spec in &cfg.domains {
        for &depth in &cfg.depths {
            let label = format!("diagnostics {} depth {depth}", spec.name());
            log::info!("running {label}");
            all.push(diagnose_one(cfg, spec, depth).map_err(fail(label))?);
        }
    }
    Ok(json!({ "name": cfg.name, "seed": cfg.seed, "entries": all }))
}

fn create_dir(cfg: &ExperimentConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| fail("output directory")(e.into()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| fail(path.display().to_string())(e.into()))
}

/// `<name>.csv` in the output directory; returns the rows.
pub fn run_norms(cfg: &ExperimentConfig) -> Result<Vec<Row>, Failure> {
    create_dir(cfg)?;
    let rows = norm_rows(cfg)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(fail("csv"))?;
    write_file(&cfg.output_dir.join(format!("{}.csv", cfg.name)), &buf)?;
    Ok(rows)
}

/// `<name>_diagnostics.json` in the output directory.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<Value, Failure> {
    create_dir(cfg)?;
    let v = diagnostics(cfg)?;
    let text = serde_json::to_string_pretty(&v).map_err(|e| fail("diagnostics")(e.into()))?;
    write_file(&cfg.output_dir.join(format!("{}_diagnostics.json", cfg.name)), text.as_bytes())?;
    Ok(v)
}

/// Norm table, diagnostics and the three figures of the first domain at the last depth.
pub fn run(cfg: &ExperimentConfig) -> Result<(), Failure> {
    run_norms(cfg)?;
    run_diagnostics(cfg)?;
    for fig in crate::svg::Figure::ALL {
        crate::svg::render_to_dir(cfg, fig)?;
    }
    Ok(())
}
