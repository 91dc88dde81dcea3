use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uniform_ext_cli::experiment::{norm_rows, write_csv};
use uniform_ext_cli::svg::{count_in_group, render_figure, Figure};
use uniform_ext_cli::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uniform-ext"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Writes `body` with `output_dir` pointing inside `dir`.
fn config_in(dir: &Path, file: &str, body: &str) -> PathBuf {
    let path = dir.join(file);
    let out = dir.join("out");
    let text = if file.ends_with(".json") {
        body.replacen('{', &format!("{{\"output_dir\": {:?},", out.display().to_string()), 1)
    } else {
        format!("output_dir = {:?}\n{body}", out.display().to_string())
    };
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args).env("RUST_LOG", "error");
    if let Some(n) = threads {
        cmd.env("UNIFORM_EXT_THREADS", n);
    }
    cmd.output().unwrap()
}

const SMALL: &str = r#"
name = "small"
domains = [{ kind = "square" }, { kind = "snowflake", iteration = 2 }]
functions = [{ kind = "trig" }, { kind = "cusp" }]
params = [{ k = 0, sigma = 0.5, p = 2, q = 2 }, { k = 1, sigma = 0.7, p = 3, q = "inf" }]
regions = [{ mode = "full" }, { mode = "shadow", rho = 1.5 }, { mode = "ball", rho = 0.5 }]
depths = [3, 4]
seed = 3

[diagnostics]
pair_budget = 200
cube_budget = 40
"#;

#[test]
fn minimal_config_gives_a_zero_seminorm_row() {
    let dir = tempfile::tempdir().unwrap();
    let body = std::fs::read_to_string(configs().join("minimal.toml")).unwrap().replace("output_dir = \"out\"\n", "");
    let cfg = config_in(dir.path(), "minimal.toml", &body);
    let o = run(&["run", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/minimal.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    let head = rd.headers().unwrap().clone();
    let col = |n: &str| head.iter().position(|h| h == n).unwrap();
    let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][col("region")], "full");
    assert_eq!(rows[0][col("value")].parse::<f64>().unwrap(), 0.0);
    assert!(rows[0][col("lp_norm")].parse::<f64>().unwrap() > 0.0);
    for f in ["minimal_diagnostics.json", "minimal_covering.svg", "minimal_chain.svg", "minimal_shadow.svg"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn zero_q_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"domains": [{"kind": "square"}], "functions": [{"kind": "trig"}],
        "params": [{"k": 0, "sigma": 0.5, "p": 2, "q": 0}], "depths": [3]}"#;
    let cfg = config_in(dir.path(), "bad.json", body);
    let o = run(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("NormParams.q"));
}

#[test]
fn schema_violations_exit_2_and_computation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = config_in(dir.path(), "unknown.toml", "depths = [3]\ncolour = 1\n");
    assert_eq!(run(&["run", unknown.to_str().unwrap()], None).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(run(&["diagnose", "/nonexistent/config.toml"], None).status.code(), Some(2));
    let ok = config_in(dir.path(), "ok.toml", SMALL);
    assert_eq!(run(&["run", ok.to_str().unwrap()], Some("zero")).status.code(), Some(2));

    // a chain endpoint past the last interior cube is only detectable
    // after the covering is built
    let far = config_in(dir.path(), "far.toml", &format!("{SMALL}\n[figure]\nchain = [0, 100000]\n"));
    let o = run(&["render", far.to_str().unwrap(), "--figure", "chain"], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("render chain square"), "{err}");
}

#[test]
fn one_row_per_domain_function_params_region_and_depth() {
    let cfg = ExperimentConfig::from_str_with(SMALL, true).unwrap();
    let rows = norm_rows(&cfg).unwrap();
    let keys: BTreeSet<_> = rows
        .iter()
        .filter(|r| r.region != "global")
        .map(|r| (r.domain.clone(), r.function.clone(), r.params.k, r.params.q_label(), r.region.clone(), r.depth))
        .collect();
    assert_eq!(keys.len(), 2 * 2 * 2 * 3 * 2);
    assert_eq!(rows.len(), keys.len());
    for r in &rows {
        assert!(r.value.is_finite() && r.composite.is_finite(), "{r:?}");
        assert_eq!(r.drift.is_some(), r.depth == 4, "{r:?}");
        if r.region != "full" {
            assert!(r.ratio >= 1.0, "{r:?}");
        }
    }
}

#[test]
fn extension_adds_one_global_row_per_depth() {
    let text = r#"
        domains = [{ kind = "square" }]
        functions = [{ kind = "trig" }, { kind = "constant", value = 2.0 }]
        params = [{ k = 0, sigma = 0.5, p = 2, q = 2 }]
        depths = [2, 3]
        extension = true
    "#;
    let rows = norm_rows(&ExperimentConfig::from_str_with(text, true).unwrap()).unwrap();
    let global: Vec<_> = rows.iter().filter(|r| r.region == "global").collect();
    assert_eq!(global.len(), 2 * 2);
    for r in global {
        assert!(r.composite.is_finite() && r.ratio >= 1.0, "{r:?}");
        if r.function.starts_with("constant") {
            // a constant extends to a bump, which is no longer constant
            assert!(r.value > 0.0, "{r:?}");
        }
    }
}

#[test]
fn csv_is_identical_across_thread_counts_and_runs() {
    let mut outputs = Vec::new();
    for threads in ["1", "2", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config_in(dir.path(), "small.toml", SMALL);
        let o = run(&["run", cfg.to_str().unwrap()], Some(threads));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let csv = std::fs::read(dir.path().join("out/small.csv")).unwrap();
        let json = std::fs::read(dir.path().join("out/small_diagnostics.json")).unwrap();
        outputs.push((csv, json));
    }
    assert!(outputs[0].0.len() > 1000);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn in_process_csv_matches_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = config_in(dir.path(), "small.toml", SMALL);
    let o = run(&["run", cfg_path.to_str().unwrap()], None);
    assert!(o.status.success());
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let mut buf = Vec::new();
    write_csv(&norm_rows(&cfg).unwrap(), &mut buf).unwrap();
    assert_eq!(buf, std::fs::read(dir.path().join("out/small.csv")).unwrap());
}

#[test]
fn snowflake_figures_show_every_family_and_are_deterministic() {
    let cfg = ExperimentConfig::load(&configs().join("snowflake_figures.toml")).unwrap();
    for fig in Figure::ALL {
        let a = render_figure(&cfg, fig).unwrap();
        assert_eq!(a, render_figure(&cfg, fig).unwrap(), "{}", fig.name());
        for g in ["w1", "w2", "w3"] {
            assert!(count_in_group(&a, g) > 0, "{} {g}", fig.name());
        }
        match fig {
            Figure::Covering => {
                assert!(a.contains(r#"<g id="pairs">"#) && a.contains("<line"));
                assert!(!a.contains(r#"<g id="chain">"#) && !a.contains(r#"<g id="shadow">"#));
            }
            Figure::Chain => assert!(count_in_group(&a, "chain") >= 3),
            Figure::Shadow => assert!(count_in_group(&a, "shadow") >= 2),
        }
    }
}

#[test]
fn render_subcommand_writes_the_requested_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("fig.svg");
    let o = run(&["render", cfg.to_str().unwrap(), "--figure", "shadow", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
    let parsed = ExperimentConfig::load(&cfg).unwrap();
    assert_eq!(text, render_figure(&parsed, Figure::Shadow).unwrap());
}
