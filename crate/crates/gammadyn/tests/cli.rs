use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gammadyn"));
    c.env_remove("GAMMADYN_THREADS");
    c
}

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_config(dir: &Path, name: &str, v: Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

fn tiny_glauber(extra: Value) -> Value {
    let mut v = serde_json::json!({
        "grid": {"dim": 1, "cells_per_side": 8, "side_length": 4.0},
        "model": {"glauber": {"z": 0.2, "phi": {"bump": {"height": 1.0, "radius": 0.5}}}},
        "c": 2.0,
        "n_max": 3,
        "initial": {"poisson": 1.0},
    });
    for (k, val) in extra.as_object().unwrap() {
        v[k] = val.clone();
    }
    v
}

#[test]
fn validate_bundled_surgailis_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["validate"], &presets().join("surgailis.json"), tmp.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = text(&o);
    for flag in ["asmall", "statior-est", "nusmall", "preset-conditions", "surgailis-oracle"] {
        assert!(out.contains(flag), "missing {flag} in\n{out}");
    }
    assert!(!out.contains("FAIL"));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "validate");
    assert_eq!(manifest["config"]["model"]["surgailis"]["z"], 0.5);
}

#[test]
fn every_preset_parses() {
    for name in ["surgailis", "glauber_free", "glauber_bump", "bdlp", "bdlp_modified", "contact"] {
        let p = presets().join(format!("{name}.json"));
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert!(v["model"].is_object(), "{name}");
    }
}

#[test]
fn chain_refuses_outside_smallparam() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        tiny_glauber(serde_json::json!({
            "model": {"glauber": {"z": 3.0, "phi": {"bump": {"height": 1.0, "radius": 0.5}}}},
            "evolution": {"t_end": 1.0, "delta": 0.5},
        })),
    );
    let o = run(&["chain"], &cfg, &tmp.path().join("out"));
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("smallparam"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "u.json", tiny_glauber(serde_json::json!({"nmax": 3})));
    let o = run(&["validate"], &unknown, &tmp.path().join("o1"));
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("nmax"));

    let mismatch = write_config(tmp.path(), "m.json", tiny_glauber(serde_json::json!({"command": "stationary"})));
    assert_eq!(code(&run(&["evolve"], &mismatch, &tmp.path().join("o2"))), 2);

    let bad_delta = write_config(
        tmp.path(),
        "d.json",
        tiny_glauber(serde_json::json!({"evolution": {"t_end": 1.0, "delta": 1.5}})),
    );
    assert_eq!(code(&run(&["chain"], &bad_delta, &tmp.path().join("o3"))), 2);

    let missing = write_config(tmp.path(), "f.json", tiny_glauber(serde_json::json!({"model": {"file": "nope.json"}})));
    assert_eq!(code(&run(&["validate"], &missing, &tmp.path().join("o4"))), 2);

    // the environment fallback for --threads is read
    let o = bin()
        .args(["validate", "--config"])
        .arg(&bad_delta)
        .arg("--out")
        .arg(tmp.path().join("o5"))
        .env("GAMMADYN_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("threads"));
}

#[test]
fn compare_rk4_against_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        tiny_glauber(serde_json::json!({"evolution": {"dt": 1e-3, "t_end": 0.5, "delta": 0.01, "snapshots": [0.1, 0.2, 0.3, 0.4]}})),
    );
    let ev = tmp.path().join("ev");
    let ch = tmp.path().join("ch");
    assert_eq!(code(&run(&["evolve"], &cfg, &ev)), 0);
    let o = run(&["chain"], &cfg, &ch);
    assert_eq!(code(&o), 0, "{}", text(&o));

    let cmp = |threshold: f64| {
        write_config(
            tmp.path(),
            "cmp.json",
            serde_json::json!({"compare": {"a": "ev/evolve.csv", "b": "ch/chain.csv", "column": "l1_mass", "threshold": threshold}}),
        )
    };
    let o = run(&["compare"], &cmp(0.05), &tmp.path().join("cmp"));
    assert_eq!(code(&o), 0, "{}", text(&o));
    let m: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("cmp/manifest.json")).unwrap()).unwrap();
    let dev = m["summary"]["max_deviation"].as_f64().unwrap();
    assert!(dev > 0.0 && dev < 0.05, "{dev}");
    assert_eq!(m["summary"]["matched"], 24);

    let o = run(&["compare"], &cmp(dev / 2.0), &tmp.path().join("cmp2"));
    assert_eq!(code(&o), 1, "{}", text(&o));
}

#[test]
fn stationary_writes_solution_and_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        serde_json::json!({
            "grid": {"dim": 1, "cells_per_side": 8, "side_length": 4.0},
            "model": {"preset": "bdlp_modified"},
            "n_max": 8,
            "stationary": {"tol": 1e-12, "max_iter": 1000},
        }),
    );
    let out = tmp.path().join("st");
    let o = run(&["stationary"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let sol: Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["n_max"], 8);
    assert_eq!(sol["levels"][0]["entries"][0]["value"].as_f64(), Some(1.0));
    // detailed balance: k = 0.3^{|η|}
    for level in sol["levels"].as_array().unwrap() {
        let n = level["n"].as_i64().unwrap() as i32;
        for e in level["entries"].as_array().unwrap() {
            assert!((e["value"].as_f64().unwrap() - 0.3f64.powi(n)).abs() < 1e-9);
        }
    }
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(conv.starts_with("iter,residual,contraction_factor\n"));
}

#[test]
fn stationary_gate_names_the_inequality() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        serde_json::json!({
            "grid": {"dim": 1, "cells_per_side": 8, "side_length": 4.0},
            "model": {"surgailis": {"m": 1.0, "z": 5.0}},
        }),
    );
    let o = run(&["stationary"], &cfg, &tmp.path().join("st"));
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("statior-est"));
}

#[test]
fn evolve_initial_state_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let first = write_config(
        tmp.path(),
        "a.json",
        serde_json::json!({
            "grid": {"dim": 1, "cells_per_side": 8, "side_length": 4.0},
            "model": {"preset": "surgailis"},
            "initial": {"poisson": 0.2},
            "evolution": {"t_end": 0.2},
        }),
    );
    assert_eq!(code(&run(&["evolve"], &first, &tmp.path().join("a"))), 0);
    // continue from the written state
    let second = write_config(
        tmp.path(),
        "b.json",
        serde_json::json!({
            "grid": {"dim": 1, "cells_per_side": 8, "side_length": 4.0},
            "model": {"preset": "surgailis"},
            "initial": {"file": "a/final.json"},
            "evolution": {"t_end": 0.3},
        }),
    );
    assert_eq!(code(&run(&["evolve"], &second, &tmp.path().join("b"))), 0);
    let direct = write_config(
        tmp.path(),
        "c.json",
        serde_json::json!({
            "grid": {"dim": 1, "cells_per_side": 8, "side_length": 4.0},
            "model": {"preset": "surgailis"},
            "initial": {"poisson": 0.2},
            "evolution": {"t_end": 0.5},
        }),
    );
    assert_eq!(code(&run(&["evolve"], &direct, &tmp.path().join("c"))), 0);
    let level1 = |dir: &str| -> f64 {
        let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join(dir).join("final.json")).unwrap()).unwrap();
        v["levels"][1]["entries"][0]["value"].as_f64().unwrap()
    };
    // k¹(t) = z + (k₀ − z) e^{−t} with z = 0.5
    let exact = 0.5 + (0.2 - 0.5) * (-0.5f64).exp();
    assert!((level1("b") - exact).abs() < 1e-9);
    assert!((level1("c") - exact).abs() < 1e-9);
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.json",
        serde_json::json!({
            "model": {"preset": "glauber_bump"},
            "sim": {"t_end": 2.0, "replicas": 12, "initial": {"poisson": 0.4}, "times": [1.0], "radial_bins": 4, "r_max": 1.0},
            "seed": 5,
        }),
    );
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", text(&o));
        outputs.push(out);
    }
    for f in ["estimate.csv", "manifest.json"] {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p.join("replicas.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip(&outputs[0]), strip(&outputs[1]));
    assert!(fs::read_to_string(outputs[0].join("replicas.csv")).unwrap().starts_with("replica,final_count,events,cpu_ms"));

    // a different seed changes the ensemble
    let out = tmp.path().join("seed6");
    let o = bin().args(["simulate", "--seed", "6", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(out.join("estimate.csv")).unwrap(), fs::read(outputs[0].join("estimate.csv")).unwrap());
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 6);
}

#[test]
fn ergodicity_on_tiny_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.json",
        tiny_glauber(serde_json::json!({
            "ergodicity": {"delta": 0.02, "t_max": 3.0, "sample_every": 5, "window": [1.0, 3.0], "nu": 0.5}
        })),
    );
    let out = tmp.path().join("erg");
    let o = run(&["ergodicity"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(m["summary"]["slope"].as_f64().unwrap() <= -0.45);

    let refused = write_config(
        tmp.path(),
        "r.json",
        tiny_glauber(serde_json::json!({
            "ergodicity": {"delta": 0.02, "t_max": 3.0, "window": [1.0, 3.0], "nu": 0.05}
        })),
    );
    let o = run(&["ergodicity"], &refused, &tmp.path().join("r"));
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu-verysmallparam"));
}

#[test]
fn kernel_table_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("phi.csv"), "offset,value\n1,0.5\n-1,0.5\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        "k.json",
        tiny_glauber(serde_json::json!({"model": {"glauber": {"z": 0.2, "phi": {"table_file": "phi.csv"}}}})),
    );
    let o = run(&["validate"], &cfg, &tmp.path().join("v"));
    assert_eq!(code(&o), 0, "{}", text(&o));

    fs::write(tmp.path().join("phi.csv"), "offset,value\n1,0.5\n").unwrap();
    let o = run(&["validate"], &cfg, &tmp.path().join("v2"));
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("even"));
}
