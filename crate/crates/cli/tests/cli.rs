use std::fs;
use std::path::Path;
use std::process::Command;

use qpost_cli::config::ExperimentConfig;

fn qpost(task: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_qpost"))
        .arg(task)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("QPOST_WORKERS")
        .output()
        .unwrap();
    (
        o.status.code().unwrap(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const FIT: &str = r#"
seed = 4
[model]
kind = "logistic"
n = 60
d = 8
s_star = 2
[prior]
rho = 2.0
[sampler]
iterations = 3000
thin = 3
radii = [1.0]
"#;

#[test]
fn fit_twice_gives_identical_draw_stores() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "fit.toml", FIT);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(qpost("fit", &cfg, &a, &[]).0, 0);
    assert_eq!(qpost("fit", &cfg, &b, &["--workers", "2"]).0, 0);
    let da = fs::read(a.join("draws.tsv")).unwrap();
    assert!(da.len() > 1000);
    assert_eq!(da, fs::read(b.join("draws.tsv")).unwrap());
    assert_eq!(
        fs::read(a.join("summary.csv")).unwrap(),
        fs::read(b.join("summary.csv")).unwrap()
    );

    let c = t.path().join("c");
    assert_eq!(qpost("fit", &cfg, &c, &["--seed", "5"]).0, 0);
    assert_ne!(da, fs::read(c.join("draws.tsv")).unwrap());
}

#[test]
fn report_embeds_the_resolved_config() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "fit.toml", FIT);
    let out = t.path().join("o");
    assert_eq!(qpost("fit", &cfg, &out, &["--seed", "9"]).0, 0);
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["task"], "fit");
    assert_eq!(r["config"]["seed"], 9);
    assert_eq!(r["config"]["task"], "fit");
    assert_eq!(r["config"]["sampler"]["iterations"], 3000);
    let echoed: ExperimentConfig = serde_json::from_value(r["config"].clone()).unwrap();
    assert_eq!(echoed.output.dir, out);
    assert_eq!(r["rho"], 2.0);
}

#[test]
fn gen_then_fit_from_files_matches_generated_fit() {
    let t = tempfile::tempdir().unwrap();
    let cfg = write(t.path(), "fit.toml", FIT);
    let gen = t.path().join("gen");
    assert_eq!(qpost("gen-logistic", &cfg, &gen, &[]).0, 0);
    let from_file = format!(
        "seed = 4\n[model]\nkind = \"logistic\"\ndata = {:?}\ntheta_star = {:?}\n[prior]\nrho = 2.0\n[sampler]\niterations = 3000\nthin = 3\nradii = [1.0]\n",
        gen.join("data.txt"),
        gen.join("theta_star.txt")
    );
    let cfg2 = write(t.path(), "file.toml", &from_file);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(qpost("fit", &cfg, &a, &[]).0, 0);
    assert_eq!(qpost("fit", &cfg2, &b, &[]).0, 0);
    assert_eq!(
        fs::read(a.join("draws.tsv")).unwrap(),
        fs::read(b.join("draws.tsv")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("o");

    let verify = write(t.path(), "v.toml", "seed = 1\n");
    assert_eq!(qpost("verify", &verify, &out, &[]).0, 0);

    // no [sampler] block
    let bad = write(
        t.path(),
        "bad.toml",
        "seed = 1\n[model]\nkind = \"logistic\"\nn = 10\nd = 2\n",
    );
    let (code, err) = qpost("fit", &bad, &out, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("[sampler]"), "{err}");

    let unknown = write(t.path(), "u.toml", "seed = 1\nsede = 2\n");
    assert_eq!(qpost("verify", &unknown, &out, &[]).0, 1);
    assert_eq!(
        qpost("verify", &t.path().join("missing.toml"), &out, &[]).0,
        1
    );

    // a grid too narrow for the posterior mass is a runtime failure
    let narrow = write(
        t.path(),
        "n.toml",
        "seed = 1\n[model]\nkind = \"logistic\"\nn = 30\nd = 2\ns_star = 1\n[prior]\nrho = 1.0\n[oracle]\nhalf_width = 0.2\npoints = 21\n",
    );
    let (code, err) = qpost("oracle", &narrow, &out, &[]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn failed_run_leaves_no_partial_output() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("o");
    let narrow = write(
        t.path(),
        "n.toml",
        "seed = 1\n[model]\nkind = \"logistic\"\nn = 30\nd = 2\ns_star = 1\n[prior]\nrho = 1.0\n[oracle]\nhalf_width = 0.2\npoints = 21\n",
    );
    assert_eq!(qpost("oracle", &narrow, &out, &[]).0, 2);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn workers_env_overrides_config_and_flag_overrides_env() {
    use qpost_cli::resolve_workers;
    assert_eq!(resolve_workers(None, None, Some(3)).unwrap(), Some(3));
    assert_eq!(resolve_workers(None, Some("2"), Some(3)).unwrap(), Some(2));
    assert_eq!(
        resolve_workers(Some(1), Some("2"), Some(3)).unwrap(),
        Some(1)
    );
    assert!(resolve_workers(None, Some("0"), None).is_err());
    assert!(resolve_workers(None, Some("many"), None)
        .unwrap_err()
        .is_validation());
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let c = ExperimentConfig::load(&p).unwrap();
            c.clone().resolve(Default::default()).unwrap();
            assert_eq!(ExperimentConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
            seen += 1;
        }
    }
    assert!(seen >= 7);
}

#[test]
fn bounds_task_reports_the_worked_zeta() {
    let t = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/bounds_logistic.toml");
    let out = t.path().join("o");
    assert_eq!(qpost("bounds", &cfg, &out, &[]).0, 0);
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let zeta: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("zeta.zeta,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((zeta - 781.07).abs() < 0.005);
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["report"]["inputs"]["d"], 1000);
}
