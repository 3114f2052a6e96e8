use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const QUICK_DISPERSION: &str = r#"
[grid]
k = 256
t_max = 10.0
extra_nu = [0.05]
regime_t_max = 2.0
regime_steps = 10
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("taylor-lab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taylor-lab"))
        .args(args)
        .env_remove("TAYLOR_LAB_OUT")
        .output()
        .unwrap()
}

fn run_dir(root: &Path, command: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .unwrap()
                    .to_string_lossy()
                    .starts_with(&format!("{command}-"))
        })
        .collect();
    assert_eq!(
        dirs.len(),
        1,
        "expected one {command} run under {}",
        root.display()
    );
    dirs.pop().unwrap()
}

fn files(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

#[test]
fn spectrum_smoke() {
    let root = scratch("smoke");
    let out = lab(&["spectrum", "--out", root.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = run_dir(&root, "spectrum");
    let mut names = files(&dir, "");
    names.retain(|n| n != "manifest.json");
    assert_eq!(
        names,
        [
            "eigenvalues.csv",
            "perturbation.json",
            "separation.json",
            "spectrum.svg"
        ]
    );
    let csv = fs::read_to_string(dir.join("eigenvalues.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("kappa,re_lambda_0,im_lambda_0"));
    assert!(header.ends_with("im_lambda_16,gap"));
    assert_eq!(csv.lines().count(), 65);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pass"], serde_json::json!(true));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["constants"]["nu_td"].as_f64().unwrap() > 0.06);
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn invalid_delta_exits_2() {
    let root = scratch("delta");
    let cfg = write_config(&root, "[hypo]\ndelta = 0.3\n");
    let out = lab(&[
        "hypo",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
    let unknown = write_config(&root, "speed = 3\n");
    assert_eq!(
        lab(&["spectrum", "--config", unknown.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lab(&["spectrum", "--nu", "-1", "--out", root.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(lab(&["bogus"]).status.code(), Some(2));
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn tiny_grid_is_under_resolved() {
    let root = scratch("tiny");
    let cfg = write_config(&root, "[grid]\nk = 64\n");
    let out = lab(&[
        "dispersion",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grid under-resolved"), "{err}");
    let manifest = fs::read_to_string(run_dir(&root, "dispersion").join("manifest.json")).unwrap();
    assert!(manifest.contains("\"pass\": false"));
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn no_shear_is_reported_degenerate() {
    let root = scratch("plug");
    let cfg = write_config(&root, "[shear]\nkind = \"plug\"\nvalue = 1.0\n");
    let out = lab(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let p = fs::read_to_string(run_dir(&root, "spectrum").join("perturbation.json")).unwrap();
    assert!(p.contains("degenerate: no shear"));
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn env_overrides_output_root() {
    let root = scratch("env");
    let env_root = root.join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_taylor-lab"))
        .args([
            "spectrum",
            "--out",
            root.join("from-flag").to_str().unwrap(),
        ])
        .env("TAYLOR_LAB_OUT", &env_root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(run_dir(&env_root, "spectrum")
        .join("manifest.json")
        .exists());
    assert!(!root.join("from-flag").exists());
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn flags_override_file_keys() {
    let root = scratch("flags");
    let cfg = write_config(&root, "nu = 0.2\norder = 3\n[cross_section]\nmodes = 8\n");
    let args = [
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
        "--nu",
        "0.05",
        "--modes",
        "6",
    ];
    assert_eq!(lab(&args).status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(run_dir(&root, "spectrum").join("manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["config"]["nu"], serde_json::json!(0.05));
    assert_eq!(m["config"]["order"], serde_json::json!(3));
    assert_eq!(m["config"]["cross_section"]["modes"], serde_json::json!(6));
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn quick_dispersion_compares_viscosities() {
    let root = scratch("quick");
    let cfg = write_config(&root, QUICK_DISPERSION);
    let out = lab(&[
        "dispersion",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        root.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let dir = run_dir(&root, "dispersion");
    let cmp = fs::read_to_string(dir.join("comparison.csv")).unwrap();
    assert_eq!(cmp.lines().count(), 3);
    assert!(stdout.contains("PASS nu_shift_nu0p05"), "{stdout}");
    assert!(stdout.contains("PASS d_eff_nu0p1"), "{stdout}");
    for name in [
        "series_nu0p1.csv",
        "series_nu0p05.csv",
        "d_eff.svg",
        "gauss_distance.svg",
        "remainder.svg",
        "regimes.json",
    ] {
        assert!(dir.join(name).exists(), "{name}");
    }
    let series = fs::read_to_string(dir.join("series_nu0p1.csv")).unwrap();
    assert!(series.starts_with("T_scaled,"));
    fs::remove_dir_all(root).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let root = scratch("determinism");
    let cfg = write_config(&root, QUICK_DISPERSION);
    let (a, b) = (root.join("a"), root.join("b"));
    for out in [&a, &b] {
        let o = lab(&[
            "all",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_ne!(
            o.status.code(),
            Some(2),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut compared = 0;
    for command in ["spectrum", "dispersion", "manifold", "hypo"] {
        let (da, db) = (run_dir(&a, command), run_dir(&b, command));
        assert_eq!(da.file_name(), db.file_name());
        for name in files(&da, ".csv")
            .into_iter()
            .chain(files(&da, ".json"))
            .chain(files(&da, ".svg"))
        {
            assert_eq!(
                fs::read(da.join(&name)).unwrap(),
                fs::read(db.join(&name)).unwrap(),
                "{command}/{name}"
            );
            compared += 1;
        }
    }
    assert!(compared >= 20);
    fs::remove_dir_all(root).unwrap();
}
