use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rcpump(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcpump")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const POINT: &str = r#"
name = "point"
regime = "floquet"
[physics]
omega = 1.9
phase = 1.5
dot_amplitude = 2.5
bias = 1.9
beta = 3.3
mu = 1.0
width = 0.05
gamma = 2.5
[numerics]
steps = 64
"#;

fn body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn no_axes_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POINT);
    let out = dir.path().join("p.csv");
    let o = rcpump(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# rcpump "));
    assert!(text.contains("#   gamma = 2.5"));
    let rows = body(&out);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("axis1,axis2,Q,dQ2"));
    let fields: Vec<&str> = rows[1].split(',').collect();
    let q: f64 = fields[2].parse().unwrap();
    assert!((q - 0.0829).abs() < 2e-3, "{q}");
    assert_eq!(fields[13], "ok");
    // no leftover temporary files next to the output
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn reruns_are_identical_and_compare_matches() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{POINT}[[axis]]\nparam = \"phase\"\nstart = 0.0\nstop = 3.0\npoints = 4\n");
    let cfg = write(dir.path(), "s.toml", &text);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = rcpump(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-timing", "-j", threads]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let o = rcpump(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("match"));
}

#[test]
fn compare_flags_differences() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg_a = write(dir.path(), "a.toml", POINT);
    let cfg_b = write(dir.path(), "b.toml", &POINT.replace("phase = 1.5", "phase = 3.0"));
    rcpump(&["run", cfg_a.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    rcpump(&["run", cfg_b.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    let o = rcpump(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rc_info_lists_couplings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &POINT.replace("regime", "gamma_list = [10.0, 800.0]\nregime"));
    let o = rcpump(&["rc-info", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let lines: Vec<f64> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for (got, want) in lines.iter().zip([0.25, 0.5, 4.472136]) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &POINT.replace("beta = 3.3", "beta = 3.3\nbta = 1.0"));
    let o = rcpump(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bta"));
    assert!(!dir.path().join("x.csv").exists());
    let o = rcpump(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_points_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = POINT.replace("regime = \"floquet\"", "regime = \"adiabatic\"").replace("steps = 64", "points = 64");
    let cfg = write(dir.path(), "f.toml", &text);
    let out = dir.path().join("f.csv");
    let o = rcpump(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let rows = body(&out);
    assert!(rows[1].contains("adiabaticity"));
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            rcpump_cli::config::Scenario::load(&p).unwrap_or_else(|e| panic!("{e}"));
            n += 1;
        }
    }
    assert!(n >= 10);
}
