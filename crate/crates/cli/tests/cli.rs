use std::path::Path;
use std::process::{Command, Output};

fn saa_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saa-lab"))
        .args(args)
        .env_remove("SAA_LAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn rotation_config(dir: &Path, extra: &str) -> String {
    let out = dir.join("out.csv");
    let body = format!(
        "problem = rotation\nepsilon = 0.25\neta = 1\ninitial = 1, 0\npsi = linear:1,0\n\
         samples = 2000\nseed = 11\ncheckpoints = 1,2,4,8,16,32,64\noutput = {}\n{extra}",
        out.display()
    );
    write_config(dir, "rotation.cfg", &body)
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = rotation_config(dir.path(), "kind = both\n");
    let svg = dir.path().join("chart.svg");
    let o = saa_lab(&[
        "run",
        &cfg,
        "--workers",
        "2",
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("weak: envelope_constant="));
    assert!(text.contains("strong: envelope_constant="));
    assert!(text.contains("empirical"));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("n,t_n,kind,estimate,abs_estimate,half_width,samples,seed")
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 7);
    assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn run_at_equilibrium_gives_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = rotation_config(dir.path(), "");
    let body = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("initial = 1, 0", "initial = 0, 0");
    std::fs::write(&cfg, body).unwrap();
    let o = saa_lab(&["run", &cfg, "--workers", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("rate fit unavailable"));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[3].parse::<f64>().unwrap(), 0.0, "{row}");
        assert_eq!(f[5].parse::<f64>().unwrap(), 0.0, "{row}");
    }
}

#[test]
fn run_reports_config_errors_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = rotation_config(dir.path(), "epsilon_typo = 1\n");
    let o = saa_lab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon_typo"));

    let bad = std::fs::read_to_string(rotation_config(dir.path(), ""))
        .unwrap()
        .replace("epsilon = 0.25", "epsilon = 0.75");
    let cfg = write_config(dir.path(), "bad.cfg", &bad);
    let o = saa_lab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`epsilon`"));
}

#[test]
fn run_reports_divergence_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "problem = quadratic\nepsilon = 0.25\neta = 1e200\ninitial = 1e200, 1e200\nkind = strong\n\
         samples = 4\nseed = 1\ncheckpoints = 1,2,3\noutput = {}\n",
        dir.path().join("div.csv").display()
    );
    let cfg = write_config(dir.path(), "div.cfg", &body);
    let o = saa_lab(&["run", &cfg, "--workers", "1"]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn synthetic_csv(dir: &Path, estimate: impl Fn(f64) -> f64, half_width: f64) -> String {
    let mut text = String::from("n,t_n,kind,estimate,abs_estimate,half_width,samples,seed\n");
    for k in 0..=10 {
        let n = 1usize << k;
        let e = estimate(n as f64);
        text += &format!(
            "{n},{:.16e},weak,{e:.16e},{:.16e},{half_width:.16e},100,0\n",
            n as f64,
            e.abs()
        );
    }
    let path = dir.join("synthetic.csv");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .parse()
        .unwrap()
}

#[test]
fn fit_recovers_exact_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(dir.path(), |n| 2.0 * n.powf(-0.5), 0.0);
    let o = saa_lab(&["fit", &csv, "--window", "1:1024"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((value(&text, "slope") + 0.5).abs() < 1e-12);
    assert!((value(&text, "intercept") - 2f64.ln()).abs() < 1e-12);
    assert!((value(&text, "r_squared") - 1.0).abs() < 1e-12);
    assert_eq!(value(&text, "usable_points"), 11.0);
}

#[test]
fn fit_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let noisy = synthetic_csv(dir.path(), |n| 1e-3 / n, 1.0);
    let o = saa_lab(&["fit", &noisy, "--window", "1:1024"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no usable checkpoints"));

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "n,t,kind\n1,0,weak\n").unwrap();
    let o = saa_lab(&["fit", broken.to_str().unwrap(), "--window", "1:8"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_reports_k_and_margins() {
    let o = saa_lab(&[
        "bounds",
        "--epsilon",
        "0.25",
        "--eta",
        "1",
        "--L",
        "0.45016",
        "--lambda",
        "0.5",
        "--n-max",
        "100000",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let k_line = text
        .lines()
        .find(|l| l.starts_with("K(lambda=0.5)"))
        .unwrap();
    let k: f64 = k_line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(k.is_finite() && k >= 13.417);
    assert_eq!(text.lines().filter(|l| l.contains("margin=")).count(), 10);
    assert!(!text.contains("VIOLATED"));
    assert!(
        text.contains("sum_lower          lhs=5.0000000000000000e0     rhs=5.0000000000000000e0")
    );
    assert!(
        text.contains("discrete_integral  lhs=3.6787944117144233e-1    rhs=5.0000000000000000e-1")
    );
}

#[test]
fn bounds_not_bracketed_exits_4() {
    let o = saa_lab(&[
        "bounds",
        "--epsilon",
        "0.25",
        "--eta",
        "1",
        "--L",
        "0.45",
        "--lambda",
        "0.999999",
        "--n-max",
        "1000",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("not bracketed"));
}

#[test]
fn check_builtin_problems() {
    for problem in ["rotation", "quadratic"] {
        let o = saa_lab(&["check", problem, "--samples", "500"]);
        assert!(o.status.success(), "{problem}: {}", stdout(&o));
        assert_eq!(stdout(&o).matches("PASS").count(), 3);
    }
    let o = saa_lab(&["check", "rotation", "--samples", "500", "--L", "0.5"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("monotonicity L=0.5 worst_margin=") && stdout(&o).contains("FAIL"));
    let o = saa_lab(&["check", "nonexistent", "--samples", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn workers_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = rotation_config(dir.path(), "");
    let run = |workers: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_saa-lab"))
            .args(["run", &cfg])
            .env("SAA_LAB_WORKERS", workers)
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read(dir.path().join("out.csv")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}
