use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_qmkz"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn column(csv: &str, col: usize) -> Vec<f64> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

const THIRDS: &str = r#"
partition = 3
base = { kind = "quantum", n = 4, q = 0.8 }
grid_size = 301
"#;

#[test]
fn zero_scaling_reproduces_germ() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "germ = {{ name = \"sin_pi_plus\", c = 1.0 }}\nalpha = [{{ kind = \"constant\", c = 0.0 }}, {{ kind = \"constant\", c = 0.0 }}, {{ kind = \"constant\", c = 0.0 }}]\n{THIRDS}"
    );
    let o = run(dir.path(), &cfg, &["solve"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let germ = column(&read(dir.path(), "germ.csv"), 1);
    let fractal = column(&read(dir.path(), "fractal.csv"), 1);
    assert_eq!(germ.len(), 301);
    assert!(germ.iter().zip(&fractal).all(|(a, b)| (a - b).abs() <= 1e-12));
    assert!(read(dir.path(), "fractal.svg").contains("<polyline"));
    assert!(read(dir.path(), "base.csv").starts_with("x,value\n"));
}

#[test]
fn unsorted_partition_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
germ = { name = "sin", k = 1.0 }
partition = [0.0, 0.6, 0.3, 1.0]
alpha = [{ kind = "constant", c = 0.2 }, { kind = "constant", c = 0.2 }, { kind = "constant", c = 0.2 }]
base = { kind = "classical", n = 3 }
"#;
    let o = run(dir.path(), cfg, &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("partition"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "germ = {{ name = \"wave\" }}\nalpha = [{{ kind = \"constant\", c = 0.1 }}, {{ kind = \"constant\", c = 0.1 }}, {{ kind = \"constant\", c = 0.1 }}]\nsmoothing = 3\n{THIRDS}"
    );
    let o = run(dir.path(), &cfg, &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("smoothing"), "{}", stderr(&o));
}

#[test]
fn failed_validation_still_writes_the_plot() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "germ = {{ name = \"sin_pi_plus\", c = 1.0 }}\nalpha = [{{ kind = \"constant\", c = 0.7 }}, {{ kind = \"constant\", c = -0.9 }}, {{ kind = \"constant\", c = 0.9 }}]\n{THIRDS}"
    );
    let o = run(dir.path(), &cfg, &["constrain"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let csv = read(dir.path(), "solution.csv");
    assert!(csv.starts_with("x,f,f_alpha\n"));
    assert!(read(dir.path(), "solution.svg").contains("f_alpha"));
    assert!(read(dir.path(), "validation.csv").contains(",false"));
}

#[test]
fn ordering_mode_requires_g() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(
        "germ = {{ name = \"wave\" }}\nalpha = [{{ kind = \"constant\", c = 0.1 }}, {{ kind = \"constant\", c = 0.1 }}, {{ kind = \"constant\", c = 0.1 }}]\n{THIRDS}\n[constrain]\nmode = \"one_sided\"\n"
    );
    let o = run(dir.path(), &cfg, &["constrain"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: g:"), "{}", stderr(&o));
}

#[test]
fn random_samples_are_deterministic_across_threads() {
    let cfg = format!(
        "germ = {{ name = \"sin_pi_plus\", c = 1.0 }}\nalpha = [{{ kind = \"constant\", c = 0.05 }}, {{ kind = \"constant\", c = 0.05 }}, {{ kind = \"constant\", c = 0.05 }}]\nseed = 11\n{THIRDS}\n[constrain]\nrandom_samples = 6\n"
    );
    let mut outputs = Vec::new();
    for threads in ["1", "3", "1"] {
        let dir = TempDir::new().unwrap();
        let o = run(dir.path(), &cfg, &["constrain", "--threads", threads]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push((read(dir.path(), "random.csv"), read(dir.path(), "solution.csv")));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[0].0.lines().count(), 7);
    for v in column(&outputs[0].0, 4) {
        assert!(v >= -1e-6);
    }

    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &cfg, &["constrain", "--seed", "12"]);
    assert!(o.status.success());
    assert_ne!(read(dir.path(), "random.csv"), outputs[0].0);
}

#[test]
fn converge_writes_table_and_plot() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
germ = { name = "sin", k = 1.0 }
partition = 3
alpha = [{ kind = "sigmoid", c = 0.9, a = 10.0 }, { kind = "sigmoid", c = 0.9, a = 10.0 }, { kind = "sigmoid", c = 0.9, a = 10.0 }]
base = { kind = "quantum", n = 3 }
grid_size = 301
n_range = [3, 10]
"#;
    let o = run(dir.path(), cfg, &["converge"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = read(dir.path(), "convergence.csv");
    assert!(table.starts_with("n,q_n,sup_error,bound,satisfied\n"));
    assert_eq!(table.lines().filter(|l| l.ends_with(",true")).count(), 8);
    assert!(read(dir.path(), "convergence_plot.csv").starts_with("n,sup_error,bound\n"));
}

#[test]
fn smooth_graph_has_dimension_one() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
germ = { name = "sin", k = 2.0 }
partition = 4
alpha = [{ kind = "constant", c = 0.0 }, { kind = "constant", c = 0.0 }, { kind = "constant", c = 0.0 }, { kind = "constant", c = 0.0 }]
base = { kind = "classical", n = 3 }
grid_size = 1001

[dimension]
min_points = 200000
"#;
    let o = run(dir.path(), cfg, &["dimension"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = read(dir.path(), "dimension.csv");
    let slope: f64 = table
        .lines()
        .find_map(|l| l.strip_prefix("# slope,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope - 1.0).abs() <= 0.1, "slope {slope}");
}

#[test]
fn lp_rejects_small_exponent() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
germ = { name = "polynomial", coeffs = [0.0, 1.0] }
partition = 2
alpha = [{ kind = "constant", c = 0.5 }, { kind = "constant", c = 0.5 }]
base = { kind = "integral", n = 2 }
p = 0.5
n_range = [2, 4]
grid_size = 201
"#;
    let o = run(dir.path(), cfg, &["lp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p >= 1"), "{}", stderr(&o));
}

#[test]
fn muntz_compares_sequences() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
germ = { name = "sin", k = 3.141592653589793 }
partition = 3
alpha = [{ kind = "constant", c = 0.2 }, { kind = "constant", c = 0.2 }, { kind = "constant", c = 0.2 }]
base = { kind = "quantum", n = 5 }
grid_size = 301

[muntz]
lambdas = [{ kind = "harmonic" }, { kind = "geometric", ratio = 2.0 }]
m_max = 5
"#;
    let o = run(dir.path(), cfg, &["muntz"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let harmonic = column(&read(dir.path(), "density_harmonic.csv"), 4);
    let geometric = column(&read(dir.path(), "density_geometric_2.csv"), 4);
    assert_eq!(harmonic.len(), 5);
    assert!(harmonic[4] < geometric[4]);
    let plot = read(dir.path(), "muntz_plot.csv");
    assert!(plot.starts_with("m,harmonic,geometric_2\n"));
    assert!(read(dir.path(), "muntz_plot.svg").contains("geometric_2"));
}

#[test]
fn missing_config_flag_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_qmkz")).arg("solve").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}
