use std::fs;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use chdbc::mesh::import_mesh;

/// Runs the binary with whitespace-separated arguments.
fn chdbc(args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chdbc"))
        .args(args.split_whitespace())
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn convergence_table_has_one_row_per_run() {
    let out = chdbc("convergence --problem linear --k 3 --refinements 1,2 --tau 0.0025");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,nodes,h,tau,err_L2,err_H1,eoc_L2,eoc_H1");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",NA,NA"));
    let fields: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(fields.len(), 8);
    let eoc: f64 = fields[6].parse().unwrap();
    assert!(eoc > 1.0);
}

#[test]
fn convergence_rows_are_grouped_by_tau() {
    let out = chdbc("convergence --problem nonlinear --refinements 2,1 --tau 0.05 --tau 0.025");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let keys: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[3].to_owned(), f[0].to_owned())
        })
        .collect();
    let expected = [("0.05", "1"), ("0.05", "2"), ("0.025", "1"), ("0.025", "2")];
    assert_eq!(keys, expected.map(|(a, b)| (a.to_owned(), b.to_owned())));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let args = "convergence --problem nonlinear --refinements 1,2,3 --tau 0.01";
    assert_eq!(chdbc(args).stdout, chdbc(args).stdout);

    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = chdbc(&format!(
            "evolve --k 1 --nodes 80 --radius 2 --tau 0.01 --T 0.1 --snapshots 0,0.1 --seed 9 --out {}",
            out.display()
        ));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["mesh.txt", "snapshot_t0.csv", "snapshot_t0.1.csv", "diagnostics.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn evolve_writes_snapshots_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = chdbc(&format!(
        "evolve --k 1 --nodes 160 --tau 0.00125 --T 0.05 --snapshots 0,0.025,0.05 --vtk --out {}",
        out.display()
    ));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().next(), Some("t,mass,energy"));
    assert_eq!(diag.lines().count() - 1, 41);

    let snap = fs::read_to_string(out.join("snapshot_t0.csv")).unwrap();
    assert_eq!(snap.lines().next(), Some("node,x,y,u,w"));
    for line in snap.lines().skip(1) {
        let u: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(u == 1.0 || u == -1.0, "{line}");
    }
    assert!(out.join("snapshot_t0.025.csv").is_file());
    assert!(out.join("snapshot_t0.05.vtk").is_file());

    let mesh = import_mesh(&fs::read_to_string(out.join("mesh.txt")).unwrap()).unwrap();
    assert_eq!(mesh.radius(), Some(10.0));
    assert_eq!(snap.lines().count() - 1, mesh.num_nodes());
}

#[test]
fn mesh_command_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disk.txt");
    let o = chdbc(&format!(
        "mesh --nodes 20 --radius 1 --validate --out {}",
        path.display()
    ));
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    let mesh = import_mesh(&text).unwrap();
    assert!((17..=23).contains(&mesh.num_nodes()));
    assert_eq!(mesh.export(), text);
}

#[test]
fn large_mesh_is_fast() {
    let start = Instant::now();
    let o = chdbc("mesh --refinements 8 --validate");
    assert_eq!(o.status.code(), Some(0));
    assert!(start.elapsed() < Duration::from_secs(10));
    let mesh = import_mesh(&stdout(&o)).unwrap();
    assert!((mesh.num_nodes() as f64 - 2560.0).abs() <= 0.15 * 2560.0);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        "mesh --nodes 3",
        "convergence --problem evolution",
        "convergence --k 4",
        "convergence --tau 0.3",
        "evolve --start-mode exact",
        "evolve --snapshots 0.0001",
        "bogus",
    ] {
        let o = chdbc(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn runtime_failure_exits_with_one_and_leaves_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    // output directory below a regular file cannot be created
    let out = blocker.join("sub");
    let o = chdbc(&format!(
        "evolve --k 1 --nodes 20 --tau 0.01 --T 0.02 --snapshots 0 --out {}",
        out.display()
    ));
    assert_eq!(o.status.code(), Some(1));

    let csv = dir.path().join("missing").join("table.csv");
    let o = chdbc(&format!(
        "convergence --refinements 1 --tau 0.5 --out {}",
        csv.display()
    ));
    assert_eq!(o.status.code(), Some(1));
    assert!(!csv.exists());
}
