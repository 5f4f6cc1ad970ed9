use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapemap::io::msh::read_msh;
use shapemap::mesh::generate::INTERFACE;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapemap")).args(args).output().expect("binary runs")
}

fn flow_coarse(out: &Path) -> Vec<String> {
    let config = root().join("configs/flow.cfg");
    vec![
        "space-map".into(),
        "--config".into(),
        config.display().to_string(),
        "--set".into(),
        "mesh.file=../assets/pipes/pipes_coarse.msh".into(),
        "--set".into(),
        format!("output.dir={}", out.display()),
        "--set".into(),
        "output.deterministic=true".into(),
    ]
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--config", "/nonexistent.cfg"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "experiment = transmission\nasm.tua = 1e-2\n").unwrap();
    let out = run(&["space-map", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("asm.tua"));
}

#[test]
fn generated_mesh_is_written_as_msh() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("disk.msh");
    let out = run(&["gen-mesh", "--radius", "0.2", "--resolution", "20", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mesh = read_msh(&path).unwrap();
    for f in mesh.facets().iter().filter(|f| f.marker == INTERFACE) {
        let p = mesh.coords()[f.nodes[0]];
        assert!(((p[0] - 0.5).hypot(p[1] - 0.5) - 0.2).abs() < 1e-12);
    }
}

#[test]
fn deterministic_runs_write_identical_histories() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = run(&flow_coarse(dir.path()).iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join("iter_000.vtk").exists());
    }
    let text = |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join("history.csv")).unwrap();
    assert_eq!(text(&a), text(&b));
    assert!(text(&a).lines().skip(1).all(|l| l.ends_with(",0.0")));
}

#[test]
fn shipped_pipe_meshes_match_their_manifest() {
    let dir = root().join("assets/pipes");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    for (name, entry) in manifest.as_object().unwrap() {
        let mesh = read_msh(dir.join(name)).unwrap();
        assert_eq!(mesh.n_nodes() as u64, entry["nodes"].as_u64().unwrap(), "{name}");
        assert_eq!(mesh.n_triangles() as u64, entry["triangles"].as_u64().unwrap(), "{name}");
        for (marker, count) in entry["facets_per_marker"].as_object().unwrap() {
            let m: i32 = marker.parse().unwrap();
            assert_eq!(mesh.topology().facets_with_marker(m).count() as u64, count.as_u64().unwrap(), "{name} marker {m}");
        }
    }
}
