//! Drives the `duo` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use duo_fmaps::convert::read_point_map;
use duo_fmaps::mesh::load_mesh;
use duo_fmaps::spectral::cache_read;
use serde_json::Value;

const SMALL: [&str; 10] = [
    "--set",
    "k_c=30",
    "--set",
    "k_q=15",
    "--set",
    "wks_dims=32",
    "--set",
    "channels=4",
    "--set",
    "d_out=8",
];

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_duo"))
            .args(args)
            .current_dir(self.dir.path())
            .env("DUO_CACHE_DIR", self.path("cache"))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "duo {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn small(&self, args: &[&str]) -> String {
        let all: Vec<&str> = args.iter().chain(SMALL.iter()).copied().collect();
        self.ok(&all)
    }

    /// Generates a resolution-2 blob and caches it with small settings.
    fn blob(&self, seed: u64) -> String {
        let seed = seed.to_string();
        self.ok(&["gen", "blob", "--seed", &seed, "--resolution", "2"]);
        let stem = format!("blob_{:04}", seed.parse::<u64>().unwrap());
        self.small(&["precompute", &format!("{stem}.off")]);
        format!("cache/{stem}.duoc")
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_naming_and_usage_errors() {
    let ws = Workspace::new();
    ws.ok(&["gen", "blob", "--seed", "7", "--resolution", "2"]);
    assert!(ws.path("blob_0007.off").exists());
    assert!(ws.path("blob_0007.sym").exists());
    ws.ok(&["gen", "icosphere", "--subdiv", "3"]);
    let ico = load_mesh(ws.path("icosphere_3.off"), None).unwrap();
    assert_eq!(ico.num_vertices(), 642);
    assert_eq!(
        ws.run(&["gen", "icosphere", "--subdiv", "9"]).status.code(),
        Some(2)
    );
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        ws.run(&["gen", "icosphere", "--set", "k_c=abc"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn precompute_hits_and_rebuilds() {
    let ws = Workspace::new();
    ws.ok(&["gen", "blob", "--seed", "3", "--resolution", "2"]);
    let first = ws.ok(&["precompute", "blob_0003.off"]);
    assert!(first.starts_with("wrote"), "{first}");
    let cache = ws.path("cache/blob_0003.duoc");
    assert_eq!(cache_read(&cache).unwrap().lb.k(), 50);
    assert_eq!(cache_read(&cache).unwrap().conn.k(), 20);

    let second = ws.ok(&["precompute", "blob_0003.off"]);
    assert!(second.contains("cache hit"), "{second}");

    let mut bytes = std::fs::read(&cache).unwrap();
    let mid = bytes.len() / 3;
    bytes[mid] ^= 0xff;
    std::fs::write(&cache, &bytes).unwrap();
    let out = ws.run(&["precompute", "blob_0003.off"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rebuilt"));
    assert!(cache_read(&cache).is_ok());

    // Changed settings also force a rebuild.
    let third = ws.ok(&["precompute", "blob_0003.off", "--k-c", "20"]);
    assert!(third.contains("rebuilt"), "{third}");
    assert_eq!(cache_read(&cache).unwrap().lb.k(), 20);
}

#[test]
fn match_identity_and_mirror() {
    let ws = Workspace::new();
    let c = ws.blob(7);
    ws.small(&["match", &c, &c, "--out", "same"]);
    let report = json(&ws.path("same/report.json"));
    assert_eq!(report["orientation_c"], 1);
    assert_eq!(report["orientation_q"], 1);
    assert!(report["eval_c"].is_null());
    let map = read_point_map(ws.path("same/p2p_c.txt")).unwrap();
    let id: Vec<usize> = (0..map.indices.len()).collect();
    assert!(map.accuracy(&id) >= 0.999);
    for f in ["map.fmap", "map.qmap", "p2p_q.txt"] {
        assert!(ws.path("same").join(f).exists());
    }

    ws.small(&[
        "match",
        &c,
        &c,
        "--out",
        "mirror",
        "--mirror-descriptors",
        "blob_0007.sym",
    ]);
    let mirrored = json(&ws.path("mirror/report.json"));
    assert_eq!(mirrored["orientation_c"], -1);
    assert_eq!(mirrored["mirrored_descriptors"], true);
    let same_res = report["pushforward_max_residual"].as_f64().unwrap();
    let mirror_res = mirrored["pushforward_max_residual"].as_f64().unwrap();
    assert!(
        mirror_res > 1e3 * same_res.max(1e-12),
        "{same_res} vs {mirror_res}"
    );

    // With ground truth an evaluation section appears.
    let gt: String = (0..id.len()).map(|i| format!("{i}\n")).collect();
    std::fs::write(ws.path("gt.txt"), gt).unwrap();
    ws.small(&["match", &c, &c, "--out", "eval", "--gt", "gt.txt"]);
    let with_eval = json(&ws.path("eval/report.json"));
    assert_eq!(with_eval["eval_c"]["mean_error"], 0.0);

    let eval_out = ws.ok(&["eval", "same/p2p_c.txt", "gt.txt", "blob_0007.off"]);
    let parsed: Value = serde_json::from_str(&eval_out).unwrap();
    assert_eq!(parsed["n_evaluated"], id.len());
    assert_eq!(
        ws.run(&["eval", "same/p2p_c.txt", "nope.txt", "blob_0007.off"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        ws.run(&["match", &c, "cache/nope.duoc"]).status.code(),
        Some(1)
    );
}

#[test]
fn refine_descends_is_seeded_and_feeds_match() {
    let ws = Workspace::new();
    let a = ws.blob(7);
    let b = ws.blob(8);
    std::fs::write(
        ws.path("pairs.txt"),
        format!("{a} {b}\n# comment\n{b} {a}\n"),
    )
    .unwrap();
    let run = |out: &str| {
        let stdout = ws.small(&[
            "refine",
            "pairs.txt",
            "--epochs",
            "3",
            "--seed",
            "4",
            "--out",
            out,
        ]);
        let nums: Vec<f64> = stdout
            .split(|c: char| c.is_whitespace() || c == ';')
            .filter_map(|t| t.parse().ok())
            .collect();
        (nums[1], nums[2])
    };
    let (initial, fin) = run("r1");
    assert!(fin <= initial, "{initial} -> {fin}");
    run("r2");
    let log1 = std::fs::read(ws.path("r1/train.jsonl")).unwrap();
    assert_eq!(log1, std::fs::read(ws.path("r2/train.jsonl")).unwrap());
    assert_eq!(
        std::fs::read(ws.path("r1/probe.bin")).unwrap(),
        std::fs::read(ws.path("r2/probe.bin")).unwrap()
    );
    assert_eq!(String::from_utf8(log1).unwrap().lines().count(), 6);

    ws.small(&[
        "match",
        &a,
        &a,
        "--probe",
        "r1/probe.bin",
        "--out",
        "probed",
    ]);
    assert_eq!(json(&ws.path("probed/report.json"))["orientation_c"], 1);

    // An identity pair sits at the global minimum throughout.
    std::fs::write(ws.path("self.txt"), format!("{a} {a}\n")).unwrap();
    let out = ws.small(&["refine", "self.txt", "--epochs", "3", "--out", "r3"]);
    for line in std::fs::read_to_string(ws.path("r3/train.jsonl"))
        .unwrap()
        .lines()
    {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert!(rec["l_final"].as_f64().unwrap() <= 1e-12, "{out}");
    }

    std::fs::write(ws.path("empty.txt"), "# nothing\n").unwrap();
    assert_eq!(ws.run(&["refine", "empty.txt"]).status.code(), Some(2));
}

#[test]
fn config_file_and_flags() {
    let ws = Workspace::new();
    ws.ok(&["gen", "blob", "--seed", "2", "--resolution", "2"]);
    std::fs::write(
        ws.path("run.cfg"),
        "# small run\nk_c = 16\nk_q=8 # trailing\n",
    )
    .unwrap();
    ws.ok(&["--config", "run.cfg", "precompute", "blob_0002.off"]);
    let data = cache_read(ws.path("cache/blob_0002.duoc")).unwrap();
    assert_eq!((data.lb.k(), data.conn.k()), (16, 8));
    std::fs::write(ws.path("bad.cfg"), "k_c 16\n").unwrap();
    assert_eq!(
        ws.run(&["--config", "bad.cfg", "precompute", "blob_0002.off"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ws.run(&["--config", "missing.cfg", "precompute", "blob_0002.off"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ws.run(&["--threads", "0", "precompute", "blob_0002.off"])
            .status
            .code(),
        Some(2)
    );
}
