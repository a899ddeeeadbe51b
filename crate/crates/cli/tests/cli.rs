//! End-to-end runs of the `mvpa` binary on synthetic subjects.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvpa_core::report::read_csv_rows;
use mvpa_core::searchlight::read_accuracy_map;
use mvpa_core::selection::{VoxelSelection, CANONICAL_ROIS};
use serde_json::{json, Value};
use tempfile::TempDir;

fn mvpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvpa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 180 concepts split like the reference norms, six ROIs side by side on a
/// 12 x 6 x 4 grid, a class effect in the first ROI and an embedding that
/// linearly drives the second.
fn subject_spec() -> Value {
    let rois: serde_json::Map<String, Value> = CANONICAL_ROIS
        .iter()
        .enumerate()
        .map(|(k, r)| {
            (
                r.to_string(),
                json!({ "box": { "min": [2 * k, 0, 0], "max": [2 * k + 1, 5, 3] } }),
            )
        })
        .collect();
    json!({
        "subject_id": "s",
        "n_concepts": 180,
        "split": { "concrete": 69, "abstract": 63, "excluded": 48 },
        "grid_shape": [12, 6, 4],
        "seed": 7,
        "rois": rois,
        "areas": {
            "left": { "box": { "min": [0, 0, 0], "max": [5, 5, 3] } },
            "right": { "box": { "min": [6, 0, 0], "max": [11, 5, 3] } }
        },
        "embeddings": [{ "name": "glove", "dimension": 20 }],
        "effects": [
            { "type": "class_separation", "voxels": { "box": { "min": [0, 0, 0], "max": [1, 5, 3] } }, "effect_size": 1.0 },
            { "type": "linear_map", "embedding": "glove", "voxels": { "box": { "min": [2, 0, 0], "max": [3, 5, 3] } },
              "weight_scale": 0.5, "noise_sigma": 0.5 },
            { "type": "cross_paradigm_stability", "voxels": { "range": { "start": 200, "end": 260 } }, "effect_size": 1.0 }
        ]
    })
}

struct Workspace {
    dir: TempDir,
    subjects: Vec<PathBuf>,
    labels: Vec<String>,
}

impl Workspace {
    fn new(count: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("spec.json");
        fs::write(&spec, subject_spec().to_string()).unwrap();
        let data = dir.path().join("data");
        let out = mvpa(&[
            "synth",
            "--config",
            path(&spec),
            "--out",
            path(&data),
            "--count",
            &count.to_string(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let labels: Vec<String> = if count == 1 {
            vec!["s".into()]
        } else {
            (1..=count).map(|k| format!("s{k:02}")).collect()
        };
        let subjects = labels.iter().map(|l| data.join(l)).collect();
        Self { dir, subjects, labels }
    }

    fn config(&self, name: &str, body: Value) -> PathBuf {
        let mut body = body;
        body["subjects"] = json!(self.subjects);
        let p = self.dir.path().join(name);
        fs::write(&p, body.to_string()).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn roi_and_stable_selections() -> Value {
    let mut sel: Vec<Value> = CANONICAL_ROIS
        .iter()
        .map(|r| json!({ "type": "roi", "regions": [r] }))
        .collect();
    sel.push(json!({ "type": "stable", "top_k": 60 }));
    json!(sel)
}

fn csv_body(p: &Path) -> String {
    let text = fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# generated_at="));
    lines.collect::<Vec<_>>().join("\n")
}

#[test]
fn study_shaped_run_has_one_decoding_row_per_subject_paradigm_and_selection() {
    let ws = Workspace::new(3);
    let config = ws.config(
        "exp.json",
        json!({
            "selections": roi_and_stable_selections(),
            "analyses": { "decoding": { "permutations": 20 } },
            "seed": 11
        }),
    );
    let out = ws.out("results");
    let run = mvpa(&["decode", "--config", path(&config), "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let rows = read_csv_rows(&out.join("report.csv")).unwrap();
    let accuracy: Vec<_> = rows
        .iter()
        .filter(|r| r.analysis == "decoding" && r.metric == "accuracy")
        .collect();
    assert_eq!(accuracy.len(), 3 * 3 * 7);
    for r in &accuracy {
        assert!((0.0..=1.0).contains(&r.value));
    }
    // the planted class effect lives in the first ROI
    let ifg: Vec<f64> = accuracy
        .iter()
        .filter(|r| r.selection == "IFG")
        .map(|r| r.value)
        .collect();
    assert!(ifg.iter().all(|&a| a > 0.7), "{ifg:?}");

    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["records"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r.get("error").is_none()));
    for s in ["s01", "s02", "s03"] {
        let sel =
            VoxelSelection::read_json(&out.join("selections").join(s).join("stable").join("selection.json")).unwrap();
        assert_eq!(sel.len(), 60);
        let roi =
            VoxelSelection::read_json(&out.join("selections").join(s).join("IFG").join("selection.json")).unwrap();
        assert_eq!(roi.len(), 48);
    }
}

#[test]
fn dry_run_validates_without_writing() {
    let ws = Workspace::new(1);
    let config = ws.config(
        "exp.json",
        json!({ "selections": roi_and_stable_selections(), "analyses": { "decoding": {} }, "seed": 1 }),
    );
    let out = ws.out("never");
    let run = mvpa(&["run", "--dry-run", "--config", path(&config), "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let plan: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(plan["plan"]["tasks"], 3 * 7);
    assert!(!out.exists());
}

#[test]
fn unknown_region_is_a_config_error() {
    let ws = Workspace::new(1);
    let config = ws.config(
        "bad.json",
        json!({ "selections": [{ "type": "roi", "regions": ["XYZ"] }], "analyses": { "decoding": {} }, "seed": 1 }),
    );
    let out = ws.out("never");
    for dry in [true, false] {
        let mut args = vec!["run", "--config", path(&config), "--out", path(&out)];
        if dry {
            args.push("--dry-run");
        }
        let run = mvpa(&args);
        assert_eq!(run.status.code(), Some(2));
        let err: Value = serde_json::from_slice(&run.stderr).unwrap();
        assert_eq!(err["error"]["kind"], "config");
        assert!(err["error"]["message"].as_str().unwrap().contains("XYZ"));
        assert!(!out.exists());
    }
}

#[test]
fn malformed_configs_are_rejected() {
    let ws = Workspace::new(1);
    let cases = [
        json!({ "selections": [], "analyses": {} }),
        json!({ "seed": 1, "selections": [{ "type": "stable", "top_k": 0 }] }),
        json!({ "seed": 1, "analyses": { "decoding": { "alpha": 0.0 } } }),
        json!({ "seed": 1, "paradigms": ["audio"] }),
        json!({ "seed": 1, "analyses": { "rsa": { "embeddings": ["word2vec"] } } }),
        json!({ "seed": 1, "unknown_field": true }),
    ];
    for (i, body) in cases.into_iter().enumerate() {
        let config = ws.config(&format!("bad{i}.json"), body);
        let run = mvpa(&["run", "--dry-run", "--config", path(&config)]);
        assert_eq!(
            run.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    let run = mvpa(&["run", "--config", path(&ws.out("missing.json"))]);
    assert_eq!(run.status.code(), Some(2));
}

fn full_config(ws: &Workspace) -> PathBuf {
    ws.config(
        "full.json",
        json!({
            "selections": [
                { "type": "roi", "regions": ["IFG", "MTG"], "name": "front" },
                { "type": "stable", "top_k": 40 },
                { "type": "searchlight", "radius_mm": 4.0, "threshold": 0.5 }
            ],
            "analyses": {
                "decoding": { "permutations": 10 },
                "clustering": {},
                "encoding": { "embeddings": ["glove"], "random_baseline": { "dimension": 10, "initializations": 3 } },
                "rsa": { "embeddings": ["glove"] }
            },
            "paradigms": ["sentence", "picture"],
            "seed": 2024
        }),
    )
}

#[test]
fn reruns_match_byte_for_byte_apart_from_the_timestamp() {
    let ws = Workspace::new(2);
    let config = full_config(&ws);
    let (a, b) = (ws.out("a"), ws.out("b"));
    for out in [&a, &b] {
        let run = mvpa(&["run", "--config", path(&config), "--out", path(out)]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    assert_eq!(csv_body(&a.join("report.csv")), csv_body(&b.join("report.csv")));

    let rows = read_csv_rows(&a.join("report.csv")).unwrap();
    let analyses: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.analysis.as_str()).collect();
    for name in [
        "decoding",
        "clustering",
        "encoding:glove",
        "encoding:random",
        "rsa:glove",
        "searchlight",
        "area_ranking",
        "selection",
    ] {
        assert!(analyses.contains(name), "missing {name}");
    }
    let glove = rows
        .iter()
        .find(|r| r.analysis == "encoding:glove" && r.selection == "front" && r.metric == "mean_overall")
        .unwrap();
    assert!(glove.value > 0.6, "{}", glove.value);
    let ranking = fs::read_to_string(a.join("searchlight").join("sentence").join("area_ranking.csv")).unwrap();
    assert!(ranking.starts_with("area,mean_accuracy,mean_rank,n_subjects\n"));
    assert!(ranking.contains("\nleft,"), "{ranking}");
    let map = read_accuracy_map(
        &a.join("searchlight")
            .join("s01")
            .join("picture")
            .join("accuracy_map.f32"),
    )
    .unwrap();
    assert_eq!(map.len(), 12 * 6 * 4);

    let other_seed = ws.out("c");
    let run = mvpa(&[
        "run",
        "--config",
        path(&config),
        "--out",
        path(&other_seed),
        "--seed",
        "9",
    ]);
    assert!(run.status.success());
    assert_ne!(
        csv_body(&a.join("report.csv")),
        csv_body(&other_seed.join("report.csv"))
    );
}

#[test]
fn thread_count_does_not_change_outputs() {
    let ws = Workspace::new(2);
    let config = full_config(&ws);
    let (one, four) = (ws.out("t1"), ws.out("t4"));
    for (out, threads) in [(&one, "1"), (&four, "4")] {
        let run = mvpa(&[
            "run",
            "--config",
            path(&config),
            "--out",
            path(out),
            "--threads",
            threads,
        ]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    assert_eq!(csv_body(&one.join("report.csv")), csv_body(&four.join("report.csv")));
    for s in ["s01", "s02"] {
        let rel = Path::new("searchlight")
            .join(s)
            .join("sentence")
            .join("accuracy_map.f32");
        assert_eq!(fs::read(one.join(&rel)).unwrap(), fs::read(four.join(&rel)).unwrap());
    }
}

#[test]
fn failed_tasks_are_recorded_and_the_run_continues() {
    let ws = Workspace::new(1);
    // glove is 20-dimensional: RSA is fine, but k = 200 clusters exceed the items
    let config = ws.config(
        "partial.json",
        json!({
            "selections": [{ "type": "roi", "regions": ["IFG"] }],
            "analyses": { "clustering": { "k": 200 }, "rsa": { "embeddings": ["glove"] } },
            "paradigms": ["sentence"],
            "seed": 3
        }),
    );
    let out = ws.out("partial");
    let run = mvpa(&["run", "--config", path(&config), "--out", path(&out)]);
    assert_eq!(run.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert!(records[0]["error"].is_string());
    assert!(records[1].get("error").is_none());
    let rows = read_csv_rows(&out.join("report.csv")).unwrap();
    assert!(rows.iter().all(|r| r.analysis == "rsa:glove"));
}

#[test]
fn select_stable_and_report_merge() {
    let ws = Workspace::new(1);
    let config = ws.config(
        "sel.json",
        json!({ "seed": 5, "selections": [{ "type": "stable", "top_k": 100 }] }),
    );
    let out = ws.out("sel");
    let run = mvpa(&["select-stable", "--config", path(&config), "--out", path(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let sel = VoxelSelection::read_json(
        &out.join("selections")
            .join(&ws.labels[0])
            .join("stable")
            .join("selection.json"),
    )
    .unwrap();
    assert_eq!(sel.len(), 100);

    let a = ws.out("a");
    let run = mvpa(&[
        "decode",
        "--config",
        path(&ws.config("d.json", json!({ "seed": 5, "selections": [{ "type": "roi", "regions": ["IFG"] }], "analyses": { "decoding": { "permutations": 5 } } }))),
        "--out",
        path(&a),
    ]);
    assert!(run.status.success());
    let merged = ws.out("merged.csv");
    let run = mvpa(&[
        "report",
        "--out",
        path(&merged),
        path(&out.join("report.csv")),
        path(&a.join("report.csv")),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let n = read_csv_rows(&out.join("report.csv")).unwrap().len() + read_csv_rows(&a.join("report.csv")).unwrap().len();
    assert_eq!(read_csv_rows(&merged).unwrap().len(), n);
}
