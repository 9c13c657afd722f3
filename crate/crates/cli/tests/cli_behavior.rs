//! Exit-code and argument-handling checks for the `cernet` binary.
//! Convention: 0 success, 1 runtime/numeric failure, 2 argument/schema error.

use std::path::PathBuf;
use std::process::{Command, Output};

fn cernet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cernet"))
        .args(args)
        .output()
        .expect("spawn cernet")
}

fn temp_root(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cernet-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

#[test]
fn missing_required_argument_exits_2_with_usage() {
    let out = cernet(&["gen-data", "--classes", "3"]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--out"), "usage text should name the flag: {stderr}");
}

#[test]
fn unknown_preset_exits_2_listing_presets() {
    let root = temp_root("preset");
    let data = root.join("d.json");
    let ok = cernet(&[
        "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--seed", "1",
        "--out", data.to_str().unwrap(),
    ]);
    assert_eq!(code(&ok), 0);
    let out = cernet(&[
        "train", "--data", data.to_str().unwrap(), "--preset", "Bogus", "--out-dir",
        root.join("t").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    for name in ["SingleMini", "MultiLarge"] {
        assert!(stderr.contains(name), "expected {name} in: {stderr}");
    }
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn out_of_range_class_exits_2() {
    let root = temp_root("class-range");
    let data = root.join("d.json");
    assert_eq!(
        code(&cernet(&[
            "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--out",
            data.to_str().unwrap(),
        ])),
        0
    );
    assert_eq!(
        code(&cernet(&[
            "train", "--data", data.to_str().unwrap(), "--preset", "MultiMini", "--epochs",
            "2", "--out-dir", root.join("t").to_str().unwrap(),
        ])),
        0
    );
    let ckpt = root.join("t").join("checkpoint_run000.json");
    let out = cernet(&[
        "generate", "--checkpoint", ckpt.to_str().unwrap(), "--class", "7", "--steps", "5",
        "--out", root.join("g.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn wrong_observation_dimension_exits_2() {
    let root = temp_root("wrong-dim");
    let data = root.join("d.json");
    assert_eq!(
        code(&cernet(&[
            "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--out",
            data.to_str().unwrap(),
        ])),
        0
    );
    assert_eq!(
        code(&cernet(&[
            "train", "--data", data.to_str().unwrap(), "--preset", "MultiMini", "--epochs",
            "2", "--out-dir", root.join("t").to_str().unwrap(),
        ])),
        0
    );
    let obs = root.join("obs.json");
    std::fs::write(&obs, "[[0.1, 0.2], [0.2, 0.1], [0.0, 0.0]]").unwrap();
    let out = cernet(&[
        "infer", "--checkpoint",
        root.join("t").join("checkpoint_run000.json").to_str().unwrap(), "--observations",
        obs.to_str().unwrap(), "--out-dir", root.join("i").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn non_empty_out_dir_requires_force() {
    let root = temp_root("force");
    let data = root.join("d.json");
    assert_eq!(
        code(&cernet(&[
            "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--out",
            data.to_str().unwrap(),
        ])),
        0
    );
    let out_dir = root.join("t");
    std::fs::create_dir_all(&out_dir).unwrap();
    std::fs::write(out_dir.join("leftover.txt"), "x").unwrap();
    let blocked = cernet(&[
        "train", "--data", data.to_str().unwrap(), "--preset", "MultiMini", "--epochs", "2",
        "--out-dir", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&blocked), 2);
    let forced = cernet(&[
        "train", "--data", data.to_str().unwrap(), "--preset", "MultiMini", "--epochs", "2",
        "--out-dir", out_dir.to_str().unwrap(), "--force",
    ]);
    assert_eq!(code(&forced), 0, "{}", String::from_utf8_lossy(&forced.stderr));
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn malformed_dataset_file_exits_2() {
    let root = temp_root("schema");
    let data = root.join("bad.json");
    // Second class has a different length: schema violation.
    std::fs::write(
        &data,
        r#"{"format_version":1,"meta":{"T":3,"D":1,"normalization":null},
           "classes":[{"label":"a","points":[[0.1],[0.2],[0.3]]},
                      {"label":"b","points":[[0.1],[0.2]]}]}"#,
    )
    .unwrap();
    let out = cernet(&[
        "train", "--data", data.to_str().unwrap(), "--preset", "MultiMini", "--out-dir",
        root.join("t").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("class 1"));
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn bad_perturbation_syntax_exits_2() {
    let root = temp_root("perturb");
    let out = cernet(&[
        "generate", "--checkpoint", "nonexistent.json", "--class", "0", "--perturb",
        "40-45:0.2", "--out", root.join("g.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn unknown_family_exits_2_and_known_family_works() {
    let root = temp_root("family");
    let bad = cernet(&[
        "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--family",
        "hexagon", "--out", root.join("d.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 2);
    let good = cernet(&[
        "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--family",
        "figure-eight", "--out", root.join("d.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stderr));
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn evaluate_dtw_emits_score_line() {
    let root = temp_root("dtw-line");
    let data = root.join("d.json");
    assert_eq!(
        code(&cernet(&[
            "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--out",
            data.to_str().unwrap(),
        ])),
        0
    );
    let out = cernet(&[
        "evaluate", "dtw", "--a", data.to_str().unwrap(), "--class-a", "0", "--b",
        data.to_str().unwrap(), "--class-b", "1",
    ]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("score,raw_cost,len_a,len_b\n"), "{stdout}");
    assert_eq!(stdout.lines().count(), 2);
    let _ = std::fs::remove_dir_all(&root);
}

#[test]
fn dataset_file_without_class_index_exits_2() {
    let root = temp_root("dtw-noclass");
    let data = root.join("d.json");
    assert_eq!(
        code(&cernet(&[
            "gen-data", "--classes", "2", "--timesteps", "16", "--hold-tail", "3", "--out",
            data.to_str().unwrap(),
        ])),
        0
    );
    let out = cernet(&[
        "evaluate", "dtw", "--a", data.to_str().unwrap(), "--b", data.to_str().unwrap(),
        "--class-b", "1",
    ]);
    assert_eq!(code(&out), 2);
    let _ = std::fs::remove_dir_all(&root);
}
