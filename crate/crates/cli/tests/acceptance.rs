//! Acceptance checks for the command-line pipeline: rerun determinism and
//! the shape of the evaluation protocol outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_flocklab");

fn report(criterion: usize, name: &str, ok: bool, detail: &str) {
    println!(
        "acceptance criterion {criterion} ({name}): {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn run(args: &[&str], cwd: &Path) {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "flocklab {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        out.insert(
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path()).unwrap(),
        );
    }
    out
}

const TINY_CONFIG: &str = r#"
seed = 11

[env]
episode_len = 40

[net]
d_embed = 8
hidden = 8
heads = 2

[ppo]
n_envs = 2
rollout_len = 4
epochs = 1
minibatches = 1

[stage1]
n_candidates = 2
updates_per_candidate = 1
eval_episodes = 2

[[periods]]
n_columns = 0
n_balls = 0
updates = 2

[[periods]]
n_columns = 3
n_balls = 1
updates = 2

[eval]
episodes = 3

[metrics]
episodes = 2
"#;

#[test]
fn criterion_10_cli_rerun_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(root.join("run.toml"), TINY_CONFIG).unwrap();

    let commands: Vec<Vec<&str>> = vec![
        vec!["search-weights", "--config", "run.toml", "--out-dir"],
        vec!["train", "--config", "run.toml", "--checkpoint-every", "1", "--out-dir"],
        vec![
            "eval",
            "--config",
            "run.toml",
            "--sweep-columns",
            "2,4",
            "--sweep-balls",
            "1,2",
            "--out-dir",
        ],
        vec!["replay", "--config", "run.toml", "--episode-seed", "3", "--out-dir"],
    ];

    let mut ok = true;
    let mut detail = String::from("all four commands byte-identical on rerun");
    for (i, base) in commands.iter().enumerate() {
        let dirs = [format!("a{i}"), format!("b{i}")];
        for d in &dirs {
            let mut args = base.clone();
            args.push(d);
            run(&args, root);
        }
        let a = read_dir_bytes(&root.join(&dirs[0]));
        let b = read_dir_bytes(&root.join(&dirs[1]));
        if a.is_empty() || a != b {
            ok = false;
            detail = format!("command `{}` differed between reruns", base[0]);
            break;
        }
    }
    report(10, "end-to-end determinism", ok, &detail);
}

#[test]
fn criterion_11_eval_protocol_shape() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(
        root.join("run.toml"),
        r#"
seed = 2

[env]
n_columns = 10
n_balls = 2

[net]
d_embed = 16
hidden = 32
heads = 2

[eval]
episodes = 100

[metrics]
episodes = 10
"#,
    )
    .unwrap();
    run(
        &[
            "eval",
            "--config",
            "run.toml",
            "--sweep-columns",
            "5,10,15,20",
            "--sweep-balls",
            "1,2,3,4,5",
            "--out-dir",
            "ev",
        ],
        root,
    );

    let mut ok = true;
    let mut detail = String::new();

    let fixed = fs::read_to_string(root.join("ev/eval_report.csv")).unwrap();
    let lines: Vec<&str> = fixed.lines().collect();
    if lines.len() != 2
        || lines[0] != "n_columns,n_balls,episodes,collision_free_rate,formation_maintenance"
    {
        ok = false;
        detail = "fixed-scenario report malformed".into();
    } else {
        let fields: Vec<&str> = lines[1].split(',').collect();
        let cfr: f64 = fields[3].parse().unwrap();
        if fields[0] != "10" || fields[1] != "2" || fields[2] != "100" || !(0.0..=1.0).contains(&cfr)
        {
            ok = false;
            detail = format!("unexpected fixed-scenario row: {}", lines[1]);
        }
    }

    for (file, expect_rows, axis_col, axis) in [
        ("ev/sweep_columns.csv", 4usize, 0usize, vec!["5", "10", "15", "20"]),
        ("ev/sweep_balls.csv", 5, 1, vec!["1", "2", "3", "4", "5"]),
    ] {
        let text = fs::read_to_string(root.join(file)).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        if rows.len() != expect_rows {
            ok = false;
            detail = format!("{file}: expected {expect_rows} rows, found {}", rows.len());
            continue;
        }
        for (row, want) in rows.iter().zip(&axis) {
            let fields: Vec<&str> = row.split(',').collect();
            let cfr: f64 = fields[3].parse().unwrap();
            if fields[axis_col] != *want || !(0.0..=1.0).contains(&cfr) {
                ok = false;
                detail = format!("{file}: bad row {row}");
            }
        }
    }

    if detail.is_empty() {
        detail = "fixed report (10 columns + 2 balls, 100 episodes) and both sweep tables complete"
            .into();
    }
    report(11, "evaluation protocol shape", ok, &detail);
}
