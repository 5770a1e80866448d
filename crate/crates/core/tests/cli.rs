use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gwlab::dataset::{write_log, GameRecord, GameStatus, Turn};
use gwlab::world::AnswerClass;

fn gwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwlab"))
        .args(args)
        .env_remove("GWLAB_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gwlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    gwlab(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn game(id: u64, success: bool) -> GameRecord {
    GameRecord {
        game_id: id,
        scene_id: id,
        target_id: 0,
        turns: vec![Turn::new("is it a cat?", AnswerClass::Yes)],
        guess: Some(if success { 0 } else { 1 }),
        status: if success {
            GameStatus::Success
        } else {
            GameStatus::Failure
        },
        beliefs: None,
    }
}

/// Two logs whose joint success counts are the given cells.
fn confusion_logs(dir: &Path, cells: [usize; 4]) -> (PathBuf, PathBuf) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut id = 0;
    for (k, &count) in cells.iter().enumerate() {
        for _ in 0..count {
            a.push(game(id, k < 2));
            b.push(game(id, k % 2 == 0));
            id += 1;
        }
    }
    let (pa, pb) = (dir.join("a.jsonl"), dir.join("b.jsonl"));
    write_log(&a, &pa).unwrap();
    write_log(&b, &pb).unwrap();
    (pa, pb)
}

#[test]
fn gen_world_writes_one_line_per_scene() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scenes.jsonl");
    ok(&[
        "gen-world",
        "--scenes",
        "100",
        "--seed",
        "7",
        "--out",
        p(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 100);
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-world", "--scenes", "5", "--seed", "7", "--out", p(&a)]);
    let out = Command::new(env!("CARGO_BIN_EXE_gwlab"))
        .args(["gen-world", "--scenes", "5", "--out", p(&b)])
        .env("GWLAB_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn confusion_prints_published_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = confusion_logs(dir.path(), [7565, 1993, 3573, 6864]);
    let json = dir.path().join("m.json");
    let text = ok(&[
        "confusion",
        "--log-a",
        p(&a),
        "--log-b",
        p(&b),
        "--out",
        p(&json),
    ]);
    for want in ["47.8%", "52.2%", "55.7%", "44.3%"] {
        assert!(text.contains(want), "{want} missing from\n{text}");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(m["cells"]["aa"], 7565);
}

#[test]
fn confusion_of_different_games_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    write_log(&[game(1, true), game(2, true)], &a).unwrap();
    write_log(&[game(1, true)], &b).unwrap();
    let out = gwlab(&["confusion", "--log-a", p(&a), "--log-b", p(&b)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('2'));
}

#[test]
fn corrupt_at_ratio_zero_copies_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("s.jsonl");
    let games = dir.path().join("g.jsonl");
    let out = dir.path().join("c.jsonl");
    ok(&[
        "gen-world",
        "--scenes",
        "30",
        "--out",
        p(&scenes),
        "--dialogs",
        p(&games),
    ]);
    let before = std::fs::read(&games).unwrap();
    ok(&[
        "corrupt",
        "--log",
        p(&games),
        "--ratio",
        "0",
        "--out",
        p(&out),
    ]);
    assert_eq!(std::fs::read(&out).unwrap(), before);
    assert_eq!(std::fs::read(&games).unwrap(), before);
    let text = ok(&[
        "corrupt",
        "--log",
        p(&games),
        "--ratio",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(text.starts_with("corrupted "));
    assert_ne!(std::fs::read(&out).unwrap(), before);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["gen-world", "--scenes", "3"]), 2);
    assert_eq!(code(&["gen-world", "--bogus"]), 2);
    assert_eq!(
        code(&["corrupt", "--log", "x", "--ratio", "half", "--out", "y"]),
        2
    );
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "alpha = 1.5\n").unwrap();
    let out = dir.path().join("s.jsonl");
    let args = [
        "--config",
        p(&cfg),
        "gen-world",
        "--scenes",
        "3",
        "--out",
        p(&out),
    ];
    let res = gwlab(&args);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("alpha"));
    std::fs::write(&cfg, "colour = red\n").unwrap();
    let res = gwlab(&args);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("colour"));
    assert!(!out.exists());
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = dir.path().join("o.jsonl");
    let res = gwlab(&[
        "corrupt",
        "--log",
        p(&missing),
        "--ratio",
        "0.5",
        "--out",
        p(&out),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("missing.jsonl"));
}

#[test]
fn selfplay_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("s.jsonl");
    ok(&[
        "gen-world",
        "--scenes",
        "40",
        "--seed",
        "3",
        "--out",
        p(&scenes),
    ]);
    let mut logs = Vec::new();
    for (i, jobs) in ["1", "1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("play{i}.jsonl"));
        ok(&[
            "selfplay",
            "--scenes",
            p(&scenes),
            "--oracle",
            "noisy:0.2",
            "--guesser",
            "uniform",
            "--questioner",
            "scripted",
            "--seed",
            "11",
            "--jobs",
            jobs,
            "--out",
            p(&out),
        ]);
        logs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
    assert_eq!(logs[0], logs[2]);
    assert_eq!(String::from_utf8_lossy(&logs[0]).lines().count(), 40);
}

#[test]
fn full_pipeline_with_trained_agents() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (cfg, scenes, gold) = (d("run.cfg"), d("s.jsonl"), d("g.jsonl"));
    let (oc, gc, qc) = (d("o.ckpt"), d("gs.ckpt"), d("q.ckpt"));
    let (play, sweep, grid) = (d("play.jsonl"), d("sweep.csv"), d("grid.csv"));
    std::fs::write(&cfg, "# quick run\nepochs = 2\nhidden_size = 8\nseed = 4\n").unwrap();
    ok(&[
        "gen-world",
        "--scenes",
        "120",
        "--min-objects",
        "4",
        "--max-objects",
        "6",
        "--out",
        &scenes,
        "--dialogs",
        &gold,
    ]);
    let corpus = ["--scenes", &scenes, "--games", &gold];
    let train = |cmd: &str, extra: &[&str]| {
        let mut args = vec!["--config", &cfg, cmd];
        args.extend(corpus);
        args.extend(extra);
        ok(&args)
    };
    let report = d("o.json");
    assert!(train("train-oracle", &["--out", &oc, "--report", &report]).contains("test accuracy"));
    train("train-guesser", &["--out", &gc]);
    assert!(train("train-questioner", &["--guesser", &gc, "--out", &qc]).contains("perplexity"));

    let oracle = format!("trained:{oc}");
    let guesser = format!("trained:{gc}");
    let questioner = format!("trained:{qc}");
    let text = ok(&[
        "--config",
        &cfg,
        "selfplay",
        "--scenes",
        &scenes,
        "--oracle",
        &oracle,
        "--guesser",
        &guesser,
        "--questioner",
        &questioner,
        "--beliefs",
        "--out",
        &play,
    ]);
    assert!(text.contains("success"));
    let text = ok(&["eval", "--log", &play, "--report", &d("e.json")]);
    assert!(text.contains("self-BLEU-4"));
    let text = ok(&[
        "eval",
        "--checkpoint",
        &oc,
        "--scenes",
        &scenes,
        "--games",
        &gold,
    ]);
    assert!(text.contains("oracle accuracy"));

    ok(&[
        "sweep-corruption",
        "--scenes",
        &scenes,
        "--games",
        &gold,
        "--guesser",
        &guesser,
        "--guesser",
        "prior",
        "--ratios",
        "0,0.5",
        "--seeds",
        "2",
        "--out",
        &sweep,
    ]);
    let csv = std::fs::read_to_string(&sweep).unwrap();
    assert_eq!(csv.lines().next(), Some("guesser,ratio,seed,accuracy"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);

    let text = ok(&[
        "ablate",
        "--scenes",
        &scenes,
        "--oracle",
        "noisy:0.3",
        "--oracle",
        &oracle,
        "--guesser",
        "prior",
        "--guesser",
        &guesser,
        "--out",
        &grid,
    ]);
    assert!(text.contains("interaction"));
    assert_eq!(std::fs::read_to_string(&grid).unwrap().lines().count(), 5);
}

#[test]
fn play_as_oracle_appends_a_game() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("s.jsonl");
    let log = dir.path().join("human.jsonl");
    ok(&["gen-world", "--scenes", "2", "--out", p(&scenes)]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_gwlab"))
        .args([
            "play",
            "--role",
            "oracle",
            "--scenes",
            p(&scenes),
            "--max-turns",
            "2",
            "--log",
            p(&log),
        ])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"maybe\nyes\nno\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let games = gwlab::dataset::read_log(&log).unwrap();
    assert_eq!(games.len(), 1);
    assert_eq!(games[0].turns.len(), 2);
    assert_eq!(games[0].turns[0].answer, AnswerClass::Yes);
}
