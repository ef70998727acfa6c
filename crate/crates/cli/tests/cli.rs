//! End-to-end tests of the `dyntag` binary: every subcommand through real
//! processes, files, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dyntag");

fn toy_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic/toy50.pipe")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn dyntag")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        stdout_of(out),
        stderr_of(out)
    );
}

/// Overfit a small MLP on the bundled corpus, then drive tag, eval, and
/// gates off the written model file.
#[test]
fn overfit_train_then_tag_eval_gates_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.txt");
    let history = dir.path().join("history.csv");
    let corpus = toy_corpus();
    let corpus = corpus.to_str().unwrap();

    let out = run(&[
        "train",
        "--train",
        corpus,
        "--dev",
        corpus,
        "--model-out",
        model.to_str().unwrap(),
        "--history-out",
        history.to_str().unwrap(),
        "--arch",
        "mlp",
        "--hidden",
        "16",
        "--word-dim",
        "8",
        "--cap-dim",
        "3",
        "--char-dim",
        "2",
        "--chars-per-side",
        "2",
        "--window-radius",
        "2",
        "--epochs",
        "40",
        "--learning-rate",
        "0.5",
        "--gate-dropout",
        "0.2",
        "--hidden-dropout",
        "0.2",
        "--seed",
        "3",
    ]);
    assert_code(&out, 0);
    let stdout = stdout_of(&out);
    let summary = stdout.lines().last().unwrap();
    assert!(
        summary.starts_with("best_dev_acc=1.0000 at epoch="),
        "summary: {summary}"
    );
    // One progress line per epoch plus the summary.
    assert_eq!(stdout.lines().count(), 41);

    // History CSV: header plus one row per epoch.
    let hist = std::fs::read_to_string(&history).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,dev_acc"));
    assert_eq!(lines.count(), 40);

    // The overfit model must reproduce the gold corpus from surfaces alone.
    let gold = std::fs::read_to_string(corpus).unwrap();
    let surfaces_only: String = gold
        .lines()
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.split_once('|').unwrap().0)
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let input = dir.path().join("input.txt");
    std::fs::write(&input, format!("{surfaces_only}\n")).unwrap();
    let tagged = run(&["tag", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_code(&tagged, 0);
    assert_eq!(stdout_of(&tagged), gold);

    // Self-oracle evaluation.
    let eval = run(&["eval", "--model", model.to_str().unwrap(), "--gold", corpus]);
    assert_code(&eval, 0);
    assert_eq!(stdout_of(&eval), "acc=1.0000 tokens=332\n");

    // Permutation control: rotating every tag one token forward should
    // drop accuracy to roughly the tag-collision rate.
    let all: Vec<(String, String)> = gold
        .lines()
        .flat_map(|l| l.split_whitespace())
        .map(|t| {
            let (w, tag) = t.split_once('|').unwrap();
            (w.to_string(), tag.to_string())
        })
        .collect();
    let n = all.len();
    let mut k = 0usize;
    let shuffled: String = gold
        .lines()
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    let w = t.split_once('|').unwrap().0;
                    let tag = &all[(k + 1) % n].1;
                    k += 1;
                    format!("{w}|{tag}")
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let shuffled_path = dir.path().join("shuffled.pipe");
    std::fs::write(&shuffled_path, format!("{shuffled}\n")).unwrap();
    let control = run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--gold",
        shuffled_path.to_str().unwrap(),
    ]);
    assert_code(&control, 0);
    let line = stdout_of(&control);
    let acc: f64 = line
        .strip_prefix("acc=")
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc < 0.5, "rotated gold still scores {acc}");

    // Gate export: ρ=2 means 3 id columns + 5 gate columns, one row per
    // token, values strictly inside (0, 1).
    let gates = run(&["gates", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_code(&gates, 0);
    let csv_text = stdout_of(&gates);
    let mut rows = csv_text.lines();
    assert_eq!(rows.next(), Some("sentence,token,surface,g-2,g-1,g0,g1,g2"));
    let mut count = 0;
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 8, "row: {row}");
        for v in &fields[3..] {
            let v: f64 = v.parse().unwrap();
            assert!(v > 0.0 && v < 1.0, "gate {v} out of range");
        }
        count += 1;
    }
    assert_eq!(count, 332);
}

#[test]
fn config_precedence_is_flag_over_file_over_default() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus();
    let config = dir.path().join("run.conf");
    let model = dir.path().join("model.txt");
    std::fs::write(
        &config,
        format!(
            "# toy run\ntrain = {c}\ndev = {c}\nhidden = 6\nword_dim = 4\narch = mlp\n\
             char_dim = 2\nchars_per_side = 1\nwindow_radius = 1\nepochs = 0\n",
            c = corpus.display()
        ),
    )
    .unwrap();
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
        "--hidden",
        "4",
    ]);
    assert_code(&out, 0);
    assert!(
        stdout_of(&out).lines().last().unwrap().ends_with("at epoch=0"),
        "epochs=0 still reports a summary"
    );
    let header = std::fs::read_to_string(&model).unwrap();
    assert!(header.contains("\nhidden = 4\n"), "flag beats file");
    assert!(header.contains("\nword_dim = 4\n"), "file beats default");
    assert!(header.contains("\ncap_dim = 5\n"), "default survives");
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "hiden = 6\n").unwrap();
    let out = run(&["train", "--config", config.to_str().unwrap()]);
    assert_code(&out, 1);
    assert!(stderr_of(&out).contains("hiden"), "{}", stderr_of(&out));
}

#[test]
fn missing_required_paths_are_named() {
    let corpus = toy_corpus();
    let out = run(&["train", "--train", corpus.to_str().unwrap()]);
    assert_code(&out, 1);
    assert!(stderr_of(&out).contains("\"dev\""), "{}", stderr_of(&out));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Unreadable training corpus.
    let out = run(&[
        "train",
        "--train",
        "no/such/file.pipe",
        "--dev",
        "also/missing.pipe",
        "--model-out",
        dir.path().join("m.txt").to_str().unwrap(),
    ]);
    assert_code(&out, 2);

    // Corrupted model header.
    let model = dir.path().join("broken.txt");
    std::fs::write(&model, "dyntag-model v9\n").unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "the cat\n").unwrap();
    let out = run(&["tag", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_code(&out, 2);
    assert!(stderr_of(&out).contains("version"), "{}", stderr_of(&out));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let out = run(&["train", "--no-such-flag"]);
    assert_code(&out, 1);
    let out = run(&["frobnicate"]);
    assert_code(&out, 1);
    let out = run(&["--help"]);
    assert_code(&out, 0);
    assert!(stdout_of(&out).contains("gen-corpus"));
}

#[test]
fn tag_preserves_empty_lines_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus();
    let model = dir.path().join("model.txt");
    let out = run(&[
        "train",
        "--train",
        corpus.to_str().unwrap(),
        "--dev",
        corpus.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
        "--arch",
        "lstm",
        "--hidden",
        "6",
        "--word-dim",
        "4",
        "--char-dim",
        "2",
        "--chars-per-side",
        "1",
        "--window-radius",
        "1",
        "--epochs",
        "0",
    ]);
    assert_code(&out, 0);
    let input = dir.path().join("input.txt");
    std::fs::write(&input, "the cat sleeps\n\nAlice dreams\n").unwrap();
    let a = run(&["tag", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_code(&a, 0);
    let text = stdout_of(&a);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "");
    assert_eq!(lines[0].split_whitespace().count(), 3);
    assert!(lines[0].starts_with("the|"));
    let b = run(&["tag", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_eq!(stdout_of(&a), stdout_of(&b));
}

#[test]
fn elementwise_gates_require_the_reduce_flag() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus();
    let model = dir.path().join("model.txt");
    let out = run(&[
        "train",
        "--train",
        corpus.to_str().unwrap(),
        "--dev",
        corpus.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
        "--arch",
        "mlp",
        "--hidden",
        "5",
        "--word-dim",
        "4",
        "--char-dim",
        "2",
        "--chars-per-side",
        "1",
        "--window-radius",
        "1",
        "--gate-variant",
        "elementwise",
        "--epochs",
        "0",
    ]);
    assert_code(&out, 0);
    let input = dir.path().join("input.txt");
    std::fs::write(&input, "the cat sleeps\n").unwrap();

    let refused = run(&["gates", "--model", model.to_str().unwrap(), "--input", input.to_str().unwrap()]);
    assert_code(&refused, 1);
    assert!(stderr_of(&refused).contains("--reduce mean"), "{}", stderr_of(&refused));

    let reduced = run(&[
        "gates",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--reduce",
        "mean",
    ]);
    assert_code(&reduced, 0);
    let text = stdout_of(&reduced);
    assert_eq!(text.lines().next(), Some("sentence,token,surface,g-1,g0,g1"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn cat_subcommands_parse_arity_validate() {
    let out = run(&["cat", "parse", "(S\\NP)/NP"]);
    assert_code(&out, 0);
    assert_eq!(stdout_of(&out), "S\\NP/NP\n");

    let out = run(&["cat", "arity", "((S\\NP)\\(S\\NP))/NP"]);
    assert_code(&out, 0);
    assert_eq!(stdout_of(&out), "3\n");

    let out = run(&["cat", "parse", "S\\"]);
    assert_code(&out, 2);

    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    std::fs::write(&good, "N\nNP\n(S[dcl]\\NP)/NP\n\nS/S\n").unwrap();
    let out = run(&["cat", "validate", good.to_str().unwrap()]);
    assert_code(&out, 0);
    assert_eq!(stdout_of(&out), "ok: 4 categories\n");

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "N\n(S\\NP\nNP)\n").unwrap();
    let out = run(&["cat", "validate", bad.to_str().unwrap()]);
    assert_code(&out, 2);
    assert!(stdout_of(&out).contains("line 2"), "{}", stdout_of(&out));
}

#[test]
fn gen_corpus_is_deterministic_and_matches_the_bundled_file() {
    let a = run(&["gen-corpus", "--sentences", "20", "--seed", "4", "--distractor-rate", "0.5"]);
    let b = run(&["gen-corpus", "--sentences", "20", "--seed", "4", "--distractor-rate", "0.5"]);
    assert_code(&a, 0);
    assert_eq!(stdout_of(&a), stdout_of(&b));

    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("toy.pipe");
    let out = run(&["gen-corpus", "--out", out_path.to_str().unwrap()]);
    assert_code(&out, 0);
    let generated = std::fs::read_to_string(&out_path).unwrap();
    let bundled = std::fs::read_to_string(toy_corpus()).unwrap();
    assert_eq!(generated, bundled, "defaults regenerate the bundled corpus");
}

#[test]
fn gradcheck_subcommand_passes_on_one_combo() {
    let out = run(&["gradcheck", "--arch", "jordan", "--gate-variant", "two-layer"]);
    assert_code(&out, 0);
    let text = stdout_of(&out);
    assert!(text.contains("== jordan + two-layer =="), "{text}");
    assert!(text.trim_end().ends_with("gradcheck: PASS"), "{text}");
}
