//! End-to-end command-line checks: reproducibility, exit codes, and the
//! no-mutation guarantee of evaluation.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_boostseq"));
    c.env("BOOSTSEQ_THREADS", "2");
    c
}

/// Tiny run config with an embedded generation section.
fn write_config(dir: &Path) -> std::path::PathBuf {
    let mut workflow = boostseq::synth::WorkflowConfig::default_desk();
    workflow.frame_height = 8;
    workflow.frame_width = 8;
    workflow.sequences = 7;
    workflow.learn_count = 4;
    workflow.val_count = 1;
    workflow.phases = 3;
    workflow.phase_dwell = (14, 20);
    workflow.position_jitter = 1;
    workflow.tools.truncate(3);
    workflow.tools[0].phases = vec![0, 1, 2];
    workflow.tools[0].home = (3, 3);
    workflow.tools[1].phases = vec![0];
    workflow.tools[1].home = (4, 4);
    workflow.tools[2].phases = vec![2];
    workflow.tools[2].home = (4, 4);
    workflow.tools[2].glyph = workflow.tools[1].glyph;
    workflow.tools[2].hue = workflow.tools[1].hue;
    workflow.confusable_pairs = vec![(1, 2)];
    // nest the serialized workflow under [dataset.generate]
    let workflow_toml = toml::to_string(&workflow).unwrap();
    let (head, tail) = match workflow_toml.find("\n[[tools]]") {
        Some(pos) => workflow_toml.split_at(pos + 1),
        None => (workflow_toml.as_str(), ""),
    };
    let tail = tail.replace("[[tools]]", "[[dataset.generate.tools]]");
    let config = format!(
        "[dataset]\npath = \"data\"\n\n[dataset.generate]\n{head}\n{tail}\n\
         [boost]\nstrategy = \"joint\"\ndirection = \"unidirectional\"\n\
         cnn_menu = [\"c\"]\nrnn_menu = [\"gru:8\"]\nm = 2\nmax_iterations = 2\n\n\
         [train.cnn]\nmax_epochs = 3\npatience = 2\nbatch_size = 16\n\n\
         [train.rnn]\nmax_epochs = 10\npatience = 5\n\n\
         [output]\ndir = \"run\"\n\n[seeds]\nmaster = 5\n"
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn tree_digest(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn synth_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    for out in ["data_a", "data_b"] {
        let status = bin()
            .current_dir(tmp.path())
            .args(["synth", "--config"])
            .arg(&config)
            .args(["--seed", "5", "--out", out])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        tree_digest(&tmp.path().join("data_a")),
        tree_digest(&tmp.path().join("data_b"))
    );
}

#[test]
fn boost_eval_explain_pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let run = |args: &[&str]| {
        let output = bin()
            .current_dir(tmp.path())
            .args(args)
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "command {:?} failed: {}",
            args,
            String::from_utf8_lossy(&output.stderr)
        );
    };
    let cfg = config.to_str().unwrap();
    run(&["synth", "--config", cfg, "--out", "data"]);
    run(&["boost", "--config", cfg, "--out", "run_a"]);
    run(&["boost", "--config", cfg, "--out", "run_b"]);
    assert_eq!(
        tree_digest(&tmp.path().join("run_a")),
        tree_digest(&tmp.path().join("run_b")),
        "boost runs must be byte-identical"
    );

    // evaluation never mutates the model directory
    let before = tree_digest(&tmp.path().join("run_a"));
    run(&[
        "eval", "--model", "run_a", "--data", "data", "--split", "test", "--mode", "offline",
        "--out", "eval_a",
    ]);
    run(&[
        "eval", "--model", "run_a", "--data", "data", "--split", "test", "--mode", "offline",
        "--out", "eval_b",
    ]);
    assert_eq!(before, tree_digest(&tmp.path().join("run_a")));
    assert_eq!(
        tree_digest(&tmp.path().join("eval_a")),
        tree_digest(&tmp.path().join("eval_b"))
    );

    // online mode works for this unidirectional model
    run(&[
        "eval", "--model", "run_a", "--data", "data", "--split", "test", "--mode", "online",
        "--no-smooth", "--out", "eval_online",
    ]);

    run(&["explain", "--model", "run_a", "--data", "data", "--out", "exp_a"]);
    run(&["explain", "--model", "run_a", "--data", "data", "--out", "exp_b"]);
    assert_eq!(
        tree_digest(&tmp.path().join("exp_a")),
        tree_digest(&tmp.path().join("exp_b"))
    );

    run(&[
        "report",
        "--evals",
        "eval_a/report.csv,eval_online/report.csv",
        "--out",
        "report.csv",
    ]);
    assert!(tmp.path().join("report.csv").exists());
}

#[test]
fn exit_codes_follow_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    // config error: missing config file
    let status = bin()
        .current_dir(tmp.path())
        .args(["boost", "--config", "nope.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // config error: bad strategy value
    std::fs::write(
        tmp.path().join("bad.toml"),
        "[seeds]\nmaster = 1\n[boost]\nstrategy = \"psychic\"\n",
    )
    .unwrap();
    let status = bin()
        .current_dir(tmp.path())
        .args(["boost", "--config", "bad.toml"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // data error: eval on a missing model directory
    let status = bin()
        .current_dir(tmp.path())
        .args(["eval", "--model", "missing", "--data", "missing", "--out", "e"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn online_mode_rejects_bidirectional_models() {
    use boostseq::boosting::{
        write_run_artifacts, BoostState, JointWeightRule, Menus, ScoredLearner, StopConfig,
        Strategy, StrongLearner,
    };
    use boostseq::learners::{build, Architecture, Direction, RnnCellKind, RnnSpec};

    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let cfg = config.to_str().unwrap();
    let run = |args: &[&str]| bin().current_dir(tmp.path()).args(args).output().unwrap();
    assert!(run(&["synth", "--config", cfg, "--out", "data"]).status.success());

    // a model directory holding a bidirectional sequence learner
    let cnn = build(&Architecture::BiasOnly { outputs: 3 }, 1).unwrap();
    let rnn_arch = Architecture::Rnn(RnnSpec {
        cell: RnnCellKind::Gru,
        layers: 2,
        width: 4,
        direction: Direction::Bidirectional,
        io_width: 3,
    });
    let rnn = build(&rnn_arch, 2).unwrap();
    let strong = StrongLearner {
        cnn_block: vec![ScoredLearner { learner: cnn, weight: 1.0 }],
        rnn_block: vec![ScoredLearner { learner: rnn, weight: 1.0 }],
    };
    let state = BoostState {
        strong,
        iterations: vec![],
        strategy: Strategy::Joint,
        tools: 3,
        m: 2,
        seed: 5,
    };
    let menus = Menus { frame: vec![Architecture::BiasOnly { outputs: 3 }], sequence: vec![rnn_arch] };
    write_run_artifacts(
        &tmp.path().join("run"),
        &state,
        10.0,
        1e-4,
        &StopConfig::default(),
        JointWeightRule::default(),
        &menus,
        None,
    )
    .unwrap();

    let out = run(&[
        "eval", "--model", "run", "--data", "data", "--split", "test", "--mode", "online",
        "--out", "eval",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("online"), "unhelpful error: {err}");
    // one-line machine-parseable error
    assert_eq!(err.trim().lines().count(), 1);
    assert!(err.contains("code=2"));

    // the same model evaluates fine offline
    let out = run(&[
        "eval", "--model", "run", "--data", "data", "--split", "test", "--mode", "offline",
        "--out", "eval_off",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
