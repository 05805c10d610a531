//! Run artifacts: a deterministic structured-text manifest, per-iteration
//! loss and candidate CSVs, and weak-learner checkpoints referenced by
//! content hash.

use super::{BoostState, JointWeightRule, Menus, ScoredLearner, StopConfig, Strategy, StrongLearner};
use crate::learners::{learner_to_bytes, read_learner, CheckpointError};
use crate::sequences::RadiusTable;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("checkpoint {file} does not match its content hash")]
    HashMismatch { file: String },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockEntry {
    pub id: String,
    pub alpha: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub strategy: Strategy,
    pub seed: u64,
    pub m: usize,
    pub tools: usize,
    pub alpha_max: f64,
    pub line_tol: f64,
    pub stop: StopConfig,
    pub joint_rule: JointWeightRule,
    pub frame_menu: Vec<String>,
    pub sequence_menu: Vec<String>,
    pub cnn_block: Vec<BlockEntry>,
    pub rnn_block: Vec<BlockEntry>,
    pub radii: Option<Vec<usize>>,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn manifest_text(m: &RunManifest) -> String {
    let mut s = String::new();
    s.push_str("# boostseq run manifest v1\n[run]\n");
    let _ = writeln!(s, "strategy = {}", m.strategy.id());
    let _ = writeln!(s, "seed = {}", m.seed);
    let _ = writeln!(s, "m = {}", m.m);
    let _ = writeln!(s, "tools = {}", m.tools);
    let _ = writeln!(s, "alpha_max = {}", m.alpha_max);
    let _ = writeln!(s, "line_tol = {}", m.line_tol);
    let _ = writeln!(s, "stop_rel_tol = {}", m.stop.rel_tol);
    let _ = writeln!(s, "stop_patience = {}", m.stop.patience);
    let _ = writeln!(s, "stop_max_iterations = {}", m.stop.max_iterations);
    let _ = writeln!(s, "joint_rule = {}", m.joint_rule.id());
    s.push_str("\n[menus]\n");
    let _ = writeln!(s, "frame = {}", m.frame_menu.join(" "));
    let _ = writeln!(s, "sequence = {}", m.sequence_menu.join(" "));
    for (name, block) in [("cnn_block", &m.cnn_block), ("rnn_block", &m.rnn_block)] {
        let _ = writeln!(s, "\n[{name}]");
        for (i, e) in block.iter().enumerate() {
            let _ = writeln!(s, "{} = {}|{}|{}", i, e.alpha, e.file, e.id);
        }
    }
    if let Some(radii) = &m.radii {
        s.push_str("\n[radii]\n");
        for (tool, r) in radii.iter().enumerate() {
            let _ = writeln!(s, "{tool} = {r}");
        }
    }
    s
}

fn parse_manifest(text: &str) -> Result<RunManifest, ManifestError> {
    let mut section = String::new();
    let mut kv: Vec<(String, String, String)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ManifestError::Parse {
            line: ln + 1,
            msg: "expected key = value".into(),
        })?;
        kv.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
    }
    let get = |sec: &str, key: &str| -> Result<String, ManifestError> {
        kv.iter()
            .find(|(s, k, _)| s == sec && k == key)
            .map(|(_, _, v)| v.clone())
            .ok_or(ManifestError::Parse {
                line: 0,
                msg: format!("missing {sec}.{key}"),
            })
    };
    let parse_err = |msg: &str| ManifestError::Parse {
        line: 0,
        msg: msg.to_string(),
    };
    let list = |sec: &str| -> Vec<String> {
        kv.iter()
            .filter(|(s, _, _)| s == sec)
            .map(|(_, _, v)| v.clone())
            .collect()
    };
    let block = |sec: &str| -> Result<Vec<BlockEntry>, ManifestError> {
        list(sec)
            .into_iter()
            .map(|v| {
                let mut parts = v.splitn(3, '|');
                let alpha = parts
                    .next()
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| parse_err("bad block alpha"))?;
                let file = parts.next().ok_or_else(|| parse_err("bad block file"))?;
                let id = parts.next().ok_or_else(|| parse_err("bad block id"))?;
                Ok(BlockEntry {
                    id: id.to_string(),
                    alpha,
                    file: file.to_string(),
                })
            })
            .collect()
    };
    let menu = |v: String| -> Vec<String> {
        v.split_whitespace().map(|s| s.to_string()).collect()
    };
    let radii_list = list("radii");
    Ok(RunManifest {
        strategy: Strategy::parse(&get("run", "strategy")?)
            .ok_or_else(|| parse_err("bad strategy"))?,
        seed: get("run", "seed")?.parse().map_err(|_| parse_err("bad seed"))?,
        m: get("run", "m")?.parse().map_err(|_| parse_err("bad m"))?,
        tools: get("run", "tools")?.parse().map_err(|_| parse_err("bad tools"))?,
        alpha_max: get("run", "alpha_max")?
            .parse()
            .map_err(|_| parse_err("bad alpha_max"))?,
        line_tol: get("run", "line_tol")?
            .parse()
            .map_err(|_| parse_err("bad line_tol"))?,
        stop: StopConfig {
            rel_tol: get("run", "stop_rel_tol")?
                .parse()
                .map_err(|_| parse_err("bad stop_rel_tol"))?,
            patience: get("run", "stop_patience")?
                .parse()
                .map_err(|_| parse_err("bad stop_patience"))?,
            max_iterations: get("run", "stop_max_iterations")?
                .parse()
                .map_err(|_| parse_err("bad stop_max_iterations"))?,
        },
        joint_rule: JointWeightRule::parse(&get("run", "joint_rule")?)
            .ok_or_else(|| parse_err("bad joint_rule"))?,
        frame_menu: menu(get("menus", "frame")?),
        sequence_menu: menu(get("menus", "sequence").unwrap_or_default()),
        cnn_block: block("cnn_block")?,
        rnn_block: block("rnn_block")?,
        radii: if radii_list.is_empty() {
            None
        } else {
            Some(
                radii_list
                    .into_iter()
                    .map(|v| v.parse().map_err(|_| parse_err("bad radius")))
                    .collect::<Result<_, _>>()?,
            )
        },
    })
}

/// Writes the manifest, the per-iteration CSVs and all checkpoints under
/// `dir`. Checkpoint files are named by the hash of their content.
pub fn write_run_artifacts(
    dir: &Path,
    state: &BoostState,
    alpha_max: f64,
    line_tol: f64,
    stop: &StopConfig,
    joint_rule: JointWeightRule,
    menus: &Menus,
    radii: Option<&RadiusTable>,
) -> Result<RunManifest, ManifestError> {
    let ckpt_dir = dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;

    let save_block = |block: &[ScoredLearner]| -> Result<Vec<BlockEntry>, ManifestError> {
        block
            .iter()
            .map(|scored| {
                let bytes = learner_to_bytes(&scored.learner);
                let hash = content_hash(&bytes);
                let file = format!("{hash}.wl");
                let path = ckpt_dir.join(&file);
                std::fs::write(&path, &bytes).map_err(io_err(&path))?;
                Ok(BlockEntry {
                    id: scored.learner.id(),
                    alpha: scored.weight,
                    file,
                })
            })
            .collect()
    };
    let cnn_block = save_block(&state.strong.cnn_block)?;
    let rnn_block = save_block(&state.strong.rnn_block)?;

    let manifest = RunManifest {
        strategy: state.strategy,
        seed: state.seed,
        m: state.m,
        tools: state.tools,
        alpha_max,
        line_tol,
        stop: stop.clone(),
        joint_rule,
        frame_menu: menus.frame.iter().map(|a| a.id()).collect(),
        sequence_menu: menus.sequence.iter().map(|a| a.id()).collect(),
        cnn_block,
        rnn_block,
        radii: radii.map(|r| r.0.clone()),
    };
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest_text(&manifest)).map_err(io_err(&path))?;

    let mut losses = String::from("iteration,context,selected,alpha,train_loss,val_loss,accepted\n");
    let mut cands = String::from(
        "iteration,candidate,family,param_count,alpha,train_loss,weak_val_loss,error\n",
    );
    for it in &state.iterations {
        let sel = it.selected.map(|i| it.candidates[i].id.clone()).unwrap_or_default();
        let alpha = it.selected.map(|i| it.candidates[i].alpha).unwrap_or(0.0);
        let _ = writeln!(
            losses,
            "{},{},{},{},{},{},{}",
            it.index,
            it.context.id(),
            sel,
            alpha,
            it.train_loss,
            it.val_loss,
            it.accepted
        );
        for c in &it.candidates {
            let _ = writeln!(
                cands,
                "{},{},{:?},{},{},{},{},{}",
                it.index,
                c.id,
                c.family,
                c.param_count,
                c.alpha,
                c.train_loss,
                c.weak_val_loss,
                c.error.clone().unwrap_or_default()
            );
        }
    }
    let path = dir.join("losses.csv");
    std::fs::write(&path, losses).map_err(io_err(&path))?;
    let path = dir.join("candidates.csv");
    std::fs::write(&path, cands).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, ManifestError> {
    let path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    parse_manifest(&text)
}

/// Loads the strong learner referenced by a run directory, verifying each
/// checkpoint against its content hash.
pub fn load_strong_learner(dir: &Path) -> Result<(StrongLearner, RunManifest), ManifestError> {
    let manifest = read_manifest(dir)?;
    let load_block = |entries: &[BlockEntry]| -> Result<Vec<ScoredLearner>, ManifestError> {
        entries
            .iter()
            .map(|e| {
                let path = dir.join("checkpoints").join(&e.file);
                let bytes = std::fs::read(&path).map_err(io_err(&path))?;
                let expect = e.file.trim_end_matches(".wl");
                if content_hash(&bytes) != expect {
                    return Err(ManifestError::HashMismatch {
                        file: e.file.clone(),
                    });
                }
                let learner = read_learner(&path)?;
                Ok(ScoredLearner {
                    learner,
                    weight: e.alpha,
                })
            })
            .collect()
    };
    let strong = StrongLearner {
        cnn_block: load_block(&manifest.cnn_block)?,
        rnn_block: load_block(&manifest.rnn_block)?,
    };
    Ok((strong, manifest))
}
