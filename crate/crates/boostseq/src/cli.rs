//! Batch front door: dataset generation, boosting runs, evaluation,
//! explanation and report aggregation, driven by a TOML config and fully
//! reproducible from explicit seeds.

use crate::boosting::{
    load_strong_learner, predict_video, run_boosting, write_run_artifacts, BoostData, BoostError,
    Menus, StrongLearner, VideoData,
};
use crate::config::{ConfigError, RunConfig};
use crate::learners::{Architecture, Direction, TrainError};
use crate::matrix::{LabelMatrix, PredictionSequence};
use crate::metrics::{consensus_mask, paired_t_test, pr_points, roc_points, EvalReport};
use crate::sequences::{median_filter, select_radii, subsample, RadiusTable};
use crate::synth::{generate, read_dataset, write_dataset, Split, SyntheticDataset};
use crate::tensorio::{write_tensor, FRAMES_MAGIC};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Failures carry the process exit code: 2 config, 3 data, 4 numeric.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "error: code={} kind={} msg={:?}",
            self.exit_code(),
            self.kind(),
            self.message()
        )
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<BoostError> for CliError {
    fn from(e: BoostError) -> Self {
        match &e {
            BoostError::BadConfig(_) | BoostError::EmptyMenu(_) | BoostError::LineSearch(_) => {
                CliError::Config(e.to_string())
            }
            BoostError::LengthMismatch | BoostError::Matrix(_) | BoostError::Sequence(_) => {
                CliError::Data(e.to_string())
            }
            BoostError::Train(TrainError::BadConfig(_)) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "boostseq",
    about = "Boosted frame and sequence learners for multilabel sequence labeling",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic workflow dataset.
    Synth(SynthArgs),
    /// Run boosting and write a model directory.
    Boost(BoostArgs),
    /// Evaluate a saved model on one dataset split.
    Eval(EvalArgs),
    /// Emit sensitivity heatmaps and the sequence-block gradient matrix.
    Explain(ExplainArgs),
    /// Aggregate evaluation reports and test pairwise differences.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Run config (the [dataset.generate] section); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generation seed; defaults to the config master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BoostArgs {
    /// Run config.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset directory (overrides the config).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output run directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Boosting strategy override: sequential or joint.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only these frame architectures (comma list, e.g. "a,c").
    #[arg(long)]
    pub cnn_menu: Option<String>,
    /// Keep only these sequence entries (comma list, e.g. "gru:8,lstm:16");
    /// "none" disables the sequence block entirely.
    #[arg(long)]
    pub rnn_menu: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Run directory holding manifest and checkpoints.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Split to evaluate: learn, validation or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// offline (past and future) or online (past and present only).
    #[arg(long, default_value = "offline")]
    pub mode: String,
    /// Evaluate only frames where both annotators agree.
    #[arg(long)]
    pub consensus: bool,
    /// Disable median smoothing.
    #[arg(long)]
    pub no_smooth: bool,
    /// Output directory for the report and curve files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    /// Run directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Split to draw inputs from.
    #[arg(long, default_value = "validation")]
    pub split: String,
    /// Sequence index within the split.
    #[arg(long, default_value_t = 0)]
    pub sequence: usize,
    /// Comma list of frame indices (default: the middle frame).
    #[arg(long)]
    pub frames: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation CSVs; the first is the baseline all others are tested
    /// against.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub evals: Vec<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Boost(a) => run_boost(a),
        Command::Eval(a) => run_eval(a),
        Command::Explain(a) => run_explain(a),
        Command::Report(a) => run_report(a),
    }
}

fn data_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn load(path: &Path) -> Result<SyntheticDataset, CliError> {
    read_dataset(path).map_err(data_err)
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    Split::parse(s).ok_or_else(|| CliError::Config(format!("unknown split {s}")))
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let (workflow, seed) = match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            (cfg.workflow(), args.seed.unwrap_or(cfg.seeds.master))
        }
        None => {
            let seed = args.seed.ok_or_else(|| {
                CliError::Config("either --config or --seed is required".into())
            })?;
            (crate::synth::WorkflowConfig::default_desk(), seed)
        }
    };
    let ds = generate(&workflow, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let config_text =
        toml::to_string(&workflow).map_err(|e| CliError::Config(e.to_string()))?;
    write_dataset(&args.out, &ds, &config_text).map_err(data_err)?;
    let frames: usize = ds.sequences.iter().map(|s| s.frames.len()).sum();
    println!(
        "dataset written to {} (sequences={} frames={} tools={} seed={})",
        args.out.display(),
        ds.sequences.len(),
        frames,
        ds.tools,
        seed
    );
    Ok(())
}

/// Labels used for boosting, per the train_labels config: the generator's
/// truth or the union of the two annotators' positives.
fn training_labels(ds: &SyntheticDataset, rule: &str) -> Result<Vec<LabelMatrix>, CliError> {
    ds.sequences
        .iter()
        .map(|s| match rule {
            "truth" => Ok(s.truth.clone()),
            "union" => match (&s.annotator_a, &s.annotator_b) {
                (Some(a), Some(b)) => Ok(consensus_mask(a, b).map_err(data_err)?.training),
                _ => Err(CliError::Data(
                    "train_labels = union needs annotator files".into(),
                )),
            },
            other => Err(CliError::Config(format!("unknown train_labels {other}"))),
        })
        .collect()
}

fn apply_menu_filters(menus: &mut Menus, args: &BoostArgs) -> Result<(), CliError> {
    if let Some(list) = &args.cnn_menu {
        let keep: Vec<&str> = list.split(',').map(|s| s.trim()).collect();
        menus.frame.retain(|a| match a {
            Architecture::Cnn(spec) => keep.contains(&spec.arch.id()),
            _ => false,
        });
        if menus.frame.is_empty() {
            return Err(CliError::Config(format!("--cnn-menu {list} leaves no frame learners")));
        }
    }
    if let Some(list) = &args.rnn_menu {
        if list == "none" {
            menus.sequence.clear();
        } else {
            let keep: Vec<&str> = list.split(',').map(|s| s.trim()).collect();
            menus.sequence.retain(|a| match a {
                Architecture::Rnn(spec) => {
                    keep.contains(&format!("{}:{}", spec.cell.id(), spec.width).as_str())
                }
                _ => false,
            });
            if menus.sequence.is_empty() {
                return Err(CliError::Config(format!(
                    "--rnn-menu {list} leaves no sequence learners"
                )));
            }
        }
    }
    Ok(())
}

fn run_boost(args: BoostArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = &args.strategy {
        cfg.boost.strategy = s.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seeds.master = seed;
    }
    cfg.validate()?;

    let data_path = args
        .data
        .clone()
        .or(cfg.dataset.path.clone())
        .ok_or_else(|| CliError::Config("no dataset path (config [dataset].path or --data)".into()))?;
    cfg.validate_dataset_path(&data_path)?;
    let out_dir = args
        .out
        .clone()
        .or(cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output dir (config [output].dir or --out)".into()))?;

    let ds = load(&data_path)?;
    let first = ds
        .sequences
        .first()
        .ok_or_else(|| CliError::Data("dataset has no sequences".into()))?;
    let (h, w, c) = (
        first.frames[0].shape()[0],
        first.frames[0].shape()[1],
        first.frames[0].shape()[2],
    );
    let mut menus = cfg.menus(h, w, c, ds.tools);
    apply_menu_filters(&mut menus, &args)?;

    let labels = training_labels(&ds, &cfg.boost.train_labels)?;
    let make_split = |split: Split| -> Vec<VideoData> {
        ds.sequences
            .iter()
            .zip(&labels)
            .filter(|(s, _)| s.split == split)
            .map(|(s, l)| VideoData {
                id: s.id.clone(),
                frames: &s.frames,
                labels: l,
            })
            .collect()
    };
    let data = BoostData {
        learn: make_split(Split::Learn),
        val: make_split(Split::Validation),
        tools: ds.tools,
        m: cfg.boost.m,
    };

    let boost_cfg = cfg.boost_config();
    let state = run_boosting(&data, &menus, &boost_cfg)?;
    for it in &state.iterations {
        let sel = it
            .selected
            .map(|i| it.candidates[i].id.clone())
            .unwrap_or_else(|| "-".into());
        println!(
            "iteration {} [{}] selected={} alpha={:.4} train={:.4} val={:.4} accepted={}",
            it.index,
            it.context.id(),
            sel,
            it.selected.map(|i| it.candidates[i].alpha).unwrap_or(0.0),
            it.train_loss,
            it.val_loss,
            it.accepted
        );
    }

    // radius selection on the validation split under the final model
    let radii = validation_radii(&state.strong, &ds, state.m, &cfg.eval.radius_candidates)?;

    write_run_artifacts(
        &out_dir,
        &state,
        boost_cfg.alpha_max,
        boost_cfg.line_tol,
        &boost_cfg.stop,
        boost_cfg.joint_rule,
        &menus,
        Some(&radii),
    )
    .map_err(data_err)?;
    println!(
        "run written to {} (frame learners={} sequence learners={})",
        out_dir.display(),
        state.strong.cnn_block.len(),
        state.strong.rnn_block.len()
    );
    Ok(())
}

fn validation_radii(
    strong: &StrongLearner,
    ds: &SyntheticDataset,
    m: usize,
    candidates: &[usize],
) -> Result<RadiusTable, CliError> {
    let val = ds.split(Split::Validation);
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for s in &val {
        let p = predict_video(strong, &s.frames, ds.tools, m, &s.id)?;
        preds.push(p.context);
        labels.push(&s.truth);
    }
    select_radii(&preds, &labels, candidates).map_err(|e| CliError::Numeric(e.to_string()))
}

struct SplitPredictions {
    tracks: Vec<PredictionSequence>,
    labels: Vec<LabelMatrix>,
    masks: Option<Vec<Vec<Vec<bool>>>>,
}

fn predict_split(
    strong: &StrongLearner,
    ds: &SyntheticDataset,
    split: Split,
    m: usize,
    consensus: bool,
) -> Result<SplitPredictions, CliError> {
    let seqs = ds.split(split);
    if seqs.is_empty() {
        return Err(CliError::Data(format!("split {} is empty", split.id())));
    }
    let mut tracks = Vec::new();
    let mut labels = Vec::new();
    let mut masks = if consensus { Some(Vec::new()) } else { None };
    for s in seqs {
        let p = predict_video(strong, &s.frames, ds.tools, m, &s.id)?;
        tracks.push(p.context);
        if let Some(masks) = &mut masks {
            let (a, b) = match (&s.annotator_a, &s.annotator_b) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(CliError::Data(
                        "consensus evaluation needs annotator files".into(),
                    ))
                }
            };
            let cons = consensus_mask(a, b).map_err(data_err)?;
            masks.push(cons.evaluable);
            // on agreement frames both annotators carry the same value
            labels.push(a.clone());
        } else {
            labels.push(s.truth.clone());
        }
    }
    Ok(SplitPredictions {
        tracks,
        labels,
        masks,
    })
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let split = parse_split(&args.split)?;
    let online = match args.mode.as_str() {
        "online" => true,
        "offline" => false,
        other => return Err(CliError::Config(format!("unknown mode {other}"))),
    };
    let (strong, manifest) = load_strong_learner(&args.model).map_err(data_err)?;
    if online {
        let bidi = strong.rnn_block.iter().any(|s| {
            matches!(
                &s.learner.arch,
                Architecture::Rnn(spec) if spec.direction == Direction::Bidirectional
            )
        });
        if bidi {
            return Err(CliError::Config(
                "online mode forbids bidirectional sequence learners; evaluate offline or retrain unidirectionally".into(),
            ));
        }
    }
    let ds = load(&args.data)?;

    let mut pred = predict_split(&strong, &ds, split, manifest.m, args.consensus)?;

    let mut header = vec![
        ("model".into(), args.model.display().to_string()),
        ("data".into(), args.data.display().to_string()),
        ("split".into(), split.id().into()),
        ("mode".into(), args.mode.clone()),
        ("consensus".into(), args.consensus.to_string()),
        ("smoothing".into(), (!args.no_smooth).to_string()),
    ];
    if !args.no_smooth {
        let radii = match &manifest.radii {
            Some(r) => RadiusTable(r.clone()),
            None => validation_radii(&strong, &ds, manifest.m, &[1, 2, 4, 8, 16, 32, 64])?,
        };
        for track in &mut pred.tracks {
            *track = median_filter(track, &radii);
        }
        header.push((
            "radii".into(),
            radii
                .0
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        ));
        if online {
            // a centered window of radius R delays the output by R frames
            let latency = radii.0.iter().copied().max().unwrap_or(0);
            header.push(("latency_frames".into(), latency.to_string()));
        }
    }

    // pool scores and labels per tool over all sequences of the split
    let tools = ds.tools;
    let mut scores = vec![Vec::new(); tools];
    let mut labels = vec![Vec::new(); tools];
    let mut mask = pred.masks.as_ref().map(|_| vec![Vec::new(); tools]);
    for (i, track) in pred.tracks.iter().enumerate() {
        for t in 0..track.len() {
            for j in 0..tools {
                scores[j].push(track.values.get(t, j));
                labels[j].push(pred.labels[i].get(t, j));
                if let (Some(mask), Some(masks)) = (&mut mask, &pred.masks) {
                    mask[j].push(masks[i][j][t]);
                }
            }
        }
    }
    let prevalence = ds.prevalence(Split::Learn);
    let report = EvalReport::compute(&scores, &labels, mask.as_deref(), &prevalence, header);

    std::fs::create_dir_all(&args.out).map_err(data_err)?;
    let report_path = args.out.join("report.csv");
    std::fs::write(&report_path, report.to_csv()).map_err(data_err)?;
    for j in 0..tools {
        let (s, l): (Vec<f64>, Vec<i8>) = match &mask {
            Some(m) => scores[j]
                .iter()
                .zip(&labels[j])
                .zip(&m[j])
                .filter(|(_, &keep)| keep)
                .map(|((s, l), _)| (*s, *l))
                .unzip(),
            None => (scores[j].clone(), labels[j].clone()),
        };
        let mut roc = String::from("threshold,fpr,tpr\n");
        for (thr, fpr, tpr) in roc_points(&s, &l) {
            let _ = writeln!(roc, "{thr},{fpr},{tpr}");
        }
        std::fs::write(args.out.join(format!("roc_tool_{j}.csv")), roc).map_err(data_err)?;
        let mut pr = String::from("threshold,recall,precision\n");
        for (thr, recall, precision) in pr_points(&s, &l) {
            let _ = writeln!(pr, "{thr},{recall},{precision}");
        }
        std::fs::write(args.out.join(format!("pr_tool_{j}.csv")), pr).map_err(data_err)?;
    }
    println!(
        "eval written to {} (mean_az={} mean_ap={} excluded_az={} excluded_ap={})",
        args.out.display(),
        report.mean_az.map(|v| format!("{v:.4}")).unwrap_or_default(),
        report.mean_ap.map(|v| format!("{v:.4}")).unwrap_or_default(),
        report.excluded_az,
        report.excluded_ap
    );
    Ok(())
}

fn run_explain(args: ExplainArgs) -> Result<(), CliError> {
    let split = parse_split(&args.split)?;
    let (strong, manifest) = load_strong_learner(&args.model).map_err(data_err)?;
    let ds = load(&args.data)?;
    let seqs = ds.split(split);
    let seq = seqs
        .get(args.sequence)
        .ok_or_else(|| CliError::Data(format!("sequence {} not in split", args.sequence)))?;
    let frame_indices: Vec<usize> = match &args.frames {
        Some(list) => list
            .split(',')
            .map(|f| f.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("bad --frames: {e}")))?,
        None => vec![seq.frames.len() / 2],
    };
    std::fs::create_dir_all(&args.out).map_err(data_err)?;

    for &fi in &frame_indices {
        let frame = seq
            .frames
            .get(fi)
            .ok_or_else(|| CliError::Data(format!("frame {fi} out of range")))?;
        let frame_id = format!("{}:{}", seq.id, fi);
        for (li, scored) in strong.cnn_block.iter().enumerate() {
            let map = crate::explain::hue_sensitivity(&scored.learner, frame, &frame_id)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            let base = args.out.join(format!("heat_l{li}_f{fi}"));
            std::fs::write(base.with_extension("pgm"), map.to_pgm()).map_err(data_err)?;
            write_tensor(&base.with_extension("bin"), FRAMES_MAGIC, &map.values)
                .map_err(data_err)?;
        }
        let ens = crate::explain::block_hue_sensitivity(&strong.cnn_block, frame, &frame_id)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        let base = args.out.join(format!("heat_ensemble_f{fi}"));
        std::fs::write(base.with_extension("pgm"), ens.to_pgm()).map_err(data_err)?;
        write_tensor(&base.with_extension("bin"), FRAMES_MAGIC, &ens.values).map_err(data_err)?;
    }

    if !strong.rnn_block.is_empty() {
        // input tracks for the gradient matrix: subsampled instant
        // probabilities of every sequence in the split
        let mut tracks = Vec::new();
        for s in &seqs {
            let p = predict_video(&strong, &s.frames, ds.tools, manifest.m, &s.id)?;
            let m_eff = manifest.m.clamp(1, s.frames.len());
            for part in subsample(&p.instant, m_eff).map_err(data_err)? {
                tracks.push(part.values);
            }
        }
        let refs: Vec<&crate::matrix::SeqMatrix> = tracks.iter().collect();
        for (li, scored) in strong.rnn_block.iter().enumerate() {
            let m = crate::explain::rnn_gradient_matrix(&scored.learner, &refs)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            std::fs::write(args.out.join(format!("gradient_matrix_l{li}.csv")), m.to_csv())
                .map_err(data_err)?;
        }
        let block = crate::explain::block_gradient_matrix(&strong.rnn_block, &refs)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        std::fs::write(args.out.join("gradient_matrix_block.csv"), block.to_csv())
            .map_err(data_err)?;
    }
    println!("explanation artifacts written to {}", args.out.display());
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<(), CliError> {
    if args.evals.len() < 2 {
        return Err(CliError::Config("report needs at least two eval CSVs".into()));
    }
    let mut reports = Vec::new();
    for path in &args.evals {
        let text = std::fs::read_to_string(path).map_err(data_err)?;
        reports.push((path.clone(), EvalReport::from_csv(&text).map_err(data_err)?));
    }
    let baseline = &reports[0];
    let mut out = String::from("run,path,mean_az,mean_ap,t_az,p_az,t_ap,p_ap\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "0,{},{},{},,,,",
        baseline.0.display(),
        fmt_opt(baseline.1.mean_az),
        fmt_opt(baseline.1.mean_ap)
    );
    for (i, (path, report)) in reports.iter().enumerate().skip(1) {
        let paired = |sel: &dyn Fn(&crate::metrics::ToolMetrics) -> Option<f64>| {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (tb, tr) in baseline.1.tools.iter().zip(&report.tools) {
                if let (Some(x), Some(y)) = (sel(tb), sel(tr)) {
                    a.push(x);
                    b.push(y);
                }
            }
            paired_t_test(&b, &a).ok()
        };
        let t_az = paired(&|t| t.az);
        let t_ap = paired(&|t| t.ap);
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{}",
            path.display(),
            fmt_opt(report.mean_az),
            fmt_opt(report.mean_ap),
            fmt_opt(t_az.map(|t| t.t)),
            fmt_opt(t_az.map(|t| t.p)),
            fmt_opt(t_ap.map(|t| t.t)),
            fmt_opt(t_ap.map(|t| t.p)),
        );
        println!(
            "run {} vs baseline: p_az={} p_ap={}",
            path.display(),
            fmt_opt(t_az.map(|t| t.p)),
            fmt_opt(t_ap.map(|t| t.p))
        );
    }
    std::fs::write(&args.out, out).map_err(data_err)?;
    println!("report written to {}", args.out.display());
    Ok(())
}
