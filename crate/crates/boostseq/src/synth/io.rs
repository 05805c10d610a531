//! On-disk dataset layout: one directory per sequence holding a frames
//! tensor file and label CSVs, plus a dataset manifest with splits,
//! prevalences, seed and config digest.

use super::{GlyphBox, Split, SynthSequence, SyntheticDataset};
use crate::matrix::LabelMatrix;
use crate::tensor::Tensor as GenericTensor;
use crate::tensorio::{read_tensor, write_tensor, TensorIoError, FRAMES_MAGIC};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

type Tensor = GenericTensor<f64>;

#[derive(Debug, Error)]
pub enum SynthIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorIoError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthIoError + '_ {
    move |source| SynthIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn labels_csv(labels: &LabelMatrix) -> String {
    let mut s = String::from("frame");
    for j in 0..labels.tools() {
        let _ = write!(s, ",tool_{j}");
    }
    s.push('\n');
    for t in 0..labels.rows() {
        let _ = write!(s, "{t}");
        for &v in labels.row(t) {
            let _ = write!(s, ",{}", if v == 1 { 1 } else { 0 });
        }
        s.push('\n');
    }
    s
}

fn parse_labels_csv(path: &Path, text: &str) -> Result<LabelMatrix, SynthIoError> {
    let mut rows: Vec<Vec<i8>> = Vec::new();
    let mut tools = 0usize;
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            tools = line.split(',').count().saturating_sub(1);
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let _frame = fields.next();
        let row: Result<Vec<i8>, _> = fields
            .map(|f| match f {
                "0" => Ok(-1i8),
                "1" => Ok(1i8),
                other => Err(SynthIoError::Parse {
                    path: path.to_path_buf(),
                    line: ln + 1,
                    msg: format!("bad label value {other}"),
                }),
            })
            .collect();
        let row = row?;
        if row.len() != tools {
            return Err(SynthIoError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: "wrong column count".into(),
            });
        }
        rows.push(row);
    }
    let flat: Vec<i8> = rows.into_iter().flatten().collect();
    let n = flat.len() / tools.max(1);
    LabelMatrix::new(n, tools, flat).map_err(|e| SynthIoError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

fn boxes_csv(boxes: &[Vec<GlyphBox>]) -> String {
    let mut s = String::from("frame,tool,y0,x0,y1,x1\n");
    for (t, frame_boxes) in boxes.iter().enumerate() {
        for b in frame_boxes {
            let _ = writeln!(s, "{t},{},{},{},{},{}", b.tool, b.y0, b.x0, b.y1, b.x1);
        }
    }
    s
}

fn parse_boxes_csv(path: &Path, text: &str, frames: usize) -> Result<Vec<Vec<GlyphBox>>, SynthIoError> {
    let mut out = vec![Vec::new(); frames];
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<usize> = line
            .split(',')
            .map(|f| f.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| SynthIoError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: e.to_string(),
            })?;
        if fields.len() != 6 || fields[0] >= frames {
            return Err(SynthIoError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                msg: "bad box row".into(),
            });
        }
        out[fields[0]].push(GlyphBox {
            tool: fields[1],
            y0: fields[2],
            x0: fields[3],
            y1: fields[4],
            x1: fields[5],
        });
    }
    Ok(out)
}

/// Writes the dataset directory; `config_text` is stored verbatim as
/// `config.toml` for reproduction.
pub fn write_dataset(
    dir: &Path,
    ds: &SyntheticDataset,
    config_text: &str,
) -> Result<(), SynthIoError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, config_text).map_err(io_err(&cfg_path))?;

    let mut manifest = String::from("# boostseq dataset manifest v1\n[dataset]\n");
    let _ = writeln!(manifest, "seed = {}", ds.seed);
    let _ = writeln!(manifest, "tools = {}", ds.tools);
    let _ = writeln!(manifest, "config_digest = {}", ds.config_digest);
    let _ = writeln!(
        manifest,
        "annotators = {}",
        ds.sequences.iter().all(|s| s.annotator_a.is_some())
    );
    manifest.push_str("\n[sequences]\n");
    for (i, s) in ds.sequences.iter().enumerate() {
        let _ = writeln!(manifest, "{i} = {}|{}|{}", s.id, s.split.id(), s.frames.len());
    }
    manifest.push_str("\n[prevalence]\n");
    let prev = {
        // over all splits, for reporting
        let mut pos = vec![0usize; ds.tools];
        let mut total = 0usize;
        for s in &ds.sequences {
            total += s.truth.rows();
            for t in 0..s.truth.rows() {
                for (j, &v) in s.truth.row(t).iter().enumerate() {
                    if v == 1 {
                        pos[j] += 1;
                    }
                }
            }
        }
        pos.iter()
            .map(|&c| c as f64 / total.max(1) as f64)
            .collect::<Vec<_>>()
    };
    for (j, p) in prev.iter().enumerate() {
        let _ = writeln!(manifest, "{j} = {p}");
    }
    let man_path = dir.join("manifest.txt");
    std::fs::write(&man_path, manifest).map_err(io_err(&man_path))?;

    for s in &ds.sequences {
        let seq_dir = dir.join(&s.id);
        std::fs::create_dir_all(&seq_dir).map_err(io_err(&seq_dir))?;
        // frames stacked into one [T, H, W, 3] tensor
        let (h, w) = (s.frames[0].shape()[0], s.frames[0].shape()[1]);
        let mut data = Vec::with_capacity(s.frames.len() * h * w * 3);
        for f in &s.frames {
            data.extend_from_slice(f.data());
        }
        let stacked = Tensor::new(vec![s.frames.len(), h, w, 3], data).expect("stack");
        write_tensor(&seq_dir.join("frames.bin"), FRAMES_MAGIC, &stacked)?;
        let p = seq_dir.join("labels.csv");
        std::fs::write(&p, labels_csv(&s.truth)).map_err(io_err(&p))?;
        if let (Some(a), Some(b)) = (&s.annotator_a, &s.annotator_b) {
            let pa = seq_dir.join("annotatorA.csv");
            std::fs::write(&pa, labels_csv(a)).map_err(io_err(&pa))?;
            let pb = seq_dir.join("annotatorB.csv");
            std::fs::write(&pb, labels_csv(b)).map_err(io_err(&pb))?;
        }
        let p = seq_dir.join("phases.csv");
        let mut phases = String::from("frame,phase\n");
        for (t, ph) in s.phase_of_frame.iter().enumerate() {
            let _ = writeln!(phases, "{t},{ph}");
        }
        std::fs::write(&p, phases).map_err(io_err(&p))?;
        let p = seq_dir.join("boxes.csv");
        std::fs::write(&p, boxes_csv(&s.glyph_boxes)).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<SyntheticDataset, SynthIoError> {
    let man_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&man_path).map_err(io_err(&man_path))?;
    let mut seed = 0u64;
    let mut tools = 0usize;
    let mut config_digest = String::new();
    let mut seq_entries: Vec<(String, Split, usize)> = Vec::new();
    let mut section = String::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        match section.as_str() {
            "dataset" => match k {
                "seed" => seed = v.parse().unwrap_or(0),
                "tools" => tools = v.parse().unwrap_or(0),
                "config_digest" => config_digest = v.to_string(),
                _ => {}
            },
            "sequences" => {
                let parts: Vec<&str> = v.split('|').collect();
                if parts.len() != 3 {
                    return Err(SynthIoError::Parse {
                        path: man_path.clone(),
                        line: ln + 1,
                        msg: "bad sequence entry".into(),
                    });
                }
                let split = Split::parse(parts[1]).ok_or_else(|| SynthIoError::Parse {
                    path: man_path.clone(),
                    line: ln + 1,
                    msg: format!("bad split {}", parts[1]),
                })?;
                seq_entries.push((
                    parts[0].to_string(),
                    split,
                    parts[2].parse().unwrap_or(0),
                ));
            }
            _ => {}
        }
    }

    let mut sequences = Vec::with_capacity(seq_entries.len());
    for (id, split, expected_len) in seq_entries {
        let seq_dir = dir.join(&id);
        let stacked = read_tensor(&seq_dir.join("frames.bin"), FRAMES_MAGIC)?;
        let shape = stacked.shape().to_vec();
        if shape.len() != 4 || shape[0] != expected_len {
            return Err(SynthIoError::Parse {
                path: seq_dir.join("frames.bin"),
                line: 0,
                msg: "frame tensor shape does not match the manifest".into(),
            });
        }
        let (t_len, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        let frame_len = h * w * c;
        let frames: Vec<Tensor> = (0..t_len)
            .map(|t| {
                Tensor::new(
                    vec![h, w, c],
                    stacked.data()[t * frame_len..(t + 1) * frame_len].to_vec(),
                )
                .expect("frame slice")
            })
            .collect();
        let lp = seq_dir.join("labels.csv");
        let truth = parse_labels_csv(&lp, &std::fs::read_to_string(&lp).map_err(io_err(&lp))?)?;
        let read_opt = |name: &str| -> Result<Option<LabelMatrix>, SynthIoError> {
            let p = seq_dir.join(name);
            if p.exists() {
                Ok(Some(parse_labels_csv(
                    &p,
                    &std::fs::read_to_string(&p).map_err(io_err(&p))?,
                )?))
            } else {
                Ok(None)
            }
        };
        let annotator_a = read_opt("annotatorA.csv")?;
        let annotator_b = read_opt("annotatorB.csv")?;
        let pp = seq_dir.join("phases.csv");
        let phase_of_frame: Vec<usize> = std::fs::read_to_string(&pp)
            .map_err(io_err(&pp))?
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').nth(1).and_then(|v| v.parse().ok()))
            .collect();
        let bp = seq_dir.join("boxes.csv");
        let glyph_boxes = parse_boxes_csv(
            &bp,
            &std::fs::read_to_string(&bp).map_err(io_err(&bp))?,
            t_len,
        )?;
        sequences.push(SynthSequence {
            id,
            split,
            frames,
            truth,
            annotator_a,
            annotator_b,
            phase_of_frame,
            glyph_boxes,
        });
    }
    Ok(SyntheticDataset {
        seed,
        tools,
        config_digest,
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{generate, WorkflowConfig};
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let mut c = WorkflowConfig::default_desk();
        c.sequences = 4;
        c.learn_count = 2;
        c.val_count = 1;
        c.phase_dwell = (8, 12);
        let ds = generate(&c, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds, "# config\n").unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.seed, ds.seed);
        assert_eq!(back.tools, ds.tools);
        assert_eq!(back.sequences.len(), ds.sequences.len());
        for (a, b) in back.sequences.iter().zip(&ds.sequences) {
            assert_eq!(a.split, b.split);
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.annotator_a, b.annotator_a);
            assert_eq!(a.phase_of_frame, b.phase_of_frame);
            assert_eq!(a.glyph_boxes, b.glyph_boxes);
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert_eq!(fa.data(), fb.data());
            }
        }
    }
}
