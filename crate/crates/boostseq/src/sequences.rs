//! Temporal machinery: stride subsampling of long sequences, interleaved
//! reconstruction, per-tool median smoothing and validation-driven radius
//! selection.

use crate::matrix::{LabelMatrix, PredictionSequence, SeqMatrix};
use crate::metrics::roc_auc;
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("subsampling factor {m} outside 1..={len}")]
    BadFactor { m: usize, len: usize },
    #[error("subsequence lengths are inconsistent with a length-{len} video at factor {m}")]
    InconsistentParts { len: usize, m: usize },
    #[error("empty validation set")]
    EmptyValidation,
    #[error("empty radius candidate set")]
    EmptyCandidates,
    #[error("tool counts differ across validation sequences")]
    ToolMismatch,
}

/// 0-based frame indices of each of the `m` stride subsequences of a
/// length-`len` video. Subsequence k holds original frames k, k+m, k+2m...;
/// together they partition the video.
pub fn subsample_indices(len: usize, m: usize) -> Result<Vec<Vec<usize>>, SequenceError> {
    if m < 1 || m > len {
        return Err(SequenceError::BadFactor { m, len });
    }
    let mut out = vec![Vec::with_capacity(len / m + 1); m];
    for u in 0..len {
        out[u % m].push(u);
    }
    Ok(out)
}

/// Splits a prediction track into its `m` stride subsequences.
pub fn subsample(
    seq: &PredictionSequence,
    m: usize,
) -> Result<Vec<PredictionSequence>, SequenceError> {
    let indices = subsample_indices(seq.len(), m)?;
    Ok(indices
        .into_iter()
        .enumerate()
        .map(|(k, idx)| PredictionSequence {
            values: seq.values.gather_rows(&idx),
            kind: seq.kind,
            video: seq.video.clone(),
            subseq: Some(k),
        })
        .collect())
}

/// Reassembles per-subsequence predictions into the original frame order:
/// frame u comes from subsequence u mod m at position u div m (0-based).
pub fn interleave(
    parts: &[PredictionSequence],
    total_len: usize,
) -> Result<PredictionSequence, SequenceError> {
    let m = parts.len();
    let expected = subsample_indices(total_len, m)?;
    for (part, exp) in parts.iter().zip(&expected) {
        if part.len() != exp.len() {
            return Err(SequenceError::InconsistentParts { len: total_len, m });
        }
    }
    let cols = parts[0].tools();
    let mut out = SeqMatrix::zeros(total_len, cols);
    for u in 0..total_len {
        let row = parts[u % m].values.row(u / m);
        out.row_mut(u).copy_from_slice(row);
    }
    Ok(PredictionSequence {
        values: out,
        kind: parts[0].kind,
        video: parts[0].video.clone(),
        subseq: None,
    })
}

/// Mirror-reflection index for out-of-range window positions (no edge
/// duplication); total fold for radii larger than the sequence.
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Median of a window of length 2r+1 centered at t under reflect padding.
pub fn median_filter_channel<S: Scalar>(values: &[S], radius: usize) -> Vec<S> {
    if radius == 0 {
        return values.to_vec();
    }
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    let mut window: Vec<S> = Vec::with_capacity(2 * radius + 1);
    for t in 0..n {
        window.clear();
        for d in -(radius as isize)..=(radius as isize) {
            window.push(values[reflect_index(t as isize + d, n)]);
        }
        window.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        out.push(window[radius]);
    }
    out
}

/// Median filter radii, one per tool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RadiusTable(pub Vec<usize>);

impl RadiusTable {
    pub fn uniform(tools: usize, radius: usize) -> Self {
        RadiusTable(vec![radius; tools])
    }
}

/// Smooths each tool channel of a track with its own radius.
pub fn median_filter(seq: &PredictionSequence, radii: &RadiusTable) -> PredictionSequence {
    let rows = seq.len();
    let cols = seq.tools();
    assert_eq!(radii.0.len(), cols, "one radius per tool");
    let mut out = SeqMatrix::zeros(rows, cols);
    for tool in 0..cols {
        let channel: Vec<f64> = (0..rows).map(|t| seq.values.get(t, tool)).collect();
        let smoothed = median_filter_channel(&channel, radii.0[tool]);
        for (t, v) in smoothed.into_iter().enumerate() {
            out.set(t, tool, v);
        }
    }
    PredictionSequence {
        values: out,
        kind: seq.kind,
        video: seq.video.clone(),
        subseq: seq.subseq,
    }
}

/// Pooled per-tool area under the ROC curve of smoothed validation tracks.
fn pooled_smoothed_auc(
    preds: &[PredictionSequence],
    labels: &[&LabelMatrix],
    tool: usize,
    radius: usize,
) -> Option<f64> {
    let mut scores = Vec::new();
    let mut lab = Vec::new();
    for (seq, lm) in preds.iter().zip(labels) {
        let channel: Vec<f64> = (0..seq.len()).map(|t| seq.values.get(t, tool)).collect();
        scores.extend(median_filter_channel(&channel, radius));
        lab.extend((0..lm.rows()).map(|t| lm.get(t, tool)));
    }
    roc_auc(&scores, &lab)
}

/// Selects, per tool, the radius maximizing validation AUC (ties broken by
/// the smallest radius). Tools with single-class validation labels get the
/// mode of the radii selected elsewhere (ties again to the smallest).
pub fn select_radii(
    preds: &[PredictionSequence],
    labels: &[&LabelMatrix],
    candidates: &[usize],
) -> Result<RadiusTable, SequenceError> {
    if preds.is_empty() || preds.iter().zip(labels).any(|(p, l)| p.len() != l.rows()) {
        return Err(SequenceError::EmptyValidation);
    }
    if candidates.is_empty() {
        return Err(SequenceError::EmptyCandidates);
    }
    let tools = preds[0].tools();
    if preds.iter().any(|p| p.tools() != tools)
        || labels.iter().any(|l| l.tools() != tools)
    {
        return Err(SequenceError::ToolMismatch);
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut chosen: Vec<Option<usize>> = vec![None; tools];
    for tool in 0..tools {
        let mut best: Option<(f64, usize)> = None;
        for &r in &sorted {
            match pooled_smoothed_auc(preds, labels, tool, r) {
                None => break, // single-class labels: tool absent
                Some(az) => {
                    // strictly-greater keeps the smallest radius on ties
                    if best.map_or(true, |(b, _)| az > b) {
                        best = Some((az, r));
                    }
                }
            }
        }
        chosen[tool] = best.map(|(_, r)| r);
    }

    // mode of the selected radii, smallest value on ties
    let fallback = {
        let mut counts: Vec<(usize, usize)> = sorted
            .iter()
            .map(|&r| (r, chosen.iter().flatten().filter(|&&c| c == r).count()))
            .collect();
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        counts[0].0
    };
    Ok(RadiusTable(
        chosen.into_iter().map(|c| c.unwrap_or(fallback)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ValueKind;

    fn track(rows: &[Vec<f64>]) -> PredictionSequence {
        PredictionSequence::new(
            SeqMatrix::from_rows(rows).unwrap(),
            ValueKind::Probabilities,
            "v0",
        )
        .unwrap()
    }

    #[test]
    fn subsample_seven_by_three() {
        let idx = subsample_indices(7, 3).unwrap();
        assert_eq!(idx, vec![vec![0, 3, 6], vec![1, 4], vec![2, 5]]);
    }

    #[test]
    fn subsample_identity_and_errors() {
        assert_eq!(subsample_indices(4, 1).unwrap(), vec![vec![0, 1, 2, 3]]);
        assert!(subsample_indices(3, 4).is_err());
        assert!(subsample_indices(3, 0).is_err());
    }

    #[test]
    fn subsample_partitions() {
        let idx = subsample_indices(11, 4).unwrap();
        let mut all: Vec<usize> = idx.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn interleave_round_trip() {
        let rows: Vec<Vec<f64>> = (0..7).map(|u| vec![u as f64 / 10.0]).collect();
        let seq = track(&rows);
        let parts = subsample(&seq, 3).unwrap();
        let back = interleave(&parts, 7).unwrap();
        assert_eq!(back.values, seq.values);
    }

    #[test]
    fn interleave_rejects_bad_lengths() {
        let rows: Vec<Vec<f64>> = (0..6).map(|u| vec![u as f64 / 10.0]).collect();
        let seq = track(&rows);
        let parts = subsample(&seq, 3).unwrap();
        assert!(matches!(
            interleave(&parts, 7),
            Err(SequenceError::InconsistentParts { .. })
        ));
    }

    #[test]
    fn median_constant_unchanged() {
        for r in [0usize, 1, 2, 5] {
            let v = median_filter_channel(&[0.4f64; 6], r);
            assert_eq!(v, vec![0.4; 6]);
        }
    }

    #[test]
    fn median_removes_isolated_spike() {
        let v = median_filter_channel(&[0.0f64, 0.0, 1.0, 0.0, 0.0], 1);
        assert_eq!(v, vec![0.0; 5]);
    }

    #[test]
    fn median_preserves_step_edge() {
        let v = median_filter_channel(&[0.0f64, 0.0, 0.0, 1.0, 1.0, 1.0], 1);
        assert_eq!(v, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn median_radius_larger_than_sequence() {
        let v = median_filter_channel(&[0.0f64, 1.0, 1.0], 5);
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
    }

    #[test]
    fn median_idempotent_on_long_runs() {
        let seq: Vec<f64> = [vec![0.0; 5], vec![1.0; 6], vec![0.0; 7]].concat();
        let once = median_filter_channel(&seq, 2);
        let twice = median_filter_channel(&once, 2);
        assert_eq!(once, twice);
    }

    #[test]
    fn select_radii_tie_breaks_to_smallest() {
        // predictions identical to labels: every radius perfect
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|t| vec![if t < 6 { 1.0 } else { 0.0 }])
            .collect();
        let preds = vec![track(&rows)];
        let data: Vec<i8> = (0..12).map(|t| if t < 6 { 1 } else { -1 }).collect();
        let labels = LabelMatrix::new(12, 1, data).unwrap();
        let table = select_radii(&preds, &[&labels], &[1, 2, 4, 8]).unwrap();
        assert_eq!(table, RadiusTable(vec![1]));
    }

    #[test]
    fn select_radii_spike_noise_prefers_smoothing() {
        // long runs with isolated single-frame flips
        let mut values: Vec<f64> = (0..60).map(|t| if (t / 15) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let labels_vec: Vec<i8> = values.iter().map(|&v| if v > 0.5 { 1 } else { -1 }).collect();
        for t in [3usize, 22, 41, 57] {
            values[t] = 1.0 - values[t];
        }
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let preds = vec![track(&rows)];
        let labels = LabelMatrix::new(60, 1, labels_vec).unwrap();
        let table = select_radii(&preds, &[&labels], &[1, 2, 4, 8]).unwrap();
        assert!(table.0[0] >= 1);
        let raw: Vec<f64> = values.clone();
        let lab: Vec<i8> = (0..60).map(|t| labels.get(t, 0)).collect();
        let unsmoothed = roc_auc(&raw, &lab).unwrap();
        let smoothed = roc_auc(&median_filter_channel(&raw, table.0[0]), &lab).unwrap();
        assert!(smoothed >= unsmoothed);
    }

    #[test]
    fn select_radii_mode_for_absent_tool() {
        // tools 0..3 are present; tool 3 never occurs and gets the mode of
        // the radii selected for the others
        let mut rows = Vec::new();
        let mut lab = Vec::new();
        for t in 0..40i32 {
            let a = if t < 20 { 1.0 } else { 0.0 };
            let b = if t % 8 < 4 { 1.0 } else { 0.0 };
            rows.push(vec![a, a, b, 0.0]);
            lab.extend_from_slice(&[
                if a > 0.5 { 1 } else { -1 },
                if a > 0.5 { 1 } else { -1 },
                if b > 0.5 { 1 } else { -1 },
                -1,
            ]);
        }
        let preds = vec![track(&rows)];
        let labels = LabelMatrix::new(40, 4, lab).unwrap();
        let table = select_radii(&preds, &[&labels], &[1, 4]).unwrap();
        let ones = table.0[..3].iter().filter(|&&r| r == 1).count();
        let mode = if 2 * ones >= 3 { 1 } else { 4 };
        assert_eq!(table.0[3], mode);
    }

    #[test]
    fn select_radii_mode_tie_breaks_low() {
        // direct check of the documented {1, 1, 4} -> 1 example
        let chosen = [Some(1usize), Some(1), Some(4)];
        let sorted = [1usize, 4];
        let mut counts: Vec<(usize, usize)> = sorted
            .iter()
            .map(|&r| (r, chosen.iter().flatten().filter(|&&c| c == r).count()))
            .collect();
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(counts[0].0, 1);
    }

    #[test]
    fn median_filter_keeps_probability_range() {
        let rows: Vec<Vec<f64>> = (0..9).map(|t| vec![(t as f64) / 10.0]).collect();
        let seq = track(&rows);
        let out = median_filter(&seq, &RadiusTable(vec![2]));
        assert!(out
            .values
            .data()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(out.kind, ValueKind::Probabilities);
    }
}
