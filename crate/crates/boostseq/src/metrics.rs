//! Evaluation metrics: ROC AUC (Mann-Whitney), step-wise average precision,
//! Pearson correlation, paired t-tests and two-annotator consensus masking.

use crate::matrix::{LabelMatrix, MatrixError};
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("inputs must have equal length >= 2")]
    BadLength,
    #[error("zero variance")]
    ZeroVariance,
    #[error("scores and labels differ in length")]
    LengthMismatch,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Mann-Whitney estimate of the area under the ROC curve: the fraction of
/// (positive, negative) pairs ranked correctly, ties counted 0.5.
/// `None` when labels contain a single class.
pub fn roc_auc<S: Scalar>(scores: &[S], labels: &[i8]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // average ranks with tie groups; rank-sum identity for the pair count
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied entries share the mean rank of the group
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    let u = rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Some(u / (n_pos_f * n_neg as f64))
}

/// Step-wise average precision over descending unique score thresholds.
/// `None` when there are no positives.
pub fn average_precision<S: Scalar>(scores: &[S], labels: &[i8]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0f64;
    let mut ap = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

/// Pearson correlation coefficient.
pub fn pearson<S: Scalar>(x: &[S], y: &[S]) -> Result<f64, MetricsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::BadLength);
    }
    let n = x.len() as f64;
    let xs: Vec<f64> = x.iter().map(|v| v.to_f64_lossy()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.to_f64_lossy()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in xs.iter().zip(&ys) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Copy, Debug)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
}

/// Paired two-sided t-test on per-tool metric vectors.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(MetricsError::BadLength);
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let t = mean / (var / n).sqrt();
    let dof = a.len() - 1;
    let p = student_t_two_sided_p(t, dof as f64);
    Ok(TTest { t, p, dof })
}

/// Two-sided tail probability of Student's t with `dof` degrees of freedom;
/// the regularized incomplete beta identity gives it directly.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t))
}

/// ln Gamma via the Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = 0.99999999999980993;
    for (i, &c) in COEF.iter().enumerate() {
        a += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b), accurate to ~1e-14.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln())
        .exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Per-tool frame mask and merged training labels for two annotators.
#[derive(Clone, Debug)]
pub struct Consensus {
    /// evaluable[tool][frame] is true where the annotators agree
    pub evaluable: Vec<Vec<bool>>,
    /// union labels: in use if at least one annotator said so
    pub training: LabelMatrix,
}

/// Frames evaluable per tool are those where both annotators agree; training
/// labels take the union of the positives.
pub fn consensus_mask(a: &LabelMatrix, b: &LabelMatrix) -> Result<Consensus, MetricsError> {
    if a.rows() != b.rows() || a.tools() != b.tools() {
        return Err(MetricsError::LengthMismatch);
    }
    let tools = a.tools();
    let rows = a.rows();
    let mut evaluable = vec![vec![false; rows]; tools];
    let mut training = LabelMatrix::all_off(rows, tools);
    for t in 0..rows {
        for tool in 0..tools {
            let (va, vb) = (a.get(t, tool), b.get(t, tool));
            evaluable[tool][t] = va == vb;
            if va == 1 || vb == 1 {
                training.set(t, tool, 1);
            }
        }
    }
    Ok(Consensus {
        evaluable,
        training,
    })
}

/// Per-tool evaluation results; `None` metrics mean the tool was undefined
/// on this split (single-class labels or no positives) and is excluded from
/// the means.
#[derive(Clone, Debug)]
pub struct ToolMetrics {
    pub az: Option<f64>,
    pub ap: Option<f64>,
    pub frames_evaluated: usize,
    pub train_prevalence: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    /// Free-form header entries (mode, smoothing, latency...).
    pub header: Vec<(String, String)>,
    pub tools: Vec<ToolMetrics>,
    pub mean_az: Option<f64>,
    pub mean_ap: Option<f64>,
    pub excluded_az: usize,
    pub excluded_ap: usize,
    pub prevalence_corr_az: Option<f64>,
    pub prevalence_corr_ap: Option<f64>,
}

impl EvalReport {
    /// Builds the report from pooled per-tool scores and labels; `mask[tool]`
    /// (when present) selects the evaluable entries.
    pub fn compute(
        scores: &[Vec<f64>],
        labels: &[Vec<i8>],
        mask: Option<&[Vec<bool>]>,
        train_prevalence: &[f64],
        header: Vec<(String, String)>,
    ) -> EvalReport {
        let mut tools = Vec::with_capacity(scores.len());
        for tool in 0..scores.len() {
            let (s, l): (Vec<f64>, Vec<i8>) = match mask {
                Some(m) => scores[tool]
                    .iter()
                    .zip(&labels[tool])
                    .zip(&m[tool])
                    .filter(|(_, &keep)| keep)
                    .map(|((s, l), _)| (*s, *l))
                    .unzip(),
                None => (scores[tool].clone(), labels[tool].clone()),
            };
            tools.push(ToolMetrics {
                az: roc_auc(&s, &l),
                ap: average_precision(&s, &l),
                frames_evaluated: s.len(),
                train_prevalence: train_prevalence.get(tool).copied().unwrap_or(0.0),
            });
        }
        let mean = |sel: &dyn Fn(&ToolMetrics) -> Option<f64>| {
            let vals: Vec<f64> = tools.iter().filter_map(|t| sel(t)).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        let corr = |sel: &dyn Fn(&ToolMetrics) -> Option<f64>| {
            let pairs: Vec<(f64, f64)> = tools
                .iter()
                .filter_map(|t| sel(t).map(|v| (v, t.train_prevalence)))
                .collect();
            if pairs.len() < 2 {
                return None;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            pearson(&x, &y).ok()
        };
        let excluded_az = tools.iter().filter(|t| t.az.is_none()).count();
        let excluded_ap = tools.iter().filter(|t| t.ap.is_none()).count();
        EvalReport {
            header,
            mean_az: mean(&|t| t.az),
            mean_ap: mean(&|t| t.ap),
            prevalence_corr_az: corr(&|t| t.az),
            prevalence_corr_ap: corr(&|t| t.ap),
            excluded_az,
            excluded_ap,
            tools,
        }
    }

    /// One row per tool plus summary rows; headers are "# key = value"
    /// comment lines. The AP convention is declared in the header.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("# ap_convention = stepwise\n");
        for (k, v) in &self.header {
            s.push_str(&format!("# {k} = {v}\n"));
        }
        s.push_str("row,tool,az,ap,frames_evaluated,train_prevalence\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (j, t) in self.tools.iter().enumerate() {
            s.push_str(&format!(
                "tool,{j},{},{},{},{}\n",
                opt(t.az),
                opt(t.ap),
                t.frames_evaluated,
                t.train_prevalence
            ));
        }
        s.push_str(&format!(
            "summary,mean_az,{},,,\nsummary,mean_ap,{},,,\n",
            opt(self.mean_az),
            opt(self.mean_ap)
        ));
        s.push_str(&format!(
            "summary,excluded_az,{},,,\nsummary,excluded_ap,{},,,\n",
            self.excluded_az, self.excluded_ap
        ));
        s.push_str(&format!(
            "summary,prevalence_corr_az,{},,,\nsummary,prevalence_corr_ap,{},,,\n",
            opt(self.prevalence_corr_az),
            opt(self.prevalence_corr_ap)
        ));
        s
    }

    /// Parses the CSV emitted by [`EvalReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<EvalReport, MetricsError> {
        let mut report = EvalReport::default();
        let parse_opt = |s: &str| -> Option<f64> { s.parse().ok() };
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once(" = ") {
                    report.header.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match fields.first() {
                Some(&"tool") if fields.len() == 6 => {
                    report.tools.push(ToolMetrics {
                        az: parse_opt(fields[2]),
                        ap: parse_opt(fields[3]),
                        frames_evaluated: fields[4].parse().unwrap_or(0),
                        train_prevalence: fields[5].parse().unwrap_or(0.0),
                    });
                }
                Some(&"summary") if fields.len() >= 3 => match fields[1] {
                    "mean_az" => report.mean_az = parse_opt(fields[2]),
                    "mean_ap" => report.mean_ap = parse_opt(fields[2]),
                    "excluded_az" => report.excluded_az = fields[2].parse().unwrap_or(0),
                    "excluded_ap" => report.excluded_ap = fields[2].parse().unwrap_or(0),
                    "prevalence_corr_az" => report.prevalence_corr_az = parse_opt(fields[2]),
                    "prevalence_corr_ap" => report.prevalence_corr_ap = parse_opt(fields[2]),
                    _ => {}
                },
                _ => {}
            }
        }
        Ok(report)
    }
}

/// ROC curve points as (threshold, fpr, tpr) over descending unique scores.
pub fn roc_points(scores: &[f64], labels: &[i8]) -> Vec<(f64, f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));
    let mut out = vec![(f64::INFINITY, 0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        out.push((
            scores[order[i]],
            fp as f64 / n_neg as f64,
            tp as f64 / n_pos as f64,
        ));
        i = j + 1;
    }
    out
}

/// Precision-recall points as (threshold, recall, precision).
pub fn pr_points(scores: &[f64], labels: &[i8]) -> Vec<(f64, f64, f64)> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite"));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        out.push((
            scores[order[i]],
            tp as f64 / n_pos as f64,
            tp as f64 / (tp + fp) as f64,
        ));
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_auc_perfect_and_inverted() {
        let labels = [1, 1, -1, -1];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels), Some(1.0));
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels), Some(0.0));
    }

    #[test]
    fn roc_auc_enumerated_pairs() {
        // pairs: (0.9 vs 0.8) correct, (0.7 vs 0.8) wrong -> 0.5
        let v = roc_auc(&[0.9, 0.8, 0.7], &[1, -1, 1]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn roc_auc_single_class_absent() {
        assert_eq!(roc_auc(&[0.5, 0.2], &[1, 1]), None);
    }

    #[test]
    fn roc_auc_tie_convention() {
        let v = roc_auc(&[0.5, 0.5], &[1, -1]).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn average_precision_known_values() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.2, 0.1], &[1, 1, -1, -1]),
            Some(1.0)
        );
        let v = average_precision(&[0.9, 0.8, 0.7], &[1, -1, 1]).unwrap();
        assert!((v - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12, "{v}");
        assert_eq!(average_precision(&[0.4, 0.3], &[-1, -1]), None);
    }

    #[test]
    fn average_precision_constant_scores_equal_prevalence() {
        let scores = [0.5; 10];
        let labels = [1, -1, -1, 1, -1, -1, -1, 1, -1, -1];
        let v = average_precision(&scores, &labels).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }

    #[test]
    fn pearson_known_values() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[5.0, 4.0, 3.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&x, &[1.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(pearson(&x, &[1.0, 1.0, 1.0]), Err(MetricsError::ZeroVariance));
    }

    #[test]
    fn t_test_constant_differences_rejected() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(paired_t_test(&a, &b), Err(MetricsError::ZeroVariance)));
    }

    #[test]
    fn t_cdf_frozen_references() {
        // P(|T1| > 1) = 0.5 exactly (Cauchy)
        assert!((student_t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-10);
        // 97.5th percentile of t with 4 dof
        let p = student_t_two_sided_p(2.7764451051977987, 4.0);
        assert!((p - 0.05).abs() < 1e-9, "{p}");
        // t = 0 is certain
        assert_eq!(student_t_two_sided_p(0.0, 7.0), 1.0);
    }

    #[test]
    fn consensus_mask_examples() {
        let a = LabelMatrix::new(3, 2, vec![1, -1, 1, -1, -1, -1]).unwrap();
        // identical annotators: everything evaluable, labels unchanged
        let c = consensus_mask(&a, &a).unwrap();
        assert!(c.evaluable.iter().all(|v| v.iter().all(|&e| e)));
        assert_eq!(c.training, a);

        // disagreement at frame 1 tool 0: excluded there, trained as +1
        let b = LabelMatrix::new(3, 2, vec![1, -1, -1, -1, -1, -1]).unwrap();
        let c = consensus_mask(&a, &b).unwrap();
        assert!(c.evaluable[0][0] && !c.evaluable[0][1] && c.evaluable[0][2]);
        assert!(c.evaluable[1].iter().all(|&e| e));
        assert_eq!(c.training.get(1, 0), 1);
    }

    #[test]
    fn consensus_exclusions_are_per_tool() {
        // disjoint single-frame disagreements on two tools
        let a = LabelMatrix::new(2, 2, vec![1, -1, -1, 1]).unwrap();
        let b = LabelMatrix::new(2, 2, vec![-1, -1, -1, -1]).unwrap();
        let c = consensus_mask(&a, &b).unwrap();
        assert!(!c.evaluable[0][0] && c.evaluable[0][1]);
        assert!(c.evaluable[1][0] && !c.evaluable[1][1]);
    }

    #[test]
    fn eval_report_csv_round_trip() {
        let report = EvalReport::compute(
            &[vec![0.9, 0.2, 0.7], vec![0.1, 0.1, 0.1]],
            &[vec![1, -1, 1], vec![-1, -1, -1]],
            None,
            &[0.4, 0.01],
            vec![("mode".into(), "offline".into())],
        );
        assert!(report.tools[0].az.is_some());
        // tool 1 has no positives: excluded from both means
        assert!(report.tools[1].az.is_none());
        assert_eq!(report.excluded_az, 1);
        assert_eq!(report.excluded_ap, 1);
        let text = report.to_csv();
        let back = EvalReport::from_csv(&text).unwrap();
        assert_eq!(back.tools.len(), 2);
        assert_eq!(back.mean_az, report.mean_az);
        // the declared AP convention comes back as an extra header entry
        assert!(back.header.contains(&("ap_convention".into(), "stepwise".into())));
        assert!(back.header.contains(&("mode".into(), "offline".into())));
        assert_eq!(back.tools[1].az, None);
    }

    #[test]
    fn curve_points_monotone() {
        let scores = [0.9, 0.8, 0.7, 0.6, 0.5];
        let labels = [1, -1, 1, -1, -1];
        let roc = roc_points(&scores, &labels);
        assert!(roc.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].2 <= w[1].2));
        assert_eq!(roc.last().unwrap().1, 1.0);
        assert_eq!(roc.last().unwrap().2, 1.0);
        let pr = pr_points(&scores, &labels);
        assert_eq!(pr.last().unwrap().1, 1.0);
        assert_eq!(pr[0].2, 1.0);
    }

    #[test]
    fn auc_monotone_invariance_and_negation() {
        let scores = [0.1f64, 0.4, 0.35, 0.8, 0.8, 0.05];
        let labels = [-1, 1, -1, 1, -1, 1];
        let base = roc_auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| (5.0 * s).tanh()).collect();
        assert_eq!(roc_auc(&squashed, &labels), Some(base));
        let negated: Vec<f64> = scores.iter().map(|&s| -s).collect();
        let inv = roc_auc(&negated, &labels).unwrap();
        assert_eq!(base + inv, 1.0);
    }
}
