//! Classification metrics, ROC/AUC, zero-FPR thresholding, mean aggregation,
//! and the cross-organization generalizability experiment.

use crate::corpus::Org;
use crate::model::ModelSpec;
use crate::training::{self, TrainConfig, TrainSample};
use crate::{Error, Result};

/// Scalar metrics of one (model, split) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// (FPR, TPR) points from (0,0) to (1,1).
    pub roc: Vec<(f64, f64)>,
    pub auc: f64,
    pub tpr_at_zero_fpr: f64,
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Input("no scores to evaluate".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Threshold-based metrics: predict positive iff score > threshold.
/// Empty denominators yield 0.
pub fn classification_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<(f64, f64, f64, f64)> {
    check_lengths(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0f64, 0f64, 0f64, 0f64);
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s > threshold;
        match (predicted, l == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fn_ += 1.0,
        }
    }
    let accuracy = (tp + tn) / (tp + tn + fp + fn_);
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((accuracy, precision, recall, f1))
}

/// F1 at the default 0.5 threshold.
pub fn f1_score(scores: &[f64], labels: &[u8]) -> Result<f64> {
    classification_metrics(scores, labels, 0.5).map(|(_, _, _, f1)| f1)
}

/// ROC points swept over distinct scores (descending, ties grouped) plus the
/// (0,0) and (1,1) endpoints; AUC by the trapezoidal rule.
pub fn roc_and_auc(scores: &[f64], labels: &[u8]) -> Result<(Vec<(f64, f64)>, f64)> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Evaluation(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        // Group equal scores into one threshold step.
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok((points, auc))
}

/// Fraction of positives scoring strictly above every negative.
pub fn tpr_at_zero_fpr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let max_negative = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_negative == f64::NEG_INFINITY {
        return Err(Error::Evaluation("zero-FPR threshold needs at least one negative".into()));
    }
    let positives: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    if positives.is_empty() {
        return Ok(0.0);
    }
    let above = positives.iter().filter(|&&s| s > max_negative).count();
    Ok(above as f64 / positives.len() as f64)
}

/// Full report for one score/label set at the 0.5 operating threshold.
pub fn evaluate_scores(scores: &[f64], labels: &[u8]) -> Result<EvalReport> {
    let (accuracy, precision, recall, f1) = classification_metrics(scores, labels, 0.5)?;
    let (roc, auc) = roc_and_auc(scores, labels)?;
    let tpr = tpr_at_zero_fpr(scores, labels)?;
    Ok(EvalReport { accuracy, precision, recall, f1, roc, auc, tpr_at_zero_fpr: tpr })
}

/// Fieldwise mean of the scalar metrics; the ROC list is omitted.
pub fn arithmetic_mean_report(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::Input("cannot average zero reports".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        roc: Vec::new(),
        auc: mean(|r| r.auc),
        tpr_at_zero_fpr: mean(|r| r.tpr_at_zero_fpr),
    })
}

// ── Cross-organization generalizability ─────────────────────────────────

/// One organization's model-ready samples per split.
pub struct OrgDataset {
    pub org: Org,
    pub train: Vec<TrainSample>,
    pub validation: Vec<TrainSample>,
    pub continuous: Vec<TrainSample>,
    pub delay: Vec<TrainSample>,
}

impl OrgDataset {
    fn check(&self) -> Result<()> {
        for (name, split) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("continuous", &self.continuous),
            ("delay", &self.delay),
        ] {
            if split.is_empty() {
                return Err(Error::Input(format!(
                    "organization {} is missing its {name} split",
                    self.org.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Per-target F1 cells of the generalizability table.
#[derive(Debug, Clone)]
pub struct XorgRow {
    pub target: Org,
    pub baseline_continuous: f64,
    pub multi_continuous: f64,
    pub baseline_delay: f64,
    pub multi_delay: f64,
}

/// For each target organization: baseline is the mean F1 of the two models
/// trained on a single other organization; multi is the F1 of one model
/// trained on the union of the other two organizations' training data.
pub fn cross_org_experiment(
    orgs: &[OrgDataset; 3],
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<Vec<XorgRow>> {
    for org in orgs.iter() {
        org.check()?;
    }
    let mut rows = Vec::with_capacity(3);
    for target_idx in 0..3 {
        let target = &orgs[target_idx];
        let others: Vec<&OrgDataset> =
            (0..3).filter(|&i| i != target_idx).map(|i| &orgs[i]).collect();

        let mut single_models = Vec::with_capacity(2);
        for (k, other) in others.iter().enumerate() {
            let mut sub_cfg = cfg.clone();
            sub_cfg.seed = cfg.seed.wrapping_add((target_idx * 3 + k) as u64);
            let (model, _) =
                training::train(spec.clone(), &other.train, &other.validation, &sub_cfg)?;
            single_models.push(model);
        }

        let mut union_train: Vec<TrainSample> = others[0].train.clone();
        union_train.extend(others[1].train.iter().cloned());
        let mut union_val: Vec<TrainSample> = others[0].validation.clone();
        union_val.extend(others[1].validation.iter().cloned());
        let mut multi_cfg = cfg.clone();
        multi_cfg.seed = cfg.seed.wrapping_add((target_idx * 3 + 2) as u64);
        let (multi_model, _) =
            training::train(spec.clone(), &union_train, &union_val, &multi_cfg)?;

        let f1_on = |model: &crate::model::Model, samples: &[TrainSample]| -> Result<f64> {
            let scores = training::predict_scores(model, samples)?;
            let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
            f1_score(&scores, &labels)
        };

        let baseline_continuous = (f1_on(&single_models[0], &target.continuous)?
            + f1_on(&single_models[1], &target.continuous)?)
            / 2.0;
        let baseline_delay = (f1_on(&single_models[0], &target.delay)?
            + f1_on(&single_models[1], &target.delay)?)
            / 2.0;
        rows.push(XorgRow {
            target: target.org,
            baseline_continuous,
            multi_continuous: f1_on(&multi_model, &target.continuous)?,
            baseline_delay,
            multi_delay: f1_on(&multi_model, &target.delay)?,
        });
    }
    Ok(rows)
}
