//! Attack and accuracy metrics.

use crate::backdoor::EvalSet;
use crate::error::{Error, Result};
use crate::gnn::{predict, ModelSpec, ParamVector};
use crate::graph::Graph;

/// Fraction of triggered graphs classified as the target label. Ties in the
/// scores resolve to the lowest class index.
pub fn attack_success_rate(spec: &ModelSpec, params: &ParamVector, eval: &EvalSet) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Evaluation("attack success rate over an empty set".into()));
    }
    let preds = predict(spec, params, &eval.refs())?;
    Ok(rate(&preds, |_, p| p == eval.target))
}

/// Top-1 accuracy on untriggered graphs.
pub fn clean_accuracy(spec: &ModelSpec, params: &ParamVector, graphs: &[&Graph]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::Evaluation("accuracy over an empty set".into()));
    }
    let preds = predict(spec, params, graphs)?;
    Ok(rate(&preds, |i, p| p == graphs[i].label()))
}

/// Fraction of predictions equal to `target`; with a target-free model this
/// is the confusion rate into the target class.
pub fn target_rate(preds: &[usize], target: usize) -> f64 {
    rate(preds, |_, p| p == target)
}

fn rate(preds: &[usize], hit: impl Fn(usize, usize) -> bool) -> f64 {
    let hits = preds.iter().enumerate().filter(|&(i, &p)| hit(i, p)).count();
    hits as f64 / preds.len() as f64
}

/// Pearson correlation coefficient.
pub fn pearson_cc(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need two equal-length series of at least 2 points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a series has zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}
