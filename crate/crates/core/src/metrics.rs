//! Error metrics: mean L2 relative error, mean absolute error and the
//! relative errors of scalar quantities such as resistances.

use crate::error::{Error, Result};

fn check_shapes<T: AsRef<[f64]>>(pred: &[T], truth: &[T]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predicted samples for {} reference samples",
            pred.len(),
            truth.len()
        )));
    }
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if p.as_ref().len() != t.as_ref().len() {
            return Err(Error::Shape(format!(
                "sample {i}: {} predicted values for {} reference values",
                p.as_ref().len(),
                t.as_ref().len()
            )));
        }
    }
    Ok(())
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `(1/N) sum_i |pred_i - true_i|_2 / |true_i|_2`.
pub fn ml2re<T: AsRef<[f64]>>(pred: &[T], truth: &[T]) -> Result<f64> {
    check_shapes(pred, truth)?;
    if pred.is_empty() {
        return Err(Error::Shape("no samples".into()));
    }
    let mut sum = 0.0;
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let (p, t) = (p.as_ref(), t.as_ref());
        let tn = norm(t.iter().copied());
        if tn == 0.0 {
            return Err(Error::ZeroNorm { index: i });
        }
        sum += norm(p.iter().zip(t).map(|(a, b)| a - b)) / tn;
    }
    Ok(sum / pred.len() as f64)
}

/// `(1/(N M)) sum_ij |true_ij - pred_ij|`.
pub fn mae<T: AsRef<[f64]>>(pred: &[T], truth: &[T]) -> Result<f64> {
    check_shapes(pred, truth)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.as_ref().iter().zip(t.as_ref()) {
            sum += (a - b).abs();
        }
        count += t.as_ref().len();
    }
    if count == 0 {
        return Err(Error::Shape("no values".into()));
    }
    Ok(sum / count as f64)
}

/// Relative errors `|true - pred| / |true|` and their mean.
pub fn mre_re(truth: &[f64], pred: &[f64]) -> Result<(f64, Vec<f64>)> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} reference and {} predicted values",
            truth.len(),
            pred.len()
        )));
    }
    let re = truth
        .iter()
        .zip(pred)
        .enumerate()
        .map(|(i, (t, p))| {
            if *t == 0.0 {
                Err(Error::ZeroTrueValue { index: i })
            } else {
                Ok((t - p).abs() / t.abs())
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mre = re.iter().sum::<f64>() / re.len() as f64;
    Ok((mre, re))
}
