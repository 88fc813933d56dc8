//! Predictive and causal-ranking losses, scores and hard classification.

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Summary of a predicted trajectory used to rank interventions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFn {
    #[default]
    Mean,
    Max,
    Min,
}

impl ScoreFn {
    /// Scores each row of a `batch × q` trajectory block, giving `batch × 1`.
    pub fn apply_var(self, traj: &Var) -> Var {
        match self {
            ScoreFn::Mean => traj.mean_cols(),
            ScoreFn::Max => traj.columns().into_iter().reduce(|a, b| a.max(&b)).expect("non-empty trajectory"),
            ScoreFn::Min => traj.columns().into_iter().reduce(|a, b| a.min(&b)).expect("non-empty trajectory"),
        }
    }
}

/// Mean squared error over every time point of every sequence.
pub fn predictive_loss(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != target.len() || pred.iter().zip(target).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Shape("prediction and target batches differ in shape".into()));
    }
    let n: usize = pred.iter().map(Vec::len).sum();
    if n == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    let sse: f64 = pred.iter().zip(target).flat_map(|(a, b)| a.iter().zip(b)).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sse / n as f64)
}

/// Tape version of [`predictive_loss`] on `batch × q` blocks.
pub fn predictive_loss_var(pred: &Var, target: &Var) -> Var {
    let d = pred - target;
    (&d * &d).mean()
}

pub fn score(traj: &[f64], f: ScoreFn) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::Input("cannot score an empty trajectory".into()));
    }
    Ok(match f {
        ScoreFn::Mean => traj.iter().sum::<f64>() / traj.len() as f64,
        ScoreFn::Max => traj.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ScoreFn::Min => traj.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Score difference between an intervention's trajectory and the base one.
pub fn causal_effect(traj: &[f64], base: &[f64], f: ScoreFn) -> Result<f64> {
    if traj.len() != base.len() {
        return Err(Error::Shape(format!("trajectory lengths {} and {} differ", traj.len(), base.len())));
    }
    Ok(score(traj, f)? - score(base, f)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxDist {
    pub probs: Vec<f64>,
    pub phi: f64,
}

pub fn softmax_dist(scores: &[f64], phi: f64) -> Result<SoftmaxDist> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::Config(format!("temperature must be positive, got {phi}")));
    }
    if scores.is_empty() || scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("softmax needs finite scores".into()));
    }
    let m = scores.iter().map(|s| phi * s).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (phi * s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(SoftmaxDist { probs: e.into_iter().map(|v| v / z).collect(), phi })
}

/// Cross-entropy of the softmax distribution against the true label.
pub fn causal_loss(dist: &SoftmaxDist, label: usize) -> Result<f64> {
    let p = dist
        .probs
        .get(label)
        .ok_or_else(|| Error::Input(format!("label {label} out of range for {} interventions", dist.probs.len())))?;
    Ok(-p.ln())
}

/// Numerically stable form of `causal_loss(softmax_dist(scores, phi), label)`.
pub fn causal_loss_from_scores(scores: &[f64], phi: f64, label: usize) -> Result<f64> {
    softmax_dist(scores, phi)?;
    if label >= scores.len() {
        return Err(Error::Input(format!("label {label} out of range for {} interventions", scores.len())));
    }
    let m = scores.iter().map(|s| phi * s).fold(f64::NEG_INFINITY, f64::max);
    // the max-shift cancels first, so equal scores give exactly ln K
    Ok((m - phi * scores[label]) + scores.iter().map(|s| (phi * s - m).exp()).sum::<f64>().ln())
}

/// Mean cross-entropy over the rows of a `sets × K` score block.
pub fn causal_loss_var(scores: &Var, labels: &[usize], phi: f64) -> Var {
    let z = scores.scale(phi);
    (z.logsumexp_rows() - z.pick_cols(labels)).mean()
}

pub fn hybrid_loss(l_pred: f64, l_causal: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) * l_pred + alpha * l_causal)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Index of the largest score; ties go to the lowest index.
pub fn classify(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    #[test]
    fn predictive_examples() {
        let y = vec![vec![0.0; 6]];
        assert_eq!(predictive_loss(&y, &y).unwrap(), 0.0);
        let p = vec![vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]];
        assert!((predictive_loss(&p, &y).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let p2 = vec![p[0].clone(), p[0].clone()];
        let y2 = vec![y[0].clone(), y[0].clone()];
        assert_eq!(predictive_loss(&p2, &y2).unwrap(), predictive_loss(&p, &y).unwrap());
        assert!(predictive_loss(&p, &[vec![0.0; 5]]).is_err());
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(&[1.0, 2.0, 3.0], ScoreFn::Mean).unwrap(), 2.0);
        assert_eq!(score(&[4.0; 3], ScoreFn::Max).unwrap(), 4.0);
        assert!(score(&[], ScoreFn::Min).is_err());
        let t = [0.3, -1.2, 2.5];
        let at: Vec<f64> = t.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((score(&at, ScoreFn::Mean).unwrap() - (2.0 * score(&t, ScoreFn::Mean).unwrap() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn causal_effect_examples() {
        let a = [1.0, 2.0];
        let b = [0.5, 0.0];
        assert_eq!(causal_effect(&a, &a, ScoreFn::Mean).unwrap(), 0.0);
        assert_eq!(causal_effect(&a, &b, ScoreFn::Mean).unwrap(), -causal_effect(&b, &a, ScoreFn::Mean).unwrap());
        assert!(causal_effect(&a, &[1.0], ScoreFn::Mean).is_err());
    }

    #[test]
    fn softmax_examples() {
        let d = softmax_dist(&[2.0; 3], 1.0).unwrap();
        assert!(d.probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let d = softmax_dist(&[0.0, 0.0, 2f64.ln()], 1.0).unwrap();
        for (p, e) in d.probs.iter().zip([0.25, 0.25, 0.5]) {
            assert!((p - e).abs() < 1e-15);
        }
        let d = softmax_dist(&[0.1, 0.5, 0.3], 1e3).unwrap();
        assert!((d.probs[1] - 1.0).abs() < 1e-6);
        assert!(softmax_dist(&[1.0, f64::NAN], 1.0).is_err());
        assert!(softmax_dist(&[1.0], 0.0).is_err());
    }

    #[test]
    fn causal_loss_examples() {
        let u = softmax_dist(&[0.0; 3], 1.0).unwrap();
        assert!((causal_loss(&u, 1).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(causal_loss(&u, 3).is_err());
        let a = SoftmaxDist { probs: vec![0.2, 0.5, 0.3], phi: 1.0 };
        let b = SoftmaxDist { probs: vec![0.3, 0.5, 0.2], phi: 1.0 };
        assert_eq!(causal_loss(&a, 1).unwrap(), causal_loss(&b, 1).unwrap());
    }

    #[test]
    fn hybrid_examples() {
        assert_eq!(hybrid_loss(2.0, 4.0, 0.0).unwrap(), 2.0);
        assert_eq!(hybrid_loss(2.0, 4.0, 1.0).unwrap(), 4.0);
        assert_eq!(hybrid_loss(2.0, 4.0, 0.5).unwrap(), 3.0);
        assert!(hybrid_loss(2.0, 4.0, 1.5).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&[1.0, 3.0, 2.0]), 1);
        assert_eq!(classify(&[3.0, 9.0, 6.0]), 1);
        assert_eq!(classify(&[5.0, 5.0, 1.0]), 0);
    }

    #[test]
    fn tape_losses_match_plain_versions() {
        let tape = Tape::new();
        let s = tape.constant(Tensor::from_rows(&[vec![0.1, 0.7, -0.2], vec![1.0, 1.0, 3.0]]));
        let v = causal_loss_var(&s, &[1, 0], 2.0).item();
        let a = causal_loss_from_scores(&[0.1, 0.7, -0.2], 2.0, 1).unwrap();
        let b = causal_loss_from_scores(&[1.0, 1.0, 3.0], 2.0, 0).unwrap();
        assert!((v - (a + b) / 2.0).abs() < 1e-14);
        let m = ScoreFn::Max.apply_var(&s).value().into_data();
        assert_eq!(m, vec![0.7, 3.0]);
    }
}
