//! Glue between the model and a loss head: scores, loss, and full gradients.

use crate::error::Result;
use crate::losses::{
    cosine_scores, grad_wrt_logits, softmax_ce, CosineScores, Epsilon, LossFamily, LossHead, PerturbedLogits,
};
use crate::model::{GradientSet, Model};
use crate::numerics::Matrix;

/// Classifier scores: cosines for cosine families, `f · W` for cross-entropy.
#[derive(Debug, Clone)]
pub enum Scores {
    Cosine(CosineScores),
    Linear { logits: Matrix, features: Matrix },
}

impl Scores {
    pub fn values(&self) -> &Matrix {
        match self {
            Scores::Cosine(c) => c.cos(),
            Scores::Linear { logits, .. } => logits,
        }
    }

    /// `(dL/dfeatures, dL/dW)` from `dL/dscores`.
    pub fn backward(&self, w: &Matrix, dscores: &Matrix) -> Result<(Matrix, Matrix)> {
        match self {
            Scores::Cosine(c) => c.backward(dscores),
            Scores::Linear { features, .. } => Ok((dscores.matmul_t(w)?, features.t_matmul(dscores)?)),
        }
    }
}

pub fn classifier_scores(features: &Matrix, w: &Matrix, family: LossFamily) -> Result<Scores> {
    if family.is_cosine() {
        Ok(Scores::Cosine(cosine_scores(features, w)?))
    } else {
        Ok(Scores::Linear {
            logits: features.matmul(w)?,
            features: features.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: GradientSet,
    pub logits: PerturbedLogits,
}

/// Mean loss over the batch for fixed noise, without gradients.
pub fn loss_value(
    model: &Model,
    head: &LossHead,
    inputs: &Matrix,
    labels: &[usize],
    epsilon: &Epsilon,
    training: bool,
) -> Result<f64> {
    let (features, _) = model.forward(inputs)?;
    let scores = classifier_scores(&features, model.classifier(), head.family())?;
    let logits = head.logits_with(scores.values(), labels, epsilon.clone(), training)?;
    Ok(softmax_ce(&logits.logits, labels)?.0)
}

/// Loss and exact gradients for every model tensor, with `epsilon` held fixed.
pub fn loss_and_gradients(
    model: &Model,
    head: &LossHead,
    inputs: &Matrix,
    labels: &[usize],
    epsilon: Epsilon,
    training: bool,
) -> Result<StepOutput> {
    let (features, cache) = model.forward(inputs)?;
    let scores = classifier_scores(&features, model.classifier(), head.family())?;
    let (logits, mut dscores) = head.logits_and_slopes(scores.values(), labels, epsilon, training)?;
    let (loss, probs) = softmax_ce(&logits.logits, labels)?;
    let dlogits = grad_wrt_logits(&probs, labels);
    dscores
        .as_mut_slice()
        .iter_mut()
        .zip(dlogits.as_slice())
        .for_each(|(d, g)| *d *= g);
    let (d_features, d_w) = scores.backward(model.classifier(), &dscores)?;
    let grads = model.backward(&cache, &d_features, &d_w)?;
    Ok(StepOutput { loss, grads, logits })
}

/// Evaluation-mode predictions (argmax of unperturbed, margin-free logits).
pub fn predict(model: &Model, family: LossFamily, inputs: &Matrix) -> Result<Vec<usize>> {
    let (features, _) = model.forward(inputs)?;
    let scores = classifier_scores(&features, model.classifier(), family)?;
    Ok(argmax_rows(scores.values()))
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
