//! Re-balancing samplers: per-sample draw probabilities and batch drawing.

use std::fmt;
use std::str::FromStr;

use crate::datagen::ClassProfile;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SamplerSpec {
    /// Every sample equally likely.
    InstanceBalanced,
    /// Weight `n_j^(-1/2)` per sample.
    SquareRoot,
    /// Weight `1/n_j` per sample, so every class is drawn with rate `1/C`.
    #[default]
    ClassBalanced,
    /// Weight `1/n^en_j` with effective number `(1 - β^n_j)/(1 - β)`.
    EffectiveNumber(f64),
}

impl SamplerSpec {
    pub fn effective_number(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(SamplerSpec::EffectiveNumber(beta))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplerSpec::EffectiveNumber(beta) => check_beta(beta),
            _ => Ok(()),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must lie in [0, 1), got {beta}")))
    }
}

impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerSpec::InstanceBalanced => f.write_str("ibs"),
            SamplerSpec::SquareRoot => f.write_str("srs"),
            SamplerSpec::ClassBalanced => f.write_str("cbs"),
            SamplerSpec::EffectiveNumber(beta) => write!(f, "ens:{beta}"),
        }
    }
}

impl FromStr for SamplerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ibs" => Ok(SamplerSpec::InstanceBalanced),
            "srs" => Ok(SamplerSpec::SquareRoot),
            "cbs" => Ok(SamplerSpec::ClassBalanced),
            other => {
                let beta = other
                    .strip_prefix("ens:")
                    .ok_or_else(|| Error::Config(format!("unknown sampler {other:?}")))?;
                let beta: f64 = beta
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse beta {beta:?}")))?;
                SamplerSpec::effective_number(beta).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}

/// `(1 - β^n_j) / (1 - β)` per class. The constant factor `N` some
/// formulations carry is left out; it cancels under normalization.
pub fn effective_numbers(profile: &ClassProfile, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    Ok(profile
        .counts()
        .iter()
        .map(|&n| {
            // -expm1(n ln β) keeps precision for β close to 1
            let numer = if beta == 0.0 {
                1.0
            } else {
                -((n as f64) * beta.ln()).exp_m1()
            };
            numer / (1.0 - beta)
        })
        .collect())
}

/// Unnormalized weight of one sample of each class.
fn class_weights(profile: &ClassProfile, spec: SamplerSpec) -> Result<Vec<f64>> {
    let counts = profile.counts().iter().map(|&n| n as f64);
    Ok(match spec {
        SamplerSpec::InstanceBalanced => vec![1.0; profile.num_classes()],
        SamplerSpec::SquareRoot => counts.map(|n| 1.0 / n.sqrt()).collect(),
        SamplerSpec::ClassBalanced => counts.map(|n| 1.0 / n).collect(),
        SamplerSpec::EffectiveNumber(beta) => effective_numbers(profile, beta)?.into_iter().map(|e| 1.0 / e).collect(),
    })
}

/// Per-sample draw probabilities; samples of one class share a value.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleProbabilities {
    per_sample: Vec<f64>,
    per_class: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SampleProbabilities {
    pub fn as_slice(&self) -> &[f64] {
        &self.per_sample
    }

    /// Total probability mass of each class.
    pub fn class_totals(&self) -> &[f64] {
        &self.per_class
    }

    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }
}

/// Probabilities for each sample in `labels`, whose histogram must equal `profile`.
pub fn sampling_probabilities(
    labels: &[usize],
    profile: &ClassProfile,
    spec: SamplerSpec,
) -> Result<SampleProbabilities> {
    spec.validate()?;
    let mut hist = vec![0usize; profile.num_classes()];
    for &y in labels {
        *hist
            .get_mut(y)
            .ok_or_else(|| Error::InvalidArgument(format!("label {y} outside the profile's classes")))? += 1;
    }
    if hist != profile.counts() {
        return Err(Error::InvalidArgument(
            "label histogram does not match the class profile".into(),
        ));
    }
    let weights = class_weights(profile, spec)?;
    let total: f64 = profile.counts().iter().zip(&weights).map(|(&n, w)| n as f64 * w).sum();
    let per_sample: Vec<f64> = labels.iter().map(|&y| weights[y] / total).collect();
    let per_class = profile
        .counts()
        .iter()
        .zip(&weights)
        .map(|(&n, w)| n as f64 * w / total)
        .collect();
    let mut acc = 0.0;
    let cumulative = per_sample
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    Ok(SampleProbabilities {
        per_sample,
        per_class,
        cumulative,
    })
}

/// Draws `b` sample indices. With replacement, each index is found by
/// binary search of one uniform against the cumulative distribution.
/// Without replacement, draws are sequential and renormalize over what is left.
pub fn draw_batch(probs: &SampleProbabilities, b: usize, rng: &mut Rng, replacement: bool) -> Result<Vec<usize>> {
    let n = probs.len();
    if b == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no samples to draw from".into()));
    }
    if replacement {
        let total = *probs.cumulative.last().expect("non-empty");
        Ok((0..b)
            .map(|_| {
                let u = rng.uniform() * total;
                probs.cumulative.partition_point(|&c| c <= u).min(n - 1)
            })
            .collect())
    } else {
        if b > n {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {b} distinct samples from {n}"
            )));
        }
        let mut remaining = probs.per_sample.clone();
        let mut left: f64 = remaining.iter().sum();
        let mut out = Vec::with_capacity(b);
        for _ in 0..b {
            let u = rng.uniform() * left;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_live = 0;
            for (i, &p) in remaining.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                last_live = i;
                acc += p;
                if u < acc {
                    pick = Some(i);
                    break;
                }
            }
            let i = pick.unwrap_or(last_live);
            left -= remaining[i];
            remaining[i] = 0.0;
            out.push(i);
        }
        Ok(out)
    }
}
