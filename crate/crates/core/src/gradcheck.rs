//! End-to-end finite-difference check of the analytic gradients.
//!
//! Each instance builds a small random model, batch and class profile,
//! draws the noise once, and compares the analytic gradient of every
//! parameter with a central difference. The error of an instance is
//! `‖analytic - numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)` over all parameters.

use crate::datagen::ClassProfile;
use crate::error::Result;
use crate::losses::{GaussianCloudConfig, LossFamily, LossHead, LossSpec};
use crate::model::Model;
use crate::numerics::{Matrix, Rng};
use crate::objective::{loss_and_gradients, loss_value};
use crate::schedules::{CloudSchedule, ScheduleKind};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceShape {
    pub feature_dim: usize,
    pub classes: usize,
    pub batch: usize,
}

/// The shapes cycled through by [`check_family`].
pub const SHAPES: [InstanceShape; 8] = {
    let mut out = [InstanceShape {
        feature_dim: 0,
        classes: 0,
        batch: 0,
    }; 8];
    let dims = [4, 16];
    let classes = [3, 10];
    let batches = [1, 8];
    let mut k = 0;
    while k < 8 {
        out[k] = InstanceShape {
            feature_dim: dims[k & 1],
            classes: classes[(k >> 1) & 1],
            batch: batches[(k >> 2) & 1],
        };
        k += 1;
    }
    out
};

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyReport {
    pub family: LossFamily,
    pub instances: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl FamilyReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

/// Relative error of one random instance.
pub fn check_instance(family: LossFamily, shape: InstanceShape, step: f64, rng: &mut Rng) -> Result<f64> {
    let input_dim = 5;
    let mut model = Model::new(input_dim, &[6], shape.feature_dim, shape.classes, rng)?;
    let inputs = Matrix::from_fn(shape.batch, input_dim, |_, _| rng.standard_normal());
    let labels: Vec<usize> = (0..shape.batch).map(|_| rng.below(shape.classes)).collect();
    let counts: Vec<usize> = (0..shape.classes).map(|_| 1 + rng.below(500)).collect();
    let profile = ClassProfile::new(counts)?;
    let spec = LossSpec::new(family)
        .with_cloud(GaussianCloudConfig::default())
        .with_schedule(CloudSchedule::new(&profile, ScheduleKind::Logarithmic));
    let head = LossHead::new(&spec, &profile)?;
    let epsilon = head.draw_epsilon(shape.batch, rng, true)?;

    let analytic = loss_and_gradients(&model, &head, &inputs, &labels, epsilon.clone(), true)?
        .grads
        .flatten();

    let mut numeric = Vec::with_capacity(analytic.len());
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let orig = model.tensors()[t][k];
            model.tensors_mut()[t][k] = orig + step;
            let plus = loss_value(&model, &head, &inputs, &labels, &epsilon, true)?;
            model.tensors_mut()[t][k] = orig - step;
            let minus = loss_value(&model, &head, &inputs, &labels, &epsilon, true)?;
            model.tensors_mut()[t][k] = orig;
            numeric.push((plus - minus) / (2.0 * step));
        }
    }

    let diff = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let denom = na.max(nn);
    Ok(if denom == 0.0 { 0.0 } else { diff / denom })
}

/// Runs `instances` random instances of one family, cycling through [`SHAPES`].
pub fn check_family(
    family: LossFamily,
    instances: usize,
    step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<FamilyReport> {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let err = check_instance(family, SHAPES[k % SHAPES.len()], step, &mut rng)?;
        worst = worst.max(err);
    }
    Ok(FamilyReport {
        family,
        instances,
        max_relative_error: worst,
        tolerance,
    })
}

/// Every loss family with the default step and tolerance.
pub fn check_all(instances: usize, seed: u64) -> Result<Vec<FamilyReport>> {
    LossFamily::all()
        .iter()
        .enumerate()
        .map(|(k, &family)| {
            check_family(
                family,
                instances,
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
                seed.wrapping_add(k as u64),
            )
        })
        .collect()
}

/// Plain-text table, one line per family.
pub fn format_table(reports: &[FamilyReport]) -> String {
    let mut out = format!(
        "{:<20} {:>9} {:>14} {:>6}\n",
        "family", "instances", "max_rel_error", "status"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<20} {:>9} {:>14.3e} {:>6}\n",
            r.family.to_string(),
            r.instances,
            r.max_relative_error,
            if r.passed() { "PASS" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_cover_grid() {
        let mut seen: Vec<_> = SHAPES.iter().map(|s| (s.feature_dim, s.classes, s.batch)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn single_instance_per_family() {
        for family in LossFamily::all() {
            let err = check_instance(family, SHAPES[3], DEFAULT_STEP, &mut Rng::new(17)).unwrap();
            assert!(err <= DEFAULT_TOLERANCE, "{family}: {err}");
        }
    }
}
