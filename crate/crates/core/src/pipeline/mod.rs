//! Two-stage training: representation learning on the long-tailed data
//! with the configured loss, then classifier retraining with a re-balancing
//! sampler while the backbone stays frozen.
//!
//! Iterations are counted globally: `0..I_0` is stage 1 and
//! `I_0..I_0 + I_1` is stage 2. The learning-rate schedule uses the global
//! counter.
//!
//! Random streams, all derived from `TrainConfig::seed`:
//! stream 2 drives stage-1 batches and noise, stream 3 drives stage 2.
//! The classifier velocity is reset when stage 2 begins.

mod checkpoint;
mod metrics;

use std::path::Path;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use metrics::{evaluate, evaluate_predictions, parse_summary, GroupPolicy, Groups, MetricsReport};

use crate::datagen::{write_labeled_csv, Dataset};
use crate::error::{Error, Result};
use crate::losses::{GaussianCloudConfig, LossFamily, LossHead, LossSpec};
use crate::model::{sgd_step, GradientSet, Model};
use crate::numerics::{Matrix, Rng};
use crate::objective::loss_and_gradients;
use crate::sampling::{draw_batch, sampling_probabilities, SampleProbabilities, SamplerSpec};
use crate::schedules::{CloudSchedule, ScheduleKind};

pub const STAGE1_STREAM: u64 = 2;
pub const STAGE2_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage1_iters: u64,
    pub stage2_iters: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub milestones: Vec<u64>,
    pub gamma: f64,
    pub warmup_iters: u64,
    pub momentum: f64,
    pub loss: LossFamily,
    pub cloud: GaussianCloudConfig,
    pub schedule: ScheduleKind,
    pub stage2_sampler: SamplerSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage1_iters: 3000,
            stage2_iters: 500,
            batch_size: 64,
            base_lr: 0.1,
            milestones: vec![2400],
            gamma: 0.1,
            warmup_iters: 0,
            momentum: 0.9,
            loss: LossFamily::GclE,
            cloud: GaussianCloudConfig::default(),
            schedule: ScheduleKind::Logarithmic,
            stage2_sampler: SamplerSpec::ClassBalanced,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn total_iters(&self) -> u64 {
        self.stage1_iters + self.stage2_iters
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return bad(format!("learning rate must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad("milestones must be strictly increasing".into());
        }
        if let Some(&last) = self.milestones.last() {
            if last >= self.total_iters() {
                return bad(format!(
                    "milestone {last} is not below the total of {} iterations",
                    self.total_iters()
                ));
            }
        }
        self.stage2_sampler
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.loss.is_cosine() {
            self.cloud.validate()?;
        }
        Ok(())
    }

    pub fn loss_spec(&self, data: &Dataset) -> LossSpec {
        LossSpec::new(self.loss)
            .with_cloud(self.cloud.clone())
            .with_schedule(CloudSchedule::new(data.profile(), self.schedule))
    }

    /// `key=value` lines describing this configuration.
    pub fn echo(&self) -> String {
        let milestones: Vec<String> = self.milestones.iter().map(u64::to_string).collect();
        format!(
            "stage1_iters={}\nstage2_iters={}\nbatch_size={}\nlr={}\nmilestones={}\ngamma={}\nwarmup={}\nmomentum={}\nloss={}\nschedule={}\nsampler={}\nscale={}\nmu={}\nsigma={}\nclamp_lo={}\nclamp_hi={}\nangular_scale={}\nper_class_draw={}\nseed={}\n",
            self.stage1_iters,
            self.stage2_iters,
            self.batch_size,
            self.base_lr,
            milestones.join(","),
            self.gamma,
            self.warmup_iters,
            self.momentum,
            self.loss,
            self.schedule,
            self.stage2_sampler,
            self.cloud.scale,
            self.cloud.mu,
            self.cloud.sigma,
            self.cloud.clamp_lo,
            self.cloud.clamp_hi,
            self.cloud.angular_scale,
            self.cloud.per_class_draw,
            self.seed,
        )
    }
}

/// Linear warmup from 0, then `base · γ^(milestones passed)`.
pub fn lr_at(config: &TrainConfig, iteration: u64) -> f64 {
    if config.warmup_iters > 0 && iteration < config.warmup_iters {
        return config.base_lr * iteration as f64 / config.warmup_iters as f64;
    }
    let passed = config.milestones.iter().filter(|&&m| iteration >= m).count();
    config.base_lr * config.gamma.powi(passed as i32)
}

/// Mutable training state; everything needed to resume bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub model: Model,
    pub velocity: GradientSet,
    pub rng: Rng,
    pub iteration: u64,
}

impl TrainerState {
    /// Fresh state at iteration 0.
    pub fn new(model: Model, seed: u64) -> Self {
        let velocity = GradientSet::zeros_like(&model);
        TrainerState {
            model,
            velocity,
            rng: Rng::new(seed).derive(STAGE1_STREAM),
            iteration: 0,
        }
    }
}

/// Drives both stages over one training set.
pub struct Trainer<'a> {
    config: TrainConfig,
    data: &'a Dataset,
    head: LossHead,
    stage1_probs: SampleProbabilities,
    stage2_probs: SampleProbabilities,
    state: TrainerState,
    loss_trace: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a Dataset, model: Model) -> Result<Self> {
        let state = TrainerState::new(model, config.seed);
        Trainer::resume(config, data, state)
    }

    pub fn resume(config: TrainConfig, data: &'a Dataset, state: TrainerState) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset("training set is empty".into()));
        }
        if data.num_classes() != state.model.num_classes() {
            return Err(Error::Shape(format!(
                "data has {} classes, model has {}",
                data.num_classes(),
                state.model.num_classes()
            )));
        }
        if data.dim() != state.model.input_dim() {
            return Err(Error::Shape(format!(
                "data has width {}, model expects {}",
                data.dim(),
                state.model.input_dim()
            )));
        }
        let head = LossHead::new(&config.loss_spec(data), data.profile())?;
        let stage1_probs = sampling_probabilities(data.labels(), data.profile(), SamplerSpec::InstanceBalanced)?;
        let stage2_probs = sampling_probabilities(data.labels(), data.profile(), config.stage2_sampler)?;
        Ok(Trainer {
            config,
            data,
            head,
            stage1_probs,
            stage2_probs,
            state,
            loss_trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn into_state(self) -> TrainerState {
        self.state
    }

    pub fn model(&self) -> &Model {
        &self.state.model
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    /// Per-iteration losses recorded by this trainer (not across resumes).
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub fn head(&self) -> &LossHead {
        &self.head
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.config.total_iters()
    }

    /// One iteration of whichever stage the counter is in.
    pub fn step(&mut self) -> Result<f64> {
        let it = self.state.iteration;
        if it >= self.config.total_iters() {
            return Err(Error::Contract("training already finished".into()));
        }
        let stage2 = it >= self.config.stage1_iters;
        if stage2 && it == self.config.stage1_iters {
            self.state.rng = Rng::new(self.config.seed).derive(STAGE2_STREAM);
            self.state.velocity.classifier = Matrix::zeros(
                self.state.velocity.classifier.rows(),
                self.state.velocity.classifier.cols(),
            );
        }
        let probs = if stage2 { &self.stage2_probs } else { &self.stage1_probs };
        let idx = draw_batch(probs, self.config.batch_size, &mut self.state.rng, true)?;
        let (inputs, labels) = self.data.batch(&idx);
        let epsilon = self.head.draw_epsilon(labels.len(), &mut self.state.rng, true)?;
        let out = loss_and_gradients(&self.state.model, &self.head, &inputs, &labels, epsilon, true)?;
        let lr = lr_at(&self.config, it);
        if !out.loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, lr });
        }
        sgd_step(
            &mut self.state.model,
            &out.grads,
            lr,
            self.config.momentum,
            &mut self.state.velocity,
            stage2,
        )?;
        if !self.state.model.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, lr });
        }
        self.state.iteration += 1;
        self.loss_trace.push(out.loss);
        Ok(out.loss)
    }

    /// Steps until the global counter reaches `target` (capped at the total).
    pub fn run_until(&mut self, target: u64) -> Result<()> {
        let target = target.min(self.config.total_iters());
        while self.state.iteration < target {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_stage1(&mut self) -> Result<()> {
        self.run_until(self.config.stage1_iters)
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.run_until(self.config.total_iters())
    }
}

/// Stage 1 alone: returns the trained model and the per-iteration losses.
pub fn train_stage1(config: &TrainConfig, data: &Dataset, model: Model) -> Result<(Model, Vec<f64>)> {
    let mut trainer = Trainer::new(config.clone(), data, model)?;
    trainer.run_stage1()?;
    let trace = trainer.loss_trace().to_vec();
    Ok((trainer.into_state().model, trace))
}

/// Stage 2 alone, starting from a stage-1 model: the backbone is frozen and
/// only the classifier moves. Matches the second half of an uninterrupted run.
pub fn retrain_classifier(config: &TrainConfig, data: &Dataset, model: Model) -> Result<Model> {
    let mut state = TrainerState::new(model, config.seed);
    state.iteration = config.stage1_iters;
    let mut trainer = Trainer::resume(config.clone(), data, state)?;
    trainer.run_to_end()?;
    Ok(trainer.into_state().model)
}

/// Features of `inputs` as CSV (`label,f0,...`), in row order.
pub fn export_embeddings_raw(model: &Model, inputs: &Matrix, labels: &[usize], path: &Path) -> Result<()> {
    if inputs.rows() != labels.len() {
        return Err(Error::Shape("inputs and labels differ in length".into()));
    }
    let features = if inputs.rows() == 0 {
        Matrix::zeros(0, model.feature_dim())
    } else {
        model.forward(inputs)?.0
    };
    write_labeled_csv(path, "f", &features, labels)
}

pub fn export_embeddings(model: &Model, data: &Dataset, path: &Path) -> Result<()> {
    export_embeddings_raw(model, data.features(), data.labels(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let mut c = TrainConfig {
            base_lr: 0.2,
            milestones: vec![100, 200],
            gamma: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(&c, 0), 0.2);
        assert_eq!(lr_at(&c, 99), 0.2);
        assert!((lr_at(&c, 100) - 0.02).abs() < 1e-15);
        assert!((lr_at(&c, 250) - 0.002).abs() < 1e-15);
        c.warmup_iters = 10;
        assert_eq!(lr_at(&c, 5), 0.1);
        assert_eq!(lr_at(&c, 0), 0.0);
        assert_eq!(lr_at(&c, 10), 0.2);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        let bad = [
            TrainConfig {
                batch_size: 0,
                ..ok.clone()
            },
            TrainConfig {
                milestones: vec![5, 5],
                ..ok.clone()
            },
            TrainConfig {
                milestones: vec![3500],
                ..ok.clone()
            },
            TrainConfig {
                momentum: 1.0,
                ..ok.clone()
            },
            TrainConfig {
                base_lr: 0.0,
                ..ok.clone()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }
}
