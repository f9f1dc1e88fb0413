// GCL-E representation learning followed by class-balanced classifier
// retraining on a small synthetic long-tailed set.

use gcl::datagen::{exponential_profile, generate_synthetic, SyntheticSpec};
use gcl::losses::LossFamily;
use gcl::model::Model;
use gcl::numerics::Rng;
use gcl::pipeline::{evaluate, GroupPolicy, TrainConfig, Trainer};

pub fn run_example() -> gcl::Result<()> {
    let profile = exponential_profile(200, 20.0, 6)?;
    let spec = SyntheticSpec {
        dim: 16,
        class_spread: 0.3,
        test_per_class: 50,
    };
    let data = generate_synthetic(&profile, &spec, &mut Rng::new(0))?;

    let config = TrainConfig {
        stage1_iters: 400,
        stage2_iters: 100,
        batch_size: 32,
        milestones: vec![320],
        loss: LossFamily::GclE,
        ..TrainConfig::default()
    };
    let model = Model::new(16, &[32], 16, 6, &mut Rng::new(0).derive(1))?;
    let mut trainer = Trainer::new(config.clone(), &data.train, model)?;

    trainer.run_stage1()?;
    let before = evaluate(trainer.model(), config.loss, &data.test, &profile, GroupPolicy::Auto)?;
    let frozen = trainer.model().backbone_bytes();
    trainer.run_to_end()?;
    let after = evaluate(trainer.model(), config.loss, &data.test, &profile, GroupPolicy::Auto)?;
    assert_eq!(frozen, trainer.model().backbone_bytes());

    let trace = trainer.loss_trace();
    println!("loss first {:.4} last {:.4}", trace[0], trace[trace.len() - 1]);
    println!(
        "stage 1: overall {:.3} tail {:?}\nstage 2: overall {:.3} tail {:?}",
        before.overall_accuracy, before.tail_accuracy, after.overall_accuracy, after.tail_accuracy
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
