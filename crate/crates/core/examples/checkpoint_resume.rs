// Interrupt a run, save it, resume it, and land on the same parameters.

use gcl::datagen::{exponential_profile, generate_synthetic, SyntheticSpec};
use gcl::model::Model;
use gcl::numerics::Rng;
use gcl::pipeline::{load_checkpoint, save_checkpoint, TrainConfig, Trainer};

pub fn run_example() -> gcl::Result<()> {
    let profile = exponential_profile(100, 10.0, 4)?;
    let spec = SyntheticSpec {
        dim: 8,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&profile, &spec, &mut Rng::new(5))?;
    let config = TrainConfig {
        stage1_iters: 60,
        stage2_iters: 20,
        batch_size: 16,
        milestones: vec![50],
        seed: 5,
        ..TrainConfig::default()
    };
    let fresh = || Model::new(8, &[16], 8, 4, &mut Rng::new(5).derive(1));

    let mut straight = Trainer::new(config.clone(), &data.train, fresh()?)?;
    straight.run_to_end()?;

    let path = std::env::temp_dir().join(format!("gcl_resume_{}.bin", std::process::id()));
    let mut first = Trainer::new(config.clone(), &data.train, fresh()?)?;
    first.run_until(45)?;
    save_checkpoint(first.state(), &path)?;
    drop(first);

    let mut resumed = Trainer::resume(config, &data.train, load_checkpoint(&path)?)?;
    std::fs::remove_file(&path).ok();
    resumed.run_to_end()?;

    assert_eq!(resumed.model().tensors(), straight.model().tensors());
    println!(
        "resumed at 45, finished at {}: parameters identical",
        resumed.iteration()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
