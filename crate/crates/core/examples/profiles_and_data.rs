// Long-tailed class profiles and the synthetic Gaussian-blob benchmark.

use gcl::datagen::{exponential_profile, generate_synthetic, load_dataset, SyntheticSpec};
use gcl::numerics::Rng;

pub fn run_example() -> gcl::Result<()> {
    let profile = exponential_profile(500, 100.0, 10)?;
    println!("{}", profile.summary());
    assert_eq!(profile.n_max(), 500);
    assert_eq!(profile.n_min(), 5);

    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&profile, &spec, &mut Rng::new(7))?;
    println!(
        "train {} x {}, test {} x {}",
        data.train.len(),
        data.train.dim(),
        data.test.len(),
        data.test.dim()
    );

    let path = std::env::temp_dir().join(format!("gcl_profiles_{}.csv", std::process::id()));
    data.train.save_csv(&path)?;
    let back = load_dataset(&path)?;
    std::fs::remove_file(&path).ok();
    assert_eq!(back.profile(), data.train.profile());
    assert!(back.features().bits_eq(data.train.features()));
    println!("csv roundtrip ok");
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
