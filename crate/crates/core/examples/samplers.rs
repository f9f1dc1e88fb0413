// Re-balancing samplers for classifier retraining.

use gcl::datagen::exponential_profile;
use gcl::numerics::Rng;
use gcl::sampling::{draw_batch, effective_numbers, sampling_probabilities, SamplerSpec};

pub fn run_example() -> gcl::Result<()> {
    let profile = exponential_profile(500, 100.0, 5)?;
    let labels: Vec<usize> = profile
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(j, &n)| std::iter::repeat_n(j, n))
        .collect();
    println!("counts {:?}", profile.counts());

    for spec in ["ibs", "srs", "cbs", "ens:0.99"] {
        let spec: SamplerSpec = spec.parse()?;
        let probs = sampling_probabilities(&labels, &profile, spec)?;
        let mass: Vec<String> = probs.class_totals().iter().map(|p| format!("{p:.3}")).collect();
        println!("{spec:<9} class mass [{}]", mass.join(", "));
    }

    println!("effective numbers (beta 0.99) {:?}", effective_numbers(&profile, 0.99)?);

    let cbs = sampling_probabilities(&labels, &profile, SamplerSpec::ClassBalanced)?;
    let batch = draw_batch(&cbs, 20, &mut Rng::new(3), true)?;
    let drawn: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
    println!("one class-balanced batch of labels {drawn:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
