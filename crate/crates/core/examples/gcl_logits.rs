// Gaussian clouded logits next to the fixed-margin baselines.

use gcl::datagen::ClassProfile;
use gcl::losses::{softmax_ce, LossFamily, LossHead, LossSpec};
use gcl::numerics::{Matrix, Rng};
use gcl::schedules::{CloudSchedule, ScheduleKind};

pub fn run_example() -> gcl::Result<()> {
    let profile = ClassProfile::new(vec![400, 40, 4])?;
    let schedule = CloudSchedule::new(&profile, ScheduleKind::Logarithmic);
    println!("cloud sizes {:?}", schedule.normalized());

    // Scores of two samples against three anchors; cross-entropy reads them as raw logits.
    let cos = Matrix::from_rows(&[vec![0.8, 0.1, -0.2], vec![0.0, 0.3, 0.6]])?;
    let labels = [0, 2];

    for family in LossFamily::all() {
        let spec = LossSpec::new(family).with_schedule(schedule.clone());
        let head = LossHead::new(&spec, &profile)?;
        let train = head.logits(&cos, &labels, &mut Rng::new(1), true)?;
        let eval = head.logits(&cos, &labels, &mut Rng::new(1), false)?;
        let (loss, _) = softmax_ce(&train.logits, &labels)?;
        println!(
            "{:<18} train row0 {:>8.3?} eval row0 {:>8.3?} loss {loss:.4}",
            family.to_string(),
            train.logits.row(0),
            eval.logits.row(0)
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
