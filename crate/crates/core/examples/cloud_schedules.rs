// Per-class cloud sizes: rarer classes get larger perturbations.

use gcl::datagen::ClassProfile;
use gcl::schedules::{CloudSchedule, ScheduleKind};

pub fn run_example() -> gcl::Result<()> {
    let profile = ClassProfile::new(vec![5000, 500, 50])?;
    for kind in ["log", "pow:1/3", "pow:1/4", "cos"] {
        let kind: ScheduleKind = kind.parse()?;
        let s = CloudSchedule::new(&profile, kind);
        println!("{kind:<8} raw {:?}\n{:<8} delta {:?}", s.raw(), "", s.normalized());
    }
    let log = CloudSchedule::new(&profile, ScheduleKind::Logarithmic);
    assert_eq!(log.normalized(), &[0.0, 0.5, 1.0]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
