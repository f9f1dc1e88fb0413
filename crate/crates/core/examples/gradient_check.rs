// Finite-difference check of the full backward pass for every loss family.

use gcl::gradcheck::{check_all, format_table};

pub fn run_example() -> gcl::Result<()> {
    let reports = check_all(4, 11)?;
    print!("{}", format_table(&reports));
    assert!(reports.iter().all(|r| r.passed()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
