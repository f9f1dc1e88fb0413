mod profiles_and_data {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/profiles_and_data.rs"));
}

#[test]
fn profiles_and_data_runs() {
    profiles_and_data::run_example().expect("profiles_and_data example should run");
}

mod cloud_schedules {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cloud_schedules.rs"));
}

#[test]
fn cloud_schedules_runs() {
    cloud_schedules::run_example().expect("cloud_schedules example should run");
}

mod samplers {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/samplers.rs"));
}

#[test]
fn samplers_runs() {
    samplers::run_example().expect("samplers example should run");
}

mod gcl_logits {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gcl_logits.rs"));
}

#[test]
fn gcl_logits_runs() {
    gcl_logits::run_example().expect("gcl_logits example should run");
}

mod gradient_check {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/gradient_check.rs"));
}

#[test]
fn gradient_check_runs() {
    gradient_check::run_example().expect("gradient_check example should run");
}

mod two_stage_training {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/two_stage_training.rs"));
}

#[test]
fn two_stage_training_runs() {
    two_stage_training::run_example().expect("two_stage_training example should run");
}

mod checkpoint_resume {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/checkpoint_resume.rs"));
}

#[test]
fn checkpoint_resume_runs() {
    checkpoint_resume::run_example().expect("checkpoint_resume example should run");
}

mod cli_run {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/cli_run.rs"));
}

#[test]
fn cli_run_runs() {
    cli_run::run_example().expect("cli_run example should run");
}
