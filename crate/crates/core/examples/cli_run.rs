// Driving the command-line front end in-process: generate, train, report.

pub fn run_example() -> gcl::Result<()> {
    let dir = std::env::temp_dir().join(format!("gcl_cli_example_{}", std::process::id()));
    let config = dir.join("tiny.ini");
    std::fs::create_dir_all(&dir).map_err(|e| gcl::Error::Config(e.to_string()))?;
    std::fs::write(
        &config,
        "[data]\nn_max=60\nimbalance_ratio=10\nclasses=4\ninput_dim=8\ntest_per_class=20\n\
         [model]\nhidden=16\nfeature_dim=8\n\
         [train]\nstage1_iters=80\nstage2_iters=20\nbatch_size=16\n",
    )
    .map_err(|e| gcl::Error::Config(e.to_string()))?;

    let cfg = config.to_string_lossy().into_owned();
    let mut runs = Vec::new();
    for loss in ["ce", "gcl-e", "gcl-a"] {
        let out = dir.join(loss).to_string_lossy().into_owned();
        let code = gcl::cli::main_with_args(["gcl", "--config", &cfg, "--loss", loss, "--out", &out, "train"]);
        assert_eq!(code, 0);
        runs.push(out);
    }
    let mut args = vec!["gcl".to_string(), "report".to_string()];
    args.extend(runs);
    assert_eq!(gcl::cli::main_with_args(args), 0);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

#[allow(dead_code)]
fn main() -> gcl::Result<()> {
    run_example()
}
