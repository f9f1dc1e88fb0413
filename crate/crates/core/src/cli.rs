//! `gcl` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure, 5 I/O error. Failures print one line to stderr:
//! `error kind=<kind> code=<code> message=<message>`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{DataSource, RunConfig};
use crate::datagen::{exponential_profile, generate_synthetic, load_dataset_with_classes, Dataset, Split};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::losses::LossFamily;
use crate::model::Model;
use crate::numerics::Rng;
use crate::pipeline::{
    evaluate, export_embeddings, load_checkpoint, lr_at, parse_summary, save_checkpoint, MetricsReport, Trainer,
};

#[derive(Debug, Parser)]
#[command(
    name = "gcl",
    version,
    about = "Gaussian clouded logit training for long-tailed classification"
)]
pub struct Cli {
    /// Run configuration file (key=value with [section] headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Loss family: ce | cosface:<m> | arcface-style:<m> | ldam:<max_margin> | gcl-e | gcl-a
    #[arg(long, global = true)]
    pub loss: Option<String>,
    /// Stage-2 sampler: ibs | srs | cbs | ens:<beta>
    #[arg(long, global = true)]
    pub sampler: Option<String>,
    /// Cloud-size schedule: log | pow:1/3 | pow:1/4 | cos
    #[arg(long, global = true)]
    pub schedule: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the training and test splits as CSV.
    Generate,
    /// Run both training stages and write checkpoints, loss trace and metrics.
    Train {
        /// Continue from a checkpoint written by an earlier run with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        /// Defaults to `<out>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare finished runs.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// What to print on stdout; with --out both forms are written.
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
    /// Finite-difference check of every loss family.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

/// Parses `args`, runs the command, prints output, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error kind=config code=2 message={first}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} code={} message={msg}", e.kind(), e.exit_code());
            e.exit_code()
        }
    }
}

/// Resolved configuration after applying command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io { path, .. } => Error::Config(format!("cannot read config {}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(l) = &cli.loss {
        cfg.train.loss = l.parse()?;
    }
    if let Some(s) = &cli.sampler {
        cfg.train.stage2_sampler = s.parse()?;
    }
    if let Some(s) = &cli.schedule {
        cfg.train.schedule = s.parse()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<String> {
    if let Command::Report { runs, format } = &cli.command {
        return report(runs, cli.out.as_deref(), *format);
    }
    if let Command::Gradcheck { instances } = &cli.command {
        return run_gradcheck(*instances, cli.seed.unwrap_or(0), cli.out.as_deref());
    }
    let cfg = resolve_config(cli)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Generate => generate(&cfg, &out),
        Command::Train { resume } => train(&cfg, &out, resume.as_deref()),
        Command::Eval { checkpoint } => {
            let ckpt = checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.bin"));
            eval(&cfg, &out, &ckpt)
        }
        Command::Report { .. } | Command::Gradcheck { .. } => unreachable!(),
    }
}

/// Writes `bytes` to `<path>.partial`, then renames it into place.
fn write_atomic(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Training and test splits for a configuration. Synthetic data draws from
/// `Rng::new(seed)`.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Synthetic {
            n_max,
            imbalance_ratio,
            classes,
            spec,
        } => {
            let profile = exponential_profile(*n_max, *imbalance_ratio, *classes)?;
            let data = generate_synthetic(&profile, spec, &mut Rng::new(cfg.train.seed))?;
            Ok((data.train, data.test))
        }
        DataSource::Csv { train, test } => {
            let train = load_dataset_with_classes(train, None, Split::Train)?;
            let test = load_dataset_with_classes(test, Some(train.num_classes()), Split::Test)?;
            if test.dim() != train.dim() {
                return Err(Error::Shape("train and test feature widths differ".into()));
            }
            Ok((train, test))
        }
    }
}

/// Fresh model for a configuration, initialized from stream 1 of the seed.
pub fn init_model(cfg: &RunConfig, train: &Dataset) -> Result<Model> {
    Model::new(
        train.dim(),
        &cfg.model.hidden,
        cfg.model.feature_dim,
        train.num_classes(),
        &mut Rng::new(cfg.train.seed).derive(1),
    )
}

fn generate(cfg: &RunConfig, out: &Path) -> Result<String> {
    ensure_dir(out)?;
    let (train, test) = load_data(cfg)?;
    let write_csv = |d: &Dataset, name: &str| -> Result<()> {
        let tmp = out.join(format!("{name}.partial"));
        d.save_csv(&tmp)?;
        fs::rename(&tmp, out.join(name)).map_err(|e| Error::io(out.join(name), e))
    };
    write_csv(&train, "train.csv")?;
    write_csv(&test, "test.csv")?;
    let summary = train.profile().summary();
    write_atomic(&out.join("profile.txt"), &summary)?;
    write_atomic(&out.join("config.ini"), cfg.to_ini_string())?;
    Ok(format!(
        "wrote {} train and {} test samples to {}\n{summary}",
        train.len(),
        test.len(),
        out.display()
    ))
}

fn metrics_for(cfg: &RunConfig, model: &Model, test: &Dataset, train: &Dataset) -> Result<MetricsReport> {
    Ok(evaluate(model, cfg.train.loss, test, train.profile(), cfg.groups)?
        .with_run_info(cfg.train.echo(), cfg.train.seed))
}

fn train(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<String> {
    ensure_dir(out)?;
    let (train, test) = load_data(cfg)?;
    write_atomic(&out.join("config.ini"), cfg.to_ini_string())?;

    let mut trainer = match resume {
        Some(path) => Trainer::resume(cfg.train.clone(), &train, load_checkpoint(path)?)?,
        None => Trainer::new(cfg.train.clone(), &train, init_model(cfg, &train)?)?,
    };
    let start = trainer.iteration();
    let mut trace = String::from("iteration,stage,lr,loss\n");
    let mut summary = String::new();

    let stage1_end = cfg.train.stage1_iters;
    let total = cfg.train.total_iters();
    while !trainer.is_done() {
        let it = trainer.iteration();
        let loss = trainer.step()?;
        let stage = if it < stage1_end { 1 } else { 2 };
        let _ = writeln!(trace, "{it},{stage},{},{loss}", lr_at(&cfg.train, it));
        let done = trainer.iteration();
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < total {
            save_checkpoint(trainer.state(), &out.join("checkpoint_latest.bin"))?;
        }
        if done == stage1_end && cfg.train.stage2_iters > 0 {
            save_checkpoint(trainer.state(), &out.join("checkpoint_stage1.bin"))?;
            let m = metrics_for(cfg, trainer.model(), &test, &train)?;
            write_atomic(&out.join("metrics_stage1.txt"), m.to_text())?;
            let _ = writeln!(
                summary,
                "stage1 overall_accuracy={} tail_accuracy={:?}",
                m.overall_accuracy, m.tail_accuracy
            );
        }
    }
    write_atomic(&out.join("loss_trace.csv"), trace)?;
    save_checkpoint(trainer.state(), &out.join("checkpoint.bin"))?;
    let m = metrics_for(cfg, trainer.model(), &test, &train)?;
    write_atomic(&out.join("metrics.txt"), m.to_text())?;
    write_atomic(&out.join("metrics.csv"), m.to_csv())?;
    if cfg.export_embeddings {
        let tmp = out.join("embeddings_test.csv.partial");
        export_embeddings(trainer.model(), &test, &tmp)?;
        fs::rename(&tmp, out.join("embeddings_test.csv")).map_err(|e| Error::io(out, e))?;
    }
    let _ = writeln!(
        summary,
        "trained iterations {start}..{total} loss={} overall_accuracy={} head={:?} middle={:?} tail={:?}",
        cfg.train.loss, m.overall_accuracy, m.head_accuracy, m.middle_accuracy, m.tail_accuracy
    );
    let _ = writeln!(summary, "artifacts in {}", out.display());
    Ok(summary)
}

fn eval(cfg: &RunConfig, out: &Path, checkpoint: &Path) -> Result<String> {
    let state = load_checkpoint(checkpoint)?;
    let (train, test) = load_data(cfg)?;
    if state.model.num_classes() != train.num_classes() || state.model.input_dim() != train.dim() {
        return Err(Error::Shape("checkpoint does not match the configured data".into()));
    }
    let m = metrics_for(cfg, &state.model, &test, &train)?;
    ensure_dir(out)?;
    write_atomic(&out.join("eval_metrics.txt"), m.to_text())?;
    write_atomic(&out.join("eval_metrics.csv"), m.to_csv())?;
    Ok(m.to_text())
}

fn run_gradcheck(instances: usize, seed: u64, out: Option<&Path>) -> Result<String> {
    if instances == 0 {
        return Err(Error::Config("instances must be >= 1".into()));
    }
    let reports = gradcheck::check_all(instances, seed)?;
    let table = gradcheck::format_table(&reports);
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(&dir.join("gradcheck.txt"), &table)?;
    }
    if reports.iter().all(|r| r.passed()) {
        Ok(table)
    } else {
        eprint!("{table}");
        Err(Error::Contract("gradient check failed".into()))
    }
}

#[derive(Debug, Clone)]
struct RunRow {
    name: String,
    loss: String,
    sampler: String,
    stage2_iters: String,
    ratio: String,
    overall: f64,
    head: String,
    middle: String,
    tail: String,
    stage1_overall: Option<f64>,
    stage1_tail: Option<String>,
}

fn read_run(dir: &Path) -> Result<RunRow> {
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    let cfg = RunConfig::from_ini_str(&read("config.ini")?)?;
    let kv = parse_summary(&read("metrics.txt")?);
    let get = |kv: &[(String, String)], k: &str| kv.iter().find(|(a, _)| a == k).map(|(_, v)| v.clone());
    let overall = get(&kv, "overall_accuracy")
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("{}: metrics.txt lacks overall_accuracy", dir.display()),
        })?;
    let stage1 = fs::read_to_string(dir.join("metrics_stage1.txt"))
        .ok()
        .map(|t| parse_summary(&t));
    let ratio = match &cfg.data {
        DataSource::Synthetic { imbalance_ratio, .. } => imbalance_ratio.to_string(),
        DataSource::Csv { .. } => "csv".to_string(),
    };
    Ok(RunRow {
        name: dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        loss: cfg.train.loss.to_string(),
        sampler: cfg.train.stage2_sampler.to_string(),
        stage2_iters: cfg.train.stage2_iters.to_string(),
        ratio,
        overall,
        head: get(&kv, "head_accuracy").unwrap_or_default(),
        middle: get(&kv, "middle_accuracy").unwrap_or_default(),
        tail: get(&kv, "tail_accuracy").unwrap_or_default(),
        stage1_overall: stage1
            .as_ref()
            .and_then(|s| get(s, "overall_accuracy"))
            .and_then(|v| v.parse().ok()),
        stage1_tail: stage1.as_ref().and_then(|s| get(s, "tail_accuracy")),
    })
}

fn pct(v: &str) -> String {
    v.parse::<f64>()
        .map_or_else(|_| "-".into(), |x| format!("{:.2}", 100.0 * x))
}

/// Comparison table across run directories. Input directories are only read.
fn report(runs: &[PathBuf], out: Option<&Path>, format: ReportFormat) -> Result<String> {
    if let Some(o) = out {
        let same = |a: &Path, b: &Path| match (a.canonicalize(), b.canonicalize()) {
            (Ok(x), Ok(y)) => x == y,
            _ => a == b,
        };
        if runs.iter().any(|r| same(r, o)) {
            return Err(Error::Config("report output must not be one of the input runs".into()));
        }
    }
    let rows = runs.iter().map(|r| read_run(r)).collect::<Result<Vec<_>>>()?;

    // Method × imbalance-ratio grid of mean overall accuracy, CE first.
    let mut ratios: Vec<String> = rows.iter().map(|r| r.ratio.clone()).collect();
    ratios.sort_by(|a, b| {
        a.parse::<f64>()
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.parse::<f64>().unwrap_or(f64::INFINITY))
    });
    ratios.dedup();
    let method = |r: &RunRow| {
        if r.stage2_iters == "0" {
            r.loss.clone()
        } else {
            format!("{} + cRT({})", r.loss, r.sampler)
        }
    };
    let mut methods: Vec<String> = rows.iter().map(method).collect();
    let rank = |m: &str| {
        let fam = m.split(' ').next().unwrap_or(m);
        match fam.parse::<LossFamily>() {
            Ok(LossFamily::CrossEntropy) => 0,
            Ok(LossFamily::GclE) => 2,
            Ok(LossFamily::GclA) => 3,
            _ => 1,
        }
    };
    methods.sort_by(|a, b| rank(a).cmp(&rank(b)).then(a.cmp(b)));
    methods.dedup();

    let mut text = String::from("# top-1 accuracy (%) by imbalance ratio, mean over runs\n");
    let _ = write!(text, "{:<32}", "method");
    for r in &ratios {
        let _ = write!(text, " {:>10}", format!("r={r}"));
    }
    text.push('\n');
    for m in &methods {
        let _ = write!(text, "{m:<32}");
        for r in &ratios {
            let sel: Vec<f64> = rows
                .iter()
                .filter(|x| &method(x) == m && &x.ratio == r)
                .map(|x| x.overall)
                .collect();
            if sel.is_empty() {
                let _ = write!(text, " {:>10}", "-");
            } else {
                let mean = sel.iter().sum::<f64>() / sel.len() as f64;
                let _ = write!(text, " {:>10.2}", 100.0 * mean);
            }
        }
        text.push('\n');
    }

    text.push_str("\n# per run\n");
    let _ = writeln!(
        text,
        "{:<24} {:<32} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}",
        "run", "method", "overall", "head", "middle", "tail", "s1_overall", "s1_tail"
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<24} {:<32} {:>8.2} {:>8} {:>8} {:>8} {:>10} {:>10}",
            r.name,
            method(r),
            100.0 * r.overall,
            pct(&r.head),
            pct(&r.middle),
            pct(&r.tail),
            r.stage1_overall
                .map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v)),
            r.stage1_tail.as_deref().map_or_else(|| "-".into(), pct),
        );
    }
    let mut csv =
        String::from("run,method,loss,sampler,imbalance_ratio,overall,head,middle,tail,stage1_overall,stage1_tail\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            method(r),
            r.loss,
            r.sampler,
            r.ratio,
            r.overall,
            r.head,
            r.middle,
            r.tail,
            r.stage1_overall.map_or_else(String::new, |v| v.to_string()),
            r.stage1_tail.clone().unwrap_or_default(),
        );
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_atomic(&dir.join("report.txt"), &text)?;
        write_atomic(&dir.join("report.csv"), &csv)?;
    }
    Ok(match format {
        ReportFormat::Text => text,
        ReportFormat::Csv => csv,
    })
}
