//! Run configuration in a line-oriented `key=value` format with section
//! headers. Every key is optional; missing keys take the desk-benchmark
//! defaults. Unknown sections or keys are rejected. Text from a `#` or `;`
//! preceded by whitespace to the end of the line is a comment.
//!
//! ```text
//! [run]
//! seed=0
//! checkpoint_every=0
//! export_embeddings=false
//!
//! [data]
//! source=synthetic          # or "csv" with train_path / test_path
//! n_max=500
//! imbalance_ratio=100
//! classes=10
//! input_dim=32
//! class_spread=0.45
//! test_per_class=100
//!
//! [model]
//! hidden=64                 # comma-separated widths, empty for none
//! feature_dim=32
//!
//! [train]
//! stage1_iters=3000
//! stage2_iters=500
//! batch_size=64
//! lr=0.1
//! milestones=2400           # "auto" = 80% of stage 1
//! gamma=0.1
//! warmup=0
//! momentum=0.9
//! loss=gcl-e
//! schedule=log
//! sampler=cbs
//! scale=30
//!
//! [eval]
//! groups=auto
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::pipeline::{GroupPolicy, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        n_max: usize,
        imbalance_ratio: f64,
        classes: usize,
        spec: SyntheticSpec,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            n_max: 500,
            imbalance_ratio: 100.0,
            classes: 10,
            spec: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![64],
            feature_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub groups: GroupPolicy,
    /// Save `checkpoint_latest.bin` every this many iterations (0 = never).
    pub checkpoint_every: u64,
    pub export_embeddings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            groups: GroupPolicy::Auto,
            checkpoint_every: 0,
            export_embeddings: false,
        }
    }
}

/// One milestone at 80% of stage 1, when that is a valid position.
pub fn auto_milestones(stage1_iters: u64, total: u64) -> Vec<u64> {
    let m = stage1_iters * 4 / 5;
    if m > 0 && m < total {
        vec![m]
    } else {
        vec![]
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["seed", "checkpoint_every", "export_embeddings"]),
    (
        "data",
        &[
            "source",
            "n_max",
            "imbalance_ratio",
            "classes",
            "input_dim",
            "class_spread",
            "test_per_class",
            "train_path",
            "test_path",
        ],
    ),
    ("model", &["hidden", "feature_dim"]),
    (
        "train",
        &[
            "stage1_iters",
            "stage2_iters",
            "batch_size",
            "lr",
            "milestones",
            "gamma",
            "warmup",
            "momentum",
            "loss",
            "schedule",
            "sampler",
            "scale",
            "mu",
            "sigma",
            "clamp_lo",
            "clamp_hi",
            "angular_scale",
            "per_class_draw",
        ],
    ),
    ("eval", &["groups"]),
];

struct Lookup<'a> {
    ini: &'a Ini,
}

impl Lookup<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(str::trim)
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse {v:?}"))),
        }
    }

    fn parse_str<T: FromStr<Err = Error>>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => v.parse(),
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<u64>>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some("auto") => Ok(None),
            Some("") => Ok(Some(vec![])),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Config(format!("[{section}] {key}: bad entry {x:?}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

fn strip_inline_comment(line: &str) -> &str {
    let cut = line
        .char_indices()
        .zip(line.chars().skip(1))
        .find(|((_, a), b)| a.is_whitespace() && (*b == '#' || *b == ';'))
        .map(|((i, _), _)| i);
    cut.map_or(line, |i| &line[..i])
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let text: String = text.lines().map(|l| format!("{}\n", strip_inline_comment(l))).collect();
        let ini = Ini::load_from_str(&text).map_err(|e| Error::Config(format!("config syntax: {e}")))?;
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys must appear under a [section]".into()));
                }
                continue;
            };
            let keys = KNOWN
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, k)| *k)
                .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?;
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(Error::Config(format!("unknown key {k:?} in [{section}]")));
                }
            }
        }
        let l = Lookup { ini: &ini };
        let d = RunConfig::default();

        let data = match l.raw("data", "source").unwrap_or("synthetic") {
            "synthetic" => {
                let DataSource::Synthetic {
                    n_max,
                    imbalance_ratio,
                    classes,
                    spec,
                } = DataSource::default()
                else {
                    unreachable!()
                };
                DataSource::Synthetic {
                    n_max: l.parse("data", "n_max", n_max)?,
                    imbalance_ratio: l.parse("data", "imbalance_ratio", imbalance_ratio)?,
                    classes: l.parse("data", "classes", classes)?,
                    spec: SyntheticSpec {
                        dim: l.parse("data", "input_dim", spec.dim)?,
                        class_spread: l.parse("data", "class_spread", spec.class_spread)?,
                        test_per_class: l.parse("data", "test_per_class", spec.test_per_class)?,
                    },
                }
            }
            "csv" => {
                let path = |key: &str| {
                    l.raw("data", key)
                        .map(PathBuf::from)
                        .ok_or_else(|| Error::Config(format!("[data] source=csv needs {key}")))
                };
                DataSource::Csv {
                    train: path("train_path")?,
                    test: path("test_path")?,
                }
            }
            other => return Err(Error::Config(format!("[data] unknown source {other:?}"))),
        };

        let hidden = match l.raw("model", "hidden") {
            None => d.model.hidden.clone(),
            Some("") => vec![],
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("[model] hidden: bad width {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let model = ModelConfig {
            hidden,
            feature_dim: l.parse("model", "feature_dim", d.model.feature_dim)?,
        };

        let t = &d.train;
        let mut train = TrainConfig {
            stage1_iters: l.parse("train", "stage1_iters", t.stage1_iters)?,
            stage2_iters: l.parse("train", "stage2_iters", t.stage2_iters)?,
            batch_size: l.parse("train", "batch_size", t.batch_size)?,
            base_lr: l.parse("train", "lr", t.base_lr)?,
            milestones: vec![],
            gamma: l.parse("train", "gamma", t.gamma)?,
            warmup_iters: l.parse("train", "warmup", t.warmup_iters)?,
            momentum: l.parse("train", "momentum", t.momentum)?,
            loss: l.parse_str("train", "loss", t.loss)?,
            schedule: l.parse_str("train", "schedule", t.schedule)?,
            stage2_sampler: l.parse_str("train", "sampler", t.stage2_sampler)?,
            cloud: crate::losses::GaussianCloudConfig {
                scale: l.parse("train", "scale", t.cloud.scale)?,
                mu: l.parse("train", "mu", t.cloud.mu)?,
                sigma: l.parse("train", "sigma", t.cloud.sigma)?,
                clamp_lo: l.parse("train", "clamp_lo", t.cloud.clamp_lo)?,
                clamp_hi: l.parse("train", "clamp_hi", t.cloud.clamp_hi)?,
                angular_scale: l.parse("train", "angular_scale", t.cloud.angular_scale)?,
                per_class_draw: l.parse("train", "per_class_draw", t.cloud.per_class_draw)?,
            },
            seed: l.parse("run", "seed", t.seed)?,
        };
        train.milestones = match l.list("train", "milestones")? {
            Some(m) => m,
            None => auto_milestones(train.stage1_iters, train.total_iters()),
        };

        let cfg = RunConfig {
            data,
            model,
            train,
            groups: l.parse_str("eval", "groups", d.groups)?,
            checkpoint_every: l.parse("run", "checkpoint_every", d.checkpoint_every)?,
            export_embeddings: l.parse("run", "export_embeddings", d.export_embeddings)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_ini_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.feature_dim == 0 || self.model.hidden.contains(&0) {
            return Err(Error::Config("model widths must be >= 1".into()));
        }
        if let DataSource::Synthetic {
            n_max,
            imbalance_ratio,
            classes,
            spec,
        } = &self.data
        {
            if *classes < 2 || *n_max == 0 || spec.dim < 2 || spec.test_per_class == 0 {
                return Err(Error::Config("invalid synthetic data parameters".into()));
            }
            if !(*imbalance_ratio >= 1.0) || (*n_max as f64) < *imbalance_ratio {
                return Err(Error::Config(format!(
                    "imbalance ratio {imbalance_ratio} incompatible with n_max {n_max}"
                )));
            }
            if !(spec.class_spread > 0.0) {
                return Err(Error::Config("class_spread must be positive".into()));
            }
        }
        self.train.validate()
    }

    /// Serializes every field, so the output reloads to an equal config.
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        let t = &self.train;
        ini.with_section(Some("run"))
            .set("seed", t.seed.to_string())
            .set("checkpoint_every", self.checkpoint_every.to_string())
            .set("export_embeddings", self.export_embeddings.to_string());
        match &self.data {
            DataSource::Synthetic {
                n_max,
                imbalance_ratio,
                classes,
                spec,
            } => {
                ini.with_section(Some("data"))
                    .set("source", "synthetic")
                    .set("n_max", n_max.to_string())
                    .set("imbalance_ratio", imbalance_ratio.to_string())
                    .set("classes", classes.to_string())
                    .set("input_dim", spec.dim.to_string())
                    .set("class_spread", spec.class_spread.to_string())
                    .set("test_per_class", spec.test_per_class.to_string());
            }
            DataSource::Csv { train, test } => {
                ini.with_section(Some("data"))
                    .set("source", "csv")
                    .set("train_path", train.display().to_string())
                    .set("test_path", test.display().to_string());
            }
        }
        let hidden: Vec<String> = self.model.hidden.iter().map(usize::to_string).collect();
        ini.with_section(Some("model"))
            .set("hidden", hidden.join(","))
            .set("feature_dim", self.model.feature_dim.to_string());
        let milestones: Vec<String> = t.milestones.iter().map(u64::to_string).collect();
        ini.with_section(Some("train"))
            .set("stage1_iters", t.stage1_iters.to_string())
            .set("stage2_iters", t.stage2_iters.to_string())
            .set("batch_size", t.batch_size.to_string())
            .set("lr", t.base_lr.to_string())
            .set("milestones", milestones.join(","))
            .set("gamma", t.gamma.to_string())
            .set("warmup", t.warmup_iters.to_string())
            .set("momentum", t.momentum.to_string())
            .set("loss", t.loss.to_string())
            .set("schedule", t.schedule.to_string())
            .set("sampler", t.stage2_sampler.to_string())
            .set("scale", t.cloud.scale.to_string())
            .set("mu", t.cloud.mu.to_string())
            .set("sigma", t.cloud.sigma.to_string())
            .set("clamp_lo", t.cloud.clamp_lo.to_string())
            .set("clamp_hi", t.cloud.clamp_hi.to_string())
            .set("angular_scale", t.cloud.angular_scale.to_string())
            .set("per_class_draw", t.cloud.per_class_draw.to_string());
        ini.with_section(Some("eval")).set("groups", self.groups.to_string());
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ini output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_ini_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn emitted_config_reloads_equal() {
        let mut c = RunConfig::default();
        c.train.loss = "arcface-style:0.3".parse().unwrap();
        c.train.schedule = "pow:1/3".parse().unwrap();
        c.train.stage2_sampler = "ens:0.999".parse().unwrap();
        c.train.cloud.sigma = 0.25;
        c.model.hidden = vec![];
        c.groups = GroupPolicy::Quantile;
        c.train.seed = 12345;
        let text = c.to_ini_string();
        assert_eq!(RunConfig::from_ini_str(&text).unwrap(), c);

        let csv = RunConfig {
            data: DataSource::Csv {
                train: "a/train.csv".into(),
                test: "a/test.csv".into(),
            },
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_ini_str(&csv.to_ini_string()).unwrap(), csv);
    }

    #[test]
    fn auto_milestones_follow_stage1() {
        let c = RunConfig::from_ini_str("[train]\nstage1_iters=1\nstage2_iters=0\n").unwrap();
        assert!(c.train.milestones.is_empty());
        let c = RunConfig::from_ini_str("[train]\nstage1_iters=1000\nmilestones=auto\n").unwrap();
        assert_eq!(c.train.milestones, vec![800]);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        for bad in [
            "[trian]\nlr=0.1\n",
            "[train]\nlearning_rate=0.1\n",
            "[train]\nlr=fast\n",
            "[train]\nloss=focal\n",
            "[data]\nsource=s3\n",
            "[data]\nsource=csv\n",
            "[train]\nmilestones=5,3\n",
            "lr=0.1\n",
        ] {
            let err = RunConfig::from_ini_str(bad).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad:?} gave {err:?}");
        }
    }

    #[test]
    fn inline_comments_are_ignored() {
        let c = RunConfig::from_ini_str(
            "[data]\nsource=synthetic   # or csv\nclasses=4 ; four\n[train]\nloss=gcl-a\t# angular\n",
        )
        .unwrap();
        assert_eq!(c.train.loss, crate::losses::LossFamily::GclA);
        assert!(matches!(c.data, DataSource::Synthetic { classes: 4, .. }));
        assert_eq!(
            strip_inline_comment("train_path=/data/run#3/train.csv"),
            "train_path=/data/run#3/train.csv"
        );
    }
}
