use std::fmt::Write as _;
use std::str::FromStr;

use crate::datagen::{ClassProfile, Dataset};
use crate::error::{Error, Result};
use crate::losses::LossFamily;
use crate::model::Model;
use crate::objective::predict;

/// How classes are split into head / middle / tail by training count.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GroupPolicy {
    /// Head: `n > head_min`; middle: `mid_min < n <= head_min`; tail: the rest.
    Absolute { head_min: usize, mid_min: usize },
    /// Thirds of the classes ranked by count (ties broken by class index).
    Quantile,
    /// Absolute `100 / 20` thresholds unless they leave the head group
    /// empty, in which case quantiles.
    #[default]
    Auto,
}

impl GroupPolicy {
    pub const HEAD_MIN: usize = 100;
    pub const MID_MIN: usize = 20;
}

impl std::fmt::Display for GroupPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupPolicy::Absolute { head_min, mid_min } => write!(f, "absolute:{head_min},{mid_min}"),
            GroupPolicy::Quantile => f.write_str("quantile"),
            GroupPolicy::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for GroupPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(GroupPolicy::Auto),
            "quantile" => Ok(GroupPolicy::Quantile),
            other => {
                let rest = other
                    .strip_prefix("absolute:")
                    .ok_or_else(|| Error::Config(format!("unknown group policy {other:?}")))?;
                let (h, m) = rest
                    .split_once(',')
                    .ok_or_else(|| Error::Config(format!("expected absolute:<head_min>,<mid_min>, got {other:?}")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad threshold {x:?}")))
                };
                let (head_min, mid_min) = (parse(h)?, parse(m)?);
                if mid_min > head_min {
                    return Err(Error::Config("mid_min must not exceed head_min".into()));
                }
                Ok(GroupPolicy::Absolute { head_min, mid_min })
            }
        }
    }
}

/// Class indices per group plus the rule that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    pub head: Vec<usize>,
    pub middle: Vec<usize>,
    pub tail: Vec<usize>,
    /// Resolved rule (never `Auto`).
    pub policy: GroupPolicy,
}

impl Groups {
    pub fn assign(profile: &ClassProfile, policy: GroupPolicy) -> Self {
        match policy {
            GroupPolicy::Absolute { head_min, mid_min } => {
                let mut g = Groups {
                    head: vec![],
                    middle: vec![],
                    tail: vec![],
                    policy,
                };
                for (j, &n) in profile.counts().iter().enumerate() {
                    if n > head_min {
                        g.head.push(j);
                    } else if n > mid_min {
                        g.middle.push(j);
                    } else {
                        g.tail.push(j);
                    }
                }
                g
            }
            GroupPolicy::Quantile => {
                let c = profile.num_classes();
                let mut order: Vec<usize> = (0..c).collect();
                order.sort_by(|&a, &b| profile.counts()[b].cmp(&profile.counts()[a]).then(a.cmp(&b)));
                let n_head = c.div_ceil(3);
                let n_mid = (c + 1) / 3;
                let mut head = order[..n_head].to_vec();
                let mut middle = order[n_head..n_head + n_mid].to_vec();
                let mut tail = order[n_head + n_mid..].to_vec();
                head.sort_unstable();
                middle.sort_unstable();
                tail.sort_unstable();
                Groups {
                    head,
                    middle,
                    tail,
                    policy,
                }
            }
            GroupPolicy::Auto => {
                let absolute = GroupPolicy::Absolute {
                    head_min: GroupPolicy::HEAD_MIN,
                    mid_min: GroupPolicy::MID_MIN,
                };
                if profile.n_max() > GroupPolicy::HEAD_MIN {
                    Groups::assign(profile, absolute)
                } else {
                    Groups::assign(profile, GroupPolicy::Quantile)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub test_counts: Vec<usize>,
    pub train_counts: Vec<usize>,
    pub groups: Groups,
    /// `None` when the group has no classes.
    pub head_accuracy: Option<f64>,
    pub middle_accuracy: Option<f64>,
    pub tail_accuracy: Option<f64>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub config_echo: String,
    pub seed: u64,
}

fn group_mean(per_class: &[f64], members: &[usize]) -> Option<f64> {
    if members.is_empty() {
        None
    } else {
        Some(members.iter().map(|&j| per_class[j]).sum::<f64>() / members.len() as f64)
    }
}

/// Builds a report from predictions. Classes absent from the test labels
/// get accuracy 0 and do not affect the overall accuracy.
pub fn evaluate_predictions(
    predictions: &[usize],
    labels: &[usize],
    train_profile: &ClassProfile,
    policy: GroupPolicy,
) -> Result<MetricsReport> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape("predictions and labels differ in length".into()));
    }
    let c = train_profile.num_classes();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&y, &p) in labels.iter().zip(predictions) {
        if y >= c || p >= c {
            return Err(Error::InvalidArgument(format!("class index out of range ({y}, {p})")));
        }
        confusion[y][p] += 1;
    }
    let test_counts: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let per_class_accuracy: Vec<f64> = (0..c)
        .map(|j| {
            if test_counts[j] == 0 {
                0.0
            } else {
                confusion[j][j] as f64 / test_counts[j] as f64
            }
        })
        .collect();
    let correct: usize = (0..c).map(|j| confusion[j][j]).sum();
    let groups = Groups::assign(train_profile, policy);
    Ok(MetricsReport {
        overall_accuracy: correct as f64 / labels.len() as f64,
        head_accuracy: group_mean(&per_class_accuracy, &groups.head),
        middle_accuracy: group_mean(&per_class_accuracy, &groups.middle),
        tail_accuracy: group_mean(&per_class_accuracy, &groups.tail),
        per_class_accuracy,
        test_counts,
        train_counts: train_profile.counts().to_vec(),
        groups,
        confusion,
        config_echo: String::new(),
        seed: 0,
    })
}

/// Evaluation-mode accuracy of `model` on `data`; groups come from the training profile.
pub fn evaluate(
    model: &Model,
    family: LossFamily,
    data: &Dataset,
    train_profile: &ClassProfile,
    policy: GroupPolicy,
) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    if train_profile.num_classes() != model.num_classes() {
        return Err(Error::Shape(
            "training profile and model disagree on class count".into(),
        ));
    }
    let predictions = predict(model, family, data.features())?;
    evaluate_predictions(&predictions, data.labels(), train_profile, policy)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl MetricsReport {
    pub fn with_run_info(mut self, config_echo: String, seed: u64) -> Self {
        self.config_echo = config_echo;
        self.seed = seed;
        self
    }

    /// Human-readable `key=value` block, then `[per_class]` and `[config]` sections.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "overall_accuracy={}", self.overall_accuracy);
        let _ = writeln!(out, "head_accuracy={}", fmt_opt(self.head_accuracy));
        let _ = writeln!(out, "middle_accuracy={}", fmt_opt(self.middle_accuracy));
        let _ = writeln!(out, "tail_accuracy={}", fmt_opt(self.tail_accuracy));
        let _ = writeln!(out, "group_policy={}", self.groups.policy);
        let _ = writeln!(out, "head_classes={}", join(&self.groups.head));
        let _ = writeln!(out, "middle_classes={}", join(&self.groups.middle));
        let _ = writeln!(out, "tail_classes={}", join(&self.groups.tail));
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "\n[per_class]");
        let _ = writeln!(out, "class,train_count,test_count,accuracy,group");
        for j in 0..self.per_class_accuracy.len() {
            let _ = writeln!(
                out,
                "{j},{},{},{},{}",
                self.train_counts[j],
                self.test_counts[j],
                self.per_class_accuracy[j],
                self.group_of(j)
            );
        }
        let _ = writeln!(out, "\n[confusion]");
        for row in &self.confusion {
            let _ = writeln!(out, "{}", join(row));
        }
        if !self.config_echo.is_empty() {
            let _ = writeln!(out, "\n[config]");
            out.push_str(&self.config_echo);
        }
        out
    }

    /// Plot-ready CSV: one row per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,train_count,test_count,accuracy,group\n");
        for j in 0..self.per_class_accuracy.len() {
            let _ = writeln!(
                out,
                "{j},{},{},{},{}",
                self.train_counts[j],
                self.test_counts[j],
                self.per_class_accuracy[j],
                self.group_of(j)
            );
        }
        out
    }

    pub fn group_of(&self, class: usize) -> &'static str {
        if self.groups.head.contains(&class) {
            "head"
        } else if self.groups.middle.contains(&class) {
            "middle"
        } else {
            "tail"
        }
    }
}

/// Reads the leading `key=value` block of a report written by [`MetricsReport::to_text`].
pub fn parse_summary(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| !l.starts_with('['))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table6_thresholds() {
        let p = ClassProfile::new(vec![500, 101, 100, 21, 20, 1]).unwrap();
        let g = Groups::assign(&p, GroupPolicy::Auto);
        assert_eq!(g.head, vec![0, 1]);
        assert_eq!(g.middle, vec![2, 3]);
        assert_eq!(g.tail, vec![4, 5]);
        assert!(matches!(
            g.policy,
            GroupPolicy::Absolute {
                head_min: 100,
                mid_min: 20
            }
        ));
    }

    #[test]
    fn quantile_fallback() {
        let p = ClassProfile::new(vec![3, 50, 9, 20, 7, 1, 30]).unwrap();
        let g = Groups::assign(&p, GroupPolicy::Auto);
        assert_eq!(g.policy, GroupPolicy::Quantile);
        assert_eq!(g.head, vec![1, 3, 6]);
        assert_eq!(g.middle, vec![2, 4]);
        assert_eq!(g.tail, vec![0, 5]);
    }

    #[test]
    fn overall_is_count_weighted_mean() {
        let p = ClassProfile::new(vec![300, 50, 5]).unwrap();
        let labels = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let preds = [0, 1, 0, 1, 1, 0, 2, 1, 1];
        let r = evaluate_predictions(&preds, &labels, &p, GroupPolicy::Auto).unwrap();
        let weighted: f64 = r
            .per_class_accuracy
            .iter()
            .zip(&r.test_counts)
            .map(|(a, &n)| a * n as f64)
            .sum::<f64>()
            / 9.0;
        assert!((r.overall_accuracy - weighted).abs() < 1e-12);
        assert_eq!(r.overall_accuracy, 5.0 / 9.0);
        assert_eq!(r.tail_accuracy, Some(0.25));
        assert_eq!(r.confusion[2], vec![1, 2, 1]);
    }

    #[test]
    fn empty_rejected() {
        let p = ClassProfile::new(vec![3, 3]).unwrap();
        assert!(evaluate_predictions(&[], &[], &p, GroupPolicy::Auto).is_err());
    }

    #[test]
    fn text_roundtrip_summary() {
        let p = ClassProfile::new(vec![300, 50, 5]).unwrap();
        let r = evaluate_predictions(&[0, 1, 2], &[0, 1, 1], &p, GroupPolicy::Auto)
            .unwrap()
            .with_run_info("loss=gcl-e\n".into(), 9);
        let kv = parse_summary(&r.to_text());
        assert!(kv.contains(&("overall_accuracy".into(), (2.0f64 / 3.0).to_string())));
        assert!(kv.contains(&("seed".into(), "9".into())));
        assert!(kv.contains(&("middle_accuracy".into(), "0.5".into())));
    }

    #[test]
    fn parse_policies() {
        assert_eq!("auto".parse::<GroupPolicy>().unwrap(), GroupPolicy::Auto);
        assert_eq!("quantile".parse::<GroupPolicy>().unwrap(), GroupPolicy::Quantile);
        assert_eq!(
            "absolute:100,20".parse::<GroupPolicy>().unwrap(),
            GroupPolicy::Absolute {
                head_min: 100,
                mid_min: 20
            }
        );
        assert!("absolute:5,20".parse::<GroupPolicy>().is_err());
    }
}
