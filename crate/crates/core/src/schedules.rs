//! Per-class cloud sizes: how wide the Gaussian logit perturbation is for
//! each class, as a decreasing function of its training count.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::datagen::ClassProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ScheduleKind {
    /// `ln(n_max) - ln(n_j)`
    #[default]
    Logarithmic,
    /// `n_max · n_j^(-k)`
    Power(f64),
    /// `cos((n_j / n_max) · π/2)`
    Cosine,
}

impl ScheduleKind {
    pub fn power(k: f64) -> Result<Self> {
        if !(k > 0.0 && k <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "power exponent must lie in (0, 1], got {k}"
            )));
        }
        Ok(ScheduleKind::Power(k))
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Logarithmic => f.write_str("log"),
            ScheduleKind::Cosine => f.write_str("cos"),
            ScheduleKind::Power(k) if *k == 1.0 / 3.0 => f.write_str("pow:1/3"),
            ScheduleKind::Power(k) if *k == 0.25 => f.write_str("pow:1/4"),
            ScheduleKind::Power(k) => write!(f, "pow:{k}"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    /// Accepts `log`, `cos`, and `pow:<k>` where `<k>` is a decimal or `a/b`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "log" => return Ok(ScheduleKind::Logarithmic),
            "cos" => return Ok(ScheduleKind::Cosine),
            _ => {}
        }
        let k = s
            .strip_prefix("pow:")
            .ok_or_else(|| Error::Config(format!("unknown schedule {s:?}")))?;
        let exponent = match k.split_once('/') {
            Some((num, den)) => {
                let num: f64 = num.trim().parse().map_err(|_| bad_exponent(k))?;
                let den: f64 = den.trim().parse().map_err(|_| bad_exponent(k))?;
                num / den
            }
            None => k.trim().parse().map_err(|_| bad_exponent(k))?,
        };
        ScheduleKind::power(exponent).map_err(|e| Error::Config(e.to_string()))
    }
}

fn bad_exponent(k: &str) -> Error {
    Error::Config(format!("cannot parse power exponent {k:?}"))
}

/// Unnormalized cloud sizes, one per class.
pub fn raw_cloud_sizes(profile: &ClassProfile, kind: ScheduleKind) -> Vec<f64> {
    let n_max = profile.n_max() as f64;
    profile
        .counts()
        .iter()
        .map(|&n| {
            let n = n as f64;
            match kind {
                ScheduleKind::Logarithmic => (n_max / n).ln(),
                ScheduleKind::Power(k) => n_max * n.powf(-k),
                // clamp so the n_j = n_max class maps to exactly zero
                ScheduleKind::Cosine if n == n_max => 0.0,
                ScheduleKind::Cosine => ((n / n_max) * FRAC_PI_2).cos().max(0.0),
            }
        })
        .collect()
}

/// Divides by the maximum; an all-zero input stays all-zero.
pub fn normalized_cloud_sizes(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(0.0_f64, f64::max);
    if max > 0.0 {
        raw.iter().map(|d| d / max).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudSchedule {
    kind: ScheduleKind,
    raw: Vec<f64>,
    normalized: Vec<f64>,
}

impl CloudSchedule {
    pub fn new(profile: &ClassProfile, kind: ScheduleKind) -> Self {
        let raw = raw_cloud_sizes(profile, kind);
        let normalized = normalized_cloud_sizes(&raw);
        CloudSchedule { kind, raw, normalized }
    }

    /// Schedule with explicit normalized sizes, for tests and ablations.
    pub fn from_normalized(kind: ScheduleKind, normalized: Vec<f64>) -> Result<Self> {
        if normalized.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::InvalidArgument(
                "normalized cloud sizes must lie in [0, 1]".into(),
            ));
        }
        Ok(CloudSchedule {
            kind,
            raw: normalized.clone(),
            normalized,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn num_classes(&self) -> usize {
        self.normalized.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(c: &[usize]) -> ClassProfile {
        ClassProfile::new(c.to_vec()).unwrap()
    }

    #[test]
    fn logarithmic_raw() {
        let raw = raw_cloud_sizes(&profile(&[5000, 500, 50]), ScheduleKind::Logarithmic);
        assert_eq!(raw[0], 0.0);
        assert!((raw[1] - 10f64.ln()).abs() < 1e-12);
        assert!((raw[2] - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logarithmic_normalized_is_exact() {
        let s = CloudSchedule::new(&profile(&[5000, 500, 50]), ScheduleKind::Logarithmic);
        assert_eq!(s.normalized(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn power_quarter_raw() {
        let raw = raw_cloud_sizes(&profile(&[625, 16]), ScheduleKind::Power(0.25));
        assert!((raw[0] - 125.0).abs() < 1e-12);
        assert!((raw[1] - 312.5).abs() < 1e-12);
        assert_eq!(normalized_cloud_sizes(&raw), vec![0.4, 1.0]);
    }

    #[test]
    fn cosine_largest_class_is_zero() {
        let raw = raw_cloud_sizes(&profile(&[100, 50, 1]), ScheduleKind::Cosine);
        assert_eq!(raw[0], 0.0);
        assert!((raw[1] - (std::f64::consts::FRAC_PI_4).cos()).abs() < 1e-15);
    }

    #[test]
    fn normalization() {
        let raw = [0.0, 10f64.ln(), 100f64.ln()];
        let n = normalized_cloud_sizes(&raw);
        assert_eq!(n, vec![0.0, 0.5, 1.0]);
        assert_eq!(normalized_cloud_sizes(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(normalized_cloud_sizes(&[2.5, 2.5]), vec![1.0, 1.0]);
    }

    #[test]
    fn balanced_profile_degenerate_cases() {
        let p = profile(&[40, 40, 40]);
        assert_eq!(
            CloudSchedule::new(&p, ScheduleKind::Logarithmic).normalized(),
            &[0.0; 3]
        );
        assert_eq!(
            CloudSchedule::new(&p, ScheduleKind::Power(0.25)).normalized(),
            &[1.0; 3]
        );
        assert_eq!(CloudSchedule::new(&p, ScheduleKind::Cosine).normalized(), &[0.0; 3]);
    }

    #[test]
    fn parse_config_strings() {
        assert_eq!("log".parse::<ScheduleKind>().unwrap(), ScheduleKind::Logarithmic);
        assert_eq!("cos".parse::<ScheduleKind>().unwrap(), ScheduleKind::Cosine);
        assert_eq!(
            "pow:1/3".parse::<ScheduleKind>().unwrap(),
            ScheduleKind::Power(1.0 / 3.0)
        );
        assert_eq!("pow:1/4".parse::<ScheduleKind>().unwrap(), ScheduleKind::Power(0.25));
        assert_eq!("pow:0.5".parse::<ScheduleKind>().unwrap(), ScheduleKind::Power(0.5));
        assert!("pow:2".parse::<ScheduleKind>().is_err());
        assert!("pow:x".parse::<ScheduleKind>().is_err());
        assert!("linear".parse::<ScheduleKind>().is_err());
        for s in ["log", "cos", "pow:1/3", "pow:1/4", "pow:0.5"] {
            assert_eq!(s.parse::<ScheduleKind>().unwrap().to_string(), s);
        }
    }
}
