//! Logit adjustment for every supported loss family, softmax cross-entropy,
//! and the exact backward pass from the loss to classifier scores.
//!
//! Cosine families work on `cos θ_j` between a feature and each class
//! anchor and produce scaled logits `s · g(cos θ_j)`:
//!
//! | family         | target class                 | other classes          |
//! |----------------|------------------------------|------------------------|
//! | cosine margin  | `s (cos θ - m)`              | `s cos θ`              |
//! | angular margin | `s cos(θ + m)`               | `s cos θ`              |
//! | LDAM           | `s (cos θ - m_y)`            | `s cos θ`              |
//! | GCL-E          | `s (cos θ - δ_y abs(ε))`     | `s (cos θ - δ_j abs(ε))` |
//! | GCL-A          | `s cos(θ + δ_y κ abs(ε))`    | `s cos(θ + δ_j κ abs(ε))` |
//!
//! `δ_j` is the normalized cloud size of class `j`, `κ` the angular scale and
//! `ε` a clamped Gaussian draw. By default one `ε` is drawn per sample and
//! shared by all classes of that sample. Cross-entropy uses raw linear
//! logits `f · W` instead of cosines.
//!
//! `ε` is treated as a constant in the backward pass.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use crate::datagen::ClassProfile;
use crate::error::{Error, Result};
use crate::numerics::{sample_clamped_gaussian, Matrix, Rng};
use crate::schedules::CloudSchedule;

/// Cosines are kept this far from ±1 before `sin θ` is recovered from them.
pub const POLE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloudConfig {
    pub mu: f64,
    /// Standard deviation of the draw.
    pub sigma: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
    /// Multiplier turning `δ abs(ε)` into an angle for GCL-A.
    pub angular_scale: f64,
    /// Logit scale `s`.
    pub scale: f64,
    /// Draw a separate `ε` for every class instead of one per sample.
    pub per_class_draw: bool,
}

impl Default for GaussianCloudConfig {
    fn default() -> Self {
        GaussianCloudConfig {
            mu: 0.0,
            sigma: 1.0 / 3.0,
            clamp_lo: -1.0,
            clamp_hi: 1.0,
            angular_scale: FRAC_PI_2,
            scale: 30.0,
            per_class_draw: false,
        }
    }
}

impl GaussianCloudConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && self.clamp_lo < self.clamp_hi
            && self.angular_scale > 0.0
            && self.scale > 0.0
            && [
                self.mu,
                self.sigma,
                self.clamp_lo,
                self.clamp_hi,
                self.angular_scale,
                self.scale,
            ]
            .iter()
            .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Gaussian cloud config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFamily {
    CrossEntropy,
    CosineMargin(f64),
    AngularMargin(f64),
    /// Largest per-class margin; the others scale as `n_j^(-1/4)`.
    Ldam(f64),
    GclE,
    GclA,
}

impl LossFamily {
    pub const DEFAULT_LDAM_MAX_MARGIN: f64 = 0.5;

    pub fn is_cosine(&self) -> bool {
        !matches!(self, LossFamily::CrossEntropy)
    }

    pub fn is_gcl(&self) -> bool {
        matches!(self, LossFamily::GclE | LossFamily::GclA)
    }

    /// Every family with a representative parameter, for sweeps and gradient checks.
    pub fn all() -> [LossFamily; 6] {
        [
            LossFamily::CrossEntropy,
            LossFamily::CosineMargin(0.35),
            LossFamily::AngularMargin(0.5),
            LossFamily::Ldam(Self::DEFAULT_LDAM_MAX_MARGIN),
            LossFamily::GclE,
            LossFamily::GclA,
        ]
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossFamily::CrossEntropy => f.write_str("ce"),
            LossFamily::CosineMargin(m) => write!(f, "cosface:{m}"),
            LossFamily::AngularMargin(m) => write!(f, "arcface-style:{m}"),
            LossFamily::Ldam(m) => write!(f, "ldam:{m}"),
            LossFamily::GclE => f.write_str("gcl-e"),
            LossFamily::GclA => f.write_str("gcl-a"),
        }
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a.trim())),
            None => (s, None),
        };
        let margin = |arg: Option<&str>, default: Option<f64>| -> Result<f64> {
            let m = match (arg, default) {
                (Some(a), _) => a
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("cannot parse margin {a:?} in {s:?}")))?,
                (None, Some(d)) => d,
                (None, None) => return Err(Error::Config(format!("{s:?} needs a margin, e.g. {name}:0.35"))),
            };
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::Config(format!("margin must be >= 0 in {s:?}")));
            }
            Ok(m)
        };
        let no_arg = |family: LossFamily| match arg {
            None => Ok(family),
            Some(_) => Err(Error::Config(format!("{name} takes no parameter"))),
        };
        match name {
            "ce" => no_arg(LossFamily::CrossEntropy),
            "gcl-e" => no_arg(LossFamily::GclE),
            "gcl-a" => no_arg(LossFamily::GclA),
            "cosface" => Ok(LossFamily::CosineMargin(margin(arg, None)?)),
            "arcface-style" => Ok(LossFamily::AngularMargin(margin(arg, None)?)),
            "ldam" => Ok(LossFamily::Ldam(margin(arg, Some(Self::DEFAULT_LDAM_MAX_MARGIN))?)),
            _ => Err(Error::Config(format!("unknown loss family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub family: LossFamily,
    pub cloud: GaussianCloudConfig,
    /// Required by the GCL families.
    pub schedule: Option<CloudSchedule>,
}

impl LossSpec {
    pub fn new(family: LossFamily) -> Self {
        LossSpec {
            family,
            cloud: GaussianCloudConfig::default(),
            schedule: None,
        }
    }

    pub fn with_schedule(mut self, schedule: CloudSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn with_cloud(mut self, cloud: GaussianCloudConfig) -> Self {
        self.cloud = cloud;
        self
    }
}

/// `n_j^(-1/4)` margins scaled so the largest equals `max_margin`.
pub fn ldam_margins(profile: &ClassProfile, max_margin: f64) -> Vec<f64> {
    let raw: Vec<f64> = profile.counts().iter().map(|&n| (n as f64).powf(-0.25)).collect();
    let top = raw.iter().copied().fold(0.0_f64, f64::max);
    raw.iter().map(|m| max_margin * m / top).collect()
}

/// Drawn noise for one batch: one column when shared, `C` columns when per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Epsilon {
    values: Matrix,
}

impl Epsilon {
    pub fn zeros(batch: usize) -> Self {
        Epsilon {
            values: Matrix::zeros(batch, 1),
        }
    }

    /// One shared value per sample.
    pub fn shared(values: Vec<f64>) -> Self {
        let n = values.len();
        Epsilon {
            values: Matrix::from_vec(n, 1, values).expect("column vector"),
        }
    }

    pub fn per_class(values: Matrix) -> Self {
        Epsilon { values }
    }

    pub fn draw(cloud: &GaussianCloudConfig, batch: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        let cols = if cloud.per_class_draw { classes } else { 1 };
        let draws = sample_clamped_gaussian(rng, cloud.mu, cloud.sigma, cloud.clamp_lo, cloud.clamp_hi, batch * cols)?;
        Ok(Epsilon {
            values: Matrix::from_vec(batch, cols, draws)?,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn is_shared(&self) -> bool {
        self.values.cols() == 1
    }

    /// `abs(ε)` used for sample `i`, class `j`.
    #[inline]
    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        let col = if self.values.cols() == 1 { 0 } else { j };
        self.values.get(i, col).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedLogits {
    pub logits: Matrix,
    pub epsilon: Epsilon,
}

/// Cosine similarities between features and class anchors, plus what the
/// backward pass needs.
#[derive(Debug, Clone)]
pub struct CosineScores {
    cos: Matrix,
    unit_features: Matrix,
    feature_norms: Vec<f64>,
    unit_anchors: Matrix,
    anchor_norms: Vec<f64>,
}

impl CosineScores {
    pub fn cos(&self) -> &Matrix {
        &self.cos
    }

    pub fn into_cos(self) -> Matrix {
        self.cos
    }

    /// Given `dL/dcos` (batch × C), returns `(dL/dfeatures, dL/dW)`.
    pub fn backward(&self, dcos: &Matrix) -> Result<(Matrix, Matrix)> {
        if dcos.shape() != self.cos.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match scores {:?}",
                dcos.shape(),
                self.cos.shape()
            )));
        }
        // dcos_ij/df_i = (v_j - cos_ij u_i)/|f_i|, dcos_ij/dw_j = (u_i - cos_ij v_j)/|w_j|
        let mut d_unit_f = dcos.matmul_t(&self.unit_anchors)?; // B×D, Σ_j G_ij v_j
        for i in 0..dcos.rows() {
            let radial: f64 = dcos.row(i).iter().zip(self.cos.row(i)).map(|(g, c)| g * c).sum();
            let inv = 1.0 / self.feature_norms[i];
            for (d, u) in d_unit_f.row_mut(i).iter_mut().zip(self.unit_features.row(i)) {
                *d = (*d - radial * u) * inv;
            }
        }
        let mut d_w = self.unit_features.t_matmul(dcos)?; // D×C, Σ_i G_ij u_i
        let c = dcos.cols();
        let mut radial = vec![0.0; c];
        for i in 0..dcos.rows() {
            for ((r, g), cs) in radial.iter_mut().zip(dcos.row(i)).zip(self.cos.row(i)) {
                *r += g * cs;
            }
        }
        for k in 0..d_w.rows() {
            let vrow = self.unit_anchors.row(k);
            for (j, d) in d_w.row_mut(k).iter_mut().enumerate() {
                *d = (*d - radial[j] * vrow[j]) / self.anchor_norms[j];
            }
        }
        Ok((d_unit_f, d_w))
    }
}

/// Cosine of the angle between each feature row and each column of `w` (D × C).
pub fn cosine_scores(features: &Matrix, w: &Matrix) -> Result<CosineScores> {
    if features.cols() != w.rows() {
        return Err(Error::Shape(format!(
            "features have width {} but classifier expects {}",
            features.cols(),
            w.rows()
        )));
    }
    let (b, d) = features.shape();
    let c = w.cols();
    let mut unit_features = features.clone();
    let mut feature_norms = Vec::with_capacity(b);
    for i in 0..b {
        let row = unit_features.row_mut(i);
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateInput(format!("feature row {i} has norm {n}")));
        }
        row.iter_mut().for_each(|x| *x /= n);
        feature_norms.push(n);
    }
    let mut anchor_norms = vec![0.0; c];
    for k in 0..d {
        for (acc, x) in anchor_norms.iter_mut().zip(w.row(k)) {
            *acc += x * x;
        }
    }
    for (j, n) in anchor_norms.iter_mut().enumerate() {
        *n = n.sqrt();
        if !(*n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateInput(format!("class anchor {j} has norm {n}")));
        }
    }
    let unit_anchors = Matrix::from_fn(d, c, |k, j| w.get(k, j) / anchor_norms[j]);
    let mut cos = unit_features.matmul(&unit_anchors)?;
    cos.map_inplace(|x| x.clamp(-1.0, 1.0));
    Ok(CosineScores {
        cos,
        unit_features,
        feature_norms,
        unit_anchors,
        anchor_norms,
    })
}

/// `cos(θ + a)` and its derivative in `cos θ`, through the expansion
/// `cos θ cos a - sin θ sin a` with `sin θ = sqrt(1 - cos² θ)`.
#[inline]
fn shifted_cos(c: f64, a: f64) -> (f64, f64) {
    if a == 0.0 {
        return (c, 1.0);
    }
    let lo = -1.0 + POLE_GUARD;
    let hi = 1.0 - POLE_GUARD;
    let inside = c > lo && c < hi;
    let cc = c.clamp(lo, hi);
    let sin_t = (1.0 - cc * cc).sqrt();
    let (sa, ca) = a.sin_cos();
    let value = cc * ca - sin_t * sa;
    let slope = if inside { ca + cc / sin_t * sa } else { 0.0 };
    (value, slope)
}

/// GCL-E logit for a single angle, without the scale: `cos θ - δ abs(ε)`.
pub fn gcl_e_curve(theta: f64, delta: f64, eps: f64) -> f64 {
    theta.cos() - delta * eps.abs()
}

/// GCL-A logit for a single angle, without the scale: `cos(θ + δ κ abs(ε))`.
pub fn gcl_a_curve(theta: f64, delta: f64, eps: f64, angular_scale: f64) -> f64 {
    shifted_cos(theta.cos(), delta * angular_scale * eps.abs()).0
}

/// Derivatives of the two curves above with respect to `θ`:
/// `-sin θ` and `-sin(θ + δ κ abs(ε))`.
pub fn gcl_curve_slopes(theta: f64, delta: f64, eps: f64, angular_scale: f64) -> (f64, f64) {
    let shift = delta * angular_scale * eps.abs();
    (-theta.sin(), -(theta + shift).sin())
}

/// A loss specification bound to a class profile, ready to run on batches.
#[derive(Debug, Clone)]
pub struct LossHead {
    family: LossFamily,
    cloud: GaussianCloudConfig,
    deltas: Vec<f64>,
    margins: Vec<f64>,
}

impl LossHead {
    pub fn new(spec: &LossSpec, profile: &ClassProfile) -> Result<Self> {
        let c = profile.num_classes();
        if spec.family.is_cosine() {
            spec.cloud.validate()?;
        }
        let deltas = if spec.family.is_gcl() {
            let schedule = spec
                .schedule
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} requires a cloud-size schedule", spec.family)))?;
            if schedule.num_classes() != c {
                return Err(Error::Config(format!(
                    "schedule has {} classes, profile has {c}",
                    schedule.num_classes()
                )));
            }
            schedule.normalized().to_vec()
        } else {
            vec![0.0; c]
        };
        let margins = match spec.family {
            LossFamily::CosineMargin(m) | LossFamily::AngularMargin(m) => vec![m; c],
            LossFamily::Ldam(m) => ldam_margins(profile, m),
            _ => vec![0.0; c],
        };
        Ok(LossHead {
            family: spec.family,
            cloud: spec.cloud.clone(),
            deltas,
            margins,
        })
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn num_classes(&self) -> usize {
        self.deltas.len()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    /// Draws noise when this family needs it in training mode; leaves `rng`
    /// untouched otherwise.
    pub fn draw_epsilon(&self, batch: usize, rng: &mut Rng, training: bool) -> Result<Epsilon> {
        if training && self.family.is_gcl() {
            Epsilon::draw(&self.cloud, batch, self.num_classes(), rng)
        } else {
            Ok(Epsilon::zeros(batch))
        }
    }

    fn check(&self, scores: &Matrix, labels: &[usize]) -> Result<()> {
        if scores.cols() != self.num_classes() {
            return Err(Error::Shape(format!(
                "scores have {} columns, loss expects {} classes",
                scores.cols(),
                self.num_classes()
            )));
        }
        if scores.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} score rows but {} labels",
                scores.rows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.num_classes()) {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        Ok(())
    }

    /// Adjusted logit and its derivative in the score for one entry.
    #[inline]
    fn entry(&self, score: f64, is_target: bool, class: usize, eps_mag: f64, training: bool) -> (f64, f64) {
        let s = self.cloud.scale;
        if !training {
            return match self.family {
                LossFamily::CrossEntropy => (score, 1.0),
                _ => (s * score, s),
            };
        }
        match self.family {
            LossFamily::CrossEntropy => (score, 1.0),
            LossFamily::CosineMargin(m) if is_target => (s * (score - m), s),
            LossFamily::AngularMargin(m) if is_target => {
                let (v, dv) = shifted_cos(score, m);
                (s * v, s * dv)
            }
            LossFamily::Ldam(_) if is_target => (s * (score - self.margins[class]), s),
            LossFamily::GclE => (s * (score - self.deltas[class] * eps_mag), s),
            LossFamily::GclA => {
                let (v, dv) = shifted_cos(score, self.deltas[class] * self.cloud.angular_scale * eps_mag);
                (s * v, s * dv)
            }
            _ => (s * score, s),
        }
    }

    /// Adjusted logits for precomputed noise. `scores` are cosines for the
    /// cosine families and raw linear logits for cross-entropy.
    pub fn logits_with(
        &self,
        scores: &Matrix,
        labels: &[usize],
        epsilon: Epsilon,
        training: bool,
    ) -> Result<PerturbedLogits> {
        self.check(scores, labels)?;
        if epsilon.values().rows() != scores.rows() {
            return Err(Error::Shape("noise rows do not match the batch".into()));
        }
        let logits = Matrix::from_fn(scores.rows(), scores.cols(), |i, j| {
            self.entry(scores.get(i, j), labels[i] == j, j, epsilon.magnitude(i, j), training)
                .0
        });
        Ok(PerturbedLogits { logits, epsilon })
    }

    /// Adjusted logits together with `d logit / d score` for every entry.
    pub fn logits_and_slopes(
        &self,
        scores: &Matrix,
        labels: &[usize],
        epsilon: Epsilon,
        training: bool,
    ) -> Result<(PerturbedLogits, Matrix)> {
        self.check(scores, labels)?;
        if epsilon.values().rows() != scores.rows() {
            return Err(Error::Shape("noise rows do not match the batch".into()));
        }
        let (rows, cols) = scores.shape();
        let mut logits = Matrix::zeros(rows, cols);
        let mut slopes = Matrix::zeros(rows, cols);
        for (i, &y) in labels.iter().enumerate() {
            for j in 0..cols {
                let (v, dv) = self.entry(scores.get(i, j), y == j, j, epsilon.magnitude(i, j), training);
                logits.set(i, j, v);
                slopes.set(i, j, dv);
            }
        }
        Ok((PerturbedLogits { logits, epsilon }, slopes))
    }

    pub fn logits(&self, scores: &Matrix, labels: &[usize], rng: &mut Rng, training: bool) -> Result<PerturbedLogits> {
        let epsilon = self.draw_epsilon(scores.rows(), rng, training)?;
        self.logits_with(scores, labels, epsilon, training)
    }

    /// Chains `dL/dlogits` back to `dL/dscores`, holding the noise fixed.
    pub fn backward(
        &self,
        scores: &Matrix,
        labels: &[usize],
        epsilon: &Epsilon,
        dlogits: &Matrix,
        training: bool,
    ) -> Result<Matrix> {
        self.check(scores, labels)?;
        if dlogits.shape() != scores.shape() {
            return Err(Error::Shape("logit gradient does not match scores".into()));
        }
        Ok(Matrix::from_fn(scores.rows(), scores.cols(), |i, j| {
            let (_, slope) = self.entry(scores.get(i, j), labels[i] == j, j, epsilon.magnitude(i, j), training);
            slope * dlogits.get(i, j)
        }))
    }
}

/// Adjusted logits for one batch: binds `spec` to `profile` and draws noise from `rng`.
pub fn adjusted_logits(
    spec: &LossSpec,
    scores: &Matrix,
    labels: &[usize],
    profile: &ClassProfile,
    rng: &mut Rng,
    training: bool,
) -> Result<PerturbedLogits> {
    LossHead::new(spec, profile)?.logits(scores, labels, rng, training)
}

/// Mean cross-entropy over the batch and the row-wise softmax.
pub fn softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut probs = logits.clone();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = probs.row_mut(i);
        if y >= row.len() {
            return Err(Error::InvalidArgument(format!("label {y} out of range")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let zy = row[y];
        // -log p_y = log1p(Σ_{k≠y} exp(z_k - z_y)) when z_y is the max
        let shift = if zy == max { zy } else { max };
        let mut rest = 0.0;
        for (k, z) in row.iter_mut().enumerate() {
            *z = (*z - shift).exp();
            if k != y {
                rest += *z;
            }
        }
        let ey = row[y];
        total += if zy == max {
            rest.ln_1p()
        } else {
            (ey + rest).ln() - (zy - shift)
        };
        let sum = ey + rest;
        row.iter_mut().for_each(|p| *p /= sum);
    }
    Ok((total / labels.len() as f64, probs))
}

/// `(p - onehot(y)) / batch`, the gradient of the mean loss.
pub fn grad_wrt_logits(probs: &Matrix, labels: &[usize]) -> Matrix {
    let b = labels.len() as f64;
    let mut g = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = g.row_mut(i);
        row[y] = if row[y] > 0.5 {
            -row.iter()
                .enumerate()
                .filter(|&(k, _)| k != y)
                .map(|(_, p)| p)
                .sum::<f64>()
        } else {
            row[y] - 1.0
        };
        row.iter_mut().for_each(|x| *x /= b);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::ScheduleKind;

    fn schedule(deltas: &[f64]) -> CloudSchedule {
        CloudSchedule::from_normalized(ScheduleKind::Logarithmic, deltas.to_vec()).unwrap()
    }

    fn head(family: LossFamily, deltas: &[f64], scale: f64) -> LossHead {
        let profile = ClassProfile::new(vec![10; deltas.len()]).unwrap();
        let cloud = GaussianCloudConfig {
            scale,
            ..GaussianCloudConfig::default()
        };
        let spec = LossSpec::new(family).with_cloud(cloud).with_schedule(schedule(deltas));
        LossHead::new(&spec, &profile).unwrap()
    }

    #[test]
    fn gcl_e_direct_evaluation() {
        let h = head(LossFamily::GclE, &[0.0, 1.0], 1.0);
        let cos = Matrix::from_vec(1, 2, vec![0.9, 0.2]).unwrap();
        let out = h.logits_with(&cos, &[0], Epsilon::shared(vec![-0.6]), true).unwrap();
        assert!((out.logits.get(0, 0) - 0.9).abs() < 1e-15);
        assert!((out.logits.get(0, 1) - -0.4).abs() < 1e-15);
    }

    #[test]
    fn gcl_a_direct_evaluation() {
        // cos(π/3 + π/4) = (1 - √3)/(2√2) = -0.258819..., closed form.
        let h = head(LossFamily::GclA, &[1.0], 1.0);
        let cos = Matrix::from_vec(1, 1, vec![(std::f64::consts::PI / 3.0).cos()]).unwrap();
        let out = h.logits_with(&cos, &[0], Epsilon::shared(vec![0.5]), true).unwrap();
        let expected = (1.0 - 3f64.sqrt()) / (2.0 * 2f64.sqrt());
        assert!((out.logits.get(0, 0) - expected).abs() < 1e-12);
        assert!((out.logits.get(0, 0) - -0.2588).abs() < 1e-4);
    }

    #[test]
    fn zero_clouds_reduce_to_scaled_cosine() {
        for family in [LossFamily::GclE, LossFamily::GclA] {
            let h = head(family, &[0.0, 0.0, 0.0], 30.0);
            let cos = Matrix::from_vec(2, 3, vec![1.0, -0.3, 0.2, -1.0, 0.5, 0.999]).unwrap();
            let out = h
                .logits_with(&cos, &[0, 2], Epsilon::shared(vec![-0.9, 0.4]), true)
                .unwrap();
            for i in 0..2 {
                for j in 0..3 {
                    assert_eq!(out.logits.get(i, j), 30.0 * cos.get(i, j));
                }
            }
        }
    }

    #[test]
    fn cosine_margin_target_only() {
        let profile = ClassProfile::new(vec![5, 5]).unwrap();
        let spec = LossSpec::new(LossFamily::CosineMargin(0.35)).with_cloud(GaussianCloudConfig {
            scale: 1.0,
            ..Default::default()
        });
        let cos = Matrix::from_vec(1, 2, vec![0.8, 0.1]).unwrap();
        let out = adjusted_logits(&spec, &cos, &[0], &profile, &mut Rng::new(0), true).unwrap();
        assert!((out.logits.get(0, 0) - 0.45).abs() < 1e-15);
        assert_eq!(out.logits.get(0, 1), 0.1);
    }

    #[test]
    fn missing_schedule_is_config_error() {
        let profile = ClassProfile::new(vec![5, 5]).unwrap();
        for family in [LossFamily::GclE, LossFamily::GclA] {
            let err = LossHead::new(&LossSpec::new(family), &profile).unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }

    #[test]
    fn ldam_margins_quarter_power() {
        let p = ClassProfile::new(vec![625, 16, 1]).unwrap();
        let m = ldam_margins(&p, 0.5);
        assert!((m[2] - 0.5).abs() < 1e-15);
        assert!((m[1] - 0.25).abs() < 1e-15);
        assert!((m[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cosine_scores_extremes() {
        let w = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let f = Matrix::from_vec(3, 2, vec![3.0, 0.0, 0.0, 5.0, -2.0, 0.0]).unwrap();
        let s = cosine_scores(&f, &w).unwrap();
        assert_eq!(s.cos().row(0), &[1.0, 0.0]);
        assert_eq!(s.cos().row(1), &[0.0, 1.0]);
        assert_eq!(s.cos().row(2), &[-1.0, 0.0]);
        let zero = Matrix::zeros(1, 2);
        assert!(matches!(cosine_scores(&zero, &w), Err(Error::DegenerateInput(_))));
        let wz = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(cosine_scores(&f, &wz), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn softmax_ce_values() {
        let (l, p) = softmax_ce(&Matrix::from_vec(1, 3, vec![0.0; 3]).unwrap(), &[0]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert!((p.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // ln(1 + e^-10) = 4.5398899216864647e-5 (mpmath, 30 digits)
        let (l, _) = softmax_ce(&Matrix::from_vec(1, 2, vec![10.0, 0.0]).unwrap(), &[0]).unwrap();
        assert!((l - 4.539_889_921_686_465e-5).abs() < 1e-15);
        let (l, _) = softmax_ce(&Matrix::from_vec(1, 2, vec![0.0, 10.0]).unwrap(), &[0]).unwrap();
        assert!((l - 10.000045398899217).abs() < 1e-12);
    }

    #[test]
    fn logit_gradient_values() {
        let (_, p) = softmax_ce(&Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap(), &[0]).unwrap();
        assert_eq!(grad_wrt_logits(&p, &[0]).row(0), &[-0.5, 0.5]);
        let (_, p) = softmax_ce(&Matrix::from_vec(1, 2, vec![3f64.ln(), 0.0]).unwrap(), &[0]).unwrap();
        let g = grad_wrt_logits(&p, &[0]);
        assert!((g.get(0, 0) + 0.25).abs() < 1e-15);
        assert!((g.get(0, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn evaluation_mode_is_plain() {
        let profile = ClassProfile::new(vec![9, 3, 1]).unwrap();
        let cos = Matrix::from_vec(2, 3, vec![0.3, -0.2, 0.9, 0.0, 0.7, -0.6]).unwrap();
        for family in LossFamily::all() {
            let spec = LossSpec::new(family).with_schedule(CloudSchedule::new(&profile, ScheduleKind::Logarithmic));
            let mut rng = Rng::new(4);
            let out = adjusted_logits(&spec, &cos, &[1, 2], &profile, &mut rng, false).unwrap();
            assert_eq!(rng, Rng::new(4), "{family}: evaluation must not draw noise");
            let s = if family.is_cosine() { 30.0 } else { 1.0 };
            for i in 0..2 {
                for j in 0..3 {
                    assert_eq!(out.logits.get(i, j), s * cos.get(i, j));
                }
            }
        }
    }

    #[test]
    fn per_class_draw_mode() {
        let profile = ClassProfile::new(vec![9, 3, 1]).unwrap();
        let cloud = GaussianCloudConfig {
            per_class_draw: true,
            ..Default::default()
        };
        let spec = LossSpec::new(LossFamily::GclE)
            .with_cloud(cloud)
            .with_schedule(CloudSchedule::new(&profile, ScheduleKind::Logarithmic));
        let cos = Matrix::zeros(4, 3);
        let out = adjusted_logits(&spec, &cos, &[0, 1, 2, 0], &profile, &mut Rng::new(1), true).unwrap();
        assert_eq!(out.epsilon.values().shape(), (4, 3));
        assert!(!out.epsilon.is_shared());
    }

    #[test]
    fn curve_slope_matches_backward_chain() {
        // d/dθ through cos θ: (dz/dcos)·(-sin θ), away from the poles
        for &theta in &[0.1, 0.7, 1.2, 2.0] {
            for &delta in &[0.1, 0.5] {
                let (_, slope_a) = gcl_curve_slopes(theta, delta, 1.0, FRAC_PI_2);
                let (_, dz_dcos) = shifted_cos(theta.cos(), delta * FRAC_PI_2);
                assert!((slope_a - dz_dcos * -theta.sin()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_loss_strings() {
        let cases = [
            ("ce", LossFamily::CrossEntropy),
            ("gcl-e", LossFamily::GclE),
            ("gcl-a", LossFamily::GclA),
            ("cosface:0.35", LossFamily::CosineMargin(0.35)),
            ("arcface-style:0.5", LossFamily::AngularMargin(0.5)),
            ("ldam:0.5", LossFamily::Ldam(0.5)),
        ];
        for (s, f) in cases {
            assert_eq!(s.parse::<LossFamily>().unwrap(), f);
            assert_eq!(f.to_string(), s);
        }
        assert_eq!("ldam".parse::<LossFamily>().unwrap(), LossFamily::Ldam(0.5));
        assert!("cosface".parse::<LossFamily>().is_err());
        assert!("cosface:-1".parse::<LossFamily>().is_err());
        assert!("gcl-e:1".parse::<LossFamily>().is_err());
        assert!("focal".parse::<LossFamily>().is_err());
    }

    #[test]
    fn fused_slopes_match_backward() {
        let mut rng = Rng::new(21);
        let scores = Matrix::from_fn(4, 3, |_, _| 2.0 * rng.uniform() - 1.0);
        let labels = [0, 2, 1, 2];
        let ones = Matrix::from_fn(4, 3, |_, _| 1.0);
        for family in LossFamily::all() {
            let h = head(family, &[0.0, 0.5, 1.0], 30.0);
            for training in [true, false] {
                let eps = h.draw_epsilon(4, &mut rng, training).unwrap();
                let plain = h.logits_with(&scores, &labels, eps.clone(), training).unwrap();
                let (fused, slopes) = h.logits_and_slopes(&scores, &labels, eps.clone(), training).unwrap();
                let back = h.backward(&scores, &labels, &eps, &ones, training).unwrap();
                assert!(fused.logits.bits_eq(&plain.logits));
                assert!(slopes.bits_eq(&back));
            }
        }
    }
}
