//! Feed-forward backbone with a bias-free classifier matrix.
//!
//! The backbone is a stack of dense layers. Every hidden layer applies
//! `tanh`; the last layer is linear and produces the feature vector `f`.
//! The classifier `W` is `D × C` with one (unnormalized) anchor per column.
//!
//! Initialization: dense weights `N(0, 1/fan_in)`, biases zero, classifier
//! entries `N(0, 1)` with each column rescaled to unit length. Draw order is
//! layer by layer (weights row-major), then the classifier column by column.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_dim: usize,
    hidden: Vec<usize>,
    feature_dim: usize,
    num_classes: usize,
    layers: Vec<Dense>,
    classifier: Matrix,
    generation: u64,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// `activations[0]` is the input; the last entry is the feature matrix.
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn features(&self) -> &Matrix {
        self.activations.last().expect("at least the input")
    }
}

/// One gradient (or velocity) tensor per model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Dense>,
    pub classifier: Matrix,
}

impl GradientSet {
    pub fn zeros_like(model: &Model) -> Self {
        GradientSet {
            layers: model
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            classifier: Matrix::zeros(model.feature_dim, model.num_classes),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        out.push(self.classifier.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        out.push(self.classifier.as_mut_slice());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }

    pub fn congruent_with(&self, model: &Model) -> bool {
        let mine = self.tensors();
        let theirs = model.tensors();
        mine.len() == theirs.len()
            && mine.iter().zip(&theirs).all(|(a, b)| a.len() == b.len())
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, l)| g.weight.shape() == l.weight.shape())
            && self.classifier.shape() == model.classifier.shape()
    }
}

impl Model {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        num_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 || num_classes == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("all model dimensions must be >= 1".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(feature_dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (1.0 / fan_in as f64).sqrt();
                Dense {
                    weight: Matrix::from_fn(fan_in, fan_out, |_, _| std * rng.standard_normal()),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        let mut classifier = Matrix::zeros(feature_dim, num_classes);
        for j in 0..num_classes {
            let col: Vec<f64> = (0..feature_dim).map(|_| rng.standard_normal()).collect();
            let n = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (k, v) in col.iter().enumerate() {
                classifier.set(k, j, v / n);
            }
        }
        Ok(Model {
            input_dim,
            hidden: hidden.to_vec(),
            feature_dim,
            num_classes,
            layers,
            classifier,
            generation: 0,
        })
    }

    /// Rebuilds a model from stored tensors (used by checkpoints).
    pub fn from_parts(
        input_dim: usize,
        hidden: Vec<usize>,
        feature_dim: usize,
        layers: Vec<Dense>,
        classifier: Matrix,
    ) -> Result<Self> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&hidden);
        widths.push(feature_dim);
        if layers.len() != widths.len() - 1 {
            return Err(Error::Shape("layer count does not match hidden widths".into()));
        }
        for (l, w) in layers.iter().zip(widths.windows(2)) {
            if l.weight.shape() != (w[0], w[1]) || l.bias.len() != w[1] {
                return Err(Error::Shape(format!(
                    "layer shape {:?} does not match {:?}",
                    l.weight.shape(),
                    w
                )));
            }
        }
        if classifier.rows() != feature_dim || classifier.cols() == 0 {
            return Err(Error::Shape("classifier shape does not match feature dimension".into()));
        }
        Ok(Model {
            input_dim,
            hidden,
            feature_dim,
            num_classes: classifier.cols(),
            layers,
            classifier,
            generation: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn classifier(&self) -> &Matrix {
        &self.classifier
    }

    /// Replaces the classifier; shape must match.
    pub fn set_classifier(&mut self, w: Matrix) -> Result<()> {
        if w.shape() != self.classifier.shape() {
            return Err(Error::Shape("classifier shape mismatch".into()));
        }
        self.classifier = w;
        self.generation += 1;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Layer weights and biases in order, then the classifier.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        out.push(self.classifier.as_slice());
        out
    }

    /// Mutable view of every tensor. Invalidates outstanding forward caches.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.layers.len() + 1);
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        out.push(self.classifier.as_mut_slice());
        out
    }

    /// Backbone parameters as raw bytes, for freeze checks.
    pub fn backbone_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.layers {
            for v in l.weight.as_slice().iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if inputs.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "input width {} does not match model input {}",
                inputs.cols(),
                self.input_dim
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = activations[l].matmul(&layer.weight)?;
            for i in 0..z.rows() {
                for (v, b) in z.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            if l < last {
                z.map_inplace(f64::tanh);
            }
            activations.push(z);
        }
        let features = activations.last().expect("non-empty").clone();
        Ok((
            features,
            ForwardCache {
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Exact gradients given `dL/dfeatures` and `dL/dW` from the loss side.
    pub fn backward(&self, cache: &ForwardCache, d_features: &Matrix, d_classifier: &Matrix) -> Result<GradientSet> {
        if cache.generation != self.generation || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Contract(
                "forward cache is stale or belongs to another model".into(),
            ));
        }
        if d_features.shape() != cache.features().shape() {
            return Err(Error::Shape("feature gradient does not match forward pass".into()));
        }
        if d_classifier.shape() != self.classifier.shape() {
            return Err(Error::Shape("classifier gradient does not match classifier".into()));
        }
        let last = self.layers.len() - 1;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = d_features.clone();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                let out = &cache.activations[l + 1];
                for (d, a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= 1.0 - a * a;
                }
            }
            let weight = cache.activations[l].t_matmul(&delta)?;
            let mut bias = vec![0.0; delta.cols()];
            for i in 0..delta.rows() {
                for (b, d) in bias.iter_mut().zip(delta.row(i)) {
                    *b += d;
                }
            }
            if l > 0 {
                delta = delta.matmul_t(&self.layers[l].weight)?;
            }
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Ok(GradientSet {
            layers: grads,
            classifier: d_classifier.clone(),
        })
    }
}

/// Classic momentum SGD: `v ← momentum·v + g`, `θ ← θ - lr·v`. With
/// `freeze_backbone`, only the classifier and its velocity change.
pub fn sgd_step(
    model: &mut Model,
    grads: &GradientSet,
    lr: f64,
    momentum: f64,
    velocity: &mut GradientSet,
    freeze_backbone: bool,
) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {momentum}"
        )));
    }
    if !grads.congruent_with(model) || !velocity.congruent_with(model) {
        return Err(Error::Shape("gradient set does not match the model".into()));
    }
    let n = grads.layers.len() * 2 + 1;
    let skip = if freeze_backbone { n - 1 } else { 0 };
    let g = grads.tensors();
    let mut params = model.tensors_mut();
    let mut vel = velocity.tensors_mut();
    for t in skip..n {
        for ((p, v), gi) in params[t].iter_mut().zip(vel[t].iter_mut()).zip(g[t]) {
            *v = momentum * *v + gi;
            *p -= lr * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(hidden: &[usize]) -> Model {
        Model::new(5, hidden, 4, 3, &mut Rng::new(21)).unwrap()
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = model(&[7]);
        let b = model(&[7]);
        assert_eq!(a, b);
        for j in 0..3 {
            let n = crate::numerics::norm(&a.classifier().column(j));
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_count_closed_form() {
        let m = Model::new(5, &[7, 6], 4, 3, &mut Rng::new(0)).unwrap();
        assert_eq!(m.parameter_count(), (5 * 7 + 7) + (7 * 6 + 6) + (6 * 4 + 4) + 4 * 3);
        let linear = model(&[]);
        assert_eq!(linear.layers().len(), 1);
        assert_eq!(linear.parameter_count(), 5 * 4 + 4 + 4 * 3);
        assert!(Model::new(5, &[0], 4, 3, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn linear_backbone_is_affine() {
        let mut m = model(&[]);
        m.layers[0].bias = vec![0.5, -1.0, 0.25, 2.0];
        let x = Matrix::from_fn(2, 5, |i, j| (i + j) as f64 * 0.1);
        let (f, _) = m.forward(&x).unwrap();
        let mut expected = x.matmul(&m.layers[0].weight).unwrap();
        for i in 0..2 {
            for (v, b) in expected.row_mut(i).iter_mut().zip(&m.layers[0].bias) {
                *v += b;
            }
        }
        assert!(f.bits_eq(&expected));
    }

    #[test]
    fn rows_are_independent() {
        let m = model(&[8]);
        let mut rng = Rng::new(3);
        let big = Matrix::from_fn(8, 5, |_, _| rng.standard_normal());
        let one = big.select_rows(&[0]);
        let (fb, _) = m.forward(&big).unwrap();
        let (f1, _) = m.forward(&one).unwrap();
        assert_eq!(fb.row(0), f1.row(0));
        assert!(fb.is_finite());
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let m = model(&[8]);
        assert!(matches!(m.forward(&Matrix::zeros(2, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = model(&[8]);
        let x = Matrix::from_fn(3, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let (f, cache) = m.forward(&x).unwrap();
        let g = m
            .backward(&cache, &Matrix::zeros(f.rows(), f.cols()), &Matrix::zeros(4, 3))
            .unwrap();
        assert!(g.is_zero());
        assert!(g.congruent_with(&m));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut m = model(&[8]);
        let x = Matrix::from_fn(2, 5, |_, _| 0.1);
        let (f, cache) = m.forward(&x).unwrap();
        let g = GradientSet::zeros_like(&m);
        let mut v = GradientSet::zeros_like(&m);
        sgd_step(&mut m, &g, 0.1, 0.9, &mut v, false).unwrap();
        let err = m.backward(&cache, &f, &Matrix::zeros(4, 3)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn plain_sgd_without_momentum() {
        let mut m = model(&[4]);
        let before = m.clone();
        let mut g = GradientSet::zeros_like(&m);
        for t in g.tensors_mut() {
            t.iter_mut().enumerate().for_each(|(i, x)| *x = i as f64 * 0.01 - 0.05);
        }
        let mut v = GradientSet::zeros_like(&m);
        sgd_step(&mut m, &g, 0.5, 0.0, &mut v, false).unwrap();
        for ((after, orig), grad) in m.tensors().iter().zip(before.tensors()).zip(g.tensors()) {
            for ((a, o), gi) in after.iter().zip(orig).zip(grad) {
                assert_eq!(*a, o - 0.5 * gi);
            }
        }
    }

    #[test]
    fn freeze_backbone_leaves_bytes() {
        let mut m = model(&[4]);
        let bytes = m.backbone_bytes();
        let mut g = GradientSet::zeros_like(&m);
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 1.0);
        }
        let mut v = GradientSet::zeros_like(&m);
        let v_backbone: Vec<Vec<f64>> = v.tensors()[..4].iter().map(|t| t.to_vec()).collect();
        let w_before = m.classifier().clone();
        sgd_step(&mut m, &g, 0.1, 0.9, &mut v, true).unwrap();
        assert_eq!(m.backbone_bytes(), bytes);
        let v_after: Vec<Vec<f64>> = v.tensors()[..4].iter().map(|t| t.to_vec()).collect();
        assert_eq!(v_after, v_backbone);
        assert_ne!(m.classifier(), &w_before);
    }

    #[test]
    fn sgd_is_deterministic_and_validates() {
        let mut a = model(&[4]);
        let mut b = model(&[4]);
        let mut g = GradientSet::zeros_like(&a);
        for t in g.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.3);
        }
        let mut va = GradientSet::zeros_like(&a);
        let mut vb = GradientSet::zeros_like(&b);
        for _ in 0..2 {
            sgd_step(&mut a, &g, 0.1, 0.9, &mut va, false).unwrap();
            sgd_step(&mut b, &g, 0.1, 0.9, &mut vb, false).unwrap();
        }
        assert_eq!(a.tensors(), b.tensors());
        assert!(sgd_step(&mut a, &g, 0.0, 0.9, &mut va, false).is_err());
        assert!(sgd_step(&mut a, &g, 0.1, 1.0, &mut va, false).is_err());
    }
}
